//! Monte Carlo statistics: L_p estimators, empirical-distribution distances,
//! log-log rate regression and the end-to-end rate / distributional
//! convergence experiments.
//!
//! Every experiment is a pure function of `(master seed, configuration)`.
//! Path banks are generated in parallel with independent lineages and all
//! cross-path reductions run over index-ordered buffers with a fixed
//! pairwise summation tree, so serial and parallel runs agree bit for bit.

use crate::averaging::{holder_seminorm_matrix, qx_operator, OccupationDerivative};
use crate::limit_holder::{independent_wiener_matrix, solve_limit_holder, SummationOrder};
use crate::model::{ModelSpec, ScalarFieldSpec};
use crate::paths::{sample_brownian, TimeGrid};
use crate::rng::Lineage;
use crate::scheme::{euler_maruyama_interpolated, reference_solution};
use crate::zvonkin::{solve_corrector_pde, solve_limit_sobolev};
use crate::{from_usize, lit, Error, Result, Scalar};

use rayon::prelude::*;

/// Seed tags for derived stream families.
const TAG_LIMIT_B: u64 = 0xB0;
const TAG_LIMIT_W: u64 = 0x3F;

/// Deterministic pairwise sum; the reduction tree depends only on the length.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    if values.len() <= 8 {
        let mut acc = T::zero();
        for &v in values {
            acc = acc + v;
        }
        acc
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Ordered parallel map over path indices; any path error aborts the map.
pub fn par_map_paths<T, F>(n_paths: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n_paths).into_par_iter().map(f).collect()
}

/// Monte Carlo `L_p` estimate with a delta-method standard error.
#[derive(Debug, Clone, Copy)]
pub struct LpEstimate<T> {
    pub value: T,
    pub standard_error: T,
    pub n_samples: u64,
}

/// `(E |Y|^p)^{1/p}` over `n_paths` independent samples of the functional.
pub fn lp_norm_mc<T, F>(sampler: F, p: T, n_paths: u64) -> Result<LpEstimate<T>>
where
    T: Scalar,
    F: Fn(u64) -> Result<T> + Sync,
{
    if p < T::one() {
        return Err(Error::InvalidParameter("p must be at least 1".into()));
    }
    if n_paths < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    let powered: Vec<T> = par_map_paths(n_paths, |i| {
        let y = sampler(i)?;
        if !y.is_finite() {
            return Err(Error::NonFinite {
                what: "sample functional",
                step: 0,
                master: 0,
                path: i,
            });
        }
        Ok(y.abs().powf(p))
    })?;
    let nf = from_usize::<T>(powered.len());
    let mean = pairwise_sum(&powered) / nf;
    let centred: Vec<T> = powered.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&centred) / (nf - T::one());
    let se_mean = (var / nf).sqrt();
    if mean <= T::zero() {
        return Ok(LpEstimate {
            value: T::zero(),
            standard_error: T::zero(),
            n_samples: n_paths,
        });
    }
    let value = mean.powf(T::one() / p);
    // d/dm m^{1/p} = m^{1/p - 1} / p
    let standard_error = mean.powf(T::one() / p - T::one()) / p * se_mean;
    Ok(LpEstimate {
        value,
        standard_error,
        n_samples: n_paths,
    })
}

fn sorted<T: Scalar>(mut xs: Vec<T>) -> Vec<T> {
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    xs
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let xs = sorted(a.to_vec());
    let ys = sorted(b.to_vec());
    let (na, nb) = (from_usize::<T>(xs.len()), from_usize::<T>(ys.len()));
    let mut stat = T::zero();
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        let diff = (from_usize::<T>(i) / na - from_usize::<T>(j) / nb).abs();
        stat = stat.max(diff);
    }
    Ok(stat)
}

/// One-dimensional Wasserstein-1 distance between empirical samples,
/// integrating `|F_a - F_b|` over the merged support.
pub fn wasserstein1<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let xs = sorted(a.to_vec());
    let ys = sorted(b.to_vec());
    let (na, nb) = (from_usize::<T>(xs.len()), from_usize::<T>(ys.len()));
    let mut dist = T::zero();
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev: Option<T> = None;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        if let Some(p) = prev {
            let fa = from_usize::<T>(i) / na;
            let fb = from_usize::<T>(j) / nb;
            dist = dist + (fa - fb).abs() * (v - p);
        }
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        prev = Some(v);
    }
    Ok(dist)
}

/// Wasserstein-1 distance plus a block-resampling spread estimate: the two
/// samples are cut into `blocks` index blocks and the block statistics'
/// standard deviation over `sqrt(blocks)` is reported as the noise scale.
pub fn w1_with_se<T: Scalar>(a: &[T], b: &[T], blocks: usize) -> Result<(T, T)> {
    let w1 = wasserstein1(a, b)?;
    if blocks < 2 || a.len() < 2 * blocks || b.len() < 2 * blocks {
        return Ok((w1, T::zero()));
    }
    let mut block_stats = Vec::with_capacity(blocks);
    for k in 0..blocks {
        let sa = &a[k * a.len() / blocks..(k + 1) * a.len() / blocks];
        let sb = &b[k * b.len() / blocks..(k + 1) * b.len() / blocks];
        block_stats.push(wasserstein1(sa, sb)?);
    }
    let nf = from_usize::<T>(blocks);
    let mean = pairwise_sum(&block_stats) / nf;
    let centred: Vec<T> = block_stats.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let sd = (pairwise_sum(&centred) / (nf - T::one())).sqrt();
    Ok((w1, sd / nf.sqrt()))
}

/// One grid point of a rate experiment.
#[derive(Debug, Clone, Copy)]
pub struct RatePoint<T> {
    pub n: usize,
    pub error: T,
    pub se: T,
}

/// Least-squares line in log-log coordinates.
#[derive(Debug, Clone, Copy)]
pub struct LogLogFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub slope_se: T,
}

/// Error-versus-n table with its fitted decay order; `fit` is absent for
/// degenerate (identically zero) experiments.
#[derive(Debug, Clone)]
pub struct RateFit<T> {
    pub points: Vec<RatePoint<T>>,
    pub fit: Option<LogLogFit<T>>,
}

impl<T: Scalar> RateFit<T> {
    pub fn degenerate(ns: &[usize]) -> Self {
        RateFit {
            points: ns
                .iter()
                .map(|&n| RatePoint {
                    n,
                    error: T::zero(),
                    se: T::zero(),
                })
                .collect(),
            fit: None,
        }
    }

    pub fn slope(&self) -> Option<T> {
        self.fit.map(|f| f.slope)
    }
}

/// Weighted least squares of `ln error` against `ln n`.
///
/// Weights are inverse squared log-scale standard errors (`se / error` by the
/// delta method); zero standard errors fall back to an unweighted fit.
pub fn rate_fit<T: Scalar>(ns: &[usize], errors: &[T], ses: &[T]) -> Result<RateFit<T>> {
    if ns.len() < 3 {
        return Err(Error::InsufficientData(
            "rate fit needs at least three points".into(),
        ));
    }
    if ns.len() != errors.len() || ns.len() != ses.len() {
        return Err(Error::InvalidParameter("mismatched fit inputs".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("ns must be increasing".into()));
    }
    if errors.iter().any(|e| *e <= T::zero()) {
        return Err(Error::InvalidParameter(
            "rate fit requires positive errors (degenerate case reported upstream)".into(),
        ));
    }
    let weighted = ses.iter().all(|s| *s > T::zero());
    let xs: Vec<T> = ns.iter().map(|&n| from_usize::<T>(n).ln()).collect();
    let ys: Vec<T> = errors.iter().map(|e| e.ln()).collect();
    let ws: Vec<T> = if weighted {
        ses.iter()
            .zip(errors)
            .map(|(&s, &e)| {
                let se_log = s / e;
                T::one() / (se_log * se_log)
            })
            .collect()
    } else {
        vec![T::one(); ns.len()]
    };
    let wsum = pairwise_sum(&ws);
    let xbar = pairwise_sum(&ws.iter().zip(&xs).map(|(&w, &x)| w * x).collect::<Vec<_>>()) / wsum;
    let ybar = pairwise_sum(&ws.iter().zip(&ys).map(|(&w, &y)| w * y).collect::<Vec<_>>()) / wsum;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for ((&w, &x), &y) in ws.iter().zip(&xs).zip(&ys) {
        sxx = sxx + w * (x - xbar) * (x - xbar);
        sxy = sxy + w * (x - xbar) * (y - ybar);
    }
    if sxx <= T::zero() {
        return Err(Error::InvalidParameter("degenerate abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for ((&w, &x), &y) in ws.iter().zip(&xs).zip(&ys) {
        let fitted = intercept + slope * x;
        ss_res = ss_res + w * (y - fitted) * (y - fitted);
        ss_tot = ss_tot + w * (y - ybar) * (y - ybar);
    }
    let r_squared = if ss_tot > T::zero() {
        (T::one() - ss_res / ss_tot).max(T::zero())
    } else {
        T::one()
    };
    let slope_se = if weighted {
        (T::one() / sxx).sqrt()
    } else if ns.len() > 2 {
        let dof = from_usize::<T>(ns.len() - 2);
        (ss_res / dof / sxx).sqrt()
    } else {
        T::zero()
    };
    Ok(RateFit {
        points: ns
            .iter()
            .zip(errors)
            .zip(ses)
            .map(|((&n, &error), &se)| RatePoint { n, error, se })
            .collect(),
        fit: Some(LogLogFit {
            slope,
            intercept,
            r_squared,
            slope_se,
        }),
    })
}

fn validate_ns(ns: &[usize]) -> Result<()> {
    if ns.len() < 3 {
        return Err(Error::InsufficientData(
            "experiments need at least three scheme sizes".into(),
        ));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("ns must be increasing".into()));
    }
    Ok(())
}

fn fit_or_degenerate<T: Scalar>(
    ns: &[usize],
    estimates: Vec<LpEstimate<T>>,
) -> Result<RateFit<T>> {
    if estimates.iter().all(|e| e.value == T::zero()) {
        return Ok(RateFit::degenerate(ns));
    }
    let errors: Vec<T> = estimates.iter().map(|e| e.value).collect();
    let ses: Vec<T> = estimates.iter().map(|e| e.standard_error).collect();
    rate_fit(ns, &errors, &ses)
}

/// `L_p` rate of the uniform coupled error `sup_t |X_ref - X^n|` against `n`.
pub fn strong_rate_experiment<T: Scalar>(
    model: &ModelSpec<T>,
    ns: &[usize],
    p: T,
    n_paths: u64,
    refinement: usize,
    seed: u64,
) -> Result<RateFit<T>> {
    validate_ns(ns)?;
    let d = model.dim;
    let mut estimates = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = TimeGrid::new(n, refinement)?;
        let master = Lineage::submaster(seed, n as u64);
        let est = lp_norm_mc(
            |i| {
                let path = sample_brownian::<T>(grid, d, Lineage::new(master, i))?;
                let x_ref = reference_solution(model, &path)?;
                let x_n = euler_maruyama_interpolated(model, &path, n)?;
                let mut sup = T::zero();
                for j in 0..=x_ref.steps() {
                    let a = x_ref.value(j);
                    let b = x_n.value(j);
                    let mut dist2 = T::zero();
                    for (x, y) in a.iter().zip(b) {
                        let diff = *x - *y;
                        dist2 = dist2 + diff * diff;
                    }
                    sup = sup.max(dist2);
                }
                Ok(sup.sqrt())
            },
            p,
            n_paths,
        )?;
        estimates.push(est);
    }
    fit_or_degenerate(ns, estimates)
}

/// Rate of the within-step displacement `sup_t || X^n_t - X^n_kappa(t) ||_Lp`
/// against `n`, the supremum taken over fine nodes of per-node Monte Carlo
/// `L_p` estimates.
///
/// Per-node moments are accumulated over fixed path batches and reduced in
/// batch order, so the result does not depend on the thread count.
pub fn step_size_rate_experiment<T: Scalar>(
    model: &ModelSpec<T>,
    ns: &[usize],
    p: T,
    n_paths: u64,
    refinement: usize,
    seed: u64,
) -> Result<RateFit<T>> {
    validate_ns(ns)?;
    if n_paths < 2 {
        return Err(Error::InsufficientData("need at least two paths".into()));
    }
    let d = model.dim;
    const BATCH: u64 = 256;
    let mut estimates = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = TimeGrid::new(n, refinement)?;
        let nodes = grid.fine_steps() + 1;
        let master = Lineage::submaster(seed, n as u64 ^ 0x5A5A);
        let n_batches = n_paths.div_ceil(BATCH);
        // Per-node sums of |D|^p and |D|^{2p} per batch.
        let batch_sums: Vec<(Vec<T>, Vec<T>)> = par_map_paths(n_batches, |bi| {
            let mut m1 = vec![T::zero(); nodes];
            let mut m2 = vec![T::zero(); nodes];
            for i in bi * BATCH..((bi + 1) * BATCH).min(n_paths) {
                let path = sample_brownian::<T>(grid, d, Lineage::new(master, i))?;
                let x_n = euler_maruyama_interpolated(model, &path, n)?;
                for j in 0..nodes {
                    let a = x_n.value(j);
                    let k = x_n.value(grid.kappa_fine_index(j.min(x_n.steps() - 1)).min(j));
                    let mut dist2 = T::zero();
                    for (x, y) in a.iter().zip(k) {
                        let diff = *x - *y;
                        dist2 = dist2 + diff * diff;
                    }
                    let powered = dist2.sqrt().powf(p);
                    m1[j] = m1[j] + powered;
                    m2[j] = m2[j] + powered * powered;
                }
            }
            Ok((m1, m2))
        })?;
        let nf = T::from_u64(n_paths).expect("path count representable");
        let mut best = T::zero();
        let mut best_se = T::zero();
        for j in 0..nodes {
            let s1 = pairwise_sum(&batch_sums.iter().map(|(a, _)| a[j]).collect::<Vec<_>>());
            let mean = s1 / nf;
            if mean <= T::zero() {
                continue;
            }
            let value = mean.powf(T::one() / p);
            if value > best {
                let s2 =
                    pairwise_sum(&batch_sums.iter().map(|(_, b)| b[j]).collect::<Vec<_>>());
                let var = (s2 / nf - mean * mean).max(T::zero()) * nf / (nf - T::one());
                best = value;
                best_se = mean.powf(T::one() / p - T::one()) / p * (var / nf).sqrt();
            }
        }
        estimates.push(LpEstimate {
            value: best,
            standard_error: best_se,
            n_samples: n_paths,
        });
    }
    fit_or_degenerate(ns, estimates)
}

/// `L_p` rate of the time-integrated increment functional
/// `int_0^1 g(X^n_r) (f(X^n_r) - f(X^n_kappa(r))) dr` against `n`.
pub fn quadrature_experiment<T: Scalar>(
    model: &ModelSpec<T>,
    g: &ScalarFieldSpec<T>,
    f: &ScalarFieldSpec<T>,
    ns: &[usize],
    p: T,
    n_paths: u64,
    refinement: usize,
    seed: u64,
) -> Result<RateFit<T>> {
    validate_ns(ns)?;
    if f.is_constant() {
        // The integrand vanishes identically; no rate to fit.
        return Ok(RateFit::degenerate(ns));
    }
    let d = model.dim;
    let mut estimates = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = TimeGrid::new(n, refinement)?;
        let h = grid.fine_dt::<T>();
        let master = Lineage::submaster(seed, n as u64 ^ 0xACDC);
        let est = lp_norm_mc(
            |i| {
                let path = sample_brownian::<T>(grid, d, Lineage::new(master, i))?;
                let x_n = euler_maruyama_interpolated(model, &path, n)?;
                let mut acc = T::zero();
                for j in 0..x_n.steps() {
                    let x = x_n.value(j);
                    let xk = x_n.value(grid.kappa_fine_index(j));
                    acc = acc + g.eval(x) * (f.eval(x) - f.eval(xk)) * h;
                }
                Ok(acc)
            },
            p,
            n_paths,
        )?;
        estimates.push(est);
    }
    fit_or_degenerate(ns, estimates)
}

/// Per-path stability report of the occupation derivative under
/// mollification-scale halving.
#[derive(Debug, Clone)]
pub struct QxStabilityReport<T> {
    pub deltas: Vec<T>,
    pub gamma: T,
    /// `[path][delta]` Holder seminorm estimates.
    pub seminorms: Vec<Vec<T>>,
    /// `[path][k]` sup distance between the occupation derivatives at
    /// `deltas[k]` and `deltas[k + 1]`.
    pub distances: Vec<Vec<T>>,
}

impl<T: Scalar> QxStabilityReport<T> {
    /// Largest max/min seminorm ratio across the delta sweep of any path.
    pub fn max_seminorm_ratio(&self) -> T {
        let mut worst = T::one();
        for row in &self.seminorms {
            let hi = row.iter().fold(T::zero(), |a, &v| a.max(v));
            let lo = row.iter().fold(T::infinity(), |a, &v| a.min(v));
            if lo > T::zero() {
                worst = worst.max(hi / lo);
            }
        }
        worst
    }

    /// Whether every path's halving distances are nonincreasing.
    pub fn cauchy_decreasing(&self) -> bool {
        self.distances
            .iter()
            .all(|row| row.windows(2).all(|w| w[1] <= w[0]))
    }

    pub fn max_last_distance(&self) -> T {
        self.distances
            .iter()
            .filter_map(|row| row.last().copied())
            .fold(T::zero(), |a, v| a.max(v))
    }
}

/// Sweeps the occupation derivative of the model drift over a halving
/// mollification schedule on a few independent paths.
pub fn qx_stability_experiment<T: Scalar>(
    model: &ModelSpec<T>,
    n: usize,
    refinement: usize,
    delta0: T,
    halvings: usize,
    gamma: T,
    n_paths: u64,
    seed: u64,
) -> Result<QxStabilityReport<T>> {
    if halvings < 1 {
        return Err(Error::InvalidParameter("need at least one halving".into()));
    }
    let grid = TimeGrid::new(n, refinement)?;
    let master = Lineage::submaster(seed, 0x11AC);
    let deltas: Vec<T> = (0..=halvings)
        .map(|k| delta0 / from_usize::<T>(1usize << k))
        .collect();
    let per_path: Vec<(Vec<T>, Vec<T>)> = par_map_paths(n_paths, |i| {
        let path = sample_brownian::<T>(grid, model.dim, Lineage::new(master, i))?;
        let x_ref = reference_solution(model, &path)?;
        let occupations: Vec<OccupationDerivative<T>> = deltas
            .iter()
            .map(|&delta| qx_operator(&model.drift, &x_ref, delta))
            .collect::<Result<_>>()?;
        let mut seminorms = Vec::with_capacity(occupations.len());
        for occ in &occupations {
            seminorms.push(holder_seminorm_matrix(&occ.path, gamma, lit(0.25))?.value);
        }
        let mut distances = Vec::with_capacity(occupations.len() - 1);
        for pair in occupations.windows(2) {
            let sup = pair[0]
                .path
                .values()
                .iter()
                .zip(pair[1].path.values())
                .map(|(&a, &b)| (a - b).abs())
                .fold(T::zero(), |acc, v| acc.max(v));
            distances.push(sup);
        }
        Ok((seminorms, distances))
    })?;
    Ok(QxStabilityReport {
        deltas,
        gamma,
        seminorms: per_path.iter().map(|(s, _)| s.clone()).collect(),
        distances: per_path.into_iter().map(|(_, d)| d).collect(),
    })
}

/// Which limit pipeline supplies the comparison bank of a distributional
/// experiment.
#[derive(Debug, Clone)]
pub enum LimitCase<T> {
    /// Young-Ito dynamics against the occupation derivative; `delta` is the
    /// mollification scale (fine-step square root when absent).
    Holder { delta: Option<T> },
    /// Transformed dynamics through the corrector field.
    Sobolev {
        theta: T,
        half_width: T,
        nx: usize,
        nt: usize,
    },
}

/// Marginal samples of the scheme fluctuation `V^n` at the requested times,
/// flattened `[time * dim + coord][path]`.
pub fn scheme_marginal_bank<T: Scalar>(
    model: &ModelSpec<T>,
    n: usize,
    refinement: usize,
    times: &[T],
    n_paths: u64,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    let grid = TimeGrid::new(n, refinement)?;
    let nodes = eval_nodes(grid.fine_steps(), times)?;
    let d = model.dim;
    let master = Lineage::submaster(seed, n as u64 ^ 0xC117);
    let scale = from_usize::<T>(n).sqrt();
    let rows: Vec<Vec<T>> = par_map_paths(n_paths, |i| {
        let path = sample_brownian::<T>(grid, d, Lineage::new(master, i))?;
        let x_ref = reference_solution(model, &path)?;
        let x_n = euler_maruyama_interpolated(model, &path, n)?;
        let mut out = Vec::with_capacity(nodes.len() * d);
        for &node in &nodes {
            let a = x_ref.value(node);
            let b = x_n.value(node);
            for c in 0..d {
                out.push(scale * (a[c] - b[c]));
            }
        }
        Ok(out)
    })?;
    Ok(transpose_bank(rows, nodes.len() * d))
}

/// Marginal samples of the limiting fluctuation at the requested times,
/// drawn from the requested pipeline with an independent Wiener forcing.
pub fn limit_marginal_bank<T: Scalar>(
    model: &ModelSpec<T>,
    case: &LimitCase<T>,
    level_steps: usize,
    times: &[T],
    n_paths: u64,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    let grid = TimeGrid::new(level_steps, 1)?;
    let nodes = eval_nodes(grid.fine_steps(), times)?;
    let d = model.dim;
    let master_b = Lineage::submaster(seed, TAG_LIMIT_B);
    let master_w = Lineage::submaster(seed, TAG_LIMIT_W);
    let corrector = match case {
        LimitCase::Sobolev {
            theta,
            half_width,
            nx,
            nt,
        } => Some(solve_corrector_pde(model, *theta, *half_width, *nx, *nt)?),
        LimitCase::Holder { .. } => None,
    };
    // For continuously differentiable drifts the occupation derivative is
    // the direct gradient integral; mollification is the device for rough
    // drifts only, at the fine-step scale by default.
    let delta = match case {
        LimitCase::Holder { delta } => delta.unwrap_or_else(|| {
            if model.drift.has_classical_gradient() {
                T::zero()
            } else {
                (T::one() / from_usize::<T>(level_steps)).sqrt()
            }
        }),
        _ => T::zero(),
    };
    let rows: Vec<Vec<T>> = par_map_paths(n_paths, |i| {
        let b = sample_brownian::<T>(grid, d, Lineage::new(master_b, i))?;
        let x_ref = reference_solution(model, &b)?;
        let w = independent_wiener_matrix::<T>(grid, d, Lineage::new(master_w, i))?;
        let v = match (case, &corrector) {
            (LimitCase::Holder { .. }, _) => {
                let l = qx_operator(&model.drift, &x_ref, delta)?;
                solve_limit_holder(model, &x_ref, &l, &b, &w, SummationOrder::Forward)?.v
            }
            (LimitCase::Sobolev { .. }, Some(u)) => {
                solve_limit_sobolev(model, u, &x_ref, &b, &w, SummationOrder::Forward)?.v
            }
            _ => unreachable!(),
        };
        let mut out = Vec::with_capacity(nodes.len() * d);
        for &node in &nodes {
            out.extend_from_slice(v.value(node));
        }
        Ok(out)
    })?;
    Ok(transpose_bank(rows, nodes.len() * d))
}

fn eval_nodes<T: Scalar>(steps: usize, times: &[T]) -> Result<Vec<usize>> {
    let mut nodes = Vec::with_capacity(times.len());
    for &t in times {
        if t < T::zero() || t > T::one() {
            return Err(Error::InvalidParameter("evaluation time outside [0, 1]".into()));
        }
        let exact = t * from_usize::<T>(steps);
        let node = exact.round().to_usize().unwrap_or(0);
        if (exact - from_usize::<T>(node)).abs() > lit(1e-9) {
            return Err(Error::GridMismatch(format!(
                "evaluation time {t} does not land on a node of the {steps}-step grid"
            )));
        }
        nodes.push(node);
    }
    Ok(nodes)
}

fn transpose_bank<T: Scalar>(rows: Vec<Vec<T>>, width: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        for (k, v) in row.into_iter().enumerate() {
            out[k].push(v);
        }
    }
    out
}

/// Distances between two marginal samples at one time and coordinate.
#[derive(Debug, Clone, Copy)]
pub struct MarginalDistance<T> {
    pub time: T,
    pub coord: usize,
    pub ks: T,
    pub w1: T,
    pub w1_se: T,
}

/// Marginal distances between a scheme bank at one `n` and the limit bank.
#[derive(Debug, Clone)]
pub struct DistributionReport<T> {
    pub n: usize,
    pub n_paths_a: u64,
    pub n_paths_b: u64,
    pub rows: Vec<MarginalDistance<T>>,
}

impl<T: Scalar> DistributionReport<T> {
    pub fn w1_at(&self, time_index: usize, dim: usize, coord: usize) -> MarginalDistance<T> {
        self.rows[time_index * dim + coord]
    }
}

/// Distribution-distance series of the fluctuation marginals across `ns`.
#[derive(Debug, Clone)]
pub struct CltReport<T> {
    pub times: Vec<T>,
    pub dim: usize,
    pub reports: Vec<DistributionReport<T>>,
}

impl<T: Scalar> CltReport<T> {
    /// Whether the `w1` series at the given marginal is nonincreasing up to
    /// the two-standard-error slack.
    pub fn w1_trend_nonincreasing(&self, time_index: usize, coord: usize) -> bool {
        let series: Vec<MarginalDistance<T>> = self
            .reports
            .iter()
            .map(|r| r.w1_at(time_index, self.dim, coord))
            .collect();
        series.windows(2).all(|w| {
            let slack =
                lit::<T>(2.0) * (w[0].w1_se * w[0].w1_se + w[1].w1_se * w[1].w1_se).sqrt();
            w[1].w1 <= w[0].w1 + slack
        })
    }
}

/// Number of blocks used for the W1 noise-scale estimate.
const W1_BLOCKS: usize = 10;

/// Compares scheme-fluctuation marginals against limit marginals over a
/// ladder of scheme sizes.
///
/// A trend across at least four sizes is required; single-size runs carry no
/// convergence evidence.
#[allow(clippy::too_many_arguments)]
pub fn clt_experiment<T: Scalar>(
    model: &ModelSpec<T>,
    case: &LimitCase<T>,
    ns: &[usize],
    refinement: usize,
    limit_steps: usize,
    times: &[T],
    n_paths: u64,
    seed: u64,
) -> Result<CltReport<T>> {
    if ns.len() < 4 {
        return Err(Error::InsufficientData(
            "trend tests need at least four scheme sizes".into(),
        ));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("ns must be increasing".into()));
    }
    if n_paths < 1000 {
        return Err(Error::InsufficientData(
            "distributional comparison below 1000 paths is refused".into(),
        ));
    }
    let limit_bank = limit_marginal_bank(model, case, limit_steps, times, n_paths, seed)?;
    let mut reports = Vec::with_capacity(ns.len());
    for &n in ns {
        let scheme_bank = scheme_marginal_bank(model, n, refinement, times, n_paths, seed)?;
        if scheme_bank.len() != limit_bank.len() {
            return Err(Error::GridMismatch("bank width mismatch".into()));
        }
        let mut rows = Vec::with_capacity(scheme_bank.len());
        for (k, (a, b)) in scheme_bank.iter().zip(&limit_bank).enumerate() {
            let ks = ks_two_sample(a, b)?;
            let (w1, w1_se) = w1_with_se(a, b, W1_BLOCKS)?;
            rows.push(MarginalDistance {
                time: times[k / model.dim],
                coord: k % model.dim,
                ks,
                w1,
                w1_se,
            });
        }
        reports.push(DistributionReport {
            n,
            n_paths_a: n_paths,
            n_paths_b: n_paths,
            rows,
        });
    }
    Ok(CltReport {
        times: times.to_vec(),
        dim: model.dim,
        reports,
    })
}

/// Area-process verification: per-step closed-form identity against the
/// refinement, and terminal entry variances.
#[derive(Debug, Clone)]
pub struct AreaReport<T> {
    /// `(refinement, L2 discrepancy)` of the diagonal increments against
    /// `sqrt(2n)((dB)^2 - 1/n)/2`.
    pub identity: Vec<(usize, T)>,
    /// Fitted log-log slope of the discrepancy against the refinement.
    pub identity_slope: Option<T>,
    /// Sample variance of each `d x d` entry of `W_1`.
    pub variances: Vec<T>,
    pub variance_refinement: usize,
    pub variance_paths: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn area_check_experiment<T: Scalar>(
    dim: usize,
    n: usize,
    refinements: &[usize],
    identity_paths: u64,
    variance_refinement: usize,
    variance_paths: u64,
    seed: u64,
) -> Result<AreaReport<T>> {
    if refinements.is_empty() {
        return Err(Error::InvalidParameter("empty refinement list".into()));
    }
    let master = Lineage::submaster(seed, 0xA0EA);
    let mut identity = Vec::with_capacity(refinements.len());
    for &m in refinements {
        if m < 2 {
            return Err(Error::InvalidParameter(
                "identity check needs refinement at least 2".into(),
            ));
        }
        let grid = TimeGrid::new(n, m)?;
        let per_path: Vec<T> = par_map_paths(identity_paths, |i| {
            let path = sample_brownian::<T>(grid, dim, Lineage::new(master ^ m as u64, i))?;
            let coarse = crate::paths::coarsen(&path, m)?;
            let w = crate::scheme::area_process(&path)?.path;
            let scale = (lit::<T>(2.0) * from_usize::<T>(n)).sqrt();
            let inv_n = T::one() / from_usize::<T>(n);
            let half = lit::<T>(0.5);
            let mut acc = T::zero();
            for j in 0..n {
                let db = coarse.increment(j);
                for k in 0..dim {
                    let closed = scale * half * (db[k] * db[k] - inv_n);
                    let idx = k * dim + k;
                    let inc = w.value((j + 1) * m)[idx] - w.value(j * m)[idx];
                    acc = acc + (inc - closed) * (inc - closed);
                }
            }
            Ok(acc / from_usize::<T>(n * dim))
        })?;
        let mean = pairwise_sum(&per_path) / from_usize::<T>(per_path.len());
        identity.push((m, mean.sqrt()));
    }
    let identity_slope = if identity.len() >= 2 && identity.iter().all(|(_, v)| *v > T::zero()) {
        let ms: Vec<usize> = identity.iter().map(|&(m, _)| m).collect();
        let errs: Vec<T> = identity.iter().map(|&(_, v)| v).collect();
        let ses = vec![T::zero(); ms.len()];
        if ms.len() >= 3 {
            rate_fit(&ms, &errs, &ses).ok().and_then(|f| f.slope())
        } else {
            Some((errs[1] / errs[0]).ln() / (from_usize::<T>(ms[1]) / from_usize::<T>(ms[0])).ln())
        }
    } else {
        None
    };

    // Terminal-entry variances at the requested refinement.
    let grid = TimeGrid::new(n, variance_refinement)?;
    let dd = dim * dim;
    let terminals: Vec<Vec<T>> = par_map_paths(variance_paths, |i| {
        let path = sample_brownian::<T>(grid, dim, Lineage::new(master ^ 0xFACE, i))?;
        let w = crate::scheme::area_process(&path)?.path;
        Ok(w.value(w.steps()).to_vec())
    })?;
    let nf = from_usize::<T>(terminals.len());
    let mut variances = Vec::with_capacity(dd);
    for e in 0..dd {
        let column: Vec<T> = terminals.iter().map(|t| t[e]).collect();
        let mean = pairwise_sum(&column) / nf;
        let centred: Vec<T> = column.iter().map(|&v| (v - mean) * (v - mean)).collect();
        variances.push(pairwise_sum(&centred) / (nf - T::one()));
    }
    Ok(AreaReport {
        identity,
        identity_slope,
        variances,
        variance_refinement,
        variance_paths,
    })
}
