//! Young integration and the hybrid Young-Ito limit solver.
//!
//! The limiting fluctuation dynamics pair a Young integral against the
//! occupation derivative with Ito integrals against the Brownian path and an
//! independent matrix Wiener forcing. A single first-order Euler loop
//! advances all three couplings; the Young condition `beta + theta > 1`
//! makes that loop convergent under refinement.

use crate::averaging::OccupationDerivative;
use crate::model::ModelSpec;
use crate::paths::{sample_brownian, BrownianPath, TimeGrid};
use crate::rng::Lineage;
use crate::scheme::{GridLevel, MatrixPath, MatrixProvenance, SamplePath};
use crate::{from_usize, lit, Error, Result, Scalar};

/// Integrand/integrator pair with claimed Holder exponents.
#[derive(Debug)]
pub struct YoungPair<'a, T> {
    pub integrand: &'a SamplePath<T>,
    pub integrator: &'a MatrixPath<T>,
    pub beta: T,
    pub theta: T,
    forced: bool,
}

impl<'a, T: Scalar> YoungPair<'a, T> {
    /// Pairs the paths, asserting the Young condition `beta + theta > 1`.
    pub fn new(
        integrand: &'a SamplePath<T>,
        integrator: &'a MatrixPath<T>,
        beta: T,
        theta: T,
    ) -> Result<Self> {
        if beta + theta <= T::one() {
            return Err(Error::YoungCondition {
                beta: beta.to_f64().unwrap_or(f64::NAN),
                theta: theta.to_f64().unwrap_or(f64::NAN),
            });
        }
        Self::forced(integrand, integrator, beta, theta)
    }

    /// Pairs the paths without the exponent check.
    pub fn forced(
        integrand: &'a SamplePath<T>,
        integrator: &'a MatrixPath<T>,
        beta: T,
        theta: T,
    ) -> Result<Self> {
        if integrand.steps() != integrator.steps() || integrand.dim() != integrator.dim() {
            return Err(Error::GridMismatch(
                "Young pair requires integrand and integrator on common nodes".into(),
            ));
        }
        Ok(YoungPair {
            integrand,
            integrator,
            beta,
            theta,
            forced: beta + theta <= T::one(),
        })
    }

    pub fn is_forced(&self) -> bool {
        self.forced
    }
}

/// Left-point Riemann-Stieltjes sum `sum_j Z_{t_j} (L_{t_{j+1}} - L_{t_j})`
/// over the pair's nodes up to time `up_to` (rounded down to a node).
///
/// Component `l` of the result contracts row `l` of the integrator increment
/// against the integrand.
pub fn young_integral<T: Scalar>(pair: &YoungPair<'_, T>, up_to: T) -> Result<Vec<T>> {
    if up_to < T::zero() || up_to > T::one() {
        return Err(Error::InvalidParameter("integration time outside [0, 1]".into()));
    }
    let steps = pair.integrand.steps();
    let last = (up_to * from_usize::<T>(steps))
        .floor()
        .to_usize()
        .unwrap_or(0)
        .min(steps);
    let d = pair.integrand.dim();
    let mut out = vec![T::zero(); d];
    for j in 0..last {
        let z = pair.integrand.value(j);
        let l0 = pair.integrator.value(j);
        let l1 = pair.integrator.value(j + 1);
        for l in 0..d {
            let mut acc = out[l];
            for (i, &zi) in z.iter().enumerate() {
                acc = acc + zi * (l1[l * d + i] - l0[l * d + i]);
            }
            out[l] = acc;
        }
    }
    Ok(out)
}

/// Summation order of the hybrid Euler step; solutions from different orders
/// must agree to rounding noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummationOrder {
    #[default]
    Forward,
    Reverse,
}

/// One first-order Euler pass of the linear hybrid system
///
/// `V_{j+1} = V_j + D(j) V_j + sum_i G(j)[.,i,.] V_j dB_i + F(j) dW`,
///
/// with `D` the matrix increment of the drift-like coupling (a Young
/// increment or a Lebesgue term times its step), `G` the `d x d x d`
/// Brownian coupling tensor and `F` the `d x d^2` forcing coefficient,
/// all filled per step by one callback. Shared by the Holder-case and
/// transformed solvers; also the place where linearity in the forcing is
/// exact by construction.
#[allow(clippy::too_many_arguments)]
pub(crate) fn hybrid_euler<T, FC, DB, DW>(
    dim: usize,
    steps: usize,
    mut coefficients: FC,
    db: DB,
    dw: DW,
    order: SummationOrder,
    lineage: Lineage,
) -> Result<Vec<T>>
where
    T: Scalar,
    FC: FnMut(usize, &mut [T], &mut [T], &mut [T]) -> Result<()>,
    DB: Fn(usize, &mut [T]),
    DW: Fn(usize, &mut [T]),
{
    let d = dim;
    let dd = d * d;
    let idx_d: Vec<usize> = match order {
        SummationOrder::Forward => (0..d).collect(),
        SummationOrder::Reverse => (0..d).rev().collect(),
    };
    let idx_dd: Vec<usize> = match order {
        SummationOrder::Forward => (0..dd).collect(),
        SummationOrder::Reverse => (0..dd).rev().collect(),
    };
    let mut values = vec![T::zero(); (steps + 1) * d];
    let mut v = vec![T::zero(); d];
    let mut next = vec![T::zero(); d];
    let mut dmat = vec![T::zero(); dd];
    let mut gtens = vec![T::zero(); dd * d];
    let mut fcoef = vec![T::zero(); d * dd];
    let mut dbuf = vec![T::zero(); d];
    let mut wbuf = vec![T::zero(); dd];
    for j in 0..steps {
        coefficients(j, &mut dmat, &mut gtens, &mut fcoef)?;
        db(j, &mut dbuf);
        dw(j, &mut wbuf);
        for l in 0..d {
            // Drift-like coupling: row l of D against V.
            let mut drift_inc = T::zero();
            for &i in &idx_d {
                drift_inc = drift_inc + dmat[l * d + i] * v[i];
            }
            // Brownian coupling: sum_{i, j'} G[l, i, j'] V[j'] dB[i].
            let mut b_inc = T::zero();
            for &i in &idx_d {
                let mut inner = T::zero();
                for &jp in &idx_d {
                    inner = inner + gtens[(l * d + i) * d + jp] * v[jp];
                }
                b_inc = b_inc + inner * dbuf[i];
            }
            // Forcing: row l of F against the matrix increment.
            let mut w_inc = T::zero();
            for &e in &idx_dd {
                w_inc = w_inc + fcoef[l * dd + e] * wbuf[e];
            }
            next[l] = match order {
                SummationOrder::Forward => v[l] + drift_inc + b_inc + w_inc,
                SummationOrder::Reverse => v[l] + w_inc + b_inc + drift_inc,
            };
            if !next[l].is_finite() {
                return Err(Error::NonFinite {
                    what: "limit state",
                    step: j,
                    master: lineage.master,
                    path: lineage.path,
                });
            }
        }
        v.copy_from_slice(&next);
        values[(j + 1) * d..(j + 2) * d].copy_from_slice(&v);
    }
    Ok(values)
}

/// Solution of the Holder-case limit system along one driver set.
#[derive(Debug, Clone)]
pub struct LimitSolutionHolder<T> {
    pub v: SamplePath<T>,
    pub steps: usize,
    pub order: SummationOrder,
    /// Identifier of the occupation derivative used.
    pub l_source: String,
    /// Recorded Holder exponent of the solution path,
    /// `min(0.45, (1 + alpha)/2 - 0.05)`; a working regularity tag, not a
    /// sharp one.
    pub beta_exponent: T,
}

/// Recorded solution regularity for a drift of Holder order `alpha`
/// (`alpha = 1` for smooth drifts).
pub fn solution_beta<T: Scalar>(alpha: T) -> T {
    lit::<T>(0.45).min((T::one() + alpha) / lit::<T>(2.0) - lit::<T>(0.05))
}

/// Samples a `d x d` Wiener process on the fine grid, the limit of the area
/// process; its lineage must be independent of the Brownian driver it is
/// paired with.
pub fn independent_wiener_matrix<T: Scalar>(
    grid: TimeGrid,
    dim: usize,
    lineage: Lineage,
) -> Result<MatrixPath<T>> {
    let flat = sample_brownian::<T>(grid, dim * dim, lineage)?;
    MatrixPath::from_values(grid, dim, flat.cumulative(), MatrixProvenance::Wiener(lineage))
}

/// Advances the hybrid limit equation
///
/// `dV = dL V + grad sigma(X) V dB + 2^(-1/2) sigma grad sigma(X) dW`
///
/// with left-point increments on the common fine grid.
pub fn solve_limit_holder<T: Scalar>(
    model: &ModelSpec<T>,
    x_ref: &SamplePath<T>,
    l: &OccupationDerivative<T>,
    b: &BrownianPath<T>,
    w: &MatrixPath<T>,
    order: SummationOrder,
) -> Result<LimitSolutionHolder<T>> {
    let d = model.dim;
    let steps = x_ref.steps();
    if x_ref.level() != GridLevel::Fine
        || l.path.steps() != steps
        || b.steps() != steps
        || w.steps() != steps
        || x_ref.dim() != d
        || l.path.dim() != d
        || b.dim() != d
        || w.dim() != d
    {
        return Err(Error::GridMismatch(
            "limit solve requires all drivers on the common fine grid".into(),
        ));
    }
    match w.provenance() {
        MatrixProvenance::Area(lin) if lin == b.lineage() => {
            return Err(Error::DependentDrivers { what: "area process of the same path" })
        }
        MatrixProvenance::Wiener(lin) if lin == b.lineage() => {
            return Err(Error::DependentDrivers { what: "Wiener driver sharing the lineage" })
        }
        _ => {}
    }
    let dd = d * d;
    let lineage = b.lineage();
    let inv_sqrt2 = T::one() / lit::<T>(2.0).sqrt();
    let mut sigma = vec![T::zero(); dd];
    let values = hybrid_euler(
        d,
        steps,
        |j, dmat: &mut [T], gtens: &mut [T], fcoef: &mut [T]| {
            let l0 = l.path.value(j);
            let l1 = l.path.value(j + 1);
            for e in 0..dd {
                dmat[e] = l1[e] - l0[e];
            }
            let x = x_ref.value(j);
            model.diffusion.eval(x, &mut sigma);
            model.diffusion.gradient(x, gtens);
            // F[l, (k, i)] = 2^(-1/2) sum_j' sigma[j', k] d_j' sigma[l, i]
            for l_idx in 0..d {
                for k in 0..d {
                    for i in 0..d {
                        let mut acc = T::zero();
                        for jp in 0..d {
                            acc = acc + sigma[jp * d + k] * gtens[(l_idx * d + i) * d + jp];
                        }
                        fcoef[l_idx * dd + k * d + i] = inv_sqrt2 * acc;
                    }
                }
            }
            Ok(())
        },
        |j, out: &mut [T]| out.copy_from_slice(b.increment(j)),
        |j, out: &mut [T]| {
            let w0 = w.value(j);
            let w1 = w.value(j + 1);
            for ((o, &a), &b) in out.iter_mut().zip(w1).zip(w0) {
                *o = a - b;
            }
        },
        order,
        lineage,
    )?;
    let alpha = match model.drift_class() {
        crate::model::DriftClass::Holder { alpha } => lit(alpha),
        crate::model::DriftClass::Sobolev { alpha, .. } => lit(alpha),
        crate::model::DriftClass::Smooth => T::one(),
    };
    let v = SamplePath::from_values(x_ref.grid(), d, steps, values)?.with_lineage(lineage);
    Ok(LimitSolutionHolder {
        v,
        steps,
        order,
        l_source: l.source.clone(),
        beta_exponent: solution_beta(alpha),
    })
}

/// Variation-of-constants evaluation of the scalar limit equation, used as an
/// independent oracle against [`solve_limit_holder`] for smooth drifts.
///
/// `V_1 = Phi_1 int_0^1 Phi_s^{-1} 2^(-1/2) (sigma sigma')(X_s) dW_s` with
/// `Phi_t = exp(int b'(X) ds + int sigma'(X) dB - 1/2 int sigma'(X)^2 ds)`,
/// all integrals as left-point fine-grid sums.
pub fn voc_oracle_1d<T: Scalar>(
    model: &ModelSpec<T>,
    x_ref: &SamplePath<T>,
    b: &BrownianPath<T>,
    w: &MatrixPath<T>,
) -> Result<T> {
    if model.dim != 1 || x_ref.dim() != 1 {
        return Err(Error::InvalidParameter(
            "variation-of-constants oracle is scalar only".into(),
        ));
    }
    if !model.drift.has_classical_gradient() {
        return Err(Error::InvalidParameter(
            "oracle requires a continuously differentiable drift".into(),
        ));
    }
    let steps = x_ref.steps();
    if b.steps() != steps || w.steps() != steps {
        return Err(Error::GridMismatch("oracle drivers on mismatched grids".into()));
    }
    let h = x_ref.grid().fine_dt::<T>();
    let inv_sqrt2 = T::one() / lit::<T>(2.0).sqrt();
    let half = lit::<T>(0.5);
    let mut drift_int = T::zero();
    let mut diff_int = T::zero();
    let mut diff_quad = T::zero();
    let mut weighted = T::zero();
    let mut bgrad = [T::zero()];
    let mut sig = [T::zero()];
    let mut sgrad = [T::zero()];
    for j in 0..steps {
        let x = x_ref.value(j);
        model.drift.gradient(x, &mut bgrad);
        model.diffusion.eval(x, &mut sig);
        model.diffusion.gradient(x, &mut sgrad);
        let phi = (drift_int + diff_int - half * diff_quad).exp();
        let dw = w.value(j + 1)[0] - w.value(j)[0];
        weighted = weighted + inv_sqrt2 * sig[0] * sgrad[0] * dw / phi;
        drift_int = drift_int + bgrad[0] * h;
        diff_int = diff_int + sgrad[0] * b.increment(j)[0];
        diff_quad = diff_quad + sgrad[0] * sgrad[0] * h;
    }
    let phi_end = (drift_int + diff_int - half * diff_quad).exp();
    Ok(phi_end * weighted)
}

/// Scalar Weierstrass-type profile of Holder exponent `beta`:
/// `sum_k 2^(-beta k) cos(2^k omega t + psi_k)`.
pub fn weierstrass_scalar<T: Scalar>(t: T, beta: T, terms: usize, salt: u64) -> T {
    let omega = lit::<T>(4.7);
    let mut acc = T::zero();
    let mut freq = omega;
    let mut amp = T::one();
    let decay = lit::<T>(2.0).powf(-beta);
    for k in 0..terms {
        let psi = 2.0 * std::f64::consts::PI
            * (((k as f64 + 1.0) * 0.618_033_988_749_894_9 + salt as f64 * 0.318_309_886)
                .fract());
        acc = acc + amp * (freq * t + lit(psi)).cos();
        freq = freq + freq;
        amp = amp * decay;
    }
    acc
}

/// Deterministic Holder pair for refinement experiments: a `beta`-regular
/// integrand and a `theta`-regular matrix integrator on `2^level` nodes.
pub fn synthetic_holder_pair<T: Scalar>(
    level: u32,
    beta: T,
    theta: T,
    terms: usize,
) -> Result<(SamplePath<T>, MatrixPath<T>)> {
    let steps = 1usize << level;
    let grid = TimeGrid::new(steps, 1)?;
    let mut z = Vec::with_capacity(steps + 1);
    let mut l = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let t = from_usize::<T>(j) / from_usize::<T>(steps);
        z.push(weierstrass_scalar(t, beta, terms, 1));
        l.push(weierstrass_scalar(t, theta, terms, 2));
    }
    Ok((
        SamplePath::from_values(grid, 1, steps, z)?,
        MatrixPath::from_values(grid, 1, l, MatrixProvenance::Derived)?,
    ))
}
