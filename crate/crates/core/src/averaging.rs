//! Averaged occupation derivatives and Holder-seminorm estimation.
//!
//! The operator realised here sends a drift `f` to the matrix-valued path
//! `t -> int_0^t grad f_delta(X_s) ds`, the numerical stand-in for the
//! averaging operator that makes the occupation derivative of a rough drift
//! meaningful. Mollification is exact for the lacunary series and a
//! normalised Gaussian quadrature for everything else.

use crate::model::DriftSpec;
use crate::rng::Lineage;
use crate::scheme::{GridLevel, MatrixPath, MatrixProvenance, SamplePath};
use crate::{from_usize, lit, Error, Result, Scalar};

/// Number of quadrature nodes on `[-8, 8]` for the convolution fallback;
/// dense enough that the kinks of the cusp presets cost only a few percent.
const QUAD_POINTS: usize = 641;

/// Gaussian quadrature rule with weights normalised to sum to one, so affine
/// maps are fixed points of the mollification.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    /// `delta * z_i`.
    offsets: Vec<T>,
    weights: Vec<T>,
    /// `w_i z_i / (delta m2)`; contracting values against this is the
    /// gradient of the mollification (Gaussian integration by parts),
    /// exact on affine maps by the `m2` normalisation.
    stein: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn new(delta: T) -> Self {
        let n = QUAD_POINTS;
        let half_width = 8.0;
        let dz = 2.0 * half_width / (n - 1) as f64;
        let mut raw = Vec::with_capacity(n);
        let mut sum = 0.0;
        for i in 0..n {
            let z = -half_width + i as f64 * dz;
            let trapezoid = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let w = trapezoid * dz * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            raw.push((z, w));
            sum += w;
        }
        let mut m2 = 0.0;
        for &(z, w) in &raw {
            m2 += (w / sum) * z * z;
        }
        let mut offsets = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut stein = Vec::with_capacity(n);
        for &(z, w) in &raw {
            let wn = w / sum;
            offsets.push(delta * lit::<T>(z));
            weights.push(lit(wn));
            stein.push(lit::<T>(wn * z / m2) / delta);
        }
        QuadratureRule {
            offsets,
            weights,
            stein,
        }
    }
}

/// Smooth approximation `f_delta` of a drift, with gradient.
#[derive(Debug, Clone)]
pub enum MollifiedDrift<T> {
    /// Closed-form mollification (damped lacunary series) or a fixed point
    /// of it (affine maps, `delta = 0`).
    Exact(DriftSpec<T>),
    /// Gaussian-quadrature convolution of a general drift.
    Quadrature {
        base: DriftSpec<T>,
        rule: QuadratureRule<T>,
    },
    Sum(Box<MollifiedDrift<T>>, Box<MollifiedDrift<T>>),
}

/// Mollifies a drift at scale `delta`, returning value and gradient
/// callables.
///
/// For the lacunary series coefficient `k` is damped by
/// `exp(-(2^k delta)^2 / 2)`; once `2^k delta` underflows the damping this
/// returns the undamped series. Affine drifts are returned unchanged.
pub fn mollify<T: Scalar>(drift: &DriftSpec<T>, delta: T) -> Result<MollifiedDrift<T>> {
    if !(delta >= T::zero()) {
        return Err(Error::InvalidParameter(
            "mollification scale must be nonnegative".into(),
        ));
    }
    Ok(build_mollified(drift, delta))
}

fn build_mollified<T: Scalar>(drift: &DriftSpec<T>, delta: T) -> MollifiedDrift<T> {
    if delta == T::zero() {
        return MollifiedDrift::Exact(drift.clone());
    }
    match drift {
        DriftSpec::Zero | DriftSpec::Constant(_) | DriftSpec::Linear(_) => {
            MollifiedDrift::Exact(drift.clone())
        }
        DriftSpec::Lacunary(series) => {
            MollifiedDrift::Exact(DriftSpec::Lacunary(series.mollified(delta)))
        }
        DriftSpec::Sum(a, b) => MollifiedDrift::Sum(
            Box::new(build_mollified(a, delta)),
            Box::new(build_mollified(b, delta)),
        ),
        other => MollifiedDrift::Quadrature {
            base: other.clone(),
            rule: QuadratureRule::new(delta),
        },
    }
}

impl<T: Scalar> MollifiedDrift<T> {
    pub fn eval(&self, x: &[T], out: &mut [T]) {
        match self {
            MollifiedDrift::Exact(drift) => drift.eval(x, out),
            MollifiedDrift::Quadrature { base, rule } => {
                let d = x.len();
                out.fill(T::zero());
                let mut shifted = vec![T::zero(); d];
                let mut value = vec![T::zero(); d];
                for (q, &w) in rule.offsets.iter().zip(&rule.weights) {
                    for (s, &xl) in shifted.iter_mut().zip(x) {
                        *s = xl + *q;
                    }
                    base.eval(&shifted, &mut value);
                    for (o, &v) in out.iter_mut().zip(&value) {
                        *o = *o + w * v;
                    }
                }
            }
            MollifiedDrift::Sum(a, b) => {
                a.eval(x, out);
                let mut tmp = vec![T::zero(); out.len()];
                b.eval(x, &mut tmp);
                for (o, t) in out.iter_mut().zip(tmp) {
                    *o = *o + t;
                }
            }
        }
    }

    /// `out[l * d + j] = d_j (f_delta)_l (x)`.
    pub fn gradient(&self, x: &[T], out: &mut [T]) {
        match self {
            MollifiedDrift::Exact(drift) => drift.gradient(x, out),
            MollifiedDrift::Quadrature { base, rule } => {
                // The presets couple coordinate l only to x_l, so the
                // convolution gradient stays diagonal: shift all coordinates
                // jointly and contract against the Stein weights.
                let d = x.len();
                out.fill(T::zero());
                let mut shifted = vec![T::zero(); d];
                let mut value = vec![T::zero(); d];
                for (q, &s) in rule.offsets.iter().zip(&rule.stein) {
                    for (sh, &xl) in shifted.iter_mut().zip(x) {
                        *sh = xl + *q;
                    }
                    base.eval(&shifted, &mut value);
                    for l in 0..d {
                        out[l * d + l] = out[l * d + l] + s * value[l];
                    }
                }
            }
            MollifiedDrift::Sum(a, b) => {
                a.gradient(x, out);
                let mut tmp = vec![T::zero(); out.len()];
                b.gradient(x, &mut tmp);
                for (o, t) in out.iter_mut().zip(tmp) {
                    *o = *o + t;
                }
            }
        }
    }
}

/// Matrix-valued occupation derivative of a drift along one path, entry
/// `(l, j)` carrying `int_0^t d_j (b_delta)_l (X_s) ds`.
#[derive(Debug, Clone)]
pub struct OccupationDerivative<T> {
    pub path: MatrixPath<T>,
    pub delta: T,
    /// Identifier of the `(f, X)` pair this was computed from.
    pub source: String,
}

/// Left-point Riemann sums of `grad (b_delta)(X_s) ds` on the fine grid.
pub fn qx_operator<T: Scalar>(
    drift: &DriftSpec<T>,
    x_path: &SamplePath<T>,
    delta: T,
) -> Result<OccupationDerivative<T>> {
    if x_path.level() != GridLevel::Fine {
        return Err(Error::GridMismatch(
            "occupation derivative requires the path on the fine grid".into(),
        ));
    }
    let moll = mollify(drift, delta)?;
    let d = x_path.dim();
    let dd = d * d;
    let steps = x_path.steps();
    let h = x_path.grid().fine_dt::<T>();
    let lineage = x_path.lineage().unwrap_or(Lineage::new(0, 0));
    let mut values = vec![T::zero(); (steps + 1) * dd];
    let mut grad = vec![T::zero(); dd];
    for j in 0..steps {
        moll.gradient(x_path.value(j), &mut grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "drift gradient",
                step: j,
                master: lineage.master,
                path: lineage.path,
            });
        }
        for e in 0..dd {
            values[(j + 1) * dd + e] = values[j * dd + e] + grad[e] * h;
        }
    }
    let path = MatrixPath::from_values(x_path.grid(), d, values, MatrixProvenance::Derived)?;
    Ok(OccupationDerivative {
        path,
        delta,
        source: format!(
            "{} @ path {}/{}",
            drift.label(),
            lineage.master,
            lineage.path
        ),
    })
}

/// Dyadic-gap Holder seminorm estimate.
#[derive(Debug, Clone)]
pub struct HolderSeminormEstimate<T> {
    pub exponent: T,
    pub value: T,
    /// Time gaps that entered the maximum.
    pub scales_used: Vec<T>,
    /// Set for paths with fewer than two nodes, where the estimate is zero
    /// by convention.
    pub degenerate: bool,
}

/// `max |p_t - p_s| / |t - s|^gamma` over node pairs at dyadic gaps up to
/// `max_gap` (in time units). Entries per node are reduced with the
/// Euclidean norm.
pub fn holder_seminorm_values<T: Scalar>(
    values: &[T],
    entries: usize,
    dt: T,
    gamma: T,
    max_gap: T,
) -> Result<HolderSeminormEstimate<T>> {
    if gamma <= T::zero() || gamma > T::one() {
        return Err(Error::InvalidParameter("gamma must lie in (0, 1]".into()));
    }
    let nodes = values.len() / entries;
    if nodes < 2 {
        return Ok(HolderSeminormEstimate {
            exponent: gamma,
            value: T::zero(),
            scales_used: Vec::new(),
            degenerate: true,
        });
    }
    let mut scales = Vec::new();
    let mut value = T::zero();
    let mut gap = 1usize;
    while gap < nodes {
        let time_gap = from_usize::<T>(gap) * dt;
        if time_gap > max_gap {
            break;
        }
        scales.push(time_gap);
        let denom = time_gap.powf(gamma);
        for i in 0..nodes - gap {
            let a = &values[i * entries..(i + 1) * entries];
            let b = &values[(i + gap) * entries..(i + gap + 1) * entries];
            let mut dist2 = T::zero();
            for (x, y) in a.iter().zip(b) {
                let diff = *y - *x;
                dist2 = dist2 + diff * diff;
            }
            value = value.max(dist2.sqrt() / denom);
        }
        gap *= 2;
    }
    Ok(HolderSeminormEstimate {
        exponent: gamma,
        value,
        scales_used: scales,
        degenerate: false,
    })
}

pub fn holder_seminorm<T: Scalar>(
    path: &SamplePath<T>,
    gamma: T,
    max_gap: T,
) -> Result<HolderSeminormEstimate<T>> {
    let dt = T::one() / from_usize::<T>(path.steps());
    holder_seminorm_values(path.values(), path.dim(), dt, gamma, max_gap)
}

pub fn holder_seminorm_matrix<T: Scalar>(
    path: &MatrixPath<T>,
    gamma: T,
    max_gap: T,
) -> Result<HolderSeminormEstimate<T>> {
    let dt = path.grid().fine_dt::<T>();
    holder_seminorm_values(path.values(), path.dim() * path.dim(), dt, gamma, max_gap)
}
