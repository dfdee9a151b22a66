//! Backward parabolic corrector and the transformed limit equation.
//!
//! For drifts with Sobolev rather than Holder regularity the limit dynamics
//! are characterised through the corrector `u` solving
//! `d_t u + a u''/2 + b u' = theta u - b` with `u(1, .) = 0`. Once
//! `sup |u'| < 1` the change of variable `z = (1 + u'(t, X_t)) v` removes
//! the occupation-derivative coupling and leaves an Ito equation with
//! bounded coefficients, advanced here by the shared hybrid Euler core.
//! (The sign follows from the Ito expansion of `u'(t, X_t) v_t` against the
//! corrector equation; it also makes the transformed law coincide with the
//! Young-Ito pipeline for smooth drifts.)
//!
//! Scope is one spatial dimension on a truncated domain `[-R, R]` with
//! homogeneous Neumann walls; excursions beyond `R/2` are monitored and
//! leaving `[-R, R]` aborts a path solve.

use crate::limit_holder::{hybrid_euler, SummationOrder};
use crate::model::ModelSpec;
use crate::paths::BrownianPath;
use crate::scheme::{GridLevel, MatrixPath, SamplePath};
use crate::{from_usize, lit, Error, Result, Scalar};

use std::io::Write as _;
use std::path::Path;

/// Corrector field on a `[0, 1] x [-R, R]` grid, time-major storage.
#[derive(Debug, Clone)]
pub struct PDESolution<T> {
    pub theta: T,
    pub half_width: T,
    pub nx: usize,
    pub nt: usize,
    pub dx: T,
    pub dt: T,
    pub u: Vec<T>,
    pub grad_u: Vec<T>,
    pub hess_u: Vec<T>,
    pub sup_grad: T,
    /// Largest relative residual of the implicit solves.
    pub residual: T,
}

#[derive(Debug, Clone, Copy)]
enum Field {
    Value,
    Grad,
    Hess,
}

impl<T: Scalar> PDESolution<T> {
    /// Whether the gradient bound admits the transform.
    pub fn usable(&self) -> bool {
        self.sup_grad < T::one()
    }

    fn field(&self, which: Field) -> &[T] {
        match which {
            Field::Value => &self.u,
            Field::Grad => &self.grad_u,
            Field::Hess => &self.hess_u,
        }
    }

    /// Bilinear interpolation of a field at `(t, x)`; `x` must lie inside
    /// the truncated domain.
    fn interpolate(&self, which: Field, t: T, x: T) -> T {
        let data = self.field(which);
        let nx = self.nx;
        let tf = (t / self.dt).max(T::zero());
        let k0 = tf.floor().to_usize().unwrap_or(0).min(self.nt - 1);
        let wt = tf - from_usize(k0);
        let xf = ((x + self.half_width) / self.dx).max(T::zero());
        let i0 = xf.floor().to_usize().unwrap_or(0).min(nx - 1);
        let wx = xf - from_usize(i0);
        let row0 = k0 * (nx + 1);
        let row1 = (k0 + 1) * (nx + 1);
        let one = T::one();
        (one - wt) * ((one - wx) * data[row0 + i0] + wx * data[row0 + i0 + 1])
            + wt * ((one - wx) * data[row1 + i0] + wx * data[row1 + i0 + 1])
    }

    pub fn grad_at(&self, t: T, x: T) -> T {
        self.interpolate(Field::Grad, t, x)
    }

    pub fn hess_at(&self, t: T, x: T) -> T {
        self.interpolate(Field::Hess, t, x)
    }

    pub fn value_at(&self, t: T, x: T) -> T {
        self.interpolate(Field::Value, t, x)
    }

    /// Writes `u` and `grad u` as little-endian f64 with a JSON sidecar
    /// describing shape, spacings and theta.
    pub fn dump(&self, prefix: &Path) -> Result<()> {
        let write_bin = |suffix: &str, data: &[T]| -> Result<()> {
            let mut f = std::fs::File::create(with_suffix(prefix, suffix))?;
            for v in data {
                f.write_all(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes())?;
            }
            Ok(())
        };
        write_bin("_u.bin", &self.u)?;
        write_bin("_grad.bin", &self.grad_u)?;
        let meta = serde_json::json!({
            "layout": "time-major",
            "nt": self.nt,
            "nx": self.nx,
            "dt": self.dt.to_f64(),
            "dx": self.dx.to_f64(),
            "half_width": self.half_width.to_f64(),
            "theta": self.theta.to_f64(),
            "sup_grad": self.sup_grad.to_f64(),
        });
        std::fs::write(
            with_suffix(prefix, "_meta.json"),
            serde_json::to_string_pretty(&meta).expect("serialisable metadata"),
        )?;
        Ok(())
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    prefix.with_file_name(name)
}

/// Thomas solve of a tridiagonal system; diagonals are destroyed.
fn thomas<T: Scalar>(
    lower: &[T],
    diag: &mut [T],
    upper: &[T],
    rhs: &mut [T],
) -> Result<()> {
    let n = diag.len();
    for i in 1..n {
        if diag[i - 1] == T::zero() {
            return Err(Error::LinearSolve("zero pivot in tridiagonal solve".into()));
        }
        let w = lower[i] / diag[i - 1];
        diag[i] = diag[i] - w * upper[i - 1];
        rhs[i] = rhs[i] - w * rhs[i - 1];
    }
    if diag[n - 1] == T::zero() {
        return Err(Error::LinearSolve("zero pivot in tridiagonal solve".into()));
    }
    rhs[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
    Ok(())
}

/// Solves the corrector equation backward from the zero terminal condition
/// with a Crank-Nicolson stepper and homogeneous Neumann walls at `-R, R`.
///
/// Scalar scope: the model must be one-dimensional.
pub fn solve_corrector_pde<T: Scalar>(
    model: &ModelSpec<T>,
    theta: T,
    half_width: T,
    nx: usize,
    nt: usize,
) -> Result<PDESolution<T>> {
    if model.dim != 1 {
        return Err(Error::InvalidParameter(
            "corrector solve is one-dimensional".into(),
        ));
    }
    if theta <= T::zero() {
        return Err(Error::InvalidParameter("theta must be positive".into()));
    }
    if nx < 4 || nt < 2 {
        return Err(Error::InvalidParameter("grid too small".into()));
    }
    let dx = lit::<T>(2.0) * half_width / from_usize(nx);
    let dt = T::one() / from_usize(nt);
    let half = lit::<T>(0.5);
    let two = lit::<T>(2.0);

    // Spatially varying coefficients at the nodes.
    let mut a = vec![T::zero(); nx + 1];
    let mut bdrift = vec![T::zero(); nx + 1];
    {
        let mut sig = [T::zero()];
        let mut bval = [T::zero()];
        for i in 0..=nx {
            let x = -half_width + from_usize::<T>(i) * dx;
            model.diffusion.eval(&[x], &mut sig);
            model.drift.eval(&[x], &mut bval);
            a[i] = sig[0] * sig[0];
            bdrift[i] = bval[0];
        }
    }

    // Spatial operator A u = a u''/2 + b u' - theta u as tridiagonal bands.
    let mut lo = vec![T::zero(); nx + 1];
    let mut di = vec![T::zero(); nx + 1];
    let mut up = vec![T::zero(); nx + 1];
    let dx2 = dx * dx;
    for i in 0..=nx {
        if i == 0 {
            di[0] = -a[0] / dx2 - theta;
            up[0] = a[0] / dx2;
        } else if i == nx {
            lo[nx] = a[nx] / dx2;
            di[nx] = -a[nx] / dx2 - theta;
        } else {
            lo[i] = half * a[i] / dx2 - bdrift[i] / (two * dx);
            di[i] = -a[i] / dx2 - theta;
            up[i] = half * a[i] / dx2 + bdrift[i] / (two * dx);
        }
    }

    // March in s = 1 - t from the zero slice; store slices time-major.
    let mut u = vec![T::zero(); (nt + 1) * (nx + 1)];
    let mut current = vec![T::zero(); nx + 1];
    let mut rhs = vec![T::zero(); nx + 1];
    let mut diag_lhs = vec![T::zero(); nx + 1];
    let mut lower_lhs = vec![T::zero(); nx + 1];
    let mut upper_lhs = vec![T::zero(); nx + 1];
    let mut residual = T::zero();
    for i in 0..=nx {
        lower_lhs[i] = -half * dt * lo[i];
        upper_lhs[i] = -half * dt * up[i];
    }
    for step in 0..nt {
        // rhs = (I + dt/2 A) u + dt b
        for i in 0..=nx {
            let au = di[i] * current[i]
                + if i > 0 { lo[i] * current[i - 1] } else { T::zero() }
                + if i < nx { up[i] * current[i + 1] } else { T::zero() };
            rhs[i] = current[i] + half * dt * au + dt * bdrift[i];
        }
        let rhs_norm = rhs
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
            .max(lit(1e-300));
        let saved_rhs = rhs.clone();
        for i in 0..=nx {
            diag_lhs[i] = T::one() - half * dt * di[i];
        }
        thomas(&lower_lhs, &mut diag_lhs, &upper_lhs, &mut rhs)?;
        // Residual of the solve against the untouched bands.
        let mut res = T::zero();
        for i in 0..=nx {
            let lhs_row = (T::one() - half * dt * di[i]) * rhs[i]
                + if i > 0 { lower_lhs[i] * rhs[i - 1] } else { T::zero() }
                + if i < nx { upper_lhs[i] * rhs[i + 1] } else { T::zero() };
            res = res.max((lhs_row - saved_rhs[i]).abs());
        }
        residual = residual.max(res / rhs_norm);
        current.copy_from_slice(&rhs);
        let t_index = nt - 1 - step;
        u[t_index * (nx + 1)..(t_index + 1) * (nx + 1)].copy_from_slice(&current);
    }

    // Centred spatial derivatives per slice, one-sided at the walls.
    let mut grad_u = vec![T::zero(); (nt + 1) * (nx + 1)];
    let mut hess_u = vec![T::zero(); (nt + 1) * (nx + 1)];
    let mut sup_grad = T::zero();
    for k in 0..=nt {
        let row = k * (nx + 1);
        for i in 0..=nx {
            let g = if i == 0 {
                (u[row + 1] - u[row]) / dx
            } else if i == nx {
                (u[row + nx] - u[row + nx - 1]) / dx
            } else {
                (u[row + i + 1] - u[row + i - 1]) / (two * dx)
            };
            grad_u[row + i] = g;
            sup_grad = sup_grad.max(g.abs());
            hess_u[row + i] = if i == 0 || i == nx {
                two * (if i == 0 {
                    u[row + 1] - u[row]
                } else {
                    u[row + nx - 1] - u[row + nx]
                }) / dx2
            } else {
                (u[row + i + 1] - two * u[row + i] + u[row + i - 1]) / dx2
            };
        }
    }

    Ok(PDESolution {
        theta,
        half_width,
        nx,
        nt,
        dx,
        dt,
        u,
        grad_u,
        hess_u,
        sup_grad,
        residual,
    })
}

/// One row of a theta sweep.
#[derive(Debug, Clone)]
pub struct GradientBoundRow<T> {
    pub theta: T,
    pub sup_grad: T,
    pub sup_u: T,
    pub residual: T,
}

/// Gradient-bound table over a theta list with the fitted log-log slope of
/// `sup |grad u|` against theta (when all values are positive).
#[derive(Debug, Clone)]
pub struct GradientBoundSweep<T> {
    pub rows: Vec<GradientBoundRow<T>>,
    pub slope: Option<T>,
}

pub fn check_gradient_bound<T: Scalar>(
    model: &ModelSpec<T>,
    thetas: &[T],
    half_width: T,
    nx: usize,
    nt: usize,
) -> Result<GradientBoundSweep<T>> {
    if thetas.is_empty() {
        return Err(Error::InvalidParameter("empty theta list".into()));
    }
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let sol = solve_corrector_pde(model, theta, half_width, nx, nt)?;
        let sup_u = sol.u.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
        rows.push(GradientBoundRow {
            theta,
            sup_grad: sol.sup_grad,
            sup_u,
            residual: sol.residual,
        });
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.sup_grad > T::zero()) {
        let n = from_usize::<T>(rows.len());
        let (mut sx, mut sy, mut sxx, mut sxy) = (T::zero(), T::zero(), T::zero(), T::zero());
        for r in &rows {
            let x = r.theta.ln();
            let y = r.sup_grad.ln();
            sx = sx + x;
            sy = sy + y;
            sxx = sxx + x * x;
            sxy = sxy + x * y;
        }
        let denom = sxx - sx * sx / n;
        (denom > T::zero()).then(|| (sxy - sx * sy / n) / denom)
    } else {
        None
    };
    Ok(GradientBoundSweep { rows, slope })
}

/// Solution of the transformed limit system along one driver set.
#[derive(Debug, Clone)]
pub struct LimitSolutionSobolev<T> {
    /// Transformed variable `z = (1 + u') v`.
    pub z: SamplePath<T>,
    /// Recovered fluctuation `v = (1 + u')^{-1} z`.
    pub v: SamplePath<T>,
    pub theta: T,
    /// Fine nodes at which the path left `[-R/2, R/2]`.
    pub excursions: usize,
}

/// Advances the transformed equation
///
/// `dZ = theta u' (1+u')^{-1} Z dt + (u'' s + (1+u') s')(1+u')^{-1} Z dB
///      + 2^{-1/2} (1+u') s s' dW`
///
/// with coefficients read from the corrector field at `(t, X_t)` by bilinear
/// interpolation, then recovers `v = (1+u')^{-1} z` node-wise. The gradient
/// gate `sup |u'| < 1` keeps the transform matrix invertible.
pub fn solve_limit_sobolev<T: Scalar>(
    model: &ModelSpec<T>,
    u: &PDESolution<T>,
    x_ref: &SamplePath<T>,
    b: &BrownianPath<T>,
    w: &MatrixPath<T>,
    order: SummationOrder,
) -> Result<LimitSolutionSobolev<T>> {
    if model.dim != 1 {
        return Err(Error::InvalidParameter(
            "transformed solve is one-dimensional".into(),
        ));
    }
    if !u.usable() {
        return Err(Error::GradientBound {
            sup_grad: u.sup_grad.to_f64().unwrap_or(f64::NAN),
        });
    }
    let steps = x_ref.steps();
    if x_ref.level() != GridLevel::Fine || b.steps() != steps || w.steps() != steps {
        return Err(Error::GridMismatch(
            "transformed solve requires drivers on the common fine grid".into(),
        ));
    }
    match w.provenance() {
        crate::scheme::MatrixProvenance::Area(lin) if lin == b.lineage() => {
            return Err(Error::DependentDrivers { what: "area process of the same path" })
        }
        crate::scheme::MatrixProvenance::Wiener(lin) if lin == b.lineage() => {
            return Err(Error::DependentDrivers { what: "Wiener driver sharing the lineage" })
        }
        _ => {}
    }
    let lineage = b.lineage();
    let h = x_ref.grid().fine_dt::<T>();
    let inv_sqrt2 = T::one() / lit::<T>(2.0).sqrt();
    let near_singular = lit::<T>(1e-6);
    let half_r = u.half_width / lit::<T>(2.0);
    let mut excursions = 0usize;
    let steps_t = from_usize::<T>(steps);

    let theta = u.theta;
    let values = hybrid_euler(
        1,
        steps,
        |j, dmat: &mut [T], gtens: &mut [T], fcoef: &mut [T]| {
            let x = x_ref.value(j)[0];
            if x.abs() > u.half_width {
                return Err(Error::InvalidParameter(format!(
                    "path left the corrector domain at step {j} (|x| = {x})"
                )));
            }
            if x.abs() > half_r {
                excursions += 1;
            }
            let t = from_usize::<T>(j) / steps_t;
            let g = u.grad_at(t, x);
            let hh = u.hess_at(t, x);
            let transform = T::one() + g;
            if transform.abs() < near_singular {
                return Err(Error::SingularTransform { step: j });
            }
            let mut sig = [T::zero()];
            let mut sgrad = [T::zero()];
            model.diffusion.eval(&[x], &mut sig);
            model.diffusion.gradient(&[x], &mut sgrad);
            dmat[0] = theta * g / transform * h;
            gtens[0] = (hh * sig[0] + (T::one() + g) * sgrad[0]) / transform;
            fcoef[0] = inv_sqrt2 * (T::one() + g) * (sig[0] * sgrad[0]);
            Ok(())
        },
        |j, out: &mut [T]| out[0] = b.increment(j)[0],
        |j, out: &mut [T]| out[0] = w.value(j + 1)[0] - w.value(j)[0],
        order,
        lineage,
    )?;

    let z = SamplePath::from_values(x_ref.grid(), 1, steps, values)?.with_lineage(lineage);
    let mut v_values = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let x = x_ref.value(j)[0];
        let t = from_usize::<T>(j) / steps_t;
        let g = u.grad_at(t, x);
        let transform = T::one() + g;
        if transform.abs() < near_singular {
            return Err(Error::SingularTransform { step: j });
        }
        v_values.push(z.value(j)[0] / transform);
    }
    let v = SamplePath::from_values(x_ref.grid(), 1, steps, v_values)?.with_lineage(lineage);
    Ok(LimitSolutionSobolev {
        z,
        v,
        theta,
        excursions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_holder::{independent_wiener_matrix, solve_limit_holder};
    use crate::model::{DiffusionSpec, DriftSpec};
    use crate::paths::{sample_brownian, TimeGrid};
    use crate::rng::Lineage;
    use crate::scheme::reference_solution;

    fn model_with(drift: DriftSpec<f64>) -> ModelSpec<f64> {
        ModelSpec::new(
            1,
            vec![0.0],
            drift,
            DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
            0.69,
        )
        .unwrap()
    }

    #[test]
    fn zero_drift_gives_zero_field() {
        let sol = solve_corrector_pde(&model_with(DriftSpec::Zero), 4.0, 4.0, 64, 64).unwrap();
        assert!(sol.u.iter().all(|&v| v == 0.0));
        assert_eq!(sol.sup_grad, 0.0);
        assert!(sol.usable());
    }

    #[test]
    fn constant_drift_matches_scalar_closed_form() {
        // b = c, sigma = 1: u(t, x) = (c/theta)(1 - e^{theta (t-1)}),
        // x-independent.
        let c = 1.0;
        let theta = 4.0;
        let model = ModelSpec::new(
            1,
            vec![0.0],
            DriftSpec::Constant(vec![c]),
            DiffusionSpec::Identity,
            0.9,
        )
        .unwrap();
        let sol = solve_corrector_pde(&model, theta, 4.0, 128, 2048).unwrap();
        let mut sup: f64 = 0.0;
        for k in 0..=sol.nt {
            let t = k as f64 / sol.nt as f64;
            let closed = (c / theta) * (1.0 - (theta * (t - 1.0)).exp());
            for i in 0..=sol.nx {
                sup = sup.max((sol.u[k * (sol.nx + 1) + i] - closed).abs());
            }
        }
        assert!(sup < 1e-6, "closed-form gap {sup}");
        // x-independent solution: spatial gradient vanishes.
        assert!(sol.sup_grad < 1e-9);
        assert!(sol.residual < 1e-6);
    }

    #[test]
    fn terminal_condition_is_exactly_zero() {
        let model = model_with(DriftSpec::smooth_tanh(1.0));
        let sol = solve_corrector_pde(&model, 8.0, 6.0, 128, 128).unwrap();
        let last = sol.nt * (sol.nx + 1);
        assert!(sol.u[last..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maximum_principle_bound() {
        // |u| <= sup|b| / theta for the solved field.
        let model = model_with(DriftSpec::<f64>::sobolev_bump(0.5, 2, 1.0).unwrap());
        let theta = 8.0;
        let sol = solve_corrector_pde(&model, theta, 6.0, 512, 256).unwrap();
        let mut sup_b: f64 = 0.0;
        let mut bv = [0.0];
        for i in 0..=512 {
            let x = -6.0 + i as f64 * sol.dx;
            model.drift.eval(&[x], &mut bv);
            sup_b = sup_b.max(bv[0].abs());
        }
        let sup_u = sol.u.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(
            sup_u <= sup_b / theta * 1.05,
            "sup u {sup_u} vs bound {}",
            sup_b / theta
        );
    }

    #[test]
    fn doubling_theta_shrinks_gradient() {
        let model = model_with(DriftSpec::<f64>::sobolev_bump(0.5, 2, 1.0).unwrap());
        let sweep = check_gradient_bound(&model, &[4.0, 8.0], 6.0, 512, 256).unwrap();
        assert!(sweep.rows[1].sup_grad < sweep.rows[0].sup_grad);
        assert!(sweep.slope.unwrap() < 0.0);
    }

    #[test]
    fn transform_round_trip_identity() {
        let model = model_with(DriftSpec::smooth_tanh(1.0));
        let u = solve_corrector_pde(&model, 8.0, 8.0, 256, 128).unwrap();
        assert!(u.usable());
        for &(t, x) in &[(0.0, 0.3), (0.4, -1.2), (0.9, 2.5)] {
            let g = u.grad_at(t, x);
            let prod = (1.0 - g) * (1.0 / (1.0 - g));
            assert!((prod - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_drift_transform_collapses_to_holder_dynamics() {
        // b = 0 makes u vanish, so the transformed equation must reproduce
        // the plain limit equation with no occupation term.
        let grid = TimeGrid::new(32, 16).unwrap();
        let model = model_with(DriftSpec::Zero);
        let u = solve_corrector_pde(&model, 8.0, 8.0, 128, 64).unwrap();
        let b = sample_brownian::<f64>(grid, 1, Lineage::new(61, 0)).unwrap();
        let x = reference_solution(&model, &b).unwrap();
        let w = independent_wiener_matrix::<f64>(grid, 1, Lineage::new(3061, 0)).unwrap();
        let sob = solve_limit_sobolev(&model, &u, &x, &b, &w, SummationOrder::Forward).unwrap();
        let l = crate::averaging::qx_operator(&model.drift, &x, 0.0).unwrap();
        let hol = solve_limit_holder(&model, &x, &l, &b, &w, SummationOrder::Forward).unwrap();
        for (a, c) in sob.v.values().iter().zip(hol.v.values()) {
            assert!((a - c).abs() < 1e-13);
        }
        // z and v coincide when u = 0.
        assert_eq!(sob.z.values(), sob.v.values());
    }

    #[test]
    fn zero_forcing_gives_zero_transformed_path() {
        let grid = TimeGrid::new(16, 8).unwrap();
        let model = model_with(DriftSpec::smooth_tanh(1.0));
        let u = solve_corrector_pde(&model, 8.0, 8.0, 128, 64).unwrap();
        let b = sample_brownian::<f64>(grid, 1, Lineage::new(62, 0)).unwrap();
        let x = reference_solution(&model, &b).unwrap();
        let zero_w = MatrixPath::from_values(
            grid,
            1,
            vec![0.0; grid.fine_steps() + 1],
            crate::scheme::MatrixProvenance::Derived,
        )
        .unwrap();
        let sol =
            solve_limit_sobolev(&model, &u, &x, &b, &zero_w, SummationOrder::Forward).unwrap();
        assert!(sol.z.values().iter().all(|&v| v == 0.0));
        assert!(sol.v.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unusable_field_is_refused() {
        let model = model_with(DriftSpec::smooth_tanh(1.0));
        let mut u = solve_corrector_pde(&model, 8.0, 8.0, 64, 32).unwrap();
        u.sup_grad = 1.5;
        let grid = TimeGrid::new(4, 4).unwrap();
        let b = sample_brownian::<f64>(grid, 1, Lineage::new(63, 0)).unwrap();
        let x = reference_solution(&model, &b).unwrap();
        let w = independent_wiener_matrix::<f64>(grid, 1, Lineage::new(3063, 0)).unwrap();
        assert!(matches!(
            solve_limit_sobolev(&model, &u, &x, &b, &w, SummationOrder::Forward),
            Err(Error::GradientBound { .. })
        ));
    }

    #[test]
    fn dump_writes_fields_and_sidecar() {
        let model = model_with(DriftSpec::smooth_tanh(1.0));
        let sol = solve_corrector_pde(&model, 8.0, 4.0, 32, 16).unwrap();
        let dir = std::env::temp_dir().join("emclt_zvonkin_dump_test");
        std::fs::create_dir_all(&dir).unwrap();
        let prefix = dir.join("field");
        sol.dump(&prefix).unwrap();
        let u_bytes = std::fs::read(dir.join("field_u.bin")).unwrap();
        assert_eq!(u_bytes.len(), (16 + 1) * (32 + 1) * 8);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("field_meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["nx"], 32);
        assert_eq!(meta["theta"], 8.0);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
