//! Euler-Maruyama integration and the coupled fluctuation bundle.
//!
//! Everything in one bundle is driven by a single Brownian path: the
//! fine-grid reference proxy, the `n`-step scheme (kept as its continuous
//! interpolant so the fluctuation is defined at fine nodes), the rescaled
//! fluctuation `sqrt(n) (X - X^n)`, and the matrix-valued area process.

use crate::model::ModelSpec;
use crate::paths::{coarsen, BrownianPath, TimeGrid};
use crate::rng::Lineage;
use crate::{from_usize, lit, Error, Result, Scalar};

/// Grid level a stored path lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLevel {
    /// Nodes of the `k`-step grid, `k` the stored step count.
    Coarse,
    /// All fine nodes of the underlying grid.
    Fine,
}

/// `R^d`-valued path sampled on a stated grid level.
#[derive(Debug, Clone)]
pub struct SamplePath<T> {
    grid: TimeGrid,
    dim: usize,
    steps: usize,
    values: Vec<T>,
    lineage: Option<Lineage>,
}

impl<T: Scalar> SamplePath<T> {
    pub fn from_values(grid: TimeGrid, dim: usize, steps: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != (steps + 1) * dim {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes of dimension {dim}",
                values.len(),
                steps + 1
            )));
        }
        Ok(SamplePath {
            grid,
            dim,
            steps,
            values,
            lineage: None,
        })
    }

    pub fn with_lineage(mut self, lineage: Lineage) -> Self {
        self.lineage = Some(lineage);
        self
    }

    /// Lineage of the Brownian path this was built from, when known.
    pub fn lineage(&self) -> Option<Lineage> {
        self.lineage
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of intervals of the stored level.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn level(&self) -> GridLevel {
        if self.steps == self.grid.fine_steps() {
            GridLevel::Fine
        } else {
            GridLevel::Coarse
        }
    }

    pub fn value(&self, node: usize) -> &[T] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn terminal(&self) -> &[T] {
        self.value(self.steps)
    }
}

/// Provenance of a matrix-valued driver; used to refuse pairing a path with
/// an area process built from its own Brownian motion in law-level solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixProvenance {
    /// Fresh Wiener process with its own lineage.
    Wiener(Lineage),
    /// Area process of the Brownian path with the given lineage.
    Area(Lineage),
    /// Output of a deterministic construction (occupation derivatives,
    /// synthetic test paths).
    Derived,
}

/// `R^{d x d}`-valued path on the fine grid, row-major entries per node.
#[derive(Debug, Clone)]
pub struct MatrixPath<T> {
    grid: TimeGrid,
    dim: usize,
    values: Vec<T>,
    provenance: MatrixProvenance,
}

impl<T: Scalar> MatrixPath<T> {
    pub fn from_values(
        grid: TimeGrid,
        dim: usize,
        values: Vec<T>,
        provenance: MatrixProvenance,
    ) -> Result<Self> {
        if values.len() != (grid.fine_steps() + 1) * dim * dim {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes of dimension {dim}x{dim}",
                values.len(),
                grid.fine_steps() + 1
            )));
        }
        Ok(MatrixPath {
            grid,
            dim,
            values,
            provenance,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.grid.fine_steps()
    }

    pub fn provenance(&self) -> MatrixProvenance {
        self.provenance
    }

    /// Entries at `node`, row-major: `value(node)[k * dim + i]`.
    pub fn value(&self, node: usize) -> &[T] {
        let dd = self.dim * self.dim;
        &self.values[node * dd..(node + 1) * dd]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

#[inline]
fn ensure_finite<T: Scalar>(
    buf: &[T],
    what: &'static str,
    step: usize,
    lineage: Lineage,
) -> Result<()> {
    if buf.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what,
            step,
            master: lineage.master,
            path: lineage.path,
        })
    }
}

/// One scheme update: `state += b dt + sigma dB`.
#[inline]
fn advance<T: Scalar>(state: &mut [T], b: &[T], sigma: &[T], dt: T, db: &[T]) {
    let d = state.len();
    for l in 0..d {
        let mut acc = state[l] + b[l] * dt;
        let row = &sigma[l * d..(l + 1) * d];
        for (i, &dbi) in db.iter().enumerate() {
            acc = acc + row[i] * dbi;
        }
        state[l] = acc;
    }
}

/// Euler-Maruyama scheme with `level` steps, evaluated at the `level`-grid
/// nodes.
///
/// The path is implicitly coarsened first, so the output is a function of
/// the `level`-grid increments alone: refining the underlying grid never
/// changes the scheme values at surviving nodes.
pub fn euler_maruyama<T: Scalar>(
    model: &ModelSpec<T>,
    path: &BrownianPath<T>,
    level: usize,
) -> Result<SamplePath<T>> {
    let fine = path.steps();
    if level == 0 || fine % level != 0 {
        return Err(Error::LevelMismatch { level, fine });
    }
    if model.dim != path.dim() {
        return Err(Error::GridMismatch(format!(
            "model dimension {} vs path dimension {}",
            model.dim,
            path.dim()
        )));
    }
    let coarse = coarsen(path, fine / level)?;
    let d = model.dim;
    let dt = T::one() / from_usize::<T>(level);
    let mut values = Vec::with_capacity((level + 1) * d);
    values.extend_from_slice(&model.x0);
    let mut state = model.x0.clone();
    let mut b = vec![T::zero(); d];
    let mut sigma = vec![T::zero(); d * d];
    for j in 0..level {
        model.drift.eval(&state, &mut b);
        model.diffusion.eval(&state, &mut sigma);
        ensure_finite(&b, "drift", j, path.lineage())?;
        ensure_finite(&sigma, "diffusion", j, path.lineage())?;
        advance(&mut state, &b, &sigma, dt, coarse.increment(j));
        ensure_finite(&state, "state", j, path.lineage())?;
        values.extend_from_slice(&state);
    }
    Ok(SamplePath::from_values(path.grid(), d, level, values)?.with_lineage(path.lineage()))
}

/// Continuous-time interpolant of the `level`-step scheme, sampled at every
/// fine node.
///
/// Between `level`-grid nodes the state advances with fine increments while
/// the coefficient arguments stay frozen at the last `level`-grid node, which
/// is exactly the scheme as a continuous-time process.
pub fn euler_maruyama_interpolated<T: Scalar>(
    model: &ModelSpec<T>,
    path: &BrownianPath<T>,
    level: usize,
) -> Result<SamplePath<T>> {
    let fine = path.steps();
    if level == 0 || fine % level != 0 {
        return Err(Error::LevelMismatch { level, fine });
    }
    if model.dim != path.dim() {
        return Err(Error::GridMismatch(format!(
            "model dimension {} vs path dimension {}",
            model.dim,
            path.dim()
        )));
    }
    let stride = fine / level;
    let d = model.dim;
    let h = path.grid().fine_dt::<T>();
    let mut values = Vec::with_capacity((fine + 1) * d);
    values.extend_from_slice(&model.x0);
    let mut state = model.x0.clone();
    let mut b = vec![T::zero(); d];
    let mut sigma = vec![T::zero(); d * d];
    for j in 0..fine {
        if j % stride == 0 {
            model.drift.eval(&state, &mut b);
            model.diffusion.eval(&state, &mut sigma);
            ensure_finite(&b, "drift", j, path.lineage())?;
            ensure_finite(&sigma, "diffusion", j, path.lineage())?;
        }
        advance(&mut state, &b, &sigma, h, path.increment(j));
        ensure_finite(&state, "state", j, path.lineage())?;
        values.extend_from_slice(&state);
    }
    Ok(SamplePath::from_values(path.grid(), d, fine, values)?.with_lineage(path.lineage()))
}

/// Fine-grid proxy for the true solution: the scheme at all `n * refinement`
/// steps of the path.
pub fn reference_solution<T: Scalar>(
    model: &ModelSpec<T>,
    path: &BrownianPath<T>,
) -> Result<SamplePath<T>> {
    euler_maruyama(model, path, path.steps())
}

/// Rescaled fluctuation `sqrt(n) (x_ref - x_n)`, node-wise.
pub fn fluctuation<T: Scalar>(
    x_ref: &SamplePath<T>,
    x_n: &SamplePath<T>,
    n: usize,
) -> Result<SamplePath<T>> {
    if x_ref.steps() != x_n.steps() || x_ref.dim() != x_n.dim() || x_ref.grid() != x_n.grid() {
        return Err(Error::GridMismatch(
            "fluctuation requires both paths on the same nodes".into(),
        ));
    }
    let scale = from_usize::<T>(n).sqrt();
    let values = x_ref
        .values()
        .iter()
        .zip(x_n.values())
        .map(|(&r, &s)| scale * (r - s))
        .collect();
    let mut out = SamplePath::from_values(x_ref.grid(), x_ref.dim(), x_ref.steps(), values)?;
    if let Some(lineage) = x_ref.lineage() {
        out = out.with_lineage(lineage);
    }
    Ok(out)
}

/// Area process of one Brownian path together with a degeneracy marker.
#[derive(Debug, Clone)]
pub struct AreaProcess<T> {
    pub path: MatrixPath<T>,
    /// Set when the fine grid does not refine the coarse one (refinement 1):
    /// the left-point sums vanish identically and only the closed-form
    /// diagonal is emitted.
    pub diagonal_only: bool,
}

/// Matrix-valued area process
/// `W_t = sqrt(2n) int (B_r - B_{kappa(r)}) (x) dB_r`
/// accumulated as left-point Ito sums over the fine grid.
pub fn area_process<T: Scalar>(path: &BrownianPath<T>) -> Result<AreaProcess<T>> {
    let grid = path.grid();
    let n = grid.n();
    let d = path.dim();
    let fine = path.steps();
    let dd = d * d;
    let scale = (lit::<T>(2.0) * from_usize::<T>(n)).sqrt();
    let mut values = vec![T::zero(); (fine + 1) * dd];

    if grid.refinement() == 1 {
        // Degenerate fine grid: every node is a coarse node, so the Ito sums
        // are identically zero. Emit the per-step closed-form diagonal
        // sqrt(2n) ((dB)^2 - 1/n) / 2 instead and flag the result.
        let inv_n = T::one() / from_usize::<T>(n);
        let half = lit::<T>(0.5);
        for j in 0..fine {
            let db = path.increment(j);
            for k in 0..d {
                let inc = scale * half * (db[k] * db[k] - inv_n);
                for i in 0..d {
                    let prev = values[j * dd + k * d + i];
                    values[(j + 1) * dd + k * d + i] =
                        if i == k { prev + inc } else { prev };
                }
            }
        }
        return Ok(AreaProcess {
            path: MatrixPath::from_values(grid, d, values, MatrixProvenance::Area(path.lineage()))?,
            diagonal_only: true,
        });
    }

    let mut b = vec![T::zero(); d];
    let mut b_kappa = vec![T::zero(); d];
    for j in 0..fine {
        if j % grid.refinement() == 0 {
            b_kappa.copy_from_slice(&b);
        }
        let db = path.increment(j);
        for k in 0..d {
            let bridge = b[k] - b_kappa[k];
            let row = j * dd + k * d;
            let next_row = (j + 1) * dd + k * d;
            for i in 0..d {
                values[next_row + i] = values[row + i] + scale * bridge * db[i];
            }
        }
        for (c, &dbc) in db.iter().enumerate() {
            b[c] = b[c] + dbc;
        }
    }
    Ok(AreaProcess {
        path: MatrixPath::from_values(grid, d, values, MatrixProvenance::Area(path.lineage()))?,
        diagonal_only: false,
    })
}

/// Coupled sample paths of one Brownian path: reference proxy, scheme
/// interpolant, fluctuation and area process.
#[derive(Debug, Clone)]
pub struct FluctuationBundle<T> {
    pub x_ref: SamplePath<T>,
    pub x_n: SamplePath<T>,
    pub v_n: SamplePath<T>,
    pub w_n: MatrixPath<T>,
    pub w_n_diagonal_only: bool,
    pub n: usize,
}

impl<T: Scalar> FluctuationBundle<T> {
    pub fn build(model: &ModelSpec<T>, path: &BrownianPath<T>) -> Result<Self> {
        let n = path.grid().n();
        let x_ref = reference_solution(model, path)?;
        let x_n = euler_maruyama_interpolated(model, path, n)?;
        let v_n = fluctuation(&x_ref, &x_n, n)?;
        let area = area_process(path)?;
        Ok(FluctuationBundle {
            x_ref,
            x_n,
            v_n,
            w_n: area.path,
            w_n_diagonal_only: area.diagonal_only,
            n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionSpec, DriftSpec};
    use crate::paths::sample_brownian;

    fn grid(n: usize, m: usize) -> TimeGrid {
        TimeGrid::new(n, m).unwrap()
    }

    fn model_1d(drift: DriftSpec<f64>, diffusion: DiffusionSpec<f64>) -> ModelSpec<f64> {
        let lambda = diffusion.ellipticity() * 0.99;
        ModelSpec::new(1, vec![0.0], drift, diffusion, lambda).unwrap()
    }

    #[test]
    fn pure_brownian_reproduces_cumulative_path() {
        let g = grid(4, 8);
        let path = sample_brownian::<f64>(g, 1, Lineage::new(1, 0)).unwrap();
        let x = reference_solution(&model_1d(DriftSpec::Zero, DiffusionSpec::Identity), &path)
            .unwrap();
        let b = path.cumulative();
        for (xv, bv) in x.values().iter().zip(&b) {
            assert_eq!(xv, bv);
        }
    }

    #[test]
    fn constant_drift_telescopes() {
        let g = grid(8, 1);
        let path = sample_brownian::<f64>(g, 1, Lineage::new(2, 0)).unwrap();
        let model = model_1d(DriftSpec::Constant(vec![0.5]), DiffusionSpec::Identity);
        let x = euler_maruyama(&model, &path, 8).unwrap();
        let b1 = path.terminal()[0];
        assert!((x.terminal()[0] - (0.5 + b1)).abs() < 1e-15);
    }

    #[test]
    fn one_step_linear_cancellation() {
        // b(x) = -x, k = 1: X_1 = x0 - x0 + B_1 for any x0.
        let g = grid(1, 1);
        let path = sample_brownian::<f64>(g, 1, Lineage::new(3, 5)).unwrap();
        for &x0 in &[0.0, 1.7, -4.2] {
            let model = ModelSpec::new(
                1,
                vec![x0],
                DriftSpec::Linear(vec![-1.0]),
                DiffusionSpec::Identity,
                0.9,
            )
            .unwrap();
            let x = euler_maruyama(&model, &path, 1).unwrap();
            assert_eq!(x.terminal()[0], path.terminal()[0]);
        }
    }

    #[test]
    fn scheme_depends_only_on_coarse_increments() {
        let g = grid(8, 16);
        let path = sample_brownian::<f64>(g, 1, Lineage::new(4, 2)).unwrap();
        let model = model_1d(
            DriftSpec::smooth_tanh(1.0),
            DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
        );
        let from_fine = euler_maruyama(&model, &path, 8).unwrap();
        let from_coarse = euler_maruyama(&model, &coarsen(&path, 16).unwrap(), 8).unwrap();
        assert_eq!(from_fine.values(), from_coarse.values());
        assert_eq!(from_fine.level(), GridLevel::Coarse);
    }

    #[test]
    fn interpolant_agrees_with_scheme_at_coarse_nodes() {
        let g = grid(8, 16);
        let path = sample_brownian::<f64>(g, 2, Lineage::new(5, 7)).unwrap();
        let model = ModelSpec::new(
            2,
            vec![0.1, -0.2],
            DriftSpec::smooth_tanh(1.0),
            DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
            0.69,
        )
        .unwrap();
        let coarse = euler_maruyama(&model, &path, 8).unwrap();
        let interp = euler_maruyama_interpolated(&model, &path, 8).unwrap();
        assert_eq!(interp.level(), GridLevel::Fine);
        for j in 0..=8 {
            let a = coarse.value(j);
            let b = interp.value(j * 16);
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12, "node {j}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn reference_with_refinement_one_is_the_scheme() {
        let g = grid(16, 1);
        let path = sample_brownian::<f64>(g, 1, Lineage::new(6, 0)).unwrap();
        let model = model_1d(
            DriftSpec::smooth_tanh(1.0),
            DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
        );
        let r = reference_solution(&model, &path).unwrap();
        let e = euler_maruyama(&model, &path, 16).unwrap();
        assert_eq!(r.values(), e.values());
    }

    #[test]
    fn reference_self_convergence_halves_like_sqrt_two() {
        // Coupled proxies at M, 2M, 4M on one path: successive sup distances
        // shrink by about sqrt(2).
        let model = model_1d(
            DriftSpec::smooth_tanh(1.0),
            DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
        );
        let n_paths = 400;
        let g = grid(4, 128);
        let mut d_hi = 0.0;
        let mut d_lo = 0.0;
        for i in 0..n_paths {
            let fine = sample_brownian::<f64>(g, 1, Lineage::new(77, i)).unwrap();
            let mid = coarsen(&fine, 2).unwrap();
            let low = coarsen(&fine, 4).unwrap();
            let r_fine = reference_solution(&model, &fine).unwrap();
            let r_mid = reference_solution(&model, &mid).unwrap();
            let r_low = reference_solution(&model, &low).unwrap();
            let mut sup_hi: f64 = 0.0;
            for j in 0..=mid.steps() {
                sup_hi = sup_hi.max((r_fine.value(2 * j)[0] - r_mid.value(j)[0]).abs());
            }
            let mut sup_lo: f64 = 0.0;
            for j in 0..=low.steps() {
                sup_lo = sup_lo.max((r_mid.value(2 * j)[0] - r_low.value(j)[0]).abs());
            }
            d_hi += sup_hi * sup_hi;
            d_lo += sup_lo * sup_lo;
        }
        let ratio = (d_lo / d_hi).sqrt();
        assert!(
            ratio > 1.15 && ratio < 1.75,
            "L2 sup-distance ratio {ratio}, expected about sqrt(2)"
        );
    }

    #[test]
    fn fluctuation_scaling_and_zero() {
        let g = grid(2, 2);
        let a = SamplePath::from_values(g, 1, 4, vec![0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let z = fluctuation(&a, &a, 4).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));

        let b = SamplePath::from_values(g, 1, 4, vec![0.0, 0.0, 0.1, 0.3, 0.4]).unwrap();
        let v = fluctuation(&a, &b, 4).unwrap();
        assert!((v.value(2)[0] - 0.2f64).abs() < 1e-15);

        let other = SamplePath::from_values(g, 1, 2, vec![0.0, 0.1, 0.2]).unwrap();
        assert!(fluctuation(&a, &other, 4).is_err());
    }

    #[test]
    fn area_of_zero_increments_is_zero() {
        let g = grid(2, 4);
        let path =
            BrownianPath::from_increments(g, 2, Lineage::new(0, 0), vec![0.0; 16]).unwrap();
        let area = area_process(&path).unwrap();
        assert!(!area.diagonal_only);
        assert!(area.path.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn area_diagonal_matches_ito_identity_as_refinement_grows() {
        // Per coarse step the diagonal increment approaches
        // sqrt(2n)((dB)^2 - 1/n)/2; the L2 gap shrinks like M^(-1/2).
        let n = 4;
        let n_paths = 800;
        let mut rms = Vec::new();
        for &m in &[16usize, 64] {
            let g = grid(n, m);
            let mut acc = 0.0;
            let mut count = 0.0;
            for i in 0..n_paths {
                let path = sample_brownian::<f64>(g, 1, Lineage::new(8, i)).unwrap();
                let coarse = coarsen(&path, m).unwrap();
                let w = area_process(&path).unwrap().path;
                for j in 0..n {
                    let db = coarse.increment(j)[0];
                    let closed = (2.0 * n as f64).sqrt() * (db * db - 1.0 / n as f64) / 2.0;
                    let inc = w.value((j + 1) * m)[0] - w.value(j * m)[0];
                    acc += (inc - closed).powi(2);
                    count += 1.0;
                }
            }
            rms.push((acc / count).sqrt());
        }
        let ratio = rms[0] / rms[1];
        assert!(
            ratio > 1.4 && ratio < 2.9,
            "expected about 2 = sqrt(64/16), got {ratio} ({rms:?})"
        );
    }

    #[test]
    fn degenerate_refinement_flags_and_fills_diagonal() {
        let g = grid(4, 1);
        let path = sample_brownian::<f64>(g, 2, Lineage::new(9, 0)).unwrap();
        let area = area_process(&path).unwrap();
        assert!(area.diagonal_only);
        let w = area.path;
        // Off-diagonal stays zero, diagonal accumulates the closed form.
        let mut expect = 0.0;
        for j in 0..4 {
            let db = path.increment(j)[0];
            expect += (8.0f64).sqrt() * (db * db - 0.25) / 2.0;
        }
        assert!((w.value(4)[0] - expect).abs() < 1e-14);
        assert_eq!(w.value(4)[1], 0.0);
    }

    #[test]
    fn bundle_invariants() {
        let g = grid(8, 8);
        let path = sample_brownian::<f64>(g, 1, Lineage::new(10, 3)).unwrap();
        let model = model_1d(
            DriftSpec::smooth_tanh(1.0),
            DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
        );
        let bundle = FluctuationBundle::build(&model, &path).unwrap();
        assert_eq!(bundle.n, 8);
        // v starts at zero, w starts at zero.
        assert_eq!(bundle.v_n.value(0)[0], 0.0);
        assert_eq!(bundle.w_n.value(0)[0], 0.0);
        // v = sqrt(n)(ref - scheme) node-wise.
        for j in 0..=bundle.x_ref.steps() {
            let expect = (8.0f64).sqrt() * (bundle.x_ref.value(j)[0] - bundle.x_n.value(j)[0]);
            assert_eq!(bundle.v_n.value(j)[0], expect);
        }
    }

    #[test]
    fn non_finite_coefficients_abort_with_step() {
        let g = grid(4, 1);
        let path = sample_brownian::<f64>(g, 1, Lineage::new(11, 4)).unwrap();
        let model = ModelSpec::new(
            1,
            vec![0.0],
            DriftSpec::Constant(vec![f64::INFINITY]),
            DiffusionSpec::Identity,
            0.9,
        )
        .unwrap();
        match euler_maruyama(&model, &path, 4) {
            Err(Error::NonFinite { step: 0, path: 4, .. }) => {}
            other => panic!("expected non-finite abort, got {other:?}"),
        }
    }
}
