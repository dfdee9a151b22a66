//! Nested time grids and seed-reproducible Brownian paths.
//!
//! A [`TimeGrid`] couples a coarse grid of `n` steps on `[0, 1]` with a fine
//! refinement of `n * refinement` steps. Brownian paths are stored as fine
//! increments so that coarsening is an exact sum and the terminal value is
//! preserved bit-for-bit.

use crate::rng::{Lineage, PathRng};
use crate::{from_usize, Error, Result, Scalar};

/// Strided binary-tree sum over `count` increments starting at `start`.
///
/// Coarsening group sums and terminal values share this fixed tree, so
/// power-of-two coarsenings compose exactly and preserve the terminal value
/// bit for bit.
fn tree_sum<T: Scalar>(inc: &[T], start: usize, count: usize, coord: usize, d: usize) -> T {
    if count == 1 {
        inc[start * d + coord]
    } else {
        let half = count / 2;
        tree_sum(inc, start, half, coord, d) + tree_sum(inc, start + half, count - half, coord, d)
    }
}

/// Coarse/fine grid pair on the unit time horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    n: usize,
    refinement: usize,
}

impl TimeGrid {
    /// Largest admissible fine step count; keeps node indices exactly
    /// representable in every supported scalar type.
    const MAX_FINE: usize = 1 << 40;

    pub fn new(n: usize, refinement: usize) -> Result<Self> {
        if n == 0 || refinement == 0 {
            return Err(Error::InvalidParameter(
                "grid requires n >= 1 and refinement >= 1".into(),
            ));
        }
        match n.checked_mul(refinement) {
            Some(fine) if fine <= Self::MAX_FINE => Ok(TimeGrid { n, refinement }),
            _ => Err(Error::GridOverflow { n, refinement }),
        }
    }

    /// Coarse step count (the scheme's `n`).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Fine steps per coarse step.
    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn fine_steps(&self) -> usize {
        self.n * self.refinement
    }

    pub fn fine_dt<T: Scalar>(&self) -> T {
        T::one() / from_usize(self.fine_steps())
    }

    /// Time of fine node `j`.
    pub fn fine_time<T: Scalar>(&self, j: usize) -> T {
        from_usize::<T>(j) / from_usize(self.fine_steps())
    }

    /// Fine index of the most recent coarse node, i.e. the node carrying
    /// `floor(n t) / n` for `t` the time of fine node `j`.
    pub fn kappa_fine_index(&self, j: usize) -> usize {
        (j / self.refinement) * self.refinement
    }

    /// Fine index of an exact time fraction `num/den`; the fraction must land
    /// on a fine node.
    pub fn fine_index_of(&self, num: usize, den: usize) -> Result<usize> {
        let steps = self.fine_steps();
        if den == 0 || (num * steps) % den != 0 {
            return Err(Error::GridMismatch(format!(
                "{num}/{den} is not a node of the {steps}-step fine grid"
            )));
        }
        Ok(num * steps / den)
    }
}

/// Brownian increments on the fine grid of a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct BrownianPath<T> {
    grid: TimeGrid,
    dim: usize,
    lineage: Lineage,
    /// `fine_steps * dim` increments, laid out step-major.
    increments: Vec<T>,
}

impl<T: Scalar> BrownianPath<T> {
    /// Wraps externally supplied increments (deterministic replay, synthetic
    /// test paths). The increment count must match the fine grid.
    pub fn from_increments(
        grid: TimeGrid,
        dim: usize,
        lineage: Lineage,
        increments: Vec<T>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if increments.len() != grid.fine_steps() * dim {
            return Err(Error::GridMismatch(format!(
                "{} increments for a {}-step grid of dimension {dim}",
                increments.len(),
                grid.fine_steps()
            )));
        }
        Ok(BrownianPath {
            grid,
            dim,
            lineage,
            increments,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lineage(&self) -> Lineage {
        self.lineage
    }

    pub fn steps(&self) -> usize {
        self.grid.fine_steps()
    }

    pub fn increment(&self, j: usize) -> &[T] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// Cumulative values `B_{t_0}, ..., B_{t_N}` with `B_0 = 0`, flattened
    /// node-major.
    pub fn cumulative(&self) -> Vec<T> {
        let d = self.dim;
        let mut values = vec![T::zero(); (self.steps() + 1) * d];
        for j in 0..self.steps() {
            for c in 0..d {
                values[(j + 1) * d + c] = values[j * d + c] + self.increments[j * d + c];
            }
        }
        values
    }

    pub fn terminal(&self) -> Vec<T> {
        let d = self.dim;
        (0..d)
            .map(|c| tree_sum(&self.increments, 0, self.steps(), c, d))
            .collect()
    }
}

/// Draws the `n * refinement` Gaussian increment vectors of one path.
///
/// The same lineage always reproduces the same increments; draws are consumed
/// in step-major, coordinate-minor order.
pub fn sample_brownian<T: Scalar>(
    grid: TimeGrid,
    dim: usize,
    lineage: Lineage,
) -> Result<BrownianPath<T>> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let steps = grid.fine_steps();
    steps
        .checked_mul(dim)
        .filter(|&len| len <= TimeGrid::MAX_FINE)
        .ok_or(Error::GridOverflow {
            n: grid.n(),
            refinement: grid.refinement(),
        })?;
    let sqrt_dt = grid.fine_dt::<T>().sqrt();
    let mut rng = PathRng::new(lineage);
    let mut increments = Vec::with_capacity(steps * dim);
    for _ in 0..steps * dim {
        increments.push(crate::lit::<T>(rng.standard_normal()) * sqrt_dt);
    }
    Ok(BrownianPath {
        grid,
        dim,
        lineage,
        increments,
    })
}

/// Sums consecutive groups of `factor` increments; values at surviving nodes
/// are unchanged.
pub fn coarsen<T: Scalar>(path: &BrownianPath<T>, factor: usize) -> Result<BrownianPath<T>> {
    let steps = path.steps();
    if factor == 0 || steps % factor != 0 {
        return Err(Error::NonDivisorFactor { factor, steps });
    }
    if factor == 1 {
        return Ok(path.clone());
    }
    let d = path.dim;
    let out_steps = steps / factor;
    let mut increments = vec![T::zero(); out_steps * d];
    for j in 0..out_steps {
        for c in 0..d {
            increments[j * d + c] = tree_sum(&path.increments, j * factor, factor, c, d);
        }
    }
    // The coarse structure survives when the factor divides the refinement;
    // otherwise the coarsened path is its own coarsest level.
    let grid = if path.grid.refinement() % factor == 0 {
        TimeGrid::new(path.grid.n(), path.grid.refinement() / factor)?
    } else {
        TimeGrid::new(out_steps, 1)?
    };
    Ok(BrownianPath {
        grid,
        dim: d,
        lineage: path.lineage,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, m: usize) -> TimeGrid {
        TimeGrid::new(n, m).unwrap()
    }

    #[test]
    fn kappa_lands_on_coarse_nodes() {
        let g = grid(4, 8);
        for j in 0..g.fine_steps() {
            let k = g.kappa_fine_index(j);
            assert_eq!(k % g.refinement(), 0);
            assert!(k <= j && j - k < g.refinement());
        }
        assert_eq!(g.fine_index_of(1, 2).unwrap(), 16);
        assert!(g.fine_index_of(1, 3).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = grid(2, 2);
        let a = sample_brownian::<f64>(g, 1, Lineage::new(7, 0)).unwrap();
        let b = sample_brownian::<f64>(g, 1, Lineage::new(7, 0)).unwrap();
        assert_eq!(a.increments(), b.increments());
        assert_eq!(a.increments().len(), 4);
    }

    #[test]
    fn single_step_shape() {
        let p = sample_brownian::<f64>(grid(1, 1), 3, Lineage::new(5, 9)).unwrap();
        assert_eq!(p.steps(), 1);
        assert_eq!(p.increment(0).len(), 3);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            sample_brownian::<f64>(grid(2, 2), 0, Lineage::new(0, 0)),
            Err(Error::ZeroDimension)
        ));
    }

    #[test]
    fn coarsen_identity_and_pairs() {
        let p = sample_brownian::<f64>(grid(2, 2), 1, Lineage::new(3, 1)).unwrap();
        let id = coarsen(&p, 1).unwrap();
        assert_eq!(id.increments(), p.increments());

        let c = coarsen(&p, 2).unwrap();
        let inc = p.increments();
        assert_eq!(c.increments(), &[inc[0] + inc[1], inc[2] + inc[3]]);
        assert!(coarsen(&p, 3).is_err());
    }

    #[test]
    fn coarsen_composes_and_preserves_terminal() {
        let p = sample_brownian::<f64>(grid(4, 4), 2, Lineage::new(11, 2)).unwrap();
        let twice = coarsen(&coarsen(&p, 2).unwrap(), 2).unwrap();
        let once = coarsen(&p, 4).unwrap();
        assert_eq!(twice.increments(), once.increments());
        assert_eq!(p.terminal(), once.terminal());
    }

    #[test]
    fn terminal_variance_matches_unit_time() {
        // Sample-moment oracle: Var(B_1) = 1, SE ~ sqrt(2/N) so 1 +/- 0.02
        // is a 4.5-sigma band at N = 1e5.
        let g = grid(4, 2);
        let n_paths = 100_000u64;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..n_paths {
            let b1 = sample_brownian::<f64>(g, 1, Lineage::new(2026, i))
                .unwrap()
                .terminal()[0];
            sum += b1;
            sum2 += b1 * b1;
        }
        let nf = n_paths as f64;
        let var = sum2 / nf - (sum / nf).powi(2);
        assert!((var - 1.0).abs() < 0.02, "Var(B_1) = {var}");
    }

    #[test]
    fn increment_moments_are_gaussian() {
        // Mean 0 and covariance h I at 4 SE; fourth moment 3 h^2 at 5 SE.
        let g = grid(2, 2);
        let h = g.fine_dt::<f64>();
        let n_paths = 100_000u64;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        let mut cross = 0.0;
        let mut count = 0.0f64;
        for i in 0..n_paths {
            let p = sample_brownian::<f64>(g, 2, Lineage::new(99, i)).unwrap();
            let inc = p.increment(1);
            m1 += inc[0];
            m2 += inc[0] * inc[0];
            m4 += inc[0].powi(4);
            cross += inc[0] * inc[1];
            count += 1.0;
        }
        let se1 = h.sqrt() / count.sqrt();
        let se2 = (2.0f64 / count).sqrt() * h;
        let se4 = (96.0f64 / count).sqrt() * h * h;
        assert!((m1 / count).abs() < 4.0 * se1);
        assert!((m2 / count - h).abs() < 4.0 * se2);
        assert!((cross / count).abs() < 4.0 * se2);
        assert!((m4 / count - 3.0 * h * h).abs() < 5.0 * se4);
    }

    #[test]
    fn f32_instantiation() {
        let p = sample_brownian::<f32>(grid(2, 2), 1, Lineage::new(7, 0)).unwrap();
        let q = sample_brownian::<f64>(grid(2, 2), 1, Lineage::new(7, 0)).unwrap();
        for (a, b) in p.increments().iter().zip(q.increments()) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }
}
