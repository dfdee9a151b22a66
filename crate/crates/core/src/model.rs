//! Drift and diffusion coefficient presets.
//!
//! Drifts come in three regularity classes: smooth, a synthetic
//! Holder-`alpha` damped lacunary Fourier series, and a compactly supported
//! cusp profile with Sobolev regularity `(alpha, m)`. Diffusions are
//! uniformly elliptic diagonal fields with analytic first and second
//! derivatives.

use crate::{from_usize, lit, Error, Result, Scalar};

const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_9;
/// Coordinate phase offset for the lacunary series, in radians.
const COORD_PHASE: f64 = 1.234_567_890_1;

/// Regularity class a drift preset advertises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftClass {
    Smooth,
    Holder { alpha: f64 },
    Sobolev { alpha: f64, m: u32 },
}

/// Damped lacunary Fourier series, applied per coordinate.
///
/// Coordinate `l` evaluates to `sum_k c_k cos(2^k y + phi_k + l psi)` with
/// `c_k = amplitude * 2^(-alpha k) (1+k)^(-2)`; the polynomial damping places
/// the series in the closure of smooth functions under the Holder-`alpha`
/// norm.
#[derive(Debug, Clone)]
pub struct LacunarySeries<T> {
    alpha: T,
    coeffs: Vec<T>,
    cos_phi: Vec<T>,
    sin_phi: Vec<T>,
    cos_psi: T,
    sin_psi: T,
}

impl<T: Scalar> LacunarySeries<T> {
    pub const DEFAULT_TERMS: usize = 15;

    pub fn holder(alpha: T, amplitude: T, terms: usize) -> Result<Self> {
        if alpha <= T::zero() || alpha >= T::one() {
            return Err(Error::InvalidParameter(
                "lacunary series requires alpha in (0, 1)".into(),
            ));
        }
        let mut coeffs = Vec::with_capacity(terms);
        let mut cos_phi = Vec::with_capacity(terms);
        let mut sin_phi = Vec::with_capacity(terms);
        for k in 0..terms {
            let kf = from_usize::<T>(k);
            let decay = (-(alpha * kf) * lit::<T>(2.0).ln()).exp();
            let poly = (T::one() + kf).powi(-2);
            coeffs.push(amplitude * decay * poly);
            let phi = 2.0 * std::f64::consts::PI * ((k as f64 + 1.0) * GOLDEN_FRAC).fract();
            cos_phi.push(lit(phi.cos()));
            sin_phi.push(lit(phi.sin()));
        }
        Ok(LacunarySeries {
            alpha,
            coeffs,
            cos_phi,
            sin_phi,
            cos_psi: lit(COORD_PHASE.cos()),
            sin_psi: lit(COORD_PHASE.sin()),
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coeffs
    }

    /// Returns a copy with coefficient `k` multiplied by
    /// `exp(-(2^k delta)^2 / 2)`, the exact Gaussian mollification of the
    /// series. For `delta` so small that the damping rounds to one the
    /// undamped series comes back unchanged.
    pub fn mollified(&self, delta: T) -> Self {
        let mut out = self.clone();
        let mut freq = T::one();
        for c in out.coeffs.iter_mut() {
            let u = freq * delta;
            *c = *c * (-u * u / lit::<T>(2.0)).exp();
            freq = freq + freq;
        }
        out
    }

    /// Rotation `(cos(l psi), sin(l psi))` for coordinate `l`.
    #[inline]
    fn coord_rotation(&self, l: usize) -> (T, T) {
        let mut c = T::one();
        let mut s = T::zero();
        for _ in 0..l {
            let cn = c * self.cos_psi - s * self.sin_psi;
            s = c * self.sin_psi + s * self.cos_psi;
            c = cn;
        }
        (c, s)
    }

    /// Value of the scalar profile at `y` for coordinate `l`.
    ///
    /// Frequencies are doubled by the double-angle recurrence, so one
    /// `sin_cos` pair per call covers every term.
    #[inline]
    pub fn value(&self, y: T, l: usize) -> T {
        let (cl, sl) = self.coord_rotation(l);
        let mut c = y.cos();
        let mut s = y.sin();
        let mut acc = T::zero();
        for (k, &coef) in self.coeffs.iter().enumerate() {
            // cos(2^k y + phi_k + l psi)
            let cp = self.cos_phi[k] * cl - self.sin_phi[k] * sl;
            let sp = self.sin_phi[k] * cl + self.cos_phi[k] * sl;
            acc = acc + coef * (c * cp - s * sp);
            if k + 1 < self.coeffs.len() {
                let cn = c * c - s * s;
                s = (s + s) * c;
                c = cn;
            }
        }
        acc
    }

    /// Derivative of the scalar profile at `y` for coordinate `l`.
    #[inline]
    pub fn derivative(&self, y: T, l: usize) -> T {
        let (cl, sl) = self.coord_rotation(l);
        let mut c = y.cos();
        let mut s = y.sin();
        let mut freq = T::one();
        let mut acc = T::zero();
        for (k, &coef) in self.coeffs.iter().enumerate() {
            let cp = self.cos_phi[k] * cl - self.sin_phi[k] * sl;
            let sp = self.sin_phi[k] * cl + self.cos_phi[k] * sl;
            // d/dy cos(2^k y + .) = -2^k sin(2^k y + .)
            acc = acc - coef * freq * (s * cp + c * sp);
            freq = freq + freq;
            if k + 1 < self.coeffs.len() {
                let cn = c * c - s * s;
                s = (s + s) * c;
                c = cn;
            }
        }
        acc
    }
}

/// Compactly supported cusp profile `amplitude * env(y) |sin(freq y)|^alpha`.
///
/// `env` is the standard smooth bump on `[-radius, radius]`. The kinks of
/// `|sin|^alpha` give exactly Holder-`alpha` local behaviour, hence membership
/// in `W^alpha_m` for the advertised `(alpha, m)` while staying bounded.
#[derive(Debug, Clone)]
pub struct CuspBump<T> {
    pub alpha: T,
    pub sobolev_m: u32,
    pub amplitude: T,
    pub frequency: T,
    pub radius: T,
}

impl<T: Scalar> CuspBump<T> {
    pub fn new(alpha: T, sobolev_m: u32, amplitude: T) -> Result<Self> {
        if alpha <= T::zero() || alpha >= T::one() {
            return Err(Error::InvalidParameter(
                "cusp bump requires alpha in (0, 1)".into(),
            ));
        }
        Ok(CuspBump {
            alpha,
            sobolev_m,
            amplitude,
            frequency: lit(2.5),
            radius: lit(2.0),
        })
    }

    #[inline]
    fn envelope(&self, y: T) -> T {
        let u = y / self.radius;
        let u2 = u * u;
        if u2 >= T::one() {
            T::zero()
        } else {
            (T::one() - T::one() / (T::one() - u2)).exp()
        }
    }

    #[inline]
    fn envelope_derivative(&self, y: T) -> T {
        let u = y / self.radius;
        let u2 = u * u;
        if u2 >= T::one() {
            T::zero()
        } else {
            let den = T::one() - u2;
            let two = lit::<T>(2.0);
            self.envelope(y) * (-two * u / (den * den)) / self.radius
        }
    }

    #[inline]
    pub fn value(&self, y: T) -> T {
        let env = self.envelope(y);
        if env == T::zero() {
            return T::zero();
        }
        let s = (self.frequency * y).sin().abs();
        self.amplitude * env * s.powf(self.alpha)
    }

    /// Almost-everywhere derivative; unbounded near the cusps of
    /// `|sin|^alpha` and infinite exactly on them.
    #[inline]
    pub fn derivative(&self, y: T) -> T {
        let env = self.envelope(y);
        if env == T::zero() {
            return T::zero();
        }
        let arg = self.frequency * y;
        let (s, c) = (arg.sin(), arg.cos());
        let sa = s.abs().powf(self.alpha);
        let denv = self.envelope_derivative(y);
        let dcusp = self.alpha * self.frequency * s.abs().powf(self.alpha - T::one()) * c * s.signum();
        self.amplitude * (denv * sa + env * dcusp)
    }
}

/// Drift coefficient `b : R^d -> R^d`.
#[derive(Debug, Clone)]
pub enum DriftSpec<T> {
    Zero,
    /// `b(x) = c`.
    Constant(Vec<T>),
    /// `b(x) = A x` with `A` row-major `d x d`.
    Linear(Vec<T>),
    /// `b_l(x) = amplitude * tanh(x_l)`; smooth with bounded derivatives.
    SmoothTanh { amplitude: T },
    /// Synthetic Holder drift, the series applied per coordinate.
    Lacunary(LacunarySeries<T>),
    /// Synthetic Sobolev drift, the cusp profile applied per coordinate.
    SobolevBump(CuspBump<T>),
    /// Pointwise sum of two drifts.
    Sum(Box<DriftSpec<T>>, Box<DriftSpec<T>>),
}

impl<T: Scalar> DriftSpec<T> {
    pub fn smooth_tanh(amplitude: T) -> Self {
        DriftSpec::SmoothTanh { amplitude }
    }

    pub fn holder_lacunary(alpha: T, amplitude: T) -> Result<Self> {
        Ok(DriftSpec::Lacunary(LacunarySeries::holder(
            alpha,
            amplitude,
            LacunarySeries::<T>::DEFAULT_TERMS,
        )?))
    }

    pub fn sobolev_bump(alpha: T, m: u32, amplitude: T) -> Result<Self> {
        Ok(DriftSpec::SobolevBump(CuspBump::new(alpha, m, amplitude)?))
    }

    pub fn class(&self) -> DriftClass {
        match self {
            DriftSpec::Zero
            | DriftSpec::Constant(_)
            | DriftSpec::Linear(_)
            | DriftSpec::SmoothTanh { .. } => DriftClass::Smooth,
            DriftSpec::Lacunary(series) => DriftClass::Holder {
                alpha: series.alpha.to_f64().unwrap_or(f64::NAN),
            },
            DriftSpec::SobolevBump(bump) => DriftClass::Sobolev {
                alpha: bump.alpha.to_f64().unwrap_or(f64::NAN),
                m: bump.sobolev_m,
            },
            DriftSpec::Sum(a, b) => match (a.class(), b.class()) {
                (DriftClass::Holder { alpha: x }, DriftClass::Holder { alpha: y }) => {
                    DriftClass::Holder { alpha: x.min(y) }
                }
                (h @ DriftClass::Holder { .. }, _) | (_, h @ DriftClass::Holder { .. }) => h,
                (s @ DriftClass::Sobolev { .. }, _) | (_, s @ DriftClass::Sobolev { .. }) => s,
                _ => DriftClass::Smooth,
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            DriftSpec::Zero => "zero".into(),
            DriftSpec::Constant(_) => "constant".into(),
            DriftSpec::Linear(_) => "linear".into(),
            DriftSpec::SmoothTanh { .. } => "smooth-tanh".into(),
            DriftSpec::Lacunary(series) => format!(
                "holder-lacunary(alpha={})",
                series.alpha.to_f64().unwrap_or(f64::NAN)
            ),
            DriftSpec::SobolevBump(bump) => format!(
                "sobolev-bump(alpha={}, m={})",
                bump.alpha.to_f64().unwrap_or(f64::NAN),
                bump.sobolev_m
            ),
            DriftSpec::Sum(a, b) => format!("{} + {}", a.label(), b.label()),
        }
    }

    /// Whether [`DriftSpec::gradient`] is a classical derivative everywhere.
    pub fn has_classical_gradient(&self) -> bool {
        match self {
            DriftSpec::SobolevBump(_) => false,
            DriftSpec::Sum(a, b) => a.has_classical_gradient() && b.has_classical_gradient(),
            _ => true,
        }
    }

    /// `out[l] = b_l(x)`.
    #[inline]
    pub fn eval(&self, x: &[T], out: &mut [T]) {
        match self {
            DriftSpec::Zero => out.fill(T::zero()),
            DriftSpec::Constant(c) => out.copy_from_slice(c),
            DriftSpec::Linear(a) => {
                let d = x.len();
                for l in 0..d {
                    let row = &a[l * d..(l + 1) * d];
                    let mut acc = T::zero();
                    for (j, &xj) in x.iter().enumerate() {
                        acc = acc + row[j] * xj;
                    }
                    out[l] = acc;
                }
            }
            DriftSpec::SmoothTanh { amplitude } => {
                for (o, &xl) in out.iter_mut().zip(x) {
                    *o = *amplitude * xl.tanh();
                }
            }
            DriftSpec::Lacunary(series) => {
                for (l, (o, &xl)) in out.iter_mut().zip(x).enumerate() {
                    *o = series.value(xl, l);
                }
            }
            DriftSpec::SobolevBump(bump) => {
                for (o, &xl) in out.iter_mut().zip(x) {
                    *o = bump.value(xl);
                }
            }
            DriftSpec::Sum(a, b) => {
                a.eval(x, out);
                let mut tmp = vec![T::zero(); out.len()];
                b.eval(x, &mut tmp);
                for (o, t) in out.iter_mut().zip(tmp) {
                    *o = *o + t;
                }
            }
        }
    }

    /// `out[l * d + j] = d_j b_l(x)`, row-major `d x d`.
    ///
    /// For the cusp preset this is the almost-everywhere derivative; callers
    /// that need a classical gradient mollify first.
    #[inline]
    pub fn gradient(&self, x: &[T], out: &mut [T]) {
        let d = x.len();
        match self {
            DriftSpec::Zero | DriftSpec::Constant(_) => out.fill(T::zero()),
            DriftSpec::Linear(a) => out.copy_from_slice(a),
            DriftSpec::SmoothTanh { amplitude } => {
                out.fill(T::zero());
                for (l, &xl) in x.iter().enumerate() {
                    let t = xl.tanh();
                    out[l * d + l] = *amplitude * (T::one() - t * t);
                }
            }
            DriftSpec::Lacunary(series) => {
                out.fill(T::zero());
                for (l, &xl) in x.iter().enumerate() {
                    out[l * d + l] = series.derivative(xl, l);
                }
            }
            DriftSpec::SobolevBump(bump) => {
                out.fill(T::zero());
                for (l, &xl) in x.iter().enumerate() {
                    out[l * d + l] = bump.derivative(xl);
                }
            }
            DriftSpec::Sum(a, b) => {
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

/// Diffusion coefficient `sigma : R^d -> R^{d x d}`, uniformly elliptic.
#[derive(Debug, Clone)]
pub enum DiffusionSpec<T> {
    Identity,
    /// Diagonal with constant entries.
    ConstantDiag(Vec<T>),
    /// Diagonal with `sigma_ll(x) = base + amplitude * tanh(x_l)`;
    /// elliptic with `lambda = base - |amplitude|`.
    TanhDiag { base: T, amplitude: T },
}

impl<T: Scalar> DiffusionSpec<T> {
    pub fn tanh_diag(base: T, amplitude: T) -> Result<Self> {
        if base - amplitude.abs() <= T::zero() {
            return Err(Error::InvalidParameter(
                "tanh-diag diffusion requires base > |amplitude|".into(),
            ));
        }
        Ok(DiffusionSpec::TanhDiag { base, amplitude })
    }

    pub fn label(&self) -> &'static str {
        match self {
            DiffusionSpec::Identity => "identity",
            DiffusionSpec::ConstantDiag(_) => "constant-diag",
            DiffusionSpec::TanhDiag { .. } => "tanh-diag",
        }
    }

    /// Largest `lambda` with `|y* (sigma sigma*)(x) y| >= lambda^2 |y|^2`.
    pub fn ellipticity(&self) -> T {
        match self {
            DiffusionSpec::Identity => T::one(),
            DiffusionSpec::ConstantDiag(diag) => diag
                .iter()
                .fold(T::infinity(), |acc, &v| acc.min(v.abs())),
            DiffusionSpec::TanhDiag { base, amplitude } => *base - amplitude.abs(),
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, DiffusionSpec::TanhDiag { .. })
    }

    /// `out[l * d + i] = sigma_li(x)`, row-major `d x d`.
    #[inline]
    pub fn eval(&self, x: &[T], out: &mut [T]) {
        let d = x.len();
        out.fill(T::zero());
        match self {
            DiffusionSpec::Identity => {
                for l in 0..d {
                    out[l * d + l] = T::one();
                }
            }
            DiffusionSpec::ConstantDiag(diag) => {
                for l in 0..d {
                    out[l * d + l] = diag[l];
                }
            }
            DiffusionSpec::TanhDiag { base, amplitude } => {
                for (l, &xl) in x.iter().enumerate() {
                    out[l * d + l] = *base + *amplitude * xl.tanh();
                }
            }
        }
    }

    /// `out[(l * d + i) * d + j] = d_j sigma_li(x)`.
    #[inline]
    pub fn gradient(&self, x: &[T], out: &mut [T]) {
        let d = x.len();
        out.fill(T::zero());
        if let DiffusionSpec::TanhDiag { amplitude, .. } = self {
            for (l, &xl) in x.iter().enumerate() {
                let t = xl.tanh();
                out[(l * d + l) * d + l] = *amplitude * (T::one() - t * t);
            }
        }
    }

    /// Max-norm of the second derivative tensor at `x`.
    pub fn hessian_norm(&self, x: &[T]) -> T {
        match self {
            DiffusionSpec::TanhDiag { amplitude, .. } => x.iter().fold(T::zero(), |acc, &xl| {
                let t = xl.tanh();
                acc.max((lit::<T>(2.0) * *amplitude * t * (T::one() - t * t)).abs())
            }),
            _ => T::zero(),
        }
    }
}

/// Full coefficient set of one equation.
#[derive(Debug, Clone)]
pub struct ModelSpec<T> {
    pub dim: usize,
    pub x0: Vec<T>,
    pub drift: DriftSpec<T>,
    pub diffusion: DiffusionSpec<T>,
    pub lambda: T,
}

impl<T: Scalar> ModelSpec<T> {
    pub fn new(
        dim: usize,
        x0: Vec<T>,
        drift: DriftSpec<T>,
        diffusion: DiffusionSpec<T>,
        lambda: T,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if x0.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "x0 has length {}, expected {dim}",
                x0.len()
            )));
        }
        match &drift {
            DriftSpec::Constant(c) if c.len() != dim => {
                return Err(Error::InvalidParameter("constant drift length != dim".into()))
            }
            DriftSpec::Linear(a) if a.len() != dim * dim => {
                return Err(Error::InvalidParameter("linear drift matrix != dim^2".into()))
            }
            _ => {}
        }
        if let DiffusionSpec::ConstantDiag(diag) = &diffusion {
            if diag.len() != dim {
                return Err(Error::InvalidParameter(
                    "constant diffusion diagonal != dim".into(),
                ));
            }
        }
        if lambda <= T::zero() {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
        Ok(ModelSpec {
            dim,
            x0,
            drift,
            diffusion,
            lambda,
        })
    }

    /// Spot-checks ellipticity and coefficient bounds on a deterministic
    /// lattice of `(x, y)` pairs.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let lattice: Vec<T> = [-3.0, -1.5, 0.0, 0.7, 1.5, 3.0]
            .iter()
            .map(|&v| lit(v))
            .collect();
        let mut sigma = vec![T::zero(); d * d];
        let mut grad = vec![T::zero(); d * d * d];
        let mut x = vec![T::zero(); d];
        let big = lit::<T>(1e6);
        for (i, &v) in lattice.iter().enumerate() {
            // Diagonal sweep plus single-coordinate bumps.
            for probe in 0..=d {
                x.fill(v);
                if probe < d {
                    x[probe] = lattice[(i + 2) % lattice.len()];
                }
                self.diffusion.eval(&x, &mut sigma);
                self.diffusion.gradient(&x, &mut grad);
                if sigma.iter().any(|s| !s.is_finite() || s.abs() > big)
                    || grad.iter().any(|g| !g.is_finite() || g.abs() > big)
                    || !self.diffusion.hessian_norm(&x).is_finite()
                {
                    return Err(Error::InvalidParameter(
                        "diffusion or its derivatives unbounded on test lattice".into(),
                    ));
                }
                // y ranges over the unit coordinate vectors and the diagonal.
                for yi in 0..=d {
                    let mut y = vec![T::zero(); d];
                    if yi < d {
                        y[yi] = T::one();
                    } else {
                        let inv = (T::one() / from_usize::<T>(d)).sqrt();
                        y.fill(inv);
                    }
                    // |y* sigma sigma* y| = |sigma* y|^2
                    let mut quad = T::zero();
                    for k in 0..d {
                        let mut dot = T::zero();
                        for l in 0..d {
                            dot = dot + sigma[l * d + k] * y[l];
                        }
                        quad = quad + dot * dot;
                    }
                    let y2 = y.iter().fold(T::zero(), |acc, &c| acc + c * c);
                    if quad < self.lambda * self.lambda * y2 {
                        return Err(Error::InvalidParameter(format!(
                            "ellipticity violated at lattice point ({quad} < lambda^2)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn drift_class(&self) -> DriftClass {
        self.drift.class()
    }
}

/// Scalar test function `f : R^d -> R` for the quadrature experiments;
/// applied to the first coordinate.
#[derive(Debug, Clone)]
pub enum ScalarFieldSpec<T> {
    Constant(T),
    /// `f(x) = amplitude cos(frequency x_1)`; any `C^2` bound holds.
    SmoothCos { amplitude: T, frequency: T },
    /// Holder-`alpha` lacunary profile.
    Lacunary(LacunarySeries<T>),
    /// Compactly supported Sobolev cusp profile.
    SobolevCusp(CuspBump<T>),
}

impl<T: Scalar> ScalarFieldSpec<T> {
    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        match self {
            ScalarFieldSpec::Constant(c) => *c,
            ScalarFieldSpec::SmoothCos {
                amplitude,
                frequency,
            } => *amplitude * (*frequency * x[0]).cos(),
            ScalarFieldSpec::Lacunary(series) => series.value(x[0], 0),
            ScalarFieldSpec::SobolevCusp(bump) => bump.value(x[0]),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarFieldSpec::Constant(_))
    }

    pub fn label(&self) -> String {
        match self {
            ScalarFieldSpec::Constant(_) => "constant".into(),
            ScalarFieldSpec::SmoothCos { .. } => "smooth-cos".into(),
            ScalarFieldSpec::Lacunary(series) => {
                format!("holder-lacunary(alpha={})", series.alpha())
            }
            ScalarFieldSpec::SobolevCusp(bump) => {
                format!("sobolev-bump(alpha={}, m={})", bump.alpha, bump.sobolev_m)
            }
        }
    }
}
