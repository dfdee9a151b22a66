//! Simulation toolkit for Euler-Maruyama discretisation error: coupled
//! coarse/fine scheme paths, the rescaled fluctuation process and its
//! limiting hybrid Young-Ito dynamics, a Zvonkin-transformed variant for
//! rough drifts, and a Monte Carlo statistics harness for rate and
//! distributional-convergence experiments.
//!
//! Numerics are generic over the scalar type via [`Scalar`]; experiments
//! and the CLI instantiate everything at [`Real`] (`f64`).

pub mod analysis;
pub mod averaging;
pub mod error;
pub mod limit_holder;
pub mod model;
pub mod paths;
pub mod rng;
pub mod scheme;
pub mod zvonkin;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};

/// Floating-point scalar the numerical kernels are generic over.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::FloatConst
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + num_traits::FloatConst
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Default scalar used by the experiment harness and CLI.
pub type Real = f64;

/// Single-precision alias for callers that trade accuracy for speed.
pub type Real32 = f32;

pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

pub(crate) fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in scalar type")
}
