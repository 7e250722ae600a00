//! Numerical laboratory for wave operators on Sobolev spaces.
//!
//! Everything lives on a one-dimensional periodic grid. The free operator
//! `H_0 = -d²/dx²` is a Fourier multiplier, the interacting operator `H` is a
//! dense Hermitian matrix whose eigendecomposition provides the functional
//! calculus, and the dynamics are spectral (free, Dollard-modified) or
//! split-step / Crank–Nicolson / matrix-exact for `e^{-itH}`.
//!
//! The numerical core is generic over the scalar type through [`Real`];
//! [`f64`] is what the experiment runner uses and the `*64` aliases below
//! name the common instantiations.

pub mod cutoff;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod grid;
pub mod nls;
pub mod operator_lab;
pub mod potentials;
pub mod propagators;
pub mod quadrature;
pub mod scalar;
pub mod wave_ops;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Spectrum};
pub use operator_lab::{HermitianOperator, Scheme};
pub use potentials::PotentialSpec;
pub use propagators::{Kinetic, Propagator};
pub use scalar::Real;
pub use wave_ops::{ConvergenceReport, Schedule, Verdict};

pub use num_complex::Complex;

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type Spectrum64 = Spectrum<f64>;
pub type Operator64 = HermitianOperator<f64>;
pub type Complex64 = Complex<f64>;

pub type Grid32 = Grid<f32>;
pub type Field32 = Field<f32>;
