//! Dynamics: exact free evolution, Dollard-modified free evolution, Strang
//! split-step and Crank–Nicolson for `e^{-itH}`, and matrix-exact
//! propagation through [`HermitianOperator`].

mod crank_nicolson;
mod dollard;
mod split_step;

pub use crank_nicolson::{crank_nicolson_delta_evolve, CrankNicolson};
pub use dollard::{
    build_dollard_phase, dollard_evolve, ConstantProfile, DollardDynamics, DollardPhase,
    LongRangeProfile, PowerTail, ResidualSample, DIAGNOSTIC_XI,
};
pub use split_step::{split_step_evolve, SplitStep};

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operator_lab::{build_hamiltonian, HermitianOperator, Scheme};
use crate::potentials::PotentialSpec;
use crate::scalar::{polar, Real};

/// A unitary family `U(t)` acting on fields.
pub trait Propagator<T: Real>: Send + Sync {
    /// `U(t) f`.
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>>;
    /// `U(t)* f`.
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>>;
}

impl<T: Real, P: Propagator<T> + ?Sized> Propagator<T> for Arc<P> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        (**self).evolve(f, t)
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        (**self).evolve_adjoint(f, t)
    }
}

impl<T: Real, P: Propagator<T> + ?Sized> Propagator<T> for Box<P> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        (**self).evolve(f, t)
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        (**self).evolve_adjoint(f, t)
    }
}

impl<T: Real> Propagator<T> for HermitianOperator<T> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        self.propagate(f, t)
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        self.propagate(f, -t)
    }
}

/// Kinetic symbol `ω(ξ)` of the free operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kinetic {
    /// `ξ²`.
    #[default]
    Exact,
    /// `(2 - 2cos(ξh))/h²`, the symbol of the periodic three-point Laplacian.
    Fd2,
}

impl Kinetic {
    pub fn symbol<T: Real>(&self, grid: &Grid<T>) -> Vec<T> {
        let h = grid.spacing();
        grid.frequencies()
            .iter()
            .map(|&xi| match self {
                Kinetic::Exact => xi * xi,
                Kinetic::Fd2 => (T::of(2.0) - T::of(2.0) * (xi * h).cos()) / (h * h),
            })
            .collect()
    }
}

/// `e^{-itω(D)}`: diagonal in frequency, hence commuting with `⟨H_0⟩^{s/2}`.
#[derive(Clone, Debug)]
pub struct FreeDynamics<T: Real> {
    kinetic: Kinetic,
    symbol: Vec<T>,
}

impl<T: Real> FreeDynamics<T> {
    pub fn new(grid: &Grid<T>, kinetic: Kinetic) -> Self {
        Self {
            kinetic,
            symbol: kinetic.symbol(grid),
        }
    }

    pub fn exact(grid: &Grid<T>) -> Self {
        Self::new(grid, Kinetic::Exact)
    }

    pub fn kinetic(&self) -> Kinetic {
        self.kinetic
    }

    pub fn symbol(&self) -> &[T] {
        &self.symbol
    }

    /// `g(H_0) f` for the kinetic symbol.
    pub fn apply_function(&self, g: impl Fn(T) -> T, f: &Field<T>) -> Field<T> {
        let m: Vec<T> = self.symbol.iter().map(|&w| g(w)).collect();
        f.apply_real_multiplier(&m)
    }
}

impl<T: Real> Propagator<T> for FreeDynamics<T> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        if t == T::zero() {
            return Ok(f.clone());
        }
        Ok(f.apply_phase(&self.symbol, t))
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        self.evolve(f, -t)
    }
}

/// `e^{-itH_0} f` with the exact symbol `ξ²`.
pub fn free_evolve<T: Real>(f: &Field<T>, t: T) -> Field<T> {
    let symbol = Kinetic::Exact.symbol(f.grid());
    f.apply_phase(&symbol, t)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Forward,
    /// Swaps `U(t)` and `U(t)*`.
    Adjoint,
}

/// Applies a [`Direction`] to any propagator.
pub struct Directed<P> {
    pub inner: P,
    pub direction: Direction,
}

impl<T: Real, P: Propagator<T>> Propagator<T> for Directed<P> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        match self.direction {
            Direction::Forward => self.inner.evolve(f, t),
            Direction::Adjoint => self.inner.evolve_adjoint(f, t),
        }
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        match self.direction {
            Direction::Forward => self.inner.evolve_adjoint(f, t),
            Direction::Adjoint => self.inner.evolve(f, t),
        }
    }
}

/// How `e^{-itH}` is computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Stepper {
    SplitStep { dt: f64 },
    CrankNicolson { dt: f64 },
    MatrixExact,
}

/// Declarative description of a dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DynamicsSpec {
    /// `kinetic` left unset follows the scheme of the interacting dynamics
    /// it is paired with (exact when built alone).
    Free {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kinetic: Option<Kinetic>,
    },
    Dollard {
        potential: PotentialSpec,
        #[serde(default)]
        t_ref: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kinetic: Option<Kinetic>,
    },
    Full {
        potential: PotentialSpec,
        stepper: Stepper,
        scheme: Scheme,
    },
}

impl DynamicsSpec {
    /// Builds the runtime propagator. `horizon` bounds the times used (it
    /// sizes the Dollard diagnostics).
    pub fn build<T: Real>(&self, grid: &Grid<T>, horizon: T) -> Result<Arc<dyn Propagator<T>>> {
        Ok(match self {
            DynamicsSpec::Free { kinetic } => {
                Arc::new(FreeDynamics::new(grid, kinetic.unwrap_or_default()))
            }
            DynamicsSpec::Dollard {
                potential,
                t_ref,
                kinetic,
            } => {
                let phase = build_dollard_phase(potential, horizon, grid, T::of(*t_ref))?;
                Arc::new(DollardDynamics::with_kinetic(
                    phase,
                    kinetic.unwrap_or_default(),
                ))
            }
            DynamicsSpec::Full {
                potential,
                stepper,
                scheme,
            } => {
                let scheme = resolve_scheme(potential, *scheme)?;
                let v = potential.sample(grid)?;
                match stepper {
                    Stepper::MatrixExact => Arc::new(build_hamiltonian(grid, scheme, &v)?),
                    Stepper::SplitStep { dt } => {
                        if scheme != Scheme::Spectral {
                            return Err(Error::Config(
                                "split-step requires the spectral scheme".into(),
                            ));
                        }
                        Arc::new(SplitStep::new(grid, v, T::of(*dt))?)
                    }
                    Stepper::CrankNicolson { dt } => {
                        let alpha = match scheme {
                            Scheme::Fd2Delta { alpha } => alpha,
                            Scheme::Fd2 => 0.0,
                            Scheme::Spectral => {
                                return Err(Error::Config(
                                    "crank-nicolson requires an fd2 scheme".into(),
                                ))
                            }
                        };
                        Arc::new(CrankNicolson::new(grid, T::of(alpha), &v, T::of(*dt))?)
                    }
                }
            }
        })
    }
}

impl DynamicsSpec {
    /// Fills an unset free kinetic symbol with `kinetic`.
    pub fn with_default_kinetic(&self, kinetic: Kinetic) -> DynamicsSpec {
        let mut out = self.clone();
        match &mut out {
            DynamicsSpec::Free { kinetic: k } | DynamicsSpec::Dollard { kinetic: k, .. } => {
                k.get_or_insert(kinetic);
            }
            DynamicsSpec::Full { .. } => {}
        }
        out
    }
}

/// The scheme actually used for `potential`: a point interaction turns any
/// `fd2` scheme into `fd2-delta` with its strength.
pub fn resolve_scheme(potential: &PotentialSpec, scheme: Scheme) -> Result<Scheme> {
    match (potential.point_alpha(), scheme) {
        (Some(alpha), Scheme::Fd2 | Scheme::Fd2Delta { .. }) => Ok(Scheme::Fd2Delta { alpha }),
        (Some(_), Scheme::Spectral) => Err(Error::Config(
            "point interaction requires scheme = \"fd2-delta\"".into(),
        )),
        (None, s) => Ok(s),
    }
}

/// Mass fraction in `|x| > (1 - margin)·L/2`.
pub fn boundary_mass_monitor<T: Real>(f: &Field<T>, margin_fraction: T) -> T {
    let total = f.norm_sqr();
    if total == T::zero() {
        return T::zero();
    }
    let radius = (T::one() - margin_fraction) * f.grid().length() / T::of(2.0);
    f.mass_outside(radius) / total
}

/// Threshold above which the boundary monitor flags a run.
pub const BOUNDARY_TRIP: f64 = 1e-6;
/// Margin used by the experiment pipeline.
pub const BOUNDARY_MARGIN: f64 = 0.1;

/// Minimal domain length for data of support radius `radius`, band `band`,
/// run to time `horizon` (group velocity `2ξ`).
pub fn required_length(radius: f64, band: f64, horizon: f64) -> f64 {
    2.0 * radius + 4.0 * band * horizon
}

/// Default step `min(0.1 / max|V|, 0.01)`.
pub fn default_dt(max_abs_potential: f64) -> f64 {
    if max_abs_potential > 0.0 {
        (0.1 / max_abs_potential).min(0.01)
    } else {
        0.01
    }
}

pub(crate) fn unit_phases<T: Real>(values: &[T], scale: T) -> Vec<Complex<T>> {
    values
        .iter()
        .map(|&v| polar(T::one(), -scale * v))
        .collect()
}
