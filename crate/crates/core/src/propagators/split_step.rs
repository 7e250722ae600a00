use num_complex::Complex;

use super::{unit_phases, Kinetic, Propagator};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Real;

/// Strang splitting `e^{-iτV/2} e^{-iτω(D)} e^{-iτV/2}` for `H = ω(D) + V`.
///
/// `evolve(f, t)` takes `⌊t/dt⌋` full steps and one shorter final step.
/// Negative times run the mirrored sequence, so `evolve(·, -t)` is the exact
/// inverse of `evolve(·, t)` up to rounding.
#[derive(Clone, Debug)]
pub struct SplitStep<T: Real> {
    grid: Grid<T>,
    potential: Vec<T>,
    symbol: Vec<T>,
    dt: T,
    half_potential: Vec<Complex<T>>,
    kinetic_step: Vec<Complex<T>>,
}

impl<T: Real> SplitStep<T> {
    pub fn new(grid: &Grid<T>, potential: Vec<T>, dt: T) -> Result<Self> {
        Self::with_kinetic(grid, potential, dt, Kinetic::Exact)
    }

    pub fn with_kinetic(
        grid: &Grid<T>,
        potential: Vec<T>,
        dt: T,
        kinetic: Kinetic,
    ) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::StepSize(format!("dt must be positive, got {dt}")));
        }
        if potential.len() != grid.n_points() {
            return Err(Error::TableLength {
                got: potential.len(),
                expected: grid.n_points(),
            });
        }
        let symbol = kinetic.symbol(grid);
        let half_potential = unit_phases(&potential, dt / T::of(2.0));
        let kinetic_step = unit_phases(&symbol, dt);
        Ok(Self {
            grid: grid.clone(),
            potential,
            symbol,
            dt,
            half_potential,
            kinetic_step,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn potential(&self) -> &[T] {
        &self.potential
    }

    /// `dt · max|V| ≤ 1/2`.
    pub fn cfl_ok(&self) -> bool {
        let vmax = self.potential.iter().fold(T::zero(), |m, v| m.max(v.mag()));
        self.dt * vmax <= T::of(0.5)
    }

    fn step_with(&self, u: &mut Field<T>, half: &[Complex<T>], kin: &[Complex<T>]) {
        u.multiply_complex_mut(half);
        u.apply_multiplier_mut(kin);
        u.multiply_complex_mut(half);
    }

    fn step_len(&self, u: &mut Field<T>, tau: T) {
        let half = unit_phases(&self.potential, tau / T::of(2.0));
        let kin = unit_phases(&self.symbol, tau);
        self.step_with(u, &half, &kin);
    }

    fn run(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let (n_full, rem) = split_time(t.mag(), self.dt);
        let mut u = f.clone();
        if t >= T::zero() {
            for _ in 0..n_full {
                self.step_with(&mut u, &self.half_potential, &self.kinetic_step);
            }
            if rem > T::zero() {
                self.step_len(&mut u, rem);
            }
        } else {
            if rem > T::zero() {
                self.step_len(&mut u, -rem);
            }
            let half: Vec<_> = self.half_potential.iter().map(|c| c.conj()).collect();
            let kin: Vec<_> = self.kinetic_step.iter().map(|c| c.conj()).collect();
            for _ in 0..n_full {
                self.step_with(&mut u, &half, &kin);
            }
        }
        Ok(u)
    }
}

/// `(⌊t/dt⌋, t - ⌊t/dt⌋·dt)` with a remainder below `10⁻¹⁰·dt` dropped.
pub(crate) fn split_time<T: Real>(t: T, dt: T) -> (usize, T) {
    let ratio = t / dt;
    let mut n = ratio.floor();
    let mut rem = t - n * dt;
    if rem > dt * (T::one() - T::of(1e-10)) {
        n += T::one();
        rem = T::zero();
    }
    if rem < dt * T::of(1e-10) {
        rem = T::zero();
    }
    (n.f64().max(0.0) as usize, rem.max(T::zero()))
}

impl<T: Real> Propagator<T> for SplitStep<T> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        self.run(f, t)
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        self.run(f, -t)
    }
}

/// One-shot split-step evolution with the exact kinetic symbol.
pub fn split_step_evolve<T: Real>(f: &Field<T>, potential: &[T], t: T, dt: T) -> Result<Field<T>> {
    SplitStep::new(f.grid(), potential.to_vec(), dt)?.evolve(f, t)
}
