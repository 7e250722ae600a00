//! Dollard-modified free dynamics `e^{-iS(t,D)}` with
//! `S(t,ξ) = tω(ξ) + ∫_{t_ref}^t V^L(σ ω'(ξ)) dσ`.
//!
//! For `ω = ξ²` this is the classical `t|ξ|² + ∫ V^L(2σξ) dσ`. It solves the
//! Hamilton–Jacobi equation `∂_t S = |ξ|² + V^L(∂_ξ S)` only approximately;
//! [`DollardPhase::residual`] measures by how much.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Kinetic, Propagator};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::potentials::PotentialSpec;
use crate::quadrature::{geometric_breakpoints, integrate, QuadratureRecord};
use crate::scalar::Real;

/// Even long-range tail `V^L` with its derivative.
pub trait LongRangeProfile<T: Real>: Send + Sync + std::fmt::Debug {
    fn value(&self, x: T) -> T;
    fn derivative(&self, x: T) -> T;
}

/// `-Z ⟨x⟩^{-μ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerTail<T> {
    pub charge: T,
    pub mu: T,
}

impl<T: Real> LongRangeProfile<T> for PowerTail<T> {
    fn value(&self, x: T) -> T {
        -self.charge * (T::one() + x * x).powf(-self.mu / T::of(2.0))
    }
    fn derivative(&self, x: T) -> T {
        self.charge * self.mu * x * (T::one() + x * x).powf(-self.mu / T::of(2.0) - T::one())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantProfile<T>(pub T);

impl<T: Real> LongRangeProfile<T> for ConstantProfile<T> {
    fn value(&self, _x: T) -> T {
        self.0
    }
    fn derivative(&self, _x: T) -> T {
        T::zero()
    }
}

/// One entry of the Hamilton–Jacobi residual diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub t: f64,
    pub xi: f64,
    pub residual: f64,
}

/// Aggregate over many quadratures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSummary {
    pub integrals: usize,
    pub evaluations: usize,
    pub max_error_estimate: f64,
}

impl QuadratureSummary {
    fn add(&mut self, r: &QuadratureRecord) {
        self.integrals += 1;
        self.evaluations += r.evaluations;
        self.max_error_estimate = self.max_error_estimate.max(r.error_estimate);
    }
}

#[derive(Clone, Debug)]
pub struct DollardPhase<T: Real> {
    grid: Grid<T>,
    profile: Arc<dyn LongRangeProfile<T>>,
    t_ref: T,
    t_max: T,
    /// `(t, S(t, ξ_k))` for `t = t_max·2^{-j}`, `j = 0..4`, exact kinetic.
    pub table: Vec<(T, Vec<T>)>,
    pub residuals: Vec<ResidualSample>,
    pub quadrature: QuadratureSummary,
    /// `(Z, μ)` when built from a power tail.
    pub parameters: Option<(f64, f64)>,
}

/// Diagnostic frequencies for the residual.
pub const DIAGNOSTIC_XI: [f64; 3] = [0.5, 1.0, 2.0];

fn tolerance<T: Real>() -> T {
    (T::eps() * T::of(64.0)).max(T::of(1e-12))
}

impl<T: Real> DollardPhase<T> {
    pub fn from_profile(
        grid: &Grid<T>,
        profile: Arc<dyn LongRangeProfile<T>>,
        t_ref: T,
        t_max: T,
    ) -> Result<Self> {
        if t_ref < T::zero() || !t_ref.is_finite() {
            return Err(Error::Config(format!("t_ref must be ≥ 0, got {t_ref}")));
        }
        if !(t_max >= T::zero()) || !t_max.is_finite() {
            return Err(Error::Config(format!("t_max must be ≥ 0, got {t_max}")));
        }
        let mut phase = Self {
            grid: grid.clone(),
            profile,
            t_ref,
            t_max,
            table: Vec::new(),
            residuals: Vec::new(),
            quadrature: QuadratureSummary::default(),
            parameters: None,
        };
        let mut summary = QuadratureSummary::default();
        let mut table = Vec::new();
        let mut t = t_max;
        for _ in 0..4 {
            if t <= T::zero() {
                break;
            }
            table.push((t, phase.phase_recorded(t, Kinetic::Exact, &mut summary)?));
            t /= T::of(2.0);
        }
        let mut residuals = Vec::new();
        let mut t = t_max;
        for _ in 0..4 {
            if t <= t_ref || t <= T::zero() {
                break;
            }
            for &xi in &DIAGNOSTIC_XI {
                let r = phase.residual_recorded(t, T::of(xi), &mut summary)?;
                residuals.push(ResidualSample {
                    t: t.f64(),
                    xi,
                    residual: r.f64(),
                });
            }
            t /= T::of(2.0);
        }
        phase.table = table;
        phase.residuals = residuals;
        phase.quadrature = summary;
        Ok(phase)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn t_ref(&self) -> T {
        self.t_ref
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    pub fn profile(&self) -> &dyn LongRangeProfile<T> {
        self.profile.as_ref()
    }

    /// `∫_{t_ref}^{t} V(σ v) dσ` for `t ≥ 0`, odd extension to `t < 0`.
    fn modifier(&self, t: T, speed: T, summary: &mut QuadratureSummary) -> Result<T> {
        let sgn = t.sign();
        let t = t.mag();
        if t <= self.t_ref {
            return Ok(T::zero());
        }
        let v = speed.mag();
        if v == T::zero() {
            return Ok(sgn * self.profile.value(T::zero()) * (t - self.t_ref));
        }
        let lo = v * self.t_ref;
        let hi = v * t;
        let p = self.profile.clone();
        let tol = tolerance::<T>();
        let (val, rec) = integrate(
            move |u| p.value(u),
            lo,
            hi,
            &geometric_breakpoints(T::of(0.5), hi),
            tol,
            tol,
        )?;
        summary.add(&rec);
        Ok(sgn * val / v)
    }

    fn phase_recorded(
        &self,
        t: T,
        kinetic: Kinetic,
        summary: &mut QuadratureSummary,
    ) -> Result<Vec<T>> {
        let h = self.grid.spacing();
        let xi = self.grid.frequencies();
        let omega = kinetic.symbol(&self.grid);
        let mut cache: HashMap<u64, T> = HashMap::new();
        let mut out = Vec::with_capacity(xi.len());
        for (i, (&x, &w)) in xi.iter().zip(&omega).enumerate() {
            let k = self.grid.mode_index(i).unsigned_abs();
            let mod_val = match cache.get(&k) {
                Some(&m) => m,
                None => {
                    let speed = match kinetic {
                        Kinetic::Exact => T::of(2.0) * x,
                        Kinetic::Fd2 => T::of(2.0) * (x * h).sin() / h,
                    };
                    let m = self.modifier(t, speed, summary)?;
                    cache.insert(k, m);
                    m
                }
            };
            out.push(t * w + mod_val);
        }
        Ok(out)
    }

    /// `S(t, ξ_k)` on the grid frequencies for any real `t`, computed from
    /// the defining integral rather than the stored table.
    pub fn phase(&self, t: T) -> Result<Vec<T>> {
        self.phase_with(t, Kinetic::Exact)
    }

    pub fn phase_with(&self, t: T, kinetic: Kinetic) -> Result<Vec<T>> {
        let mut s = QuadratureSummary::default();
        self.phase_recorded(t, kinetic, &mut s)
    }

    /// `S(t, ξ)` at a single frequency.
    pub fn value_at(&self, t: T, xi: T) -> Result<T> {
        let mut s = QuadratureSummary::default();
        Ok(t * xi * xi + self.modifier(t, T::of(2.0) * xi, &mut s)?)
    }

    /// `∂_ξ S(t, ξ) = 2tξ + sign(ξ)/(2ξ²) ∫_{2|ξ|t_ref}^{2|ξ|t} u V'(u) du`.
    pub fn xi_derivative(&self, t: T, xi: T) -> Result<T> {
        let mut s = QuadratureSummary::default();
        self.xi_derivative_recorded(t, xi, &mut s)
    }

    fn xi_derivative_recorded(&self, t: T, xi: T, summary: &mut QuadratureSummary) -> Result<T> {
        let base = T::of(2.0) * t * xi;
        if xi == T::zero() || t <= self.t_ref {
            return Ok(base);
        }
        let a = xi.mag();
        let lo = T::of(2.0) * a * self.t_ref;
        let hi = T::of(2.0) * a * t;
        let p = self.profile.clone();
        let tol = tolerance::<T>();
        let (val, rec) = integrate(
            move |u| u * p.derivative(u),
            lo,
            hi,
            &geometric_breakpoints(T::of(0.5), hi),
            tol,
            tol,
        )?;
        summary.add(&rec);
        Ok(base + xi.sign() * val / (T::of(2.0) * a * a))
    }

    /// `R(t,ξ) = ∂_t S − |ξ|² − V^L(∂_ξ S)` for `t > 0`.
    pub fn residual(&self, t: T, xi: T) -> Result<T> {
        let mut s = QuadratureSummary::default();
        self.residual_recorded(t, xi, &mut s)
    }

    fn residual_recorded(&self, t: T, xi: T, summary: &mut QuadratureSummary) -> Result<T> {
        let dt_s = if t > self.t_ref {
            self.profile.value(T::of(2.0) * t * xi)
        } else {
            T::zero()
        };
        let dxi_s = self.xi_derivative_recorded(t, xi, summary)?;
        Ok(dt_s - self.profile.value(dxi_s))
    }
}

/// Builds the Dollard phase for a long-range potential on `grid`.
pub fn build_dollard_phase<T: Real>(
    spec: &PotentialSpec,
    t_max: T,
    grid: &Grid<T>,
    t_ref: T,
) -> Result<DollardPhase<T>> {
    let (charge, mu) = match spec {
        PotentialSpec::LongRange { charge, mu } => (*charge, *mu),
        other => {
            return Err(Error::Config(format!(
                "Dollard dynamics needs a long-range potential, got {other:?}"
            )))
        }
    };
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Config(format!(
            "long-range exponent mu must lie in (0, 1], got {mu}"
        )));
    }
    let profile = Arc::new(PowerTail {
        charge: T::of(charge),
        mu: T::of(mu),
    });
    let mut phase = DollardPhase::from_profile(grid, profile, t_ref, t_max)?;
    phase.parameters = Some((charge, mu));
    Ok(phase)
}

/// `e^{∓iS(t,D)} f`, the lower sign for `adjoint`.
pub fn dollard_evolve<T: Real>(
    f: &Field<T>,
    t: T,
    phase: &DollardPhase<T>,
    adjoint: bool,
) -> Result<Field<T>> {
    if f.grid() != phase.grid() {
        return Err(Error::GridMismatch);
    }
    let s = phase.phase(t)?;
    Ok(f.apply_phase(&s, if adjoint { -T::one() } else { T::one() }))
}

/// [`DollardPhase`] as a [`Propagator`], with the kinetic symbol matching
/// the interacting dynamics it is compared against.
#[derive(Clone, Debug)]
pub struct DollardDynamics<T: Real> {
    pub phase: DollardPhase<T>,
    pub kinetic: Kinetic,
}

impl<T: Real> DollardDynamics<T> {
    pub fn new(phase: DollardPhase<T>) -> Self {
        Self::with_kinetic(phase, Kinetic::Exact)
    }

    pub fn with_kinetic(phase: DollardPhase<T>, kinetic: Kinetic) -> Self {
        Self { phase, kinetic }
    }
}

impl<T: Real> Propagator<T> for DollardDynamics<T> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        if f.grid() != self.phase.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(f.apply_phase(&self.phase.phase_with(t, self.kinetic)?, T::one()))
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        if f.grid() != self.phase.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(f.apply_phase(&self.phase.phase_with(t, self.kinetic)?, -T::one()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::power_law_fit;
    use crate::grid::GaussianPacket;
    use crate::propagators::free_evolve;

    fn coulomb(mu: f64) -> PotentialSpec {
        PotentialSpec::LongRange { charge: 1.0, mu }
    }

    #[test]
    fn closed_form_value_at_unit_frequency() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let p = build_dollard_phase(&coulomb(1.0), 10.0, &g, 0.0).unwrap();
        let s = p.value_at(10.0, 1.0).unwrap();
        assert!((s - 10.0 + 20f64.asinh() / 2.0).abs() < 1e-10, "{s}");
        assert!((20f64.asinh() / 2.0 - 1.845).abs() < 1e-3);
    }

    #[test]
    fn zero_frequency_and_symmetry() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let p = build_dollard_phase(&coulomb(0.8), 5.0, &g, 0.0).unwrap();
        let s = p.phase(5.0).unwrap();
        assert!((s[0] + 5.0).abs() < 1e-14);
        for k in 1..32i64 {
            let a = s[g.slot_of_mode(k).unwrap()];
            let b = s[g.slot_of_mode(-k).unwrap()];
            assert_eq!(a, b);
        }
        assert!(p.phase(0.0).unwrap().iter().all(|&v| v == 0.0));
        let neg = p.phase(-5.0).unwrap();
        assert!(neg.iter().zip(&s).all(|(a, b)| (a + b).abs() < 1e-14));
        assert_eq!(p.table.len(), 4);
        assert!(!p.residuals.is_empty());
        assert!(p.quadrature.integrals > 0);
    }

    #[test]
    fn zero_tail_reduces_to_free() {
        let g = Grid::<f64>::new(256, 60.0).unwrap();
        let p = build_dollard_phase(
            &PotentialSpec::LongRange {
                charge: 0.0,
                mu: 1.0,
            },
            3.0,
            &g,
            0.0,
        )
        .unwrap();
        let f = Field::gaussian(
            &g,
            GaussianPacket {
                center: 1.0,
                width: 1.5,
                momentum: 0.7,
            },
        );
        let d = dollard_evolve(&f, 3.0, &p, false).unwrap();
        assert!((&d - &free_evolve(&f, 3.0)).norm() < 1e-14);
        assert!(p.residuals.iter().all(|r| r.residual == 0.0));
    }

    #[test]
    fn constant_tail_residual_vanishes() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let p = DollardPhase::from_profile(&g, Arc::new(ConstantProfile(0.3)), 0.0, 8.0).unwrap();
        let s = p.phase(8.0).unwrap();
        for (sk, xi) in s.iter().zip(g.frequencies()) {
            assert!((sk - 8.0 * xi * xi - 0.3 * 8.0).abs() < 1e-11);
        }
        assert!(p.residuals.iter().all(|r| r.residual.abs() < 1e-14));
    }

    #[test]
    fn adjoint_inverts_and_commutes_with_sobolev() {
        let g = Grid::<f64>::new(256, 60.0).unwrap();
        let p = build_dollard_phase(&coulomb(1.0), 20.0, &g, 0.0).unwrap();
        let dyn_ = DollardDynamics::new(p);
        let f = Field::gaussian(
            &g,
            GaussianPacket {
                center: 0.0,
                width: 1.0,
                momentum: 0.5,
            },
        );
        let u = dyn_.evolve(&f, 20.0).unwrap();
        assert!((u.norm() - f.norm()).abs() < 1e-12);
        let back = dyn_.evolve_adjoint(&u, 20.0).unwrap();
        assert!((&back - &f).norm() < 1e-12);
        let l = dyn_.evolve(&f.sobolev_apply(1.0), 7.0).unwrap();
        let r = dyn_.evolve(&f, 7.0).unwrap().sobolev_apply(1.0);
        assert!((&l - &r).norm() <= 1e-13 * l.norm().max(1.0));
    }

    #[test]
    fn residual_decays_like_t_to_minus_two_mu() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let p = build_dollard_phase(&coulomb(0.8), 1.0, &g, 0.0).unwrap();
        let times: Vec<f64> = (0..6).map(|j| 1e5 * 4f64.powi(j)).collect();
        let sup: Vec<f64> = times
            .iter()
            .map(|&t| {
                DIAGNOSTIC_XI
                    .iter()
                    .map(|&xi| p.residual(t, xi).unwrap().abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let fit = power_law_fit(&times, &sup).unwrap();
        assert!(-fit.exponent >= 2.0 * 0.8 - 0.1, "{:?}", fit);
    }

    #[test]
    fn rejects_short_range_spec() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        assert!(build_dollard_phase(&PotentialSpec::zero(), 1.0, &g, 0.0).is_err());
        assert!(build_dollard_phase(&coulomb(1.5), 1.0, &g, 0.0).is_err());
    }
}
