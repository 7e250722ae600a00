//! Time series of `W(t) = e^{itH} U_0(t)` and `Ω(t) = U_0(t)* e^{-itH} P_ac`,
//! their Cauchy increments in `ℋ^s`, and the three-term budget of an
//! increment.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cutoff::{phi_r, psi_r, CUTOFF_DESCRIPTION};
use crate::error::{Error, Result};
use crate::fit::{power_law_fit, PowerFit};
use crate::grid::Field;
use crate::operator_lab::AcProjector;
use crate::operator_lab::HermitianOperator;
use crate::propagators::{
    boundary_mass_monitor, Kinetic, Propagator, BOUNDARY_MARGIN, BOUNDARY_TRIP,
};
use crate::scalar::{ComplexExt, Real};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Geometric times `t_k = t_0·2^k`, `k = 0..=n_doublings`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(alias = "t_0")]
    pub t0: f64,
    pub n_doublings: usize,
}

impl Schedule {
    pub fn new(t0: f64, n_doublings: usize) -> Result<Self> {
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::Config(format!(
                "schedule.t0 must be positive, got {t0}"
            )));
        }
        Ok(Self { t0, n_doublings })
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_doublings)
            .map(|k| self.t0 * 2f64.powi(k as i32))
            .collect()
    }

    pub fn t_max(&self) -> f64 {
        self.t0 * 2f64.powi(self.n_doublings as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converging,
    /// Every increment below the trivial threshold.
    TriviallyConverged,
    Stalled,
    Diverging,
    /// Boundary monitor tripped; no verdict issued.
    Withheld,
}

impl Verdict {
    pub fn is_failing(&self) -> bool {
        !matches!(self, Verdict::Converging | Verdict::TriviallyConverged)
    }
}

/// Verdict policy recorded in every report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub max_exponent: f64,
    pub decreasing_window: usize,
    pub trivial_increment: f64,
    pub boundary_trip: f64,
    pub boundary_margin: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_exponent: -0.3,
            decreasing_window: 3,
            trivial_increment: 1e-11,
            boundary_trip: BOUNDARY_TRIP,
            boundary_margin: BOUNDARY_MARGIN,
        }
    }
}

/// The budget of one increment `[W(t_n) - W(t_m)]u_0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetTerms {
    pub t_n: f64,
    pub t_m: f64,
    pub r: f64,
    pub s: f64,
    /// `‖u_0 - φ_R(H_0)u_0‖_s`.
    pub tail: f64,
    /// `‖ψ_R(H)[W(t_n) - W(t_m)]φ_R(H_0)u_0‖_s`.
    pub mid: f64,
    /// `Σ_t ‖[ψ_R(H_0) - ψ_R(H)]U_0(t)φ_R(H_0)u_0‖_s`.
    pub calc_diff: f64,
    /// Same sum with `e^{itH}` applied before the norm.
    pub calc_diff_evolved: f64,
    /// `‖[W(t_n) - W(t_m)]u_0‖_s`.
    pub total: f64,
}

impl BudgetTerms {
    /// `total ≤ 2·tail + mid + calc_diff`, with a rounding allowance.
    pub fn audit(&self) -> bool {
        self.total <= 2.0 * self.tail + self.mid + self.calc_diff + 1e-12 * (1.0 + self.total)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub kind: String,
    pub s: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// `d_k = ‖X(t_{k+1})u_0 - X(t_k)u_0‖_s`, paired with `times[k]`.
    pub increments: Vec<f64>,
    pub fit: Option<PowerFit>,
    pub verdict: Verdict,
    /// Boundary-monitor mass fraction at each time.
    pub boundary_mass: Vec<f64>,
    pub boundary_tripped: bool,
    pub thresholds: Thresholds,
    pub cutoffs: String,
    pub bound_states_removed: usize,
    /// `|‖X(t)u_0‖ - ‖P u_0‖|` maximized over the schedule (`s = 0` norm).
    pub isometry_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub budget_terms: Option<Vec<BudgetTerms>>,
}

impl ConvergenceReport {
    fn assemble(
        kind: &str,
        s: f64,
        times: Vec<f64>,
        norms: Vec<f64>,
        increments: Vec<f64>,
        boundary_mass: Vec<f64>,
        bound_states_removed: usize,
        isometry_defect: f64,
    ) -> Self {
        let thresholds = Thresholds::default();
        let fit = power_law_fit(&times[..increments.len()], &increments);
        let boundary_tripped = boundary_mass.iter().any(|&m| m > thresholds.boundary_trip);
        let verdict = classify(&increments, fit.as_ref(), boundary_tripped, &thresholds);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.into(),
            s,
            times,
            norms,
            increments,
            fit,
            verdict,
            boundary_mass,
            boundary_tripped,
            thresholds,
            cutoffs: CUTOFF_DESCRIPTION.into(),
            bound_states_removed,
            isometry_defect,
            budget_terms: None,
        }
    }

    /// Whether the last `window` increments strictly decrease.
    pub fn tail_decreasing(&self) -> bool {
        strictly_decreasing_tail(&self.increments, self.thresholds.decreasing_window)
    }

    pub fn last_increment(&self) -> f64 {
        self.increments.last().copied().unwrap_or(0.0)
    }

    /// Flat CSV `t,norm,increment,boundary_mass`; the last row has an empty
    /// increment.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,norm,increment,boundary_mass")?;
        for (k, t) in self.times.iter().enumerate() {
            let inc = self
                .increments
                .get(k)
                .map(|d| format!("{d:.17e}"))
                .unwrap_or_default();
            writeln!(
                w,
                "{t:.17e},{:.17e},{inc},{:.17e}",
                self.norms[k], self.boundary_mass[k]
            )?;
        }
        Ok(())
    }
}

fn strictly_decreasing_tail(d: &[f64], window: usize) -> bool {
    if d.len() < window || window == 0 {
        return false;
    }
    d[d.len() - window..].windows(2).all(|w| w[1] < w[0])
}

fn classify(d: &[f64], fit: Option<&PowerFit>, tripped: bool, th: &Thresholds) -> Verdict {
    if tripped {
        return Verdict::Withheld;
    }
    if !d.is_empty() && d.iter().all(|&x| x <= th.trivial_increment) {
        return Verdict::TriviallyConverged;
    }
    let exponent = fit.map(|f| f.exponent);
    match exponent {
        Some(p) if p <= th.max_exponent && strictly_decreasing_tail(d, th.decreasing_window) => {
            Verdict::Converging
        }
        Some(p) if p > 0.1 => Verdict::Diverging,
        _ => Verdict::Stalled,
    }
}

/// A probe report with the state at `t_max`.
#[derive(Clone, Debug)]
pub struct ProbeOutcome<T: Real> {
    pub report: ConvergenceReport,
    pub image: Field<T>,
}

fn increments<T: Real>(states: &[Field<T>], s: T) -> Vec<f64> {
    states
        .windows(2)
        .map(|w| (&w[1] - &w[0]).sobolev_norm(s).f64())
        .collect()
}

/// `W(t_k)u_0 = e^{it_kH} U_0(t_k) u_0` over the schedule.
pub fn wave_probe<T: Real>(
    u0: &Field<T>,
    free: &dyn Propagator<T>,
    full: &dyn Propagator<T>,
    schedule: &Schedule,
    s: T,
) -> Result<ProbeOutcome<T>> {
    let times = schedule.times();
    let margin = T::of(BOUNDARY_MARGIN);
    let base = u0.norm();
    let mut states = Vec::with_capacity(times.len());
    let mut boundary = Vec::with_capacity(times.len());
    let mut iso = 0.0f64;
    for &t in &times {
        let t = T::of(t);
        let v = free.evolve(u0, t)?;
        boundary.push(boundary_mass_monitor(&v, margin).f64());
        let w = full.evolve_adjoint(&v, t)?;
        iso = iso.max((w.norm() - base).mag().f64());
        states.push(w);
    }
    let norms = states.iter().map(|w| w.sobolev_norm(s).f64()).collect();
    let inc = increments(&states, s);
    let report = ConvergenceReport::assemble("wave", s.f64(), times, norms, inc, boundary, 0, iso);
    Ok(ProbeOutcome {
        report,
        image: states.pop().expect("schedule has at least one time"),
    })
}

/// `Ω(t_k)u_0 = U_0(t_k)* e^{-it_kH} P_ac u_0` over the schedule.
pub fn inverse_wave_probe<T: Real>(
    u0: &Field<T>,
    free: &dyn Propagator<T>,
    full: &dyn Propagator<T>,
    projector: &AcProjector<T>,
    schedule: &Schedule,
    s: T,
) -> Result<ProbeOutcome<T>> {
    let times = schedule.times();
    let margin = T::of(BOUNDARY_MARGIN);
    let p = projector.apply(u0)?;
    let base = p.norm();
    let mut states = Vec::with_capacity(times.len());
    let mut boundary = Vec::with_capacity(times.len());
    let mut iso = 0.0f64;
    for &t in &times {
        let t = T::of(t);
        let v = full.evolve(&p, t)?;
        boundary.push(boundary_mass_monitor(&v, margin).f64());
        let w = free.evolve_adjoint(&v, t)?;
        iso = iso.max((w.norm() - base).mag().f64());
        states.push(w);
    }
    let norms = states.iter().map(|w| w.sobolev_norm(s).f64()).collect();
    let inc = increments(&states, s);
    let report = ConvergenceReport::assemble(
        "inverse-wave",
        s.f64(),
        times,
        norms,
        inc,
        boundary,
        projector.n_bound(),
        iso,
    );
    Ok(ProbeOutcome {
        report,
        image: states.pop().expect("schedule has at least one time"),
    })
}

/// The `t → -∞` limit by time reflection: `W_-(t)u = conj(W_+(t) conj u)`
/// for real potentials.
pub fn reflect_probe<T: Real>(
    u0: &Field<T>,
    probe: impl FnOnce(&Field<T>) -> Result<ProbeOutcome<T>>,
) -> Result<ProbeOutcome<T>> {
    let mut out = probe(&u0.conj())?;
    out.image = out.image.conj();
    Ok(out)
}

fn kinetic_function<T: Real>(u: &Field<T>, kinetic: Kinetic, g: impl Fn(T) -> T) -> Field<T> {
    let m: Vec<T> = kinetic.symbol(u.grid()).into_iter().map(g).collect();
    u.apply_real_multiplier(&m)
}

/// Three-term budget of `[W(t_n) - W(t_m)]u_0`. `h` supplies both
/// `e^{itH}` and the functional calculus of `H`; `kinetic` is the symbol of
/// `H_0` for `φ_R(H_0)` and `ψ_R(H_0)`.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_budget<T: Real>(
    u0: &Field<T>,
    free: &dyn Propagator<T>,
    h: &HermitianOperator<T>,
    kinetic: Kinetic,
    t_n: T,
    t_m: T,
    r: T,
    s: T,
) -> Result<BudgetTerms> {
    if r < T::one() {
        return Err(Error::Config(format!(
            "budget cutoff R must be ≥ 1, got {r}"
        )));
    }
    let w = |f: &Field<T>, t: T| -> Result<Field<T>> { h.evolve_adjoint(&free.evolve(f, t)?, t) };
    let low = kinetic_function(u0, kinetic, |l| phi_r(l, r));
    let tail = (u0 - &low).sobolev_norm(s);

    let diff_low = &w(&low, t_n)? - &w(&low, t_m)?;
    let mid = h
        .apply_real_function(|l| psi_r(l, r), &diff_low)?
        .sobolev_norm(s);

    let mut calc_diff = T::zero();
    let mut calc_diff_evolved = T::zero();
    for t in [t_n, t_m] {
        let moved = free.evolve(&low, t)?;
        let a = kinetic_function(&moved, kinetic, |l| psi_r(l, r));
        let b = h.apply_real_function(|l| psi_r(l, r), &moved)?;
        let d = &a - &b;
        calc_diff += d.sobolev_norm(s);
        calc_diff_evolved += h.evolve_adjoint(&d, t)?.sobolev_norm(s);
    }
    let total = (&w(u0, t_n)? - &w(u0, t_m)?).sobolev_norm(s);
    Ok(BudgetTerms {
        t_n: t_n.f64(),
        t_m: t_m.f64(),
        r: r.f64(),
        s: s.f64(),
        tail: tail.f64(),
        mid: mid.f64(),
        calc_diff: calc_diff.f64(),
        calc_diff_evolved: calc_diff_evolved.f64(),
        total: total.f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapSeries {
    pub times: Vec<f64>,
    /// `|⟨g, U_0(t_k) f⟩|`.
    pub overlaps: Vec<f64>,
    pub fit: Option<PowerFit>,
}

impl OverlapSeries {
    /// Whether overlaps are nonincreasing from the first time `≥ t_start`.
    pub fn decreasing_from(&self, t_start: f64) -> bool {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.overlaps)
            .filter(|(t, _)| **t >= t_start)
            .map(|(_, o)| *o)
            .collect();
        vals.windows(2).all(|w| w[1] < w[0])
    }
}

pub fn weak_decay_probe<T: Real>(
    f: &Field<T>,
    g: &Field<T>,
    free: &dyn Propagator<T>,
    times: &[f64],
) -> Result<OverlapSeries> {
    let mut overlaps = Vec::with_capacity(times.len());
    for &t in times {
        let u = free.evolve(f, T::of(t))?;
        overlaps.push(g.inner(&u)?.mag().f64());
    }
    let fit = power_law_fit(times, &overlaps);
    Ok(OverlapSeries {
        times: times.to_vec(),
        overlaps,
        fit,
    })
}

/// `‖e^{-iτH}W(T)u_0 - W(T)e^{-iτH_0}u_0‖_s`, with `e^{-iτH_0}` from
/// the kinetic symbol.
pub fn intertwining_check<T: Real>(
    u0: &Field<T>,
    free: &dyn Propagator<T>,
    full: &dyn Propagator<T>,
    kinetic: Kinetic,
    t_big: T,
    tau: T,
    s: T,
) -> Result<T> {
    if tau == T::zero() {
        return Ok(T::zero());
    }
    let w =
        |f: &Field<T>| -> Result<Field<T>> { full.evolve_adjoint(&free.evolve(f, t_big)?, t_big) };
    let left = full.evolve(&w(u0)?, tau)?;
    let shifted = u0.apply_phase(&kinetic.symbol(u0.grid()), tau);
    let right = w(&shifted)?;
    Ok((&left - &right).sobolev_norm(s))
}
