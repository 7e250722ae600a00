//! Defocusing NLS `i∂_t u = -∂_x²u + V u + |u|^σ u` with a repulsive
//! (smoothed) delta, and the two-stage extraction of its scattering data:
//! the linear profile `ũ_+ = lim e^{itH}u(t)` and the free profile
//! `u_+ = lim e^{itH_0}e^{-itH}ũ_+`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operator_lab::AcProjector;
use crate::potentials::PotentialSpec;
use crate::propagators::{
    boundary_mass_monitor, FreeDynamics, Kinetic, Propagator, SplitStep, BOUNDARY_MARGIN,
    BOUNDARY_TRIP,
};
use crate::scalar::{polar, Real};
use crate::wave_ops::{inverse_wave_probe, ConvergenceReport, Schedule, Thresholds, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlsConfig {
    /// Nonlinearity power, `σ > 4`.
    pub sigma: f64,
    /// `DeltaApprox` with `α > 0`.
    pub potential: PotentialSpec,
    pub dt: f64,
    pub t_final: f64,
    /// Keep every `stride`-th step as a snapshot (0 disables snapshots).
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Steps between conservation diagnostics.
    #[serde(default = "default_diagnostic_stride")]
    pub diagnostic_stride: usize,
    /// Switches the `|u|^σ u` term off (linear cross-checks).
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

fn default_diagnostic_stride() -> usize {
    100
}

fn yes() -> bool {
    true
}

impl NlsConfig {
    /// The desk-scale preset: `σ = 5`, `α = 1`, width `1.5`, `dt = 10⁻³`, `T = 40`.
    pub fn preset() -> Self {
        Self {
            sigma: 5.0,
            potential: PotentialSpec::DeltaApprox {
                alpha: 1.0,
                width: 1.5,
            },
            dt: 1e-3,
            t_final: 40.0,
            snapshot_stride: 0,
            diagnostic_stride: default_diagnostic_stride(),
            nonlinear: true,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.potential {
            PotentialSpec::DeltaApprox { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Checks the structural invariants and the step-size bound for `u0`.
    pub fn check<T: Real>(&self, u0: &Field<T>) -> Result<Vec<T>> {
        if self.nonlinear && !(self.sigma > 4.0) {
            return Err(Error::Config(format!(
                "sigma must exceed 4, got {}",
                self.sigma
            )));
        }
        match self.alpha() {
            Some(a) if a > 0.0 => {}
            Some(a) => return Err(Error::Config(format!("alpha must be positive, got {a}"))),
            None => {
                return Err(Error::Config(
                    "nls potential must be a delta-approx with alpha > 0".into(),
                ))
            }
        }
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) {
            return Err(Error::StepSize(format!(
                "need dt > 0 and t_final ≥ 0, got dt = {}, t_final = {}",
                self.dt, self.t_final
            )));
        }
        let v = self.potential.sample(u0.grid())?;
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.f64().abs()));
        let umax = u0
            .values()
            .iter()
            .fold(0.0f64, |m, c| m.max(c.norm_sqr().f64().sqrt()));
        let nl = if self.nonlinear {
            umax.powf(self.sigma)
        } else {
            0.0
        };
        if self.dt * (vmax + nl) > 0.5 {
            return Err(Error::StepSize(format!(
                "dt·(max|V| + max|u0|^σ) = {} exceeds 0.5",
                self.dt * (vmax + nl)
            )));
        }
        Ok(v)
    }
}

/// Mass `‖u‖²` and energy `∫|∂_x u|² + ∫V|u|² + (2/(σ+2))∫|u|^{σ+2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub mass: f64,
    pub energy: f64,
}

pub fn conserved<T: Real>(u: &Field<T>, potential: &[T], sigma: T, nonlinear: bool) -> Conserved {
    let h = u.grid().spacing();
    let spec = u.to_frequency();
    let kinetic = spec
        .coeffs()
        .iter()
        .zip(u.grid().frequencies())
        .fold(T::zero(), |acc, (c, &xi)| acc + xi * xi * c.norm_sqr());
    let mut pot = T::zero();
    let mut nl = T::zero();
    for (c, &v) in u.values().iter().zip(potential) {
        let m = c.norm_sqr();
        pot += v * m;
        if nonlinear {
            nl += m.powf(sigma / T::of(2.0) + T::one());
        }
    }
    let nl_coef = if nonlinear {
        T::of(2.0) / (sigma + T::of(2.0))
    } else {
        T::zero()
    };
    Conserved {
        mass: u.norm_sqr().f64(),
        energy: (kinetic + h * pot + nl_coef * h * nl).f64(),
    }
}

/// Sample of the conservation diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub boundary_mass: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    /// States at the requested checkpoint times, in order.
    pub checkpoints: Vec<(f64, Field<T>)>,
    pub snapshots: Vec<(f64, Field<T>)>,
    pub diagnostics: Vec<Diagnostic>,
    /// `max |M(t) - M(0)| / M(0)`.
    pub mass_drift: f64,
    /// `max |E(t) - E(0)| / |E(0)|`.
    pub energy_drift: f64,
    pub min_energy: f64,
    pub boundary_tripped: bool,
}

impl<T: Real> Trajectory<T> {
    pub fn final_state(&self) -> Option<&Field<T>> {
        self.checkpoints.last().map(|(_, f)| f)
    }

    /// Trajectory CSV `t,x,re,im` over the snapshots.
    pub fn write_snapshots_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,re,im")?;
        for (t, f) in &self.snapshots {
            let g = f.grid();
            for (j, c) in f.values().iter().enumerate() {
                writeln!(w, "{t:.17e},{:.17e},{:.17e},{:.17e}", g.x(j), c.re, c.im)?;
            }
        }
        Ok(())
    }
}

struct Stepper<'a, T: Real> {
    potential: &'a [T],
    sigma_half: T,
    nonlinear: bool,
    kinetic: Vec<T>,
}

impl<T: Real> Stepper<'_, T> {
    fn phase_step(&self, u: &mut Field<T>, tau: T) {
        let sh = self.sigma_half;
        let nl = self.nonlinear;
        for (c, &v) in u.values_mut().iter_mut().zip(self.potential) {
            let mut a = v;
            if nl {
                a += c.norm_sqr().powf(sh);
            }
            *c *= polar(T::one(), -tau * a);
        }
    }

    fn step(&self, u: &mut Field<T>, tau: T, kin: &[Complex<T>]) {
        let half = tau / T::of(2.0);
        self.phase_step(u, half);
        u.apply_multiplier_mut(kin);
        self.phase_step(u, half);
    }

    fn kinetic_phases(&self, tau: T) -> Vec<Complex<T>> {
        self.kinetic
            .iter()
            .map(|&w| polar(T::one(), -tau * w))
            .collect()
    }
}

/// Strang splitting of the NLS flow, recording the states at `checkpoints`
/// (sorted, nonnegative; merged with `cfg.t_final`).
pub fn nls_evolve<T: Real>(
    u0: &Field<T>,
    cfg: &NlsConfig,
    checkpoints: &[f64],
) -> Result<Trajectory<T>> {
    let potential = cfg.check(u0)?;
    let mut stops: Vec<f64> = checkpoints.iter().copied().filter(|t| *t >= 0.0).collect();
    stops.push(cfg.t_final);
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    stops.dedup();
    stops.retain(|t| *t <= cfg.t_final);

    let st = Stepper {
        potential: &potential,
        sigma_half: T::of(cfg.sigma / 2.0),
        nonlinear: cfg.nonlinear,
        kinetic: Kinetic::Exact.symbol(u0.grid()),
    };
    let dt = T::of(cfg.dt);
    let kin = st.kinetic_phases(dt);
    let sigma = T::of(cfg.sigma);
    let margin = T::of(BOUNDARY_MARGIN);

    let c0 = conserved(u0, &potential, sigma, cfg.nonlinear);
    let mut diagnostics = vec![Diagnostic {
        t: 0.0,
        mass: c0.mass,
        energy: c0.energy,
        boundary_mass: boundary_mass_monitor(u0, margin).f64(),
    }];
    let mut snapshots = Vec::new();
    if cfg.snapshot_stride > 0 {
        snapshots.push((0.0, u0.clone()));
    }
    let mut checkpoints_out = Vec::with_capacity(stops.len());
    let mut u = u0.clone();
    let mut steps_done: u64 = 0;
    let mut t_now = 0.0f64;
    let diag_stride = cfg.diagnostic_stride.max(1) as u64;

    for &stop in &stops {
        let target = stop / cfg.dt;
        let whole = if (target - target.round()).abs() < 1e-9 {
            target.round()
        } else {
            target.floor()
        };
        let n_target = whole as u64;
        while steps_done < n_target {
            st.step(&mut u, dt, &kin);
            steps_done += 1;
            t_now = steps_done as f64 * cfg.dt;
            if steps_done % diag_stride == 0 {
                let c = conserved(&u, &potential, sigma, cfg.nonlinear);
                diagnostics.push(Diagnostic {
                    t: t_now,
                    mass: c.mass,
                    energy: c.energy,
                    boundary_mass: boundary_mass_monitor(&u, margin).f64(),
                });
            }
            if cfg.snapshot_stride > 0 && steps_done % cfg.snapshot_stride as u64 == 0 {
                snapshots.push((t_now, u.clone()));
            }
        }
        let rem = stop - steps_done as f64 * cfg.dt;
        if rem > 1e-12 * cfg.dt {
            // partial step off the main grid of times
            let mut w = u.clone();
            let tau = T::of(rem);
            st.step(&mut w, tau, &st.kinetic_phases(tau));
            checkpoints_out.push((stop, w));
        } else {
            checkpoints_out.push((stop, u.clone()));
        }
    }
    if let Some((t, f)) = checkpoints_out.last() {
        if t_now < *t {
            let c = conserved(f, &potential, sigma, cfg.nonlinear);
            diagnostics.push(Diagnostic {
                t: *t,
                mass: c.mass,
                energy: c.energy,
                boundary_mass: boundary_mass_monitor(f, margin).f64(),
            });
        }
    }

    let m0 = c0.mass;
    let e0 = c0.energy;
    let mass_drift = diagnostics
        .iter()
        .map(|d| {
            if m0 > 0.0 {
                (d.mass - m0).abs() / m0
            } else {
                d.mass.abs()
            }
        })
        .fold(0.0, f64::max);
    let energy_drift = diagnostics
        .iter()
        .map(|d| {
            if e0 != 0.0 {
                (d.energy - e0).abs() / e0.abs()
            } else {
                d.energy.abs()
            }
        })
        .fold(0.0, f64::max);
    let min_energy = diagnostics
        .iter()
        .map(|d| d.energy)
        .fold(f64::INFINITY, f64::min);
    let boundary_tripped = diagnostics.iter().any(|d| d.boundary_mass > BOUNDARY_TRIP);
    Ok(Trajectory {
        checkpoints: checkpoints_out,
        snapshots,
        diagnostics,
        mass_drift,
        energy_drift,
        min_energy,
        boundary_tripped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOne {
    pub times: Vec<f64>,
    /// `‖v(t_{k+1}) - v(t_k)‖_{H¹}`, `v(t) = e^{itH}u(t)`.
    pub increments: Vec<f64>,
    pub verdict: Verdict,
    /// Largest gap between `‖u(t) - e^{-itH}ũ_+‖` and `‖v(t) - ũ_+‖` (`s = 0`).
    pub identity_defect: f64,
}

#[derive(Clone, Debug)]
pub struct NlsScatter<T: Real> {
    pub linear_profile: Field<T>,
    pub free_profile: Option<Field<T>>,
    pub stage_one: StageOne,
    pub stage_two: Option<ConvergenceReport>,
    /// `‖u(t_k) - e^{-it_kH_0}u_+‖_{H¹}`.
    pub residuals: Vec<f64>,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub min_energy: f64,
    pub boundary_tripped: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Runs the flow to `schedule.t_max()` and extracts both profiles. The
/// linear dynamics `e^{±itH}` is split-step with the sampled potential and
/// the flow's `dt`, so stage one inverts the linear part of the flow exactly.
pub fn nls_scatter<T: Real>(
    u0: &Field<T>,
    cfg: &NlsConfig,
    schedule: &Schedule,
) -> Result<NlsScatter<T>> {
    if (schedule.t_max() - cfg.t_final).abs() > 1e-9 * cfg.t_final.max(1.0) {
        return Err(Error::Config(format!(
            "schedule ends at {} but t_final is {}",
            schedule.t_max(),
            cfg.t_final
        )));
    }
    let times = schedule.times();
    let traj = nls_evolve(u0, cfg, &times)?;
    let grid: &Grid<T> = u0.grid();
    let v = cfg.potential.sample(grid)?;
    let linear = SplitStep::new(grid, v, T::of(cfg.dt))?;
    let one = T::one();

    let mut profiles = Vec::with_capacity(times.len());
    for (t, u) in &traj.checkpoints {
        profiles.push(linear.evolve_adjoint(u, T::of(*t))?);
    }
    let increments: Vec<f64> = profiles
        .windows(2)
        .map(|w| (&w[1] - &w[0]).sobolev_norm(one).f64())
        .collect();
    let linear_profile = profiles.last().cloned().expect("nonempty schedule");

    let mut identity_defect = 0.0f64;
    for ((t, u), vt) in traj.checkpoints.iter().zip(&profiles) {
        let back = linear.evolve(&linear_profile, T::of(*t))?;
        let a = (u - &back).norm().f64();
        let b = (vt - &linear_profile).norm().f64();
        identity_defect = identity_defect.max((a - b).abs());
    }

    let th = Thresholds::default();
    let verdict = stage_verdict(&times, &increments, u0.sobolev_norm(one).f64(), &th);
    let stage_one = StageOne {
        times: times.clone(),
        increments,
        verdict,
        identity_defect,
    };

    let (free_profile, stage_two, residuals) = if verdict.is_failing() || traj.boundary_tripped {
        (None, None, Vec::new())
    } else {
        let free = FreeDynamics::exact(grid);
        let out = inverse_wave_probe(
            &linear_profile,
            &free,
            &linear,
            &AcProjector::identity(),
            schedule,
            one,
        )?;
        let mut residuals = Vec::with_capacity(times.len());
        for (t, u) in &traj.checkpoints {
            let f = free.evolve(&out.image, T::of(*t))?;
            residuals.push((u - &f).sobolev_norm(one).f64());
        }
        (Some(out.image), Some(out.report), residuals)
    };

    Ok(NlsScatter {
        linear_profile,
        free_profile,
        stage_one,
        stage_two,
        residuals,
        mass_drift: traj.mass_drift,
        energy_drift: traj.energy_drift,
        min_energy: traj.min_energy,
        boundary_tripped: traj.boundary_tripped,
        diagnostics: traj.diagnostics,
    })
}

/// Stage-one policy: decreasing increments over the last window, or all
/// increments at rounding level relative to the data.
fn stage_verdict(times: &[f64], d: &[f64], scale: f64, th: &Thresholds) -> Verdict {
    if d.iter()
        .all(|&x| x <= th.trivial_increment * scale.max(1.0))
    {
        return Verdict::TriviallyConverged;
    }
    let n = d.len();
    let window = th.decreasing_window.min(n);
    let decreasing = n >= 2 && d[n - window..].windows(2).all(|w| w[1] < w[0]);
    let fit = crate::fit::power_law_fit(&times[..n], d);
    match fit {
        _ if decreasing => Verdict::Converging,
        Some(f) if f.exponent > 0.1 => Verdict::Diverging,
        _ => Verdict::Stalled,
    }
}

/// `‖u_+(w) - u_+(w/2)‖_{H¹}` for the smoothed delta of width `w`; the halved
/// width must still be resolved by the grid.
pub fn width_sensitivity<T: Real>(
    u0: &Field<T>,
    cfg: &NlsConfig,
    schedule: &Schedule,
) -> Result<f64> {
    let (alpha, width) = match cfg.potential {
        PotentialSpec::DeltaApprox { alpha, width } => (alpha, width),
        _ => {
            return Err(Error::Config(
                "width sensitivity needs a delta-approx potential".into(),
            ))
        }
    };
    let mut half = cfg.clone();
    half.potential = PotentialSpec::DeltaApprox {
        alpha,
        width: width / 2.0,
    };
    half.potential.sample(u0.grid())?;
    let a = nls_scatter(u0, cfg, schedule)?;
    let b = nls_scatter(u0, &half, schedule)?;
    match (a.free_profile, b.free_profile) {
        (Some(x), Some(y)) => Ok((&x - &y).sobolev_norm(T::one()).f64()),
        _ => Err(Error::StageOneDiverged),
    }
}
