//! Config-driven experiments: TOML in, `report.json` plus CSV series out.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cutoff::CUTOFF_DESCRIPTION;
use crate::error::{Error, Result};
use crate::fit::power_law_fit;
use crate::grid::{Field, GaussianPacket, Grid};
use crate::nls::{nls_scatter, NlsConfig};
use crate::operator_lab::{
    build_free, build_hamiltonian, norm_equivalence_probe, norm_equivalence_refinement,
    resolvent_difference_probe, AcProjector, HermitianOperator, Scheme,
};
use crate::potentials::{Classification, PotentialSpec};
use crate::propagators::{
    default_dt, required_length, resolve_scheme, Directed, Direction, DollardPhase, DynamicsSpec,
    Kinetic, PowerTail, Propagator, Stepper, DIAGNOSTIC_XI,
};
use crate::wave_ops::{
    cauchy_budget, intertwining_check, inverse_wave_probe, reflect_probe, wave_probe,
    weak_decay_probe, ProbeOutcome, Schedule, REPORT_SCHEMA_VERSION,
};

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Unexpected runtime failure.
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
/// Boundary monitor tripped.
pub const EXIT_BOUNDARY: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

/// Tolerance of the support-radius and band estimates in the sizing rule.
pub const SIZING_TOLERANCE: f64 = 1e-10;
/// Largest grid for which dense matrices are built.
pub const MAX_DENSE_N: usize = 4096;
/// Grid size up to which `matrix-exact` is the default stepper.
pub const MATRIX_EXACT_DEFAULT_MAX_N: usize = 1024;
/// Eigenvalues below `-BOUND_STATE_THRESHOLD` count as bound states.
pub const BOUND_STATE_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Wave,
    InverseWave,
    Budget,
    WeakDecay,
    Equivalence,
    Compactness,
    HjResidual,
    NlsScatter,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Wave => "wave",
            ExperimentKind::InverseWave => "inverse-wave",
            ExperimentKind::Budget => "budget",
            ExperimentKind::WeakDecay => "weak-decay",
            ExperimentKind::Equivalence => "equivalence",
            ExperimentKind::Compactness => "compactness",
            ExperimentKind::HjResidual => "hj-residual",
            ExperimentKind::NlsScatter => "nls-scatter",
        }
    }

    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Wave,
        ExperimentKind::InverseWave,
        ExperimentKind::Budget,
        ExperimentKind::WeakDecay,
        ExperimentKind::Equivalence,
        ExperimentKind::Compactness,
        ExperimentKind::HjResidual,
        ExperimentKind::NlsScatter,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
    #[serde(alias = "L")]
    pub length: f64,
}

/// Rescale initial data so that `‖f‖_s = value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalize {
    pub s: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSpec {
    Gaussian {
        #[serde(default)]
        center: f64,
        width: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalize: Option<Normalize>,
    },
    /// Random trigonometric polynomial on `|ξ| ≤ band`, drawn from the seed.
    RandomBandLimited {
        band: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalize: Option<Normalize>,
    },
}

impl DataSpec {
    pub fn build(&self, grid: &Grid<f64>, seed: u64) -> Result<Field<f64>> {
        let (raw, normalize) = match self {
            DataSpec::Gaussian {
                center,
                width,
                momentum,
                normalize,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::Config(format!(
                        "data.width must be positive, got {width}"
                    )));
                }
                (
                    Field::gaussian(
                        grid,
                        GaussianPacket {
                            center: *center,
                            width: *width,
                            momentum: *momentum,
                        },
                    ),
                    normalize,
                )
            }
            DataSpec::RandomBandLimited { band, normalize } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (Field::random_band_limited(grid, *band, &mut rng), normalize)
            }
        };
        Ok(match normalize {
            Some(n) => {
                let cur = raw.sobolev_norm(n.s);
                if cur == 0.0 {
                    raw
                } else {
                    raw.scaled(n.value / cur)
                }
            }
            None => raw,
        })
    }
}

fn default_free() -> DynamicsSpec {
    DynamicsSpec::Free { kinetic: None }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    /// The comparison dynamics `U_0`.
    #[serde(default = "default_free")]
    pub free: DynamicsSpec,
    /// Integrator for `e^{-itH}`; chosen from the grid size when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepper: Option<Stepper>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// `adjoint` replaces every `U(t)` by `U(t)*`, probing `t → -∞`.
    #[serde(default)]
    pub direction: Direction,
    /// Probe `t → -∞` by complex conjugation of the data instead.
    #[serde(default)]
    pub reflect: bool,
}

fn default_scheme() -> Scheme {
    Scheme::Spectral
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            free: default_free(),
            stepper: None,
            scheme: Scheme::Spectral,
            direction: Direction::Forward,
            reflect: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Cutoff levels `R ≥ 1`.
    pub r: Vec<f64>,
    /// `(t_n, t_m)` pairs.
    pub pairs: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakDecayConfig {
    pub times: Vec<f64>,
    /// The test function `g` (defaults to the data itself).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<DataSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub band: f64,
    /// Also run on `2n` nodes and report the drift of both bounds.
    #[serde(default)]
    pub refine: bool,
}

fn default_samples() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessConfig {
    /// Spectral parameter `(Re z, Im z)`.
    #[serde(default = "default_z")]
    pub z: [f64; 2],
    /// Number of leading singular values kept in the report.
    #[serde(default = "default_keep")]
    pub keep: usize,
}

fn default_z() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_keep() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HjConfig {
    pub mus: Vec<f64>,
    #[serde(default = "one")]
    pub charge: f64,
    #[serde(default = "default_hj_t_min")]
    pub t_min: f64,
    #[serde(default = "default_hj_t_max")]
    pub t_max: f64,
    #[serde(default = "default_hj_points")]
    pub n_times: usize,
}

fn one() -> f64 {
    1.0
}
fn default_hj_t_min() -> f64 {
    1e5
}
fn default_hj_t_max() -> f64 {
    1e8
}
fn default_hj_points() -> usize {
    7
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntertwiningConfig {
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub grid: GridConfig,
    #[serde(default = "PotentialSpec::zero")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_decay: Option<WeakDecayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence: Option<EquivalenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compactness: Option<CompactnessConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hj: Option<HjConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nls: Option<NlsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intertwining: Option<IntertwiningConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Largest time the experiment evolves to, if it evolves at all.
    pub fn horizon(&self) -> Option<f64> {
        match self.experiment {
            ExperimentKind::Wave | ExperimentKind::InverseWave => {
                let t = self.schedule.map(|s| s.t_max())?;
                Some(t + self.intertwining.map(|i| i.tau.abs()).unwrap_or(0.0))
            }
            ExperimentKind::Budget => self
                .budget
                .as_ref()
                .map(|b| b.pairs.iter().flatten().fold(0.0f64, |m, t| m.max(t.abs()))),
            ExperimentKind::WeakDecay => self
                .weak_decay
                .as_ref()
                .map(|w| w.times.iter().fold(0.0f64, |m, t| m.max(t.abs()))),
            ExperimentKind::NlsScatter => self.nls.as_ref().map(|n| n.t_final),
            ExperimentKind::Equivalence
            | ExperimentKind::Compactness
            | ExperimentKind::HjResidual => None,
        }
    }
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn issue(path: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub classification: Classification,
    pub warnings: Vec<String>,
    /// Resolved integrator for `e^{-itH}`.
    pub stepper: Stepper,
    pub scheme: Scheme,
    /// Minimal `L` from the sizing rule (when the experiment evolves data).
    pub min_length: Option<f64>,
}

fn auto_stepper(n: usize, scheme: Scheme, potential: &[f64]) -> Stepper {
    if n <= MATRIX_EXACT_DEFAULT_MAX_N {
        return Stepper::MatrixExact;
    }
    let vmax = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dt = default_dt(vmax);
    match scheme {
        Scheme::Spectral => Stepper::SplitStep { dt },
        Scheme::Fd2 | Scheme::Fd2Delta { .. } => Stepper::CrankNicolson { dt },
    }
}

fn needs_data(kind: ExperimentKind) -> bool {
    matches!(
        kind,
        ExperimentKind::Wave
            | ExperimentKind::InverseWave
            | ExperimentKind::Budget
            | ExperimentKind::WeakDecay
            | ExperimentKind::NlsScatter
    )
}

/// Checks every invariant of `config`, collecting all violations.
pub fn validate(config: ExperimentConfig) -> std::result::Result<Validated, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    let kind = config.experiment;

    let grid = match Grid::<f64>::new(config.grid.n, config.grid.length) {
        Ok(g) => Some(g),
        Err(e) => {
            issues.push(issue("grid", e.to_string()));
            None
        }
    };
    if !(config.s >= -2.0 && config.s <= 2.0) {
        issues.push(issue(
            "s",
            format!("s must lie in [-2, 2], got {}", config.s),
        ));
    }
    let classification = match (&config.experiment, &config.nls) {
        (ExperimentKind::NlsScatter, Some(n)) => n.potential.classify(),
        _ => config.potential.classify(),
    };
    if let Some((lo, hi)) = classification.sobolev_range {
        if config.s < lo || config.s > hi {
            warnings.push(format!(
                "s = {} outside the licensed range [{lo}, {hi}] for this potential class",
                config.s
            ));
        }
    }

    let scheme = match resolve_scheme(&config.potential, config.dynamics.scheme) {
        Ok(s) => s,
        Err(e) => {
            issues.push(issue("dynamics.scheme", e.to_string()));
            config.dynamics.scheme
        }
    };

    let mut sampled = Vec::new();
    if let Some(g) = &grid {
        match config.potential.sample(g) {
            Ok(v) => sampled = v,
            Err(e) => issues.push(issue("potential", e.to_string())),
        }
    }
    let stepper = config
        .dynamics
        .stepper
        .unwrap_or_else(|| auto_stepper(config.grid.n, scheme, &sampled));
    match (stepper, scheme) {
        (Stepper::SplitStep { dt }, Scheme::Spectral)
        | (Stepper::CrankNicolson { dt }, Scheme::Fd2 | Scheme::Fd2Delta { .. }) => {
            if !(dt > 0.0) {
                issues.push(issue(
                    "dynamics.stepper.dt",
                    format!("dt must be positive, got {dt}"),
                ));
            }
        }
        (Stepper::MatrixExact, _) => {
            if config.grid.n > MAX_DENSE_N {
                issues.push(issue(
                    "dynamics.stepper",
                    format!(
                        "matrix-exact needs n ≤ {MAX_DENSE_N}, got {}",
                        config.grid.n
                    ),
                ));
            }
        }
        (Stepper::SplitStep { .. }, _) => issues.push(issue(
            "dynamics.stepper",
            "split-step requires the spectral scheme",
        )),
        (Stepper::CrankNicolson { .. }, _) => issues.push(issue(
            "dynamics.stepper",
            "crank-nicolson requires an fd2 scheme",
        )),
    }
    let dense_needed = matches!(
        kind,
        ExperimentKind::Budget | ExperimentKind::Equivalence | ExperimentKind::Compactness
    );
    if dense_needed && config.grid.n > MAX_DENSE_N {
        issues.push(issue(
            "grid.n",
            format!("{} needs dense matrices, n ≤ {MAX_DENSE_N}", kind.name()),
        ));
    }
    if let DynamicsSpec::Dollard {
        potential, t_ref, ..
    } = &config.dynamics.free
    {
        if !matches!(potential, PotentialSpec::LongRange { .. }) {
            issues.push(issue(
                "dynamics.free.potential",
                "Dollard dynamics needs a long-range potential",
            ));
        }
        if !(*t_ref >= 0.0) {
            issues.push(issue(
                "dynamics.free.t_ref",
                format!("t_ref must be ≥ 0, got {t_ref}"),
            ));
        }
    }
    if matches!(config.dynamics.free, DynamicsSpec::Full { .. }) {
        issues.push(issue(
            "dynamics.free",
            "the comparison dynamics must be free or dollard",
        ));
    }
    if classification.modifier_required
        && matches!(config.dynamics.free, DynamicsSpec::Free { .. })
        && matches!(kind, ExperimentKind::Wave | ExperimentKind::InverseWave)
    {
        warnings.push(
            "long-range potential with unmodified free dynamics: no convergence expected".into(),
        );
    }

    // per-kind sections
    match kind {
        ExperimentKind::Wave | ExperimentKind::InverseWave => match config.schedule {
            None => issues.push(issue("schedule", "required for this experiment")),
            Some(s) => {
                if !(s.t0 > 0.0) {
                    issues.push(issue(
                        "schedule.t0",
                        format!("must be positive, got {}", s.t0),
                    ));
                }
            }
        },
        ExperimentKind::Budget => match &config.budget {
            None => issues.push(issue("budget", "required for this experiment")),
            Some(b) => {
                if b.r.is_empty() || b.r.iter().any(|&r| !(r >= 1.0)) {
                    issues.push(issue("budget.r", "needs at least one cutoff, all ≥ 1"));
                }
                if b.pairs.is_empty() {
                    issues.push(issue("budget.pairs", "needs at least one (t_n, t_m) pair"));
                }
            }
        },
        ExperimentKind::WeakDecay => match &config.weak_decay {
            None => issues.push(issue("weak_decay", "required for this experiment")),
            Some(w) => {
                if w.times.is_empty() {
                    issues.push(issue("weak_decay.times", "needs at least one time"));
                }
            }
        },
        ExperimentKind::Equivalence => match &config.equivalence {
            None => issues.push(issue("equivalence", "required for this experiment")),
            Some(e) => {
                if e.samples == 0 {
                    issues.push(issue("equivalence.samples", "must be positive"));
                }
                if !(e.band > 0.0) {
                    issues.push(issue("equivalence.band", "must be positive"));
                }
                if e.refine && 2 * config.grid.n > MAX_DENSE_N {
                    issues.push(issue(
                        "equivalence.refine",
                        format!("2n must be ≤ {MAX_DENSE_N}"),
                    ));
                }
            }
        },
        ExperimentKind::Compactness => {
            if let Some(c) = &config.compactness {
                if c.z[1] == 0.0 {
                    issues.push(issue(
                        "compactness.z",
                        "spectral parameter must be non-real",
                    ));
                }
            }
        }
        ExperimentKind::HjResidual => match &config.hj {
            None => issues.push(issue("hj", "required for this experiment")),
            Some(h) => {
                if h.mus.iter().any(|&m| !(m > 0.0 && m <= 1.0)) {
                    issues.push(issue("hj.mus", "every mu must lie in (0, 1]"));
                }
                if !(h.t_min > 0.0 && h.t_max > h.t_min) || h.n_times < 2 {
                    issues.push(issue("hj", "need 0 < t_min < t_max and n_times ≥ 2"));
                }
            }
        },
        ExperimentKind::NlsScatter => match &config.nls {
            None => issues.push(issue("nls", "required for this experiment")),
            Some(n) => {
                if let Some(s) = config.schedule {
                    if (s.t_max() - n.t_final).abs() > 1e-9 * n.t_final.max(1.0) {
                        issues.push(issue(
                            "schedule",
                            format!(
                                "must end at nls.t_final = {}, ends at {}",
                                n.t_final,
                                s.t_max()
                            ),
                        ));
                    }
                } else {
                    issues.push(issue("schedule", "required for this experiment"));
                }
            }
        },
    }

    // data and the domain-sizing rule
    let mut min_length = None;
    if needs_data(kind) {
        match (&config.data, &grid) {
            (None, _) => issues.push(issue("data", "required for this experiment")),
            (Some(d), Some(g)) => match d.build(g, config.seed) {
                Err(e) => issues.push(issue("data", e.to_string())),
                Ok(u0) => {
                    if let Some(nls) = &config.nls {
                        if kind == ExperimentKind::NlsScatter {
                            if let Err(e) = nls.check(&u0) {
                                issues.push(issue("nls", e.to_string()));
                            }
                        }
                    }
                    if let Some(t) = config.horizon() {
                        let r = u0.effective_radius(SIZING_TOLERANCE);
                        let band = u0.effective_band(SIZING_TOLERANCE);
                        let need = required_length(r, band, t);
                        min_length = Some(need);
                        if config.grid.length < need {
                            issues.push(issue(
                                "grid.length",
                                format!(
                                    "domain-sizing rule L ≥ 2·r + 4·Ξ·T violated (r = {r:.4}, Ξ = {band:.4}, T = {t}): need L ≥ {need:.4}, have {}",
                                    config.grid.length
                                ),
                            ));
                        }
                    }
                }
            },
            _ => {}
        }
    }

    if issues.is_empty() {
        Ok(Validated {
            config,
            classification,
            warnings,
            stepper,
            scheme,
            min_length,
        })
    } else {
        Err(issues)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub scalar: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            scalar: "f64".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    /// Seconds since the Unix epoch; the only nondeterministic field.
    pub timestamp: u64,
    pub environment: Environment,
    pub config: ExperimentConfig,
    pub classification: Classification,
    pub warnings: Vec<String>,
    pub cutoffs: String,
    pub stepper: Stepper,
    pub scheme: Scheme,
    pub verdict: String,
    pub exit_code: i32,
    pub results: Value,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

struct KindOutput {
    verdict: String,
    exit_code: i32,
    results: Value,
    csv: Vec<(String, String)>,
    binaries: Vec<(String, Field<f64>)>,
}

struct Context<'a> {
    v: &'a Validated,
    grid: Grid<f64>,
    potential: Vec<f64>,
}

impl Context<'_> {
    fn cfg(&self) -> &ExperimentConfig {
        &self.v.config
    }

    fn data(&self) -> Result<Field<f64>> {
        self.cfg()
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("data missing".into()))?
            .build(&self.grid, self.cfg().seed)
    }

    fn full_spec(&self) -> DynamicsSpec {
        DynamicsSpec::Full {
            potential: self.cfg().potential.clone(),
            stepper: self.v.stepper,
            scheme: self.v.scheme,
        }
    }

    fn kinetic(&self) -> Kinetic {
        self.v.scheme.kinetic()
    }

    fn free(&self, horizon: f64) -> Result<Arc<dyn Propagator<f64>>> {
        let spec = self
            .cfg()
            .dynamics
            .free
            .with_default_kinetic(self.kinetic());
        spec.build(&self.grid, horizon)
    }

    fn operator(&self) -> Result<HermitianOperator<f64>> {
        build_hamiltonian(&self.grid, self.v.scheme, &self.potential)
    }

    fn directed(&self, p: Arc<dyn Propagator<f64>>) -> Directed<Arc<dyn Propagator<f64>>> {
        Directed {
            inner: p,
            direction: self.cfg().dynamics.direction,
        }
    }
}

fn series_csv(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|x| format!("{x:.17e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn probe_exit(out: &ProbeOutcome<f64>) -> i32 {
    if out.report.boundary_tripped {
        EXIT_BOUNDARY
    } else if out.report.verdict.is_failing() {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    }
}

fn verdict_name(v: &crate::wave_ops::Verdict) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|x| x.as_str().map(String::from))
        .unwrap_or_default()
}

fn run_wave(ctx: &Context<'_>, inverse: bool) -> Result<KindOutput> {
    let cfg = ctx.cfg();
    let schedule = cfg
        .schedule
        .ok_or_else(|| Error::Config("schedule missing".into()))?;
    let horizon = cfg.horizon().unwrap_or(schedule.t_max());
    let u0 = ctx.data()?;
    let free = ctx.directed(ctx.free(horizon)?);
    let full_raw = ctx.full_spec().build(&ctx.grid, horizon)?;
    let full = ctx.directed(full_raw);
    let projector = if inverse && ctx.grid.n_points() <= MAX_DENSE_N {
        AcProjector::new(&ctx.operator()?, BOUND_STATE_THRESHOLD)
    } else {
        AcProjector::identity()
    };
    let s = cfg.s;
    let probe = |f: &Field<f64>| {
        if inverse {
            inverse_wave_probe(f, &free, &full, &projector, &schedule, s)
        } else {
            wave_probe(f, &free, &full, &schedule, s)
        }
    };
    let out = if cfg.dynamics.reflect {
        reflect_probe(&u0, probe)?
    } else {
        probe(&u0)?
    };
    let mut results = json!({ "report": out.report });
    if let (Some(tw), false) = (cfg.intertwining, inverse) {
        let mut defects = Vec::new();
        for &t in &schedule.times() {
            defects.push(intertwining_check(
                &u0,
                &free,
                &full,
                ctx.kinetic(),
                t,
                tw.tau,
                s,
            )?);
        }
        results["intertwining"] =
            json!({ "tau": tw.tau, "times": schedule.times(), "defects": defects });
    }
    let mut csv_buf = Vec::new();
    out.report.write_csv(&mut csv_buf)?;
    let exit_code = probe_exit(&out);
    Ok(KindOutput {
        verdict: verdict_name(&out.report.verdict),
        exit_code,
        results,
        csv: vec![(
            "series.csv".into(),
            String::from_utf8_lossy(&csv_buf).into_owned(),
        )],
        binaries: vec![("image.bin".into(), out.image)],
    })
}

fn run_budget(ctx: &Context<'_>) -> Result<KindOutput> {
    let cfg = ctx.cfg();
    let b = cfg
        .budget
        .as_ref()
        .ok_or_else(|| Error::Config("budget missing".into()))?;
    let u0 = ctx.data()?;
    let free = ctx.free(cfg.horizon().unwrap_or(0.0))?;
    let h = ctx.operator()?;
    let mut terms = Vec::new();
    for &r in &b.r {
        for pair in &b.pairs {
            terms.push(cauchy_budget(
                &u0,
                free.as_ref(),
                &h,
                ctx.kinetic(),
                pair[0],
                pair[1],
                r,
                cfg.s,
            )?);
        }
    }
    let audit = terms.iter().all(|t| t.audit());
    let results = json!({
        "series": {
            "tail": terms.iter().map(|t| t.tail).collect::<Vec<_>>(),
            "mid": terms.iter().map(|t| t.mid).collect::<Vec<_>>(),
            "calc_diff": terms.iter().map(|t| t.calc_diff).collect::<Vec<_>>(),
            "total": terms.iter().map(|t| t.total).collect::<Vec<_>>(),
        },
        "points": terms.iter().map(|t| json!({"t_n": t.t_n, "t_m": t.t_m, "r": t.r})).collect::<Vec<_>>(),
        "calc_diff_evolved": terms.iter().map(|t| t.calc_diff_evolved).collect::<Vec<_>>(),
        "audit": audit,
    });
    let csv = series_csv(
        "t_n,t_m,r,tail,mid,calc_diff,total",
        terms
            .iter()
            .map(|t| vec![t.t_n, t.t_m, t.r, t.tail, t.mid, t.calc_diff, t.total]),
    );
    Ok(KindOutput {
        verdict: if audit { "consistent" } else { "inconsistent" }.into(),
        exit_code: if audit { EXIT_OK } else { EXIT_NOT_CONVERGED },
        results,
        csv: vec![("budget.csv".into(), csv)],
        binaries: vec![],
    })
}

fn run_weak_decay(ctx: &Context<'_>) -> Result<KindOutput> {
    let cfg = ctx.cfg();
    let w = cfg
        .weak_decay
        .as_ref()
        .ok_or_else(|| Error::Config("weak_decay missing".into()))?;
    let f = ctx.data()?;
    let g = match &w.probe {
        Some(p) => p.build(&ctx.grid, cfg.seed)?,
        None => f.clone(),
    };
    let free = ctx.directed(ctx.free(cfg.horizon().unwrap_or(0.0))?);
    let series = weak_decay_probe(&f, &g, &free, &w.times)?;
    let decaying = match series.fit {
        Some(fit) => fit.exponent < 0.0,
        None => series.overlaps.iter().all(|&o| o == 0.0),
    };
    let csv = series_csv(
        "t,overlap",
        series
            .times
            .iter()
            .zip(&series.overlaps)
            .map(|(t, o)| vec![*t, *o]),
    );
    Ok(KindOutput {
        verdict: if decaying { "decaying" } else { "not-decaying" }.into(),
        exit_code: if decaying {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        },
        results: json!({ "overlaps": series }),
        csv: vec![("overlaps.csv".into(), csv)],
        binaries: vec![],
    })
}

fn run_equivalence(ctx: &Context<'_>) -> Result<KindOutput> {
    let cfg = ctx.cfg();
    let e = cfg
        .equivalence
        .as_ref()
        .ok_or_else(|| Error::Config("equivalence missing".into()))?;
    let (stats, refinement) = if e.refine {
        let scheme = ctx.v.scheme;
        let pot = cfg.potential.clone();
        let r = norm_equivalence_refinement(
            cfg.grid.n,
            cfg.grid.length,
            |g| build_hamiltonian(g, scheme, &pot.sample(g)?),
            cfg.s,
            e.samples,
            cfg.seed,
            e.band,
        )?;
        (r.coarse.clone(), Some(r))
    } else {
        (
            norm_equivalence_probe(&ctx.operator()?, cfg.s, e.samples, cfg.seed, e.band)?,
            None,
        )
    };
    let finite = stats.min > 0.0 && stats.max.is_finite();
    let csv = series_csv(
        "sample,ratio",
        stats
            .ratios
            .iter()
            .enumerate()
            .map(|(i, r)| vec![i as f64, *r]),
    );
    Ok(KindOutput {
        verdict: if finite { "equivalent" } else { "degenerate" }.into(),
        exit_code: if finite { EXIT_OK } else { EXIT_NOT_CONVERGED },
        results: json!({ "ratios": stats, "refinement": refinement }),
        csv: vec![("ratios.csv".into(), csv)],
        binaries: vec![],
    })
}

fn run_compactness(ctx: &Context<'_>) -> Result<KindOutput> {
    let cfg = ctx.cfg();
    let c = cfg.compactness.clone().unwrap_or(CompactnessConfig {
        z: default_z(),
        keep: default_keep(),
    });
    let h0 = build_free(&ctx.grid, ctx.v.scheme)?;
    let h = ctx.operator()?;
    let probe = resolvent_difference_probe(&h0, &h, Complex::new(c.z[0], c.z[1]), cfg.s)?;
    let mut record = probe.record((c.z[0], c.z[1]), cfg.s);
    record.values.truncate(c.keep);
    let ratios: Vec<f64> = probe.ratios.iter().copied().take(c.keep).collect();
    let csv = series_csv(
        "k,singular_value,ratio",
        record
            .values
            .iter()
            .zip(&ratios)
            .enumerate()
            .map(|(k, (s, r))| vec![(k + 1) as f64, *s, *r]),
    );
    Ok(KindOutput {
        verdict: record.verdict.clone(),
        exit_code: EXIT_OK,
        results: json!({ "probe": record, "ratios": ratios }),
        csv: vec![("singular_values.csv".into(), csv)],
        binaries: vec![],
    })
}

fn run_hj(ctx: &Context<'_>) -> Result<KindOutput> {
    let cfg = ctx.cfg();
    let hj = cfg
        .hj
        .as_ref()
        .ok_or_else(|| Error::Config("hj missing".into()))?;
    let ratio = (hj.t_max / hj.t_min).powf(1.0 / (hj.n_times - 1) as f64);
    let times: Vec<f64> = (0..hj.n_times)
        .map(|k| hj.t_min * ratio.powi(k as i32))
        .collect();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut all_pass = true;
    for &mu in &hj.mus {
        let profile = Arc::new(PowerTail {
            charge: hj.charge,
            mu,
        });
        let phase = DollardPhase::from_profile(&ctx.grid, profile, 0.0, 0.0)?;
        let mut sup = Vec::with_capacity(times.len());
        for &t in &times {
            let mut m = 0.0f64;
            for &xi in &DIAGNOSTIC_XI {
                m = m.max(phase.residual(t, xi)?.abs());
            }
            sup.push(m);
            rows.push(vec![mu, t, m]);
        }
        let fit = power_law_fit(&times, &sup);
        let exponent = fit.map(|f| -f.exponent);
        let pass = exponent.is_some_and(|p| p >= 2.0 * mu - 0.1);
        all_pass &= pass;
        entries.push(json!({ "mu": mu, "sup_residual": sup, "decay_exponent": exponent, "required": 2.0 * mu - 0.1, "pass": pass }));
    }
    Ok(KindOutput {
        verdict: if all_pass { "decaying" } else { "slow" }.into(),
        exit_code: if all_pass {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        },
        results: json!({ "times": times, "xi": DIAGNOSTIC_XI, "charge": hj.charge, "entries": entries }),
        csv: vec![(
            "hj_residual.csv".into(),
            series_csv("mu,t,sup_residual", rows.into_iter()),
        )],
        binaries: vec![],
    })
}

fn run_nls(ctx: &Context<'_>) -> Result<KindOutput> {
    let cfg = ctx.cfg();
    let nls = cfg
        .nls
        .as_ref()
        .ok_or_else(|| Error::Config("nls missing".into()))?;
    let schedule = cfg
        .schedule
        .ok_or_else(|| Error::Config("schedule missing".into()))?;
    let u0 = ctx.data()?;
    let out = nls_scatter(&u0, nls, &schedule)?;
    let h1 = u0.sobolev_norm(1.0);
    let stage_two_verdict = out.stage_two.as_ref().map(|r| verdict_name(&r.verdict));
    let residual_decreasing = out.residuals.len() >= 3
        && out.residuals[out.residuals.len() - 3..]
            .windows(2)
            .all(|w| w[1] < w[0]);
    let (verdict, exit_code) = if out.boundary_tripped {
        ("withheld".to_string(), EXIT_BOUNDARY)
    } else if out.free_profile.is_none() {
        ("stage-one-not-converging".to_string(), EXIT_NOT_CONVERGED)
    } else {
        ("scattering".to_string(), EXIT_OK)
    };
    let results = json!({
        "h1_norm_u0": h1,
        "mass_drift": out.mass_drift,
        "energy_drift": out.energy_drift,
        "min_energy": out.min_energy,
        "stage_one": out.stage_one,
        "stage_two": out.stage_two,
        "stage_two_verdict": stage_two_verdict,
        "residuals": out.residuals,
        "residual_decreasing": residual_decreasing,
    });
    let stage1 = series_csv(
        "t,increment",
        out.stage_one
            .times
            .iter()
            .zip(&out.stage_one.increments)
            .map(|(t, d)| vec![*t, *d]),
    );
    let resid = series_csv(
        "t,residual",
        schedule
            .times()
            .iter()
            .zip(&out.residuals)
            .map(|(t, r)| vec![*t, *r]),
    );
    let diag = series_csv(
        "t,mass,energy,boundary_mass",
        out.diagnostics
            .iter()
            .map(|d| vec![d.t, d.mass, d.energy, d.boundary_mass]),
    );
    let mut binaries = vec![("linear_profile.bin".to_string(), out.linear_profile.clone())];
    if let Some(f) = &out.free_profile {
        binaries.push(("free_profile.bin".into(), f.clone()));
    }
    Ok(KindOutput {
        verdict,
        exit_code,
        results,
        csv: vec![
            ("stage_one.csv".into(), stage1),
            ("residuals.csv".into(), resid),
            ("conservation.csv".into(), diag),
        ],
        binaries,
    })
}

fn unix_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs the experiment without touching the filesystem.
pub fn execute(
    v: &Validated,
) -> Result<(Report, Vec<(String, String)>, Vec<(String, Field<f64>)>)> {
    let grid = Grid::<f64>::new(v.config.grid.n, v.config.grid.length)?;
    let potential = v.config.potential.sample(&grid)?;
    let ctx = Context { v, grid, potential };
    let out = match v.config.experiment {
        ExperimentKind::Wave => run_wave(&ctx, false),
        ExperimentKind::InverseWave => run_wave(&ctx, true),
        ExperimentKind::Budget => run_budget(&ctx),
        ExperimentKind::WeakDecay => run_weak_decay(&ctx),
        ExperimentKind::Equivalence => run_equivalence(&ctx),
        ExperimentKind::Compactness => run_compactness(&ctx),
        ExperimentKind::HjResidual => run_hj(&ctx),
        ExperimentKind::NlsScatter => run_nls(&ctx),
    }
    .map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", v.config.experiment.name())),
        other => other,
    })?;
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: v.config.experiment,
        timestamp: unix_seconds(),
        environment: Environment::current(),
        config: v.config.clone(),
        classification: v.classification.clone(),
        warnings: v.warnings.clone(),
        cutoffs: CUTOFF_DESCRIPTION.into(),
        stepper: v.stepper,
        scheme: v.scheme,
        verdict: out.verdict,
        exit_code: out.exit_code,
        results: out.results,
    };
    Ok((report, out.csv, out.binaries))
}

/// Runs the experiment and writes `report.json`, the CSV series and any
/// field binaries into `out_dir`.
pub fn run(v: &Validated, out_dir: &Path) -> Result<RunOutcome> {
    let (report, csv, binaries) = execute(v)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let report_path = out_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&report_path, text)?;
    files.push(report_path);
    for (name, body) in csv {
        let p = out_dir.join(name);
        fs::write(&p, body)?;
        files.push(p);
    }
    for (name, field) in binaries {
        let p = out_dir.join(name);
        field.write_binary(BufWriter::new(fs::File::create(&p)?))?;
        files.push(p);
    }
    Ok(RunOutcome { report, files })
}

/// The JSON schema `report.json` conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[cfg(test)]
mod tests {
    use super::*;

    const WAVE: &str = r#"
experiment = "wave"
s = 1.0
seed = 3
grid = { n = 256, L = 400.0 }
potential = { kind = "short-range", rho = 2.0, amplitude = 0.0 }
schedule = { t0 = 1.0, n_doublings = 3 }
data = { kind = "gaussian", width = 2.0, momentum = 0.5 }
"#;

    #[test]
    fn parses_and_validates_wave() {
        let c = ExperimentConfig::from_toml(WAVE).unwrap();
        let v = validate(c).unwrap();
        assert_eq!(v.stepper, Stepper::MatrixExact);
        assert!(v.warnings.is_empty());
        let (report, csv, _) = execute(&v).unwrap();
        assert_eq!(report.verdict, "trivially-converged");
        assert_eq!(report.exit_code, EXIT_OK);
        assert_eq!(csv.len(), 1);
    }

    #[test]
    fn sizing_rule_reports_minimal_length() {
        let text = WAVE.replace("n_doublings = 3", "n_doublings = 9");
        let errs = validate(ExperimentConfig::from_toml(&text).unwrap()).unwrap_err();
        let e = errs.iter().find(|e| e.path == "grid.length").unwrap();
        assert!(e.message.contains("need L ≥"), "{}", e.message);
    }

    #[test]
    fn warns_outside_licensed_range() {
        let text = r#"
experiment = "compactness"
s = 1.5
grid = { n = 64, L = 40.0 }
potential = { kind = "delta-approx", alpha = 1.0, width = 1.5 }
"#;
        let v = validate(ExperimentConfig::from_toml(text).unwrap()).unwrap();
        assert_eq!(v.warnings.len(), 1);
        assert!(v.warnings[0].contains("outside the licensed range [-1, 1]"));
    }

    #[test]
    fn collects_multiple_issues() {
        let text = r#"
experiment = "budget"
s = 3.0
grid = { n = 100, L = 40.0 }
"#;
        let errs = validate(ExperimentConfig::from_toml(text).unwrap()).unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"grid") && paths.contains(&"s") && paths.contains(&"budget"));
        assert!(paths.contains(&"data"));
    }

    #[test]
    fn point_potential_needs_fd2() {
        let text = r#"
experiment = "compactness"
grid = { n = 64, L = 40.0 }
potential = { kind = "point", alpha = 1.0 }
"#;
        let errs = validate(ExperimentConfig::from_toml(text).unwrap()).unwrap_err();
        assert_eq!(errs[0].path, "dynamics.scheme");
        let ok = format!("{text}\n[dynamics]\nscheme = {{ scheme = \"fd2\" }}\n");
        let v = validate(ExperimentConfig::from_toml(&ok).unwrap()).unwrap();
        assert_eq!(v.scheme, Scheme::Fd2Delta { alpha: 1.0 });
    }

    #[test]
    fn schema_is_valid_json() {
        let v: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        assert!(v["required"].as_array().unwrap().len() > 5);
    }
}
