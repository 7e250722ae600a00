//! Acceptance suite. Every test prints one `ACCEPT` line with the measured
//! value next to its pinned tolerance, then asserts.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scatterlab::experiment::{self, execute, ExperimentConfig, Validated};
use scatterlab::grid::GaussianPacket;
use scatterlab::nls::{nls_scatter, NlsConfig};
use scatterlab::operator_lab::{
    build_free, build_hamiltonian, delta_resolvent_kernel, norm_equivalence_refinement,
    resolvent_difference_probe, AcProjector,
};
use scatterlab::propagators::{
    build_dollard_phase, CrankNicolson, DollardDynamics, FreeDynamics, SplitStep,
};
use scatterlab::wave_ops::{inverse_wave_probe, weak_decay_probe};
use scatterlab::{Complex, Field, Grid, PotentialSpec, Propagator, Schedule, Scheme};
use serde_json::Value;

fn report(id: &str, name: &str, pass: bool, detail: String) {
    println!(
        "ACCEPT {id} {} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn validated(toml: &str) -> Validated {
    let cfg = ExperimentConfig::from_toml(toml).expect("parse");
    experiment::validate(cfg).unwrap_or_else(|e| panic!("invalid config: {e:?}"))
}

fn results(toml: &str) -> (String, Value) {
    let (r, _, _) = execute(&validated(toml)).expect("run");
    (r.verdict, r.results)
}

fn f64s(v: &Value) -> Vec<f64> {
    v.as_array()
        .expect("array")
        .iter()
        .map(|x| x.as_f64().expect("number"))
        .collect()
}

#[test]
fn c01_unitarity_and_parseval() {
    let g = Grid::<f64>::new(1024, 200.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = Field::random_band_limited(&g, 10.0, &mut rng).normalized();
    let packet = Field::gaussian(
        &g,
        GaussianPacket {
            center: -10.0,
            width: 2.0,
            momentum: 1.0,
        },
    );

    let round = (&f.to_frequency().to_space() - &f).norm();

    let v = PotentialSpec::ShortRange {
        rho: 2.0,
        amplitude: 1.0,
    }
    .sample(&g)
    .unwrap();
    let zeros = vec![0.0; 1024];
    let lr = PotentialSpec::LongRange {
        charge: 1.0,
        mu: 1.0,
    };
    let props: Vec<(&str, Arc<dyn Propagator<f64>>)> = vec![
        ("free", Arc::new(FreeDynamics::exact(&g))),
        (
            "split-step",
            Arc::new(SplitStep::new(&g, v.clone(), 1e-2).unwrap()),
        ),
        (
            "crank-nicolson",
            Arc::new(CrankNicolson::new(&g, 1.0, &zeros, 1e-2).unwrap()),
        ),
        (
            "matrix-exact",
            Arc::new(build_hamiltonian(&g, Scheme::Spectral, &v).unwrap()),
        ),
        (
            "dollard",
            Arc::new(DollardDynamics::new(
                build_dollard_phase(&lr, 10.0, &g, 1.0).unwrap(),
            )),
        ),
    ];
    let mut worst = 0.0f64;
    let mut worst_name = "";
    for (name, p) in &props {
        for u in [&f, &packet] {
            for t in [1.0, -3.7, 10.0] {
                let d = (p.evolve(u, t).unwrap().norm() - u.norm()).abs() / u.norm();
                let d2 = (p.evolve_adjoint(u, t).unwrap().norm() - u.norm()).abs() / u.norm();
                if d.max(d2) > worst {
                    worst = d.max(d2);
                    worst_name = name;
                }
            }
        }
    }
    let pass = worst <= 1e-11 && round <= 1e-12;
    report(
        "C1",
        "unitarity/Parseval (n=1024, L=200)",
        pass,
        format!("max norm defect {worst:.2e} ({worst_name}) <= 1e-11, DFT round trip {round:.2e} <= 1e-12"),
    );
    assert!(pass);
}

#[test]
fn c02_functional_calculus_vs_split_step() {
    let g = Grid::<f64>::new(512, 100.0).unwrap();
    let v = PotentialSpec::ShortRange {
        rho: 2.0,
        amplitude: 1.0,
    }
    .sample(&g)
    .unwrap();
    let f = Field::gaussian(
        &g,
        GaussianPacket {
            center: -5.0,
            width: 2.0,
            momentum: 1.0,
        },
    )
    .normalized();
    let h = build_hamiltonian(&g, Scheme::Spectral, &v).unwrap();
    let exact = h.propagate(&f, 1.0).unwrap();
    let split = SplitStep::new(&g, v, 1e-3)
        .unwrap()
        .evolve(&f, 1.0)
        .unwrap();
    let err = (&exact - &split).norm();
    let pass = err <= 1e-4;
    report(
        "C2",
        "functional calculus vs split-step (dt=1e-3, t=1, n=512)",
        pass,
        format!("L2 gap {err:.2e} <= 1e-4"),
    );
    assert!(pass);
}

#[test]
fn c03_norm_equivalence_under_refinement() {
    let stats = norm_equivalence_refinement(
        512,
        100.0,
        |g: &Grid<f64>| {
            build_hamiltonian(g, Scheme::Fd2Delta { alpha: 1.0 }, &vec![0.0; g.n_points()])
        },
        1.0,
        32,
        5,
        4.0,
    )
    .unwrap();
    let c = &stats.coarse;
    let finite =
        c.min > 0.0 && c.max.is_finite() && stats.fine.min > 0.0 && stats.fine.max.is_finite();
    let pass = finite && stats.min_change <= 0.1 && stats.max_change <= 0.1;
    report(
        "C3",
        "norm equivalence: fd2-delta alpha=1, s=1, 32 samples, n 512->1024",
        pass,
        format!(
            "ratios [{:.4}, {:.4}] -> [{:.4}, {:.4}], drift min {:.2}% max {:.2}% <= 10%",
            c.min,
            c.max,
            stats.fine.min,
            stats.fine.max,
            100.0 * stats.min_change,
            100.0 * stats.max_change
        ),
    );
    assert!(pass);
}

#[test]
fn c04a_delta_resolvent_difference_rank_one() {
    let g = Grid::<f64>::new(512, 100.0).unwrap();
    let h0 = build_free(&g, Scheme::Fd2).unwrap();
    let h = build_hamiltonian(&g, Scheme::Fd2Delta { alpha: 1.0 }, &vec![0.0; 512]).unwrap();
    let p = resolvent_difference_probe(&h0, &h, Complex::new(0.0, 1.0), 0.0).unwrap();
    let r = p.ratio(2);
    let pass = r <= 1e-2;
    report(
        "C4a",
        "compactness: delta resolvent difference at z=i (n=512, L=100)",
        pass,
        format!("sigma_2/sigma_1 = {r:.2e} <= 1e-2"),
    );
    assert!(pass);
}

#[test]
fn c04b_short_range_resolvent_difference_decay() {
    let g = Grid::<f64>::new(512, 100.0).unwrap();
    let v = PotentialSpec::ShortRange {
        rho: 2.0,
        amplitude: 1.0,
    }
    .sample(&g)
    .unwrap();
    let h0 = build_free(&g, Scheme::Spectral).unwrap();
    let h = build_hamiltonian(&g, Scheme::Spectral, &v).unwrap();
    let p = resolvent_difference_probe(&h0, &h, Complex::new(0.0, 1.0), 0.0).unwrap();
    let r = p.ratio(20);
    let pass = r <= 1e-3;
    report(
        "C4b",
        "compactness: short-range rho=2 resolvent difference at z=i (n=512, L=100)",
        pass,
        format!("sigma_20/sigma_1 = {r:.2e} <= 1e-3"),
    );
    assert!(pass);
}

#[test]
fn c05_delta_kernel_calibration() {
    let z = Complex::new(0.0, 1.0);
    let coarse = delta_resolvent_kernel(z, 1.0, &Grid::<f64>::new(512, 100.0).unwrap()).unwrap();
    let fine = delta_resolvent_kernel(z, 1.0, &Grid::<f64>::new(1024, 100.0).unwrap()).unwrap();
    let drift = ((fine.calibrated - coarse.calibrated) / coarse.calibrated).norm();
    let resid = coarse.fit_residual.max(fine.fit_residual);
    let pass = resid <= 5e-2 && drift <= 5e-2;
    report(
        "C5",
        "delta kernel calibration (z=i, alpha=1, n 512->1024)",
        pass,
        format!(
            "Frobenius residual {resid:.2e} <= 5e-2, prefactor drift {drift:.2e} <= 5e-2; calibrated/standard = {:.4}; alternate/standard = {:.4} (reported only)",
            fine.calibrated_over_standard, fine.alternate_over_standard
        ),
    );
    assert!(pass);
}

#[test]
fn c06_free_weak_decay() {
    let g = Grid::<f64>::new(8192, 1024.0).unwrap();
    let f = Field::gaussian(
        &g,
        GaussianPacket {
            center: 0.0,
            width: 1.0,
            momentum: 0.0,
        },
    );
    let times: Vec<f64> = (0..=6).map(|k| 5.0 * 2f64.powf(k as f64 / 2.0)).collect();
    let series = weak_decay_probe(&f, &f, &FreeDynamics::exact(&g), &times).unwrap();
    let m = f.norm_sqr();
    let gap = series
        .times
        .iter()
        .zip(&series.overlaps)
        .map(|(t, o)| (o / m - (1.0 + t * t).powf(-0.25)).abs())
        .fold(0.0f64, f64::max);
    let exponent = series.fit.map(|fit| fit.exponent).unwrap_or(f64::NAN);
    let pass = gap <= 1e-6 && (exponent + 0.5).abs() <= 0.05;
    report(
        "C6",
        "weak decay: free Gaussian overlap on t in [5, 40]",
        pass,
        format!(
            "max gap to (1+t^2)^(-1/4) = {gap:.2e} <= 1e-6, exponent {exponent:.4} in -0.5 +- 0.05"
        ),
    );
    assert!(pass);
}

const SHORT_RANGE_WAVE: &str = r#"
experiment = "wave"
grid = { n = 1024, L = 800.0 }
potential = { kind = "short-range", rho = 2.0, amplitude = 0.3 }
schedule = { t_0 = 5.0, n_doublings = 4 }
data = { kind = "gaussian", width = 6.0, momentum = 1.0 }
"#;

#[test]
fn c07_short_range_wave_operator() {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.0, 1.0] {
        let (verdict, res) = results(&format!("s = {s}\n{SHORT_RANGE_WAVE}"));
        let rep = &res["report"];
        let inc = f64s(&rep["increments"]);
        let strictly = inc.windows(2).all(|w| w[1] < w[0]);
        let exponent = rep["fit"]["exponent"].as_f64().unwrap_or(f64::NAN);
        let iso = rep["isometry_defect"].as_f64().unwrap();
        ok &= strictly && exponent <= -0.5 && iso <= 1e-10 && verdict == "converging";
        parts.push(format!(
            "s={s}: {verdict}, strictly decreasing {strictly}, exponent {exponent:.3} <= -0.5, isometry {iso:.1e} <= 1e-10"
        ));
    }
    report(
        "C7",
        "short-range wave operator (rho=2, amp 0.3, t0=5, 4 doublings)",
        ok,
        parts.join("; "),
    );
    assert!(ok);
}

const LONG_RANGE_WAVE: &str = r#"
experiment = "wave"
grid = { n = 1024, L = 1024.0 }
potential = { kind = "long-range", z = 1.0, mu = 1.0 }
schedule = { t_0 = 5.0, n_doublings = 4 }
data = { kind = "gaussian", width = 6.0, momentum = 1.0 }
"#;

#[test]
fn c08a_long_range_contrast() {
    let dollard = format!(
        "{LONG_RANGE_WAVE}\n[dynamics]\nfree = {{ kind = \"dollard\", potential = {{ kind = \"long-range\", z = 1.0, mu = 1.0 }}, t_ref = 1.0 }}\n"
    );
    let (v_mod, r_mod) = results(&dollard);
    let (v_free, r_free) = results(LONG_RANGE_WAVE);
    let last_mod = *f64s(&r_mod["report"]["increments"]).last().unwrap();
    let last_free = *f64s(&r_free["report"]["increments"]).last().unwrap();
    let failing = !matches!(v_free.as_str(), "converging" | "trivially-converged");
    let pass = last_mod <= 0.2 * last_free && failing;
    report(
        "C8a",
        "long-range contrast (mu=1, Z=1) at t=80",
        pass,
        format!(
            "modified {last_mod:.3e} <= 0.2 x unmodified {last_free:.3e} (ratio {:.3}); unmodified verdict {v_free}, modified {v_mod}",
            last_mod / last_free
        ),
    );
    assert!(pass);
}

#[test]
fn c08b_hamilton_jacobi_residual_decay() {
    let (_, res) = results(
        r#"
experiment = "hj-residual"
grid = { n = 256, L = 100.0 }
hj = { mus = [0.6, 0.8, 1.0], charge = 1.0 }
"#,
    );
    let mut ok = true;
    let mut parts = Vec::new();
    for e in res["entries"].as_array().unwrap() {
        let mu = e["mu"].as_f64().unwrap();
        let p = e["decay_exponent"].as_f64().unwrap_or(f64::NAN);
        ok &= p >= 2.0 * mu - 0.1;
        parts.push(format!("mu={mu}: {p:.3} >= {:.2}", 2.0 * mu - 0.1));
    }
    report(
        "C8b",
        "HJ residual exponent >= 2mu - 0.1",
        ok,
        parts.join(", "),
    );
    assert!(ok);
}

#[test]
fn c09_budget_audit() {
    let (_, res) = results(
        r#"
experiment = "budget"
grid = { n = 1024, L = 640.0 }
potential = { kind = "delta-approx", alpha = 1.0, width = 1.5 }
data = { kind = "gaussian", width = 4.0 }
budget = { r = [1.0, 4.0, 16.0], pairs = [[5.0, 10.0], [40.0, 80.0]] }
"#,
    );
    let s = &res["series"];
    let (tail, calc) = (f64s(&s["tail"]), f64s(&s["calc_diff"]));
    let rs: Vec<f64> = res["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["r"].as_f64().unwrap())
        .collect();
    let audit = res["audit"].as_bool().unwrap();
    // data band: ‖ξ‖ with tolerance 1e-10 for width 4 is below 2, so λ ≤ 4
    let support_tail = tail
        .iter()
        .zip(&rs)
        .filter(|(_, &r)| r >= 4.0)
        .map(|(t, _)| *t)
        .fold(0.0f64, f64::max);
    let shrinking = calc.chunks(2).all(|c| c[1] < c[0]);
    let pass = audit && support_tail <= 1e-12 && shrinking;
    report(
        "C9",
        "budget audit (delta-approx alpha=1)",
        pass,
        format!(
            "total <= 2 tail + mid + calc_diff on all {} points: {audit}; tail for R >= support {support_tail:.1e}; calc_diff(40,80) < calc_diff(5,10) per R: {shrinking} ({:?})",
            tail.len(),
            calc
        ),
    );
    assert!(pass);
}

#[test]
fn c10_nls_scattering() {
    let g = Grid::<f64>::new(2048, 400.0).unwrap();
    let raw = Field::gaussian(
        &g,
        GaussianPacket {
            center: 0.0,
            width: 3.0,
            momentum: 0.0,
        },
    );
    let u0 = raw.scaled(0.1 / raw.sobolev_norm(1.0));
    let h1 = u0.sobolev_norm(1.0);
    let cfg = NlsConfig::preset();
    let schedule = Schedule::new(2.5, 4).unwrap();
    let out = nls_scatter(&u0, &cfg, &schedule).unwrap();

    let inc = &out.stage_one.increments;
    let decreasing = inc.windows(2).all(|w| w[1] < w[0]);
    let final_residual = out.residuals.last().copied().unwrap_or(f64::INFINITY);
    let mid_residual = out
        .residuals
        .get(out.residuals.len().saturating_sub(2))
        .copied()
        .unwrap_or(f64::NAN);

    let linear_cfg = NlsConfig {
        nonlinear: false,
        ..cfg.clone()
    };
    let lin = nls_scatter(&u0, &linear_cfg, &schedule).unwrap();
    let v = cfg.potential.sample(&g).unwrap();
    let direct = inverse_wave_probe(
        &u0,
        &FreeDynamics::exact(&g),
        &SplitStep::new(&g, v, cfg.dt).unwrap(),
        &AcProjector::identity(),
        &schedule,
        1.0,
    )
    .unwrap();
    let cross = match &lin.free_profile {
        Some(p) => (p - &direct.image).sobolev_norm(1.0),
        None => f64::INFINITY,
    };
    let budget = lin.stage_one.increments.last().copied().unwrap_or(0.0)
        + lin
            .stage_two
            .as_ref()
            .map(|r| r.last_increment())
            .unwrap_or(0.0);

    let pass = !out.boundary_tripped
        && out.mass_drift <= 1e-8
        && out.energy_drift <= 1e-6
        && decreasing
        && final_residual <= 0.05 * h1
        && cross <= budget;
    report(
        "C10",
        "NLS sigma=5, alpha=1, |u0|_H1=0.1, T=40 (n=2048, L=400)",
        pass,
        format!(
            "mass drift {:.1e} <= 1e-8, energy drift {:.1e} <= 1e-6, stage-1 decreasing {decreasing}, final residual {final_residual:.1e} <= {:.1e} (t=20: {mid_residual:.1e}), linear cross-check {cross:.1e} <= {budget:.1e}, boundary tripped {}",
            out.mass_drift,
            out.energy_drift,
            0.05 * h1,
            out.boundary_tripped
        ),
    );
    assert!(pass);
}

fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn c11_determinism() {
    let configs = [
        format!("s = 1.0\nseed = 9\n{SHORT_RANGE_WAVE}"),
        r#"
experiment = "equivalence"
s = 1.0
seed = 42
grid = { n = 256, L = 100.0 }
potential = { kind = "short-range", rho = 2.0, amplitude = 1.0 }
equivalence = { samples = 16, band = 8.0 }
"#
        .to_string(),
        r#"
experiment = "weak-decay"
seed = 3
grid = { n = 1024, L = 400.0 }
data = { kind = "gaussian", width = 2.0, momentum = 1.0 }
weak_decay = { times = [1.0, 2.0, 4.0] }
"#
        .to_string(),
    ];
    let mut identical = true;
    for c in &configs {
        let v = validated(c);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = experiment::run(&v, a.path()).unwrap();
        let rb = experiment::run(&v, b.path()).unwrap();
        for (fa, fb) in ra.files.iter().zip(&rb.files) {
            let x = std::fs::read(fa).unwrap();
            let y = std::fs::read(fb).unwrap();
            identical &= if fa.ends_with("report.json") {
                without_timestamp(&String::from_utf8_lossy(&x))
                    == without_timestamp(&String::from_utf8_lossy(&y))
            } else {
                x == y
            };
        }
    }
    report(
        "C11",
        "determinism (wave, equivalence, weak-decay)",
        identical,
        format!(
            "{} configs rerun, all outputs byte-identical modulo timestamp: {identical}",
            configs.len()
        ),
    );
    assert!(identical);
}
