use std::fs;
use std::io::BufReader;

use scatterlab::experiment::{self, ExperimentConfig, EXIT_OK};
use scatterlab::Field;

fn run(text: &str) -> (tempfile::TempDir, experiment::RunOutcome) {
    let v = experiment::validate(ExperimentConfig::from_toml(text).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = experiment::run(&v, dir.path()).unwrap();
    (dir, out)
}

#[test]
fn wave_outputs_round_trip() {
    let (dir, out) = run(r#"
experiment = "wave"
s = 1.0
grid = { n = 256, L = 256.0 }
potential = { kind = "short-range", rho = 2.0, amplitude = 0.3 }
schedule = { t_0 = 2.0, n_doublings = 3 }
data = { kind = "gaussian", width = 3.0, momentum = 1.0 }
"#);
    assert_eq!(out.exit_code(), EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,norm,increment,boundary_mass"));
    assert_eq!(lines.count(), 4);
    let image: Field<f64> = Field::read_binary(BufReader::new(
        fs::File::open(dir.path().join("image.bin")).unwrap(),
    ))
    .unwrap();
    assert_eq!(image.grid().n_points(), 256);
    let norms = out.report.results["report"]["norms"].as_array().unwrap();
    let last = norms.last().unwrap().as_f64().unwrap();
    assert!((image.sobolev_norm(1.0) - last).abs() < 1e-12);
    assert!(out.report.cutoffs.contains("phi_R"));
}

#[test]
fn reflected_and_adjoint_directions_agree_for_even_data() {
    let base = r#"
experiment = "wave"
grid = { n = 256, L = 256.0 }
potential = { kind = "short-range", rho = 2.0, amplitude = 0.3 }
schedule = { t_0 = 2.0, n_doublings = 2 }
data = { kind = "gaussian", width = 3.0 }
"#;
    let (_, reflect) = run(&format!("{base}\n[dynamics]\nreflect = true\n"));
    let (_, adjoint) = run(&format!("{base}\n[dynamics]\ndirection = \"adjoint\"\n"));
    let a = &reflect.report.results["report"]["increments"];
    let b = &adjoint.report.results["report"]["increments"];
    for (x, y) in a.as_array().unwrap().iter().zip(b.as_array().unwrap()) {
        assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-10);
    }
}

#[test]
fn compactness_keeps_requested_values() {
    let (_, out) = run(r#"
experiment = "compactness"
grid = { n = 128, L = 50.0 }
potential = { kind = "point", alpha = 1.0 }
dynamics = { scheme = { scheme = "fd2" } }
compactness = { keep = 5 }
"#);
    let probe = &out.report.results["probe"];
    assert_eq!(probe["values"].as_array().unwrap().len(), 5);
    assert_eq!(probe["verdict"], "rank-one");
}

#[test]
fn intertwining_defects_are_reported() {
    let (_, out) = run(r#"
experiment = "wave"
grid = { n = 256, L = 256.0 }
potential = { kind = "short-range", rho = 2.0, amplitude = 0.3 }
schedule = { t_0 = 2.0, n_doublings = 2 }
data = { kind = "gaussian", width = 3.0, momentum = 1.0 }
intertwining = { tau = 0.5 }
"#);
    let d = out.report.results["intertwining"]["defects"]
        .as_array()
        .unwrap();
    assert_eq!(d.len(), 3);
    let v: Vec<f64> = d.iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(v[2] < v[0]);
}

#[test]
fn stepper_defaults_follow_grid_size() {
    let text = |n: usize| {
        format!(
            r#"
experiment = "compactness"
grid = {{ n = {n}, L = 400.0 }}
potential = {{ kind = "short-range", rho = 2.0, amplitude = 1.0 }}
"#
        )
    };
    let small = experiment::validate(ExperimentConfig::from_toml(&text(512)).unwrap()).unwrap();
    assert_eq!(small.stepper, scatterlab::propagators::Stepper::MatrixExact);
    let big = experiment::validate(ExperimentConfig::from_toml(&text(8192)).unwrap()).unwrap_err();
    assert!(big.iter().any(|i| i.path == "grid.n"));
}
