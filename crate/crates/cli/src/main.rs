use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use scatterlab::experiment::{
    self, ExperimentConfig, Validated, EXIT_BOUNDARY, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_RUNTIME,
};
use scatterlab::Error;

/// Wave-operator experiments on Sobolev spaces.
#[derive(Parser, Debug)]
#[command(name = "scatterlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a config against every invariant without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one experiment and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several configs as independent jobs, one output directory each.
    Sweep {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory (for `sweep`, the root holding one directory per config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output root; overrides the config's `output` field.
    #[arg(long = "out-root", env = "SCATTERLAB_OUT", hide = true)]
    root: Option<PathBuf>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into())
}

fn exit_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Toml(_) | Error::Resolution { .. } | Error::StepSize(_) => {
            EXIT_CONFIG
        }
        Error::BoundaryTrip { .. } => EXIT_BOUNDARY,
        Error::StageOneDiverged => EXIT_NOT_CONVERGED,
        _ => EXIT_RUNTIME,
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Validated, i32> {
    let mut config = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return Err(match e {
                Error::Io(_) => EXIT_RUNTIME,
                _ => EXIT_CONFIG,
            });
        }
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    match experiment::validate(config) {
        Ok(v) => {
            for w in &v.warnings {
                eprintln!("{}: warning: {w}", path.display());
            }
            Ok(v)
        }
        Err(issues) => {
            for i in &issues {
                eprintln!("{}: error: {i}", path.display());
            }
            Err(EXIT_CONFIG)
        }
    }
}

/// `--out` beats the environment root, which beats the config's `output`.
fn out_dir(v: &Validated, config: &Path, out: &OutArgs) -> PathBuf {
    if let Some(dir) = &out.out {
        return dir.clone();
    }
    if let Some(root) = &out.root {
        return root.join(stem(config));
    }
    match &v.config.output {
        Some(o) => PathBuf::from(o),
        None => PathBuf::from("out").join(stem(config)),
    }
}

fn run_one(config: &Path, dir: Option<PathBuf>, out: &OutArgs, seed: Option<u64>) -> i32 {
    let v = match load(config, seed) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let dir = dir.unwrap_or_else(|| out_dir(&v, config, out));
    match experiment::run(&v, &dir) {
        Ok(outcome) => {
            println!(
                "{}: {} verdict={} exit={} -> {}",
                config.display(),
                v.config.experiment.name(),
                outcome.report.verdict,
                outcome.exit_code(),
                dir.display()
            );
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            exit_for(&e)
        }
    }
}

fn sweep(configs: &[PathBuf], out: &OutArgs, seed: Option<u64>, jobs: usize) -> i32 {
    let root = out
        .out
        .clone()
        .or_else(|| out.root.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![0; configs.len()]);
    let workers = jobs.clamp(1, configs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let dir = root.join(format!("{i:03}-{}", stem(cfg)));
                let code = run_one(cfg, Some(dir), out, seed);
                codes.lock().unwrap()[i] = code;
            });
        }
    });
    let codes = codes.into_inner().unwrap();
    codes.into_iter().max().unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { config } => match load(&config, None) {
            Ok(v) => {
                let c = &v.classification;
                println!(
                    "{}: ok ({}, class {:?}, modifier required: {}, stepper {:?}, scheme {})",
                    config.display(),
                    v.config.experiment.name(),
                    c.example,
                    c.modifier_required,
                    v.stepper,
                    v.scheme.name()
                );
                if let Some(l) = v.min_length {
                    println!("minimal L from the sizing rule: {l:.4}");
                }
                0
            }
            Err(code) => code,
        },
        Command::Run { config, out, seed } => run_one(&config, None, &out, seed),
        Command::Sweep {
            configs,
            out,
            seed,
            jobs,
        } => sweep(&configs, &out, seed, jobs),
    };
    ExitCode::from(code as u8)
}
