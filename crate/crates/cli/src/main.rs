//! `weylsim`: reproducible ensembles, parameter sweeps, verification suites
//! and oracle queries for interacting particle systems on root systems.
//!
//! Exit status: 0 success, 1 I/O failure, 2 invalid configuration or usage,
//! 3 numerical failure, 4 a verification check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use weylsim_core::analytics::ScaleWindow;
use weylsim_core::besq::{besq_exact_transition, besq_hit_probability, besq_zero_dimension, BesqSpec};
use weylsim_core::runner::{self, RunError, OUTPUT_ROOT_ENV};
use weylsim_core::seeding::trajectory_seed;
use weylsim_core::verify::{run_verify, VerifyOptions, VerifyScope};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "weylsim", version, about, long_about = None)]
#[command(after_help = "Exit status: 0 ok, 1 I/O error, 2 invalid configuration, 3 numerical failure, 4 verification failure.")]
struct Cli {
    /// Root directory for run directories when the config has no `output_dir`.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, value_name = "DIR")]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble from a config file (or a previous run's manifest.json).
    Simulate {
        config: PathBuf,
        /// Run directory (overrides the config and the output root).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores); results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a parameter sweep; the config must contain a `sweep` grid.
    Sweep {
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the self-check suites and print a machine-readable report.
    Verify {
        #[arg(long, value_enum, default_value_t = Scope::All)]
        scope: Scope,
        /// Random inputs per root system for the exact identities.
        #[arg(long)]
        algebra_inputs: Option<usize>,
        /// Antithetic draws per state for the drift checks.
        #[arg(long)]
        drift_draws: Option<usize>,
        /// Sample size of the oracle checks.
        #[arg(long)]
        oracle_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report to this file.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Re-estimate the collision-set dimension of a finished run at another
    /// eps of its grid and/or another dyadic scale window.
    Dimension {
        run_dir: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        /// Coarsest dyadic level of the regression (box size T / 2^level).
        #[arg(long, requires = "max_level")]
        min_level: Option<usize>,
        /// Finest dyadic level of the regression.
        #[arg(long, requires = "min_level")]
        max_level: Option<usize>,
    },
    /// Squared Bessel oracle: hitting probability of zero by time t, zero-set
    /// dimension and optional exact samples of X_t.
    Besq {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        x0: f64,
        #[arg(long)]
        t: f64,
        /// Number of exact transition samples to print.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Algebra,
    Drift,
    Oracle,
    All,
}

impl From<Scope> for VerifyScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Algebra => VerifyScope::Algebra,
            Scope::Drift => VerifyScope::Drift,
            Scope::Oracle => VerifyScope::Oracle,
            Scope::All => VerifyScope::All,
        }
    }
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

/// Prints to stdout, ignoring a closed pipe (`weylsim ... | head`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(v: &serde_json::Value) {
    emit(&serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn load(config: &Path, workers: Option<usize>) -> Result<(runner::RunConfig, serde_json::Value), RunError> {
    let (mut cfg, raw) = runner::load_config(config)?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    Ok((cfg, raw))
}

fn simulate(config: &Path, out: Option<PathBuf>, workers: Option<usize>, root: Option<&Path>) -> Result<(), RunError> {
    let (cfg, raw) = load(config, workers)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir_with_root(root));
    let outcome = runner::run_simulate(&cfg, &raw, &dir)?;
    let s = &outcome.manifest.summary;
    print_json(&json!({
        "run_dir": outcome.dir,
        "completed": s.completed,
        "failed": s.failures.len(),
        "event_rate": s.event_rate,
        "dimension": {
            "value": s.dimension.estimate.value,
            "stderr": s.dimension.estimate.stderr,
            "status": s.dimension.estimate.status,
        },
        "predictor": { "lower": s.predictor.lower, "upper": s.predictor.upper },
        "wall_clock_seconds": outcome.manifest.wall_clock_seconds,
    }));
    for f in &s.failures {
        eprintln!("warning: trajectory {} (seed {}) failed: {}", f.index, f.seed, f.error);
    }
    Ok(())
}

fn sweep(config: &Path, out: Option<PathBuf>, workers: Option<usize>, root: Option<&Path>) -> Result<(), RunError> {
    let (cfg, raw) = load(config, workers)?;
    if cfg.sweep.is_none() {
        return Err(RunError::Invalid(vec!["`sweep` grid missing from the config".into()]));
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir_with_root(root));
    let table = runner::run_sweep(&cfg, &raw, &dir)?;
    emit(table.to_csv().trim_end());
    eprintln!("wrote {}", dir.join("sweep.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.output_root.as_deref();
    let result = match cli.command {
        Command::Simulate { config, out, workers } => simulate(&config, out, workers, root),
        Command::Sweep { config, out, workers } => sweep(&config, out, workers, root),
        Command::Verify {
            scope,
            algebra_inputs,
            drift_draws,
            oracle_samples,
            seed,
            report,
        } => {
            let d = VerifyOptions::default();
            let opts = VerifyOptions {
                algebra_inputs: algebra_inputs.unwrap_or(d.algebra_inputs),
                drift_draws: drift_draws.unwrap_or(d.drift_draws),
                oracle_samples: oracle_samples.unwrap_or(d.oracle_samples),
                seed: seed.unwrap_or(d.seed),
                ..d
            };
            let rep = run_verify(scope.into(), &opts);
            let text = serde_json::to_string_pretty(&rep).expect("report serializes");
            emit(&text);
            for c in rep.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAILED {}: value {} vs threshold {} ({})", c.name, c.value, c.threshold, c.detail);
            }
            if let Some(path) = report {
                if let Err(e) = std::fs::write(&path, text + "\n") {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(EXIT_IO);
                }
            }
            return if rep.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            };
        }
        Command::Dimension {
            run_dir,
            eps,
            min_level,
            max_level,
        } => {
            let window = min_level.zip(max_level).map(|(min_level, max_level)| ScaleWindow { min_level, max_level });
            runner::reanalyze_dimension(&run_dir, eps, window).map(|r| {
                print_json(&serde_json::to_value(&r).expect("reanalysis serializes"));
            })
        }
        Command::Besq {
            delta,
            x0,
            t,
            samples,
            seed,
        } => {
            let spec = match BesqSpec::new(delta, x0) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let hit = if spec.hits_zero() && x0 > 0.0 && t > 0.0 {
                besq_hit_probability(&spec, t).ok()
            } else {
                None
            };
            let draws: Result<Vec<f64>, _> = (0..samples)
                .map(|i| besq_exact_transition(&spec, t, trajectory_seed(seed, i as u64)))
                .collect();
            match draws {
                Ok(draws) => {
                    print_json(&json!({
                        "delta": delta,
                        "x0": x0,
                        "t": t,
                        "eta": spec.eta(),
                        "hits_zero": spec.hits_zero(),
                        "hit_probability": hit,
                        "zero_set_dimension": besq_zero_dimension(&spec),
                        "samples": draws,
                    }));
                    Ok(())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
