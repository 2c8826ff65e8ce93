use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use forgetbound::harness::{report, run_experiment, verify_suite, ExperimentConfig, VerifyScope};
use forgetbound::oracle::{oracle_bound_check, DiscreteHypothesisSpace, OracleCheckConfig, OracleCheckReport, OracleMode};

#[derive(Parser)]
#[command(name = "forgetbound", version, about = "Forgetting bounds for continual learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a task sequence and write metrics, bounds and posteriors.
    Run {
        /// TOML or JSON experiment config.
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized property and oracle checks.
    Verify {
        #[arg(long, default_value = "all")]
        scope: VerifyScope,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Summarize a run directory across seeds.
    Report { dir: PathBuf },
    /// Resampling check of an oracle bound on a finite hypothesis space.
    CheckSpace {
        /// JSON document describing the space.
        space: PathBuf,
        #[arg(long)]
        mode: OracleMode,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0.1)]
        c: f64,
        #[arg(long, default_value_t = 2000)]
        n_resample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Outcome {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<forgetbound::Error>(), Some(forgetbound::Error::Config(_))));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            if cfg.output_dir.is_none() {
                cfg.output_dir = Some(PathBuf::from("runs").join(format!(
                    "{}_{}",
                    cfg.method.name(),
                    cfg.environment.kind.name()
                )));
            }
            let artifacts = run_experiment::<f64>(&cfg)?;
            for s in &artifacts.seeds {
                match &s.error {
                    Some(e) => println!("seed {}: FAILED ({e})", s.seed),
                    None => println!("seed {}: {}", s.seed, s.metrics_csv.display()),
                }
            }
            let dir = cfg.output_dir.as_deref().expect("output directory set above");
            print!("{}", report(dir)?.table());
            Ok(if artifacts.failed() { Outcome::Failed } else { Outcome::Ok })
        }
        Command::Verify { scope, seed, json } => {
            let r = verify_suite(scope, seed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                for c in &r.checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("{tag} {:<26} {:>7.2}s  {}", c.name, c.seconds, c.detail);
                }
            }
            Ok(if r.passed() { Outcome::Ok } else { Outcome::Failed })
        }
        Command::Report { dir } => {
            let s = report(&dir).with_context(|| format!("summarizing {}", dir.display()))?;
            print!("{}", s.table());
            println!("wrote {}", dir.join("summary.csv").display());
            Ok(Outcome::Ok)
        }
        Command::CheckSpace {
            space,
            mode,
            lambda,
            c,
            n_resample,
            seed,
        } => {
            let space = DiscreteHypothesisSpace::<f64>::from_json_file(&space)?;
            let mut cfg = OracleCheckConfig::new(mode, lambda);
            cfg.c = c;
            cfg.n_resample = n_resample;
            cfg.seed = seed;
            let r = oracle_bound_check(&space, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&OracleCheckReport::new(mode, &r))?);
            Ok(if r.holds && !r.precondition_violated { Outcome::Ok } else { Outcome::Failed })
        }
    }
}
