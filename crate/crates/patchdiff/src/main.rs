use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use patchdiff::harness::{
    run_experiment, run_with_workers, workers_from_env, write_failure_manifest, ExperimentConfig,
    ExperimentKind,
};

/// Patch-structured population simulator and operator toolkit.
#[derive(Parser)]
#[command(name = "patchdiff", version, about)]
struct Cli {
    /// Experiment to run: validate, simulate-chain, simulate-sde,
    /// generator-check, semigroup-check, trotter-check, absorption,
    /// bound-check, hitting-time, or stopping-check.
    experiment: String,

    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Replicate count override.
    #[arg(long)]
    reps: Option<u64>,

    /// Output directory for the manifest and artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> patchdiff::Result<bool> {
    let kind: ExperimentKind = cli.experiment.parse()?;
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = Some(seed);
    }
    if let Some(reps) = cli.reps {
        cfg.reps = Some(reps);
    }
    let workers = workers_from_env()?;
    match run_with_workers(workers, || run_experiment(kind, &cfg, &cli.out)) {
        Ok(manifest) => {
            for check in &manifest.checks {
                let verdict = if check.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {}: {}", check.name, check.detail);
            }
            if !manifest.passed() {
                eprintln!("one or more checks failed; see the manifest for detail");
            }
            Ok(manifest.passed())
        }
        Err(e) => {
            write_failure_manifest(&cli.out, kind, &cfg, &e);
            Err(e)
        }
    }
}
