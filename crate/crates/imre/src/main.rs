use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imre::{run_all, run_stage, ExperimentConfig, Stage};

/// Exit code of `invert` when some case hit `max_outer` before converging.
const BUDGET_CAPPED: u8 = 3;

#[derive(Parser)]
#[command(name = "imre", version, about = "Generative operator-error modelling and inverse reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the geometry, error operators and pair manifest.
    Forge(Common),
    /// Train the generative error model.
    TrainGen(Common),
    /// Train the map over latent codes.
    TrainSom(Common),
    /// Simulate paced sources and noisy recordings.
    Simulate(Common),
    /// Solve every case with the prior and the corrected operator.
    Invert(Common),
    /// Write the metric reports.
    Evaluate(Common),
    /// Run every enabled stage in order.
    RunAll(Common),
}

fn load(c: &Common) -> imre::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> imre::Result<ExitCode> {
    let (stage, common) = match &cli.command {
        Command::Forge(c) => (Some(Stage::Forge), c),
        Command::TrainGen(c) => (Some(Stage::TrainGen), c),
        Command::TrainSom(c) => (Some(Stage::TrainSom), c),
        Command::Simulate(c) => (Some(Stage::Simulate), c),
        Command::Invert(c) => (Some(Stage::Invert), c),
        Command::Evaluate(c) => (Some(Stage::Evaluate), c),
        Command::RunAll(c) => (None, c),
    };
    let cfg = load(common)?;
    let Some(stage) = stage else {
        let report = run_all(&cfg)?;
        for (s, t, _) in &report.stages {
            eprintln!("{s}: {:.1} s", t.as_secs_f64());
        }
        return Ok(ExitCode::SUCCESS);
    };
    let outcome = run_stage(stage, &cfg)?;
    if stage == Stage::Invert {
        eprintln!("{} of {} cases converged", outcome.converged, outcome.cases);
        if outcome.converged < outcome.cases {
            return Ok(ExitCode::from(BUDGET_CAPPED));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
