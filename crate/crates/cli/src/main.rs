use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strainwars::config::{parse_config_as, ConfigErrors, ExperimentKind};
use strainwars::presets::preset_text;
use strainwars::run::{run_experiment, RunError, RunOptions};
use strainwars::{default_parallelism, resolve_seed, SEED_ENV};

/// Experiments with the two-strain contact process and its mean-field limit.
#[derive(Parser)]
#[command(name = "strainwars", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the mean-field equations.
    Ode(Common),
    /// Run raw replicate simulations.
    Simulate(Common),
    /// Estimate a survival probability.
    Survival(Common),
    /// Bracket lambda_c or lambda_cc by bisection.
    Critical(Common),
    /// Estimate the probability that both strains are present.
    Coexist(Common),
    /// Classify rates on a tree as subcritical, weak or strong survival.
    Regime(Common),
    /// Conditional occupancy curves given strain 2 survives.
    CrowdOut(Common),
    /// Compare the engine against the exact law on a small graph.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Config document to run.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario to run instead of a config file.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Master seed; overrides the config and STRAINWARS_SEED.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Prefix for output files.
    #[arg(long, value_name = "PREFIX")]
    out: Option<PathBuf>,
    /// Worker threads for replicate fan-out.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    parallel: Option<u64>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::Ode(c) => (ExperimentKind::Ode, c),
            Command::Simulate(c) => (ExperimentKind::Simulate, c),
            Command::Survival(c) => (ExperimentKind::Survival, c),
            Command::Critical(c) => (ExperimentKind::Critical, c),
            Command::Coexist(c) => (ExperimentKind::Coexist, c),
            Command::Regime(c) => (ExperimentKind::Regime, c),
            Command::CrowdOut(c) => (ExperimentKind::CrowdOut, c),
            Command::OracleCheck(c) => (ExperimentKind::OracleCheck, c),
        }
    }
}

fn execute(kind: ExperimentKind, args: Common) -> Result<(), RunError> {
    let text = match (&args.config, &args.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors::single("--config", format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => preset_text(name)
            .ok_or_else(|| ConfigErrors::single("--preset", format!("unknown preset `{name}`")))?
            .to_string(),
        (None, None) => return Err(ConfigErrors::single("", "pass --config PATH or --preset NAME").into()),
    };
    let config = parse_config_as(&text, Some(kind))?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(args.seed, config.master_seed, env.as_deref())?;
    let prefix = args
        .out
        .or_else(|| config.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("strainwars-{kind}")));
    let parallelism = args
        .parallel
        .map(|p| p as usize)
        .or(config.parallelism)
        .unwrap_or_else(default_parallelism);
    let manifest = run_experiment(
        &config,
        &RunOptions {
            seed,
            prefix,
            parallelism,
        },
    )?;
    for f in &manifest.files {
        println!("{}  {}", f.sha256, f.path);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("strainwars {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
