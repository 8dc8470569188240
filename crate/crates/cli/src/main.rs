//! `bff`: runs the simulation pipeline stage by stage from a TOML config.
//!
//! Every stage writes into `--out`; a stage whose inputs are missing runs
//! its producers first. Thread count comes from `BFF_THREADS`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bff_core::pipeline::{Pipeline, PipelineConfig, Stage};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bff", version, about = "Vessel network, microbubble and ultrasound simulation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration instead of a file: training, challenge, desk, hf, lf.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; every dataset path is relative to it.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vessel network.
    Generate(Common),
    /// Solve the network flow.
    Flow(Common),
    /// Seed bubbles and write the ground-truth table.
    Seed(Common),
    /// Simulate RF channel data.
    Simulate(Common),
    /// Beamform RF frames into B-mode images.
    Beamform(Common),
    /// Run the reference localizer on the B-mode frames.
    Localize(Common),
    /// Link localizations into tracks.
    Track(Common),
    /// Score predictions against the ground truth.
    Evaluate(Common),
    /// Render the super-resolved image and velocity map.
    Render(Common),
    /// Run every stage.
    Pipeline(Common),
    /// Print a built-in configuration as TOML.
    Preset {
        name: String,
    },
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => {
            PipelineConfig::load(path).with_context(|| format!("reading config {}", path.display()))?
        }
        (None, Some(name)) => PipelineConfig::preset(name)?,
        (None, None) => bail!("either --config <file> or --preset <name> is required"),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("BFF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("BFF_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (stage, common) = match cli.command {
        Command::Preset { name } => {
            print!("{}", PipelineConfig::preset(&name)?.to_toml_string()?);
            return Ok(());
        }
        Command::Generate(c) => (Some(Stage::Generate), c),
        Command::Flow(c) => (Some(Stage::Flow), c),
        Command::Seed(c) => (Some(Stage::Seed), c),
        Command::Simulate(c) => (Some(Stage::Simulate), c),
        Command::Beamform(c) => (Some(Stage::Beamform), c),
        Command::Localize(c) => (Some(Stage::Localize), c),
        Command::Track(c) => (Some(Stage::Track), c),
        Command::Evaluate(c) => (Some(Stage::Evaluate), c),
        Command::Render(c) => (Some(Stage::Render), c),
        Command::Pipeline(c) => (None, c),
    };
    let cfg = load_config(&common)?;
    let pipeline = Pipeline::new(cfg, &common.out)?;
    let outcomes = match stage {
        Some(s) => vec![pipeline.run(s)?],
        None => pipeline.run_all()?,
    };
    for o in outcomes {
        println!("{:<9} {}", o.stage.name(), o.summary);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|_| run(cli)) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
