//! Command-line front end for the gpnav experiment harness.
//!
//! Subcommands: `run` executes a single trial, `suite` runs the full
//! per-mode trial matrix from a scenario config, `worldgen` writes the
//! bundled worlds to disk, and `validate` lints a config without
//! simulating. Any config or I/O error exits nonzero.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gpnav::harness::{emit_timing, emit_traces, run_suite, run_trial, ScenarioConfig};
use gpnav::planner::Mode;
use gpnav::simworld::{flat, grass_corner_table, grass_mud_hsg};

#[derive(Parser)]
#[command(name = "gpnav", version, about = "Sparse-GP navigation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trial and write its trace files.
    Run(RunArgs),
    /// Run every configured mode for the configured number of trials.
    Suite(SuiteArgs),
    /// Write the bundled worlds as loadable world files.
    Worldgen(WorldgenArgs),
    /// Check a scenario config and its world without simulating.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file.
    #[arg(long)]
    config: PathBuf,
    /// Planner mode: g, v, or vg. Defaults to the first configured mode.
    #[arg(long)]
    mode: Option<String>,
    /// Trial seed. Defaults to the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for trace and timing files (created if missing).
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SuiteArgs {
    /// Scenario config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's trials-per-mode count.
    #[arg(long)]
    trials: Option<usize>,
    /// Directory for traces, timing files, and summary.json.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct WorldgenArgs {
    /// Directory the world files are written into.
    #[arg(long, default_value = "worlds")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario config file.
    #[arg(long)]
    config: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s.to_ascii_lowercase().as_str() {
        "g" => Ok(Mode::G),
        "v" => Ok(Mode::V),
        "vg" => Ok(Mode::Vg),
        other => bail!("unknown mode '{other}' (expected g, v, or vg)"),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg = ScenarioConfig::from_json(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let mode = match &args.mode {
        Some(s) => parse_mode(s)?,
        None => *cfg
            .modes
            .first()
            .context("config lists no modes and --mode was not given")?,
    };
    let seed = args.seed.unwrap_or(cfg.base_seed);
    let (summary, traces) = run_trial(&cfg, mode, seed)?;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let stem = format!("{}_{}", mode.as_str(), seed);
    emit_traces(&traces, args.out_dir.join(format!("trace_{stem}.csv")))?;
    emit_timing(&traces, args.out_dir.join(format!("timing_{stem}.csv")))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_suite(args: &SuiteArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(n) = args.trials {
        cfg.trials = n;
    }
    let report = run_suite(&cfg, Some(&args.out_dir))?;
    for (mode, agg) in &report.modes {
        println!(
            "{mode}: {}/{} reached, mean path {:.2} m, mean max velocity {:.2} m/s, \
             mean cycle {:.1} ms",
            (agg.success_rate * agg.trials as f64).round() as usize,
            agg.trials,
            agg.path_mean,
            agg.max_velocity_mean,
            agg.mean_cycle_ms,
        );
    }
    println!("wrote {}", args.out_dir.join("summary.json").display());
    Ok(())
}

fn cmd_worldgen(args: &WorldgenArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let bundled = [
        ("flat.world.json", flat(12.0, 0.25)?),
        ("grass_mud_hsg.world.json", grass_mud_hsg()?),
        ("grass_corner_table.world.json", grass_corner_table()?),
    ];
    for (name, world) in &bundled {
        let path = args.out_dir.join(name);
        world.save(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    cfg.validate()?;
    let world = cfg.build_world()?;
    cfg.validate_in(&world)?;
    println!(
        "{}: ok ({} modes, {} trials each)",
        cfg.name,
        cfg.modes.len(),
        cfg.trials
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Worldgen(a) => cmd_worldgen(a),
        Command::Validate(a) => cmd_validate(a),
    }
}
