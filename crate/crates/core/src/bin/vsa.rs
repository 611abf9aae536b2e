//! `vsa`: run virtual-source-array imaging experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vsa_core::experiment::{parse_regime, preset_summary, run_experiment, ExperimentConfig, Stage, PRESET_NAMES};
use vsa_core::io::GridFormat;
use vsa_core::{Error, Result};

#[derive(Parser)]
#[command(name = "vsa", version, about = "Correlation-based imaging through random media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the array data (cross spectra or Ψ_eff).
    Simulate(RunArgs),
    /// Synthesize and write the cross-correlation matrices.
    Correlate(RunArgs),
    /// Run through Kirchhoff migration and write the images.
    Migrate(RunArgs),
    /// Run through migration and measure resolution.
    Analyze(RunArgs),
    /// Full pipeline.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Exit with status 4 if any tolerance gate fails.
        #[arg(long)]
        check: bool,
    },
    /// Shipped presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// Names and one-line descriptions.
    List,
    /// Print a preset as a complete config file.
    Show {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file; its keys override the named preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a shipped preset directly (requires --seed).
    #[arg(long)]
    preset: Option<String>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Extra image formats (raw is always written).
    #[arg(long, value_parser = parse_format)]
    format: Vec<GridFormat>,
}

fn parse_format(s: &str) -> std::result::Result<GridFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ExperimentConfig::from_toml(&text, args.seed)?
        }
        (None, Some(name)) => {
            let seed = args
                .seed
                .ok_or_else(|| Error::config("seed is mandatory: pass --seed with --preset"))?;
            ExperimentConfig::preset(parse_regime(name)?, seed)
        }
        (None, None) => return Err(Error::config("pass --config PATH or --preset NAME")),
    };
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    for f in &args.format {
        if !cfg.output.formats.contains(f) {
            cfg.output.formats.push(*f);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(args: &RunArgs, until: Stage, check: bool) -> Result<()> {
    let cfg = load(args)?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("cannot set thread count: {e}")))?;
    }
    let outcome = run_experiment(&cfg, &cfg.output.dir, until)?;
    if let Some(report) = &outcome.report {
        print!("{}", report.to_text()?);
    }
    for c in &outcome.manifest.checks {
        println!(
            "{} {}: measured {:.6} predicted {:.6} error {:+.4} tolerance {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.predicted,
            c.error,
            c.tolerance
        );
    }
    if check && !outcome.all_checks_pass() {
        let failed: Vec<&str> = outcome.manifest.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Error::Gate(failed.join(", ")));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => execute(&a, Stage::Simulate, false),
        Command::Correlate(a) => execute(&a, Stage::Correlate, false),
        Command::Migrate(a) => execute(&a, Stage::Migrate, false),
        Command::Analyze(a) => execute(&a, Stage::Analyze, false),
        Command::Run { args, check } => execute(&args, Stage::Analyze, check),
        Command::Presets { action } => match action {
            PresetAction::List => {
                for name in PRESET_NAMES {
                    println!("{name:<18} {}", preset_summary(parse_regime(name)?));
                }
                Ok(())
            }
            PresetAction::Show { name, seed } => {
                print!("{}", ExperimentConfig::preset(parse_regime(&name)?, seed).to_toml()?);
                Ok(())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
