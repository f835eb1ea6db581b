//! `webca` command-line harness.
//!
//! Exit status: 0 on success, 1 when the configuration is rejected, 2 when a
//! run fails.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use webca_core::harness::{
    experiment_feedback, experiment_hyperacuity, experiment_lesion, hyperacuity_dataset,
    load_config, load_decoder, run_scenario, write_outputs, write_summary, HarnessError,
    ScenarioConfig,
};

#[derive(Parser)]
#[command(
    name = "webca",
    version,
    about = "Electrosensory architecture simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop and write run.csv, events.log and summary.json.
    Run(Common),
    /// Train on the pitch grid, decode the sub-pitch sweep and save the decoder.
    Hyperacuity(Common),
    /// Lesion every feature of the decoder and fit single-feature decoders.
    Lesion(Common),
    /// Time the context switch around the first scripted chirp.
    Feedback(Common),
    /// Load and validate a configuration without running it.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "webca-out")]
    out: PathBuf,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(args: &Common) -> Result<ScenarioConfig, Failure> {
    let mut config = load_config(&args.config).map_err(|e| Failure::Config(e.into()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn save_summary(dir: &Path, summary: &impl serde::Serialize) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("summary.json");
    let mut w = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    write_summary(summary, &mut w)?;
    w.flush()?;
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => {
            let config = load(&args)?;
            let (record, summary, log) = run_scenario(&config)?;
            write_outputs(&args.out, &record, &log, &summary)?;
            println!(
                "{} ticks, {} context switches, output in {}",
                summary.ticks,
                summary.context_switches,
                args.out.display()
            );
        }
        Command::Hyperacuity(args) => {
            let config = load(&args)?;
            let decoder = match &config.tectum.decoder {
                Some(path) => Some(load_decoder(path)?),
                None => None,
            };
            let data = hyperacuity_dataset(&config)?;
            let report = experiment_hyperacuity(&config, &data, decoder.as_ref())?;
            save_summary(&args.out, &report)?;
            let path = args.out.join("decoder.txt");
            let mut w = BufWriter::new(
                File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            report.decoder.write_to(&mut w).context("writing decoder")?;
            w.flush().context("writing decoder")?;
            println!(
                "rmse {:.3} mm ({:.3} of pitch), {} monotonicity violations",
                report.rmse * 1e3,
                report.rmse_pitch_fraction,
                report.monotonicity_violations
            );
        }
        Command::Lesion(args) => {
            let config = load(&args)?;
            let data = hyperacuity_dataset(&config)?;
            let decoder = match &config.tectum.decoder {
                Some(path) => load_decoder(path)?,
                None => experiment_hyperacuity(&config, &data, None)?.decoder,
            };
            let report = experiment_lesion(&config, &data, &decoder)?;
            save_summary(&args.out, &report)?;
            println!(
                "baseline rmse {:.3} mm, worst lesion {} changes estimates by {:.2}x rmse, best single feature {} rmse {:.2} mm",
                report.baseline_rmse * 1e3,
                report.worst_feature,
                report.max_change_ratio,
                report.best_single_feature,
                report.best_single_rmse * 1e3
            );
        }
        Command::Feedback(args) => {
            let config = load(&args)?;
            let report = experiment_feedback(&config)?;
            save_summary(&args.out, &report)?;
            println!("{}", report.describe());
        }
        Command::ValidateConfig(args) => {
            load(&args)?;
            println!("{}: ok", args.config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
