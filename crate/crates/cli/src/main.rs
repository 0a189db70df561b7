//! `spopo`: design, simulate, reconstruct and report on a multimode squeezed
//! frequency comb measured through spectral pixels.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spopo_core::config::{load_config_with, ScenarioConfig, Strictness};
use spopo_core::pipeline::{parse_stages, run_pipeline, AnalysisReport, PipelineInputs, Stage};
use spopo_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "spopo",
    version,
    about = "Multimode squeezed-comb simulator and pixel-noise reconstruction"
)]
struct Cli {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed for sampling and bootstrap (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Reject unknown configuration keys instead of warning.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Supermodes and squeezing levels: writes supermodes.csv and design.json.
    Design,
    /// Forward model and sampled records from supermodes.csv.
    Simulate,
    /// Point estimate of C, V and the eigenmodes from records.csv.
    Reconstruct {
        /// Records file to analyze instead of <out>/records.csv.
        #[arg(long, value_name = "PATH")]
        records: Option<PathBuf>,
    },
    /// Reconstruction with bootstrap intervals and verdicts.
    Report {
        #[arg(long, value_name = "PATH")]
        records: Option<PathBuf>,
    },
    /// Several stages in one go (all of them by default).
    Run {
        /// Comma-separated subset of design,simulate,reconstruct,bootstrap.
        #[arg(long, value_name = "LIST")]
        stages: Option<String>,
    },
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let strictness = if cli.strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    };
    let mut config = match &cli.config {
        Some(path) => load_config_with(path, strictness)?,
        None => ScenarioConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.sampling.seed = seed;
        config.bootstrap.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn print_report(report: &AnalysisReport) {
    println!(
        "full-beam NIN {:.4} ({:.2} dB noise reduction)",
        report.full_beam_nin, report.full_beam_noise_reduction_db
    );
    println!(
        "{:<4} {:>9} {:>8} {:>7}  {:<21} verdict",
        "mode", "NIN", "dB", "power", "interval"
    );
    for mode in &report.eigenmodes.modes {
        let interval = mode
            .bootstrap
            .as_ref()
            .map(|b| format!("[{:.4}, {:.4}]", b.lower, b.upper))
            .unwrap_or_default();
        let verdict = mode.verdict.map(|v| format!("{v:?}")).unwrap_or_default();
        println!(
            "{:<4} {:>9.4} {:>8.3} {:>6.1}%  {:<21} {}",
            mode.label,
            mode.nin,
            mode.nin_db,
            100.0 * mode.power_fraction,
            interval,
            verdict
        );
    }
    if let Some(b) = &report.eigenmodes.bootstrap {
        println!(
            "off-diagonal elements in the eigenbasis: mean {:.4}, spread {:.4}",
            b.off_diagonal_mean, b.off_diagonal_spread
        );
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let config = load(cli)?;
    let mut inputs = PipelineInputs::default();
    let stages = match &cli.command {
        Command::Design => vec![Stage::Design],
        Command::Simulate => vec![Stage::Simulate],
        Command::Reconstruct { records } => {
            inputs.records = records.clone();
            vec![Stage::Reconstruct]
        }
        Command::Report { records } => {
            inputs.records = records.clone();
            vec![Stage::Reconstruct, Stage::Bootstrap]
        }
        Command::Run { stages } => match stages {
            Some(list) => parse_stages(list)?,
            None => Stage::ALL.to_vec(),
        },
    };
    let out = config.output_dir.clone();
    let outcome = run_pipeline(&config, &stages, &out, &inputs)?;
    for artifact in &outcome.manifest.artifacts {
        println!(
            "{}  {}",
            artifact.sha256,
            out.join(&artifact.file).display()
        );
    }
    if let Some(report) = &outcome.report {
        print_report(report);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
