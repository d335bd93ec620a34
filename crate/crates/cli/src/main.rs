//! `blindsim`: run scenarios, calibrate detector thresholds, sweep parameters.
//!
//! Exit status: 0 on completion (an alarm is data, not failure), 1 on I/O
//! errors or unbracketed calibration bands, 2 on configuration or usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blindsim::config::Config;
use blindsim::export::{self, ThetaFile};
use blindsim::harness::{self, HarnessError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "blindsim",
    version,
    about = "Detector-blinding attack simulator for a BB84 receiver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario; writes slots.csv, summary.json and verdict.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure P_0% / P_100%; writes thresholds.csv and theta.json.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Detector name, or `all`.
        #[arg(long, default_value = "all")]
        detector: String,
        /// min,max,points,trials (watts).
        #[arg(long)]
        grid: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One run per value of a parameter; writes sweep.csv in long format.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key, e.g. bob.voa_fixed_db.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Io(String),
    Unbracketed,
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<(Config, String), Failure> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut config = Config::from_toml_str(&src)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok((config, src))
}

fn run(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let (cfg, _) = load(config, seed)?;
    let report = blindsim::run_scenario(&cfg);
    let files = export::run_files(&report);
    export::write_outputs(out, &config.display().to_string(), cfg.seed, &files)?;
    eprintln!(
        "{} slots, alarm {}{}",
        cfg.slot_count,
        report.verdict.alarm,
        if report.verdict.reasons.is_empty() {
            String::new()
        } else {
            format!(" ({})", report.verdict.reasons.join(", "))
        }
    );
    Ok(())
}

fn calibrate(
    config: &Path,
    detector: &str,
    grid: &str,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let (cfg, _) = load(config, seed)?;
    let spec = harness::parse_grid(grid).map_err(|e| Failure::Config(e.to_string()))?;
    let cal = harness::calibrate(&cfg, Some(detector), spec)
        .map_err(|e| Failure::Config(e.to_string()))?;
    let errors: Vec<String> = cal.errors.iter().map(|e| e.to_string()).collect();
    for e in &errors {
        eprintln!("unbracketed: {e}");
    }
    let theta = ThetaFile {
        theta: &cal.theta,
        condition: cal.condition,
        errors: &errors,
    };
    let files = [
        ("thresholds.csv", export::thresholds_csv(&cal.profile)),
        ("theta.json", export::to_json(&theta)),
    ];
    export::write_outputs(out, &config.display().to_string(), cfg.seed, &files)?;
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Unbracketed)
    }
}

fn parse_values(values: &str) -> Result<Vec<f64>, Failure> {
    values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Failure::Config(format!("not a number: `{v}`")))
        })
        .collect()
}

fn sweep(
    config: &Path,
    param: &str,
    values: &str,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let (cfg, src) = load(config, seed)?;
    let table: toml::Table = src
        .parse()
        .map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
    let values = parse_values(values)?;
    let rows =
        harness::sweep(&table, &src, param, &values, Some(cfg.seed)).map_err(|e| match e {
            HarnessError::Config(c) => Failure::Config(format!("{}: {c}", config.display())),
            other => Failure::Config(other.to_string()),
        })?;
    export::write_outputs(
        out,
        &config.display().to_string(),
        cfg.seed,
        &[("sweep.csv", export::sweep_csv(&rows))],
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    blindsim::parallel::init_from_env();
    let result = match &cli.command {
        Command::Run { config, seed, out } => run(config, *seed, out),
        Command::Calibrate {
            config,
            detector,
            grid,
            seed,
            out,
        } => calibrate(config, detector, grid, *seed, out),
        Command::Sweep {
            config,
            param,
            values,
            seed,
            out,
        } => sweep(config, param, values, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Unbracketed) => ExitCode::from(1),
    }
}
