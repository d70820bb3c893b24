use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridrmt::harness::formats::{
    export_spectrum, read_measurements, report_to_string, spectrum_to_string, table_to_string,
    write_measurements, Format,
};
use gridrmt::harness::{calibration_for, sweep, Pipeline, ScenarioConfig};
use gridrmt::rmtdetect::Calibration;

#[derive(Parser)]
#[command(
    name = "gridrmt",
    version,
    about = "Spectral event detection on radial distribution networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration file (key = value lines).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, short)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Output format: json or csv. Defaults to the output file extension.
    #[arg(long, short)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate H0 acceptance intervals and class signatures.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the configured scenario and report the detection result.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Calibration file; overrides the configuration.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Also write the simulated measurement window to this CSV file.
        #[arg(long)]
        window: Option<PathBuf>,
    },
    /// Run detection on a measurement CSV. Exits 0 when no event is
    /// found, 1 when an event is flagged, 2 on error.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Calibration file; overrides the configuration.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Measurement CSV: sample index, then one column per bus.
        measurements: PathBuf,
    },
    /// Run H0 and every preset on the configured network.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Run scenarios one at a time.
        #[arg(long)]
        serial: bool,
    },
    /// Export the covariance spectrum with its M-P bounds as CSV.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Analyze this measurement CSV instead of simulating.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_file(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn output_format(common: &Common) -> Format {
    common
        .format
        .or_else(|| common.out.as_deref().map(Format::from_path))
        .unwrap_or(Format::Json)
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_calibration(mut cfg: ScenarioConfig, path: &Option<PathBuf>) -> ScenarioConfig {
    if let Some(p) = path {
        cfg.calibration = Some(p.clone());
    }
    cfg
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Calibrate { common } => {
            let cfg = load_config(&common)?;
            let pipeline = Pipeline::from_config(&cfg)?;
            let cal = pipeline.calibrate(
                cfg.seed,
                cfg.calibration_runs,
                cfg.signature_runs,
                &cfg.presets,
                true,
            )?;
            if output_format(&common) == Format::Csv {
                bail!("calibrations are written as JSON only");
            }
            emit(&common, &cal.to_json()?)?;
        }
        Command::Simulate {
            common,
            calibration,
            window,
        } => {
            let cfg = with_calibration(load_config(&common)?, &calibration);
            let pipeline = Pipeline::from_config(&cfg)?;
            let cal = calibration_for(&cfg, &pipeline, true)?;
            let events = pipeline.scenario_events(&cfg.scenario, &cfg.presets)?;
            let raw = pipeline.simulate(cfg.seed, &events, cfg.route)?;
            if let Some(path) = &window {
                write_measurements(&raw, path)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let report = pipeline.detect(&raw, &cal, cfg.seed)?;
            emit(&common, &report_to_string(&report, output_format(&common))?)?;
        }
        Command::Detect {
            common,
            calibration,
            measurements,
        } => {
            let mut cfg = with_calibration(load_config(&common)?, &calibration);
            let raw = read_measurements(&measurements)?;
            cfg.samples = raw.ncols();
            let pipeline = Pipeline::from_config(&cfg)?;
            if raw.nrows() != pipeline.node_count() {
                bail!(
                    "{} has {} bus columns but the network has {} buses",
                    measurements.display(),
                    raw.nrows(),
                    pipeline.node_count()
                );
            }
            let path = cfg
                .calibration
                .as_deref()
                .context("detect needs a calibration (--calibration or calibration.path)")?;
            let cal =
                Calibration::load(path).with_context(|| format!("reading {}", path.display()))?;
            let report = pipeline.detect(&raw, &cal, cfg.seed)?;
            emit(&common, &report_to_string(&report, output_format(&common))?)?;
            if report.flag {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Sweep { common, serial } => {
            let cfg = load_config(&common)?;
            let table = sweep(&cfg.sweep_scenarios(), !serial);
            emit(&common, &table_to_string(&table, output_format(&common))?)?;
        }
        Command::Spectrum {
            common,
            measurements,
        } => {
            let mut cfg = load_config(&common)?;
            let raw = match &measurements {
                Some(path) => {
                    let raw = read_measurements(path)?;
                    cfg.samples = raw.ncols();
                    raw
                }
                None => {
                    let pipeline = Pipeline::from_config(&cfg)?;
                    let events = pipeline.scenario_events(&cfg.scenario, &cfg.presets)?;
                    pipeline.simulate(cfg.seed, &events, cfg.route)?
                }
            };
            let summary = Pipeline::from_config(&cfg)?.analyze(&raw)?;
            match &common.out {
                Some(path) => export_spectrum(&summary, path)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", spectrum_to_string(&summary)),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
