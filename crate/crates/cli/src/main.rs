use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heliocast_cli::{read_manifest, read_reports, run_experiment, significance_matrix, ExperimentConfig, HarnessError};
use heliocast_core::elm::param_audit;
use heliocast_core::timeseries::{synthesize_dataset, write_csv, SiteMeta};

#[derive(Parser)]
#[command(name = "heliocast", version, about = "Clearsky-free solar irradiance forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured model on every site and horizon.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides HELIOCAST_WORKERS and the config file.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic site CSV and its metadata sidecar.
    Synth {
        /// JSON file with site metadata.
        #[arg(long)]
        site_spec: PathBuf,
        #[arg(long)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pairwise significance matrix from a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "nrmse")]
        metric: String,
        /// Horizon in minutes.
        #[arg(long)]
        horizon: i64,
    },
    /// Parameter accounting for an ELM architecture.
    Params {
        #[arg(long)]
        inputs: usize,
        #[arg(long)]
        hidden: usize,
    },
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run { config, seed, workers, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let workers = cfg.resolve_workers(workers)?;
            let summary = run_experiment(&cfg, workers)?;
            let failed = summary.manifest.n_failed();
            println!(
                "{} report rows, {} of {} tasks failed, output in {}",
                summary.reports.len(),
                failed,
                summary.manifest.tasks.len(),
                summary.output_dir.display()
            );
            for t in summary.manifest.tasks.iter().filter(|t| t.message.is_some()) {
                eprintln!("{} h={} {}: {}", t.site_id, t.horizon_steps, t.model, t.message.as_deref().unwrap_or(""));
            }
            Ok(summary.exit_code())
        }
        Command::Synth { site_spec, days, out, seed } => {
            let meta = SiteMeta::from_json_file(&site_spec).map_err(|e| HarnessError::Config(e.to_string()))?;
            let series = synthesize_dataset(&meta, days, seed).map_err(|e| HarnessError::Config(e.to_string()))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_csv(&series, fs::File::create(&out)?)?;
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("site");
            let sidecar = out.with_file_name(format!("{stem}.meta.json"));
            fs::write(&sidecar, serde_json::to_string_pretty(&meta).map_err(heliocast_core::Error::from)? + "\n")?;
            println!("wrote {} rows to {} and {}", series.len(), out.display(), sidecar.display());
            Ok(0)
        }
        Command::Report { input, metric, horizon } => {
            let reports = read_reports(&input)?;
            let manifest = read_manifest(&input)?;
            let step = manifest
                .step_seconds()
                .ok_or_else(|| HarnessError::Config("manifest lists no loaded site".into()))?;
            if horizon <= 0 || (horizon * 60) % step != 0 {
                return Err(HarnessError::Config(format!(
                    "horizon {horizon} min is not a positive multiple of the {step} s step"
                )));
            }
            let steps = (horizon * 60 / step) as usize;
            let matrix = significance_matrix(&reports, &metric, steps).map_err(|e| HarnessError::Config(e.to_string()))?;
            let path = input.join(format!("significance_{metric}_h{horizon}.csv"));
            matrix.write_csv(fs::File::create(&path)?)?;
            matrix.write_csv(std::io::stdout().lock())?;
            Ok(0)
        }
        Command::Params { inputs, hidden } => {
            let audit = param_audit(inputs, hidden);
            println!("{}", serde_json::to_string_pretty(&audit).map_err(heliocast_core::Error::from)?);
            if let Some(d) = &audit.discrepancy {
                eprintln!("discrepancy: {d}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
