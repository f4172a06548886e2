//! Batch experiment harness for heliocast.
//!
//! [`run_experiment`] loads or synthesizes every site, runs one task per
//! (site, horizon) on a worker pool and writes the output tree:
//!
//! ```text
//! out/
//!   reports.csv, reports.json     one MetricsReport row per (site, horizon, model)
//!   manifest.json                 config hash, version, per-task status and timing
//!   elm_params.json               chosen ELM sizes and parameter accounting
//!   quantiles/<site>_h<min>_<model>.csv
//!   plot_data/metric_<name>.csv, plot_data/is_curve_<model>_h<min>.csv
//! ```

pub mod config;
pub mod harness;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use heliocast_core::elm::{param_audit, ParamAudit, PUBLISHED_ARCHITECTURE};
use heliocast_core::MetricsReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DataSource, ExperimentConfig, MaskPolicy};
pub use harness::{Status, TaskOutput, TaskStatus};
pub use report::{significance_matrix, SignificanceMatrix};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "HELIOCAST_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(#[from] heliocast_core::Error),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub step_seconds: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub sites: Vec<SiteRecord>,
    pub tasks: Vec<TaskStatus>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn n_failed(&self) -> usize {
        self.tasks.iter().filter(|t| t.status == Status::Failed).count()
    }

    /// Step of the first loaded site; sites are required to share one.
    pub fn step_seconds(&self) -> Option<i64> {
        self.sites.iter().find_map(|s| s.step_seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmParamsFile {
    pub published_architecture: ParamAudit,
    pub fits: Vec<harness::ElmFitRecord>,
}

pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
    pub reports: Vec<MetricsReport>,
}

impl RunSummary {
    /// 0 when every task succeeded, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.n_failed() == 0 { 0 } else { 2 }
    }
}

fn horizon_minutes(h: usize, step_seconds: i64) -> i64 {
    h as i64 * step_seconds / 60
}

pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))?;

    let sites = pool.install(|| harness::load_sites(cfg))?;
    let site_records: Vec<SiteRecord> = sites
        .iter()
        .map(|s| match &s.data {
            Ok(p) => SiteRecord {
                site_id: s.site_id.clone(),
                status: Status::Ok,
                message: None,
                step_seconds: Some(p.series.step_seconds),
            },
            Err(m) => SiteRecord {
                site_id: s.site_id.clone(),
                status: Status::Failed,
                message: Some(m.clone()),
                step_seconds: None,
            },
        })
        .collect();

    let tasks: Vec<(usize, usize)> = (0..sites.len())
        .flat_map(|s| cfg.horizons.iter().map(move |&h| (s, h)))
        .collect();
    let outputs: Vec<TaskOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, h)| {
                let site = &sites[s];
                match &site.data {
                    Ok(part) => harness::run_task(cfg, &site.site_id, part, h),
                    Err(msg) => TaskOutput {
                        statuses: cfg
                            .models
                            .iter()
                            .map(|m| TaskStatus {
                                site_id: site.site_id.clone(),
                                horizon_steps: h,
                                model: m.to_string(),
                                status: Status::Failed,
                                message: Some(format!("site failed to load: {msg}")),
                                wall_seconds: 0.0,
                            })
                            .collect(),
                        ..Default::default()
                    },
                }
            })
            .collect()
    });

    let steps: BTreeMap<String, i64> = site_records
        .iter()
        .filter_map(|s| s.step_seconds.map(|st| (s.site_id.clone(), st)))
        .collect();
    let out_dir = cfg.output_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let reports: Vec<MetricsReport> = outputs.iter().flat_map(|o| o.reports.iter().cloned()).collect();
    write_reports(&out_dir, &reports)?;
    write_quantiles(&out_dir, &outputs, &steps)?;
    write_plot_data(&out_dir, &reports, &outputs, &steps)?;

    let (n_in, n_hid) = PUBLISHED_ARCHITECTURE;
    let params = ElmParamsFile {
        published_architecture: param_audit(n_in, n_hid),
        fits: outputs.iter().flat_map(|o| o.elm_fits.iter().cloned()).collect(),
    };
    write_json(&out_dir.join("elm_params.json"), &params)?;

    let manifest = RunManifest {
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        workers,
        sites: site_records,
        tasks: outputs.iter().flat_map(|o| o.statuses.iter().cloned()).collect(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(RunSummary { output_dir: out_dir, manifest, reports })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(heliocast_core::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn csv_io(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

pub fn write_reports(dir: &Path, reports: &[MetricsReport]) -> Result<(), HarnessError> {
    let mut w = csv_writer(&dir.join("reports.csv"))?;
    for r in reports {
        w.serialize(r).map_err(csv_io)?;
    }
    w.flush()?;
    write_json(&dir.join("reports.json"), &reports)
}

pub fn read_reports(dir: &Path) -> Result<Vec<MetricsReport>, HarnessError> {
    let text = fs::read_to_string(dir.join("reports.json"))?;
    Ok(serde_json::from_str(&text).map_err(heliocast_core::Error::from)?)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, HarnessError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    Ok(serde_json::from_str(&text).map_err(heliocast_core::Error::from)?)
}

fn write_quantiles(dir: &Path, outputs: &[TaskOutput], steps: &BTreeMap<String, i64>) -> Result<(), HarnessError> {
    let qdir = dir.join("quantiles");
    fs::create_dir_all(&qdir)?;
    for o in outputs {
        for ((kind, qf), curve) in o.quantiles.iter().zip(&o.is_curves) {
            let minutes = horizon_minutes(curve.horizon_steps, steps[&curve.site_id]);
            let path = qdir.join(format!("{}_h{minutes}_{kind}.csv", curve.site_id));
            qf.write_csv(fs::File::create(path)?)?;
        }
    }
    Ok(())
}

fn write_plot_data(
    dir: &Path,
    reports: &[MetricsReport],
    outputs: &[TaskOutput],
    steps: &BTreeMap<String, i64>,
) -> Result<(), HarnessError> {
    let pdir = dir.join("plot_data");
    fs::create_dir_all(&pdir)?;
    for name in MetricsReport::METRIC_NAMES {
        let rows: Vec<&MetricsReport> = reports.iter().filter(|r| r.metric(name).is_some()).collect();
        if rows.is_empty() {
            continue;
        }
        let mut w = csv_writer(&pdir.join(format!("metric_{name}.csv")))?;
        w.write_record(["model", "horizon_minutes", "site_id", "value"]).map_err(csv_io)?;
        for r in rows {
            let minutes = horizon_minutes(r.horizon_steps, steps[&r.site_id]);
            let value = r.metric(name).expect("filtered above");
            w.write_record([r.model_id.clone(), minutes.to_string(), r.site_id.clone(), value.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
    }

    let mut curves: BTreeMap<(String, i64), Vec<&harness::IsCurve>> = BTreeMap::new();
    for c in outputs.iter().flat_map(|o| &o.is_curves) {
        let minutes = horizon_minutes(c.horizon_steps, steps[&c.site_id]);
        curves.entry((c.model.to_string(), minutes)).or_default().push(c);
    }
    for ((model, minutes), list) in curves {
        let mut w = csv_writer(&pdir.join(format!("is_curve_{model}_h{minutes}.csv")))?;
        w.write_record(["site_id", "alpha", "interval_score"]).map_err(csv_io)?;
        for c in list {
            for (a, s) in &c.points {
                w.write_record([c.site_id.clone(), format!("{a:.2}"), s.to_string()]).map_err(csv_io)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}
