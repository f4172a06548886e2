//! Experiment configuration.
//!
//! Every field except `data` and `models` has a default, so a minimal config is
//!
//! ```json
//! {
//!   "data": { "synthetic": { "sites": [ { "site_id": "s1", "latitude": 37.4,
//!             "longitude": -5.9, "elevation": 30, "timezone_offset_minutes": 60 } ],
//!             "n_days": 730 } },
//!   "models": ["P", "SP", "AR", "ELM"]
//! }
//! ```
//!
//! The full schema is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use heliocast_core::elm::{ElmConfig, SearchSettings};
use heliocast_core::probabilistic::QrOptions;
use heliocast_core::timeseries::{CsvSchema, QcConfig, SiteMeta, SplitSpec, SyntheticConfig};
use heliocast_core::ModelKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// CSV files, each with a `<stem>.meta.json` sidecar.
    Csv {
        /// File paths or glob patterns, relative to the config file.
        paths: Vec<String>,
        #[serde(default)]
        schema: CsvSchema,
    },
    Synthetic {
        sites: Vec<SiteMeta>,
        n_days: usize,
        #[serde(default)]
        generator: SyntheticConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Targets whose clearsky irradiance exceeds the night threshold.
    Daytime,
    All,
}

impl MaskPolicy {
    pub fn name(self) -> &'static str {
        match self {
            MaskPolicy::Daytime => "daytime",
            MaskPolicy::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElmSection {
    #[serde(flatten)]
    pub base: ElmConfig,
    /// Nelder-Mead search over `(n_input, n_hidden)`; `null` uses `base` as is.
    pub search: Option<SearchSettings>,
    /// Train the final model on at most this many of the most recent rows.
    pub max_train_rows: Option<usize>,
}

impl Default for ElmSection {
    fn default() -> Self {
        Self { base: ElmConfig::default(), search: Some(SearchSettings::default()), max_train_rows: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArSection {
    /// Largest order tried by brute-force selection for AR.
    pub p_max: usize,
    /// Largest PACF lag considered for rAR.
    pub rar_max_lag: usize,
}

impl Default for ArSection {
    fn default() -> Self {
        Self { p_max: 96, rar_max_lag: 48 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrSection {
    pub n_lags: usize,
    pub max_train_rows: Option<usize>,
    #[serde(flatten)]
    pub options: QrOptions,
}

impl Default for QrSection {
    fn default() -> Self {
        Self { n_lags: 6, max_train_rows: Some(8760), options: QrOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Horizons in steps of the series resolution.
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub qc: QcConfig,
    #[serde(default)]
    pub elm: ElmSection,
    #[serde(default)]
    pub ar: ArSection,
    #[serde(default)]
    pub qr: QrSection,
    /// Miscoverage of the reported prediction intervals.
    #[serde(default = "default_alpha")]
    pub interval_alpha: f64,
    #[serde(default = "default_mask")]
    pub mask_policy: MaskPolicy,
    #[serde(default = "default_threshold")]
    pub night_threshold: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_horizons() -> Vec<usize> {
    (1..=10).collect()
}

fn default_alpha() -> f64 {
    0.2
}

fn default_mask() -> MaskPolicy {
    MaskPolicy::Daytime
}

fn default_threshold() -> f64 {
    heliocast_core::clearsky::DEFAULT_NIGHT_THRESHOLD
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative CSV paths and output directories are
    /// resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSource::Csv { paths, .. } = &mut cfg.data {
            for p in paths.iter_mut() {
                if Path::new(p).is_relative() {
                    *p = base.join(&*p).to_string_lossy().into_owned();
                }
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.horizons.is_empty() {
            return err("at least one horizon is required".into());
        }
        if self.horizons.contains(&0) {
            return err("horizons must be positive".into());
        }
        if self.models.is_empty() {
            return err("at least one model is required".into());
        }
        if !(self.interval_alpha > 0.0 && self.interval_alpha < 1.0) {
            return err(format!("interval_alpha {} outside (0, 1)", self.interval_alpha));
        }
        if !(self.night_threshold > 0.0) {
            return err("night_threshold must be positive".into());
        }
        if self.ar.p_max == 0 || self.ar.rar_max_lag < 2 || self.qr.n_lags == 0 {
            return err("AR orders and QR lags must be positive".into());
        }
        if self.workers == Some(0) {
            return err("workers must be >= 1".into());
        }
        self.split.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.elm.base.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.data {
            DataSource::Csv { paths, .. } if paths.is_empty() => err("no CSV paths given".into()),
            DataSource::Synthetic { sites, n_days, generator } => {
                if sites.is_empty() || *n_days == 0 {
                    return err("synthetic data needs sites and n_days >= 1".into());
                }
                let mut ids: Vec<&str> = sites.iter().map(|s| s.site_id.as_str()).collect();
                ids.sort_unstable();
                if ids.windows(2).any(|w| w[0] == w[1]) {
                    return err("duplicate synthetic site_id".into());
                }
                for s in sites {
                    s.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                }
                generator.validate().map_err(|e| HarnessError::Config(e.to_string()))
            }
            DataSource::Csv { .. } => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Worker count: explicit override, then `HELIOCAST_WORKERS`, then config, then 1.
    pub fn resolve_workers(&self, cli: Option<usize>) -> Result<usize, HarnessError> {
        if let Some(n) = cli {
            return if n == 0 { Err(HarnessError::Config("workers must be >= 1".into())) } else { Ok(n) };
        }
        if let Ok(v) = std::env::var(crate::WORKERS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(HarnessError::Config(format!("{} must be a positive integer, got `{v}`", crate::WORKERS_ENV))),
            };
        }
        Ok(self.workers.unwrap_or(1))
    }
}
