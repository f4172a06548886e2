//! Irradiance series: ingestion, quality control, chronological splits,
//! lag embedding and a synthetic multi-regime generator.

use std::io::{Read, Write};
use std::path::Path;

use bitflags::bitflags;
use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::clearsky;
use crate::error::{Error, Result};

pub const DEFAULT_STEP_SECONDS: i64 = 1800;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeta {
    pub site_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub elevation: f64,
    #[serde(rename = "timezone_offset_minutes")]
    pub timezone_offset: i32,
}

impl SiteMeta {
    pub fn new(
        site_id: impl Into<String>,
        latitude: f64,
        longitude: f64,
        elevation: f64,
        timezone_offset: i32,
    ) -> Result<Self> {
        let meta = Self {
            site_id: site_id.into(),
            latitude,
            longitude,
            elevation,
            timezone_offset,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.site_id.is_empty() {
            return Err(Error::InvalidMeta("site_id is empty".into()));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::InvalidMeta(format!("latitude {} out of range", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::InvalidMeta(format!("longitude {} out of range", self.longitude)));
        }
        Ok(())
    }

    /// Reads a `<site_id>.meta.json` sidecar.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let meta: SiteMeta = serde_json::from_reader(std::fs::File::open(path)?)?;
        meta.validate()?;
        Ok(meta)
    }
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct QcFlags: u8 {
        const NEGATIVE = 0b001;
        const EXCEEDS_PHYSICAL = 0b010;
        const MISSING = 0b100;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceSeries {
    pub meta: SiteMeta,
    pub step_seconds: i64,
    pub timestamps: Vec<i64>,
    pub ghi: Vec<f64>,
    pub clearsky_ghi: Option<Vec<f64>>,
    pub qc_flags: Vec<QcFlags>,
}

impl IrradianceSeries {
    pub fn new(
        meta: SiteMeta,
        step_seconds: i64,
        timestamps: Vec<i64>,
        ghi: Vec<f64>,
        clearsky_ghi: Option<Vec<f64>>,
        qc_flags: Vec<QcFlags>,
    ) -> Result<Self> {
        let series = Self {
            meta,
            step_seconds,
            timestamps,
            ghi,
            clearsky_ghi,
            qc_flags,
        };
        series.validate()?;
        Ok(series)
    }

    fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        let n = self.timestamps.len();
        for len in [self.ghi.len(), self.qc_flags.len()]
            .into_iter()
            .chain(self.clearsky_ghi.as_ref().map(Vec::len))
        {
            if len != n {
                return Err(Error::LengthMismatch { expected: n, actual: len });
            }
        }
        if self.step_seconds <= 0 {
            return Err(Error::InvalidSeries("step must be positive".into()));
        }
        for w in self.timestamps.windows(2) {
            if w[1] - w[0] != self.step_seconds {
                return Err(Error::NonConstantStep {
                    after: w[0],
                    gap_seconds: w[1] - w[0],
                    step_seconds: self.step_seconds,
                });
            }
        }
        for (i, (&g, f)) in self.ghi.iter().zip(&self.qc_flags).enumerate() {
            if f.is_empty() && !(g >= 0.0) {
                return Err(Error::InvalidSeries(format!(
                    "unflagged invalid ghi {g} at index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// True when the value at `i` carries no QC flag.
    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.qc_flags[i].is_empty()
    }

    /// Index of the first timestamp `>= t`.
    pub fn index_at_or_after(&self, t: i64) -> usize {
        self.timestamps.partition_point(|&x| x < t)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> IrradianceSeries {
        IrradianceSeries {
            meta: self.meta.clone(),
            step_seconds: self.step_seconds,
            timestamps: self.timestamps[range.clone()].to_vec(),
            ghi: self.ghi[range.clone()].to_vec(),
            clearsky_ghi: self.clearsky_ghi.as_ref().map(|c| c[range.clone()].to_vec()),
            qc_flags: self.qc_flags[range].to_vec(),
        }
    }

    /// Clearsky column, or the analytic model evaluated at the timestamps.
    pub fn clearsky_or_analytic(&self) -> Vec<f64> {
        match &self.clearsky_ghi {
            Some(c) => c.clone(),
            None => clearsky::clearsky_series(&self.timestamps, &self.meta),
        }
    }

    /// Fills the clearsky column from the analytic model when absent.
    pub fn with_analytic_clearsky(mut self) -> Self {
        if self.clearsky_ghi.is_none() {
            self.clearsky_ghi = Some(clearsky::clearsky_series(&self.timestamps, &self.meta));
        }
        self
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub ghi_column: String,
    pub clearsky_column: Option<String>,
    /// Longest run of absent rows that is filled with `MISSING` entries.
    pub max_gap_fill: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            ghi_column: "ghi".into(),
            clearsky_column: Some("clearsky_ghi".into()),
            max_gap_fill: 1,
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(t: i64) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .expect("timestamp within chrono range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_value(field: &str, line: usize, column: &str) -> Result<f64> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field.parse::<f64>().map_err(|_| Error::MalformedRow {
        line,
        message: format!("column `{column}`: cannot parse `{field}` as a number"),
    })
}

/// Loads `<dir>/<site_id>.csv` together with its `<site_id>.meta.json` sidecar.
pub fn load_site(csv_path: &Path, schema: &CsvSchema) -> Result<IrradianceSeries> {
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidMeta(format!("bad file name {}", csv_path.display())))?;
    let sidecar = csv_path.with_file_name(format!("{stem}.meta.json"));
    let meta = SiteMeta::from_json_file(&sidecar)?;
    parse_csv(csv_path, schema, meta)
}

pub fn parse_csv(path: &Path, schema: &CsvSchema, meta: SiteMeta) -> Result<IrradianceSeries> {
    parse_csv_reader(std::fs::File::open(path)?, schema, meta)
}

pub fn parse_csv_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
    meta: SiteMeta,
) -> Result<IrradianceSeries> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRow { line: 1, message: e.to_string() })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let ts_col = find(&schema.timestamp_column).ok_or_else(|| Error::MalformedRow {
        line: 1,
        message: format!("missing column `{}`", schema.timestamp_column),
    })?;
    let ghi_col = find(&schema.ghi_column).ok_or_else(|| Error::MalformedRow {
        line: 1,
        message: format!("missing column `{}`", schema.ghi_column),
    })?;
    let cs_col = schema.clearsky_column.as_deref().and_then(find);

    // (timestamp, line, ghi, clearsky)
    let mut rows: Vec<(i64, usize, f64, f64)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::MalformedRow { line, message: e.to_string() })?;
        let field = |c: usize| {
            record.get(c).ok_or_else(|| Error::MalformedRow {
                line,
                message: format!("expected at least {} fields", c + 1),
            })
        };
        let ts_field = field(ts_col)?;
        let t = parse_timestamp(ts_field).ok_or_else(|| Error::MalformedRow {
            line,
            message: format!("cannot parse timestamp `{ts_field}`"),
        })?;
        let ghi = parse_value(field(ghi_col)?, line, &schema.ghi_column)?;
        let cs = match cs_col {
            Some(c) => parse_value(field(c)?, line, "clearsky")?,
            None => f64::NAN,
        };
        rows.push((t, line, ghi, cs));
    }
    if rows.is_empty() {
        return Err(Error::InvalidSeries("no data rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateTimestamp { line: w[1].1, timestamp: w[1].0 });
        }
    }

    let step = rows
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .min()
        .unwrap_or(DEFAULT_STEP_SECONDS);

    let mut timestamps = Vec::with_capacity(rows.len());
    let mut ghi = Vec::with_capacity(rows.len());
    let mut cs = Vec::with_capacity(rows.len());
    let mut flags = Vec::with_capacity(rows.len());
    let mut push = |t: i64, g: f64, c: f64| {
        let mut f = QcFlags::empty();
        if !g.is_finite() {
            f |= QcFlags::MISSING;
        } else if g < 0.0 {
            f |= QcFlags::NEGATIVE;
        }
        timestamps.push(t);
        ghi.push(g);
        cs.push(c);
        flags.push(f);
    };
    for (k, row) in rows.iter().enumerate() {
        if k > 0 {
            let prev = rows[k - 1].0;
            let gap = row.0 - prev;
            if gap % step != 0 || (gap / step - 1) as usize > schema.max_gap_fill {
                return Err(Error::NonConstantStep { after: prev, gap_seconds: gap, step_seconds: step });
            }
            for j in 1..gap / step {
                push(prev + j * step, f64::NAN, f64::NAN);
            }
        }
        push(row.0, row.2, row.3);
    }
    IrradianceSeries::new(meta, step, timestamps, ghi, cs_col.map(|_| cs), flags)
}

/// Writes `timestamp,ghi[,clearsky_ghi]`; missing values become empty fields.
pub fn write_csv<W: Write>(series: &IrradianceSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fmt = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    match &series.clearsky_ghi {
        Some(_) => w.write_record(["timestamp", "ghi", "clearsky_ghi"]).map_err(io)?,
        None => w.write_record(["timestamp", "ghi"]).map_err(io)?,
    }
    for i in 0..series.len() {
        let ts = format_timestamp(series.timestamps[i]);
        match &series.clearsky_ghi {
            Some(c) => w.write_record([ts, fmt(series.ghi[i]), fmt(c[i])]).map_err(io)?,
            None => w.write_record([ts, fmt(series.ghi[i])]).map_err(io)?,
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Quality control
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    /// Upper limit is `clearsky_ratio * clearsky + clearsky_offset`.
    pub clearsky_ratio: f64,
    pub clearsky_offset: f64,
    /// The upper-limit test only applies where clearsky exceeds this.
    pub night_threshold: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            clearsky_ratio: 1.5,
            clearsky_offset: 100.0,
            night_threshold: clearsky::DEFAULT_NIGHT_THRESHOLD,
        }
    }
}

pub fn quality_control(series: &IrradianceSeries, clearsky: &[f64]) -> Result<IrradianceSeries> {
    quality_control_with(series, clearsky, &QcConfig::default())
}

/// Recomputes the `NEGATIVE` and `EXCEEDS_PHYSICAL` flags; `MISSING` is kept.
pub fn quality_control_with(
    series: &IrradianceSeries,
    clearsky: &[f64],
    config: &QcConfig,
) -> Result<IrradianceSeries> {
    if clearsky.len() != series.len() {
        return Err(Error::LengthMismatch { expected: series.len(), actual: clearsky.len() });
    }
    let mut out = series.clone();
    for i in 0..out.len() {
        let g = out.ghi[i];
        let cs = clearsky[i];
        let mut f = out.qc_flags[i] & QcFlags::MISSING;
        if !g.is_finite() {
            f |= QcFlags::MISSING;
        } else if g < 0.0 {
            f |= QcFlags::NEGATIVE;
        } else if cs > config.night_threshold
            && g > config.clearsky_ratio * cs + config.clearsky_offset
        {
            f |= QcFlags::EXCEEDS_PHYSICAL;
        }
        out.qc_flags[i] = f;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Chronological splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Fraction of the series assigned to training; ignored when `boundary` is set.
    pub train_fraction: f64,
    /// First test instant, unix seconds.
    pub boundary: Option<i64>,
    /// Chronological tail of the training portion used for validation.
    pub validation_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            boundary: None,
            validation_fraction: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.boundary.is_none() && !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::InvalidSplit(format!(
                "train_fraction {} outside [0, 1]",
                self.train_fraction
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidSplit(format!(
                "validation_fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    fn test_start_index(&self, series: &IrradianceSeries) -> usize {
        match self.boundary {
            Some(t) => series.index_at_or_after(t),
            None => (self.train_fraction * series.len() as f64).floor() as usize,
        }
    }
}

/// Splits into (train, test) at the boundary, without shuffling.
pub fn split(
    series: &IrradianceSeries,
    spec: &SplitSpec,
) -> Result<(IrradianceSeries, IrradianceSeries)> {
    spec.validate()?;
    let k = spec.test_start_index(series);
    if k == 0 || k >= series.len() {
        return Err(Error::EmptyPartition);
    }
    Ok((series.slice(0..k), series.slice(k..series.len())))
}

/// Splits a training series into (fit, validation) with validation as the tail.
pub fn split_validation(
    train: &IrradianceSeries,
    validation_fraction: f64,
) -> Result<(IrradianceSeries, IrradianceSeries)> {
    let k = ((1.0 - validation_fraction) * train.len() as f64).floor() as usize;
    if k == 0 || k >= train.len() {
        return Err(Error::EmptyPartition);
    }
    Ok((train.slice(0..k), train.slice(k..train.len())))
}

/// Full series plus the instants where validation and test periods begin.
///
/// Supervised sets are built on the whole series and assigned to a period by
/// target time, so test rows keep their lag history from the training years.
#[derive(Debug, Clone)]
pub struct ChronoPartition {
    pub series: IrradianceSeries,
    pub valid_start: i64,
    pub test_start: i64,
}

impl ChronoPartition {
    pub fn new(series: IrradianceSeries, spec: &SplitSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.test_start_index(&series);
        if k == 0 || k >= series.len() {
            return Err(Error::EmptyPartition);
        }
        let v = ((1.0 - spec.validation_fraction) * k as f64).floor() as usize;
        if v == 0 || v >= k {
            return Err(Error::EmptyPartition);
        }
        Ok(Self {
            valid_start: series.timestamps[v],
            test_start: series.timestamps[k],
            series,
        })
    }

    /// Index range of the fitting period (before validation).
    pub fn fit_range(&self) -> std::ops::Range<usize> {
        0..self.series.index_at_or_after(self.valid_start)
    }

    pub fn valid_range(&self) -> std::ops::Range<usize> {
        self.series.index_at_or_after(self.valid_start)..self.series.index_at_or_after(self.test_start)
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.series.index_at_or_after(self.test_start)..self.series.len()
    }

    /// (fit, validation, test) supervised sets.
    pub fn supervised(
        &self,
        n_lags: usize,
        horizon_steps: usize,
    ) -> Result<(SupervisedSet, SupervisedSet, SupervisedSet)> {
        let all = build_supervised(&self.series, n_lags, horizon_steps)?;
        let (fit, rest) = all.partition_at(self.valid_start);
        let (valid, test) = rest.partition_at(self.test_start);
        Ok((fit, valid, test))
    }
}

// ---------------------------------------------------------------------------
// Lag embedding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    /// Row `i` holds `[y(a), y(a-1), ..., y(a-p+1)]` for anchor `a`, the last observed step.
    pub inputs: DMatrix<f64>,
    /// `y(a + h)`.
    pub targets: Vec<f64>,
    pub target_times: Vec<i64>,
    /// Series index of each row's anchor.
    pub anchor_indices: Vec<usize>,
    pub horizon_steps: usize,
    pub n_lags: usize,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn select_rows(&self, rows: &[usize]) -> SupervisedSet {
        SupervisedSet {
            inputs: self.inputs.select_rows(rows),
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
            target_times: rows.iter().map(|&r| self.target_times[r]).collect(),
            anchor_indices: rows.iter().map(|&r| self.anchor_indices[r]).collect(),
            horizon_steps: self.horizon_steps,
            n_lags: self.n_lags,
        }
    }

    /// Rows with target before `t`, and the rest.
    pub fn partition_at(&self, t: i64) -> (SupervisedSet, SupervisedSet) {
        let k = self.target_times.partition_point(|&x| x < t);
        let before: Vec<usize> = (0..k).collect();
        let after: Vec<usize> = (k..self.len()).collect();
        (self.select_rows(&before), self.select_rows(&after))
    }

    /// Keeps rows whose target index `anchor + horizon` satisfies `keep`.
    pub fn retain_targets(&self, keep: impl Fn(usize) -> bool) -> SupervisedSet {
        let rows: Vec<usize> =
            (0..self.len()).filter(|&r| keep(self.anchor_indices[r] + self.horizon_steps)).collect();
        self.select_rows(&rows)
    }

    /// Keeps the most recent `n` rows.
    pub fn tail(&self, n: usize) -> SupervisedSet {
        let start = self.len().saturating_sub(n);
        let rows: Vec<usize> = (start..self.len()).collect();
        self.select_rows(&rows)
    }
}

/// Lag embedding over QC-valid windows.
pub fn build_supervised(
    series: &IrradianceSeries,
    n_lags: usize,
    horizon_steps: usize,
) -> Result<SupervisedSet> {
    build_supervised_values(&series.ghi, &series.timestamps, n_lags, horizon_steps, |i| {
        series.is_valid(i)
    })
}

/// Lag embedding of an arbitrary value column with a validity predicate.
pub fn build_supervised_values(
    values: &[f64],
    timestamps: &[i64],
    n_lags: usize,
    horizon_steps: usize,
    valid: impl Fn(usize) -> bool,
) -> Result<SupervisedSet> {
    if n_lags == 0 || horizon_steps == 0 {
        return Err(Error::InvalidConfig("n_lags and horizon_steps must be >= 1".into()));
    }
    let n = values.len();
    if n <= n_lags + horizon_steps {
        return Err(Error::SeriesTooShort { required: n_lags + horizon_steps, available: n });
    }
    let ok: Vec<bool> = (0..n).map(|i| valid(i) && values[i].is_finite()).collect();

    // Length of the run of valid entries ending at each index.
    let mut run = vec![0usize; n];
    for i in 0..n {
        run[i] = if ok[i] { if i == 0 { 1 } else { run[i - 1] + 1 } } else { 0 };
    }

    let anchors: Vec<usize> = (n_lags - 1..n - horizon_steps)
        .filter(|&a| run[a] >= n_lags && ok[a + horizon_steps])
        .collect();

    let rows = anchors.len();
    let inputs = DMatrix::from_fn(rows, n_lags, |r, j| values[anchors[r] - j]);
    Ok(SupervisedSet {
        inputs,
        targets: anchors.iter().map(|&a| values[a + horizon_steps]).collect(),
        target_times: anchors.iter().map(|&a| timestamps[a + horizon_steps]).collect(),
        anchor_indices: anchors,
        horizon_steps,
        n_lags,
    })
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Cloud regime of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkyState {
    Clear = 0,
    Broken = 1,
    Overcast = 2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// First timestamp, unix seconds.
    pub start: i64,
    pub step_seconds: i64,
    /// Row-stochastic transition matrix, indexed by [`SkyState`].
    pub transition: [[f64; 3]; 3],
    /// Beta(a, b) clearsky-index multipliers per state.
    pub multipliers: [(f64, f64); 3],
    /// Every step clear with multiplier exactly 1.
    pub force_clear: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            // 2019-01-01T00:00:00Z
            start: 1_546_300_800,
            step_seconds: DEFAULT_STEP_SECONDS,
            transition: [
                [0.90, 0.07, 0.03],
                [0.05, 0.90, 0.05],
                [0.03, 0.07, 0.90],
            ],
            multipliers: [(40.0, 2.0), (4.0, 3.0), (2.0, 6.0)],
            force_clear: false,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        for row in &self.transition {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig("transition rows must be probability vectors".into()));
            }
        }
        if self.multipliers.iter().any(|&(a, b)| !(a > 0.0 && b > 0.0)) {
            return Err(Error::InvalidConfig("beta parameters must be positive".into()));
        }
        if self.step_seconds <= 0 {
            return Err(Error::InvalidConfig("step must be positive".into()));
        }
        Ok(())
    }
}

pub fn synthesize_dataset(meta: &SiteMeta, n_days: usize, seed: u64) -> Result<IrradianceSeries> {
    synthesize_dataset_with(meta, n_days, seed, &SyntheticConfig::default())
}

/// Analytic clearsky scaled by a Markov-switching clearsky index.
pub fn synthesize_dataset_with(
    meta: &SiteMeta,
    n_days: usize,
    seed: u64,
    config: &SyntheticConfig,
) -> Result<IrradianceSeries> {
    if n_days == 0 {
        return Err(Error::InvalidConfig("n_days must be >= 1".into()));
    }
    config.validate()?;
    meta.validate()?;
    let per_day = 86_400 / config.step_seconds;
    let n = n_days * per_day as usize;
    let timestamps: Vec<i64> = (0..n as i64).map(|k| config.start + k * config.step_seconds).collect();
    let clearsky = clearsky::clearsky_series(&timestamps, meta);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let betas: Vec<Beta<f64>> = config
        .multipliers
        .iter()
        .map(|&(a, b)| Beta::new(a, b).expect("validated beta parameters"))
        .collect();
    let mut state = 0usize;
    let mut ghi = Vec::with_capacity(n);
    for &cs in &clearsky {
        let k = if config.force_clear {
            1.0
        } else {
            let u: f64 = rng.random();
            let row = &config.transition[state];
            state = if u < row[0] { 0 } else if u < row[0] + row[1] { 1 } else { 2 };
            betas[state].sample(&mut rng)
        };
        ghi.push(cs * k);
    }
    IrradianceSeries::new(
        meta.clone(),
        config.step_seconds,
        timestamps,
        ghi,
        Some(clearsky),
        vec![QcFlags::empty(); n],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> SiteMeta {
        SiteMeta::new("s1", 37.4, -5.9, 30.0, 60).unwrap()
    }

    fn series_from(values: &[f64]) -> IrradianceSeries {
        let n = values.len();
        IrradianceSeries::new(
            meta(),
            1800,
            (0..n as i64).map(|k| k * 1800).collect(),
            values.to_vec(),
            None,
            vec![QcFlags::empty(); n],
        )
        .unwrap()
    }

    #[test]
    fn parse_three_rows() {
        let csv = "timestamp,ghi\n2021-01-01T00:00:00Z,0\n2021-01-01T00:30:00Z,50\n2021-01-01T01:00:00Z,120\n";
        let s = parse_csv_reader(csv.as_bytes(), &CsvSchema::default(), meta()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.step_seconds, 1800);
        assert_eq!(s.ghi, vec![0.0, 50.0, 120.0]);
        assert!(s.clearsky_ghi.is_none());
    }

    #[test]
    fn parse_rejects_duplicates() {
        let csv = "timestamp,ghi\n2021-01-01T00:00:00Z,0\n2021-01-01T00:30:00Z,50\n2021-01-01T00:30:00Z,51\n";
        let err = parse_csv_reader(csv.as_bytes(), &CsvSchema::default(), meta()).unwrap_err();
        assert!(matches!(err, Error::DuplicateTimestamp { line: 4, .. }), "{err}");
    }

    #[test]
    fn parse_sorts_and_fills_single_gap() {
        let csv = "timestamp,ghi,clearsky_ghi\n2021-01-01 01:30:00,7,9\n2021-01-01 00:00:00,1,2\n2021-01-01 00:30:00,,3\n2021-01-01 01:00:00,-4,4\n2021-01-01 02:30:00,8,8\n";
        let s = parse_csv_reader(csv.as_bytes(), &CsvSchema::default(), meta()).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.qc_flags[1].contains(QcFlags::MISSING));
        assert!(s.qc_flags[2].contains(QcFlags::NEGATIVE));
        assert!(s.qc_flags[4].contains(QcFlags::MISSING));
        assert_eq!(s.clearsky_ghi.as_ref().unwrap()[3], 9.0);
    }

    #[test]
    fn parse_rejects_long_gap_and_bad_rows() {
        let csv = "timestamp,ghi\n2021-01-01T00:00:00Z,0\n2021-01-01T00:30:00Z,1\n2021-01-01T02:00:00Z,3\n";
        let err = parse_csv_reader(csv.as_bytes(), &CsvSchema::default(), meta()).unwrap_err();
        assert!(matches!(err, Error::NonConstantStep { .. }));

        let csv = "timestamp,ghi\n2021-01-01T00:00:00Z,0\nnot-a-time,1\n";
        let err = parse_csv_reader(csv.as_bytes(), &CsvSchema::default(), meta()).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }));

        let csv = "timestamp,ghi\n2021-01-01T00:00:00Z,abc\n";
        let err = parse_csv_reader(csv.as_bytes(), &CsvSchema::default(), meta()).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn qc_examples() {
        let mut s = series_from(&[0.0, 0.0, 400.0, 120.0]);
        s.ghi[0] = -5.0;
        s.qc_flags[0] = QcFlags::NEGATIVE;
        let q = quality_control(&s, &[50.0, 0.0, 100.0, 100.0]).unwrap();
        assert_eq!(q.qc_flags[0], QcFlags::NEGATIVE);
        assert!(q.qc_flags[1].is_empty());
        assert_eq!(q.qc_flags[2], QcFlags::EXCEEDS_PHYSICAL);
        assert!(q.qc_flags[3].is_empty());
        assert!(quality_control(&s, &[1.0]).is_err());
    }

    #[test]
    fn split_by_fraction_and_errors() {
        let s = series_from(&(0..100).map(|v| v as f64).collect::<Vec<_>>());
        let (tr, te) = split(&s, &SplitSpec { train_fraction: 0.75, ..Default::default() }).unwrap();
        assert_eq!((tr.len(), te.len()), (75, 25));
        assert_eq!(tr.ghi[74], 74.0);
        assert_eq!(te.ghi[0], 75.0);
        let err = split(&s, &SplitSpec { train_fraction: 1.0, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::EmptyPartition));
    }

    #[test]
    fn split_four_years_at_boundary() {
        let s = synthesize_dataset(&meta(), 1461, 3).unwrap();
        // 2022-01-01T00:00:00Z
        let boundary = 1_640_995_200;
        let (tr, te) = split(&s, &SplitSpec { boundary: Some(boundary), ..Default::default() }).unwrap();
        assert_eq!(tr.len(), (365 * 3 + 1) * 48);
        assert_eq!(te.len(), 365 * 48);
        assert!(tr.timestamps.last().unwrap() < &te.timestamps[0]);
    }

    #[test]
    fn windowing_example() {
        let s = series_from(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let set = build_supervised(&s, 2, 1).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.inputs.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0]);
        assert_eq!(set.inputs.row(2).iter().copied().collect::<Vec<_>>(), vec![4.0, 3.0]);
        assert_eq!(set.targets, vec![3.0, 4.0, 5.0]);
        assert!(build_supervised(&s, 3, 2).is_err());
    }

    #[test]
    fn flagged_lag_drops_rows() {
        let mut s = series_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        s.qc_flags[2] = QcFlags::EXCEEDS_PHYSICAL;
        let set = build_supervised(&s, 2, 1).unwrap();
        // Anchors 1..=4; anchors 1 (target idx 2), 2, 3 (lag idx 2) are dropped.
        assert_eq!(set.anchor_indices, vec![4]);
    }

    #[test]
    fn long_lag_span() {
        let s = synthesize_dataset(&meta(), 10, 1).unwrap();
        let set = build_supervised(&s, 78, 1).unwrap();
        let first = set.anchor_indices[0];
        let span_hours = (s.timestamps[first] - s.timestamps[first + 1 - 78] + 1800) as f64 / 3600.0;
        assert_eq!(span_hours, 39.0);
    }

    #[test]
    fn synthetic_shape_and_determinism() {
        let a = synthesize_dataset(&meta(), 365, 11).unwrap();
        let b = synthesize_dataset(&meta(), 365, 11).unwrap();
        assert_eq!(a.len(), 17_520);
        assert_eq!(a, b);
        let c = synthesize_dataset(&meta(), 365, 12).unwrap();
        assert_ne!(a.ghi, c.ghi);
    }

    #[test]
    fn forced_clear_equals_clearsky() {
        let cfg = SyntheticConfig { force_clear: true, ..Default::default() };
        let s = synthesize_dataset_with(&meta(), 30, 5, &cfg).unwrap();
        assert_eq!(&s.ghi, s.clearsky_ghi.as_ref().unwrap());
    }

    #[test]
    fn four_year_file_round_trip() {
        let s = synthesize_dataset(&meta(), 1461, 9).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let back = parse_csv_reader(buf.as_slice(), &CsvSchema::default(), meta()).unwrap();
        // Calendar enumeration of 2019-01-01 .. 2023-01-01 at 30 minutes.
        let start = chrono::NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let end = chrono::NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let days = start.iter_days().take_while(|d| *d < end).count();
        assert_eq!(days, 1461);
        assert_eq!(back.len(), days * 48);
        assert_eq!(back.len(), 70_128);
        assert_eq!(back.ghi, s.ghi);
    }
}
