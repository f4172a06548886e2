//! Per-(site, horizon) training and evaluation.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use heliocast_core::benchmarks::{
    self, clearsky_naive, comb, csi_supervised, fit_ar_ls, forecast_ar, persistence, select_es_alpha,
    select_p_bruteforce, select_p_pacf, smart_persistence, ArVariant, Artu, BenchmarkInputs, Cliper,
    PointForecastSet,
};
use heliocast_core::elm::{self, optimize_config_masked, param_count, train_winner_takes_all, ParamCount};
use heliocast_core::metrics::{interval_score, MetricsReport, ProbabilisticInputs};
use heliocast_core::probabilistic::{
    build_lookup_table, interval_from_lookup, predict_quantiles_qr, quantiles_from_lookup, LookupTable,
    QuantileForecast, QuantileModel,
};
use heliocast_core::timeseries::{
    load_site, quality_control_with, synthesize_dataset_with, ChronoPartition, IrradianceSeries,
};
use heliocast_core::{Error, ModelKind};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, MaskPolicy};
use crate::HarnessError;

/// Miscoverage grid of the interval-score curves, `0.05..=0.95`.
pub fn is_alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// 64-bit FNV-1a.
pub fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn site_seed(global: u64, site_id: &str) -> u64 {
    fnv1a(&[&global.to_le_bytes(), site_id.as_bytes()])
}

/// One loaded site, or the reason it could not be loaded.
pub struct LoadedSite {
    pub site_id: String,
    pub data: Result<ChronoPartition, String>,
}

fn prepare(series: IrradianceSeries, cfg: &ExperimentConfig) -> Result<ChronoPartition, Error> {
    let series = series.with_analytic_clearsky();
    let cs = series.clearsky_or_analytic();
    let series = quality_control_with(&series, &cs, &cfg.qc)?;
    ChronoPartition::new(series, &cfg.split)
}

/// Expands CSV globs into a sorted, de-duplicated file list.
pub fn expand_paths(patterns: &[String]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for pat in patterns {
        let matches = glob::glob(pat).map_err(|e| HarnessError::Config(format!("bad pattern `{pat}`: {e}")))?;
        let mut found = false;
        for m in matches {
            let p = m.map_err(|e| HarnessError::Config(e.to_string()))?;
            found = true;
            out.push(p);
        }
        if !found {
            return Err(HarnessError::Config(format!("`{pat}` matched no files")));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn load_sites(cfg: &ExperimentConfig) -> Result<Vec<LoadedSite>, HarnessError> {
    let mut sites = match &cfg.data {
        DataSource::Csv { paths, schema } => expand_paths(paths)?
            .into_iter()
            .map(|path| {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                match load_site(&path, schema) {
                    Ok(series) => LoadedSite {
                        site_id: series.meta.site_id.clone(),
                        data: prepare(series, cfg).map_err(|e| e.to_string()),
                    },
                    Err(e) => LoadedSite { site_id: stem, data: Err(format!("{}: {e}", path.display())) },
                }
            })
            .collect::<Vec<_>>(),
        DataSource::Synthetic { sites, n_days, generator } => sites
            .iter()
            .map(|meta| LoadedSite {
                site_id: meta.site_id.clone(),
                data: synthesize_dataset_with(meta, *n_days, site_seed(cfg.seed, &meta.site_id), generator)
                    .and_then(|s| prepare(s, cfg))
                    .map_err(|e| e.to_string()),
            })
            .collect(),
    };
    sites.sort_by(|a, b| a.site_id.cmp(&b.site_id));
    if sites.windows(2).any(|w| w[0].site_id == w[1].site_id) {
        return Err(HarnessError::Config("two data files share a site_id".into()));
    }
    Ok(sites)
}

// ---------------------------------------------------------------------------
// Task outputs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub site_id: String,
    pub horizon_steps: usize,
    pub model: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmFitRecord {
    pub site_id: String,
    pub horizon_steps: usize,
    pub n_input: usize,
    pub n_hidden: usize,
    pub params: ParamCount,
    pub winner_run: usize,
    pub validation_nrmse: f64,
    pub search_evaluations: usize,
}

/// Interval score at each miscoverage of [`is_alpha_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct IsCurve {
    pub site_id: String,
    pub horizon_steps: usize,
    pub model: ModelKind,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct TaskOutput {
    pub reports: Vec<MetricsReport>,
    pub statuses: Vec<TaskStatus>,
    pub quantiles: Vec<(ModelKind, QuantileForecast)>,
    pub is_curves: Vec<IsCurve>,
    pub elm_fits: Vec<ElmFitRecord>,
}

enum Probabilistic {
    Lookup(LookupTable),
    Quantiles(QuantileForecast),
}

struct ModelOutput {
    point: PointForecastSet,
    prob: Option<Probabilistic>,
}

impl ModelOutput {
    fn point(point: PointForecastSet) -> Self {
        Self { point, prob: None }
    }
}

/// Everything a model needs for one (site, horizon).
struct TaskContext<'a> {
    cfg: &'a ExperimentConfig,
    site_id: &'a str,
    part: &'a ChronoPartition,
    inputs: BenchmarkInputs<'a>,
    h: usize,
}

impl TaskContext<'_> {
    fn in_mask(&self, idx: usize) -> bool {
        match self.cfg.mask_policy {
            MaskPolicy::Daytime => self.inputs.clearsky[idx] > self.cfg.night_threshold,
            MaskPolicy::All => true,
        }
    }

    fn index_of(&self, t: i64) -> Option<usize> {
        let s = &self.part.series;
        let off = t - s.timestamps[0];
        if off < 0 || off % s.step_seconds != 0 {
            return None;
        }
        let i = (off / s.step_seconds) as usize;
        (i < s.len()).then_some(i)
    }

    fn task_seed(&self) -> u64 {
        fnv1a(&[
            &self.cfg.seed.to_le_bytes(),
            &self.cfg.elm.base.seed.to_le_bytes(),
            self.site_id.as_bytes(),
            &(self.h as u64).to_le_bytes(),
        ])
    }
}

type Cache = BTreeMap<ModelKind, Result<PointForecastSet, String>>;

fn cached_point(ctx: &TaskContext<'_>, kind: ModelKind, cache: &mut Cache) -> Result<PointForecastSet, String> {
    if let Some(r) = cache.get(&kind) {
        return r.clone();
    }
    let r = run_benchmark(ctx, kind, cache);
    cache.insert(kind, r.clone());
    r
}

fn run_benchmark(ctx: &TaskContext<'_>, kind: ModelKind, cache: &mut Cache) -> Result<PointForecastSet, String> {
    let inputs = &ctx.inputs;
    let fit = ctx.part.fit_range();
    let e = |e: Error| e.to_string();
    match kind {
        ModelKind::Persistence => Ok(persistence(inputs)),
        ModelKind::Clearsky => Ok(clearsky_naive(inputs)),
        ModelKind::SmartPersistence => Ok(smart_persistence(inputs)),
        ModelKind::Cliper => Ok(Cliper::fit(inputs, fit).map_err(e)?.forecast(inputs)),
        ModelKind::ExpSmoothing => {
            let alpha = select_es_alpha(inputs, fit).map_err(e)?;
            benchmarks::exp_smoothing(inputs, alpha).map_err(e)
        }
        ModelKind::Artu => Ok(Artu::fit(inputs, fit).map_err(e)?.forecast(inputs)),
        ModelKind::Comb => {
            let members = [ModelKind::SmartPersistence, ModelKind::Cliper, ModelKind::ExpSmoothing, ModelKind::Artu]
                .into_iter()
                .map(|m| cached_point(ctx, m, cache).map_err(|err| format!("member {m}: {err}")))
                .collect::<Result<Vec<_>, _>>()?;
            comb(&members).map_err(e)
        }
        ModelKind::Ar => {
            let p_max = ctx.cfg.ar.p_max;
            let (fit_set, valid_set, _) = ctx.part.supervised(p_max, ctx.h).map_err(e)?;
            let p = select_p_bruteforce(&fit_set, &valid_set, p_max).map_err(e)?;
            let (fit_p, _, _) = ctx.part.supervised(p, ctx.h).map_err(e)?;
            let model = fit_ar_ls(&fit_p, ArVariant::Raw).map_err(e)?;
            forecast_ar(&model, inputs).map_err(e)
        }
        ModelKind::Rar => {
            let k = &inputs.csi;
            let p = match select_p_pacf(&k.values[fit.clone()], &k.validity[fit], ctx.cfg.ar.rar_max_lag) {
                Ok(p) => p,
                // Constant clearsky index: the PACF is undefined and one lag suffices.
                Err(Error::UndefinedNormalization) => 1,
                Err(err) => return Err(err.to_string()),
            };
            let (fit_set, _) = csi_supervised(inputs, p).map_err(e)?.partition_at(ctx.part.valid_start);
            let model = fit_ar_ls(&fit_set, ArVariant::ClearskyIndex).map_err(e)?;
            forecast_ar(&model, inputs).map_err(e)
        }
        ModelKind::Elm | ModelKind::Qr => unreachable!("probabilistic models are not benchmarks"),
    }
}

fn run_elm(ctx: &TaskContext<'_>) -> Result<(ModelOutput, ElmFitRecord), Error> {
    let section = &ctx.cfg.elm;
    let base = elm::ElmConfig { seed: ctx.task_seed(), ..section.base.clone() };
    let (config, evaluations) = match &section.search {
        Some(settings) => {
            let outcome = optimize_config_masked(ctx.part, ctx.h, &base, settings, |i| ctx.in_mask(i))?;
            (outcome.config, outcome.evaluations.len())
        }
        None => (base, 0),
    };
    let (fit, valid, test) = ctx.part.supervised(config.n_input, ctx.h)?;
    let fit = match section.max_train_rows {
        Some(m) => fit.tail(m),
        None => fit,
    };
    let wta = train_winner_takes_all(&fit, &valid.retain_targets(|i| ctx.in_mask(i)), &config)?;

    let fitted = elm::predict(&wta.model, &fit.inputs)?;
    let residuals: Vec<f64> = (0..fit.len())
        .filter(|&r| ctx.in_mask(fit.anchor_indices[r] + ctx.h))
        .map(|r| fit.targets[r] - fitted[r])
        .collect();
    let table = build_lookup_table(&residuals)?;

    let predictions = elm::predict(&wta.model, &test.inputs)?;
    let record = ElmFitRecord {
        site_id: ctx.site_id.to_string(),
        horizon_steps: ctx.h,
        n_input: config.n_input,
        n_hidden: config.n_hidden,
        params: param_count(&config),
        winner_run: wta.winner,
        validation_nrmse: wta.winner_score(),
        search_evaluations: evaluations,
    };
    let point = PointForecastSet {
        model_id: "ELM".into(),
        horizon_steps: ctx.h,
        target_times: test.target_times,
        predictions,
    };
    Ok((ModelOutput { point, prob: Some(Probabilistic::Lookup(table)) }, record))
}

fn run_qr(ctx: &TaskContext<'_>) -> Result<ModelOutput, Error> {
    let section = &ctx.cfg.qr;
    let (fit, _, test) = ctx.part.supervised(section.n_lags, ctx.h)?;
    let fit = match section.max_train_rows {
        Some(m) => fit.tail(m),
        None => fit,
    };
    let model = QuantileModel::fit(&fit, &section.options)?;
    let qf = predict_quantiles_qr(&model, &test.inputs, &test.target_times)?;
    let point = PointForecastSet {
        model_id: "QR".into(),
        horizon_steps: ctx.h,
        target_times: qf.target_times.clone(),
        predictions: qf.quantiles.iter().map(|q| q[50]).collect(),
    };
    Ok(ModelOutput { point, prob: Some(Probabilistic::Quantiles(qf)) })
}

/// Trains every configured model for one (site, horizon) and scores them on
/// the common set of test targets.
pub fn run_task(cfg: &ExperimentConfig, site_id: &str, part: &ChronoPartition, h: usize) -> TaskOutput {
    let mut out = TaskOutput::default();
    let fail_all = |out: &mut TaskOutput, msg: String| {
        for m in &cfg.models {
            out.statuses.push(TaskStatus {
                site_id: site_id.to_string(),
                horizon_steps: h,
                model: m.to_string(),
                status: Status::Failed,
                message: Some(msg.clone()),
                wall_seconds: 0.0,
            });
        }
    };
    let inputs = match BenchmarkInputs::new(&part.series, h, cfg.night_threshold) {
        Ok(i) => i,
        Err(e) => {
            fail_all(&mut out, e.to_string());
            return out;
        }
    };
    let ctx = TaskContext { cfg, site_id, part, inputs, h };

    let mut cache = Cache::new();
    let mut results: Vec<(ModelKind, Result<ModelOutput, String>, f64)> = Vec::new();
    for &kind in &cfg.models {
        let start = Instant::now();
        let r = match kind {
            ModelKind::Elm => run_elm(&ctx)
                .map(|(o, rec)| {
                    out.elm_fits.push(rec);
                    o
                })
                .map_err(|e| e.to_string()),
            ModelKind::Qr => run_qr(&ctx).map_err(|e| e.to_string()),
            _ => cached_point(&ctx, kind, &mut cache).map(ModelOutput::point),
        };
        results.push((kind, r, start.elapsed().as_secs_f64()));
    }

    // Common evaluation targets: test period, QC-valid, inside the mask, and
    // forecast by every model that succeeded.
    let series = &part.series;
    let test = part.test_range();
    let mut covered = vec![0usize; series.len()];
    let mut n_ok = 0usize;
    let mut rows: Vec<Option<Vec<Option<usize>>>> = Vec::new();
    for (_, r, _) in &results {
        match r {
            Ok(o) => {
                n_ok += 1;
                let mut map = vec![None; series.len()];
                for (row, &t) in o.point.target_times.iter().enumerate() {
                    if let Some(i) = ctx.index_of(t) {
                        map[i] = Some(row);
                        covered[i] += 1;
                    }
                }
                rows.push(Some(map));
            }
            Err(_) => rows.push(None),
        }
    }
    let eval: Vec<usize> = test
        .filter(|&i| series.is_valid(i) && ctx.in_mask(i) && covered[i] == n_ok)
        .collect();
    let y: Vec<f64> = eval.iter().map(|&i| series.ghi[i]).collect();

    for ((kind, r, secs), map) in results.into_iter().zip(rows) {
        let status = |status: Status, message: Option<String>| TaskStatus {
            site_id: site_id.to_string(),
            horizon_steps: h,
            model: kind.to_string(),
            status,
            message,
            wall_seconds: secs,
        };
        let o = match r {
            Ok(o) => o,
            Err(msg) => {
                out.statuses.push(status(Status::Failed, Some(msg)));
                continue;
            }
        };
        let map = map.expect("successful model has a row map");
        let sel: Vec<usize> = eval.iter().map(|&i| map[i].expect("covered by every model")).collect();
        let yhat: Vec<f64> = sel.iter().map(|&r| o.point.predictions[r]).collect();
        let eval_times: Vec<i64> = eval.iter().map(|&i| series.timestamps[i]).collect();

        let qf = match &o.prob {
            None => None,
            Some(Probabilistic::Lookup(table)) => Some(quantiles_from_lookup(&yhat, &eval_times, table)),
            Some(Probabilistic::Quantiles(all)) => Some(Ok(QuantileForecast {
                target_times: eval_times.clone(),
                quantiles: sel.iter().map(|&r| all.quantiles[r].clone()).collect(),
            })),
        };
        let qf = match qf.transpose() {
            Ok(q) => q,
            Err(e) => {
                out.statuses.push(status(Status::Failed, Some(e.to_string())));
                continue;
            }
        };
        let bounds = |alpha: f64| -> (Vec<f64>, Vec<f64>) {
            match (&o.prob, &qf) {
                (Some(Probabilistic::Lookup(table)), _) => {
                    yhat.iter().map(|&p| interval_from_lookup(p, table, alpha)).unzip()
                }
                (_, Some(q)) => q.interval(alpha),
                _ => (Vec::new(), Vec::new()),
            }
        };

        let report = match &qf {
            None => MetricsReport::compute(kind.name(), site_id, h, &y, &yhat, None, cfg.mask_policy.name(), None),
            Some(q) => {
                let (lower, upper) = bounds(cfg.interval_alpha);
                MetricsReport::compute(
                    kind.name(),
                    site_id,
                    h,
                    &y,
                    &yhat,
                    None,
                    cfg.mask_policy.name(),
                    Some(ProbabilisticInputs { quantiles: q, lower: &lower, upper: &upper, alpha: cfg.interval_alpha }),
                )
            }
        };
        match report {
            Ok(rep) => {
                out.reports.push(rep);
                out.statuses.push(status(Status::Ok, None));
            }
            Err(e) => {
                out.statuses.push(status(Status::Failed, Some(format!("evaluation: {e}"))));
                continue;
            }
        }

        if qf.is_some() {
            let points = is_alpha_grid()
                .into_iter()
                .filter_map(|a| {
                    let (lo, hi) = bounds(a);
                    interval_score(&y, &lo, &hi, a, None).ok().map(|s| (a, s))
                })
                .collect();
            let q = qf.expect("checked above");
            out.is_curves.push(IsCurve { site_id: site_id.to_string(), horizon_steps: h, model: kind, points });
            out.quantiles.push((kind, q));
        }
    }
    out
}
