//! Pairwise Mann-Whitney significance over per-site metric values.

use std::io::Write;

use heliocast_core::metrics::mann_whitney_u;
use heliocast_core::{Error, MetricsReport};

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceMatrix {
    pub metric: String,
    pub horizon_steps: usize,
    pub models: Vec<String>,
    /// `p_values[i][j]` compares `models[i]` with `models[j]`.
    pub p_values: Vec<Vec<f64>>,
}

/// Two-sided U-test p-value for every model pair at one horizon.
///
/// Models with fewer than two sites reporting `metric` are left out.
pub fn significance_matrix(
    reports: &[MetricsReport],
    metric: &str,
    horizon_steps: usize,
) -> Result<SignificanceMatrix, Error> {
    if !MetricsReport::METRIC_NAMES.contains(&metric) {
        return Err(Error::InvalidConfig(format!("unknown metric `{metric}`")));
    }
    let mut models: Vec<String> = Vec::new();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for r in reports.iter().filter(|r| r.horizon_steps == horizon_steps) {
        let Some(v) = r.metric(metric) else { continue };
        match models.iter().position(|m| *m == r.model_id) {
            Some(i) => samples[i].push(v),
            None => {
                models.push(r.model_id.clone());
                samples.push(vec![v]);
            }
        }
    }
    let keep: Vec<usize> = (0..models.len()).filter(|&i| samples[i].len() >= 2).collect();
    if keep.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need two models with at least two sites for `{metric}` at horizon {horizon_steps}"
        )));
    }
    let models: Vec<String> = keep.iter().map(|&i| models[i].clone()).collect();
    let samples: Vec<&Vec<f64>> = keep.iter().map(|&i| &samples[i]).collect();
    let n = models.len();
    let mut p_values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let p = mann_whitney_u(samples[i], samples[j])?.p_value;
            p_values[i][j] = p;
            p_values[j][i] = p;
        }
    }
    Ok(SignificanceMatrix { metric: metric.to_string(), horizon_steps, models, p_values })
}

impl SignificanceMatrix {
    /// Square CSV with a `model` header column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), Error> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["model".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (m, row) in self.models.iter().zip(&self.p_values) {
            let mut rec = vec![m.clone()];
            rec.extend(row.iter().map(|p| format!("{p:.6}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(model: &str, site: &str, nrmse: f64) -> MetricsReport {
        MetricsReport {
            model_id: model.into(),
            site_id: site.into(),
            horizon_steps: 6,
            n_points: 10,
            nrmse,
            nmae: 0.0,
            nmbe: 0.0,
            r2: 0.0,
            crps: None,
            mil: None,
            ncrps: None,
            nmil: None,
            picp: None,
            interval_score: None,
            mask_policy: "daytime".into(),
        }
    }

    #[test]
    fn symmetric_with_unit_diagonal() {
        let mut rs = Vec::new();
        for (i, s) in ["a", "b", "c", "d"].iter().enumerate() {
            rs.push(report("P", s, 0.4 + i as f64 * 0.01));
            rs.push(report("ELM", s, 0.2 + i as f64 * 0.01));
            rs.push(report("AR", s, 0.25 + i as f64 * 0.02));
        }
        let m = significance_matrix(&rs, "nrmse", 6).unwrap();
        assert_eq!(m.models, vec!["P", "ELM", "AR"]);
        for i in 0..3 {
            assert!(m.p_values[i][i] >= 0.95);
            for j in 0..3 {
                assert_eq!(m.p_values[i][j], m.p_values[j][i]);
            }
        }
        assert!(m.p_values[0][1] < 0.05);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("model,P,ELM,AR\n"));
    }

    #[test]
    fn insufficient_sites() {
        let rs = vec![report("P", "a", 0.1), report("ELM", "a", 0.2)];
        assert!(significance_matrix(&rs, "nrmse", 6).is_err());
        assert!(significance_matrix(&rs, "crps", 6).is_err());
        assert!(significance_matrix(&rs, "bogus", 6).is_err());
    }
}
