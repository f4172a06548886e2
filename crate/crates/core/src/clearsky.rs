//! Solar geometry, an analytic cloud-free irradiance model and the clearsky index.
//!
//! The geometry uses Cooper's declination and a plain hour angle from UTC and
//! longitude (no equation-of-time correction). The cloud-free model is the
//! Haurwitz form, which needs nothing but the solar elevation.

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::SiteMeta;

/// Solar constant, W/m².
pub const SOLAR_CONSTANT: f64 = 1361.0;
/// Default clearsky level at or below which a timestamp is treated as night, W/m².
pub const DEFAULT_NIGHT_THRESHOLD: f64 = 10.0;
/// Default upper cap on the clearsky index.
pub const DEFAULT_CSI_CAP: f64 = 2.0;

const HAURWITZ_SCALE: f64 = 1098.0;
const HAURWITZ_EXTINCTION: f64 = 0.057;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearskyConfig {
    pub night_threshold: f64,
    pub csi_cap: f64,
}

impl Default for ClearskyConfig {
    fn default() -> Self {
        Self {
            night_threshold: DEFAULT_NIGHT_THRESHOLD,
            csi_cap: DEFAULT_CSI_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    /// Degrees above the horizon.
    pub elevation: f64,
    /// Degrees from the vertical; `90 - elevation`.
    pub zenith: f64,
    /// Top-of-atmosphere irradiance on a horizontal plane, W/m².
    pub extraterrestrial: f64,
}

fn day_of_year(t: &DateTime<chrono::Utc>) -> f64 {
    t.ordinal() as f64
}

/// Solar position at a UTC instant given in unix seconds.
pub fn solar_position(unix_seconds: i64, meta: &SiteMeta) -> SolarPosition {
    let t = DateTime::from_timestamp(unix_seconds, 0).expect("timestamp within chrono range");
    let doy = day_of_year(&t);
    let declination = (23.45f64).to_radians()
        * (std::f64::consts::TAU * (284.0 + doy) / 365.0).sin();

    let utc_hours = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let solar_hours = utc_hours + meta.longitude / 15.0;
    let hour_angle = (15.0 * (solar_hours - 12.0)).to_radians();

    let lat = meta.latitude.to_radians();
    let sin_el = lat.sin() * declination.sin() + lat.cos() * declination.cos() * hour_angle.cos();
    let elevation = sin_el.clamp(-1.0, 1.0).asin().to_degrees();

    let eccentricity = 1.0 + 0.033 * (std::f64::consts::TAU * doy / 365.0).cos();
    let extraterrestrial = SOLAR_CONSTANT * eccentricity * sin_el.max(0.0);

    SolarPosition {
        elevation,
        zenith: 90.0 - elevation,
        extraterrestrial,
    }
}

/// Haurwitz cloud-free GHI, W/m². Zero when the sun is at or below the horizon.
pub fn analytic_clearsky(pos: &SolarPosition) -> f64 {
    if pos.elevation <= 0.0 {
        return 0.0;
    }
    let s = pos.elevation.to_radians().sin();
    HAURWITZ_SCALE * s * (-HAURWITZ_EXTINCTION / s).exp()
}

/// Analytic clearsky GHI for every timestamp.
pub fn clearsky_series(timestamps: &[i64], meta: &SiteMeta) -> Vec<f64> {
    timestamps
        .iter()
        .map(|&t| analytic_clearsky(&solar_position(t, meta)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiSeries {
    pub values: Vec<f64>,
    pub validity: Vec<bool>,
}

impl CsiSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at `i` if valid.
    pub fn get(&self, i: usize) -> Option<f64> {
        if self.validity[i] {
            Some(self.values[i])
        } else {
            None
        }
    }
}

/// Clearsky index with the default cap.
pub fn csi(ghi: &[f64], clearsky: &[f64], night_threshold: f64) -> Result<CsiSeries> {
    csi_with_cap(ghi, clearsky, night_threshold, DEFAULT_CSI_CAP)
}

/// Clearsky index `ghi / clearsky`, valid only where `clearsky > night_threshold`
/// and `ghi` is finite. Invalid entries hold 0.
pub fn csi_with_cap(
    ghi: &[f64],
    clearsky: &[f64],
    night_threshold: f64,
    cap: f64,
) -> Result<CsiSeries> {
    if ghi.len() != clearsky.len() {
        return Err(Error::LengthMismatch {
            expected: ghi.len(),
            actual: clearsky.len(),
        });
    }
    if !(night_threshold > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "night threshold must be positive, got {night_threshold}"
        )));
    }
    let mut values = Vec::with_capacity(ghi.len());
    let mut validity = Vec::with_capacity(ghi.len());
    for (&g, &cs) in ghi.iter().zip(clearsky) {
        if cs > night_threshold && g.is_finite() {
            values.push((g / cs).clamp(0.0, cap));
            validity.push(true);
        } else {
            values.push(0.0);
            validity.push(false);
        }
    }
    Ok(CsiSeries { values, validity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{NaiveDate, TimeZone, Utc};

    fn site(lat: f64, lon: f64) -> SiteMeta {
        SiteMeta::new("t", lat, lon, 0.0, 0).unwrap()
    }

    fn at(y: i32, m: u32, d: u32, h: u32) -> i64 {
        Utc.from_utc_datetime(&NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, 0, 0).unwrap())
            .timestamp()
    }

    #[test]
    fn equator_equinox_noon_is_overhead() {
        let pos = solar_position(at(2021, 3, 21, 12), &site(0.0, 0.0));
        assert!((pos.elevation - 90.0).abs() < 1.0, "{}", pos.elevation);
        assert!((pos.elevation + pos.zenith - 90.0).abs() < 1e-12);
    }

    #[test]
    fn midnight_has_no_extraterrestrial() {
        for lat in [-60.0, -10.0, 0.0, 37.0, 60.0] {
            let pos = solar_position(at(2021, 6, 1, 0), &site(lat, 0.0));
            assert_eq!(pos.extraterrestrial, 0.0);
        }
    }

    #[test]
    fn june_solstice_noon_at_40n() {
        let pos = solar_position(at(2021, 6, 21, 12), &site(40.0, 0.0));
        assert!((pos.elevation - 73.45).abs() < 0.5, "{}", pos.elevation);
    }

    #[test]
    fn longitude_shifts_solar_noon() {
        // 90°E reaches solar noon at 06:00 UTC.
        let pos = solar_position(at(2021, 3, 21, 6), &site(0.0, 90.0));
        assert!(pos.elevation > 89.0);
    }

    #[test]
    fn haurwitz_values() {
        let below = SolarPosition { elevation: -3.0, zenith: 93.0, extraterrestrial: 0.0 };
        assert_eq!(analytic_clearsky(&below), 0.0);
        let zenith = SolarPosition { elevation: 90.0, zenith: 0.0, extraterrestrial: 1361.0 };
        let expected = 1098.0 * (-0.057f64).exp();
        assert!((analytic_clearsky(&zenith) - expected).abs() < 1e-9);
        assert!((expected - 1037.2).abs() < 0.05);
    }

    #[test]
    fn haurwitz_is_monotone_in_elevation() {
        let mut prev = 0.0;
        for i in 1..=900 {
            let el = i as f64 * 0.1;
            let v = analytic_clearsky(&SolarPosition { elevation: el, zenith: 90.0 - el, extraterrestrial: 0.0 });
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn clearsky_never_exceeds_extraterrestrial() {
        let meta = site(37.5, -3.0);
        let start = at(2021, 1, 1, 0);
        for k in 0..(365 * 48) {
            let pos = solar_position(start + k * 1800, &meta);
            assert!(analytic_clearsky(&pos) <= pos.extraterrestrial + 1e-12);
        }
    }

    #[test]
    fn csi_examples() {
        let c = csi(&[500.0, 3.0, 900.0], &[500.0, 5.0, 300.0], 10.0).unwrap();
        assert_eq!(c.values, vec![1.0, 0.0, 2.0]);
        assert_eq!(c.validity, vec![true, false, true]);
        assert!(csi(&[1.0], &[1.0, 2.0], 10.0).is_err());
    }

    #[test]
    fn csi_validity_and_reconstruction() {
        let ghi: Vec<f64> = (0..200).map(|i| (i as f64 * 3.7) % 700.0).collect();
        let cs: Vec<f64> = (0..200).map(|i| (i as f64 * 5.3) % 900.0).collect();
        let c = csi(&ghi, &cs, 10.0).unwrap();
        for i in 0..ghi.len() {
            assert_eq!(c.validity[i], cs[i] > 10.0);
            if c.validity[i] && c.values[i] < 2.0 {
                let rebuilt = c.values[i] * cs[i];
                assert!((rebuilt - ghi[i]).abs() <= 1e-9 * ghi[i].abs().max(1.0));
            }
        }
    }
}
