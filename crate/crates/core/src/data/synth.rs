//! Seeded synthetic daily weather and pollen.
//!
//! Temperature follows an annual cycle with a per-year anomaly and an AR(1)
//! daily anomaly. Pollen onset happens when growing degree days accumulated
//! since 1 January cross a threshold, so the covariates carry real signal
//! about the season start: soil temperature integrates air temperature, and
//! a weak pre-season pollen trickle grows with accumulated heat.

use std::f64::consts::TAU;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::record::{days_in_year, DailyRecord, Dataset, Series, SERIES_COUNT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorProfile {
    pub start_year: i32,
    /// Annual mean of the daily mean temperature, °C.
    pub temp_mean: f64,
    pub temp_amplitude: f64,
    /// Day of year of the climatological temperature minimum.
    pub coldest_day: f64,
    pub year_anomaly_sd: f64,
    pub daily_ar: f64,
    pub daily_sd: f64,
    pub gdd_base: f64,
    /// Degree days after which pollen release begins.
    pub gdd_onset: f64,
    pub peak_median: f64,
    pub peak_log_sd: f64,
    pub rise_days: f64,
    pub duration_mean: f64,
    pub duration_sd: f64,
    pub pollen_noise_log_sd: f64,
    /// Fraction of pollen washed out on wet days.
    pub rain_suppression: f64,
    pub preseason_level: f64,
    pub wet_after_dry: f64,
    pub wet_after_wet: f64,
    pub rain_mean_mm: f64,
}

impl Default for GeneratorProfile {
    fn default() -> Self {
        GeneratorProfile {
            start_year: 2003,
            temp_mean: 9.0,
            temp_amplitude: 11.0,
            coldest_day: 20.0,
            year_anomaly_sd: 2.5,
            daily_ar: 0.75,
            daily_sd: 2.2,
            gdd_base: 5.0,
            gdd_onset: 100.0,
            peak_median: 900.0,
            peak_log_sd: 0.4,
            rise_days: 8.0,
            duration_mean: 45.0,
            duration_sd: 20.0,
            pollen_noise_log_sd: 0.5,
            rain_suppression: 0.5,
            preseason_level: 40.0,
            wet_after_dry: 0.3,
            wet_after_wet: 0.6,
            rain_mean_mm: 5.0,
        }
    }
}

impl GeneratorProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidParameter(format!(
                "generator profile: {what}"
            )))
        };
        if NaiveDate::from_ymd_opt(self.start_year, 1, 1).is_none() {
            return bad("start_year out of range");
        }
        let non_negative = [
            ("temp_amplitude", self.temp_amplitude),
            ("year_anomaly_sd", self.year_anomaly_sd),
            ("daily_sd", self.daily_sd),
            ("peak_log_sd", self.peak_log_sd),
            ("duration_sd", self.duration_sd),
            ("pollen_noise_log_sd", self.pollen_noise_log_sd),
            ("preseason_level", self.preseason_level),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        let positive = [
            ("gdd_onset", self.gdd_onset),
            ("peak_median", self.peak_median),
            ("rise_days", self.rise_days),
            ("duration_mean", self.duration_mean),
            ("rain_mean_mm", self.rain_mean_mm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be finite and > 0"));
            }
        }
        let unit = [
            ("daily_ar", self.daily_ar),
            ("rain_suppression", self.rain_suppression),
            ("wet_after_dry", self.wet_after_dry),
            ("wet_after_wet", self.wet_after_wet),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if ![self.temp_mean, self.coldest_day, self.gdd_base]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("non-finite temperature parameter");
        }
        Ok(())
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Generates `years` whole calendar years of daily data starting on
/// 1 January of `profile.start_year`. Identical seeds give identical data.
pub fn generate_synthetic(seed: u64, years: u32, profile: &GeneratorProfile) -> Result<Dataset> {
    if years == 0 {
        return Err(Error::InvalidParameter("years must be >= 1".into()));
    }
    profile.validate()?;
    let p = profile;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let rain = Exp::new(1.0 / p.rain_mean_mm).expect("positive rain mean");
    let wind = LogNormal::new(3.5f64.ln(), 0.35).expect("valid wind distribution");
    let peak_dist = LogNormal::new(p.peak_median.ln(), p.peak_log_sd).expect("valid peak");

    let mut records = Vec::new();
    let mut daily_anomaly = 0.0;
    let mut pressure_anomaly = 0.0;
    let mut wet = false;
    let mut soil: Option<f64> = None;
    let innovation_sd = p.daily_sd * (1.0 - p.daily_ar * p.daily_ar).sqrt();

    for year in p.start_year..p.start_year + years as i32 {
        let n_days = days_in_year(year);
        let year_anomaly = p.year_anomaly_sd * std_normal.sample(&mut rng);
        let peak = peak_dist.sample(&mut rng);
        let duration =
            (p.duration_mean + p.duration_sd * std_normal.sample(&mut rng)).max(p.rise_days + 5.0);
        let decay = duration / 2.0;
        let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("validated start year");

        let mut gdd = 0.0;
        let mut onset: Option<u32> = None;
        for doy in 1..=n_days {
            let phase = TAU * (f64::from(doy) - p.coldest_day) / 365.25;
            let clim = p.temp_mean - p.temp_amplitude * phase.cos();
            daily_anomaly =
                p.daily_ar * daily_anomaly + innovation_sd * std_normal.sample(&mut rng);
            let tavg = clim + year_anomaly + daily_anomaly;

            wet = rng.random::<f64>()
                < if wet {
                    p.wet_after_wet
                } else {
                    p.wet_after_dry
                };
            let precip = if wet { rain.sample(&mut rng) } else { 0.0 };
            let cloud = if wet {
                75.0 + 15.0 * std_normal.sample(&mut rng)
            } else {
                35.0 + 20.0 * std_normal.sample(&mut rng)
            }
            .clamp(0.0, 100.0);
            let dtr = 5.0 + 5.0 * (1.0 - cloud / 100.0) + std_normal.sample(&mut rng).abs();
            let humidity = (65.0 + 15.0 * f64::from(u8::from(wet)) - (tavg - p.temp_mean)
                + 8.0 * std_normal.sample(&mut rng))
            .clamp(0.0, 100.0);
            let day_length = 12.0 + 4.0 * (TAU * (f64::from(doy) - 80.0) / 365.25).sin();
            let sunshine = (0.9 * day_length * (1.0 - cloud / 100.0)).max(0.0);
            pressure_anomaly = 0.9 * pressure_anomaly + 1.3 * std_normal.sample(&mut rng);
            let pressure = 1013.0 + pressure_anomaly - if wet { 4.0 } else { 0.0 };
            let tmin = tavg - dtr / 2.0;
            let dew_point = (tmin - (100.0 - humidity) / 8.0).min(tavg);
            let soil_t = soil.map_or(clim, |s| s + 0.08 * (tavg - s));
            soil = Some(soil_t);

            gdd += (tavg - p.gdd_base).max(0.0);
            if onset.is_none() && gdd >= p.gdd_onset {
                onset = Some(doy);
            }
            let noise = (p.pollen_noise_log_sd * std_normal.sample(&mut rng)).exp();
            let level = match onset {
                Some(o) => {
                    let t = f64::from(doy - o);
                    let rise = ((t + 1.0) / p.rise_days).min(1.0);
                    let fall = if t > p.rise_days {
                        (-(t - p.rise_days) / decay).exp()
                    } else {
                        1.0
                    };
                    peak * rise * fall
                }
                None => p.preseason_level * (gdd / p.gdd_onset).powi(2),
            };
            let wash = if wet { 1.0 - p.rain_suppression } else { 1.0 };
            let pollen = (level * noise * wash).max(0.0);

            let mut values = [0.0; SERIES_COUNT];
            values[Series::Pollen.index()] = pollen;
            values[Series::Tmax.index()] = tavg + dtr / 2.0;
            values[Series::Tmin.index()] = tmin;
            values[Series::Tavg.index()] = tavg;
            values[Series::Precip.index()] = precip;
            values[Series::Humidity.index()] = humidity;
            values[Series::WindSpeed.index()] = wind.sample(&mut rng);
            values[Series::Pressure.index()] = pressure;
            values[Series::SunshineHours.index()] = sunshine;
            values[Series::DewPoint.index()] = dew_point;
            values[Series::CloudCover.index()] = cloud;
            values[Series::SoilTemp.index()] = soil_t;
            let date = jan1 + chrono::Duration::days(i64::from(doy) - 1);
            records.push(DailyRecord::new(date, values.map(round2)));
        }
    }
    Dataset::new(records)
}
