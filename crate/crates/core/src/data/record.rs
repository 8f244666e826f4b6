use std::ops::Range;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of daily series: pollen plus eleven meteorological covariates.
pub const SERIES_COUNT: usize = 12;

/// One of the twelve daily series, in dataset column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Pollen,
    Tmax,
    Tmin,
    Tavg,
    Precip,
    Humidity,
    WindSpeed,
    Pressure,
    SunshineHours,
    DewPoint,
    CloudCover,
    SoilTemp,
}

impl Series {
    pub const ALL: [Series; SERIES_COUNT] = [
        Series::Pollen,
        Series::Tmax,
        Series::Tmin,
        Series::Tavg,
        Series::Precip,
        Series::Humidity,
        Series::WindSpeed,
        Series::Pressure,
        Series::SunshineHours,
        Series::DewPoint,
        Series::CloudCover,
        Series::SoilTemp,
    ];

    /// Canonical CSV column name.
    pub fn name(self) -> &'static str {
        match self {
            Series::Pollen => "pollen",
            Series::Tmax => "tmax",
            Series::Tmin => "tmin",
            Series::Tavg => "tavg",
            Series::Precip => "precip",
            Series::Humidity => "humidity",
            Series::WindSpeed => "wind_speed",
            Series::Pressure => "pressure",
            Series::SunshineHours => "sunshine_hours",
            Series::DewPoint => "dew_point",
            Series::CloudCover => "cloud_cover",
            Series::SoilTemp => "soil_temp",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One day of observations. Values are indexed by [`Series`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub values: [f64; SERIES_COUNT],
}

impl DailyRecord {
    pub fn new(date: NaiveDate, values: [f64; SERIES_COUNT]) -> Self {
        DailyRecord { date, values }
    }

    pub fn get(&self, series: Series) -> f64 {
        self.values[series.index()]
    }

    pub fn pollen(&self) -> f64 {
        self.get(Series::Pollen)
    }

    /// Checks the physical invariants of a record.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidRecord {
            date: self.date,
            reason,
        };
        for s in Series::ALL {
            let v = self.get(s);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: s.name().to_string(),
                    detail: format!("{v} on {}", self.date),
                });
            }
        }
        if self.pollen() < 0.0 {
            return Err(invalid(format!("negative pollen {}", self.pollen())));
        }
        for s in [Series::Humidity, Series::CloudCover] {
            let v = self.get(s);
            if !(0.0..=100.0).contains(&v) {
                return Err(invalid(format!("{} = {v} outside [0, 100]", s.name())));
            }
        }
        let (tmin, tavg, tmax) = (
            self.get(Series::Tmin),
            self.get(Series::Tavg),
            self.get(Series::Tmax),
        );
        if !(tmin <= tavg && tavg <= tmax) {
            return Err(invalid(format!(
                "temperatures out of order: tmin {tmin}, tavg {tavg}, tmax {tmax}"
            )));
        }
        Ok(())
    }
}

/// Consecutive, gap-free daily records. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<DailyRecord>,
}

impl Dataset {
    /// Builds a dataset, validating every record and the date sequence.
    pub fn new(records: Vec<DailyRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for r in &records {
            r.validate()?;
        }
        for pair in records.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(Error::NonMonotoneDates(pair[1].date));
            }
            let gap = (pair[1].date - pair[0].date).num_days();
            if gap != 1 {
                return Err(Error::GapTooLarge {
                    after: pair[0].date,
                    days: gap - 1,
                });
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[DailyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.records[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.records[self.records.len() - 1].date
    }

    /// Position of `date` in the record vector.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.first_date()).num_days();
        usize::try_from(offset).ok().filter(|&i| i < self.len())
    }

    /// All values of one series, in date order.
    pub fn series(&self, series: Series) -> Vec<f64> {
        self.records.iter().map(|r| r.get(series)).collect()
    }

    /// Index range covering the whole of `year`, if every day is present.
    pub fn year_range(&self, year: i32) -> Result<Range<usize>> {
        let first = NaiveDate::from_ymd_opt(year, 1, 1).ok_or(Error::InsufficientData(year))?;
        let last = NaiveDate::from_ymd_opt(year, 12, 31).ok_or(Error::InsufficientData(year))?;
        match (self.index_of(first), self.index_of(last)) {
            (Some(a), Some(b)) => Ok(a..b + 1),
            _ => Err(Error::InsufficientData(year)),
        }
    }

    /// Calendar years fully covered by the dataset, ascending.
    pub fn full_years(&self) -> Vec<i32> {
        (self.first_date().year()..=self.last_date().year())
            .filter(|&y| self.year_range(y).is_ok())
            .collect()
    }

    /// Copy restricted to dates up to and including `date`.
    pub fn truncated_after(&self, date: NaiveDate) -> Result<Dataset> {
        let keep: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.date <= date)
            .copied()
            .collect();
        Dataset::new(keep)
    }
}

/// Date of day-of-year `z` in `year`; `z` may run outside 1..=366 and then
/// falls in the neighbouring years.
pub fn date_of(year: i32, z: i32) -> Option<NaiveDate> {
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1)?;
    jan1.checked_add_signed(chrono::Duration::days(i64::from(z) - 1))
}

pub(crate) fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}
