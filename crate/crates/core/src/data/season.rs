//! Allergy-season labeling from customizable thresholds.
//!
//! A day is *typical* when its pollen concentration is strictly above
//! `delta_c`. The season starts on the earliest day whose forward 7-day
//! window `{d, .., d+6}` holds at least `delta_n` typical days, and ends on
//! the latest day whose trailing window `{d-6, .., d}` does. Windows are
//! clipped to the calendar year being labeled, so a year's label depends on
//! that year's data only.

use serde::{Deserialize, Serialize};

use super::record::{days_in_year, Dataset};
use crate::error::{Error, Result};

pub const SEASON_WINDOW_DAYS: usize = 7;

/// Which edge of the season a forecast targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Start,
    End,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => Ok(Boundary::Start),
            "end" => Ok(Boundary::End),
            other => Err(Error::InvalidParameter(format!(
                "boundary must be `start` or `end`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Start => "start",
            Boundary::End => "end",
        })
    }
}

/// Patient-specific season thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonDefinition {
    delta_c: f64,
    delta_n: usize,
}

impl SeasonDefinition {
    pub fn new(delta_c: f64, delta_n: usize) -> Result<Self> {
        if !(delta_c.is_finite() && delta_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta_c must be a positive number, got {delta_c}"
            )));
        }
        if !(1..=SEASON_WINDOW_DAYS).contains(&delta_n) {
            return Err(Error::InvalidParameter(format!(
                "delta_n must be in 1..={SEASON_WINDOW_DAYS}, got {delta_n}"
            )));
        }
        Ok(SeasonDefinition { delta_c, delta_n })
    }

    pub fn delta_c(&self) -> f64 {
        self.delta_c
    }

    pub fn delta_n(&self) -> usize {
        self.delta_n
    }

    pub fn window_days(&self) -> usize {
        SEASON_WINDOW_DAYS
    }

    fn is_typical(&self, pollen: f64) -> bool {
        pollen > self.delta_c
    }
}

/// Season span of one year. `start_day`/`end_day` are 1-based days of year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonLabel {
    pub year: i32,
    pub start_day: Option<u32>,
    pub end_day: Option<u32>,
    pub length_days: Option<u32>,
}

impl SeasonLabel {
    fn from_span(year: i32, span: Option<(u32, u32)>) -> Self {
        match span {
            Some((s, e)) => SeasonLabel {
                year,
                start_day: Some(s),
                end_day: Some(e),
                length_days: Some(e - s + 1),
            },
            None => SeasonLabel {
                year,
                start_day: None,
                end_day: None,
                length_days: None,
            },
        }
    }

    pub fn is_present(&self) -> bool {
        self.start_day.is_some()
    }

    pub fn boundary(&self, boundary: Boundary) -> Option<u32> {
        match boundary {
            Boundary::Start => self.start_day,
            Boundary::End => self.end_day,
        }
    }
}

/// Season span `(start, end)` of one year's pollen values (index 0 = day 1),
/// using prefix counts of typical days.
pub fn label_series(pollen: &[f64], def: &SeasonDefinition) -> Option<(u32, u32)> {
    let n = pollen.len();
    let w = SEASON_WINDOW_DAYS;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &p in pollen {
        let last = *prefix.last().unwrap();
        prefix.push(last + usize::from(def.is_typical(p)));
    }
    let count = |lo: usize, hi: usize| prefix[hi] - prefix[lo];

    let start = (0..n).find(|&i| count(i, (i + w).min(n)) >= def.delta_n)?;
    let end = (start..n)
        .rev()
        .find(|&i| count((i + 1).saturating_sub(w), i + 1) >= def.delta_n)?;
    Some((start as u32 + 1, end as u32 + 1))
}

/// Literal enumeration of every window; the reference for [`label_series`].
pub fn label_series_brute_force(pollen: &[f64], def: &SeasonDefinition) -> Option<(u32, u32)> {
    let n = pollen.len() as i64;
    let w = SEASON_WINDOW_DAYS as i64;
    let typical_in = |from: i64, to: i64| {
        let mut c = 0;
        let mut d = from;
        while d <= to {
            if d >= 0 && d < n && pollen[d as usize] > def.delta_c {
                c += 1;
            }
            d += 1;
        }
        c
    };
    let mut start = None;
    for d in 0..n {
        if typical_in(d, d + w - 1) >= def.delta_n {
            start = Some(d);
            break;
        }
    }
    let start = start?;
    let mut end = None;
    for d in 0..n {
        if d >= start && typical_in(d - w + 1, d) >= def.delta_n {
            end = Some(d);
        }
    }
    end.map(|e| (start as u32 + 1, e as u32 + 1))
}

fn year_pollen(data: &Dataset, year: i32) -> Result<Vec<f64>> {
    let range = data.year_range(year)?;
    debug_assert_eq!(range.len() as u32, days_in_year(year));
    Ok(data.records()[range].iter().map(|r| r.pollen()).collect())
}

/// Labels the season of `year`.
pub fn label_season(data: &Dataset, def: &SeasonDefinition, year: i32) -> Result<SeasonLabel> {
    let pollen = year_pollen(data, year)?;
    Ok(SeasonLabel::from_span(year, label_series(&pollen, def)))
}

/// Labels the season of `year` by exhaustive window enumeration.
pub fn label_brute_force(data: &Dataset, def: &SeasonDefinition, year: i32) -> Result<SeasonLabel> {
    let pollen = year_pollen(data, year)?;
    Ok(SeasonLabel::from_span(
        year,
        label_series_brute_force(&pollen, def),
    ))
}

/// Sample standard deviations over the present labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeasonStats {
    pub seasons: usize,
    pub start_std: f64,
    pub end_std: f64,
    pub length_std: f64,
}

pub fn season_stats(labels: &[SeasonLabel]) -> Result<SeasonStats> {
    let present: Vec<_> = labels.iter().filter(|l| l.is_present()).collect();
    if present.len() < 2 {
        return Err(Error::TooFewSeasons(present.len()));
    }
    let std_of = |f: &dyn Fn(&SeasonLabel) -> Option<u32>| {
        let xs: Vec<f64> = present.iter().filter_map(|l| f(l)).map(f64::from).collect();
        sample_std(&xs)
    };
    Ok(SeasonStats {
        seasons: present.len(),
        start_std: std_of(&|l| l.start_day),
        end_std: std_of(&|l| l.end_day),
        length_std: std_of(&|l| l.length_days),
    })
}

pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}
