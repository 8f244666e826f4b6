//! Rolling-window feature extraction.
//!
//! Every day `d` with at least 13 days of history gets a row made of the
//! same 30 window statistics computed over the trailing window `[d-13, d]`
//! of each of the 12 series. Rows never look past their own day.

use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SeasonDefinition, Series, SERIES_COUNT};
use crate::error::{Error, Result};

pub const WINDOW_LEN: usize = 14;
pub const FEATURE_COUNT: usize = 30;
/// Width of a flattened row without the day-of-year column.
pub const ROW_WIDTH: usize = FEATURE_COUNT * SERIES_COUNT;
/// Identifies the statistic catalog below; bump on any change to it.
pub const CATALOG_VERSION: &str = "window30-v1";

const EWMA_ALPHA: f64 = 0.3;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mean",
    "std",
    "min",
    "max",
    "median",
    "q25",
    "q75",
    "iqr",
    "range",
    "sum",
    "first",
    "last",
    "last_minus_first",
    "slope",
    "intercept",
    "mean_abs_diff",
    "max_diff",
    "std_diff",
    "autocorr_lag1",
    "skewness",
    "excess_kurtosis",
    "rms",
    "count_above_mean",
    "argmax",
    "argmin",
    "ewma",
    "mean_last3",
    "mean_first3",
    "count_above_reference",
    "diff_sign_changes",
];

/// Per-series threshold used by the `count_above_reference` statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesReferences {
    pub values: [f64; SERIES_COUNT],
}

impl SeriesReferences {
    /// `delta_c` for pollen, the mean over the given years for covariates.
    pub fn from_training(data: &Dataset, years: &[i32], def: &SeasonDefinition) -> Result<Self> {
        let mut sums = [0.0; SERIES_COUNT];
        let mut n = 0usize;
        for &y in years {
            let range = data.year_range(y)?;
            for r in &data.records()[range] {
                for (s, v) in sums.iter_mut().zip(r.values.iter()) {
                    *s += v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut values = sums.map(|s| s / n as f64);
        values[Series::Pollen.index()] = def.delta_c();
        Ok(SeriesReferences { values })
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// The 30 catalog statistics of a 14-value window, in catalog order.
/// `reference` is the threshold for `count_above_reference`.
pub fn window_features(window: &[f64], reference: f64) -> Result<[f64; FEATURE_COUNT]> {
    if window.len() != WINDOW_LEN {
        return Err(Error::WrongWindowLength {
            expected: WINDOW_LEN,
            got: window.len(),
        });
    }
    if let Some(v) = window.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "window".into(),
            detail: v.to_string(),
        });
    }
    Ok(window_stats(window, reference))
}

fn window_stats(w: &[f64], reference: f64) -> [f64; FEATURE_COUNT] {
    let n = w.len();
    let nf = n as f64;
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[n - 1]);
    let sum: f64 = w.iter().sum();
    let m = sum / nf;
    // A constant window has exactly zero dispersion; skip the rounding noise.
    let constant = min == max;

    let (m2, m3, m4) = if constant {
        (0.0, 0.0, 0.0)
    } else {
        w.iter().fold((0.0, 0.0, 0.0), |(a, b, c), x| {
            let d = x - m;
            (a + d * d / nf, b + d.powi(3) / nf, c + d.powi(4) / nf)
        })
    };
    let std = m2.sqrt();
    let q25 = quantile_sorted(&sorted, 0.25);
    let q75 = quantile_sorted(&sorted, 0.75);

    // OLS on index 0..n-1
    let t_mean = (nf - 1.0) / 2.0;
    let stt: f64 = (0..n).map(|t| (t as f64 - t_mean).powi(2)).sum();
    let sty: f64 = if constant {
        0.0
    } else {
        w.iter()
            .enumerate()
            .map(|(t, y)| (t as f64 - t_mean) * (y - m))
            .sum()
    };
    let slope = sty / stt;
    let intercept = m - slope * t_mean;

    let diffs: Vec<f64> = w.windows(2).map(|p| p[1] - p[0]).collect();
    let mean_abs_diff = mean(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let max_diff = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let std_diff = if diffs.iter().all(|&d| d == diffs[0]) {
        0.0
    } else {
        population_std(&diffs)
    };

    let (autocorr, skew, kurt) = if m2 > 0.0 {
        let num: f64 = w.windows(2).map(|p| (p[0] - m) * (p[1] - m)).sum();
        (num / (m2 * nf), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0, 0.0)
    };

    let rms = (w.iter().map(|x| x * x).sum::<f64>() / nf).sqrt();
    let count_above_mean = if constant {
        0.0
    } else {
        w.iter().filter(|&&x| x > m).count() as f64
    };
    let argmax = w.iter().position(|&x| x == max).unwrap_or(0) as f64;
    let argmin = w.iter().position(|&x| x == min).unwrap_or(0) as f64;
    let ewma = w[1..]
        .iter()
        .fold(w[0], |s, x| EWMA_ALPHA * x + (1.0 - EWMA_ALPHA) * s);
    let count_above_ref = w.iter().filter(|&&x| x > reference).count() as f64;
    let sign_changes = diffs.windows(2).filter(|p| p[0] * p[1] < 0.0).count() as f64;

    [
        m,
        std,
        min,
        max,
        quantile_sorted(&sorted, 0.5),
        q25,
        q75,
        q75 - q25,
        max - min,
        sum,
        w[0],
        w[n - 1],
        w[n - 1] - w[0],
        slope,
        intercept,
        mean_abs_diff,
        max_diff,
        std_diff,
        autocorr,
        skew,
        kurt,
        rms,
        count_above_mean,
        argmax,
        argmin,
        ewma,
        mean(&w[n - 3..]),
        mean(&w[..3]),
        count_above_ref,
        sign_changes,
    ]
}

/// One flattened row (series-major: all 30 statistics of pollen, then of
/// tmax, ...) for the day at `index` in the dataset.
pub fn feature_row(data: &Dataset, index: usize, refs: &SeriesReferences) -> Result<Vec<f64>> {
    if index + 1 < WINDOW_LEN || index >= data.len() {
        return Err(Error::IndexOutOfRange {
            index,
            rows: data.len(),
        });
    }
    let window = &data.records()[index + 1 - WINDOW_LEN..=index];
    let mut row = Vec::with_capacity(ROW_WIDTH + 1);
    let mut buf = [0.0; WINDOW_LEN];
    for s in Series::ALL {
        for (b, r) in buf.iter_mut().zip(window) {
            *b = r.get(s);
        }
        row.extend_from_slice(&window_stats(&buf, refs.values[s.index()]));
    }
    Ok(row)
}

/// Day × feature × series tensor of window statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array3<f64>,
    dates: Vec<NaiveDate>,
}

impl FeatureMatrix {
    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    /// Calendar date of row `row` (the last day of its window).
    pub fn date(&self, row: usize) -> Option<NaiveDate> {
        self.dates.get(row).copied()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Series-major flattening of one row; optionally appends day of year.
    pub fn flatten_row(&self, row: usize, include_doy: bool) -> Result<Vec<f64>> {
        if row >= self.rows() {
            return Err(Error::IndexOutOfRange {
                index: row,
                rows: self.rows(),
            });
        }
        let slab = self.values.index_axis(Axis(0), row);
        let mut out = Vec::with_capacity(ROW_WIDTH + 1);
        for s in 0..SERIES_COUNT {
            out.extend(slab.column(s).iter().copied());
        }
        if include_doy {
            out.push(f64::from(self.dates[row].ordinal()));
        }
        Ok(out)
    }

    /// Header names `<series>__<feature>` in flattened order.
    pub fn column_names(include_doy: bool) -> Vec<String> {
        let mut names: Vec<String> = Series::ALL
            .iter()
            .flat_map(|s| {
                FEATURE_NAMES
                    .iter()
                    .map(move |f| format!("{}__{f}", s.name()))
            })
            .collect();
        if include_doy {
            names.push("doy".to_string());
        }
        names
    }

    pub fn write_csv<W: Write>(&self, writer: W, include_doy: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(Self::column_names(include_doy))?;
        for row in 0..self.rows() {
            let flat = self.flatten_row(row, include_doy)?;
            wtr.write_record(flat.iter().map(|v| v.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>, include_doy: bool) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), include_doy)
    }
}

/// Feature tensor over every day that has a full trailing window.
pub fn build_feature_matrix(data: &Dataset, refs: &SeriesReferences) -> Result<FeatureMatrix> {
    if data.len() < WINDOW_LEN {
        return Err(Error::DatasetTooShort {
            len: data.len(),
            window: WINDOW_LEN,
        });
    }
    let n_rows = data.len() - WINDOW_LEN + 1;
    let rows: Vec<Vec<f64>> = (0..n_rows)
        .into_par_iter()
        .map(|r| feature_row(data, r + WINDOW_LEN - 1, refs))
        .collect::<Result<_>>()?;
    let mut values = Array3::zeros((n_rows, FEATURE_COUNT, SERIES_COUNT));
    for (r, row) in rows.iter().enumerate() {
        for s in 0..SERIES_COUNT {
            for f in 0..FEATURE_COUNT {
                values[[r, f, s]] = row[s * FEATURE_COUNT + f];
            }
        }
    }
    let dates = data.records()[WINDOW_LEN - 1..]
        .iter()
        .map(|r| r.date)
        .collect();
    Ok(FeatureMatrix { values, dates })
}
