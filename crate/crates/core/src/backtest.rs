//! Rolling-origin evaluation of the three-stage forecast.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{label_season, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{self, ForecastSeries, PipelineConfig};
use crate::wls::{self, final_forecast, fit_wls};

/// Which days of the test year feed Stage 3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZRangePolicy {
    /// `[truth - horizon, truth - lead]`: the same countdown window the
    /// models were trained on. Only the placement of the window uses the
    /// label; every prediction uses data up to its own day.
    TruthAnchored { lead: u32 },
    /// A fixed calendar window of days of year.
    Fixed { first: i32, last: i32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_years: Vec<i32>,
    pub test_year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub pipeline: PipelineConfig,
    pub folds: Vec<Fold>,
    pub z_range: ZRangePolicy,
}

/// Each of the last `n_test` years, trained on every year before it.
pub fn expanding_window(years: &[i32], n_test: usize) -> Result<Vec<Fold>> {
    let mut sorted = years.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if n_test == 0 || n_test >= sorted.len() {
        return Err(Error::FoldConfigInvalid(format!(
            "need 1..{} test years, got {n_test}",
            sorted.len()
        )));
    }
    let first_test = sorted.len() - n_test;
    Ok((first_test..sorted.len())
        .map(|i| Fold {
            train_years: sorted[..i].to_vec(),
            test_year: sorted[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    /// Number of leading predictions used.
    pub k: usize,
    pub y_star: Option<f64>,
    pub sigma_y_star: Option<f64>,
    /// `k` reaches the minimum day count for the fold's fitted line.
    pub reduces_uncertainty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub test_year: i32,
    pub train_years: Vec<i32>,
    pub truth: i32,
    pub y_star: f64,
    pub sigma_y_star: f64,
    pub abs_error: f64,
    pub stage1_last: f64,
    pub stage1_abs_error: f64,
    pub min_days: Option<usize>,
    pub series: ForecastSeries,
    pub convergence_trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub folds: Vec<FoldResult>,
    /// Stage-3 mean absolute error, days.
    pub mae: f64,
    /// Error of the last Stage-1 prediction alone, days.
    pub stage1_mae: f64,
    pub notes: Vec<String>,
}

const SIGMA_NOTE: &str = "sigma_y_star combines the relative variances of beta0 and beta1 \
without their covariance; a full delta-method estimate would add a -2*cov(beta0, beta1) term.";

pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(Error::Empty);
    }
    Ok(predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Stage-3 forecast for every prefix length `k >= 2` of the series.
pub fn convergence_trace(series: &ForecastSeries, min_days: Option<usize>) -> Vec<TracePoint> {
    (2..=series.points.len())
        .map(|k| {
            let fc = fit_wls(&series.points[..k])
                .and_then(|f| final_forecast(&f))
                .ok();
            TracePoint {
                k,
                y_star: fc.map(|f| f.y_star),
                sigma_y_star: fc.map(|f| f.sigma_y_star),
                reduces_uncertainty: min_days.is_some_and(|n| k >= n),
            }
        })
        .collect()
}

fn validate(cfg: &BacktestConfig) -> Result<()> {
    if cfg.folds.is_empty() {
        return Err(Error::FoldConfigInvalid("no folds".into()));
    }
    for f in &cfg.folds {
        if f.train_years.contains(&f.test_year) {
            return Err(Error::FoldConfigInvalid(format!(
                "test year {} is also a training year",
                f.test_year
            )));
        }
        if f.train_years.len() < 2 {
            return Err(Error::FoldConfigInvalid(format!(
                "fold {} needs at least 2 training years",
                f.test_year
            )));
        }
    }
    if let ZRangePolicy::Fixed { first, last } = cfg.z_range {
        if last - first < 1 {
            return Err(Error::FoldConfigInvalid(
                "fixed z range needs >= 2 days".into(),
            ));
        }
    }
    if let ZRangePolicy::TruthAnchored { lead } = cfg.z_range {
        if lead + 1 > cfg.pipeline.spec.horizon {
            return Err(Error::FoldConfigInvalid(
                "lead leaves fewer than 2 days".into(),
            ));
        }
    }
    Ok(())
}

fn run_fold(data: &Dataset, cfg: &BacktestConfig, fold: &Fold) -> Result<FoldResult> {
    let spec = &cfg.pipeline.spec;
    let truth = label_season(data, &spec.season, fold.test_year)?
        .boundary(spec.boundary)
        .ok_or(Error::MissingLabel(fold.test_year))? as i32;
    let trained = pipeline::train(data, &cfg.pipeline, &fold.train_years)?;
    let z_range = match cfg.z_range {
        ZRangePolicy::TruthAnchored { lead } => truth - spec.horizon as i32..=truth - lead as i32,
        ZRangePolicy::Fixed { first, last } => first..=last,
    };
    let series = pipeline::predict_series(
        &trained.stage1,
        &trained.stage2,
        data,
        fold.test_year,
        z_range,
    )?;
    let fit = fit_wls(&series.points)?;
    let fc = final_forecast(&fit)?;
    let z_start = f64::from(series.points[0].z);
    let min_days = wls::min_days(fit.beta0, fit.beta1, z_start, series.points.len())?.min_days;
    let stage1_last = series.last_point_estimate().ok_or(Error::Empty)?;
    Ok(FoldResult {
        test_year: fold.test_year,
        train_years: fold.train_years.clone(),
        truth,
        y_star: fc.y_star,
        sigma_y_star: fc.sigma_y_star,
        abs_error: (fc.y_star - f64::from(truth)).abs(),
        stage1_last,
        stage1_abs_error: (stage1_last - f64::from(truth)).abs(),
        min_days,
        convergence_trace: convergence_trace(&series, min_days),
        series,
    })
}

/// Trains and evaluates every fold; folds run concurrently but the report
/// is identical to a sequential run.
pub fn rolling_backtest(data: &Dataset, cfg: &BacktestConfig) -> Result<BacktestReport> {
    validate(cfg)?;
    let folds: Vec<FoldResult> = cfg
        .folds
        .par_iter()
        .map(|f| run_fold(data, cfg, f))
        .collect::<Result<_>>()?;
    let truths: Vec<f64> = folds.iter().map(|f| f64::from(f.truth)).collect();
    let fused: Vec<f64> = folds.iter().map(|f| f.y_star).collect();
    let last: Vec<f64> = folds.iter().map(|f| f.stage1_last).collect();
    Ok(BacktestReport {
        config: cfg.clone(),
        mae: mae(&fused, &truths)?,
        stage1_mae: mae(&last, &truths)?,
        folds,
        notes: vec![SIGMA_NOTE.to_string()],
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for r in rows {
        wtr.write_record(&r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    wtr.into_inner()
        .map_err(|e| Error::io("<csv writer>", e.into_error()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes `report.json`, `folds.csv` and one `convergence_<year>.csv` per
/// fold into `dir`. Returns the written paths.
pub fn emit_report(
    report: &BacktestReport,
    dir: impl AsRef<Path>,
) -> Result<Vec<std::path::PathBuf>> {
    if report.folds.is_empty() {
        return Err(Error::Empty);
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("report.json");
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    write_file(&path, &json)?;
    written.push(path);

    let path = dir.join("folds.csv");
    let rows = report.folds.iter().map(|f| {
        vec![
            f.test_year.to_string(),
            f.truth.to_string(),
            f.y_star.to_string(),
            f.sigma_y_star.to_string(),
            f.abs_error.to_string(),
            f.stage1_last.to_string(),
            f.stage1_abs_error.to_string(),
            f.min_days.map_or_else(String::new, |n| n.to_string()),
        ]
    });
    let header = [
        "test_year",
        "truth",
        "y_star",
        "sigma_y_star",
        "abs_error",
        "stage1_last",
        "stage1_abs_error",
        "min_days",
    ];
    write_file(&path, &csv_bytes(&header, rows)?)?;
    written.push(path);

    for f in &report.folds {
        let path = dir.join(format!("convergence_{}.csv", f.test_year));
        let rows = f.convergence_trace.iter().map(|t| {
            vec![
                t.k.to_string(),
                opt(t.y_star),
                opt(t.sigma_y_star),
                t.reduces_uncertainty.to_string(),
            ]
        });
        let header = ["k", "y_star", "sigma_y_star", "reduces_uncertainty"];
        write_file(&path, &csv_bytes(&header, rows)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `report` to `out` as a single summary line, e.g. for a CLI.
pub fn write_summary<W: Write>(report: &BacktestReport, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "folds={} mae={} stage1_mae={}",
        report.folds.len(),
        report.mae,
        report.stage1_mae
    )
}
