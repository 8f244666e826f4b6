//! Stage 1 (countdown regression) and Stage 2 (uncertainty regression):
//! training-set construction, fitting and per-day prediction series.
//!
//! Stage 1 predicts the countdown `boundary - z` from the features of day
//! `z`. Stage 2 predicts the absolute Stage-1 error from the same features
//! with the Stage-1 prediction prepended. Stage-2 targets come from Stage-1
//! models that never saw the scored year.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{date_of, label_season, Boundary, Dataset, SeasonDefinition};
use crate::error::{Error, Result};
use crate::features::{feature_row, SeriesReferences, WINDOW_LEN};
use crate::gbm::{self, GbmConfig, GbmModel, TrainingCurve};

/// Lower bound on predicted uncertainty, days.
pub const DEFAULT_U_FLOOR: f64 = 0.25;
pub const DEFAULT_HORIZON: u32 = 59;

/// How Stage-2 training residuals are produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum S2Protocol {
    /// Each year is scored by a Stage-1 model fitted on all other years.
    LeaveOneYearOut,
    /// The first `stage1_years` (ascending) fit Stage 1; the rest are scored.
    DisjointBlock { stage1_years: usize },
}

/// What a pipeline is trained to predict and from which inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub season: SeasonDefinition,
    pub boundary: Boundary,
    pub horizon: u32,
    pub include_doy: bool,
}

impl TrainingSpec {
    pub fn new(season: SeasonDefinition, boundary: Boundary) -> Self {
        TrainingSpec {
            season,
            boundary,
            horizon: DEFAULT_HORIZON,
            include_doy: true,
        }
    }
}

/// Flattened feature row for day `z` of `year`, optionally with `z` appended.
pub fn row_for_day(
    data: &Dataset,
    refs: &SeriesReferences,
    year: i32,
    z: i32,
    include_doy: bool,
) -> Result<Vec<f64>> {
    let index = date_of(year, z)
        .and_then(|d| data.index_of(d))
        .filter(|&i| i + 1 >= WINDOW_LEN)
        .ok_or(Error::WindowUnavailable { year, z })?;
    let mut row = feature_row(data, index, refs)?;
    if include_doy {
        row.push(f64::from(z));
    }
    Ok(row)
}

fn boundary_day(data: &Dataset, spec: &TrainingSpec, year: i32) -> Result<i32> {
    let label = label_season(data, &spec.season, year)?;
    label
        .boundary(spec.boundary)
        .map(|d| d as i32)
        .ok_or(Error::MissingLabel(year))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowOrigin {
    pub year: i32,
    pub z: i32,
}

#[derive(Debug, Clone)]
pub struct Stage1TrainingSet {
    pub spec: TrainingSpec,
    pub years: Vec<i32>,
    pub references: SeriesReferences,
    pub rows: Vec<Vec<f64>>,
    /// Countdown `boundary - z`, days.
    pub targets: Vec<f64>,
    pub provenance: Vec<RowOrigin>,
}

/// One row per `(year, z)` with `z` in `[boundary - H, boundary]`.
pub fn build_s1(data: &Dataset, spec: &TrainingSpec, years: &[i32]) -> Result<Stage1TrainingSet> {
    if years.is_empty() {
        return Err(Error::TooFewYears { needed: 1, got: 0 });
    }
    let references = SeriesReferences::from_training(data, years, &spec.season)?;
    let mut set = Stage1TrainingSet {
        spec: spec.clone(),
        years: years.to_vec(),
        references,
        rows: Vec::new(),
        targets: Vec::new(),
        provenance: Vec::new(),
    };
    let h = spec.horizon as i32;
    for &year in years {
        let b = boundary_day(data, spec, year)?;
        for z in b - h..=b {
            let row = row_for_day(data, &set.references, year, z, spec.include_doy)
                .map_err(|_| Error::HorizonOutOfRange { year, z })?;
            set.rows.push(row);
            set.targets.push(f64::from(b - z));
            set.provenance.push(RowOrigin { year, z });
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Model {
    pub spec: TrainingSpec,
    pub train_years: Vec<i32>,
    pub references: SeriesReferences,
    pub gbm: GbmModel,
}

impl Stage1Model {
    /// Predicted countdown on day `z` of `year`.
    pub fn predict_day(&self, data: &Dataset, year: i32, z: i32) -> Result<f64> {
        let row = row_for_day(data, &self.references, year, z, self.spec.include_doy)?;
        self.gbm.predict(&row)
    }
}

pub fn fit_stage1(s1: &Stage1TrainingSet, cfg: &GbmConfig) -> Result<(Stage1Model, TrainingCurve)> {
    let (gbm, curve) = gbm::fit(&s1.rows, &s1.targets, cfg)?;
    Ok((
        Stage1Model {
            spec: s1.spec.clone(),
            train_years: s1.years.clone(),
            references: s1.references,
            gbm,
        },
        curve,
    ))
}

#[derive(Debug, Clone)]
pub struct Stage2TrainingSet {
    pub spec: TrainingSpec,
    pub references: SeriesReferences,
    /// `[y_hat, features..]`.
    pub rows: Vec<Vec<f64>>,
    /// `|y_hat - countdown|`, days.
    pub targets: Vec<f64>,
    pub provenance: Vec<RowOrigin>,
    /// Years each scored year's Stage-1 model was fitted on.
    pub scorer_years: BTreeMap<i32, Vec<i32>>,
}

pub fn build_s2(
    data: &Dataset,
    spec: &TrainingSpec,
    years: &[i32],
    stage1_cfg: &GbmConfig,
    protocol: &S2Protocol,
) -> Result<Stage2TrainingSet> {
    if years.len() < 2 {
        return Err(Error::TooFewYears {
            needed: 2,
            got: years.len(),
        });
    }
    let mut sorted = years.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let assignments: Vec<(Vec<i32>, Vec<i32>)> = match protocol {
        S2Protocol::LeaveOneYearOut => sorted
            .iter()
            .map(|&y| {
                (
                    sorted.iter().copied().filter(|&o| o != y).collect(),
                    vec![y],
                )
            })
            .collect(),
        S2Protocol::DisjointBlock { stage1_years } => {
            if *stage1_years == 0 || *stage1_years >= sorted.len() {
                return Err(Error::InvalidParameter(format!(
                    "disjoint block needs 1..{} Stage-1 years, got {stage1_years}",
                    sorted.len()
                )));
            }
            let (a, b) = sorted.split_at(*stage1_years);
            vec![(a.to_vec(), b.to_vec())]
        }
    };

    let references = SeriesReferences::from_training(data, &sorted, &spec.season)?;
    let scored: Vec<Vec<(RowOrigin, Vec<f64>, f64)>> = assignments
        .par_iter()
        .map(|(fit_years, score_years)| -> Result<_> {
            let s1 = build_s1(data, spec, fit_years)?;
            let (model, _) = fit_stage1(&s1, stage1_cfg)?;
            let target = build_s1(data, spec, score_years)?;
            target
                .provenance
                .iter()
                .zip(&target.targets)
                .map(|(origin, countdown)| {
                    let y_hat = model.predict_day(data, origin.year, origin.z)?;
                    let mut row = vec![y_hat];
                    row.extend(row_for_day(
                        data,
                        &references,
                        origin.year,
                        origin.z,
                        spec.include_doy,
                    )?);
                    Ok((*origin, row, (y_hat - countdown).abs()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut set = Stage2TrainingSet {
        spec: spec.clone(),
        references,
        rows: Vec::new(),
        targets: Vec::new(),
        provenance: Vec::new(),
        scorer_years: BTreeMap::new(),
    };
    for ((fit_years, score_years), rows) in assignments.iter().zip(scored) {
        for y in score_years {
            set.scorer_years.insert(*y, fit_years.clone());
        }
        for (origin, row, target) in rows {
            set.provenance.push(origin);
            set.rows.push(row);
            set.targets.push(target);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Model {
    pub spec: TrainingSpec,
    pub references: SeriesReferences,
    pub u_floor: f64,
    pub gbm: GbmModel,
}

impl Stage2Model {
    /// Predicted uncertainty of `y_hat` on day `z`, clamped below at `u_floor`.
    pub fn predict_day(&self, data: &Dataset, year: i32, z: i32, y_hat: f64) -> Result<f64> {
        let mut row = vec![y_hat];
        row.extend(row_for_day(
            data,
            &self.references,
            year,
            z,
            self.spec.include_doy,
        )?);
        Ok(self.gbm.predict(&row)?.max(self.u_floor))
    }
}

pub fn fit_stage2(
    s2: &Stage2TrainingSet,
    cfg: &GbmConfig,
    u_floor: f64,
) -> Result<(Stage2Model, TrainingCurve)> {
    if !(u_floor > 0.0 && u_floor.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "u_floor must be > 0, got {u_floor}"
        )));
    }
    let (gbm, curve) = gbm::fit(&s2.rows, &s2.targets, cfg)?;
    Ok((
        Stage2Model {
            spec: s2.spec.clone(),
            references: s2.references,
            u_floor,
            gbm,
        },
        curve,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub z: i32,
    pub y_hat: f64,
    pub u_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub year: i32,
    pub boundary: Boundary,
    pub points: Vec<PredictionPoint>,
}

impl ForecastSeries {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["z", "y_hat", "u_hat"])?;
        for p in &self.points {
            wtr.write_record([p.z.to_string(), p.y_hat.to_string(), p.u_hat.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Boundary implied by the last Stage-1 prediction alone.
    pub fn last_point_estimate(&self) -> Option<f64> {
        self.points.last().map(|p| f64::from(p.z) + p.y_hat)
    }
}

/// Stage-1 and Stage-2 predictions for each day of `z_range` in `year`.
pub fn predict_series(
    stage1: &Stage1Model,
    stage2: &Stage2Model,
    data: &Dataset,
    year: i32,
    z_range: RangeInclusive<i32>,
) -> Result<ForecastSeries> {
    let points = z_range
        .map(|z| {
            let y_hat = stage1.predict_day(data, year, z)?;
            let u_hat = stage2.predict_day(data, year, z, y_hat)?;
            Ok(PredictionPoint { z, y_hat, u_hat })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastSeries {
        year,
        boundary: stage1.spec.boundary,
        points,
    })
}

/// Both stages plus the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub spec: TrainingSpec,
    pub stage1: GbmConfig,
    pub stage2: GbmConfig,
    pub s2_protocol: S2Protocol,
    pub u_floor: f64,
}

impl PipelineConfig {
    pub fn new(spec: TrainingSpec) -> Self {
        PipelineConfig {
            spec,
            stage1: GbmConfig::default(),
            stage2: GbmConfig::default(),
            s2_protocol: S2Protocol::LeaveOneYearOut,
            u_floor: DEFAULT_U_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub stage1: Stage1Model,
    pub stage2: Stage2Model,
    pub stage1_curve: TrainingCurve,
    pub stage2_curve: TrainingCurve,
}

/// Fits Stage 1 on all of `years` and Stage 2 on residuals produced under
/// the configured protocol.
pub fn train(data: &Dataset, cfg: &PipelineConfig, years: &[i32]) -> Result<TrainedPipeline> {
    let s1 = build_s1(data, &cfg.spec, years)?;
    let (stage1, stage1_curve) = fit_stage1(&s1, &cfg.stage1)?;
    let s2 = build_s2(data, &cfg.spec, years, &cfg.stage1, &cfg.s2_protocol)?;
    let (stage2, stage2_curve) = fit_stage2(&s2, &cfg.stage2, cfg.u_floor)?;
    Ok(TrainedPipeline {
        stage1,
        stage2,
        stage1_curve,
        stage2_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GeneratorProfile};

    fn small_cfg() -> GbmConfig {
        GbmConfig {
            n_trees: 20,
            max_depth: 2,
            learning_rate: 0.2,
            ..GbmConfig::default()
        }
    }

    fn setup() -> (Dataset, TrainingSpec) {
        let data = generate_synthetic(42, 4, &GeneratorProfile::default()).unwrap();
        let spec = TrainingSpec::new(SeasonDefinition::new(120.0, 4).unwrap(), Boundary::Start);
        (data, spec)
    }

    #[test]
    fn countdown_rows() {
        let (data, spec) = setup();
        let s1 = build_s1(&data, &spec, &[2004]).unwrap();
        assert_eq!(s1.rows.len(), 60);
        let want: Vec<f64> = (0..=59).rev().map(f64::from).collect();
        assert_eq!(s1.targets, want);
        assert!(s1.rows.iter().all(|r| r.len() == 361));
        let b = label_season(&data, &spec.season, 2004)
            .unwrap()
            .start_day
            .unwrap() as i32;
        assert_eq!(s1.provenance.last().unwrap().z, b);

        let two = build_s1(&data, &spec, &[2003, 2004]).unwrap();
        assert_eq!(two.rows.len(), 120);
        assert!(two.provenance[..60].iter().all(|o| o.year == 2003));
        assert!(two.provenance[60..].iter().all(|o| o.year == 2004));
    }

    #[test]
    fn missing_label_and_horizon() {
        let (data, spec) = setup();
        let strict = TrainingSpec {
            season: SeasonDefinition::new(1e9, 7).unwrap(),
            ..spec.clone()
        };
        assert!(matches!(
            build_s1(&data, &strict, &[2004]),
            Err(Error::MissingLabel(2004))
        ));
        let long = TrainingSpec {
            horizon: 400,
            ..spec
        };
        assert!(matches!(
            build_s1(&data, &long, &[2003]),
            Err(Error::HorizonOutOfRange { year: 2003, .. })
        ));
    }

    #[test]
    fn constant_targets_fit_a_constant() {
        let (data, spec) = setup();
        let mut s1 = build_s1(&data, &spec, &[2004]).unwrap();
        s1.targets.iter_mut().for_each(|t| *t = 12.0);
        let (m, _) = fit_stage1(&s1, &small_cfg()).unwrap();
        assert_eq!(m.predict_day(&data, 2005, 100).unwrap(), 12.0);
    }

    #[test]
    fn stage2_clamps_and_learns_constants() {
        let (data, spec) = setup();
        let mut s2 = build_s2(
            &data,
            &spec,
            &[2003, 2004],
            &small_cfg(),
            &S2Protocol::LeaveOneYearOut,
        )
        .unwrap();
        s2.targets.iter_mut().for_each(|t| *t = 0.0);
        let (m, _) = fit_stage2(&s2, &small_cfg(), DEFAULT_U_FLOOR).unwrap();
        assert_eq!(
            m.predict_day(&data, 2005, 90, 3.0).unwrap(),
            DEFAULT_U_FLOOR
        );
        s2.targets.iter_mut().for_each(|t| *t = 3.0);
        let (m, _) = fit_stage2(&s2, &small_cfg(), DEFAULT_U_FLOOR).unwrap();
        assert!((m.predict_day(&data, 2005, 90, 3.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn loyo_scores_each_year_with_the_other() {
        let (data, spec) = setup();
        let s2 = build_s2(
            &data,
            &spec,
            &[2003, 2004],
            &small_cfg(),
            &S2Protocol::LeaveOneYearOut,
        )
        .unwrap();
        assert_eq!(s2.scorer_years[&2003], vec![2004]);
        assert_eq!(s2.scorer_years[&2004], vec![2003]);
        for o in &s2.provenance {
            assert!(!s2.scorer_years[&o.year].contains(&o.year));
        }
        assert_eq!(s2.rows[0].len(), 362);
        assert!(s2.targets.iter().all(|t| *t >= 0.0));
        assert!(matches!(
            build_s2(
                &data,
                &spec,
                &[2003],
                &small_cfg(),
                &S2Protocol::LeaveOneYearOut
            ),
            Err(Error::TooFewYears { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn disjoint_block_protocol() {
        let (data, spec) = setup();
        let s2 = build_s2(
            &data,
            &spec,
            &[2003, 2004, 2005],
            &small_cfg(),
            &S2Protocol::DisjointBlock { stage1_years: 1 },
        )
        .unwrap();
        assert_eq!(s2.scorer_years[&2004], vec![2003]);
        assert_eq!(s2.scorer_years[&2005], vec![2003]);
        assert!(s2.provenance.iter().all(|o| o.year != 2003));
        assert!(build_s2(
            &data,
            &spec,
            &[2003, 2004],
            &small_cfg(),
            &S2Protocol::DisjointBlock { stage1_years: 2 },
        )
        .is_err());
    }

    #[test]
    fn series_shape_and_floor() {
        let (data, spec) = setup();
        let mut cfg = PipelineConfig::new(spec);
        cfg.stage1 = small_cfg();
        cfg.stage2 = small_cfg();
        let p = train(&data, &cfg, &[2003, 2004, 2005]).unwrap();
        let one = predict_series(&p.stage1, &p.stage2, &data, 2006, 80..=80).unwrap();
        assert_eq!(one.points.len(), 1);
        let s = predict_series(&p.stage1, &p.stage2, &data, 2006, 60..=119).unwrap();
        assert_eq!(s.points.len(), 60);
        assert!(s.points.iter().all(|pt| pt.u_hat >= DEFAULT_U_FLOOR));
        assert!(s.points.windows(2).all(|w| w[1].z == w[0].z + 1));
        assert!(matches!(
            predict_series(&p.stage1, &p.stage2, &data, 2007, 10..=12),
            Err(Error::WindowUnavailable { year: 2007, .. })
        ));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("z,y_hat,u_hat\n60,"));
    }
}
