//! Gradient-boosted regression trees with squared-error loss.
//!
//! Each stage fits a depth-limited tree to the current residuals and adds
//! it, scaled by the learning rate, to the running prediction. The first
//! prediction is the training-target mean.

mod split;
mod tree;

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use split::{split_search, Split};
pub use tree::TreeNode;

use crate::error::{Error, Result};
use crate::features::CATALOG_VERSION;

/// Version of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.05,
            min_samples_leaf: 5,
            subsample_fraction: 1.0,
            seed: 0,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_trees < 1 {
            return bad("n_trees must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!(
                "subsample_fraction must be in (0, 1], got {}",
                self.subsample_fraction
            ));
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1".into());
        }
        Ok(())
    }
}

/// Training MSE before any tree and after each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub initial_mse: f64,
    pub stage_mse: Vec<f64>,
}

impl TrainingCurve {
    pub fn final_mse(&self) -> f64 {
        self.stage_mse.last().copied().unwrap_or(self.initial_mse)
    }

    pub fn is_non_increasing(&self) -> bool {
        std::iter::once(&self.initial_mse)
            .chain(&self.stage_mse)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] <= w[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub format_version: u32,
    pub config: GbmConfig,
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub feature_count: usize,
    pub catalog_version: String,
    pub trees: Vec<TreeNode>,
}

impl GbmModel {
    /// A model with no trees that always predicts `value`.
    pub fn constant(value: f64, feature_count: usize) -> Self {
        let config = GbmConfig::default();
        GbmModel {
            format_version: MODEL_FORMAT_VERSION,
            learning_rate: config.learning_rate,
            config,
            base_prediction: value,
            feature_count,
            catalog_version: CATALOG_VERSION.to_string(),
            trees: Vec::new(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_count {
            return Err(Error::WrongFeatureCount {
                expected: self.feature_count,
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "feature vector".into(),
                detail: v.to_string(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let boost: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_prediction + self.learning_rate * boost
    }

    /// How many split nodes use each feature.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.feature_count];
        for t in &self.trees {
            t.count_splits(&mut counts);
        }
        counts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbmModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn mse(y: &[f64], pred: &[f64]) -> f64 {
    y.iter()
        .zip(pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64
}

/// Fits a boosted ensemble to the rows of `x` and targets `y`.
pub fn fit(x: &[Vec<f64>], y: &[f64], cfg: &GbmConfig) -> Result<(GbmModel, TrainingCurve)> {
    cfg.validate()?;
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    let needed = (2 * cfg.min_samples_leaf).max(2);
    if n < needed {
        return Err(Error::TooFewRows { needed, got: n });
    }
    let width = x[0].len();
    for row in x {
        if row.len() != width {
            return Err(Error::WrongFeatureCount {
                expected: width,
                got: row.len(),
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "training matrix".into(),
                detail: v.to_string(),
            });
        }
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "training targets".into(),
            detail: v.to_string(),
        });
    }

    let base = y.iter().sum::<f64>() / n as f64;
    let columns = tree::Columns::new(x, width);
    let mut pred = vec![base; n];
    let mut residuals = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sample_size =
        ((cfg.subsample_fraction * n as f64).round() as usize).clamp(needed.min(n), n);
    let mut in_sample = vec![true; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut curve = TrainingCurve {
        initial_mse: mse(y, &pred),
        stage_mse: Vec::with_capacity(cfg.n_trees),
    };

    for _ in 0..cfg.n_trees {
        for i in 0..n {
            residuals[i] = y[i] - pred[i];
        }
        if sample_size < n {
            in_sample.iter_mut().for_each(|b| *b = false);
            for i in sample(&mut rng, n, sample_size).iter() {
                in_sample[i] = true;
            }
        }
        let t = tree::grow(
            &columns,
            &residuals,
            &in_sample,
            cfg.max_depth,
            cfg.min_samples_leaf,
        );
        for (p, row) in pred.iter_mut().zip(x) {
            *p += cfg.learning_rate * t.predict(row);
        }
        trees.push(t);
        curve.stage_mse.push(mse(y, &pred));
    }

    let model = GbmModel {
        format_version: MODEL_FORMAT_VERSION,
        config: cfg.clone(),
        base_prediction: base,
        learning_rate: cfg.learning_rate,
        feature_count: width,
        catalog_version: CATALOG_VERSION.to_string(),
        trees,
    };
    Ok((model, curve))
}
