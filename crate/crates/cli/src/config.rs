//! JSON run configuration. Every flag has a field here; flags win.

use std::path::{Path, PathBuf};

use pollencast_core::backtest::ZRangePolicy;
use pollencast_core::data::{Boundary, ColumnMap, GeneratorProfile};
use pollencast_core::gbm::GbmConfig;
use pollencast_core::pipeline::S2Protocol;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub verbose: Option<bool>,

    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub column_map: Option<ColumnMap>,

    pub years: Option<u32>,
    pub profile: Option<GeneratorProfile>,

    pub delta_c: Option<f64>,
    pub delta_n: Option<usize>,
    pub boundary: Option<Boundary>,
    pub horizon: Option<u32>,
    pub include_doy: Option<bool>,
    pub u_floor: Option<f64>,
    pub stage1: Option<GbmConfig>,
    pub stage2: Option<GbmConfig>,
    pub s2_protocol: Option<S2Protocol>,

    pub train_years: Option<Vec<i32>>,
    pub test_years: Option<usize>,
    pub z_range: Option<ZRangePolicy>,

    pub year: Option<i32>,
    pub z_first: Option<i32>,
    pub z_last: Option<i32>,

    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub z_start: Option<f64>,
    pub n_max: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage("ConfigError", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage("ConfigError", format!("{}: {e}", path.display())))
    }
}

/// Parses `2003-2015` or `2003,2005,2007` (or a single year).
pub fn parse_years(s: &str) -> Result<Vec<i32>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('-') {
        let a: i32 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad year range `{s}`"))?;
        let b: i32 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad year range `{s}`"))?;
        if b < a {
            return Err(format!("empty year range `{s}`"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad year `{p}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_lists() {
        assert_eq!(parse_years("2003-2005").unwrap(), vec![2003, 2004, 2005]);
        assert_eq!(parse_years("2003, 2007").unwrap(), vec![2003, 2007]);
        assert!(parse_years("2005-2003").is_err());
        assert!(parse_years("x").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        let c: RunConfig =
            serde_json::from_str(r#"{"seed": 1, "stage1": {"n_trees": 5}}"#).unwrap();
        assert_eq!(c.stage1.unwrap().n_trees, 5);
    }
}
