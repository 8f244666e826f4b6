//! Daily covariate data: records, datasets, CSV ingestion, the synthetic
//! generator and allergy-season labeling.

mod ingest;
mod record;
mod season;
mod synth;

pub use ingest::{
    ingest_csv, read_csv, write_csv, write_csv_file, ColumnMap, Ingested, LoadReport,
};
pub use record::{date_of, DailyRecord, Dataset, Series, SERIES_COUNT};
pub use season::{
    label_brute_force, label_season, label_series, label_series_brute_force, season_stats,
    Boundary, SeasonDefinition, SeasonLabel, SeasonStats,
};
pub use synth::{generate_synthetic, GeneratorProfile};
