use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::record::{DailyRecord, Dataset, Series, SERIES_COUNT};
use crate::error::{Error, Result};

/// Longest run of missing days that ingestion will forward-fill.
pub const MAX_FILL_DAYS: i64 = 3;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Maps the canonical column names onto the headers of a particular file.
/// Series without an entry use their canonical name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    #[serde(default = "default_date_column")]
    pub date: String,
    #[serde(default)]
    pub columns: BTreeMap<Series, String>,
}

fn default_date_column() -> String {
    "date".to_string()
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            date: default_date_column(),
            columns: BTreeMap::new(),
        }
    }
}

impl ColumnMap {
    pub fn with(mut self, series: Series, header: impl Into<String>) -> Self {
        self.columns.insert(series, header.into());
        self
    }

    pub fn header_for(&self, series: Series) -> &str {
        self.columns
            .get(&series)
            .map(String::as_str)
            .unwrap_or_else(|| series.name())
    }
}

/// Days that were synthesized by forward-filling during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub filled: Vec<NaiveDate>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub report: LoadReport,
}

/// Loads and validates a daily CSV file.
pub fn ingest_csv(path: impl AsRef<Path>, column_map: &ColumnMap) -> Result<Ingested> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, column_map)
}

/// Same as [`ingest_csv`] for any reader.
pub fn read_csv<R: Read>(reader: R, column_map: &ColumnMap) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_col = find(&column_map.date)?;
    let mut cols = [0usize; SERIES_COUNT];
    for s in Series::ALL {
        cols[s.index()] = find(column_map.header_for(s))?;
    }

    let mut report = LoadReport::default();
    let mut records: Vec<DailyRecord> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        report.rows_read += 1;
        let raw_date = row.get(date_col).unwrap_or("");
        let date =
            NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|e| Error::NonFinite {
                field: column_map.date.clone(),
                detail: format!("`{raw_date}`: {e}"),
            })?;
        let mut values = [0.0; SERIES_COUNT];
        for s in Series::ALL {
            let raw = row.get(cols[s.index()]).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::NonFinite {
                field: s.name().to_string(),
                detail: format!("`{raw}` on {date}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: s.name().to_string(),
                    detail: format!("`{raw}` on {date}"),
                });
            }
            values[s.index()] = v;
        }

        if let Some(prev) = records.last().copied() {
            if date <= prev.date {
                return Err(Error::NonMonotoneDates(date));
            }
            let missing = (date - prev.date).num_days() - 1;
            if missing > MAX_FILL_DAYS {
                return Err(Error::GapTooLarge {
                    after: prev.date,
                    days: missing,
                });
            }
            for k in 1..=missing {
                let filled = prev.date + chrono::Duration::days(k);
                report.filled.push(filled);
                records.push(DailyRecord::new(filled, prev.values));
            }
        }
        records.push(DailyRecord::new(date, values));
    }

    let dataset = Dataset::new(records)?;
    Ok(Ingested { dataset, report })
}

/// Writes the dataset with the canonical header. Values use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date"];
    header.extend(Series::ALL.iter().map(|s| s.name()));
    wtr.write_record(&header)?;
    for r in data.records() {
        let mut row = Vec::with_capacity(SERIES_COUNT + 1);
        row.push(r.date.format(DATE_FORMAT).to_string());
        row.extend(r.values.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv_file(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,pollen,tmax,tmin,tavg,precip,humidity,wind_speed,pressure,sunshine_hours,dew_point,cloud_cover,soil_temp";

    fn row(date: &str, pollen: f64) -> String {
        format!("{date},{pollen},12,2,7,0.5,60,3.2,1012,5.5,1,40,6")
    }

    fn csv_of(rows: &[String]) -> String {
        let mut s = String::from(HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    #[test]
    fn two_consecutive_rows() {
        let text = csv_of(&[row("2020-03-01", 10.0), row("2020-03-02", 20.0)]);
        let got = read_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(got.dataset.len(), 2);
        assert!(got.report.filled.is_empty());
        assert_eq!(got.dataset.records()[1].pollen(), 20.0);
    }

    #[test]
    fn missing_column() {
        let text = HEADER.replace(",wind_speed", "") + "\n";
        let err = read_csv(text.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "wind_speed"));
    }

    #[test]
    fn five_day_gap_is_rejected() {
        let text = csv_of(&[row("2020-03-01", 1.0), row("2020-03-07", 1.0)]);
        let err = read_csv(text.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::GapTooLarge { days: 5, .. }));
    }

    #[test]
    fn three_day_gap_is_forward_filled() {
        let text = csv_of(&[row("2020-03-01", 1.0), row("2020-03-05", 9.0)]);
        let got = read_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(got.dataset.len(), 5);
        assert_eq!(got.report.filled.len(), 3);
        assert_eq!(got.dataset.records()[3].pollen(), 1.0);
        assert_eq!(got.dataset.records()[4].pollen(), 9.0);
    }

    #[test]
    fn unparseable_and_nan_values() {
        let text = csv_of(&[row("2020-03-01", 1.0).replace(",3.2,", ",abc,")]);
        assert!(matches!(
            read_csv(text.as_bytes(), &ColumnMap::default()),
            Err(Error::NonFinite { .. })
        ));
        let text = csv_of(&[row("2020-03-01", f64::NAN)]);
        assert!(matches!(
            read_csv(text.as_bytes(), &ColumnMap::default()),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn non_monotone_dates() {
        let text = csv_of(&[row("2020-03-02", 1.0), row("2020-03-01", 1.0)]);
        assert!(matches!(
            read_csv(text.as_bytes(), &ColumnMap::default()),
            Err(Error::NonMonotoneDates(_))
        ));
    }

    #[test]
    fn renamed_columns() {
        let text = csv_of(&[row("2020-03-01", 4.0)])
            .replace("wind_speed", "wind")
            .replacen("date", "day", 1);
        let mut map = ColumnMap::default().with(Series::WindSpeed, "wind");
        map.date = "day".into();
        let got = read_csv(text.as_bytes(), &map).unwrap();
        assert_eq!(got.dataset.records()[0].get(Series::WindSpeed), 3.2);
    }
}
