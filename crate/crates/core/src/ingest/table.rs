//! Delimited-text readers driven by a schema sidecar (TOML or JSON).
//!
//! ```toml
//! delimiter = ","
//! has_header = true
//! subject_col = "subject"
//! time_col = "time"
//! xyz_cols = ["x", "y", "z"]
//! label_col = "label"     # optional
//! unit = "meters_per_second_squared"
//! ```
//!
//! Columns are referenced by header name or by zero-based index.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_units, SampleSeries, Unit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(n) => write!(f, "'{n}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
    pub subject_col: ColumnRef,
    pub time_col: ColumnRef,
    pub xyz_cols: [ColumnRef; 3],
    #[serde(default)]
    pub label_col: Option<ColumnRef>,
    pub unit: Unit,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl CsvSchema {
    /// Read a schema sidecar; `.json` files are JSON, anything else TOML.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

/// Series read from one file plus the number of rows that were skipped.
#[derive(Debug, Clone)]
pub struct CsvDataset {
    pub series: Vec<SampleSeries>,
    pub skipped_rows: usize,
}

fn resolve(col: &ColumnRef, headers: Option<&csv::StringRecord>) -> Result<usize> {
    match (col, headers) {
        (ColumnRef::Index(i), Some(h)) if *i >= h.len() => {
            Err(Error::Data(format!("declared column {col} missing: file has {} columns", h.len())))
        }
        (ColumnRef::Index(i), _) => Ok(*i),
        (ColumnRef::Name(n), Some(h)) => h
            .iter()
            .position(|c| c.trim() == n)
            .ok_or_else(|| Error::Data(format!("declared column '{n}' missing from header"))),
        (ColumnRef::Name(n), None) => Err(Error::Config(format!(
            "column '{n}' referenced by name but schema has no header"
        ))),
    }
}

/// One time-sorted series per subject, converted to G.
///
/// Rows with unparseable or non-finite numerics, and rows repeating an
/// earlier timestamp of the same subject, are skipped and counted.
pub fn read_csv_dataset(path: &Path, schema: &CsvSchema) -> Result<CsvDataset> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::Config("delimiter must be a single ASCII character".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = if schema.has_header {
        Some(
            rdr.headers()
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
                .clone(),
        )
    } else {
        None
    };
    let subj = resolve(&schema.subject_col, headers.as_ref())?;
    let time = resolve(&schema.time_col, headers.as_ref())?;
    let xyz = [
        resolve(&schema.xyz_cols[0], headers.as_ref())?,
        resolve(&schema.xyz_cols[1], headers.as_ref())?,
        resolve(&schema.xyz_cols[2], headers.as_ref())?,
    ];
    let label = schema
        .label_col
        .as_ref()
        .map(|c| resolve(c, headers.as_ref()))
        .transpose()?;

    type Row = (f64, [f64; 3], Option<i32>);
    let mut by_subject: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    let mut skipped = 0usize;
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let num = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
        let parsed = (|| {
            let s = rec.get(subj)?.to_string();
            let t = num(time)?;
            let a = [num(xyz[0])?, num(xyz[1])?, num(xyz[2])?];
            let l = match label {
                Some(i) => Some(rec.get(i)?.parse::<i32>().ok()?),
                None => None,
            };
            Some((s, t, a, l))
        })();
        match parsed {
            Some((s, t, a, l)) => by_subject.entry(s).or_default().push((t, a, l)),
            None => skipped += 1,
        }
    }

    let mut series = Vec::with_capacity(by_subject.len());
    for (subject, mut rows) in by_subject {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let before = rows.len();
        rows.dedup_by(|b, a| a.0 == b.0);
        skipped += before - rows.len();
        let s = SampleSeries {
            subject_id: subject,
            timestamps: rows.iter().map(|r| r.0).collect(),
            accel: rows.iter().map(|r| r.1).collect(),
            labels: label.map(|_| rows.iter().map(|r| r.2.unwrap_or_default()).collect()),
            null_label: None,
        };
        let s = normalize_units(&s, schema.unit)?;
        s.validate()?;
        series.push(s);
    }
    Ok(CsvDataset {
        series,
        skipped_rows: skipped,
    })
}

/// Write series as CSV with columns `subject,time,x,y,z[,label]`.
pub fn write_csv_dataset(path: &Path, series: &[SampleSeries]) -> Result<CsvSchema> {
    let labeled = series.iter().all(|s| s.labels.is_some()) && !series.is_empty();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["subject", "time", "x", "y", "z"];
    if labeled {
        header.push("label");
    }
    let werr = |e: csv::Error| Error::csv(path, e);
    w.write_record(&header).map_err(werr)?;
    for s in series {
        for i in 0..s.len() {
            let mut row = vec![
                s.subject_id.clone(),
                format!("{}", s.timestamps[i]),
                format!("{}", s.accel[i][0]),
                format!("{}", s.accel[i][1]),
                format!("{}", s.accel[i][2]),
            ];
            if let Some(l) = &s.labels {
                row.push(l[i].to_string());
            }
            w.write_record(&row).map_err(werr)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(CsvSchema {
        delimiter: ',',
        has_header: true,
        subject_col: ColumnRef::Name("subject".into()),
        time_col: ColumnRef::Name("time".into()),
        xyz_cols: [
            ColumnRef::Name("x".into()),
            ColumnRef::Name("y".into()),
            ColumnRef::Name("z".into()),
        ],
        label_col: labeled.then(|| ColumnRef::Name("label".into())),
        unit: Unit::G,
    })
}
