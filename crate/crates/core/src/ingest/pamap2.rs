//! PAMAP2 protocol `.dat` reader.
//!
//! Each row holds 54 space-separated columns: timestamp (s), activity id,
//! heart rate, then three 17-column IMU blocks (hand, chest, ankle). Within a
//! block, column 1 is temperature and columns 2–4 the ±16 g accelerometer in
//! m/s². Missing readings are written as `NaN`.

use std::path::Path;

use super::{normalize_units, SampleSeries, Unit};
use crate::{Error, Result};

pub const COLUMNS: usize = 54;
pub const TIMESTAMP_COL: usize = 0;
pub const ACTIVITY_COL: usize = 1;
/// Zero-based columns of the wrist (hand IMU) ±16 g accelerometer.
pub const HAND_ACC16_COLS: [usize; 3] = [4, 5, 6];
/// "Other" / transient activity.
pub const NULL_ACTIVITY: i32 = 0;

/// Activity ids of the protocol and their short names.
pub const ACTIVITIES: [(i32, &str); 18] = [
    (1, "lying"),
    (2, "sit"),
    (3, "stand"),
    (4, "walk"),
    (5, "run"),
    (6, "cycling"),
    (7, "nordic_walk"),
    (9, "TV"),
    (10, "computer"),
    (11, "drive"),
    (12, "asc stairs"),
    (13, "desc stairs"),
    (16, "vacuum"),
    (17, "iron"),
    (18, "fold_laundry"),
    (19, "clean house"),
    (20, "soccer"),
    (24, "rope_jump"),
];

pub fn activity_name(id: i32) -> Option<&'static str> {
    ACTIVITIES.iter().find(|(i, _)| *i == id).map(|(_, n)| *n)
}

/// Rows skipped because the wrist accelerometer reading was missing.
#[derive(Debug, Clone, Default)]
pub struct Pamap2Stats {
    pub skipped_rows: usize,
}

/// Read one `.dat` file into a series named after the file stem.
pub fn read_pamap2_file(path: &Path, stats: &mut Pamap2Stats) -> Result<SampleSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".into());
    let mut ts = Vec::new();
    let mut acc = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != COLUMNS {
            return Err(Error::Data(format!(
                "{} line {}: expected {COLUMNS} columns, found {}",
                path.display(),
                line_no + 1,
                cols.len()
            )));
        }
        let parse = |i: usize| cols[i].parse::<f64>().ok().filter(|v| v.is_finite());
        let (Some(t), Some(act)) = (parse(TIMESTAMP_COL), parse(ACTIVITY_COL)) else {
            stats.skipped_rows += 1;
            continue;
        };
        let a = HAND_ACC16_COLS.map(parse);
        let [Some(x), Some(y), Some(z)] = a else {
            stats.skipped_rows += 1;
            continue;
        };
        if ts.last().is_some_and(|&last| t <= last) {
            stats.skipped_rows += 1;
            continue;
        }
        ts.push(t);
        acc.push([x, y, z]);
        labels.push(act as i32);
    }
    let series = SampleSeries {
        subject_id: subject,
        timestamps: ts,
        accel: acc,
        labels: Some(labels),
        null_label: Some(NULL_ACTIVITY),
    };
    let series = normalize_units(&series, Unit::MetersPerSecondSquared)?;
    series.validate()?;
    Ok(series)
}

/// Read every `*.dat` file of a directory, in file-name order.
pub fn read_pamap2(dir: &Path) -> Result<(Vec<SampleSeries>, Pamap2Stats)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "dat"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no .dat files in {}", dir.display())));
    }
    let mut stats = Pamap2Stats::default();
    let series = files
        .iter()
        .map(|f| read_pamap2_file(f, &mut stats))
        .collect::<Result<Vec<_>>>()?;
    Ok((series, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, act: i32, acc: [f64; 3]) -> String {
        let mut cols = vec![format!("{t}"), act.to_string(), "NaN".into(), "30.0".into()];
        cols.extend(acc.iter().map(|v| v.to_string()));
        while cols.len() < COLUMNS {
            cols.push("0.5".into());
        }
        cols.join(" ")
    }

    #[test]
    fn two_row_fixture() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("subject101.dat");
        std::fs::write(&p, format!("{}\n{}\n", row(8.38, 1, [9.8, 0.0, 0.0]), row(8.39, 2, [0.0, -9.8, 4.9]))).unwrap();
        let mut st = Pamap2Stats::default();
        let s = read_pamap2_file(&p, &mut st).unwrap();
        assert_eq!(s.subject_id, "subject101");
        assert_eq!(s.timestamps, vec![8.38, 8.39]);
        assert_eq!(s.labels.as_deref(), Some(&[1, 2][..]));
        assert!((s.accel[0][0] - 1.0).abs() < 1e-12);
        assert!((s.accel[1][2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn null_only_file_is_flagged() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("subject102.dat");
        std::fs::write(&p, format!("{}\n{}\n", row(0.0, 0, [0.0; 3]), row(0.01, 0, [0.0; 3]))).unwrap();
        let s = read_pamap2_file(&p, &mut Pamap2Stats::default()).unwrap();
        assert!((0..s.len()).all(|i| s.is_null(i)));
    }

    #[test]
    fn wrong_column_count_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("subject103.dat");
        std::fs::write(&p, "1.0 2 NaN 3 4\n").unwrap();
        assert!(read_pamap2_file(&p, &mut Pamap2Stats::default()).is_err());
    }

    #[test]
    fn missing_accel_rows_are_skipped() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("s.dat");
        let bad = row(0.01, 1, [f64::NAN, 0.0, 0.0]);
        std::fs::write(&p, format!("{}\n{bad}\n{}\n", row(0.0, 1, [0.0; 3]), row(0.02, 1, [0.0; 3]))).unwrap();
        let mut st = Pamap2Stats::default();
        let s = read_pamap2_file(&p, &mut st).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(st.skipped_rows, 1);
    }

    #[test]
    fn directory_yields_one_series_per_file() {
        let d = tempfile::tempdir().unwrap();
        for i in 1..=9 {
            std::fs::write(d.path().join(format!("subject10{i}.dat")), format!("{}\n", row(0.0, 1, [0.0; 3]))).unwrap();
        }
        std::fs::write(d.path().join("readme.txt"), "ignored").unwrap();
        let (series, _) = read_pamap2(d.path()).unwrap();
        assert_eq!(series.len(), 9);
        assert_eq!(series[0].subject_id, "subject101");
    }

    #[test]
    fn eighteen_named_activities() {
        assert_eq!(ACTIVITIES.len(), 18);
        assert_eq!(activity_name(12), Some("asc stairs"));
        assert_eq!(activity_name(0), None);
    }
}
