//! `preds.csv` and `truth.csv`.

use std::path::Path;

use crate::head::Prediction;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub subject_id: String,
    pub start_time: f64,
    pub pred_class: String,
    pub logits: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub subject_id: String,
    pub start_time: f64,
    pub label: String,
}

/// Columns: `subject_id, start_time, pred_class, logit_<class>…`.
pub fn write_predictions_csv(path: &Path, classes: &[String], preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["subject_id".to_string(), "start_time".into(), "pred_class".into()];
    header.extend(classes.iter().map(|c| format!("logit_{c}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for p in preds {
        let name = classes
            .get(p.class)
            .ok_or_else(|| Error::Data(format!("predicted class {} has no name", p.class)))?;
        let mut rec = vec![p.subject_id.clone(), p.start_time.to_string(), name.clone()];
        rec.extend(p.logits.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Class names from the logit columns, and the rows.
pub fn read_predictions_csv(path: &Path) -> Result<(Vec<String>, Vec<PredictionRow>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.len() < 3 || &header[0] != "subject_id" || &header[1] != "start_time" || &header[2] != "pred_class" {
        return Err(Error::Data(format!("{}: not a predictions file", path.display())));
    }
    let classes: Vec<String> = header
        .iter()
        .skip(3)
        .map(|h| h.strip_prefix("logit_").unwrap_or(h).to_string())
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::Data(format!("{} row {}: bad {what}", path.display(), line + 2));
        rows.push(PredictionRow {
            subject_id: rec[0].to_string(),
            start_time: rec[1].parse().map_err(|_| bad("start_time"))?,
            pred_class: rec[2].to_string(),
            logits: rec
                .iter()
                .skip(3)
                .map(|v| v.parse::<f32>().map_err(|_| bad("logit")))
                .collect::<Result<_>>()?,
        });
    }
    Ok((classes, rows))
}

/// Columns: `subject_id, start_time, label`.
pub fn write_truth_csv(path: &Path, rows: &[TruthRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["subject_id", "start_time", "label"]).map_err(|e| Error::csv(path, e))?;
    for t in rows {
        w.write_record([t.subject_id.as_str(), &t.start_time.to_string(), t.label.as_str()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() != 3 {
            return Err(Error::Data(format!("{} row {}: expected 3 columns", path.display(), line + 2)));
        }
        rows.push(TruthRow {
            subject_id: rec[0].to_string(),
            start_time: rec[1]
                .parse()
                .map_err(|_| Error::Data(format!("{} row {}: bad start_time", path.display(), line + 2)))?,
            label: rec[2].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        let classes = vec!["sit, stand".to_string(), "walk".to_string()];
        let preds = vec![Prediction {
            subject_id: "p1".into(),
            start_time: 1234.1,
            class: 1,
            logits: vec![-0.25, 3.5],
        }];
        write_predictions_csv(&path, &classes, &preds).unwrap();
        let (names, rows) = read_predictions_csv(&path).unwrap();
        assert_eq!(names, classes);
        assert_eq!(rows[0].pred_class, "walk");
        assert_eq!(rows[0].start_time, 1234.1);
        assert_eq!(rows[0].logits, vec![-0.25, 3.5]);
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let rows = vec![TruthRow { subject_id: "a".into(), start_time: 0.5, label: "asc stairs".into() }];
        write_truth_csv(&path, &rows).unwrap();
        assert_eq!(read_truth_csv(&path).unwrap(), rows);
    }
}
