use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{cohens_kappa, ConfusionMatrix};
use crate::{Error, Result};

pub const CONFUSION_CONVENTION: &str = "rows = truth, columns = predicted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    /// Truth count.
    pub support: u64,
    pub predicted: u64,
    /// `None` when the class was never predicted.
    pub precision: Option<f64>,
    /// `None` when the class never occurs in the truth.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// Target classes with at least one source class under the mapping used.
    pub class_coverage: Vec<String>,
    pub convention: String,
    pub confusion: Vec<Vec<u64>>,
    pub n_windows: u64,
    pub n_dropped_unmapped: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub kappa_degenerate: bool,
    pub per_class: Vec<ClassMetrics>,
}

impl EvalReport {
    pub fn from_confusion(m: &ConfusionMatrix, classes: &[String], coverage: &[String], dropped: u64) -> Result<Self> {
        if classes.len() != m.k() {
            return Err(Error::Shape(format!("{} class names for a {}-class matrix", classes.len(), m.k())));
        }
        let kappa = cohens_kappa(m)?;
        let rows = m.row_sums();
        let cols = m.col_sums();
        let per_class = classes
            .iter()
            .enumerate()
            .map(|(i, c)| ClassMetrics {
                class: c.clone(),
                support: rows[i],
                predicted: cols[i],
                precision: (cols[i] > 0).then(|| m.get(i, i) as f64 / cols[i] as f64),
                recall: (rows[i] > 0).then(|| m.get(i, i) as f64 / rows[i] as f64),
            })
            .collect();
        Ok(EvalReport {
            classes: classes.to_vec(),
            class_coverage: coverage.to_vec(),
            convention: CONFUSION_CONVENTION.into(),
            confusion: m.rows(),
            n_windows: m.total(),
            n_dropped_unmapped: dropped,
            accuracy: m.accuracy().unwrap_or(0.0),
            kappa: kappa.value,
            kappa_degenerate: kappa.degenerate,
            per_class,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bad report JSON: {e}")))
    }

    pub fn confusion_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["truth\\predicted".to_string()];
        header.extend(self.classes.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "windows evaluated: {}", self.n_windows);
        let _ = writeln!(s, "windows dropped (unmapped): {}", self.n_dropped_unmapped);
        let _ = writeln!(s, "accuracy: {:.3}", self.accuracy);
        let _ = writeln!(
            s,
            "kappa: {:.3}{}",
            self.kappa,
            if self.kappa_degenerate { " (degenerate: one class)" } else { "" }
        );
        let _ = writeln!(s, "classes covered: {}", self.class_coverage.join(", "));
        let _ = writeln!(s, "\nconfusion ({})", self.convention);
        let width = self.classes.iter().map(|c| c.len()).max().unwrap_or(0).max(8);
        let _ = write!(s, "{:width$}", "");
        for c in &self.classes {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            let _ = write!(s, "{c:width$}");
            for v in row {
                let _ = write!(s, " {v:>width$}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\n{:width$} {:>9} {:>9} {:>9}", "class", "support", "precision", "recall");
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:width$} {:>9} {:>9} {:>9}",
                m.class,
                m.support,
                fmt(m.precision),
                fmt(m.recall)
            );
        }
        s
    }
}

/// Score aligned truth/prediction indices; a `None` on either side drops the window.
pub fn evaluate(
    truth: &[Option<usize>],
    pred: &[Option<usize>],
    classes: &[String],
    coverage: &[String],
) -> Result<EvalReport> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} truth labels but {} predictions", truth.len(), pred.len())));
    }
    let (mut t, mut p) = (Vec::new(), Vec::new());
    let mut dropped = 0;
    for (a, b) in truth.iter().zip(pred) {
        match (a, b) {
            (Some(a), Some(b)) => {
                t.push(*a);
                p.push(*b);
            }
            _ => dropped += 1,
        }
    }
    let m = super::confusion_matrix(&t, &p, classes.len())?;
    EvalReport::from_confusion(&m, classes, coverage, dropped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub txt: PathBuf,
}

/// Write `<stem>.json`, `<stem>.csv` (confusion) and `<stem>.txt` next to `json_path`.
pub fn emit_report(report: &EvalReport, json_path: &Path) -> Result<EmittedFiles> {
    let files = EmittedFiles {
        json: json_path.to_path_buf(),
        csv: json_path.with_extension("csv"),
        txt: json_path.with_extension("txt"),
    };
    for (path, body) in [
        (&files.json, report.to_json()),
        (&files.csv, report.confusion_csv()),
        (&files.txt, report.summary()),
    ] {
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(files)
}
