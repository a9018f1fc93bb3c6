//! Metrics, label mapping, subject splits and report files.

mod mapping;
mod report;
mod tables;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use mapping::{apply_mapping, LabelMapping, MappedLabels, TargetSources, UnmappedPolicy, PAMAP2_TO_CAPTURE24, PILOT_TO_CAPTURE24};
pub use report::{emit_report, evaluate, ClassMetrics, EmittedFiles, EvalReport, CONFUSION_CONVENTION};
pub use tables::{read_predictions_csv, read_truth_csv, write_predictions_csv, write_truth_csv, PredictionRow, TruthRow};

use crate::{Error, Result};

/// K×K counts, rows are truth and columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { k, counts: rows.concat() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.k).map(|t| (0..self.k).map(|p| self.get(t, p)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.k).map(|p| (0..self.k).map(|t| self.get(t, p)).sum()).collect()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.trace() as f64 / n as f64)
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} truth labels but {} predictions", truth.len(), pred.len())));
    }
    let mut m = ConfusionMatrix::zeros(k);
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= k || p >= k {
            return Err(Error::Data(format!("label pair ({t}, {p}) out of range for {k} classes")));
        }
        m.counts[t * k + p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement was 1 (a single class on both sides).
    pub degenerate: bool,
}

pub fn cohens_kappa(m: &ConfusionMatrix) -> Result<Kappa> {
    let n = m.total();
    if n == 0 {
        return Err(Error::Data("kappa of an empty confusion matrix".into()));
    }
    let nf = n as f64;
    let p_o = m.trace() as f64 / nf;
    let chance: u128 = m
        .row_sums()
        .iter()
        .zip(m.col_sums())
        .map(|(&r, c)| r as u128 * c as u128)
        .sum();
    if chance == n as u128 * n as u128 {
        return Ok(Kappa {
            value: if m.trace() == n { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    let p_e = m
        .row_sums()
        .iter()
        .zip(m.col_sums())
        .map(|(&r, c)| (r as f64 / nf) * (c as f64 / nf))
        .sum::<f64>();
    Ok(Kappa {
        value: (p_o - p_e) / (1.0 - p_e),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPolicy {
    RandomWindows { test_fraction: f64 },
    HeldOutSubjects { fraction: f64 },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy::HeldOutSubjects { fraction: 0.25 }
    }
}

impl SplitPolicy {
    pub fn random_windows() -> Self {
        SplitPolicy::RandomWindows { test_fraction: 0.2 }
    }
}

/// Train and test indices into `subjects` (one entry per window).
pub fn subject_split(subjects: &[&str], policy: SplitPolicy, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = crate::rng::stream(seed, 0);
    match policy {
        SplitPolicy::RandomWindows { test_fraction } => {
            if !(0.0..=1.0).contains(&test_fraction) {
                return Err(Error::Config(format!("test_fraction {test_fraction} outside [0, 1]")));
            }
            let mut order: Vec<usize> = (0..subjects.len()).collect();
            order.shuffle(&mut rng);
            let n_test = (test_fraction * subjects.len() as f64).round() as usize;
            let mut test = order[..n_test].to_vec();
            let mut train = order[n_test..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            Ok((train, test))
        }
        SplitPolicy::HeldOutSubjects { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config(format!("held-out fraction {fraction} outside (0, 1)")));
            }
            let mut ids: Vec<&str> = subjects.to_vec();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() < 2 {
                return Err(Error::Data(format!("a subject split needs >= 2 subjects, found {}", ids.len())));
            }
            ids.shuffle(&mut rng);
            let n_test = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
            let test_ids = &ids[..n_test];
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (i, s) in subjects.iter().enumerate() {
                if test_ids.contains(s) {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            Ok((train, test))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_examples() {
        let m = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(m.rows(), vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(confusion_matrix(&[], &[], 3).unwrap(), ConfusionMatrix::zeros(3));
        assert!(confusion_matrix(&[0], &[], 2).is_err());
        let diag = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(diag.trace(), diag.total());
    }

    #[test]
    fn kappa_examples() {
        let m = ConfusionMatrix::from_rows(&[vec![45, 5], vec![15, 35]]).unwrap();
        assert!((cohens_kappa(&m).unwrap().value - 0.6).abs() < 1e-9);
        let m = ConfusionMatrix::from_rows(&[vec![25, 25], vec![25, 25]]).unwrap();
        assert_eq!(cohens_kappa(&m).unwrap().value, 0.0);
        let m = ConfusionMatrix::from_rows(&[vec![7, 0, 0], vec![0, 2, 0], vec![0, 0, 40]]).unwrap();
        assert_eq!(cohens_kappa(&m).unwrap().value, 1.0);
        assert!(cohens_kappa(&ConfusionMatrix::zeros(2)).is_err());
    }

    #[test]
    fn degenerate_single_class() {
        let m = ConfusionMatrix::from_rows(&[vec![10, 0], vec![0, 0]]).unwrap();
        assert_eq!(cohens_kappa(&m).unwrap(), Kappa { value: 1.0, degenerate: true });
    }

    proptest! {
        #[test]
        fn kappa_is_scale_invariant(rows in proptest::collection::vec(proptest::collection::vec(0u64..50, 3), 3), s in 1u64..20) {
            let m = ConfusionMatrix::from_rows(&rows).unwrap();
            prop_assume!(m.total() > 0);
            let scaled: Vec<Vec<u64>> = rows.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
            let a = cohens_kappa(&m).unwrap().value;
            let b = cohens_kappa(&ConfusionMatrix::from_rows(&scaled).unwrap()).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn kappa_one_iff_no_off_diagonal(rows in proptest::collection::vec(proptest::collection::vec(0u64..5, 3), 3)) {
            let m = ConfusionMatrix::from_rows(&rows).unwrap();
            let nonempty = m.row_sums().iter().filter(|&&r| r > 0).count();
            prop_assume!(nonempty >= 2);
            let k = cohens_kappa(&m).unwrap().value;
            prop_assert_eq!(k == 1.0, m.trace() == m.total());
        }
    }

    #[test]
    fn held_out_subjects_split() {
        let subjects: Vec<String> = (0..80).map(|i| format!("s{}", i % 8)).collect();
        let refs: Vec<&str> = subjects.iter().map(|s| s.as_str()).collect();
        let (train, test) = subject_split(&refs, SplitPolicy::HeldOutSubjects { fraction: 0.25 }, 3).unwrap();
        let mut test_ids: Vec<&str> = test.iter().map(|&i| refs[i]).collect();
        test_ids.sort_unstable();
        test_ids.dedup();
        assert_eq!(test_ids.len(), 2);
        assert!(train.iter().all(|&i| !test_ids.contains(&refs[i])));
        assert_eq!(train.len() + test.len(), 80);
        assert_eq!(subject_split(&refs, SplitPolicy::default(), 3).unwrap(), (train, test));
        assert!(subject_split(&["a", "a"], SplitPolicy::default(), 0).is_err());
    }

    #[test]
    fn random_window_split_sizes() {
        let refs = vec!["a"; 100];
        let (train, test) = subject_split(&refs, SplitPolicy::random_windows(), 1).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
    }
}
