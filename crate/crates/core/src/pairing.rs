//! Coincidence pairs and the per-batch label/weight matrices.
//!
//! A batch of `b` positive pairs is laid out as `2b` windows where window `k`
//! and window `k + b` form the k-th pair. Every ordered cell `(i, j)` of the
//! `2b × 2b` grid is scored: the `2b` pair cells are positives (weight 1), the
//! `2b` diagonal cells are identities (weight 0), and the remaining
//! `4b² − 4b` cells are treated as negatives with weight `1 / (2b − 2)`, so
//! positives and negatives carry the same total weight `2b`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{make_augmented_pair, AugmentConfig};
use crate::ingest::Window;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    /// Largest start-time separation (s) of a temporal pair.
    pub delta_t_max: f64,
    /// Positive pairs per batch, `b`.
    pub batch_pairs: usize,
    /// Share of the `b` pairs built from augmentation rather than time.
    pub aug_fraction: f64,
    /// When set, draw this many pairs once up front and sample batches from them.
    pub materialize_pairs: Option<usize>,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            delta_t_max: 60.0,
            batch_pairs: 128,
            aug_fraction: 0.5,
            materialize_pairs: None,
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t_max > 0.0) {
            return Err(Error::Config("delta_t_max must be positive".into()));
        }
        if self.batch_pairs < 2 {
            return Err(Error::Config("batch_pairs must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.aug_fraction) {
            return Err(Error::Config("aug_fraction must lie in [0, 1]".into()));
        }
        if let Some(n) = self.materialize_pairs {
            if n < self.batch_pairs {
                return Err(Error::Config("materialize_pairs must be at least batch_pairs".into()));
            }
        }
        Ok(())
    }

    fn augmentation_pairs(&self) -> usize {
        (self.aug_fraction * self.batch_pairs as f64).round() as usize
    }
}

struct SubjectWindows {
    id: String,
    windows: Vec<Window>,
    /// For each window, the indices of windows with 0 < |Δt| ≤ delta_t_max.
    partners: Vec<Vec<u32>>,
    anchors: Vec<u32>,
}

/// Read-only view of a corpus grouped by subject and sorted by time.
pub struct CorpusIndex {
    subjects: Vec<SubjectWindows>,
    temporal_subjects: Vec<usize>,
    delta_t_max: f64,
}

impl CorpusIndex {
    pub fn new(windows: Vec<Window>, delta_t_max: f64) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Data("corpus has no windows".into()));
        }
        let mut groups: BTreeMap<String, Vec<Window>> = BTreeMap::new();
        for w in windows {
            groups.entry(w.subject_id.clone()).or_default().push(w);
        }
        let mut subjects = Vec::with_capacity(groups.len());
        for (id, mut ws) in groups {
            ws.sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
            let mut partners = Vec::with_capacity(ws.len());
            let mut lo = 0;
            for i in 0..ws.len() {
                let t = ws[i].start_time;
                while ws[lo].start_time < t - delta_t_max {
                    lo += 1;
                }
                let mut p = Vec::new();
                let mut j = lo;
                while j < ws.len() && ws[j].start_time <= t + delta_t_max {
                    if ws[j].start_time != t {
                        p.push(j as u32);
                    }
                    j += 1;
                }
                partners.push(p);
            }
            let anchors = (0..ws.len() as u32).filter(|&i| !partners[i as usize].is_empty()).collect();
            subjects.push(SubjectWindows {
                id,
                windows: ws,
                partners,
                anchors,
            });
        }
        let temporal_subjects = (0..subjects.len()).filter(|&s| !subjects[s].anchors.is_empty()).collect();
        Ok(CorpusIndex {
            subjects,
            temporal_subjects,
            delta_t_max,
        })
    }

    pub fn delta_t_max(&self) -> f64 {
        self.delta_t_max
    }

    pub fn num_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn num_windows(&self) -> usize {
        self.subjects.iter().map(|s| s.windows.len()).sum()
    }

    pub fn subject_ids(&self) -> impl Iterator<Item = &str> {
        self.subjects.iter().map(|s| s.id.as_str())
    }

    pub fn windows(&self) -> impl Iterator<Item = &Window> {
        self.subjects.iter().flat_map(|s| s.windows.iter())
    }

    /// Subject, then anchor among its windows that have a partner, then partner.
    pub fn sample_temporal_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(&Window, &Window)> {
        if self.temporal_subjects.is_empty() {
            return Err(Error::Data(format!(
                "no subject has two windows within {} s of each other ({} subjects, {} windows)",
                self.delta_t_max,
                self.subjects.len(),
                self.num_windows()
            )));
        }
        let s = &self.subjects[self.temporal_subjects[rng.random_range(0..self.temporal_subjects.len())]];
        let a = s.anchors[rng.random_range(0..s.anchors.len())] as usize;
        let partners = &s.partners[a];
        let p = partners[rng.random_range(0..partners.len())] as usize;
        Ok((&s.windows[a], &s.windows[p]))
    }

    /// Subject, then any of its windows.
    pub fn sample_window<R: Rng + ?Sized>(&self, rng: &mut R) -> &Window {
        let s = &self.subjects[rng.random_range(0..self.subjects.len())];
        &s.windows[rng.random_range(0..s.windows.len())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Temporal,
    Augmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRef {
    pub subject_id: String,
    pub start_time: f64,
}

impl From<&Window> for WindowRef {
    fn from(w: &Window) -> Self {
        WindowRef {
            subject_id: w.subject_id.clone(),
            start_time: w.start_time,
        }
    }
}

/// Where a positive pair came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProvenance {
    pub kind: PairKind,
    pub first: WindowRef,
    pub second: WindowRef,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub augmentations: Vec<String>,
}

#[derive(Debug, Clone)]
struct SampledPair {
    first: Window,
    second: Window,
    provenance: PairProvenance,
}

fn sample_pair<R: Rng + ?Sized>(
    index: &CorpusIndex,
    kind: PairKind,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<SampledPair> {
    match kind {
        PairKind::Temporal => {
            let (a, b) = index.sample_temporal_pair(rng)?;
            Ok(SampledPair {
                provenance: PairProvenance {
                    kind,
                    first: a.into(),
                    second: b.into(),
                    augmentations: Vec::new(),
                },
                first: a.clone(),
                second: b.clone(),
            })
        }
        PairKind::Augmentation => {
            let w = index.sample_window(rng);
            let p = make_augmented_pair(w, aug, rng)?;
            Ok(SampledPair {
                provenance: PairProvenance {
                    kind,
                    first: w.into(),
                    second: w.into(),
                    augmentations: p.applied.iter().map(|s| s.to_string()).collect(),
                },
                first: p.original,
                second: p.augmented,
            })
        }
    }
}

fn pair_kinds<R: Rng + ?Sized>(cfg: &PairingConfig, n: usize, rng: &mut R) -> Vec<PairKind> {
    let n_aug = ((cfg.aug_fraction * n as f64).round() as usize).min(n);
    let mut kinds: Vec<PairKind> = (0..n)
        .map(|i| if i < n_aug { PairKind::Augmentation } else { PairKind::Temporal })
        .collect();
    kinds.shuffle(rng);
    kinds
}

/// Label of cell `(i, j)` in a batch of `b` pairs.
pub fn coincidence_label(b: usize, i: usize, j: usize) -> u8 {
    (i == j || i.abs_diff(j) == b) as u8
}

/// Weight of cell `(i, j)` in a batch of `b` pairs.
pub fn coincidence_weight(b: usize, i: usize, j: usize) -> f64 {
    if i == j {
        0.0
    } else if i.abs_diff(j) == b {
        1.0
    } else {
        1.0 / (2 * b - 2) as f64
    }
}

/// Row-major `(2b)²` label and weight matrices.
pub fn coincidence_matrices(b: usize) -> (Vec<u8>, Vec<f64>) {
    let n = 2 * b;
    let mut labels = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            labels.push(coincidence_label(b, i, j));
            weights.push(coincidence_weight(b, i, j));
        }
    }
    (labels, weights)
}

/// `2b` windows with their coincidence labels and weights.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub b: usize,
    /// Window `k` pairs with window `k + b`.
    pub windows: Vec<Window>,
    /// `(2b)²` row-major.
    pub labels: Vec<u8>,
    /// `(2b)²` row-major.
    pub weights: Vec<f64>,
    pub pairs: Vec<PairProvenance>,
}

impl PairBatch {
    fn assemble(pairs: Vec<SampledPair>) -> Result<Self> {
        let b = pairs.len();
        if b < 2 {
            return Err(Error::Config("a batch needs at least 2 pairs".into()));
        }
        let mut firsts = Vec::with_capacity(2 * b);
        let mut seconds = Vec::with_capacity(b);
        let mut prov = Vec::with_capacity(b);
        for p in pairs {
            firsts.push(p.first);
            seconds.push(p.second);
            prov.push(p.provenance);
        }
        firsts.extend(seconds);
        let (labels, weights) = coincidence_matrices(b);
        Ok(PairBatch {
            b,
            windows: firsts,
            labels,
            weights,
            pairs: prov,
        })
    }

    /// Share of negative cells whose two windows are in fact temporal
    /// neighbours of the same subject.
    pub fn false_negative_fraction(&self, delta_t_max: f64) -> f64 {
        let n = 2 * self.b;
        let mut neg = 0usize;
        let mut bad = 0usize;
        for i in 0..n {
            for j in 0..n {
                if self.labels[i * n + j] == 0 {
                    neg += 1;
                    let (a, c) = (&self.windows[i], &self.windows[j]);
                    if a.subject_id == c.subject_id && (a.start_time - c.start_time).abs() <= delta_t_max {
                        bad += 1;
                    }
                }
            }
        }
        bad as f64 / neg.max(1) as f64
    }
}

/// Sample `b` fresh positive pairs (about `aug_fraction · b` from augmentation,
/// the rest temporal) and lay them out as a [`PairBatch`].
pub fn build_pair_batch<R: Rng + ?Sized>(
    index: &CorpusIndex,
    cfg: &PairingConfig,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<PairBatch> {
    cfg.validate()?;
    if cfg.augmentation_pairs() > 0 {
        aug.validate()?;
    }
    let pairs = pair_kinds(cfg, cfg.batch_pairs, rng)
        .into_iter()
        .map(|k| sample_pair(index, k, aug, rng))
        .collect::<Result<Vec<_>>>()?;
    PairBatch::assemble(pairs)
}

/// A fixed list of positive pairs drawn once before training.
pub struct PairPool {
    pairs: Vec<SampledPair>,
}

impl PairPool {
    pub fn materialize<R: Rng + ?Sized>(
        index: &CorpusIndex,
        cfg: &PairingConfig,
        aug: &AugmentConfig,
        n_pairs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let pairs = pair_kinds(cfg, n_pairs, rng)
            .into_iter()
            .map(|k| sample_pair(index, k, aug, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(PairPool { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `b` distinct pairs from the pool.
    pub fn batch<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<PairBatch> {
        if b > self.pairs.len() {
            return Err(Error::Config(format!("pool holds {} pairs, batch needs {b}", self.pairs.len())));
        }
        let idx = rand::seq::index::sample(rng, self.pairs.len(), b);
        PairBatch::assemble(idx.iter().map(|i| self.pairs[i].clone()).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BatchDumpEntry {
    batch: usize,
    pairs: Vec<PairProvenance>,
}

/// JSON description of the pairs in each batch, for debugging runs.
pub fn dump_batches(batches: &[&PairBatch]) -> String {
    let entries: Vec<BatchDumpEntry> = batches
        .iter()
        .enumerate()
        .map(|(i, b)| BatchDumpEntry {
            batch: i,
            pairs: b.pairs.clone(),
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("batch dump serializes")
}
