//! Supervised activity head on frozen embeddings, with temporal logit smoothing.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingVector, FrozenEncoder};
use crate::ingest::Window;
use crate::nn::loss::categorical_xent;
use crate::nn::{io, Adam, AdamConfig, Float, LayerSpec, Network, ParamStore, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingStatistic {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingAlignment {
    /// `[t − s/2, t + s/2)`
    #[default]
    Centered,
    /// `(t − s, t]`
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    /// Window length in seconds; 0 disables smoothing.
    pub seconds: f64,
    /// A start-time step larger than this starts a new segment.
    pub segment_gap_seconds: f64,
    pub statistic: SmoothingStatistic,
    pub alignment: SmoothingAlignment,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            seconds: 120.0,
            segment_gap_seconds: 20.0,
            statistic: SmoothingStatistic::Mean,
            alignment: SmoothingAlignment::Centered,
        }
    }
}

impl SmoothingConfig {
    pub fn disabled() -> Self {
        SmoothingConfig { seconds: 0.0, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    /// Dense layers including the output layer.
    pub layers: usize,
    pub units: usize,
    pub num_classes: usize,
    pub imbalance_cap: f64,
    pub smoothing: SmoothingConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            layers: 5,
            units: 128,
            num_classes: 2,
            imbalance_cap: 5.0,
            smoothing: SmoothingConfig::default(),
            epochs: 100,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.units == 0 {
            return Err(Error::Config("head needs layers >= 1 and units >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("head needs >= 2 classes, got {}", self.num_classes)));
        }
        if !(self.imbalance_cap >= 1.0) {
            return Err(Error::Config("imbalance_cap must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.smoothing.seconds >= 0.0) || !(self.smoothing.segment_gap_seconds >= 0.0) {
            return Err(Error::Config("smoothing durations must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEmbedding {
    pub embedding: EmbeddingVector,
    pub label: usize,
    pub subject_id: String,
    pub start_time: f64,
}

/// Per-class loss multipliers lifting every present class to at least
/// `max_count / cap` effective examples. Absent classes get 0.
pub fn class_weights(counts: &[usize], cap: f64) -> Result<Vec<f64>> {
    if !(cap >= 1.0) {
        return Err(Error::Config(format!("imbalance cap {cap} must be >= 1")));
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::Data(format!("need at least 2 classes with examples, found {present}")));
    }
    let max = *counts.iter().max().expect("non-empty") as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if c == 0 {
                log::warn!("class {k} has no training examples; weight 0");
                0.0
            } else {
                (max / (cap * c as f64)).max(1.0)
            }
        })
        .collect())
}

/// Stack of `layers` dense layers with ReLU between them.
pub fn build_mlp(prefix: &str, inputs: usize, units: usize, layers: usize, outputs: usize) -> Network {
    let mut specs = Vec::new();
    let mut width = inputs;
    for i in 0..layers {
        let out = if i + 1 == layers { outputs } else { units };
        specs.push(LayerSpec::Dense {
            name: format!("{prefix}.dense{i}"),
            inputs: width,
            outputs: out,
        });
        if i + 1 < layers {
            specs.push(LayerSpec::Relu);
        }
        width = out;
    }
    Network::new(specs)
}

/// Budget shared by the head and the linear probes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FitBudget {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

/// Mini-batch class-weighted cross-entropy training; returns per-epoch mean loss.
pub(crate) fn fit_classifier(
    net: &Network,
    params: &mut ParamStore,
    inputs: &[Float],
    dim: usize,
    labels: &[usize],
    weights: &[f64],
    budget: FitBudget,
) -> Result<Vec<f64>> {
    let n = labels.len();
    let mut opt = Adam::new(budget.adam);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(budget.epochs);
    for epoch in 0..budget.epochs {
        order.shuffle(&mut crate::rng::stream(budget.seed, epoch as u64 + 1));
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(budget.batch_size) {
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            if ys.iter().all(|&y| weights[y] == 0.0) {
                continue;
            }
            let mut x = Vec::with_capacity(chunk.len() * dim);
            for &i in chunk {
                x.extend_from_slice(&inputs[i * dim..(i + 1) * dim]);
            }
            let x = Tensor::new(vec![chunk.len(), dim], x)?;
            let (logits, mut tape) = net.forward(params, &x)?;
            let out = categorical_xent(&logits, &ys, weights)?;
            if !out.loss.is_finite() {
                return Err(Error::Numeric(format!("classifier loss became {} in epoch {epoch}", out.loss)));
            }
            net.backward(&mut tape, params, &out.grad)?;
            opt.step(params)?;
            sum += out.loss;
            batches += 1;
        }
        epoch_losses.push(if batches > 0 { sum / batches as f64 } else { 0.0 });
    }
    Ok(epoch_losses)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename = "head")]
struct HeadMeta {
    config: HeadConfig,
    input_dim: usize,
    classes: Vec<String>,
}

/// Trained classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    config: HeadConfig,
    input_dim: usize,
    classes: Vec<String>,
    net: Network,
    params: ParamStore,
}

/// Per-window output of [`predict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub start_time: f64,
    pub class: usize,
    /// Smoothed logits.
    pub logits: Vec<f32>,
}

impl Head {
    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Unsmoothed logits, one row per embedding.
    pub fn logits(&self, embeddings: &[EmbeddingVector]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(embeddings.len());
        let k = self.config.num_classes;
        for chunk in embeddings.chunks(256) {
            let mut x = Vec::with_capacity(chunk.len() * self.input_dim);
            for e in chunk {
                if e.0.len() != self.input_dim {
                    return Err(Error::Shape(format!("embedding has {} values, head expects {}", e.0.len(), self.input_dim)));
                }
                x.extend(e.0.iter().map(|&v| v as Float));
            }
            let y = self.net.infer(&self.params, &Tensor::new(vec![chunk.len(), self.input_dim], x)?)?;
            out.extend(y.data().chunks(k).map(|r| r.iter().map(|&v| v as f32).collect::<Vec<_>>()));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = HeadMeta {
            config: self.config.clone(),
            input_dim: self.input_dim,
            classes: self.classes.clone(),
        };
        io::encode(&self.params, &serde_json::to_string(&meta).expect("meta serializes"))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, meta) = io::decode(bytes)?;
        let meta: HeadMeta = serde_json::from_str(&meta).map_err(|e| Error::Format(format!("not a head model: {e}")))?;
        meta.config.validate()?;
        let net = build_mlp("head", meta.input_dim, meta.config.units, meta.config.layers, meta.config.num_classes);
        for (name, t) in net.init_params(0)?.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::Shape(format!("head parameter '{name}' has the wrong shape")));
            }
        }
        Ok(Head {
            config: meta.config,
            input_dim: meta.input_dim,
            classes: meta.classes,
            net,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Train the head; `classes` names the K outputs (empty for numeric names).
pub fn train_head(data: &[LabeledEmbedding], cfg: &HeadConfig, classes: &[String]) -> Result<(Head, Vec<f64>)> {
    cfg.validate()?;
    let k = cfg.num_classes;
    let first = data.first().ok_or_else(|| Error::Data("no labeled embeddings to train on".into()))?;
    let dim = first.embedding.0.len();
    let classes: Vec<String> = if classes.is_empty() {
        (0..k).map(|i| i.to_string()).collect()
    } else if classes.len() == k {
        classes.to_vec()
    } else {
        return Err(Error::Config(format!("{} class names for {k} classes", classes.len())));
    };
    let mut counts = vec![0usize; k];
    let mut inputs = Vec::with_capacity(data.len() * dim);
    let mut labels = Vec::with_capacity(data.len());
    for e in data {
        if e.label >= k {
            return Err(Error::Data(format!("label {} out of range for {k} classes", e.label)));
        }
        if e.embedding.0.len() != dim {
            return Err(Error::Shape("embeddings differ in length".into()));
        }
        counts[e.label] += 1;
        labels.push(e.label);
        inputs.extend(e.embedding.0.iter().map(|&v| v as Float));
    }
    let weights = class_weights(&counts, cfg.imbalance_cap)?;
    let net = build_mlp("head", dim, cfg.units, cfg.layers, k);
    let mut params = net.init_params(cfg.seed)?;
    let budget = FitBudget {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.adam,
        seed: cfg.seed,
    };
    let losses = fit_classifier(&net, &mut params, &inputs, dim, &labels, &weights, budget)?;
    Ok((
        Head {
            config: cfg.clone(),
            input_dim: dim,
            classes,
            net,
            params,
        },
        losses,
    ))
}

/// Smooth one subject's time-ordered logits within contiguous segments.
pub fn smooth_logits(times: &[f64], logits: &[Vec<f32>], cfg: &SmoothingConfig) -> Result<Vec<Vec<f32>>> {
    if times.len() != logits.len() {
        return Err(Error::Shape(format!("{} times but {} logit rows", times.len(), logits.len())));
    }
    if times.windows(2).any(|p| !(p[1] >= p[0])) {
        return Err(Error::Data("smoothing input is not time-sorted".into()));
    }
    if cfg.seconds <= 0.0 || logits.len() < 2 {
        return Ok(logits.to_vec());
    }
    // Time comparisons tolerate accumulated float error in start times.
    const EPS: f64 = 1e-6;
    let mut segment = vec![0usize; times.len()];
    for i in 1..times.len() {
        segment[i] = segment[i - 1] + usize::from(times[i] - times[i - 1] > cfg.segment_gap_seconds + EPS);
    }
    let (lo, hi) = match cfg.alignment {
        SmoothingAlignment::Centered => (-cfg.seconds / 2.0, cfg.seconds / 2.0),
        SmoothingAlignment::Trailing => (-cfg.seconds, 0.0),
    };
    let inside = |d: f64| match cfg.alignment {
        SmoothingAlignment::Centered => d >= lo - EPS && d < hi - EPS,
        SmoothingAlignment::Trailing => d > lo + EPS && d <= hi + EPS,
    };
    let k = logits[0].len();
    let mut out = Vec::with_capacity(logits.len());
    let mut column = Vec::new();
    let (mut start, mut end) = (0usize, 0usize);
    for i in 0..times.len() {
        while !(segment[start] == segment[i] && inside(times[start] - times[i])) {
            start += 1;
        }
        end = end.max(start);
        while end < times.len() && segment[end] == segment[i] && inside(times[end] - times[i]) {
            end += 1;
        }
        let rows = &logits[start..end];
        let mut smoothed = Vec::with_capacity(k);
        for c in 0..k {
            let v = match cfg.statistic {
                SmoothingStatistic::Mean => rows.iter().map(|r| r[c] as f64).sum::<f64>() / rows.len() as f64,
                SmoothingStatistic::Median => {
                    column.clear();
                    column.extend(rows.iter().map(|r| r[c] as f64));
                    column.sort_by(f64::total_cmp);
                    let m = column.len();
                    if m % 2 == 1 {
                        column[m / 2]
                    } else {
                        0.5 * (column[m / 2 - 1] + column[m / 2])
                    }
                }
            };
            smoothed.push(v as f32);
        }
        out.push(smoothed);
    }
    Ok(out)
}

/// Smooth logits subject by subject; rows keep their input order.
pub fn smooth_by_subject(
    subjects: &[&str],
    times: &[f64],
    logits: &[Vec<f32>],
    cfg: &SmoothingConfig,
) -> Result<Vec<Vec<f32>>> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| subjects[a].cmp(subjects[b]).then(times[a].total_cmp(&times[b])));
    let mut out = logits.to_vec();
    for group in order.chunk_by(|&a, &b| subjects[a] == subjects[b]) {
        let ts: Vec<f64> = group.iter().map(|&i| times[i]).collect();
        let ls: Vec<Vec<f32>> = group.iter().map(|&i| logits[i].clone()).collect();
        for (&i, s) in group.iter().zip(smooth_logits(&ts, &ls, cfg)?) {
            out[i] = s;
        }
    }
    Ok(out)
}

/// Embed, score, smooth per subject and take the argmax.
pub fn predict(encoder: &FrozenEncoder, head: &Head, windows: &[Window]) -> Result<Vec<Prediction>> {
    let emb = encoder.embed(windows)?;
    predict_embeddings(head, windows, &emb)
}

pub fn predict_embeddings(head: &Head, windows: &[Window], emb: &[EmbeddingVector]) -> Result<Vec<Prediction>> {
    let raw = head.logits(emb)?;
    let subjects: Vec<&str> = windows.iter().map(|w| w.subject_id.as_str()).collect();
    let times: Vec<f64> = windows.iter().map(|w| w.start_time).collect();
    let smoothed = smooth_by_subject(&subjects, &times, &raw, &head.config.smoothing)?;
    Ok(windows
        .iter()
        .zip(smoothed)
        .map(|(w, l)| Prediction {
            subject_id: w.subject_id.clone(),
            start_time: w.start_time,
            class: argmax(&l),
            logits: l,
        })
        .collect())
}
