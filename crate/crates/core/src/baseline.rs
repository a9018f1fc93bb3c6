//! Eight-statistic benchmark features and the linear probe used on them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::head::{argmax, class_weights, fit_classifier, FitBudget};
use crate::ingest::Window;
use crate::nn::{io, AdamConfig, Float, LayerSpec, Network, ParamStore, Tensor};
use crate::{Error, Result};

pub const NUM_STAT_FEATURES: usize = 8;

pub const STAT_FEATURE_NAMES: [&str; NUM_STAT_FEATURES] =
    ["mean_x", "mean_y", "mean_z", "std_x", "std_y", "std_z", "mean_norm", "std_norm"];

/// Per-axis and vector-norm mean and population standard deviation, in G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatFeatures {
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_z: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub std_z: f64,
    pub mean_norm: f64,
    pub std_norm: f64,
}

impl StatFeatures {
    pub fn to_array(&self) -> [f64; NUM_STAT_FEATURES] {
        [
            self.mean_x,
            self.mean_y,
            self.mean_z,
            self.std_x,
            self.std_y,
            self.std_z,
            self.mean_norm,
            self.std_norm,
        ]
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn stat_features(w: &Window) -> StatFeatures {
    let axis = |a: usize| w.samples.iter().skip(a).step_by(3).map(|&v| v as f64);
    let (mean_x, std_x) = mean_std(axis(0));
    let (mean_y, std_y) = mean_std(axis(1));
    let (mean_z, std_z) = mean_std(axis(2));
    let norms = w
        .samples
        .chunks_exact(3)
        .map(|s| ((s[0] as f64).powi(2) + (s[1] as f64).powi(2) + (s[2] as f64).powi(2)).sqrt());
    let (mean_norm, std_norm) = mean_std(norms);
    StatFeatures {
        mean_x,
        mean_y,
        mean_z,
        std_x,
        std_y,
        std_z,
        mean_norm,
        std_norm,
    }
}

/// Per-feature z-score fitted on training rows. Zero spread maps to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or_else(|| Error::Data("no rows to standardize".into()))?;
        let mut mean = Vec::with_capacity(dim);
        let mut std = Vec::with_capacity(dim);
        for c in 0..dim {
            let (m, s) = mean_std(rows.iter().map(|r| r[c]));
            mean.push(m);
            std.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<Float>> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!("feature row has {} values, expected {}", row.len(), self.dim())));
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| ((x - m) / s) as Float)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub imbalance_cap: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 200,
            batch_size: 256,
            adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            imbalance_cap: 5.0,
            seed: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename = "probe")]
struct ProbeMeta {
    standardizer: Standardizer,
    num_classes: usize,
    classes: Vec<String>,
}

/// Standardizer followed by a single dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    standardizer: Standardizer,
    num_classes: usize,
    classes: Vec<String>,
    net: Network,
    params: ParamStore,
}

fn probe_network(dim: usize, k: usize) -> Network {
    Network::new(vec![LayerSpec::Dense {
        name: "probe.dense".into(),
        inputs: dim,
        outputs: k,
    }])
}

impl LinearProbe {
    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn logits(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f32>>> {
        let dim = self.standardizer.dim();
        let mut x = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            x.extend(self.standardizer.apply(r)?);
        }
        let y = self.net.infer(&self.params, &Tensor::new(vec![rows.len(), dim], x)?)?;
        Ok(y.data()
            .chunks(self.num_classes)
            .map(|r| r.iter().map(|&v| v as f32).collect())
            .collect())
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.logits(rows)?.iter().map(|l| argmax(l)).collect())
    }

    /// Fraction of rows whose prediction equals the label.
    pub fn accuracy(&self, rows: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::Data("no rows to score".into()));
        }
        let pred = self.predict(rows)?;
        Ok(pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / rows.len() as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = ProbeMeta {
            standardizer: self.standardizer.clone(),
            num_classes: self.num_classes,
            classes: self.classes.clone(),
        };
        io::encode(&self.params, &serde_json::to_string(&meta).expect("meta serializes"))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, meta) = io::decode(bytes)?;
        let meta: ProbeMeta = serde_json::from_str(&meta).map_err(|e| Error::Format(format!("not a probe model: {e}")))?;
        let net = probe_network(meta.standardizer.dim(), meta.num_classes);
        for (name, t) in net.init_params(0)?.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::Shape(format!("probe parameter '{name}' has the wrong shape")));
            }
        }
        Ok(LinearProbe {
            standardizer: meta.standardizer,
            num_classes: meta.num_classes,
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

/// Fit a class-weighted linear probe on arbitrary feature rows.
pub fn train_probe(rows: &[Vec<f64>], labels: &[usize], k: usize, cfg: &ProbeConfig) -> Result<LinearProbe> {
    if rows.len() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    if k < 2 {
        return Err(Error::Config("a probe needs at least 2 classes".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let standardizer = Standardizer::fit(rows)?;
    let dim = standardizer.dim();
    let mut counts = vec![0usize; k];
    let mut inputs = Vec::with_capacity(rows.len() * dim);
    for (r, &y) in rows.iter().zip(labels) {
        if y >= k {
            return Err(Error::Data(format!("label {y} out of range for {k} classes")));
        }
        counts[y] += 1;
        inputs.extend(standardizer.apply(r)?);
    }
    let weights = class_weights(&counts, cfg.imbalance_cap)?;
    let net = probe_network(dim, k);
    let mut params = net.init_params(cfg.seed)?;
    let budget = FitBudget {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.adam,
        seed: cfg.seed,
    };
    fit_classifier(&net, &mut params, &inputs, dim, labels, &weights, budget)?;
    Ok(LinearProbe {
        standardizer,
        num_classes: k,
        classes: (0..k).map(|i| i.to_string()).collect(),
        net,
        params,
    })
}

/// The benchmark classifier: a linear probe on the eight statistics.
pub fn train_baseline(
    features: &[StatFeatures],
    labels: &[usize],
    classes: &[String],
    cfg: &ProbeConfig,
) -> Result<LinearProbe> {
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.to_array().to_vec()).collect();
    let mut probe = train_probe(&rows, labels, classes.len(), cfg)?;
    probe.classes = classes.to_vec();
    Ok(probe)
}
