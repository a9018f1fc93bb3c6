//! Convolutional window encoder, pair projector and contrastive pre-training.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::ingest::Window;
use crate::nn::loss::weighted_binary_softmax_xent;
use crate::nn::{gemm, io, Adam, AdamConfig, Float, LayerSpec, Network, Padding, ParamStore, Tensor};
use crate::pairing::{build_pair_batch, CorpusIndex, PairBatch, PairPool, PairingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub kernel: usize,
    pub channels: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub window_len: usize,
    pub input_channels: usize,
    /// One entry per conv → ReLU → max-pool block.
    pub blocks: Vec<ConvBlock>,
    pub embedding_dim: usize,
    pub projector_hidden: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let block = |channels| ConvBlock { kernel: 5, channels, pool: 2 };
        EncoderConfig {
            window_len: 300,
            input_channels: 3,
            blocks: vec![block(32), block(64), block(64), block(128), block(128)],
            embedding_dim: 256,
            projector_hidden: 256,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Default tower truncated (or extended with 128-channel blocks) to `c` blocks.
    pub fn with_blocks(c: usize) -> Self {
        let mut cfg = EncoderConfig::default();
        cfg.blocks.resize(c, ConvBlock { kernel: 5, channels: 128, pool: 2 });
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.embedding_dim == 0 || self.projector_hidden == 0 {
            return Err(Error::Config("encoder needs >= 1 block and positive widths".into()));
        }
        encoder_network(self).output_shape(&[1, self.window_len, self.input_channels])?;
        Ok(())
    }
}

fn encoder_network(cfg: &EncoderConfig) -> Network {
    let mut layers = Vec::new();
    let mut cin = cfg.input_channels;
    let mut len = cfg.window_len;
    for (i, b) in cfg.blocks.iter().enumerate() {
        layers.push(LayerSpec::Conv1d {
            name: format!("enc.conv{i}"),
            in_channels: cin,
            out_channels: b.channels,
            kernel: b.kernel,
            stride: 1,
            padding: Padding::Same,
        });
        layers.push(LayerSpec::Relu);
        if b.pool > 1 {
            layers.push(LayerSpec::MaxPool1d { size: b.pool });
            len /= b.pool;
        }
        cin = b.channels;
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense {
        name: "enc.embed".into(),
        inputs: len * cin,
        outputs: cfg.embedding_dim,
    });
    Network::new(layers)
}

/// Conv tower → flatten → dense embedding, with freshly initialized parameters.
pub fn build_encoder(cfg: &EncoderConfig) -> Result<(Network, ParamStore)> {
    cfg.validate()?;
    let net = encoder_network(cfg);
    let params = net.init_params(cfg.seed)?;
    Ok((net, params))
}

pub const PROJ_HIDDEN: &str = "proj.hidden";
pub const PROJ_OUT: &str = "proj.out";

/// Two-layer perceptron scoring a concatenated embedding pair as
/// not coincident (class 0) or coincident (class 1).
pub fn build_projector(cfg: &EncoderConfig) -> Result<(Network, ParamStore)> {
    cfg.validate()?;
    let net = Network::new(vec![
        LayerSpec::Dense {
            name: PROJ_HIDDEN.into(),
            inputs: 2 * cfg.embedding_dim,
            outputs: cfg.projector_hidden,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            name: PROJ_OUT.into(),
            inputs: cfg.projector_hidden,
            outputs: 2,
        },
    ]);
    let params = net.init_params(cfg.seed.wrapping_add(1))?;
    Ok((net, params))
}

/// Stack windows into an `[n, len, 3]` tensor.
pub fn windows_to_tensor(windows: &[&Window], window_len: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(windows.len() * window_len * 3);
    for w in windows {
        if w.samples.len() != window_len * 3 {
            return Err(Error::Data(format!(
                "window of subject {} at t={} has {} samples, encoder expects {window_len}",
                w.subject_id,
                w.start_time,
                w.len()
            )));
        }
        data.extend(w.samples.iter().map(|&v| v as Float));
    }
    Tensor::new(vec![windows.len(), window_len, 3], data)
}

/// Activations kept by [`pairwise_forward`] for the backward pass.
pub struct PairwiseCache {
    n: usize,
    hidden: Vec<Float>,
    embeddings: Vec<Float>,
}

/// Score every ordered pair `(i, j)` of `n` embeddings with the projector.
///
/// Row `i·n + j` of the returned `[n², 2]` logits scores `[e_i ; e_j]`. The
/// first projector layer is split into the halves acting on `e_i` and `e_j`,
/// so it costs two `n × d` products instead of one `n² × 2d` product.
pub fn pairwise_forward(params: &ParamStore, emb: &Tensor) -> Result<(Tensor, PairwiseCache)> {
    let (n, d) = (emb.shape()[0], emb.shape()[1]);
    let w0 = params.get(&format!("{PROJ_HIDDEN}.weight"))?;
    let b0 = params.get(&format!("{PROJ_HIDDEN}.bias"))?;
    let w1 = params.get(&format!("{PROJ_OUT}.weight"))?;
    let b1 = params.get(&format!("{PROJ_OUT}.bias"))?;
    if w0.shape() != [2 * d, b0.len()] || w1.shape() != [b0.len(), 2] {
        return Err(Error::Shape(format!(
            "projector expects [{}, h] and [h, 2] weights for {d}-d embeddings, got {:?} and {:?}",
            2 * d,
            w0.shape(),
            w1.shape()
        )));
    }
    let h = b0.len();
    let (wa, wb) = w0.data().split_at(d * h);
    let mut u = vec![0.0; n * h];
    let mut v = vec![0.0; n * h];
    gemm(n, d, h, emb.data(), false, wa, false, &mut u, false);
    gemm(n, d, h, emb.data(), false, wb, false, &mut v, false);
    let mut hidden = vec![0.0 as Float; n * n * h];
    for i in 0..n {
        let ui = &u[i * h..(i + 1) * h];
        for j in 0..n {
            let vj = &v[j * h..(j + 1) * h];
            let row = &mut hidden[(i * n + j) * h..][..h];
            for k in 0..h {
                let z = ui[k] + vj[k] + b0.data()[k];
                row[k] = if z > 0.0 { z } else { 0.0 };
            }
        }
    }
    let mut logits = vec![0.0; n * n * 2];
    gemm(n * n, h, 2, &hidden, false, w1.data(), false, &mut logits, false);
    for row in logits.chunks_mut(2) {
        row[0] += b1.data()[0];
        row[1] += b1.data()[1];
    }
    Ok((
        Tensor::new(vec![n * n, 2], logits)?,
        PairwiseCache {
            n,
            hidden,
            embeddings: emb.data().to_vec(),
        },
    ))
}

/// Accumulate projector gradients and return d loss / d embeddings.
pub fn pairwise_backward(params: &mut ParamStore, cache: &PairwiseCache, dlogits: &Tensor) -> Result<Tensor> {
    let n = cache.n;
    let d = cache.embeddings.len() / n.max(1);
    let h = params.get(&format!("{PROJ_HIDDEN}.bias"))?.len();
    if dlogits.shape() != [n * n, 2] {
        return Err(Error::Shape(format!("expected [{}, 2] logit gradient, got {:?}", n * n, dlogits.shape())));
    }
    let g = dlogits.data();
    let mut dw1 = vec![0.0; h * 2];
    gemm(h, n * n, 2, &cache.hidden, true, g, false, &mut dw1, false);
    let mut db1 = [0.0 as Float; 2];
    for row in g.chunks(2) {
        db1[0] += row[0];
        db1[1] += row[1];
    }
    let w1 = params.get(&format!("{PROJ_OUT}.weight"))?.data().to_vec();
    let mut dpre = vec![0.0; n * n * h];
    gemm(n * n, 2, h, g, false, &w1, true, &mut dpre, false);
    for (dp, hv) in dpre.iter_mut().zip(&cache.hidden) {
        if *hv <= 0.0 {
            *dp = 0.0;
        }
    }
    let mut du = vec![0.0 as Float; n * h];
    let mut dv = vec![0.0 as Float; n * h];
    for i in 0..n {
        for j in 0..n {
            let row = &dpre[(i * n + j) * h..][..h];
            let dui = &mut du[i * h..(i + 1) * h];
            dui.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
            let dvj = &mut dv[j * h..(j + 1) * h];
            dvj.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
        }
    }
    let mut db0 = vec![0.0 as Float; h];
    for row in du.chunks(h) {
        db0.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
    }
    let mut dw0 = vec![0.0; 2 * d * h];
    {
        let (dwa, dwb) = dw0.split_at_mut(d * h);
        gemm(d, n, h, &cache.embeddings, true, &du, false, dwa, false);
        gemm(d, n, h, &cache.embeddings, true, &dv, false, dwb, false);
    }
    let w0 = params.get(&format!("{PROJ_HIDDEN}.weight"))?.data().to_vec();
    let (wa, wb) = w0.split_at(d * h);
    let mut de = vec![0.0; n * d];
    gemm(n, h, d, &du, false, wa, true, &mut de, false);
    gemm(n, h, d, &dv, false, wb, true, &mut de, true);
    params.accumulate_grad(&format!("{PROJ_OUT}.weight"), &dw1)?;
    params.accumulate_grad(&format!("{PROJ_OUT}.bias"), &db1)?;
    params.accumulate_grad(&format!("{PROJ_HIDDEN}.weight"), &dw0)?;
    params.accumulate_grad(&format!("{PROJ_HIDDEN}.bias"), &db0)?;
    Tensor::new(vec![n, d], de)
}

/// One embedding per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
        for (a, b) in self.0.iter().zip(&other.0) {
            dot += (*a as f64) * (*b as f64);
            na += (*a as f64).powi(2);
            nb += (*b as f64).powi(2);
        }
        dot / (na.sqrt() * nb.sqrt()).max(f64::MIN_POSITIVE)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename = "encoder")]
struct EncoderMeta {
    config: EncoderConfig,
}

/// A trained encoder. Parameters are immutable; embedding is read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoder {
    config: EncoderConfig,
    net: Network,
    params: ParamStore,
}

/// Windows per forward pass when embedding.
const EMBED_BATCH: usize = 64;

impl FrozenEncoder {
    pub fn new(config: EncoderConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let net = encoder_network(&config);
        let reference = net.init_params(0)?;
        for (name, t) in reference.iter() {
            let p = params.get(name)?;
            if p.shape() != t.shape() {
                return Err(Error::Shape(format!("parameter '{name}' has shape {:?}, expected {:?}", p.shape(), t.shape())));
            }
        }
        Ok(FrozenEncoder { config, net, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    pub fn embed(&self, windows: &[Window]) -> Result<Vec<EmbeddingVector>> {
        let refs: Vec<&Window> = windows.iter().collect();
        self.embed_refs(&refs)
    }

    pub fn embed_refs(&self, windows: &[&Window]) -> Result<Vec<EmbeddingVector>> {
        let d = self.config.embedding_dim;
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(EMBED_BATCH) {
            let x = windows_to_tensor(chunk, self.config.window_len)?;
            let y = self.net.infer(&self.params, &x)?;
            out.extend(y.data().chunks(d).map(|r| EmbeddingVector(r.iter().map(|&v| v as f32).collect())));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_string(&EncoderMeta { config: self.config.clone() }).expect("meta serializes");
        io::encode(&self.params, &meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, meta) = io::decode(bytes)?;
        let meta: EncoderMeta =
            serde_json::from_str(&meta).map_err(|e| Error::Format(format!("not an encoder model: {e}")))?;
        FrozenEncoder::new(meta.config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    pub log_every: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 2000,
            adam: AdamConfig::default(),
            log_every: 100,
            checkpoint_every: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    /// Mean loss over the steps since the previous entry.
    pub loss: f64,
    pub wall_ms: u128,
}

pub struct PretrainOutput {
    pub encoder: FrozenEncoder,
    /// Per-step loss.
    pub losses: Vec<f64>,
    pub log: Vec<TrainLogEntry>,
}

/// Optional side outputs of [`pretrain`].
#[derive(Debug, Default, Clone)]
pub struct PretrainSinks {
    pub checkpoint: Option<PathBuf>,
    /// Record the pairs of the first this-many batches.
    pub dump_batches: usize,
}

/// Loss and gradients of one contrastive step; gradients accumulate.
pub fn contrastive_step(
    encoder: &Network,
    enc_params: &mut ParamStore,
    projector: &mut ParamStore,
    batch: &PairBatch,
    window_len: usize,
) -> Result<f64> {
    let refs: Vec<&Window> = batch.windows.iter().collect();
    let x = windows_to_tensor(&refs, window_len)?;
    let (emb, mut tape) = encoder.forward(enc_params, &x)?;
    let (logits, cache) = pairwise_forward(projector, &emb)?;
    let out = weighted_binary_softmax_xent(&logits, &batch.labels, &batch.weights)?;
    if !out.loss.is_finite() {
        return Ok(out.loss);
    }
    let demb = pairwise_backward(projector, &cache, &out.grad)?;
    encoder.backward(&mut tape, enc_params, &demb)?;
    Ok(out.loss)
}

/// Contrastive pre-training; returns the frozen encoder and the loss trace.
pub fn pretrain(
    index: &CorpusIndex,
    enc_cfg: &EncoderConfig,
    pairing: &PairingConfig,
    aug: &AugmentConfig,
    train: &PretrainConfig,
    sinks: &PretrainSinks,
) -> Result<(PretrainOutput, Vec<PairBatch>)> {
    pairing.validate()?;
    let (net, mut enc_params) = build_encoder(enc_cfg)?;
    let (_, mut proj_params) = build_projector(enc_cfg)?;
    let mut enc_opt = Adam::new(train.adam);
    let mut proj_opt = Adam::new(train.adam);
    let pool = match pairing.materialize_pairs {
        Some(n) => Some(PairPool::materialize(index, pairing, aug, n, &mut crate::rng::stream(train.seed, 0))?),
        None => None,
    };
    let started = Instant::now();
    let mut losses = Vec::with_capacity(train.steps);
    let mut log = Vec::new();
    let mut dumped = Vec::new();
    let mut last_checkpoint: Option<usize> = None;
    for step in 0..train.steps {
        let mut rng = crate::rng::stream(train.seed, step as u64 + 1);
        let batch = match &pool {
            Some(p) => p.batch(pairing.batch_pairs, &mut rng)?,
            None => build_pair_batch(index, pairing, aug, &mut rng)?,
        };
        let loss = contrastive_step(&net, &mut enc_params, &mut proj_params, &batch, enc_cfg.window_len)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss became {loss} at step {step}; {}",
                match (last_checkpoint, &sinks.checkpoint) {
                    (Some(s), Some(p)) => format!("checkpoint from step {s} kept at {}", p.display()),
                    _ => "no checkpoint written".into(),
                }
            )));
        }
        enc_opt.step(&mut enc_params)?;
        proj_opt.step(&mut proj_params)?;
        losses.push(loss);
        if dumped.len() < sinks.dump_batches {
            dumped.push(batch);
        }
        let done = step + 1;
        if train.log_every > 0 && (done % train.log_every == 0 || done == train.steps) {
            let from = log.last().map_or(0, |e: &TrainLogEntry| e.step);
            let window = &losses[from..done];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            log::info!("pretrain step {done}: loss {mean:.5}");
            log.push(TrainLogEntry {
                step: done,
                loss: mean,
                wall_ms: started.elapsed().as_millis(),
            });
        }
        if let Some(path) = &sinks.checkpoint {
            if train.checkpoint_every > 0 && done % train.checkpoint_every == 0 {
                FrozenEncoder::new(enc_cfg.clone(), enc_params.clone())?.save(path)?;
                last_checkpoint = Some(done);
            }
        }
    }
    let encoder = FrozenEncoder::new(enc_cfg.clone(), enc_params)?;
    Ok((PretrainOutput { encoder, losses, log }, dumped))
}

/// Training log as CSV (`step,loss,wall_ms`).
pub fn log_to_csv(log: &[TrainLogEntry]) -> String {
    let mut s = String::from("step,loss,wall_ms\n");
    for e in log {
        s.push_str(&format!("{},{},{}\n", e.step, e.loss, e.wall_ms));
    }
    s
}
