//! Weighted softmax cross-entropy losses.

use super::{Float, Tensor};
use crate::{Error, Result};

/// Scalar loss and its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Tensor,
}

/// `Σᵢ wᵢ·(−log softmax(zᵢ)[yᵢ]) / Σᵢ wᵢ` over rows of an `[N, K]` logit tensor.
///
/// Evaluated in f64 with the row maximum subtracted, so logits of any
/// magnitude stay finite.
pub fn weighted_softmax_xent(logits: &Tensor, labels: &[usize], weights: &[f64]) -> Result<LossOutput> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!("logits must be [N, K], got {shape:?}")));
    }
    let (n, k) = (shape[0], shape[1]);
    if labels.len() != n || weights.len() != n {
        return Err(Error::Shape(format!(
            "{n} logit rows but {} labels and {} weights",
            labels.len(),
            weights.len()
        )));
    }
    let mut total_w = 0.0f64;
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Numeric(format!("weight {i} is {w}; weights must be finite and >= 0")));
        }
        total_w += w;
    }
    if total_w == 0.0 {
        return Err(Error::Numeric("sum of loss weights is zero".into()));
    }
    let mut loss = 0.0f64;
    let mut grad = vec![0.0 as Float; n * k];
    let mut probs = vec![0.0f64; k];
    for (i, row) in logits.data().chunks(k.max(1)).enumerate().take(n) {
        let y = labels[i];
        if y >= k {
            return Err(Error::Data(format!("label {y} out of range for {k} classes")));
        }
        let (arg, max) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (j, &v)| {
                if (v as f64) > bv {
                    (j, v as f64)
                } else {
                    (bi, bv)
                }
            });
        if !max.is_finite() {
            return Err(Error::Numeric(format!("non-finite logits in row {i}")));
        }
        let mut rest = 0.0f64;
        for (j, &v) in row.iter().enumerate() {
            let e = (v as f64 - max).exp();
            probs[j] = e;
            if j != arg {
                rest += e;
            }
        }
        let log_norm = rest.ln_1p();
        let w = weights[i];
        loss += w * (log_norm - (row[y] as f64 - max));
        let scale = w / total_w;
        let denom = 1.0 + rest;
        for j in 0..k {
            let p = probs[j] / denom;
            let target = if j == y { 1.0 } else { 0.0 };
            grad[i * k + j] = (scale * (p - target)) as Float;
        }
    }
    Ok(LossOutput {
        loss: loss / total_w,
        grad: Tensor::new(vec![n, k], grad)?,
    })
}

/// Binary coincidence loss over `[N, 2]` logits with labels in {0, 1}.
pub fn weighted_binary_softmax_xent(logits: &Tensor, labels: &[u8], weights: &[f64]) -> Result<LossOutput> {
    if logits.shape().len() != 2 || logits.shape()[1] != 2 {
        return Err(Error::Shape(format!(
            "binary logits must be [N, 2], got {:?}",
            logits.shape()
        )));
    }
    let labels: Vec<usize> = labels
        .iter()
        .map(|&l| match l {
            0 | 1 => Ok(l as usize),
            _ => Err(Error::Data(format!("binary label {l} not in {{0, 1}}"))),
        })
        .collect::<Result<_>>()?;
    weighted_softmax_xent(logits, &labels, weights)
}

/// K-class cross-entropy with one weight per class applied to each example.
pub fn categorical_xent(logits: &Tensor, labels: &[usize], class_weights: &[f64]) -> Result<LossOutput> {
    let weights: Vec<f64> = labels
        .iter()
        .map(|&l| {
            class_weights
                .get(l)
                .copied()
                .ok_or_else(|| Error::Data(format!("label {l} has no class weight")))
        })
        .collect::<Result<_>>()?;
    weighted_softmax_xent(logits, labels, &weights)
}
