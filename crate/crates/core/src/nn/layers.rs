use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, Float, ParamStore, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Output length `ceil(len / stride)`, zero padding split left/right.
    Same,
    /// No padding.
    Valid,
}

/// One layer of a feed-forward stack.
///
/// Sequence tensors are channels-last: `[batch, length, channels]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Dense {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    Relu,
    #[serde(rename = "maxpool1d")]
    MaxPool1d { size: usize },
    Flatten,
    Softmax,
}

impl LayerSpec {
    fn label(&self) -> String {
        match self {
            LayerSpec::Conv1d { name, .. } => format!("conv1d '{name}'"),
            LayerSpec::Dense { name, .. } => format!("dense '{name}'"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::MaxPool1d { .. } => "maxpool1d".into(),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Softmax => "softmax".into(),
        }
    }

    /// (fan_in, fan_out, weight shape, bias len) for parametric layers.
    fn param_layout(&self) -> Option<(&str, usize, usize, Vec<usize>, usize)> {
        match self {
            LayerSpec::Conv1d {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                name,
                kernel * in_channels,
                kernel * out_channels,
                vec![*kernel, *in_channels, *out_channels],
                *out_channels,
            )),
            LayerSpec::Dense {
                name,
                inputs,
                outputs,
            } => Some((name, *inputs, *outputs, vec![*inputs, *outputs], *outputs)),
            _ => None,
        }
    }
}

fn conv_geometry(len: usize, kernel: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out.saturating_sub(1)) * stride + kernel).saturating_sub(len);
            (out, total / 2)
        }
        Padding::Valid => {
            if len < kernel {
                (0, 0)
            } else {
                ((len - kernel) / stride + 1, 0)
            }
        }
    }
}

pub(crate) fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub(crate) fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

#[derive(Debug)]
enum Record {
    Conv {
        cols: Vec<Float>,
        in_shape: Vec<usize>,
        out_len: usize,
        pad_left: usize,
    },
    Dense {
        input: Vec<Float>,
        batch: usize,
    },
    Relu {
        mask: Vec<bool>,
    },
    MaxPool {
        argmax: Vec<u32>,
        in_shape: Vec<usize>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
    Softmax {
        output: Vec<Float>,
        width: usize,
    },
}

/// Activations recorded by [`Network::forward`], consumed by one backward pass.
#[derive(Debug)]
pub struct Tape {
    records: Vec<Record>,
    out_shape: Vec<usize>,
    consumed: bool,
}

impl Tape {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

/// A feed-forward stack of [`LayerSpec`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Network { layers }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output shape for a given input shape, or the first layer that rejects it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer_output_shape(layer, &shape).map_err(|msg| {
                Error::Shape(format!("layer {i} ({}): {msg}", layer.label()))
            })?;
        }
        Ok(shape)
    }

    /// Glorot-uniform weights, zero biases, drawn in layer order from `seed`.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = crate::rng::stream(seed, 0);
        let mut store = ParamStore::new(seed);
        for layer in &self.layers {
            if let Some((name, fan_in, fan_out, wshape, blen)) = layer.param_layout() {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n: usize = wshape.iter().product();
                let w: Vec<Float> = (0..n)
                    .map(|_| ((2.0 * rng.random::<f64>() - 1.0) * bound) as Float)
                    .collect();
                store.insert(weight_name(name), Tensor::new(wshape, w)?)?;
                store.insert(bias_name(name), Tensor::zeros(vec![blen]))?;
            }
        }
        Ok(store)
    }

    /// Forward pass recording a tape for [`Network::backward`].
    pub fn forward(&self, params: &ParamStore, x: &Tensor) -> Result<(Tensor, Tape)> {
        let (out, records) = self.run(params, x, true)?;
        let out_shape = out.shape().to_vec();
        Ok((
            out,
            Tape {
                records,
                out_shape,
                consumed: false,
            },
        ))
    }

    /// Forward pass without a tape. Bit-identical to [`Network::forward`].
    pub fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(params, x, false)?.0)
    }

    fn run(&self, params: &ParamStore, x: &Tensor, record: bool) -> Result<(Tensor, Vec<Record>)> {
        self.output_shape(x.shape())?;
        let mut cur = Tensor::new(x.shape().to_vec(), x.data().to_vec())?;
        let mut records = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        for layer in &self.layers {
            let (next, rec) = forward_layer(layer, params, cur, record)?;
            if let Some(r) = rec {
                records.push(r);
            }
            cur = next;
        }
        Ok((cur, records))
    }

    /// Back-propagate `upstream` (d loss / d output) through the tape.
    ///
    /// Parameter gradients are accumulated into `params`; the gradient with
    /// respect to the network input is returned. A tape can be used once.
    pub fn backward(&self, tape: &mut Tape, params: &mut ParamStore, upstream: &Tensor) -> Result<Tensor> {
        if tape.consumed {
            return Err(Error::Config(
                "backward called twice on the same tape".into(),
            ));
        }
        if tape.records.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "tape has {} records but network has {} layers",
                tape.records.len(),
                self.layers.len()
            )));
        }
        if upstream.shape() != tape.out_shape.as_slice() {
            return Err(Error::Shape(format!(
                "upstream gradient shape {:?} does not match output {:?}",
                upstream.shape(),
                tape.out_shape
            )));
        }
        tape.consumed = true;
        let mut grad = upstream.data().to_vec();
        let mut shape = tape.out_shape.clone();
        for (layer, rec) in self.layers.iter().zip(tape.records.iter()).rev() {
            let (g, s) = backward_layer(layer, rec, params, grad, &shape)?;
            grad = g;
            shape = s;
        }
        Tensor::new(shape, grad)
    }
}

fn layer_output_shape(layer: &LayerSpec, s: &[usize]) -> std::result::Result<Vec<usize>, String> {
    match layer {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            ..
        } => {
            if s.len() != 3 || s[2] != *in_channels {
                return Err(format!("expected [N, L, {in_channels}], got {s:?}"));
            }
            if *kernel == 0 || *stride == 0 {
                return Err("kernel and stride must be positive".into());
            }
            let (out, _) = conv_geometry(s[1], *kernel, *stride, *padding);
            if out == 0 {
                return Err(format!("sequence of length {} collapses to 0", s[1]));
            }
            Ok(vec![s[0], out, *out_channels])
        }
        LayerSpec::Dense { inputs, outputs, .. } => {
            if s.len() != 2 || s[1] != *inputs {
                return Err(format!("expected [N, {inputs}], got {s:?}"));
            }
            Ok(vec![s[0], *outputs])
        }
        LayerSpec::Relu => Ok(s.to_vec()),
        LayerSpec::MaxPool1d { size } => {
            if s.len() != 3 {
                return Err(format!("expected [N, L, C], got {s:?}"));
            }
            if *size == 0 {
                return Err("pool size must be positive".into());
            }
            let out = s[1] / size;
            if out == 0 {
                return Err(format!("sequence of length {} collapses to 0", s[1]));
            }
            Ok(vec![s[0], out, s[2]])
        }
        LayerSpec::Flatten => {
            if s.is_empty() {
                return Err("cannot flatten a scalar".into());
            }
            Ok(vec![s[0], s[1..].iter().product()])
        }
        LayerSpec::Softmax => {
            if s.is_empty() {
                return Err("softmax needs at least one axis".into());
            }
            Ok(s.to_vec())
        }
    }
}

fn forward_layer(
    layer: &LayerSpec,
    params: &ParamStore,
    x: Tensor,
    record: bool,
) -> Result<(Tensor, Option<Record>)> {
    match layer {
        LayerSpec::Conv1d {
            name,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let (n, len, cin) = (x.shape()[0], x.shape()[1], *in_channels);
            let (out_len, pad_left) = conv_geometry(len, *kernel, *stride, *padding);
            let cols = im2col(x.data(), n, len, cin, *kernel, *stride, out_len, pad_left);
            let w = params.get(&weight_name(name))?;
            let b = params.get(&bias_name(name))?;
            let rows = n * out_len;
            let mut out = vec![0.0; rows * out_channels];
            gemm(rows, kernel * cin, *out_channels, &cols, false, w.data(), false, &mut out, false);
            add_bias(&mut out, b.data());
            let rec = record.then(|| Record::Conv {
                cols,
                in_shape: x.shape().to_vec(),
                out_len,
                pad_left,
            });
            Ok((Tensor::new(vec![n, out_len, *out_channels], out)?, rec))
        }
        LayerSpec::Dense { name, outputs, .. } => {
            let (n, din) = (x.shape()[0], x.shape()[1]);
            let w = params.get(&weight_name(name))?;
            let b = params.get(&bias_name(name))?;
            let mut out = vec![0.0; n * outputs];
            gemm(n, din, *outputs, x.data(), false, w.data(), false, &mut out, false);
            add_bias(&mut out, b.data());
            let out = Tensor::new(vec![n, *outputs], out)?;
            let rec = record.then(|| Record::Dense {
                input: x.into_data(),
                batch: n,
            });
            Ok((out, rec))
        }
        LayerSpec::Relu => {
            let mut x = x;
            let mask = if record {
                x.data().iter().map(|&v| v > 0.0).collect()
            } else {
                Vec::new()
            };
            x.data_mut().iter_mut().for_each(|v| {
                if *v <= 0.0 {
                    *v = 0.0
                }
            });
            Ok((x, record.then_some(Record::Relu { mask })))
        }
        LayerSpec::MaxPool1d { size } => {
            let (n, len, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let out_len = len / size;
            let data = x.data();
            let mut out = vec![0.0; n * out_len * c];
            let mut argmax = vec![0u32; if record { out.len() } else { 0 }];
            for b in 0..n {
                for p in 0..out_len {
                    for ch in 0..c {
                        let mut best_idx = (b * len + p * size) * c + ch;
                        let mut best = data[best_idx];
                        for q in 1..*size {
                            let idx = (b * len + p * size + q) * c + ch;
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                        let o = (b * out_len + p) * c + ch;
                        out[o] = best;
                        if record {
                            argmax[o] = best_idx as u32;
                        }
                    }
                }
            }
            let rec = record.then(|| Record::MaxPool {
                argmax,
                in_shape: x.shape().to_vec(),
            });
            Ok((Tensor::new(vec![n, out_len, c], out)?, rec))
        }
        LayerSpec::Flatten => {
            let in_shape = x.shape().to_vec();
            let n = in_shape[0];
            let rest = in_shape[1..].iter().product();
            let mut x = x;
            x.set_shape_unchecked(vec![n, rest]);
            Ok((x, record.then_some(Record::Flatten { in_shape })))
        }
        LayerSpec::Softmax => {
            let width = *x.shape().last().unwrap_or(&1);
            let mut x = x;
            if width > 0 {
                for row in x.data_mut().chunks_mut(width) {
                    softmax_in_place(row);
                }
            }
            let rec = record.then(|| Record::Softmax {
                output: x.data().to_vec(),
                width,
            });
            Ok((x, rec))
        }
    }
}

fn backward_layer(
    layer: &LayerSpec,
    rec: &Record,
    params: &mut ParamStore,
    grad: Vec<Float>,
    out_shape: &[usize],
) -> Result<(Vec<Float>, Vec<usize>)> {
    match (layer, rec) {
        (
            LayerSpec::Conv1d {
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            },
            Record::Conv {
                cols,
                in_shape,
                out_len,
                pad_left,
            },
        ) => {
            let (n, len, cin, cout) = (in_shape[0], in_shape[1], *in_channels, *out_channels);
            let rows = n * out_len;
            let kc = kernel * cin;
            let mut dw = vec![0.0; kc * cout];
            gemm(kc, rows, cout, cols, true, &grad, false, &mut dw, false);
            params.accumulate_grad(&weight_name(name), &dw)?;
            params.accumulate_grad(&bias_name(name), &column_sums(&grad, cout))?;
            let w = params.get(&weight_name(name))?;
            let mut dcols = vec![0.0; rows * kc];
            gemm(rows, cout, kc, &grad, false, w.data(), true, &mut dcols, false);
            let dx = col2im(&dcols, n, len, cin, *kernel, *stride, *out_len, *pad_left);
            Ok((dx, in_shape.clone()))
        }
        (LayerSpec::Dense { name, inputs, outputs }, Record::Dense { input, batch }) => {
            let mut dw = vec![0.0; inputs * outputs];
            gemm(*inputs, *batch, *outputs, input, true, &grad, false, &mut dw, false);
            params.accumulate_grad(&weight_name(name), &dw)?;
            params.accumulate_grad(&bias_name(name), &column_sums(&grad, *outputs))?;
            let w = params.get(&weight_name(name))?;
            let mut dx = vec![0.0; batch * inputs];
            gemm(*batch, *outputs, *inputs, &grad, false, w.data(), true, &mut dx, false);
            Ok((dx, vec![*batch, *inputs]))
        }
        (LayerSpec::Relu, Record::Relu { mask }) => {
            let mut grad = grad;
            grad.iter_mut().zip(mask).for_each(|(g, &m)| {
                if !m {
                    *g = 0.0
                }
            });
            Ok((grad, out_shape.to_vec()))
        }
        (LayerSpec::MaxPool1d { .. }, Record::MaxPool { argmax, in_shape }) => {
            let mut dx = vec![0.0; in_shape.iter().product()];
            for (g, &idx) in grad.iter().zip(argmax) {
                dx[idx as usize] += *g;
            }
            Ok((dx, in_shape.clone()))
        }
        (LayerSpec::Flatten, Record::Flatten { in_shape }) => Ok((grad, in_shape.clone())),
        (LayerSpec::Softmax, Record::Softmax { output, width }) => {
            let mut dx = grad;
            if *width > 0 {
                for (g, y) in dx.chunks_mut(*width).zip(output.chunks(*width)) {
                    let dot: Float = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    g.iter_mut().zip(y).for_each(|(gi, yi)| *gi = yi * (*gi - dot));
                }
            }
            Ok((dx, out_shape.to_vec()))
        }
        _ => Err(Error::Config(format!(
            "tape record does not match layer {}",
            layer.label()
        ))),
    }
}

fn add_bias(out: &mut [Float], bias: &[Float]) {
    for row in out.chunks_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(o, b)| *o += *b);
    }
}

fn column_sums(m: &[Float], width: usize) -> Vec<Float> {
    let mut s = vec![0.0; width];
    for row in m.chunks(width) {
        s.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
    }
    s
}

pub(crate) fn softmax_in_place(row: &mut [Float]) {
    let max = row.iter().copied().fold(Float::NEG_INFINITY, Float::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[Float],
    n: usize,
    len: usize,
    cin: usize,
    kernel: usize,
    stride: usize,
    out_len: usize,
    pad_left: usize,
) -> Vec<Float> {
    let kc = kernel * cin;
    let mut cols = vec![0.0; n * out_len * kc];
    for b in 0..n {
        for p in 0..out_len {
            let row = &mut cols[(b * out_len + p) * kc..][..kc];
            let start = (p * stride) as isize - pad_left as isize;
            for k in 0..kernel {
                let src = start + k as isize;
                if src >= 0 && (src as usize) < len {
                    let off = (b * len + src as usize) * cin;
                    row[k * cin..(k + 1) * cin].copy_from_slice(&x[off..off + cin]);
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[Float],
    n: usize,
    len: usize,
    cin: usize,
    kernel: usize,
    stride: usize,
    out_len: usize,
    pad_left: usize,
) -> Vec<Float> {
    let kc = kernel * cin;
    let mut dx = vec![0.0; n * len * cin];
    for b in 0..n {
        for p in 0..out_len {
            let row = &cols[(b * out_len + p) * kc..][..kc];
            let start = (p * stride) as isize - pad_left as isize;
            for k in 0..kernel {
                let src = start + k as isize;
                if src >= 0 && (src as usize) < len {
                    let off = (b * len + src as usize) * cin;
                    dx[off..off + cin]
                        .iter_mut()
                        .zip(&row[k * cin..(k + 1) * cin])
                        .for_each(|(d, g)| *d += *g);
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(name: &str, i: usize, o: usize) -> LayerSpec {
        LayerSpec::Dense {
            name: name.into(),
            inputs: i,
            outputs: o,
        }
    }

    fn conv(cin: usize, cout: usize, kernel: usize, stride: usize, padding: Padding) -> LayerSpec {
        LayerSpec::Conv1d {
            name: "c".into(),
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            padding,
        }
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let net = Network::new(vec![dense("d", 3, 3)]);
        let mut p = net.init_params(1).unwrap();
        let eye: Vec<Float> = (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        *p.get_mut("d.weight").unwrap() = Tensor::new(vec![3, 3], eye).unwrap();
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        let y = net.infer(&p, &x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn relu_clamps_negatives() {
        let net = Network::new(vec![LayerSpec::Relu]);
        let p = ParamStore::new(0);
        let x = Tensor::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(net.infer(&p, &x).unwrap().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn unit_kernel_conv_scales() {
        let net = Network::new(vec![conv(1, 1, 1, 1, Padding::Same)]);
        let mut p = net.init_params(3).unwrap();
        p.get_mut("c.weight").unwrap().data_mut()[0] = 2.0;
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, -1.0, 0.5, 3.0]).unwrap();
        let y = net.infer(&p, &x).unwrap();
        assert_eq!(y.data(), &[2.0, -2.0, 1.0, 6.0]);
    }

    #[test]
    fn dense_bias_grad_is_ones_for_sum_loss() {
        let net = Network::new(vec![dense("d", 4, 3)]);
        let mut p = net.init_params(5).unwrap();
        let x = Tensor::new(vec![1, 4], vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let (y, mut tape) = net.forward(&p, &x).unwrap();
        let up = Tensor::new(y.shape().to_vec(), vec![1.0; y.len()]).unwrap();
        net.backward(&mut tape, &mut p, &up).unwrap();
        assert_eq!(p.get("d.bias").unwrap().grad().unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let net = Network::new(vec![
            conv(2, 3, 3, 1, Padding::Same),
            LayerSpec::Relu,
            LayerSpec::MaxPool1d { size: 2 },
            LayerSpec::Flatten,
            dense("d", 9, 2),
        ]);
        let mut p = net.init_params(9).unwrap();
        let x = Tensor::new(vec![2, 6, 2], (0..24).map(|i| (i as Float).sin()).collect()).unwrap();
        let (y, mut tape) = net.forward(&p, &x).unwrap();
        let dx = net
            .backward(&mut tape, &mut p, &Tensor::zeros(y.shape().to_vec()))
            .unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        for (_, t) in p.iter() {
            assert!(t.grad().unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn second_backward_is_rejected() {
        let net = Network::new(vec![dense("d", 2, 2)]);
        let mut p = net.init_params(0).unwrap();
        let x = Tensor::zeros(vec![1, 2]);
        let (y, mut tape) = net.forward(&p, &x).unwrap();
        let up = Tensor::zeros(y.shape().to_vec());
        net.backward(&mut tape, &mut p, &up).unwrap();
        assert!(net.backward(&mut tape, &mut p, &up).is_err());
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let net = Network::new(vec![dense("first", 2, 3), dense("second", 4, 1)]);
        let p = net.init_params(0).unwrap();
        let err = net.infer(&p, &Tensor::zeros(vec![1, 2])).unwrap_err();
        assert!(err.to_string().contains("second"), "{err}");
    }

    #[test]
    fn glorot_bound_and_zero_bias() {
        let net = Network::new(vec![dense("d", 4, 4)]);
        let p = net.init_params(11).unwrap();
        let bound = (6.0f64 / 8.0).sqrt() as Float;
        let w = p.get("d.weight").unwrap();
        assert_eq!(w.len(), 16);
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        assert!(p.get("d.bias").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(net.init_params(11).unwrap(), p);
        assert_ne!(net.init_params(12).unwrap(), p);
    }

    #[test]
    fn same_padding_geometry() {
        assert_eq!(conv_geometry(300, 5, 1, Padding::Same), (300, 2));
        assert_eq!(conv_geometry(10, 4, 2, Padding::Same), (5, 1));
        assert_eq!(conv_geometry(10, 3, 1, Padding::Valid), (8, 0));
        assert_eq!(conv_geometry(2, 3, 1, Padding::Valid), (0, 0));
    }

    #[test]
    fn softmax_rows_sum_to_one_for_extreme_logits() {
        let mut row: Vec<Float> = vec![-100.0, 100.0, 0.0, 37.5];
        softmax_in_place(&mut row);
        let s: Float = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|v| v.is_finite()));
    }
}
