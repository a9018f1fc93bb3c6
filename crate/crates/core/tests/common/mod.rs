//! Finite-difference gradient checking shared by the integration tests.
//!
//! ReLU and max-pool make the losses piecewise smooth.
//!
//! Single layers are checked coordinate by coordinate through the library
//! forward pass; a difference quotient is only trusted when the activation
//! pattern (every ReLU sign and max-pool winner) at both ends of the step
//! matches the centre, otherwise the step is halved.
//!
//! Deep compositions have pre-activations within 1e-6 of a kink for almost
//! any input, and an f32 loss cannot resolve steps that small. They are
//! instead differentiated along the branch containing θ: ReLU masks and
//! max-pool winners are held at their values at θ, which makes the loss smooth
//! in every single-tensor perturbation. The analytic gradient at θ is exactly
//! the derivative of that branch.
//!
//! Numeric differences are compared with the analytic gradient dotted into
//! the perturbation actually realized in `Float`, so the rounding of `θ ± h·d`
//! does not count as gradient error.
#![allow(dead_code)]

use harssl::encoder::{
    build_encoder, build_projector, contrastive_step, pairwise_forward, EncoderConfig, PROJ_HIDDEN, PROJ_OUT,
};
use harssl::head::build_mlp;
use harssl::ingest::Window;
use harssl::nn::loss::{categorical_xent, weighted_binary_softmax_xent};
use harssl::nn::{Float, LayerSpec, Network, Padding, ParamStore, Tensor};
use harssl::pairing::{coincidence_matrices, PairBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "f64-check"))]
pub const TOLERANCE: f64 = 1e-3;
#[cfg(feature = "f64-check")]
pub const TOLERANCE: f64 = 1e-6;

#[cfg(not(feature = "f64-check"))]
const EPS: f64 = 1e-3;
#[cfg(feature = "f64-check")]
const EPS: f64 = 1e-6;

const MAX_HALVINGS: usize = 12;

/// Step along a unit direction for the branch-wise composition checks.
#[cfg(not(feature = "f64-check"))]
const BRANCH_STEP: f64 = 1e-2;
#[cfg(feature = "f64-check")]
const BRANCH_STEP: f64 = 1e-5;

/// Worst relative error over the checked quantities, and how many were
/// skipped because no step up to `EPS / 2^MAX_HALVINGS` avoided a kink.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheck {
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheck {
    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            worst: self.worst.max(other.worst),
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0) as Float).collect()).unwrap()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, 0 when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Output of `net` together with the sign of every ReLU input and the winning
/// offset of every max-pool window.
pub fn run_with_pattern(net: &Network, params: &ParamStore, x: &Tensor) -> (Tensor, Vec<u32>) {
    let mut cur = x.clone();
    let mut pattern = Vec::new();
    for spec in net.layers() {
        match spec {
            LayerSpec::Relu => pattern.extend(cur.data().iter().map(|&v| (v > 0.0) as u32)),
            LayerSpec::MaxPool1d { size } => pattern.extend(pool_winners(&cur, *size)),
            _ => {}
        }
        cur = Network::new(vec![spec.clone()]).infer(params, &cur).unwrap();
    }
    (cur, pattern)
}

fn pool_winners(x: &Tensor, size: usize) -> Vec<u32> {
    let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let d = x.data();
    let mut out = Vec::with_capacity(b * (t / size) * c);
    for bi in 0..b {
        for w in 0..t / size {
            for ch in 0..c {
                let at = |k: usize| d[(bi * t + w * size + k) * c + ch];
                out.push((0..size).fold(0, |m, k| if at(k) > at(m) { k } else { m }) as u32);
            }
        }
    }
    out
}

/// Like [`run_with_pattern`], but ReLU and max-pool follow `frozen` (recorded
/// at θ) instead of their inputs; parametric layers use the library.
pub fn run_on_branch(net: &Network, params: &ParamStore, x: &Tensor, frozen: &[u32]) -> Tensor {
    let mut cur = x.clone();
    let mut at = 0;
    for spec in net.layers() {
        cur = match spec {
            LayerSpec::Relu => {
                let mask = &frozen[at..at + cur.len()];
                at += cur.len();
                let data = cur.data().iter().zip(mask).map(|(&v, &m)| if m == 1 { v } else { 0.0 }).collect();
                Tensor::new(cur.shape().to_vec(), data).unwrap()
            }
            LayerSpec::MaxPool1d { size } => {
                let (b, t, c) = (cur.shape()[0], cur.shape()[1], cur.shape()[2]);
                let n = b * (t / size) * c;
                let winners = &frozen[at..at + n];
                at += n;
                let d = cur.data();
                let mut data = Vec::with_capacity(n);
                let mut idx = 0;
                for bi in 0..b {
                    for w in 0..t / size {
                        for ch in 0..c {
                            data.push(d[(bi * t + w * size + winners[idx] as usize) * c + ch]);
                            idx += 1;
                        }
                    }
                }
                Tensor::new(vec![b, t / size, c], data).unwrap()
            }
            _ => Network::new(vec![spec.clone()]).infer(params, &cur).unwrap(),
        };
    }
    assert_eq!(at, frozen.len(), "pattern does not fit the network");
    cur
}

/// `f(θ + h·d) − f(θ − h·d)` and the realized `θ₊ − θ₋`, for the largest
/// `h = EPS / 2^k` whose end points share the centre's activation pattern.
fn kink_free_difference<F>(f: &F, theta: &[Float], d: &[f64]) -> Option<(f64, Vec<f64>)>
where
    F: Fn(&[Float]) -> (f64, Vec<u32>),
{
    let (_, centre) = f(theta);
    let mut h = EPS;
    for _ in 0..=MAX_HALVINGS {
        let plus: Vec<Float> = theta.iter().zip(d).map(|(&t, &di)| t + (h * di) as Float).collect();
        let minus: Vec<Float> = theta.iter().zip(d).map(|(&t, &di)| t - (h * di) as Float).collect();
        let (fp, pp) = f(&plus);
        let (fm, pm) = f(&minus);
        if pp == centre && pm == centre {
            let step = plus.iter().zip(&minus).map(|(&a, &b)| a as f64 - b as f64).collect();
            return Some((fp - fm, step));
        }
        h /= 2.0;
    }
    None
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-coordinate check of one flat argument of `f` against `grad`.
fn check_coordinates<F>(f: F, theta: &[Float], grad: &[f64]) -> GradCheck
where
    F: Fn(&[Float]) -> (f64, Vec<u32>),
{
    let (mut ana, mut num) = (Vec::new(), Vec::new());
    let mut skipped = 0;
    for i in 0..theta.len() {
        let mut e = vec![0.0; theta.len()];
        e[i] = 1.0;
        match kink_free_difference(&f, theta, &e) {
            Some((df, step)) => {
                ana.push(grad[i]);
                num.push(df / step[i]);
            }
            None => skipped += 1,
        }
    }
    GradCheck { worst: rel_err(&ana, &num), checked: ana.len(), skipped }
}

fn with_tensor(params: &ParamStore, name: &str, values: &[Float]) -> ParamStore {
    let mut p = params.clone();
    p.get_mut(name).unwrap().data_mut().copy_from_slice(values);
    p
}

fn grad_of(grads: &ParamStore, name: &str) -> Vec<f64> {
    grads.get(name).unwrap().grad().unwrap().iter().map(|&v| v as f64).collect()
}

/// Every coordinate of every parameter and of the input of `net`, under
/// `L = Σ r·f(x)`.
pub fn check_layer_stack(net: &Network, input_shape: &[usize], seed: u64) -> GradCheck {
    let mut rng = rng(seed);
    let mut params = net.init_params(seed).unwrap();
    // Non-zero biases so bias gradients are exercised away from the origin.
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.1..0.1) as Float;
        }
    }
    let x = random_tensor(input_shape.to_vec(), &mut rng);
    let r = random_tensor(net.output_shape(input_shape).unwrap(), &mut rng);
    let loss = |p: &ParamStore, x: &Tensor| -> (f64, Vec<u32>) {
        let (y, pattern) = run_with_pattern(net, p, x);
        (dot(&y.data().iter().map(|&v| v as f64).collect::<Vec<_>>(), &r.data().iter().map(|&v| v as f64).collect::<Vec<_>>()), pattern)
    };
    let (_, mut tape) = net.forward(&params, &x).unwrap();
    let mut grads = params.clone();
    let dx = net.backward(&mut tape, &mut grads, &r).unwrap();

    let mut report = check_coordinates(
        |v| loss(&params, &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap()),
        x.data(),
        &dx.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
    );
    for (name, t) in params.iter() {
        let part = check_coordinates(|v| loss(&with_tensor(&params, name, v), &x), t.data(), &grad_of(&grads, name));
        report = report.merge(part);
    }
    report
}

/// Small networks covering every layer kind and padding/stride mode.
pub fn layer_cases() -> Vec<(&'static str, Network, Vec<usize>)> {
    let conv = |name: &str, cin, cout, kernel, stride, padding| LayerSpec::Conv1d {
        name: name.into(),
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        padding,
    };
    vec![
        ("dense", Network::new(vec![LayerSpec::Dense { name: "d".into(), inputs: 5, outputs: 4 }]), vec![3, 5]),
        ("conv1d same", Network::new(vec![conv("c", 3, 4, 5, 1, Padding::Same)]), vec![2, 12, 3]),
        ("conv1d valid stride 2", Network::new(vec![conv("c", 2, 3, 3, 2, Padding::Valid)]), vec![2, 11, 2]),
        ("conv1d same stride 2", Network::new(vec![conv("c", 2, 3, 4, 2, Padding::Same)]), vec![2, 9, 2]),
        ("relu", Network::new(vec![LayerSpec::Relu]), vec![4, 6]),
        ("maxpool1d", Network::new(vec![LayerSpec::MaxPool1d { size: 2 }]), vec![2, 9, 3]),
        ("flatten", Network::new(vec![LayerSpec::Flatten, LayerSpec::Dense { name: "d".into(), inputs: 12, outputs: 2 }]), vec![2, 4, 3]),
        ("softmax", Network::new(vec![LayerSpec::Softmax]), vec![3, 5]),
    ]
}

fn window(rng: &mut ChaCha8Rng, len: usize) -> Window {
    Window {
        subject_id: "g".into(),
        start_time: 0.0,
        samples: (0..len * 3).map(|_| rng.random_range(-1.5f32..1.5)).collect(),
        label: None,
    }
}

/// Unit direction mixing the analytic gradient with an independent random vector.
fn probe_direction(g: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z: Vec<f64> = g.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
    let d: Vec<f64> = g.iter().zip(&z).map(|(a, b)| a / gn.max(1e-30) + b / zn).collect();
    let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
    d.into_iter().map(|v| v / dn).collect()
}

/// One directional derivative per parameter tensor, of a loss that is smooth
/// in each tensor.
fn check_directions<F>(loss: F, params: &ParamStore, grads: &ParamStore, seed: u64) -> GradCheck
where
    F: Fn(&ParamStore) -> f64,
{
    let mut rng = rng(seed ^ 0xd1);
    let mut report = GradCheck::default();
    for (name, t) in params.iter() {
        let g = grad_of(grads, name);
        let d = probe_direction(&g, &mut rng);
        let plus: Vec<Float> = t.data().iter().zip(&d).map(|(&v, &di)| v + (BRANCH_STEP * di) as Float).collect();
        let minus: Vec<Float> = t.data().iter().zip(&d).map(|(&v, &di)| v - (BRANCH_STEP * di) as Float).collect();
        let step: Vec<f64> = plus.iter().zip(&minus).map(|(&a, &b)| a as f64 - b as f64).collect();
        let df = loss(&with_tensor(params, name, &plus)) - loss(&with_tensor(params, name, &minus));
        report.worst = report.worst.max(rel_err(&[dot(&g, &step)], &[df]));
        report.checked += 1;
    }
    report
}

/// Projector logits from the concatenated form `W₁ᵀ·relu(W₀ᵀ[e_i; e_j] + b₀) + b₁`
/// in f64, with the hidden mask taken from `frozen` when given. Returns the
/// logits and the mask used.
fn projector_branch(pp: &ParamStore, emb: &Tensor, frozen: Option<&[u32]>) -> (Tensor, Vec<u32>) {
    let (n, d) = (emb.shape()[0], emb.shape()[1]);
    let w0 = pp.get(&format!("{PROJ_HIDDEN}.weight")).unwrap().data();
    let b0 = pp.get(&format!("{PROJ_HIDDEN}.bias")).unwrap().data();
    let w1 = pp.get(&format!("{PROJ_OUT}.weight")).unwrap().data();
    let b1 = pp.get(&format!("{PROJ_OUT}.bias")).unwrap().data();
    let h = b0.len();
    let e = emb.data();
    let mut mask = Vec::with_capacity(n * n * h);
    let mut logits = Vec::with_capacity(n * n * 2);
    for i in 0..n {
        for j in 0..n {
            let concat: Vec<f64> = e[i * d..(i + 1) * d].iter().chain(&e[j * d..(j + 1) * d]).map(|&v| v as f64).collect();
            let mut out = [b1[0] as f64, b1[1] as f64];
            for k in 0..h {
                let z = b0[k] as f64 + concat.iter().enumerate().map(|(a, &c)| c * w0[a * h + k] as f64).sum::<f64>();
                let on = match frozen {
                    Some(f) => f[mask.len()],
                    None => (z > 0.0) as u32,
                };
                mask.push(on);
                if on == 1 {
                    out[0] += z * w1[k * 2] as f64;
                    out[1] += z * w1[k * 2 + 1] as f64;
                }
            }
            logits.extend(out.map(|v| v as Float));
        }
    }
    (Tensor::new(vec![n * n, 2], logits).unwrap(), mask)
}

/// Encoder tower plus pairwise projector under the contrastive loss.
pub fn check_encoder_projector(cfg: &EncoderConfig, b: usize, seed: u64) -> GradCheck {
    let mut rng = rng(seed);
    let cfg = EncoderConfig { seed, ..cfg.clone() };
    let (enc_net, enc_params) = build_encoder(&cfg).unwrap();
    let (_, proj_params) = build_projector(&cfg).unwrap();
    let windows: Vec<Window> = (0..2 * b).map(|_| window(&mut rng, cfg.window_len)).collect();
    let (labels, weights) = coincidence_matrices(b);
    let batch = PairBatch { b, windows, labels, weights, pairs: vec![] };

    let mut eg = enc_params.clone();
    let mut pg = proj_params.clone();
    contrastive_step(&enc_net, &mut eg, &mut pg, &batch, cfg.window_len).unwrap();

    let refs: Vec<&Window> = batch.windows.iter().collect();
    let x = harssl::encoder::windows_to_tensor(&refs, cfg.window_len).unwrap();
    let (emb, enc_pattern) = run_with_pattern(&enc_net, &enc_params, &x);
    let (library_logits, _) = pairwise_forward(&proj_params, &emb).unwrap();
    let (branch_logits, proj_pattern) = projector_branch(&proj_params, &emb, None);
    // The reimplemented projector must agree with the library before its
    // branch is used as the reference.
    let gap = rel_err(
        &library_logits.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        &branch_logits.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
    );
    assert!(gap < 1e-5, "concatenated projector disagrees with pairwise_forward by {gap:e}");

    let branch_loss = |ep: &ParamStore, pp: &ParamStore| -> f64 {
        let emb = run_on_branch(&enc_net, ep, &x, &enc_pattern);
        let (logits, _) = projector_branch(pp, &emb, Some(&proj_pattern));
        weighted_binary_softmax_xent(&logits, &batch.labels, &batch.weights).unwrap().loss
    };
    let enc = check_directions(|p| branch_loss(p, &proj_params), &enc_params, &eg, seed);
    let proj = check_directions(|p| branch_loss(&enc_params, p), &proj_params, &pg, seed + 1);
    enc.merge(proj)
}

/// The head MLP under class-weighted categorical cross-entropy.
pub fn check_head(inputs: usize, units: usize, layers: usize, k: usize, seed: u64) -> GradCheck {
    let mut rng = rng(seed);
    let net = build_mlp("head", inputs, units, layers, k);
    let params = net.init_params(seed).unwrap();
    let n = 16;
    let x = random_tensor(vec![n, inputs], &mut rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let cw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..3.0)).collect();
    let (logits, mut tape) = net.forward(&params, &x).unwrap();
    let out = categorical_xent(&logits, &labels, &cw).unwrap();
    let mut grads = params.clone();
    net.backward(&mut tape, &mut grads, &out.grad).unwrap();
    let (_, pattern) = run_with_pattern(&net, &params, &x);
    let loss = |p: &ParamStore| categorical_xent(&run_on_branch(&net, p, &x, &pattern), &labels, &cw).unwrap().loss;
    check_directions(loss, &params, &grads, seed)
}
