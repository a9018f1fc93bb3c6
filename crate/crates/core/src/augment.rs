//! Label-preserving window transformations used to build augmentation pairs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::Window;
use crate::{Error, Result};

/// Longest chain of augmentations applied to one view.
pub const MAX_COMPOSE_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// Rotation about z plus small tilts about x and y.
    Tilted,
    /// Rotation about z only (the x-y plane).
    Planar,
}

/// One transformation kind with the ranges its parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    /// Per-axis median filter with an odd kernel drawn from `kernel_min..=kernel_max`.
    Smooth { kernel_min: usize, kernel_max: usize },
    /// Circular shift by up to `max_shift` samples either way.
    TimeTranslate { max_shift: usize },
    /// Step of height in `±max_height_g` on one axis, from a random onset to the end.
    BaselineJump { max_height_g: f64 },
    /// Slow sinusoidal drift added to every axis.
    BaselineWander {
        max_amplitude_g: f64,
        min_freq_hz: f64,
        max_freq_hz: f64,
        sample_rate_hz: f64,
    },
    /// One rigid rotation applied to every sample.
    Rotate {
        mode: RotationMode,
        max_yaw_deg: f64,
        max_tilt_deg: f64,
    },
    /// i.i.d. noise with σ drawn from `min_sigma_g..=max_sigma_g`.
    GaussianNoise { min_sigma_g: f64, max_sigma_g: f64 },
    /// Apply `steps` in order.
    Compose { steps: Vec<Augmentation> },
}

impl Augmentation {
    pub fn smooth() -> Self {
        Augmentation::Smooth { kernel_min: 5, kernel_max: 15 }
    }

    pub fn time_translate() -> Self {
        Augmentation::TimeTranslate { max_shift: 60 }
    }

    pub fn baseline_jump() -> Self {
        Augmentation::BaselineJump { max_height_g: 0.5 }
    }

    pub fn baseline_wander() -> Self {
        Augmentation::BaselineWander {
            max_amplitude_g: 0.25,
            min_freq_hz: 0.01,
            max_freq_hz: 0.1,
            sample_rate_hz: 30.0,
        }
    }

    pub fn rotate() -> Self {
        Augmentation::Rotate {
            mode: RotationMode::Tilted,
            max_yaw_deg: 360.0,
            max_tilt_deg: 15.0,
        }
    }

    pub fn gaussian_noise() -> Self {
        Augmentation::GaussianNoise { min_sigma_g: 0.01, max_sigma_g: 0.05 }
    }

    /// The six base kinds with their default ranges.
    pub fn default_menu() -> Vec<Augmentation> {
        vec![
            Self::smooth(),
            Self::time_translate(),
            Self::baseline_jump(),
            Self::baseline_wander(),
            Self::rotate(),
            Self::gaussian_noise(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Augmentation::Smooth { .. } => "smooth",
            Augmentation::TimeTranslate { .. } => "time_translate",
            Augmentation::BaselineJump { .. } => "baseline_jump",
            Augmentation::BaselineWander { .. } => "baseline_wander",
            Augmentation::Rotate { .. } => "rotate",
            Augmentation::GaussianNoise { .. } => "gaussian_noise",
            Augmentation::Compose { .. } => "compose",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.name())));
        match self {
            Augmentation::Smooth { kernel_min, kernel_max } => {
                if kernel_min > kernel_max || *kernel_min == 0 || (*kernel_min == *kernel_max && kernel_min % 2 == 0) {
                    return bad("kernel range must be non-empty and contain an odd size");
                }
            }
            Augmentation::TimeTranslate { .. } => {}
            Augmentation::BaselineJump { max_height_g } => {
                if !(*max_height_g >= 0.0) {
                    return bad("max_height_g must be >= 0");
                }
            }
            Augmentation::BaselineWander { max_amplitude_g, min_freq_hz, max_freq_hz, sample_rate_hz } => {
                if !(*max_amplitude_g >= 0.0) || !(*min_freq_hz >= 0.0) || min_freq_hz > max_freq_hz || !(*sample_rate_hz > 0.0) {
                    return bad("invalid amplitude/frequency range");
                }
            }
            Augmentation::Rotate { max_yaw_deg, max_tilt_deg, .. } => {
                if !(*max_yaw_deg >= 0.0) || !(*max_tilt_deg >= 0.0) {
                    return bad("angles must be >= 0");
                }
            }
            Augmentation::GaussianNoise { min_sigma_g, max_sigma_g } => {
                if !(*min_sigma_g >= 0.0) || min_sigma_g > max_sigma_g {
                    return bad("sigma range must satisfy 0 <= min <= max");
                }
            }
            Augmentation::Compose { steps } => {
                if steps.is_empty() || steps.len() > MAX_COMPOSE_DEPTH {
                    return bad("a composition holds 1 to 3 steps");
                }
                for s in steps {
                    if matches!(s, Augmentation::Compose { .. }) {
                        return bad("compositions cannot nest");
                    }
                    s.validate()?;
                }
            }
        }
        Ok(())
    }
}

/// Menu of augmentations and how often views chain several of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub menu: Vec<Augmentation>,
    /// Probability that a view chains 2–3 distinct menu entries.
    pub compose_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            menu: Augmentation::default_menu(),
            compose_probability: 0.25,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.menu.is_empty() {
            return Err(Error::Config("augmentation menu is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.compose_probability) {
            return Err(Error::Config("compose_probability must lie in [0, 1]".into()));
        }
        self.menu.iter().try_for_each(Augmentation::validate)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `Rz(yaw) · Ry(tilt_y) · Rx(tilt_x)`.
pub fn rotation_matrix(yaw: f64, tilt_x: f64, tilt_y: f64) -> [[f64; 3]; 3] {
    let (sz, cz) = yaw.sin_cos();
    let (sx, cx) = tilt_x.sin_cos();
    let (sy, cy) = tilt_y.sin_cos();
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    matmul3(&matmul3(&rz, &ry), &rx)
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

/// Rotate every sample of a window by `r`.
pub fn rotate_window(w: &Window, r: &[[f64; 3]; 3]) -> Window {
    let mut out = w.clone();
    for (dst, src) in out.samples.chunks_exact_mut(3).zip(w.samples.chunks_exact(3)) {
        let v = [src[0] as f64, src[1] as f64, src[2] as f64];
        for (k, d) in dst.iter_mut().enumerate() {
            *d = (r[k][0] * v[0] + r[k][1] * v[1] + r[k][2] * v[2]) as f32;
        }
    }
    out
}

fn median_filter(w: &mut Window, kernel: usize) {
    let n = w.len();
    let half = kernel / 2;
    let src = w.samples.clone();
    let mut buf = Vec::with_capacity(kernel);
    for axis in 0..3 {
        for i in 0..n {
            buf.clear();
            for k in 0..kernel {
                let j = (i + k).saturating_sub(half).min(n - 1);
                buf.push(src[3 * j + axis]);
            }
            let (_, m, _) = buf.select_nth_unstable_by(half, f32::total_cmp);
            w.samples[3 * i + axis] = *m;
        }
    }
}

/// Apply one augmentation, drawing its parameters from `rng`.
pub fn apply<R: Rng + ?Sized>(aug: &Augmentation, w: &Window, rng: &mut R) -> Window {
    let n = w.len();
    let mut out = w.clone();
    if n == 0 {
        return out;
    }
    match aug {
        Augmentation::Smooth { kernel_min, kernel_max } => {
            let odd: Vec<usize> = (*kernel_min..=*kernel_max).filter(|k| k % 2 == 1).collect();
            if let Some(&k) = odd.get(rng.random_range(0..odd.len().max(1))) {
                median_filter(&mut out, k);
            }
        }
        Augmentation::TimeTranslate { max_shift } => {
            let m = *max_shift as i64;
            let shift = rng.random_range(-m..=m).rem_euclid(n as i64) as usize;
            out.samples.rotate_right(3 * shift);
        }
        Augmentation::BaselineJump { max_height_g } => {
            let axis = rng.random_range(0..3);
            let onset = rng.random_range(0..n);
            let h = uniform(rng, -max_height_g, *max_height_g) as f32;
            for i in onset..n {
                out.samples[3 * i + axis] += h;
            }
        }
        Augmentation::BaselineWander { max_amplitude_g, min_freq_hz, max_freq_hz, sample_rate_hz } => {
            let two_pi = 2.0 * std::f64::consts::PI;
            for axis in 0..3 {
                let a = uniform(rng, 0.0, *max_amplitude_g);
                let f = uniform(rng, *min_freq_hz, *max_freq_hz);
                let phi = uniform(rng, 0.0, two_pi);
                for i in 0..n {
                    let t = i as f64 / sample_rate_hz;
                    out.samples[3 * i + axis] += (a * (two_pi * f * t + phi).sin()) as f32;
                }
            }
        }
        Augmentation::Rotate { mode, max_yaw_deg, max_tilt_deg } => {
            let yaw = uniform(rng, 0.0, max_yaw_deg.to_radians());
            let (tx, ty) = match mode {
                RotationMode::Planar => (0.0, 0.0),
                RotationMode::Tilted => {
                    let t = max_tilt_deg.to_radians();
                    (uniform(rng, -t, t), uniform(rng, -t, t))
                }
            };
            out = rotate_window(w, &rotation_matrix(yaw, tx, ty));
        }
        Augmentation::GaussianNoise { min_sigma_g, max_sigma_g } => {
            let sigma = uniform(rng, *min_sigma_g, *max_sigma_g);
            for v in out.samples.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += (sigma * z) as f32;
            }
        }
        Augmentation::Compose { steps } => {
            for s in steps {
                out = apply(s, &out, rng);
            }
        }
    }
    out
}

/// A window, its augmented view and the kinds that produced the view.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    pub original: Window,
    pub augmented: Window,
    pub applied: Vec<&'static str>,
}

/// Pair a window with a view from one menu entry or a short chain of them.
pub fn make_augmented_pair<R: Rng + ?Sized>(w: &Window, cfg: &AugmentConfig, rng: &mut R) -> Result<AugmentedPair> {
    if cfg.menu.is_empty() {
        return Err(Error::Config("augmentation menu is empty".into()));
    }
    let compose = cfg.menu.len() >= 2 && rng.random::<f64>() < cfg.compose_probability;
    let picks: Vec<usize> = if compose {
        let depth = rng.random_range(2..=MAX_COMPOSE_DEPTH.min(cfg.menu.len()));
        rand::seq::index::sample(rng, cfg.menu.len(), depth).into_vec()
    } else {
        vec![rng.random_range(0..cfg.menu.len())]
    };
    let mut view = w.clone();
    let mut applied = Vec::new();
    for i in picks {
        view = apply(&cfg.menu[i], &view, rng);
        applied.push(cfg.menu[i].name());
    }
    Ok(AugmentedPair {
        original: w.clone(),
        augmented: view,
        applied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn window(seed: u64) -> Window {
        let mut rng = stream(seed, 99);
        Window {
            subject_id: "s".into(),
            start_time: 0.0,
            samples: (0..900).map(|_| rng.random_range(-2.0f32..2.0)).collect(),
            label: None,
        }
    }

    fn norms(w: &Window) -> Vec<f64> {
        w.samples
            .chunks(3)
            .map(|v| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt())
            .collect()
    }

    #[test]
    fn zero_angle_rotation_is_identity() {
        let w = window(1);
        let aug = Augmentation::Rotate { mode: RotationMode::Tilted, max_yaw_deg: 0.0, max_tilt_deg: 0.0 };
        assert_eq!(apply(&aug, &w, &mut stream(0, 0)), w);
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let w = window(2);
        let aug = Augmentation::GaussianNoise { min_sigma_g: 0.0, max_sigma_g: 0.0 };
        assert_eq!(apply(&aug, &w, &mut stream(0, 0)), w);
    }

    #[test]
    fn median_of_constant_window_is_identity() {
        let mut w = window(3);
        w.samples.iter_mut().enumerate().for_each(|(i, v)| *v = [0.1, -0.4, 0.98][i % 3]);
        for seed in 0..10 {
            assert_eq!(apply(&Augmentation::smooth(), &w, &mut stream(seed, 0)), w);
        }
    }

    #[test]
    fn median_filter_removes_spike() {
        let mut w = window(4);
        w.samples.iter_mut().for_each(|v| *v = 0.0);
        w.samples[3 * 100] = 5.0;
        median_filter(&mut w, 5);
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn time_translate_is_a_circular_shift() {
        let w = window(5);
        let out = apply(&Augmentation::time_translate(), &w, &mut stream(7, 0));
        let mut sorted_in = w.samples.clone();
        let mut sorted_out = out.samples.clone();
        sorted_in.sort_by(f32::total_cmp);
        sorted_out.sort_by(f32::total_cmp);
        assert_eq!(sorted_in, sorted_out);
        let shift = (0..300).find(|&s| {
            let mut r = w.samples.clone();
            r.rotate_right(3 * s);
            r == out.samples
        });
        let s = shift.expect("output is a rotation of the input");
        assert!(s <= 60 || s >= 240);
    }

    #[test]
    fn baseline_jump_touches_one_axis_only() {
        let w = window(6);
        for seed in 0..20 {
            let out = apply(&Augmentation::baseline_jump(), &w, &mut stream(seed, 1));
            let changed: Vec<usize> = (0..3)
                .filter(|&a| (0..300).any(|i| out.samples[3 * i + a] != w.samples[3 * i + a]))
                .collect();
            assert!(changed.len() <= 1);
            for axis in (0..3).filter(|a| !changed.contains(a)) {
                for i in 1..300 {
                    assert_eq!(
                        out.samples[3 * i + axis] - out.samples[3 * (i - 1) + axis],
                        w.samples[3 * i + axis] - w.samples[3 * (i - 1) + axis]
                    );
                }
            }
        }
    }

    #[test]
    fn baseline_wander_is_slow() {
        let w = window(7);
        let out = apply(&Augmentation::baseline_wander(), &w, &mut stream(3, 3));
        // |d/dt a·sin(2πft+φ)| ≤ 2π·f·a per second.
        let bound = 2.0 * std::f64::consts::PI * 0.1 * 0.25 / 30.0 + 1e-5;
        for axis in 0..3 {
            for i in 1..300 {
                let d_out = (out.samples[3 * i + axis] - out.samples[3 * (i - 1) + axis]) as f64;
                let d_in = (w.samples[3 * i + axis] - w.samples[3 * (i - 1) + axis]) as f64;
                assert!((d_out - d_in).abs() <= bound);
            }
        }
    }

    #[test]
    fn noise_has_zero_mean() {
        let n_windows = 112; // 112 × 900 > 1e5 elements
        let mut rng = stream(11, 0);
        let aug = Augmentation::GaussianNoise { min_sigma_g: 0.05, max_sigma_g: 0.05 };
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for k in 0..n_windows {
            let w = window(k as u64);
            let out = apply(&aug, &w, &mut rng);
            for (a, b) in out.samples.iter().zip(&w.samples) {
                sum += (*a - *b) as f64;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!(mean.abs() < 4.0 * 0.05 / (count as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn empty_menu_is_an_error() {
        let cfg = AugmentConfig { menu: vec![], compose_probability: 0.0 };
        assert!(make_augmented_pair(&window(0), &cfg, &mut stream(0, 0)).is_err());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn identity_menu_gives_identical_pair() {
        let cfg = AugmentConfig {
            menu: vec![Augmentation::GaussianNoise { min_sigma_g: 0.0, max_sigma_g: 0.0 }],
            compose_probability: 0.0,
        };
        let p = make_augmented_pair(&window(9), &cfg, &mut stream(0, 0)).unwrap();
        assert_eq!(p.original, p.augmented);
        assert_eq!(p.applied, vec!["gaussian_noise"]);
    }

    #[test]
    fn pairs_are_reproducible() {
        let cfg = AugmentConfig::default();
        let w = window(10);
        let a = make_augmented_pair(&w, &cfg, &mut stream(5, 2)).unwrap();
        let b = make_augmented_pair(&w, &cfg, &mut stream(5, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn menu_entries_are_chosen_uniformly() {
        let cfg = AugmentConfig { menu: Augmentation::default_menu(), compose_probability: 0.0 };
        let w = window(12);
        let mut rng = stream(21, 0);
        let mut counts = std::collections::BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let p = make_augmented_pair(&w, &cfg, &mut rng).unwrap();
            *counts.entry(p.applied[0]).or_insert(0usize) += 1;
        }
        let p = 1.0 / 6.0;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert_eq!(counts.len(), 6);
        for (k, c) in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sd, "{k}: {c}");
        }
    }

    #[test]
    fn compositions_are_capped() {
        let cfg = AugmentConfig { compose_probability: 1.0, ..Default::default() };
        let mut rng = stream(1, 1);
        for _ in 0..50 {
            let p = make_augmented_pair(&window(1), &cfg, &mut rng).unwrap();
            assert!((2..=MAX_COMPOSE_DEPTH).contains(&p.applied.len()));
        }
        let nested = Augmentation::Compose { steps: vec![Augmentation::Compose { steps: vec![Augmentation::smooth()] }] };
        assert!(nested.validate().is_err());
    }

    proptest! {
        #[test]
        fn rotation_preserves_norms(seed in any::<u64>()) {
            let w = window(seed % 64);
            let out = apply(&Augmentation::rotate(), &w, &mut stream(seed, 5));
            for (a, b) in norms(&w).iter().zip(norms(&out)) {
                prop_assert!((a - b).abs() <= 1e-5 * a.max(1e-12));
            }
        }

        #[test]
        fn every_kind_keeps_shape_and_finiteness(seed in any::<u64>(), kind in 0usize..6) {
            let w = window(seed % 32);
            let aug = &Augmentation::default_menu()[kind];
            let out = apply(aug, &w, &mut stream(seed, 6));
            prop_assert_eq!(out.samples.len(), w.samples.len());
            prop_assert!(out.samples.iter().all(|v| v.is_finite()));
        }
    }
}
