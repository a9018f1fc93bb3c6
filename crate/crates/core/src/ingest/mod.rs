//! Accelerometer ingestion: unit normalization, regular-grid resampling and
//! windowing, plus readers for generic CSV, PAMAP2 and a synthetic corpus.

pub mod cache;
mod filter;
pub mod pamap2;
pub mod synth;
pub mod table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Standard gravity used to convert m/s² to G.
pub const STANDARD_GRAVITY: f64 = 9.8;

/// Magnitudes above this many G are flagged as suspicious.
pub const MAX_EXPECTED_G: f64 = 16.0;

/// Acceleration unit of a raw stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    #[serde(alias = "G")]
    G,
    #[serde(alias = "m/s2", alias = "m/s^2")]
    MetersPerSecondSquared,
    #[serde(alias = "mG", alias = "milli_g")]
    MilliG,
}

impl Unit {
    /// Factor that converts a value in this unit into G.
    pub fn to_g(self) -> f64 {
        match self {
            Unit::G => 1.0,
            Unit::MetersPerSecondSquared => 1.0 / STANDARD_GRAVITY,
            Unit::MilliG => 1e-3,
        }
    }
}

/// A timestamped three-axis stream for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    pub subject_id: String,
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    pub accel: Vec<[f64; 3]>,
    /// Optional per-sample class id.
    pub labels: Option<Vec<i32>>,
    /// Label id meaning "no activity annotated", if the source has one.
    pub null_label: Option<i32>,
}

impl SampleSeries {
    /// Validated constructor.
    pub fn new(
        subject_id: impl Into<String>,
        timestamps: Vec<f64>,
        accel: Vec<[f64; 3]>,
        labels: Option<Vec<i32>>,
    ) -> Result<Self> {
        let s = SampleSeries {
            subject_id: subject_id.into(),
            timestamps,
            accel,
            labels,
            null_label: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.accel.len() != self.timestamps.len() {
            return Err(Error::Data(format!(
                "subject {}: {} timestamps but {} samples",
                self.subject_id,
                self.timestamps.len(),
                self.accel.len()
            )));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.timestamps.len() {
                return Err(Error::Data(format!(
                    "subject {}: {} labels for {} samples",
                    self.subject_id,
                    l.len(),
                    self.timestamps.len()
                )));
            }
        }
        for (i, t) in self.timestamps.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Data(format!("subject {}: non-finite timestamp at sample {i}", self.subject_id)));
            }
            if i > 0 && *t <= self.timestamps[i - 1] {
                return Err(Error::Data(format!(
                    "subject {}: timestamps not strictly increasing at sample {i}",
                    self.subject_id
                )));
            }
        }
        check_finite(&self.subject_id, &self.accel)?;
        if let Some(i) = self
            .accel
            .iter()
            .position(|a| a.iter().any(|v| v.abs() > MAX_EXPECTED_G))
        {
            log::warn!(
                "subject {}: sample {i} exceeds {MAX_EXPECTED_G} G; check the declared unit",
                self.subject_id
            );
        }
        Ok(())
    }

    /// Whether sample `i` carries the null label.
    pub fn is_null(&self, i: usize) -> bool {
        match (&self.labels, self.null_label) {
            (Some(l), Some(n)) => l[i] == n,
            _ => false,
        }
    }
}

fn check_finite(subject: &str, accel: &[[f64; 3]]) -> Result<()> {
    if let Some(i) = accel.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("subject {subject}: non-finite acceleration at sample {i}")));
    }
    Ok(())
}

/// Scale a stream to G.
pub fn normalize_units(series: &SampleSeries, unit: Unit) -> Result<SampleSeries> {
    check_finite(&series.subject_id, &series.accel)?;
    let k = unit.to_g();
    let mut out = series.clone();
    if unit != Unit::G {
        for a in out.accel.iter_mut() {
            for v in a.iter_mut() {
                *v *= k;
            }
        }
    }
    Ok(out)
}

/// Grid, windowing and labeling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowingConfig {
    pub sample_rate_hz: f64,
    pub window_seconds: f64,
    /// Input gaps longer than this split a stream into independent segments.
    pub gap_seconds: f64,
    /// Minimum share of samples carrying the majority label for a window to keep it.
    pub min_label_purity: f64,
    /// Zero-phase low-pass cutoff applied before resampling; off by default.
    pub anti_alias_hz: Option<f64>,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        WindowingConfig {
            sample_rate_hz: 30.0,
            window_seconds: 10.0,
            gap_seconds: 1.0,
            min_label_purity: 0.8,
            anti_alias_hz: None,
        }
    }
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !(self.window_seconds > 0.0) || !(self.gap_seconds > 0.0) {
            return Err(Error::Config(
                "sample_rate_hz, window_seconds and gap_seconds must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.min_label_purity) {
            return Err(Error::Config("min_label_purity must lie in [0, 1]".into()));
        }
        if self.window_len() == 0 {
            return Err(Error::Config("window shorter than one sample".into()));
        }
        if let Some(f) = self.anti_alias_hz {
            if !(f > 0.0) {
                return Err(Error::Config("anti_alias_hz must be positive".into()));
            }
        }
        Ok(())
    }

    /// Samples per window.
    pub fn window_len(&self) -> usize {
        (self.sample_rate_hz * self.window_seconds).round() as usize
    }

    pub fn period(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

/// A fixed-length block of samples: the unit every model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub subject_id: String,
    pub start_time: f64,
    /// `len × 3` row-major, in G.
    pub samples: Vec<f32>,
    pub label: Option<i32>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.samples.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> [f32; 3] {
        [self.samples[3 * i], self.samples[3 * i + 1], self.samples[3 * i + 2]]
    }
}

/// Split indices into runs whose consecutive spacing is at most `max_gap`.
fn segments(timestamps: &[f64], max_gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..timestamps.len() {
        if timestamps[i] - timestamps[i - 1] > max_gap {
            out.push(start..i);
            start = i;
        }
    }
    if start < timestamps.len() {
        out.push(start..timestamps.len());
    }
    out
}

/// Resample onto a regular grid by per-axis linear interpolation.
///
/// Each segment (split at gaps > `gap_seconds`) gets its own grid
/// `t0 + k / rate` up to its last input timestamp. Segments that would give
/// fewer than two grid points are dropped. Labels are carried by
/// nearest-neighbour lookup.
pub fn resample(series: &SampleSeries, cfg: &WindowingConfig) -> Result<Vec<SampleSeries>> {
    cfg.validate()?;
    check_finite(&series.subject_id, &series.accel)?;
    let mut out = Vec::new();
    for seg in segments(&series.timestamps, cfg.gap_seconds) {
        let ts = &series.timestamps[seg.clone()];
        let t0 = ts[0];
        let t_end = *ts.last().unwrap();
        let span = t_end - t0;
        let n_out = (span * cfg.sample_rate_hz + 1e-9).floor() as usize + 1;
        if n_out < 2 {
            log::warn!(
                "subject {}: dropping {}-sample segment at t={}",
                series.subject_id,
                seg.len(),
                t0
            );
            continue;
        }
        let filtered;
        let xs: &[[f64; 3]] = match cfg.anti_alias_hz {
            Some(cut) => {
                filtered = filter::low_pass(ts, &series.accel[seg.clone()], cut);
                &filtered
            }
            None => &series.accel[seg.clone()],
        };
        let labels = series.labels.as_ref().map(|l| &l[seg.clone()]);
        let mut grid = Vec::with_capacity(n_out);
        let mut acc = Vec::with_capacity(n_out);
        let mut lab = labels.map(|_| Vec::with_capacity(n_out));
        let mut j = 0;
        for k in 0..n_out {
            let t = t0 + k as f64 / cfg.sample_rate_hz;
            while j + 1 < ts.len() && ts[j + 1] <= t {
                j += 1;
            }
            let v = if j + 1 >= ts.len() || t == ts[j] {
                xs[j]
            } else {
                let f = (t - ts[j]) / (ts[j + 1] - ts[j]);
                let (a, b) = (xs[j], xs[j + 1]);
                [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, a[2] + (b[2] - a[2]) * f]
            };
            grid.push(t);
            acc.push(v);
            if let (Some(l), Some(src)) = (lab.as_mut(), labels) {
                let nearest = if j + 1 < ts.len() && ts[j + 1] - t < t - ts[j] { j + 1 } else { j };
                l.push(src[nearest]);
            }
        }
        out.push(SampleSeries {
            subject_id: series.subject_id.clone(),
            timestamps: grid,
            accel: acc,
            labels: lab,
            null_label: series.null_label,
        });
    }
    Ok(out)
}

/// Cut consecutive non-overlapping windows from a regularly sampled series.
///
/// Runs are split wherever consecutive samples are not one grid period apart;
/// each run yields `floor(len / window_len)` windows and discards its tail.
/// A window is labeled with its majority label when that label covers at
/// least `min_label_purity` of its samples and is not the null label.
pub fn cut_windows(series: &SampleSeries, cfg: &WindowingConfig) -> Result<Vec<Window>> {
    cfg.validate()?;
    let wl = cfg.window_len();
    let period = cfg.period();
    let ts = &series.timestamps;
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..ts.len() {
        if ((ts[i] - ts[i - 1]) - period).abs() > 0.01 * period {
            runs.push(start..i);
            start = i;
        }
    }
    if start < ts.len() {
        runs.push(start..ts.len());
    }
    let mut out = Vec::new();
    for run in runs {
        let n_windows = run.len() / wl;
        for w in 0..n_windows {
            let lo = run.start + w * wl;
            let mut samples = Vec::with_capacity(wl * 3);
            for a in &series.accel[lo..lo + wl] {
                samples.extend(a.iter().map(|&v| v as f32));
            }
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "subject {}: window at t={} has non-finite values after f32 conversion",
                    series.subject_id, ts[lo]
                )));
            }
            let label = series
                .labels
                .as_ref()
                .and_then(|l| majority_label(&l[lo..lo + wl], cfg.min_label_purity))
                .filter(|l| Some(*l) != series.null_label);
            out.push(Window {
                subject_id: series.subject_id.clone(),
                start_time: ts[lo],
                samples,
                label,
            });
        }
    }
    Ok(out)
}

fn majority_label(labels: &[i32], min_purity: f64) -> Option<i32> {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    // BTreeMap order makes the smallest id win ties.
    let (label, count) = counts
        .into_iter()
        .fold(None, |best: Option<(i32, usize)>, (l, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })?;
    (count as f64 >= min_purity * labels.len() as f64).then_some(label)
}

/// Resample and window every series.
pub fn windows_from_series(series: &[SampleSeries], cfg: &WindowingConfig) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for s in series {
        for seg in resample(s, cfg)? {
            out.extend(cut_windows(&seg, cfg)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_series(n: usize, rate: f64, f: impl Fn(f64) -> [f64; 3]) -> SampleSeries {
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        let acc = ts.iter().map(|&t| f(t)).collect();
        SampleSeries::new("s", ts, acc, None).unwrap()
    }

    #[test]
    fn unit_conversions() {
        let s = SampleSeries::new("a", vec![0.0, 1.0], vec![[9.8, 0.0, 500.0], [0.0, 0.0, 0.0]], None).unwrap();
        let g = normalize_units(&s, Unit::MetersPerSecondSquared).unwrap();
        assert!((g.accel[0][0] - 1.0).abs() < 1e-15);
        assert_eq!(g.accel[1], [0.0; 3]);
        let mg = normalize_units(&s, Unit::MilliG).unwrap();
        assert!((mg.accel[0][2] - 0.5).abs() < 1e-15);
        assert_eq!(g.timestamps, s.timestamps);
    }

    #[test]
    fn non_finite_rejected_with_index() {
        let s = SampleSeries {
            subject_id: "x".into(),
            timestamps: vec![0.0, 1.0, 2.0],
            accel: vec![[0.0; 3], [0.0, f64::NAN, 0.0], [0.0; 3]],
            labels: None,
            null_label: None,
        };
        let err = normalize_units(&s, Unit::G).unwrap_err();
        assert!(err.to_string().contains("sample 1"), "{err}");
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        assert!(SampleSeries::new("a", vec![0.0, 0.0], vec![[0.0; 3]; 2], None).is_err());
    }

    #[test]
    fn exact_grid_is_reproduced() {
        let s = grid_series(95, 30.0, |t| [t.sin(), t.cos(), 1.0]);
        let r = resample(&s, &WindowingConfig::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].timestamps, s.timestamps);
        assert_eq!(r[0].accel, s.accel);
    }

    #[test]
    fn two_point_midpoint() {
        let s = SampleSeries::new("a", vec![0.0, 1.0], vec![[0.0; 3], [1.0, 1.0, 1.0]], None).unwrap();
        let r = resample(&s, &WindowingConfig::default()).unwrap();
        assert_eq!(r[0].len(), 31);
        assert!((r[0].accel[15][0] - 0.5).abs() < 1e-12);
        assert_eq!(r[0].timestamps[15], 0.5);
    }

    #[test]
    fn downsampled_sine_tracks_analytic_values() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let s = grid_series(600, 60.0, |t| [(two_pi * t).sin(), 0.0, 0.0]);
        let r = resample(&s, &WindowingConfig::default()).unwrap();
        for (t, a) in r[0].timestamps.iter().zip(&r[0].accel) {
            assert!((a[0] - (two_pi * t).sin()).abs() < 1e-3, "t={t}");
        }
    }

    #[test]
    fn gaps_split_segments_and_short_segments_drop() {
        let mut ts: Vec<f64> = (0..60).map(|i| i as f64 / 30.0).collect();
        ts.push(10.0); // isolated sample after a gap
        ts.extend((0..30).map(|i| 20.0 + i as f64 / 30.0));
        let n = ts.len();
        let s = SampleSeries::new("a", ts, vec![[0.0, 0.0, 1.0]; n], None).unwrap();
        let r = resample(&s, &WindowingConfig::default()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].timestamps[0], 20.0);
        assert!(r.iter().all(|seg| seg.timestamps.windows(2).all(|w| w[1] - w[0] < 0.05)));
    }

    #[test]
    fn window_counts_follow_floor() {
        let cfg = WindowingConfig::default();
        let s = grid_series(35 * 30, 30.0, |_| [0.0, 0.0, 1.0]);
        assert_eq!(cut_windows(&s, &cfg).unwrap().len(), 3);
        let s = grid_series(297, 30.0, |_| [0.0, 0.0, 1.0]);
        assert!(cut_windows(&s, &cfg).unwrap().is_empty());
    }

    #[test]
    fn windows_take_aligned_labels() {
        let cfg = WindowingConfig::default();
        let mut s = grid_series(600, 30.0, |_| [0.0, 0.0, 1.0]);
        s.labels = Some((0..600).map(|i| if i < 300 { 4 } else { 7 }).collect());
        let w = cut_windows(&s, &cfg).unwrap();
        assert_eq!(w.iter().map(|w| w.label).collect::<Vec<_>>(), vec![Some(4), Some(7)]);
        assert_eq!(w[1].start_time, 10.0);
    }

    #[test]
    fn impure_and_null_windows_lose_their_label() {
        let cfg = WindowingConfig::default();
        let mut s = grid_series(600, 30.0, |_| [0.0, 0.0, 1.0]);
        s.labels = Some((0..600).map(|i| if i < 150 { 1 } else if i < 300 { 2 } else { 0 }).collect());
        s.null_label = Some(0);
        let w = cut_windows(&s, &cfg).unwrap();
        assert_eq!(w[0].label, None);
        assert_eq!(w[1].label, None);
        assert!(s.is_null(599) && !s.is_null(0));
    }

    proptest! {
        #[test]
        fn resample_is_idempotent(n in 2usize..200, rate in 10.0f64..120.0, phase in 0.0f64..6.0) {
            let ts: Vec<f64> = (0..n).map(|i| 3.25 + i as f64 / rate).collect();
            let acc: Vec<[f64; 3]> = ts.iter().map(|t| [(t + phase).sin(), (2.0 * t).cos(), 1.0]).collect();
            let s = SampleSeries::new("p", ts, acc, None).unwrap();
            let cfg = WindowingConfig::default();
            let once = resample(&s, &cfg).unwrap();
            let twice: Vec<SampleSeries> = once.iter().flat_map(|seg| resample(seg, &cfg).unwrap()).collect();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn normalize_is_linear(x in -10.0f64..10.0, alpha in -4.0f64..4.0) {
            let s = SampleSeries::new("a", vec![0.0], vec![[x, 2.0 * x, -x]], None).unwrap();
            let mut scaled = s.clone();
            scaled.accel[0].iter_mut().for_each(|v| *v *= alpha);
            let a = normalize_units(&scaled, Unit::MetersPerSecondSquared).unwrap();
            let b = normalize_units(&s, Unit::MetersPerSecondSquared).unwrap();
            for k in 0..3 {
                prop_assert!((a.accel[0][k] - alpha * b.accel[0][k]).abs() <= 1e-12 * (1.0 + a.accel[0][k].abs()));
            }
        }

        #[test]
        fn window_count_is_sum_of_segment_floors(lens in proptest::collection::vec(1usize..1500, 1..5)) {
            let cfg = WindowingConfig::default();
            let mut ts = Vec::new();
            let mut t0 = 0.0;
            for &l in &lens {
                ts.extend((0..l).map(|i| t0 + i as f64 / 30.0));
                t0 += l as f64 / 30.0 + 5.0;
            }
            let n = ts.len();
            let s = SampleSeries::new("a", ts, vec![[0.0, 0.0, 1.0]; n], None).unwrap();
            let w = windows_from_series(&[s], &cfg).unwrap();
            let expected: usize = lens.iter().filter(|&&l| l >= 2).map(|l| l / 300).sum();
            prop_assert_eq!(w.len(), expected);
        }
    }
}
