//! Zero-phase second-order Butterworth low-pass (forward-backward biquad).

pub(crate) fn low_pass(ts: &[f64], xs: &[[f64; 3]], cutoff_hz: f64) -> Vec<[f64; 3]> {
    let n = xs.len();
    if n < 3 {
        return xs.to_vec();
    }
    let fs = (n - 1) as f64 / (ts[n - 1] - ts[0]);
    if cutoff_hz >= 0.5 * fs {
        return xs.to_vec();
    }
    let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / fs;
    let (s, c) = w0.sin_cos();
    let alpha = s / std::f64::consts::SQRT_2; // Q = 1/√2
    let a0 = 1.0 + alpha;
    let b = [(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0];
    let a = [-2.0 * c / a0, (1.0 - alpha) / a0];
    let mut out = xs.to_vec();
    for axis in 0..3 {
        let mut col: Vec<f64> = xs.iter().map(|v| v[axis]).collect();
        biquad(&mut col, b, a);
        col.reverse();
        biquad(&mut col, b, a);
        col.reverse();
        for (o, v) in out.iter_mut().zip(col) {
            o[axis] = v;
        }
    }
    out
}

/// In-place direct form I, state primed at the first sample's DC level.
fn biquad(x: &mut [f64], b: [f64; 3], a: [f64; 2]) {
    let x0 = x[0];
    let (mut x1, mut x2, mut y1, mut y2) = (x0, x0, x0, x0);
    for v in x.iter_mut() {
        let xin = *v;
        let y = b[0] * xin + b[1] * x1 + b[2] * x2 - a[0] * y1 - a[1] * y2;
        x2 = x1;
        x1 = xin;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_dc_and_attenuates_high_frequency() {
        let fs = 100.0;
        let ts: Vec<f64> = (0..2000).map(|i| i as f64 / fs).collect();
        let xs: Vec<[f64; 3]> = ts
            .iter()
            .map(|t| [1.0, (2.0 * std::f64::consts::PI * 40.0 * t).sin(), (2.0 * std::f64::consts::PI * 1.0 * t).sin()])
            .collect();
        let y = low_pass(&ts, &xs, 12.0);
        for (i, v) in y.iter().enumerate().skip(200).take(1600) {
            assert!((v[0] - 1.0).abs() < 1e-9);
            assert!(v[1].abs() < 0.05);
            assert!((v[2] - xs[i][2]).abs() < 0.02);
        }
    }
}
