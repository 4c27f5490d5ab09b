//! Dominant frequency of a uniformly sampled signal.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::geometry::RoiGrid;
use crate::solver::FieldSnapshot;

/// Default wake probe in ROI-local coordinates: on the centreline, one
/// cylinder width behind the cylinder centre.
pub const WAKE_PROBE: (f64, f64) = (0.0, 0.15);

/// Transverse velocity at the ROI node nearest `(x, y)` across snapshots.
pub fn probe_series(snapshots: &[FieldSnapshot], roi: &RoiGrid, x: f64, y: f64) -> Vec<f64> {
    let nearest = |n: usize, span: f64, v: f64| {
        if n <= 1 {
            0
        } else {
            ((v / span * (n - 1) as f64).round().max(0.0) as usize).min(n - 1)
        }
    };
    let k = roi.index(nearest(roi.nx, roi.length, x), nearest(roi.ny, roi.width, y));
    snapshots.iter().map(|s| s.v[k]).collect()
}

/// Frequency (cycles per unit time) of the largest non-DC spectral peak.
///
/// The mean is removed first. Returns `None` for signals shorter than 32
/// samples or without any oscillating content.
pub fn dominant_frequency(signal: &[f64], dt: f64) -> Option<f64> {
    let n = signal.len();
    if n < 32 || !(dt > 0.0) {
        return None;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|s| Complex::new(s - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = signal.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max);
    let mut best = (0usize, 0.0f64);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let m = c.norm();
        if m > best.1 {
            best = (k, m);
        }
    }
    if best.0 == 0 || best.1 <= 1e-12 * scale.max(f64::MIN_POSITIVE) * n as f64 || scale == 0.0 {
        return None;
    }
    Some(best.0 as f64 / (n as f64 * dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, a: f64, n: usize, dt: f64) -> Vec<f64> {
        (0..n)
            .map(|k| a * (2.0 * std::f64::consts::PI * f * k as f64 * dt).sin())
            .collect()
    }

    #[test]
    fn single_tone_on_a_bin() {
        // 120 samples at 0.05 span 6 time units; 1.5 is 9 cycles.
        assert_eq!(dominant_frequency(&tone(1.5, 1.0, 120, 0.05), 0.05), Some(1.5));
    }

    #[test]
    fn louder_tone_wins() {
        let a = tone(1.0, 2.0, 120, 0.05);
        let b = tone(3.0, 1.0, 120, 0.05);
        let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        assert_eq!(dominant_frequency(&s, 0.05), Some(1.0));
    }

    #[test]
    fn constant_signal_has_no_peak() {
        assert_eq!(dominant_frequency(&[3.0; 64], 0.05), None);
        assert_eq!(dominant_frequency(&[1.0; 8], 0.05), None);
    }
}
