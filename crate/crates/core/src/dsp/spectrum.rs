use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::DspError;

/// One-sided power spectral density on an ascending frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub freqs_hz: Vec<f64>,
    pub psd: Vec<f64>,
}

impl PowerSpectrum {
    /// Trapezoidal integral of the density over the whole grid.
    pub fn total_power(&self) -> f64 {
        trapezoid(&self.freqs_hz, &self.psd)
    }

    pub fn peak_frequency(&self) -> f64 {
        let i = self
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.freqs_hz[i]
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (ys[0] + ys[1]) * (xs[1] - xs[0]))
        .sum()
}

/// Welch estimate: periodic Hann window, segments of `segment_s` seconds overlapping by
/// `overlap_frac`, averaged one-sided periodograms scaled as a density (units²/Hz).
/// No detrending is applied.
pub fn welch_psd(
    x: &[f64],
    fs_hz: f64,
    segment_s: f64,
    overlap_frac: f64,
) -> Result<PowerSpectrum, DspError> {
    let seg = (segment_s * fs_hz).round() as usize;
    if seg < 2 || seg > x.len() {
        return Err(DspError::SegmentTooLong {
            segment: seg,
            len: x.len(),
        });
    }
    let overlap = ((overlap_frac.clamp(0.0, 0.99)) * seg as f64).round() as usize;
    let step = (seg - overlap).max(1);

    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (fs_hz * win_energy);

    let fft = FftPlanner::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut n_segments = 0usize;
    let mut start = 0;
    while start + seg <= x.len() {
        for (b, (&v, &w)) in buf.iter_mut().zip(x[start..start + seg].iter().zip(&window)) {
            *b = Complex64::new(v * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf[..n_bins]) {
            *a += c.norm_sqr();
        }
        n_segments += 1;
        start += step;
    }
    let nyquist_bin = if seg.is_multiple_of(2) { Some(n_bins - 1) } else { None };
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
            one_sided * scale * p / n_segments as f64
        })
        .collect();
    let freqs_hz = (0..n_bins).map(|k| k as f64 * fs_hz / seg as f64).collect();
    Ok(PowerSpectrum { freqs_hz, psd })
}

/// Power in `[lo_hz, hi_hz)` by the trapezoid rule over the bins inside the band.
pub fn band_power(spec: &PowerSpectrum, lo_hz: f64, hi_hz: f64) -> f64 {
    let idx: Vec<usize> = spec
        .freqs_hz
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= lo_hz && f < hi_hz)
        .map(|(i, _)| i)
        .collect();
    match idx.as_slice() {
        [] => 0.0,
        [only] => {
            // a single bin carries its own bin width
            let df = spec.freqs_hz.get(1).copied().unwrap_or(0.0) - spec.freqs_hz[0];
            spec.psd[*only] * df
        }
        _ => {
            let (a, b) = (idx[0], idx[idx.len() - 1] + 1);
            trapezoid(&spec.freqs_hz[a..b], &spec.psd[a..b])
        }
    }
}
