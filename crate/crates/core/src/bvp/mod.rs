//! Blood volume pulse: window cleaning, systolic peaks, NN intervals and the
//! 30-dimensional heart-rate-variability vector.

mod hrv;
mod peaks;
mod rr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, design_butterworth, filtfilt, DspError, FilterKind};

pub use hrv::{hrv_features, BVP_FEATURES};
pub use peaks::detect_systolic_peaks;
pub use rr::{clean_rr, NnSeries, RrSeries, MIN_VALID_INTERVALS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvpError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("no systolic peaks detected")]
    NoBeatsDetected,
    #[error("only {valid} valid RR intervals after cleaning, {needed} required")]
    TooFewValidBeats { valid: usize, needed: usize },
    #[error("{beats} beats are not enough for an RR series")]
    InsufficientBeats { beats: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvpConfig {
    pub winsor_lo_pct: f64,
    pub winsor_hi_pct: f64,
    pub highpass_hz: f64,
    pub highpass_order: usize,
    /// Passband of the peak detector's own filter.
    pub peak_band_hz: (f64, f64),
    pub peak_band_order: usize,
    pub w_peak_s: f64,
    pub w_beat_s: f64,
    pub beta: f64,
    pub refractory_s: f64,
    pub rr_min_ms: f64,
    pub rr_max_ms: f64,
    /// Largest accepted relative change against the previous accepted interval.
    pub ectopic_frac: f64,
    pub resample_hz: f64,
    pub welch_segment_s: f64,
    pub welch_overlap: f64,
    pub hti_bin_ms: f64,
}

impl Default for BvpConfig {
    fn default() -> Self {
        Self {
            winsor_lo_pct: 2.0,
            winsor_hi_pct: 98.0,
            highpass_hz: 0.5,
            highpass_order: 4,
            peak_band_hz: (0.5, 8.0),
            peak_band_order: 2,
            w_peak_s: 0.111,
            w_beat_s: 0.667,
            beta: 0.02,
            refractory_s: 0.3,
            rr_min_ms: 300.0,
            rr_max_ms: 2000.0,
            ectopic_frac: 0.2,
            resample_hz: 4.0,
            welch_segment_s: 64.0,
            welch_overlap: 0.5,
            hti_bin_ms: 7.8125,
        }
    }
}

/// Winsorises, removes baseline wander with a zero-phase highpass and scales to [0, 1].
pub fn preprocess_bvp(w: &[f64], fs_hz: f64, cfg: &BvpConfig) -> Result<Vec<f64>, BvpError> {
    let clipped = dsp::winsorize(w, cfg.winsor_lo_pct, cfg.winsor_hi_pct)?;
    let hp = design_butterworth(cfg.highpass_order, &[cfg.highpass_hz], fs_hz, FilterKind::Highpass)?;
    let filtered = filtfilt(&hp, &clipped)?;
    Ok(dsp::minmax_normalize(&filtered))
}

/// Full BVP path for one raw window.
pub fn extract_bvp_features(w: &[f64], fs_hz: f64, cfg: &BvpConfig) -> Result<[f64; 30], BvpError> {
    let x = preprocess_bvp(w, fs_hz, cfg)?;
    let beats = detect_systolic_peaks(&x, fs_hz, cfg)?;
    let rr = RrSeries::from_beats(&beats, fs_hz)?;
    let nn = clean_rr(&rr, cfg)?;
    hrv_features(&nn, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Amplitude of the `f` Hz component over `x` (an integer number of cycles).
    fn lock_in(x: &[f64], fs: f64, f: f64) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / fs;
            s += v * ph.sin();
            c += v * ph.cos();
        }
        2.0 * (s * s + c * c).sqrt() / x.len() as f64
    }

    #[test]
    fn constant_window_preprocesses_to_zeros() {
        let out = preprocess_bvp(&[5.0; 3840], 64.0, &BvpConfig::default()).unwrap();
        assert_eq!(out, vec![0.0; 3840]);
    }

    #[test]
    fn baseline_drift_is_suppressed() {
        let fs = 64.0;
        let n = 3840;
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                2.0 * (2.0 * PI * 0.05 * t).sin() + (2.0 * PI * 1.2 * t).sin()
            })
            .collect();
        let out = preprocess_bvp(&raw, fs, &BvpConfig::default()).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        let before = lock_in(&raw, fs, 0.05) / lock_in(&raw, fs, 1.2);
        let after = lock_in(&out, fs, 0.05) / lock_in(&out, fs, 1.2);
        let reduction_db = 20.0 * (before / after).log10();
        assert!(reduction_db >= 40.0, "drift reduced by {reduction_db:.1} dB");
    }
}
