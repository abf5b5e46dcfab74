//! Numerical signal-processing kernels shared by the per-signal pipelines.
//!
//! Everything here is a pure function of its inputs.

mod filter;
mod spectrum;
pub mod stats;
mod wavelet;

use thiserror::Error;

pub use filter::{design_butterworth, filtfilt, Biquad, FilterKind, IirFilter};
pub use spectrum::{band_power, welch_psd, PowerSpectrum};
pub use wavelet::{haar_dwt, haar_idwt, wavelet_denoise};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("cutoff {cutoff_hz:?} Hz must lie strictly between 0 and Nyquist ({nyquist_hz} Hz)")]
    CutoffOutOfRange { cutoff_hz: Vec<f64>, nyquist_hz: f64 },
    #[error("filter order {0} outside supported range 1..=8")]
    InvalidOrder(usize),
    #[error("designed filter has a pole with modulus {0} (not strictly inside the unit circle)")]
    UnstableDesign(f64),
    #[error("signal of {len} samples is too short, need more than {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {needed} samples, got {len}")]
    TooFewSamples { len: usize, needed: usize },
    #[error("segment of {segment} samples longer than signal of {len} samples")]
    SegmentTooLong { segment: usize, len: usize },
    #[error("series has zero variance")]
    ZeroVariance,
}

/// Percentile of `x` (0..=100) by linear interpolation between order statistics.
pub fn percentile(x: &[f64], pct: f64) -> Result<f64, DspError> {
    if x.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, pct))
}

pub(crate) fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = (pct.clamp(0.0, 100.0) * (sorted.len() - 1) as f64) / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Clamps samples below the `lo_pct` percentile and above the `hi_pct` percentile
/// to those percentile values.
pub fn winsorize(x: &[f64], lo_pct: f64, hi_pct: f64) -> Result<Vec<f64>, DspError> {
    if x.len() < 2 {
        return Err(DspError::EmptyInput);
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, lo_pct);
    let hi = percentile_sorted(&sorted, hi_pct);
    Ok(x.iter().map(|&v| v.clamp(lo, hi)).collect())
}

/// Rescales to `[0, 1]`; a constant input maps to all zeros.
pub fn minmax_normalize(x: &[f64]) -> Vec<f64> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; x.len()];
    }
    x.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentile_matches_order_statistics() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        // position 0.02 * 99 = 1.98 between the 2nd and 3rd order statistics
        assert!((percentile(&x, 2.0).unwrap() - 2.98).abs() < 1e-12);
        assert!((percentile(&x, 98.0).unwrap() - 98.02).abs() < 1e-12);
        assert_eq!(percentile(&x, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&x, 100.0).unwrap(), 100.0);
    }

    #[test]
    fn winsorize_ramp() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let out = winsorize(&x, 2.0, 98.0).unwrap();
        let min = out.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((min - 2.98).abs() < 1e-12);
        assert!((max - 98.02).abs() < 1e-12);
        assert_eq!(out[50], x[50]);
    }

    #[test]
    fn winsorize_constant_and_short() {
        assert_eq!(winsorize(&[3.0; 10], 2.0, 98.0).unwrap(), vec![3.0; 10]);
        assert_eq!(winsorize(&[1.0], 2.0, 98.0), Err(DspError::EmptyInput));
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[5.0; 4]), vec![0.0; 4]);
    }

    proptest! {
        #[test]
        fn winsorize_bounds(x in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let out = winsorize(&x, 2.0, 98.0).unwrap();
            let lo = percentile(&x, 2.0).unwrap();
            let hi = percentile(&x, 98.0).unwrap();
            prop_assert!(out.iter().all(|&v| v >= lo && v <= hi));
        }

        // Idempotent whenever both percentile positions land on order statistics
        // (n - 1 divisible by 50); otherwise interpolation shifts the limits inward.
        #[test]
        fn winsorize_idempotent_on_grid_lengths(
            k in 1usize..4,
            seed in prop::collection::vec(-1e3f64..1e3, 151),
        ) {
            let x = &seed[..50 * k + 1];
            let out = winsorize(x, 2.0, 98.0).unwrap();
            let again = winsorize(&out, 2.0, 98.0).unwrap();
            prop_assert_eq!(out, again);
        }

        #[test]
        fn minmax_range_and_idempotence(x in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let out = minmax_normalize(&x);
            prop_assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                prop_assert!(out.contains(&0.0));
                prop_assert!(out.contains(&1.0));
            }
            let again = minmax_normalize(&out);
            for (a, b) in out.iter().zip(&again) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
