use super::{BvpConfig, BvpError};
use crate::dsp::{design_butterworth, filtfilt, FilterKind};

/// Centred moving average of odd width `w`, averaging only the samples that exist at the
/// edges.
fn centred_mean(x: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn odd_width(seconds: f64, fs_hz: f64) -> usize {
    let w = (seconds * fs_hz).round().max(1.0) as usize;
    if w.is_multiple_of(2) {
        w + 1
    } else {
        w
    }
}

/// Two-moving-average systolic peak detector.
///
/// The signal is bandpassed, negative half-waves removed and squared. Blocks of interest
/// are runs where the short (peak-width) average exceeds the long (beat-width) average
/// plus `beta · mean(squared)`. Each block at least one peak-width long contributes the
/// position of its filtered-signal maximum, subject to a refractory period.
pub fn detect_systolic_peaks(x: &[f64], fs_hz: f64, cfg: &BvpConfig) -> Result<Vec<usize>, BvpError> {
    let (lo, hi) = cfg.peak_band_hz;
    let bp = design_butterworth(cfg.peak_band_order, &[lo, hi], fs_hz, FilterKind::Bandpass)?;
    let filtered = filtfilt(&bp, x)?;
    let squared: Vec<f64> = filtered.iter().map(|v| v.max(0.0).powi(2)).collect();

    let w_peak = odd_width(cfg.w_peak_s, fs_hz);
    let w_beat = odd_width(cfg.w_beat_s, fs_hz);
    let ma_peak = centred_mean(&squared, w_peak);
    let ma_beat = centred_mean(&squared, w_beat);
    let offset = cfg.beta * squared.iter().sum::<f64>() / squared.len().max(1) as f64;

    let refractory = (cfg.refractory_s * fs_hz).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    let mut i = 0;
    let n = x.len();
    while i < n {
        if ma_peak[i] <= ma_beat[i] + offset {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && ma_peak[i] > ma_beat[i] + offset {
            i += 1;
        }
        if i - start < w_peak {
            continue;
        }
        let peak = (start..i)
            .max_by(|&a, &b| filtered[a].total_cmp(&filtered[b]))
            .expect("non-empty block");
        match peaks.last() {
            Some(&last) if peak - last < refractory => {}
            _ => peaks.push(peak),
        }
    }
    if peaks.is_empty() {
        return Err(BvpError::NoBeatsDetected);
    }
    Ok(peaks)
}
