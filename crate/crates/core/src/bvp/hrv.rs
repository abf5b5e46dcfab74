use super::{BvpConfig, BvpError, NnSeries};
use crate::dictionary::{def, FeatureDef};
use crate::dsp::{band_power, stats, welch_psd};

pub const VLF_HZ: (f64, f64) = (0.003, 0.04);
pub const LF_HZ: (f64, f64) = (0.04, 0.15);
pub const HF_HZ: (f64, f64) = (0.15, 0.4);

pub const BVP_FEATURES: [FeatureDef; 30] = [
    def("hr_mean", "bpm", "mean heart rate"),
    def("hr_std", "bpm", "standard deviation of heart rate"),
    def("nn_mean", "ms", "mean NN interval"),
    def("nn_std", "ms", "standard deviation of NN intervals"),
    def("nn_kurtosis", "1", "excess kurtosis of NN intervals"),
    def("nn_skewness", "1", "skewness of NN intervals"),
    def("vlf", "ms^2", "power in 0.003-0.04 Hz"),
    def("lf", "ms^2", "power in 0.04-0.15 Hz"),
    def("hf", "ms^2", "power in 0.15-0.4 Hz"),
    def("lf_norm", "1", "LF / (LF + HF)"),
    def("hf_norm", "1", "HF / (LF + HF)"),
    def("lf_hf", "1", "LF / HF"),
    def("total_power", "ms^2", "VLF + LF + HF"),
    def("nn50", "count", "successive differences above 50 ms"),
    def("pnn50", "%", "percentage of successive differences above 50 ms"),
    def("nn20", "count", "successive differences above 20 ms"),
    def("pnn20", "%", "percentage of successive differences above 20 ms"),
    def("hti", "1", "HRV triangular index"),
    def("nn_rms", "ms", "root mean square of NN intervals"),
    def("sd1", "ms", "Poincare SD1"),
    def("sd2", "ms", "Poincare SD2"),
    def("rmssd", "ms", "root mean square of successive differences"),
    def("sdsd", "ms", "standard deviation of successive differences"),
    def("sdsd_rmssd", "1", "SDSD / RMSSD"),
    def("rel_rr_mean", "1", "mean relative RR interval"),
    def("rel_rr_median", "1", "median relative RR interval"),
    def("rel_rr_std", "1", "standard deviation of relative RR intervals"),
    def("rel_rr_rmssd", "1", "RMSSD of relative RR intervals"),
    def("rel_rr_kurtosis", "1", "excess kurtosis of relative RR intervals"),
    def("rel_rr_skewness", "1", "skewness of relative RR intervals"),
];

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn rmssd(x: &[f64]) -> f64 {
    let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    stats::rms(&d).unwrap_or(0.0)
}

/// NN intervals resampled on a uniform grid at beat times, mean removed.
fn resample_tachogram(nn: &[f64], fs_hz: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(nn.len());
    let mut acc = 0.0;
    for v in nn {
        acc += v / 1000.0;
        t.push(acc);
    }
    let span = t[t.len() - 1] - t[0];
    let n = (span * fs_hz).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let tk = t[0] + k as f64 / fs_hz;
        while j + 2 < t.len() && t[j + 1] < tk {
            j += 1;
        }
        let (t0, t1) = (t[j], t[(j + 1).min(t.len() - 1)]);
        let v = if t1 > t0 {
            let f = ((tk - t0) / (t1 - t0)).clamp(0.0, 1.0);
            nn[j] + f * (nn[(j + 1).min(nn.len() - 1)] - nn[j])
        } else {
            nn[j]
        };
        out.push(v);
    }
    let m = out.iter().sum::<f64>() / out.len() as f64;
    out.iter_mut().for_each(|v| *v -= m);
    out
}

/// Spectral band powers `[vlf, lf, hf]` of the resampled tachogram.
pub fn band_powers(nn: &[f64], cfg: &BvpConfig) -> Result<[f64; 3], BvpError> {
    let tach = resample_tachogram(nn, cfg.resample_hz);
    let segment_s = cfg.welch_segment_s.min(tach.len() as f64 / cfg.resample_hz);
    let spec = welch_psd(&tach, cfg.resample_hz, segment_s, cfg.welch_overlap)?;
    Ok([VLF_HZ, LF_HZ, HF_HZ].map(|(lo, hi)| band_power(&spec, lo, hi)))
}

fn triangular_index(nn: &[f64], bin_ms: f64) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for v in nn {
        *counts.entry((v / bin_ms).floor() as i64).or_insert(0usize) += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    ratio(nn.len() as f64, max as f64)
}

pub fn hrv_features(nn: &NnSeries, cfg: &BvpConfig) -> Result<[f64; 30], BvpError> {
    let nn = &nn.intervals_ms;
    if nn.len() < super::MIN_VALID_INTERVALS {
        return Err(BvpError::InsufficientBeats { beats: nn.len() + 1 });
    }
    let hr: Vec<f64> = nn.iter().map(|v| 60_000.0 / v).collect();
    let diff: Vec<f64> = nn.windows(2).map(|w| w[1] - w[0]).collect();
    let [vlf, lf, hf] = band_powers(nn, cfg)?;

    let count_above = |t: f64| diff.iter().filter(|d| d.abs() > t).count() as f64;
    let (nn50, nn20) = (count_above(50.0), count_above(20.0));
    let n_diff = diff.len() as f64;

    let var_nn = stats::variance(nn)?;
    let var_diff = stats::variance(&diff).unwrap_or(0.0);
    let sd1 = (0.5 * var_diff).sqrt();
    let sd2 = (2.0 * var_nn - 0.5 * var_diff).max(0.0).sqrt();
    let rmssd_nn = rmssd(nn);
    let sdsd = var_diff.sqrt();

    let rel: Vec<f64> = nn
        .windows(2)
        .map(|w| 2.0 * (w[1] - w[0]) / (w[1] + w[0]))
        .collect();

    Ok([
        stats::mean(&hr)?,
        stats::std(&hr)?,
        stats::mean(nn)?,
        var_nn.sqrt(),
        stats::kurtosis(nn).unwrap_or(0.0),
        stats::skewness(nn).unwrap_or(0.0),
        vlf,
        lf,
        hf,
        ratio(lf, lf + hf),
        ratio(hf, lf + hf),
        ratio(lf, hf),
        vlf + lf + hf,
        nn50,
        100.0 * ratio(nn50, n_diff),
        nn20,
        100.0 * ratio(nn20, n_diff),
        triangular_index(nn, cfg.hti_bin_ms),
        stats::rms(nn)?,
        sd1,
        sd2,
        rmssd_nn,
        sdsd,
        ratio(sdsd, rmssd_nn),
        stats::mean(&rel)?,
        stats::median(&rel)?,
        stats::std(&rel).unwrap_or(0.0),
        rmssd(&rel),
        stats::kurtosis(&rel).unwrap_or(0.0),
        stats::skewness(&rel).unwrap_or(0.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn features(nn: Vec<f64>) -> [f64; 30] {
        hrv_features(&NnSeries { intervals_ms: nn }, &BvpConfig::default()).unwrap()
    }

    #[test]
    fn constant_nn() {
        let f = features(vec![1000.0; 60]);
        assert!((f[0] - 60.0).abs() < 1e-12);
        for i in [13, 14, 19, 21, 22] {
            assert_eq!(f[i], 0.0, "feature {}", i + 1);
        }
        assert!(f[24..].iter().all(|&v| v == 0.0));
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn alternating_nn_exceeds_both_thresholds() {
        let nn: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 1000.0 } else { 1060.0 }).collect();
        let f = features(nn);
        assert_eq!(f[14], 100.0);
        assert_eq!(f[16], 100.0);
    }

    #[test]
    fn respiratory_modulation_lands_in_hf() {
        // beat-to-beat tachogram modulated at 0.25 Hz
        let mut t = 0.0;
        let mut nn = Vec::new();
        while t < 300.0 {
            let v = 900.0 + 50.0 * (2.0 * PI * 0.25 * t).sin();
            nn.push(v);
            t += v / 1000.0;
        }
        let f = features(nn);
        let (lf, hf) = (f[7], f[8]);
        assert!(hf > 5.0 * lf, "LF {lf} HF {hf}");
        assert!((f[9] + f[10] - 1.0).abs() < 1e-12);
        assert_eq!(f[12], f[6] + f[7] + f[8]);
    }

    #[test]
    fn triangular_index_bins() {
        assert_eq!(triangular_index(&[1000.0, 1001.0, 1003.0, 1020.0], 7.8125), 4.0 / 3.0);
    }

    proptest! {
        #[test]
        fn hrv_invariants(nn in proptest::collection::vec(400.0f64..1500.0, 8..120)) {
            let f = features(nn.clone());
            prop_assert!(f.iter().all(|v| v.is_finite()));
            prop_assert!(f[14] <= f[16]);
            prop_assert!(f[6] >= 0.0 && f[7] >= 0.0 && f[8] >= 0.0);
            prop_assert_eq!(f[12], f[6] + f[7] + f[8]);
            if f[7] + f[8] > 0.0 {
                prop_assert!((f[9] + f[10] - 1.0).abs() < 1e-12);
            }
            let var_nn = stats::variance(&nn).unwrap();
            let diff: Vec<f64> = nn.windows(2).map(|w| w[1] - w[0]).collect();
            let var_diff = stats::variance(&diff).unwrap();
            // the identity holds whenever SD2 is not clamped at zero
            prop_assume!(2.0 * var_nn >= 0.5 * var_diff);
            let lhs = f[19] * f[19] + f[20] * f[20];
            prop_assert!((lhs - 2.0 * var_nn).abs() <= 1e-9 * 2.0 * var_nn);
        }
    }
}
