use super::{decompose_eda, detect_scr_events, preprocess_eda, EdaConfig, EdaDecomposition, EdaError};
use crate::dictionary::{def, FeatureDef};
use crate::dsp::stats;

pub const EDA_FEATURES: [FeatureDef; 36] = [
    def("mean", "norm", "mean of the cleaned EDA"),
    def("std", "norm", "standard deviation of the cleaned EDA"),
    def("min", "norm", "minimum of the cleaned EDA"),
    def("max", "norm", "maximum of the cleaned EDA"),
    def("slope", "norm/s", "least-squares slope of the cleaned EDA"),
    def("range", "norm", "dynamic range of the cleaned EDA"),
    def("scr_range", "norm", "dynamic range of the phasic component"),
    def("scl_mean", "norm", "mean of the tonic component"),
    def("scl_std", "norm", "standard deviation of the tonic component"),
    def("scl_time_corr", "1", "correlation between the tonic component and time"),
    def("scr_peaks", "count", "number of SCR events"),
    def("scr_amp_sum", "norm", "sum of SCR amplitudes"),
    def("scr_dur_sum", "s", "sum of SCR durations"),
    def("scr_auc", "norm*s", "area under the phasic curve within SCR events"),
    def("scr_mean", "norm", "mean of the phasic component"),
    def("scr_std", "norm", "standard deviation of the phasic component"),
    def("scr_max", "norm", "maximum of the phasic component"),
    def("scr_min", "norm", "minimum of the phasic component"),
    def("scr_d1_mean", "norm/s", "mean of the first phasic derivative"),
    def("scr_d1_std", "norm/s", "standard deviation of the first phasic derivative"),
    def("scr_d2_mean", "norm/s^2", "mean of the second phasic derivative"),
    def("scr_d2_std", "norm/s^2", "standard deviation of the second phasic derivative"),
    def("peak_mean", "norm", "mean phasic value at SCR peaks"),
    def("peak_std", "norm", "standard deviation of phasic values at SCR peaks"),
    def("peak_max", "norm", "maximum phasic value at SCR peaks"),
    def("peak_min", "norm", "minimum phasic value at SCR peaks"),
    def("scr_kurtosis", "1", "excess kurtosis of the phasic component"),
    def("scr_skewness", "1", "skewness of the phasic component"),
    def("onset_mean", "norm", "mean phasic value at SCR onsets"),
    def("onset_std", "norm", "standard deviation of phasic values at SCR onsets"),
    def("onset_max", "norm", "maximum phasic value at SCR onsets"),
    def("onset_min", "norm", "minimum phasic value at SCR onsets"),
    def("alsc", "norm", "arc length of the phasic component"),
    def("insc", "norm", "integral of the absolute phasic component"),
    def("apsc", "norm^2", "average power of the phasic component"),
    def("rmsc", "norm", "root mean square of the phasic component"),
];

/// ALSC, INSC, APSC and RMSC of a phasic trace `r`.
pub fn shape_features(r: &[f64]) -> [f64; 4] {
    let alsc = r.windows(2).map(|w| (1.0 + (w[1] - w[0]).powi(2)).sqrt()).sum();
    let insc = r.iter().map(|v| v.abs()).sum();
    let apsc = if r.is_empty() {
        0.0
    } else {
        r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
    };
    [alsc, insc, apsc, apsc.sqrt()]
}

/// Mean, std, max and min of a possibly empty list; all zero when empty.
fn summary(values: &[f64]) -> [f64; 4] {
    if values.is_empty() {
        return [0.0; 4];
    }
    let mean = stats::mean(values).unwrap_or(0.0);
    let std = stats::std(values).unwrap_or(0.0);
    let max = stats::max(values).unwrap_or(0.0);
    let min = stats::min(values).unwrap_or(0.0);
    [mean, std, max, min]
}

fn mean_std(x: &[f64]) -> [f64; 2] {
    [stats::mean(x).unwrap_or(0.0), stats::std(x).unwrap_or(0.0)]
}

/// Features of an already cleaned window `x` and its decomposition.
pub fn extract_from_preprocessed(
    x: &[f64],
    dec: &EdaDecomposition,
    fs_hz: f64,
    cfg: &EdaConfig,
) -> Result<[f64; 36], EdaError> {
    let scl = &dec.tonic;
    let scr = &dec.phasic;
    let ev = detect_scr_events(scr, fs_hz, cfg.min_amplitude_frac);

    let t: Vec<f64> = (0..scl.len()).map(|i| i as f64 / fs_hz).collect();
    let scl_corr = stats::pearson_corr(scl, &t).unwrap_or(0.0);

    let auc: f64 = ev
        .onsets
        .iter()
        .zip(&ev.ends)
        .map(|(&a, &b)| {
            scr[a..=b]
                .windows(2)
                .map(|w| 0.5 * (w[0] + w[1]) / fs_hz)
                .sum::<f64>()
        })
        .sum();
    let d1 = stats::derivative(scr, fs_hz);
    let d2 = stats::derivative(&d1, fs_hz);
    let peak_vals: Vec<f64> = ev.peaks.iter().map(|&i| scr[i]).collect();
    let onset_vals: Vec<f64> = ev.onsets.iter().map(|&i| scr[i]).collect();

    let mut f = Vec::with_capacity(36);
    f.extend([
        stats::mean(x)?,
        stats::std(x)?,
        stats::min(x)?,
        stats::max(x)?,
        stats::slope(x, fs_hz)?,
        stats::range(x)?,
        stats::range(scr)?,
    ]);
    f.extend(mean_std(scl));
    f.push(scl_corr);
    f.push(ev.len() as f64);
    f.push(ev.amplitudes.iter().sum());
    f.push(ev.durations.iter().sum());
    f.push(auc);
    f.extend(mean_std(scr));
    f.extend([stats::max(scr)?, stats::min(scr)?]);
    f.extend(mean_std(&d1));
    f.extend(mean_std(&d2));
    f.extend(summary(&peak_vals));
    f.push(stats::kurtosis(scr).unwrap_or(0.0));
    f.push(stats::skewness(scr).unwrap_or(0.0));
    f.extend(summary(&onset_vals));
    f.extend(shape_features(scr));
    Ok(f.try_into().expect("36 EDA features"))
}

/// Full EDA path for one raw window: clean, normalise, decompose, summarise.
pub fn extract_eda_features(w: &[f64], fs_hz: f64, cfg: &EdaConfig) -> Result<[f64; 36], EdaError> {
    let x = preprocess_eda(w, fs_hz, cfg)?;
    let dec = decompose_eda(&x, fs_hz, cfg)?;
    extract_from_preprocessed(&x, &dec, fs_hz, cfg)
}
