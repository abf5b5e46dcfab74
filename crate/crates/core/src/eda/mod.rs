//! Electrodermal activity: window cleaning, tonic/phasic decomposition, SCR events and
//! the 36-dimensional feature vector.

pub mod cvx;
mod features;
mod scr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, design_butterworth, filtfilt, DspError, FilterKind};

pub use cvx::CvxEdaParams;
pub use features::{extract_eda_features, extract_from_preprocessed, shape_features, EDA_FEATURES};
pub use scr::{detect_scr_events, ScrEvents};

/// Shortest window the decomposition accepts, in seconds.
pub const MIN_DECOMPOSE_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EdaError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("EDA window of {len} samples is shorter than the {needed} required")]
    TooShort { len: usize, needed: usize },
    #[error("cvxEDA did not converge after {iterations} iterations (residual {residual:e})")]
    SolverNotConverged { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionMode {
    CvxEda,
    Simple,
}

impl std::str::FromStr for DecompositionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cvxeda" => Ok(Self::CvxEda),
            "simple" => Ok(Self::Simple),
            other => Err(format!("unknown decomposition mode `{other}` (cvxeda|simple)")),
        }
    }
}

/// Scope of the min-max normalisation applied after filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Each window is scaled to [0, 1] on its own.
    Window,
    /// Windows are scaled by the range of the subject's whole cleaned recording.
    Subject,
}

impl std::str::FromStr for Normalization {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "window" => Ok(Self::Window),
            "subject" => Ok(Self::Subject),
            other => Err(format!("unknown normalization `{other}` (window|subject)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaConfig {
    pub wavelet_levels: usize,
    pub lowpass_hz: f64,
    pub lowpass_order: usize,
    pub normalization: Normalization,
    pub mode: DecompositionMode,
    /// Cutoff of the tonic lowpass in simple mode.
    pub simple_tonic_hz: f64,
    pub simple_tonic_order: usize,
    pub cvx: CvxEdaParams,
    /// SCR onset threshold as a fraction of the window's phasic maximum.
    pub min_amplitude_frac: f64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            wavelet_levels: 3,
            lowpass_hz: 0.5,
            lowpass_order: 4,
            normalization: Normalization::Window,
            mode: DecompositionMode::CvxEda,
            simple_tonic_hz: 0.05,
            simple_tonic_order: 2,
            cvx: CvxEdaParams::default(),
            min_amplitude_frac: 0.1,
        }
    }
}

/// Tonic (SCL) and phasic (SCR) components of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct EdaDecomposition {
    pub tonic: Vec<f64>,
    pub phasic: Vec<f64>,
    /// Sparse sudomotor driver; empty in simple mode.
    pub driver: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Wavelet denoising followed by the zero-phase lowpass, without normalisation.
pub fn clean_eda(w: &[f64], fs_hz: f64, cfg: &EdaConfig) -> Result<Vec<f64>, EdaError> {
    let denoised = dsp::wavelet_denoise(w, cfg.wavelet_levels)?;
    let lp = design_butterworth(cfg.lowpass_order, &[cfg.lowpass_hz], fs_hz, FilterKind::Lowpass)?;
    Ok(filtfilt(&lp, &denoised)?)
}

/// Cleans a raw window and scales it to [0, 1].
pub fn preprocess_eda(w: &[f64], fs_hz: f64, cfg: &EdaConfig) -> Result<Vec<f64>, EdaError> {
    Ok(dsp::minmax_normalize(&clean_eda(w, fs_hz, cfg)?))
}

/// Cleans a raw window and scales it by externally supplied `(min, max)` bounds.
pub fn preprocess_eda_with_bounds(
    w: &[f64],
    fs_hz: f64,
    cfg: &EdaConfig,
    (lo, hi): (f64, f64),
) -> Result<Vec<f64>, EdaError> {
    let clean = clean_eda(w, fs_hz, cfg)?;
    let span = hi - lo;
    if span <= 0.0 {
        return Ok(vec![0.0; clean.len()]);
    }
    Ok(clean.iter().map(|v| (v - lo) / span).collect())
}

pub fn decompose_eda(x: &[f64], fs_hz: f64, cfg: &EdaConfig) -> Result<EdaDecomposition, EdaError> {
    let needed = (MIN_DECOMPOSE_S * fs_hz).round() as usize;
    if x.len() < needed {
        return Err(EdaError::TooShort {
            len: x.len(),
            needed,
        });
    }
    match cfg.mode {
        DecompositionMode::Simple => {
            let lp = design_butterworth(
                cfg.simple_tonic_order,
                &[cfg.simple_tonic_hz],
                fs_hz,
                FilterKind::Lowpass,
            )?;
            let tonic = filtfilt(&lp, x)?;
            let phasic: Vec<f64> = x.iter().zip(&tonic).map(|(a, b)| a - b).collect();
            let residual = x
                .iter()
                .zip(&tonic)
                .zip(&phasic)
                .map(|((v, t), p)| v - t - p)
                .collect();
            Ok(EdaDecomposition {
                tonic,
                phasic,
                driver: Vec::new(),
                residual,
            })
        }
        DecompositionMode::CvxEda => {
            let sol = cvx::solve(x, fs_hz, &cfg.cvx).map_err(|e| EdaError::SolverNotConverged {
                iterations: e.iterations,
                residual: e.residual,
            })?;
            let residual = x
                .iter()
                .zip(&sol.tonic)
                .zip(&sol.phasic)
                .map(|((v, t), p)| v - t - p)
                .collect();
            Ok(EdaDecomposition {
                tonic: sol.tonic,
                phasic: sol.phasic,
                driver: sol.driver,
                residual,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn constant_window_preprocesses_to_zeros() {
        let out = preprocess_eda(&[3.2; 240], 4.0, &EdaConfig::default()).unwrap();
        assert_eq!(out, vec![0.0; 240]);
    }

    #[test]
    fn jittered_ramp_tracks_ramp() {
        let fs = 4.0;
        let raw: Vec<f64> = (0..240)
            .map(|i| {
                let t = i as f64 / fs;
                2.0 + 0.02 * t + 0.05 * (2.0 * PI * 1.9 * t).sin()
            })
            .collect();
        let ramp: Vec<f64> = (0..240).map(|i| i as f64).collect();
        let out = preprocess_eda(&raw, fs, &EdaConfig::default()).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        let r = dsp::stats::pearson_corr(&out, &dsp::minmax_normalize(&ramp)).unwrap();
        assert!(r > 0.99, "corr {r}");
    }

    #[test]
    fn drift_stays_in_tonic_in_both_modes() {
        let fs = 4.0;
        let x: Vec<f64> = (0..240)
            .map(|i| 0.5 + 0.3 * (2.0 * PI * 0.01 * i as f64 / fs).sin())
            .collect();
        let mut tonics = Vec::new();
        for mode in [DecompositionMode::CvxEda, DecompositionMode::Simple] {
            let cfg = EdaConfig {
                mode,
                ..EdaConfig::default()
            };
            let d = decompose_eda(&x, fs, &cfg).unwrap();
            assert_eq!(d.tonic.len(), x.len());
            assert!(rms(&d.phasic) < 0.05 * rms(&d.tonic), "{mode:?}");
            tonics.push(d.tonic);
        }
        let diff: Vec<f64> = tonics[0].iter().zip(&tonics[1]).map(|(a, b)| a - b).collect();
        assert!(rms(&diff) < 0.1 * rms(&tonics[1]));
    }

    #[test]
    fn too_short_for_decomposition() {
        assert_eq!(
            decompose_eda(&[0.0; 39], 4.0, &EdaConfig::default()),
            Err(EdaError::TooShort { len: 39, needed: 40 })
        );
    }
}
