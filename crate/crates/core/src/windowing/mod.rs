//! Sliding windows over subject records and the fused feature matrix.

mod matrix;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bvp::{extract_bvp_features, BvpConfig};
use crate::data::{label_for_span, BinaryLabel, SubjectRecord};
use crate::dictionary::{SignalGroup, FUSED_WIDTH};
use crate::eda::{self, EdaConfig, Normalization};
use crate::st::extract_st_features;

pub use matrix::{load_matrix, save_drop_log, save_matrix, MatrixError};

/// Slack when comparing window edges with record durations, in seconds.
const EDGE_EPS_S: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_size_s: f64,
    pub window_shift_s: f64,
    pub coverage_threshold: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_size_s: 60.0,
            window_shift_s: 0.25,
            coverage_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WindowError {
    #[error("record `{subject_id}` lasts {duration_s:.3} s, shorter than the {window_s} s window")]
    RecordTooShort {
        subject_id: String,
        duration_s: f64,
        window_s: f64,
    },
    #[error("invalid window configuration: {0}")]
    InvalidConfig(String),
}

impl WindowConfig {
    /// Checks the shift is positive and the window spans a whole number of samples at
    /// every rate in `rates_hz`.
    pub fn validate(&self, rates_hz: &[f64]) -> Result<(), WindowError> {
        if !(self.window_shift_s > 0.0) {
            return Err(WindowError::InvalidConfig("window shift must be positive".into()));
        }
        if !(self.window_size_s > 0.0) {
            return Err(WindowError::InvalidConfig("window size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.coverage_threshold) || self.coverage_threshold == 0.0 {
            return Err(WindowError::InvalidConfig(
                "coverage threshold must lie in (0, 1]".into(),
            ));
        }
        for &fs in rates_hz {
            let samples = self.window_size_s * fs;
            if (samples - samples.round()).abs() > 1e-6 {
                return Err(WindowError::InvalidConfig(format!(
                    "window of {} s is not a whole number of samples at {fs} Hz",
                    self.window_size_s
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub label: BinaryLabel,
}

/// Windows starting at 0 and stepping by the shift, each fully inside the record.
/// Windows whose span has no binary label are left out.
pub fn enumerate_windows(
    rec: &SubjectRecord,
    cfg: &WindowConfig,
) -> Result<Vec<LabeledWindow>, WindowError> {
    cfg.validate(&[
        rec.eda.sampling_rate_hz(),
        rec.bvp.sampling_rate_hz(),
        rec.st.sampling_rate_hz(),
    ])?;
    let duration = rec.duration_s();
    if duration + EDGE_EPS_S < cfg.window_size_s {
        return Err(WindowError::RecordTooShort {
            subject_id: rec.subject_id.clone(),
            duration_s: duration,
            window_s: cfg.window_size_s,
        });
    }
    let count = ((duration - cfg.window_size_s + EDGE_EPS_S) / cfg.window_shift_s).floor() as usize + 1;
    Ok((0..count)
        .filter_map(|k| {
            let start_s = k as f64 * cfg.window_shift_s;
            let end_s = start_s + cfg.window_size_s;
            label_for_span(&rec.intervals, start_s, end_s, cfg.coverage_threshold).map(|label| {
                LabeledWindow {
                    start_s,
                    end_s,
                    label,
                }
            })
        })
        .collect())
}

/// One window's features. The fused vector is the concatenation EDA, BVP, ST.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject_id: String,
    pub window_start_s: f64,
    pub label: BinaryLabel,
    pub eda: [f64; 36],
    pub bvp: [f64; 30],
    pub st: [f64; 6],
}

impl FeatureRow {
    pub fn fused(&self) -> [f64; FUSED_WIDTH] {
        let mut out = [0.0; FUSED_WIDTH];
        out[SignalGroup::Eda.fused_range()].copy_from_slice(&self.eda);
        out[SignalGroup::Bvp.fused_range()].copy_from_slice(&self.bvp);
        out[SignalGroup::St.fused_range()].copy_from_slice(&self.st);
        out
    }

    pub fn group(&self, g: SignalGroup) -> &[f64] {
        match g {
            SignalGroup::Eda => &self.eda,
            SignalGroup::Bvp => &self.bvp,
            SignalGroup::St => &self.st,
        }
    }

    pub(crate) fn from_fused(
        subject_id: String,
        window_start_s: f64,
        label: BinaryLabel,
        fused: &[f64],
    ) -> Self {
        let take = |g: SignalGroup| &fused[g.fused_range()];
        Self {
            subject_id,
            window_start_s,
            label,
            eda: take(SignalGroup::Eda).try_into().unwrap(),
            bvp: take(SignalGroup::Bvp).try_into().unwrap(),
            st: take(SignalGroup::St).try_into().unwrap(),
        }
    }
}

/// A window that produced no row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedWindow {
    pub subject_id: String,
    pub window_start_s: f64,
    pub signal: SignalGroup,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub eda: EdaConfig,
    pub bvp: BvpConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureRow>,
    pub dropped: Vec<DroppedWindow>,
}

impl FeatureMatrix {
    pub fn extend(&mut self, other: FeatureMatrix) {
        self.rows.extend(other.rows);
        self.dropped.extend(other.dropped);
    }
}

fn window_features(
    rec: &SubjectRecord,
    w: &LabeledWindow,
    cfg: &PipelineConfig,
    eda_bounds: Option<(f64, f64)>,
) -> Result<FeatureRow, DroppedWindow> {
    let drop = |signal, reason: String| DroppedWindow {
        subject_id: rec.subject_id.clone(),
        window_start_s: w.start_s,
        signal,
        reason,
    };
    let slice = |g| {
        let ts = match g {
            SignalGroup::Eda => &rec.eda,
            SignalGroup::Bvp => &rec.bvp,
            SignalGroup::St => &rec.st,
        };
        ts.window(w.start_s, w.end_s).map_err(|e| drop(g, e.to_string()))
    };

    let eda_raw = slice(SignalGroup::Eda)?;
    let fs_eda = rec.eda.sampling_rate_hz();
    let eda = (|| {
        let x = match eda_bounds {
            Some(b) => eda::preprocess_eda_with_bounds(eda_raw, fs_eda, &cfg.eda, b)?,
            None => eda::preprocess_eda(eda_raw, fs_eda, &cfg.eda)?,
        };
        let dec = eda::decompose_eda(&x, fs_eda, &cfg.eda)?;
        eda::extract_from_preprocessed(&x, &dec, fs_eda, &cfg.eda)
    })()
    .map_err(|e| drop(SignalGroup::Eda, e.to_string()))?;

    let bvp_raw = slice(SignalGroup::Bvp)?;
    let bvp = extract_bvp_features(bvp_raw, rec.bvp.sampling_rate_hz(), &cfg.bvp)
        .map_err(|e| drop(SignalGroup::Bvp, e.to_string()))?;

    let st_raw = slice(SignalGroup::St)?;
    let st = extract_st_features(st_raw, rec.st.sampling_rate_hz())
        .map_err(|e| drop(SignalGroup::St, e.to_string()))?;

    let row = FeatureRow {
        subject_id: rec.subject_id.clone(),
        window_start_s: w.start_s,
        label: w.label,
        eda,
        bvp,
        st,
    };
    if let Some(g) = SignalGroup::ALL
        .into_iter()
        .find(|&g| row.group(g).iter().any(|v| !v.is_finite()))
    {
        return Err(drop(g, "non-finite feature".into()));
    }
    Ok(row)
}

/// Range of the subject's whole cleaned EDA, used for subject-level normalisation.
fn subject_eda_bounds(rec: &SubjectRecord, cfg: &EdaConfig) -> Result<(f64, f64), WindowError> {
    let clean = eda::clean_eda(rec.eda.samples(), rec.eda.sampling_rate_hz(), cfg)
        .map_err(|e| WindowError::InvalidConfig(format!("subject EDA cleaning failed: {e}")))?;
    let lo = clean.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = clean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Features for every labelled window of one record, in window order. Windows where a
/// pipeline fails are recorded in the drop log instead.
pub fn build_feature_matrix(
    rec: &SubjectRecord,
    cfg: &PipelineConfig,
) -> Result<FeatureMatrix, WindowError> {
    let windows = enumerate_windows(rec, &cfg.window)?;
    let bounds = match cfg.eda.normalization {
        Normalization::Window => None,
        Normalization::Subject => Some(subject_eda_bounds(rec, &cfg.eda)?),
    };
    let results: Vec<Result<FeatureRow, DroppedWindow>> = windows
        .par_iter()
        .map(|w| window_features(rec, w, cfg, bounds))
        .collect();
    let mut out = FeatureMatrix::default();
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(d) => {
                log::debug!(
                    "dropped {} window at {} s ({}): {}",
                    d.subject_id,
                    d.window_start_s,
                    d.signal,
                    d.reason
                );
                out.dropped.push(d)
            }
        }
    }
    Ok(out)
}

/// Matrix over several records, ordered by record then window start.
pub fn build_dataset_matrix(
    records: &[SubjectRecord],
    cfg: &PipelineConfig,
) -> Result<FeatureMatrix, WindowError> {
    let mut out = FeatureMatrix::default();
    for rec in records {
        let m = build_feature_matrix(rec, cfg)?;
        log::info!(
            "{}: {} rows, {} dropped windows",
            rec.subject_id,
            m.rows.len(),
            m.dropped.len()
        );
        out.extend(m);
    }
    Ok(out)
}

/// SHA-256 over subject ids, sampling rates, samples and annotations.
pub fn dataset_hash(records: &[SubjectRecord]) -> String {
    let mut h = Sha256::new();
    for rec in records {
        h.update(rec.subject_id.as_bytes());
        h.update([0u8]);
        for ts in [&rec.eda, &rec.bvp, &rec.st] {
            h.update(ts.sampling_rate_hz().to_le_bytes());
            h.update((ts.len() as u64).to_le_bytes());
            for v in ts.samples() {
                h.update(v.to_le_bytes());
            }
        }
        for iv in &rec.intervals {
            h.update(iv.start_s.to_le_bytes());
            h.update(iv.end_s.to_le_bytes());
            h.update(iv.condition.as_str().as_bytes());
        }
    }
    hex(&h.finalize())
}

/// Cache key for a feature matrix: the dataset hash, window size and shift, plus a digest
/// of the remaining pipeline settings.
pub fn cache_key(dataset_hash: &str, cfg: &PipelineConfig) -> String {
    let settings = serde_json::to_string(cfg).expect("config serialises");
    let digest = hex(&Sha256::digest(settings.as_bytes()));
    format!(
        "{}-w{}-s{}-{}",
        &dataset_hash[..16.min(dataset_hash.len())],
        cfg.window.window_size_s,
        cfg.window.window_shift_s,
        &digest[..12]
    )
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
