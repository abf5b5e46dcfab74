//! Leave-one-subject-out evaluation of the network and the forest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::SignalGroup;
use crate::forest::{fit_forest, Forest, ForestConfig, ForestError};
use crate::metrics::{accuracy, balanced_accuracy, confusion};
use crate::nn::{train, NnModel, TrainConfig, TrainError};
use crate::numfmt::sig9;
use crate::windowing::{FeatureRow, WindowConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leave-one-subject-out needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("rows contain a single class")]
    SingleClassData,
    #[error("fold {subject}: {source}")]
    NnFold { subject: String, source: TrainError },
    #[error("fold {subject}: {source}")]
    RfFold { subject: String, source: ForestError },
    #[error("fold {subject}: {reason}")]
    Fold { subject: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nn,
    Rf,
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nn" => Ok(ModelKind::Nn),
            "rf" => Ok(ModelKind::Rf),
            _ => Err(format!("unknown model `{s}` (expected nn or rf)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Nn => "nn",
            ModelKind::Rf => "rf",
        })
    }
}

/// The four trials: each signal on its own, or all three fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalSet {
    Eda,
    Bvp,
    St,
    Fusion,
}

impl SignalSet {
    pub const ALL: [SignalSet; 4] = [SignalSet::Eda, SignalSet::Bvp, SignalSet::St, SignalSet::Fusion];

    pub fn groups(self) -> Vec<SignalGroup> {
        match self {
            SignalSet::Eda => vec![SignalGroup::Eda],
            SignalSet::Bvp => vec![SignalGroup::Bvp],
            SignalSet::St => vec![SignalGroup::St],
            SignalSet::Fusion => SignalGroup::ALL.to_vec(),
        }
    }
}

impl FromStr for SignalSet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "eda" => Ok(SignalSet::Eda),
            "bvp" => Ok(SignalSet::Bvp),
            "st" => Ok(SignalSet::St),
            "fusion" => Ok(SignalSet::Fusion),
            _ => Err(format!("unknown signal set `{s}` (expected eda, bvp, st or fusion)")),
        }
    }
}

impl fmt::Display for SignalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalSet::Eda => "eda",
            SignalSet::Bvp => "bvp",
            SignalSet::St => "st",
            SignalSet::Fusion => "fusion",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub subject_id: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per subject (sorted by id); the test set is that subject's rows.
pub fn loso_folds(rows: &[FeatureRow]) -> Result<Vec<Fold>, EvalError> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_subject.entry(r.subject_id.as_str()).or_default().push(i);
    }
    if by_subject.len() < 2 {
        return Err(EvalError::TooFewSubjects(by_subject.len()));
    }
    Ok(by_subject
        .into_iter()
        .map(|(s, test)| Fold {
            subject_id: s.to_string(),
            train: (0..rows.len()).filter(|i| rows[*i].subject_id != s).collect(),
            test,
        })
        .collect())
}

/// Seeded per-class shuffle; each class sends `round((1 - train_frac) * n_c)` rows
/// (at least one, and never all) to validation. Returns sorted positions into `labels`.
pub fn stratified_shuffle_split(
    labels: &[u8],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(EvalError::SingleClassData);
        }
        idx.shuffle(&mut rng);
        let n_val = (((1.0 - train_frac) * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub signals: SignalSet,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub nn: TrainConfig,
    pub rf: ForestConfig,
    /// Window parameters of the feature matrix, echoed into the report.
    pub window: Option<WindowConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Nn,
            signals: SignalSet::Fusion,
            train_fraction: 0.8,
            split_seed: 42,
            nn: TrainConfig::default(),
            rf: ForestConfig::default(),
            window: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Nn(Box<NnModel>),
    Rf(Box<Forest>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject_id: String,
    pub n_windows: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// `[[tn, fp], [fn, tp]]`.
    pub confusion: [[usize; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: MeanStd,
    pub balanced_accuracy: MeanStd,
    pub std_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub subjects: Vec<SubjectResult>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn from_subjects(config: ExperimentConfig, subjects: Vec<SubjectResult>) -> Self {
        let acc: Vec<f64> = subjects.iter().map(|s| s.accuracy).collect();
        let ba: Vec<f64> = subjects.iter().map(|s| s.balanced_accuracy).collect();
        Self {
            config,
            subjects,
            aggregate: Aggregate {
                accuracy: MeanStd::of(&acc),
                balanced_accuracy: MeanStd::of(&ba),
                std_convention: "population".into(),
            },
        }
    }
}

fn select_rows(rows: &[FeatureRow], idx: &[usize]) -> Vec<FeatureRow> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

/// Rows restricted to the selected signal columns, in EDA, BVP, ST order.
pub fn signal_matrix(rows: &[FeatureRow], signals: SignalSet) -> Array2<f64> {
    let groups = signals.groups();
    let width: usize = groups.iter().map(|g| g.width()).sum();
    let flat: Vec<f64> = rows
        .iter()
        .flat_map(|r| groups.iter().flat_map(move |&g| r.group(g).iter().copied()))
        .collect();
    Array2::from_shape_vec((rows.len(), width), flat).expect("consistent widths")
}

pub fn labels(rows: &[FeatureRow]) -> Vec<u8> {
    rows.iter().map(|r| r.label.as_u8()).collect()
}

/// Fits on `train` (the network carves its validation split from it) and scores `test`.
pub fn run_fold(
    rows: &[FeatureRow],
    fold: &Fold,
    cfg: &ExperimentConfig,
) -> Result<(SubjectResult, FittedModel), EvalError> {
    let train_rows = select_rows(rows, &fold.train);
    let test_rows = select_rows(rows, &fold.test);
    let y_test = labels(&test_rows);
    let (pred, model) = match cfg.model {
        ModelKind::Nn => {
            let nn_err = |source| EvalError::NnFold {
                subject: fold.subject_id.clone(),
                source,
            };
            let y = labels(&train_rows);
            let (tr, va) = stratified_shuffle_split(&y, cfg.train_fraction, cfg.split_seed).map_err(|_| {
                EvalError::Fold {
                    subject: fold.subject_id.clone(),
                    reason: "training rows need at least two windows of each class".into(),
                }
            })?;
            let outcome = train(
                &select_rows(&train_rows, &tr),
                &select_rows(&train_rows, &va),
                &cfg.signals.groups(),
                &cfg.nn,
            )
            .map_err(nn_err)?;
            let (pred, _) = outcome
                .model
                .predict(&test_rows)
                .map_err(|e| nn_err(TrainError::Nn(e)))?;
            (pred, FittedModel::Nn(Box::new(outcome.model)))
        }
        ModelKind::Rf => {
            let forest = fit_forest(
                &signal_matrix(&train_rows, cfg.signals),
                &labels(&train_rows),
                &cfg.rf,
            )
            .map_err(|source| EvalError::RfFold {
                subject: fold.subject_id.clone(),
                source,
            })?;
            let (pred, _) = forest.predict(&signal_matrix(&test_rows, cfg.signals));
            (pred, FittedModel::Rf(Box::new(forest)))
        }
    };
    Ok((subject_result(&fold.subject_id, &y_test, &pred), model))
}

pub fn subject_result(subject_id: &str, y_true: &[u8], y_pred: &[u8]) -> SubjectResult {
    SubjectResult {
        subject_id: subject_id.to_string(),
        n_windows: y_true.len(),
        accuracy: accuracy(y_true, y_pred),
        balanced_accuracy: balanced_accuracy(y_true, y_pred),
        confusion: confusion(y_true, y_pred),
    }
}

/// All LOSO folds in parallel; results come back in subject order.
pub fn run_folds(
    rows: &[FeatureRow],
    cfg: &ExperimentConfig,
) -> Result<Vec<(SubjectResult, FittedModel)>, EvalError> {
    let y = labels(rows);
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(EvalError::SingleClassData);
    }
    let folds = loso_folds(rows)?;
    folds.par_iter().map(|f| run_fold(rows, f, cfg)).collect()
}

pub fn run_experiment(rows: &[FeatureRow], cfg: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    let results = run_folds(rows, cfg)?;
    Ok(EvalReport::from_subjects(
        cfg.clone(),
        results.into_iter().map(|(r, _)| r).collect(),
    ))
}

/// Writes `<stem>.csv` (one row per subject) and `<stem>.json` (full report).
pub fn write_report(dir: impl AsRef<Path>, stem: &str, report: &EvalReport) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| EvalError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut csv = String::from("subject_id,n_windows,accuracy,balanced_accuracy,tn,fp,fn,tp\n");
    for s in &report.subjects {
        let c = s.confusion;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.subject_id,
            s.n_windows,
            sig9(s.accuracy),
            sig9(s.balanced_accuracy),
            c[0][0],
            c[0][1],
            c[1][0],
            c[1][1]
        ));
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, csv).map_err(io(&csv_path))?;
    let json_path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(report).expect("report serialises");
    std::fs::write(&json_path, json).map_err(io(&json_path))
}
