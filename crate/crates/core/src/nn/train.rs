use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{average_heads, bce_loss, row_weights, Adam, Head, HiddenOpts, ModelSpec, Network, NnError};
use crate::dictionary::SignalGroup;
use crate::metrics::balanced_accuracy;
use crate::windowing::FeatureRow;

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "stresskit-nn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub batch_norm: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Class-balanced BCE weights `n / (2 n_c)`.
    pub weighted_loss: bool,
    /// Average the fusion head together with the branch heads at prediction time.
    pub fusion_in_prediction: bool,
    /// Hidden layers per branch, each as wide as the branch input.
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub fusion_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            batch_size: 2048,
            dropout: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 200,
            patience: 20,
            seed: 42,
            batch_norm: true,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            weighted_loss: false,
            fusion_in_prediction: true,
            hidden_layers: 1,
            embed_dim: 16,
            fusion_hidden: 32,
        }
    }
}

impl TrainConfig {
    pub fn hidden_opts(&self) -> HiddenOpts {
        HiddenOpts {
            batch_norm: self.batch_norm,
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.embed_dim == 0 || self.fusion_hidden == 0 {
            return Err("layer widths must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{split} split contains a single class")]
    SingleClassSplit { split: &'static str },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Column-wise z-score with statistics from the training rows. Zero-variance columns
/// keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let std = x
            .var_axis(Axis(0), 0.0)
            .mapv(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
        Self { mean, std }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }
}

fn group_matrix(rows: &[FeatureRow], g: SignalGroup) -> Array2<f64> {
    let w = g.width();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.group(g).iter().copied()).collect();
    Array2::from_shape_vec((rows.len(), w), flat).expect("fixed group width")
}

pub(crate) fn labels(rows: &[FeatureRow]) -> Vec<u8> {
    rows.iter().map(|r| r.label.as_u8()).collect()
}

/// A trained network with the scaling it expects and the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnModel {
    pub signals: Vec<SignalGroup>,
    pub network: Network,
    pub scalers: Vec<Standardizer>,
    pub config: TrainConfig,
    pub best_epoch: usize,
}

impl NnModel {
    pub fn inputs(&self, rows: &[FeatureRow]) -> Vec<Array2<f64>> {
        self.signals
            .iter()
            .zip(&self.scalers)
            .map(|(&g, s)| s.apply(&group_matrix(rows, g)))
            .collect()
    }

    fn prediction_heads(&self) -> Vec<Head> {
        let mut heads: Vec<Head> = self.signals.iter().map(|&g| Head::Branch(g)).collect();
        if self.network.fusion.is_some() && self.config.fusion_in_prediction {
            heads.push(Head::Fusion);
        }
        heads
    }

    fn proba_from_inputs(&self, inputs: &[Array2<f64>]) -> Result<Array1<f64>, NnError> {
        let probs = self.network.forward_eval(inputs)?;
        Ok(average_heads(&self.network.spec, &probs, &self.prediction_heads()))
    }

    /// Stress probability (mean of the prediction heads) per row.
    pub fn predict_proba(&self, rows: &[FeatureRow]) -> Result<Vec<f64>, NnError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.proba_from_inputs(&self.inputs(rows))?.to_vec())
    }

    /// Labels (`probability >= 0.5` is stress) and probabilities.
    pub fn predict(&self, rows: &[FeatureRow]) -> Result<(Vec<u8>, Vec<f64>), NnError> {
        let p = self.predict_proba(rows)?;
        Ok((p.iter().map(|&v| u8::from(v >= 0.5)).collect(), p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_balanced_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NnModel,
    pub history: Vec<EpochStats>,
}

fn has_both_classes(y: &[u8]) -> bool {
    y.contains(&0) && y.contains(&1)
}

/// Mini-batch Adam on shuffled training rows. After every epoch the validation balanced
/// accuracy is measured; the best epoch (ties broken by lower validation loss) is kept
/// and training stops after `patience` epochs without improvement.
pub fn train(
    train_rows: &[FeatureRow],
    val_rows: &[FeatureRow],
    signals: &[SignalGroup],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate().map_err(TrainError::InvalidConfig)?;
    if signals.is_empty() {
        return Err(TrainError::InvalidConfig("no signals selected".into()));
    }
    let y_train = labels(train_rows);
    let y_val = labels(val_rows);
    if !has_both_classes(&y_train) {
        return Err(TrainError::SingleClassSplit { split: "training" });
    }
    if !has_both_classes(&y_val) {
        return Err(TrainError::SingleClassSplit { split: "validation" });
    }

    let spec = ModelSpec::for_signals(signals, cfg);
    spec.validate().map_err(TrainError::InvalidConfig)?;
    let raw: Vec<Array2<f64>> = signals.iter().map(|&g| group_matrix(train_rows, g)).collect();
    let scalers: Vec<Standardizer> = raw.iter().map(Standardizer::fit).collect();
    let x_train: Vec<Array2<f64>> = raw.iter().zip(&scalers).map(|(x, s)| s.apply(x)).collect();

    let mut model = NnModel {
        signals: signals.to_vec(),
        network: Network::init(&spec, cfg.seed),
        scalers,
        config: cfg.clone(),
        best_epoch: 0,
    };
    let x_val = model.inputs(val_rows);
    let w_train = row_weights(&y_train, cfg.weighted_loss);
    let w_val = row_weights(&y_val, cfg.weighted_loss);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let mut adam = Adam::new(
        &model.network,
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );

    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut best: Option<(f64, f64, Network, usize)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            let xb: Vec<Array2<f64>> = x_train.iter().map(|x| x.select(Axis(0), idx)).collect();
            let yb: Vec<u8> = idx.iter().map(|&i| y_train[i]).collect();
            let wb = w_train.select(Axis(0), idx);
            let cache = model.network.forward_train(&xb, &mut dropout_rng)?;
            let (loss, dlogits) = bce_loss(&cache.probs, &yb, &wb);
            let grad = model.network.backward(&cache, &dlogits);
            adam.step(&mut model.network, &grad);
            model.network.update_running_stats(&cache);
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
        }

        let val_probs = model.network.forward_eval(&x_val)?;
        let (val_loss, _) = bce_loss(&val_probs, &y_val, &w_val);
        let p = average_heads(&model.network.spec, &val_probs, &model.prediction_heads());
        let pred: Vec<u8> = p.iter().map(|&v| u8::from(v >= 0.5)).collect();
        let val_ba = balanced_accuracy(&y_val, &pred);
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss,
            val_balanced_accuracy: val_ba,
        });

        let improved = match &best {
            None => true,
            Some((ba, l, _, _)) => val_ba > *ba || (val_ba == *ba && val_loss < *l),
        };
        if improved {
            best = Some((val_ba, val_loss, model.network.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, _, net, epoch)) = best {
        model.network = net;
        model.best_epoch = epoch;
    }
    log::debug!(
        "trained {} epochs, best epoch {}",
        history.len(),
        model.best_epoch
    );
    Ok(TrainOutcome { model, history })
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: not a network checkpoint")]
    WrongKind { path: String },
    #[error("{path}: checkpoint version {found} is not supported (expected {expected})")]
    Version {
        path: String,
        found: u64,
        expected: u32,
    },
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: NnModel,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &NnModel) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string(&ck).map_err(|source| CheckpointError::Format {
        path: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NnModel, CheckpointError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: p.clone(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| CheckpointError::Format {
        path: p.clone(),
        source,
    })?;
    if value.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(CheckpointError::WrongKind { path: p });
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(CheckpointError::Version {
            path: p,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let ck: Checkpoint = serde_json::from_value(value).map_err(|source| CheckpointError::Format { path: p, source })?;
    Ok(ck.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BinaryLabel;
    use rand::Rng;

    /// Rows whose label is decided by the sign of one feature per signal.
    fn separable(n: usize, seed: u64, shuffle_labels: bool) -> Vec<FeatureRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let stress = i % 3 == 0;
                let shift = if stress { 1.5 } else { -1.5 };
                let mut noise = |_| rng.random_range(-1.0..1.0);
                let mut eda: [f64; 36] = std::array::from_fn(&mut noise);
                let mut bvp: [f64; 30] = std::array::from_fn(&mut noise);
                let mut st: [f64; 6] = std::array::from_fn(&mut noise);
                eda[0] += shift;
                bvp[3] += shift * 100.0;
                st[1] += shift * 0.01;
                let label = if shuffle_labels { rng.random_bool(1.0 / 3.0) } else { stress };
                FeatureRow {
                    subject_id: "S1".into(),
                    window_start_s: i as f64,
                    label: if label { BinaryLabel::Stress } else { BinaryLabel::NonStress },
                    eda,
                    bvp,
                    st,
                }
            })
            .collect()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            max_epochs: 50,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_features_reach_high_validation_ba() {
        let rows = separable(600, 1, false);
        let (tr, va) = rows.split_at(480);
        let out = train(tr, va, &SignalGroup::ALL, &quick()).unwrap();
        assert!(out.history.len() <= 50);
        let best = out.history[out.model.best_epoch - 1].val_balanced_accuracy;
        assert!(best >= 0.95, "val BA {best}");
        let (pred, _) = out.model.predict(va).unwrap();
        assert!(balanced_accuracy(&labels(va), &pred) >= 0.95);
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        let rows = separable(600, 2, true);
        let (tr, va) = rows.split_at(480);
        let mut cfg = quick();
        cfg.weighted_loss = true;
        let out = train(tr, va, &SignalGroup::ALL, &cfg).unwrap();
        let (pred, _) = out.model.predict(va).unwrap();
        let ba = balanced_accuracy(&labels(va), &pred);
        assert!((ba - 0.5).abs() <= 0.1, "BA {ba}");
    }

    #[test]
    fn training_is_reproducible() {
        let rows = separable(200, 3, false);
        let (tr, va) = rows.split_at(150);
        let cfg = TrainConfig {
            max_epochs: 5,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let a = train(tr, va, &[SignalGroup::Bvp], &cfg).unwrap();
        let b = train(tr, va, &[SignalGroup::Bvp], &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        assert!(a.model.network.fusion.is_none());
    }

    #[test]
    fn single_class_split_is_rejected() {
        let rows = separable(30, 4, false);
        let only_neg: Vec<FeatureRow> = rows.iter().filter(|r| !r.label.is_stress()).cloned().collect();
        assert!(matches!(
            train(&rows, &only_neg, &[SignalGroup::Eda], &quick()),
            Err(TrainError::SingleClassSplit { split: "validation" })
        ));
    }

    #[test]
    fn one_adam_step_lowers_the_loss() {
        let rows = separable(64, 5, false);
        let cfg = TrainConfig {
            dropout: 0.0,
            ..TrainConfig::default()
        };
        let spec = ModelSpec::for_signals(&SignalGroup::ALL, &cfg);
        let mut net = Network::init(&spec, 0);
        let x: Vec<Array2<f64>> = SignalGroup::ALL
            .iter()
            .map(|&g| {
                let m = group_matrix(&rows, g);
                Standardizer::fit(&m).apply(&m)
            })
            .collect();
        let y = labels(&rows);
        let w = row_weights(&y, false);
        let (before, grad) = super::super::loss_and_grad(&net, &x, &y, &w, 0).unwrap();
        let mut adam = Adam::new(&net, cfg.learning_rate, 0.9, 0.999, 1e-8);
        adam.step(&mut net, &grad);
        let (after, _) = super::super::loss_and_grad(&net, &x, &y, &w, 0).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn checkpoint_round_trip_and_version_guard() {
        let rows = separable(120, 6, false);
        let (tr, va) = rows.split_at(90);
        let cfg = TrainConfig {
            max_epochs: 2,
            ..quick()
        };
        let model = train(tr, va, &SignalGroup::ALL, &cfg).unwrap().model;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nn.json");
        save_checkpoint(&p, &model).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.predict(va).unwrap(), model.predict(va).unwrap());

        let text = std::fs::read_to_string(&p).unwrap().replacen("\"version\":1", "\"version\":2", 1);
        std::fs::write(&p, text).unwrap();
        assert!(matches!(
            load_checkpoint(&p),
            Err(CheckpointError::Version { found: 2, .. })
        ));
    }

    #[test]
    fn prediction_is_row_order_invariant() {
        let rows = separable(100, 7, false);
        let (tr, va) = rows.split_at(70);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..quick()
        };
        let model = train(tr, va, &SignalGroup::ALL, &cfg).unwrap().model;
        let (_, p) = model.predict(va).unwrap();
        let rev: Vec<FeatureRow> = va.iter().rev().cloned().collect();
        let (_, q) = model.predict(&rev).unwrap();
        let q: Vec<f64> = q.into_iter().rev().collect();
        assert_eq!(p, q);
    }
}
