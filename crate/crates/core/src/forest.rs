//! Random forest of CART trees with weighted Gini splits, balanced class weights,
//! bootstrap resampling and out-of-bag scoring.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "stresskit-forest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub oob: bool,
    /// Candidate features per split; `None` means `floor(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub balanced: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 250,
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 4,
            bootstrap: true,
            oob: true,
            max_features: None,
            balanced: true,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_trees == 0 {
            return Err("n_trees must be >= 1".into());
        }
        if self.max_depth == 0 {
            return Err("max_depth must be >= 1".into());
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err("min_samples_leaf must be >= 1 and min_samples_split >= 2".into());
        }
        if self.max_features == Some(0) {
            return Err("max_features must be >= 1".into());
        }
        if self.oob && !self.bootstrap {
            return Err("out-of-bag scoring needs bootstrap sampling".into());
        }
        Ok(())
    }

    pub fn features_per_split(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| ((n_features as f64).sqrt().floor() as usize).max(1))
            .min(n_features)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("training data is empty")]
    Empty,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class-weighted fraction of stress samples in the leaf.
    Leaf { p_stress: f64, n_samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { p_stress, .. } => return *p_stress,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a> {
    x: &'a Array2<f64>,
    y: &'a [u8],
    /// Per-row weight: class weight times bootstrap multiplicity.
    w: Vec<f64>,
    cfg: &'a ForestConfig,
    k: usize,
    nodes: Vec<Node>,
}

fn gini(w0: f64, w1: f64) -> f64 {
    let t = w0 + w1;
    if t <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w0 / t, w1 / t);
    1.0 - p0 * p0 - p1 * p1
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn class_weights(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(a, b), &i| {
            if self.y[i] != 0 {
                (a, b + self.w[i])
            } else {
                (a + self.w[i], b)
            }
        })
    }

    fn leaf(&mut self, idx: &[usize]) -> usize {
        let (w0, w1) = self.class_weights(idx);
        let p_stress = if w0 + w1 > 0.0 { w1 / (w0 + w1) } else { 0.0 };
        self.nodes.push(Node::Leaf {
            p_stress,
            n_samples: idx.len(),
        });
        self.nodes.len() - 1
    }

    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let d = self.x.ncols();
        let min_leaf = self.cfg.min_samples_leaf;
        let (tw0, tw1) = self.class_weights(idx);
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in sample(rng, d, self.k).into_iter() {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let (mut l0, mut l1) = (0.0, 0.0);
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                if self.y[i] != 0 {
                    l1 += self.w[i];
                } else {
                    l0 += self.w[i];
                }
                let n_left = pos + 1;
                if n_left < min_leaf || order.len() - n_left < min_leaf {
                    continue;
                }
                let (a, b) = (self.x[[i, f]], self.x[[order[pos + 1], f]]);
                if a == b {
                    continue;
                }
                let (r0, r1) = (tw0 - l0, tw1 - l1);
                let score = (l0 + l1) * gini(l0, l1) + (r0 + r1) * gini(r0, r1);
                if best.as_ref().is_none_or(|s| score < s.score) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (w0, w1) = self.class_weights(&idx);
        let pure = w0 == 0.0 || w1 == 0.0;
        if pure || depth >= self.cfg.max_depth || idx.len() < self.cfg.min_samples_split.max(2 * self.cfg.min_samples_leaf) {
            return self.leaf(&idx);
        }
        let Some(split) = self.best_split(&idx, rng) else {
            return self.leaf(&idx);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[[i, split.feature]] <= split.threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            p_stress: 0.0,
            n_samples: 0,
        });
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        me
    }
}

/// Balanced class weights `n / (2 n_c)`, or 1 for both classes.
pub fn class_weights(y: &[u8], balanced: bool) -> [f64; 2] {
    if !balanced {
        return [1.0, 1.0];
    }
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v != 0).count() as f64;
    [n / (2.0 * (n - pos)), n / (2.0 * pos)]
}

/// Grows one tree on rows with positive `multiplicity`.
pub fn fit_tree(
    x: &Array2<f64>,
    y: &[u8],
    multiplicity: &[usize],
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let cw = class_weights(y, cfg.balanced);
    let w: Vec<f64> = y
        .iter()
        .zip(multiplicity)
        .map(|(&c, &m)| m as f64 * cw[usize::from(c != 0)])
        .collect();
    let idx: Vec<usize> = (0..y.len()).filter(|&i| multiplicity[i] > 0).collect();
    let mut b = Builder {
        x,
        y,
        w,
        cfg,
        k: cfg.features_per_split(x.ncols()),
        nodes: Vec::new(),
    };
    b.grow(idx, 0, rng);
    Tree { nodes: b.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub oob_score: Option<f64>,
}

fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

pub fn fit_forest(x: &Array2<f64>, y: &[u8], cfg: &ForestConfig) -> Result<Forest, ForestError> {
    cfg.validate().map_err(ForestError::InvalidConfig)?;
    if x.nrows() != y.len() {
        return Err(ForestError::LengthMismatch {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ForestError::Empty);
    }
    if !(y.contains(&0) && y.iter().any(|&v| v != 0)) {
        return Err(ForestError::SingleClassData);
    }
    let n = y.len();
    let fitted: Vec<(Tree, Vec<usize>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t);
            let mut mult = vec![0usize; n];
            if cfg.bootstrap {
                for _ in 0..n {
                    mult[rng.random_range(0..n)] += 1;
                }
            } else {
                mult.fill(1);
            }
            (fit_tree(x, y, &mult, cfg, &mut rng), mult)
        })
        .collect();

    let oob_score = cfg.oob.then(|| {
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (tree, mult) in &fitted {
            for i in (0..n).filter(|&i| mult[i] == 0) {
                sum[i] += tree.predict_row(x.row(i));
                count[i] += 1;
            }
        }
        let scored: Vec<usize> = (0..n).filter(|&i| count[i] > 0).collect();
        let hits = scored
            .iter()
            .filter(|&&i| u8::from(sum[i] / count[i] as f64 > 0.5) == u8::from(y[i] != 0))
            .count();
        if scored.is_empty() {
            f64::NAN
        } else {
            hits as f64 / scored.len() as f64
        }
    });

    Ok(Forest {
        config: cfg.clone(),
        n_features: x.ncols(),
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        oob_score,
    })
}

impl Forest {
    /// Mean over trees of the leaf stress fraction, per row.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / self.trees.len() as f64)
            .collect()
    }

    /// Labels and `[non_stress, stress]` vote fractions. An exact tie is non-stress.
    pub fn predict(&self, x: &Array2<f64>) -> (Vec<u8>, Vec<[f64; 2]>) {
        let p = self.predict_proba(x);
        let labels = p.iter().map(|&v| u8::from(v > 0.5)).collect();
        (labels, p.iter().map(|&v| [1.0 - v, v]).collect())
    }
}

#[derive(Debug, Error)]
pub enum ForestCheckpointError {
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
    #[error("{path}: not a forest checkpoint")]
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
    forest: Forest,
}

pub fn save_forest(path: impl AsRef<Path>, forest: &Forest) -> Result<(), ForestCheckpointError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        forest: forest.clone(),
    };
    let text = serde_json::to_string(&ck).map_err(|source| ForestCheckpointError::Format {
        path: p.clone(),
        source,
    })?;
    std::fs::write(path, text).map_err(|source| ForestCheckpointError::Io { path: p, source })
}

pub fn load_forest(path: impl AsRef<Path>) -> Result<Forest, ForestCheckpointError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ForestCheckpointError::Io {
        path: p.clone(),
        source,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| ForestCheckpointError::Format {
            path: p.clone(),
            source,
        })?;
    if value.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(ForestCheckpointError::WrongKind { path: p });
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(ForestCheckpointError::Version {
            path: p,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let ck: Checkpoint =
        serde_json::from_value(value).map_err(|source| ForestCheckpointError::Format { path: p, source })?;
    Ok(ck.forest)
}
