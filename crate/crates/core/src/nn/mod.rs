//! Multi-branch network: one embedding branch per signal, a concatenation fusion block,
//! a sigmoid head on every branch and on the fusion block, a summed BCE loss and an
//! averaged prediction.

mod layers;
mod train;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::SignalGroup;

pub use layers::{sigmoid, Dense, Hidden, HiddenCache, HiddenOpts, Params};
pub use train::{
    load_checkpoint, save_checkpoint, train, CheckpointError, EpochStats, NnModel, Standardizer,
    TrainConfig, TrainError, TrainOutcome, CHECKPOINT_VERSION,
};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("branch {branch}: expected {expected} input columns, got {found}")]
    ShapeMismatch {
        branch: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} input blocks, got {found}")]
    BranchCount { expected: usize, found: usize },
    #[error("input blocks disagree on the number of rows")]
    RowMismatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("training-mode forward needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub signal: SignalGroup,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub branches: Vec<BranchSpec>,
    /// Width of the fusion hidden layer; `None` builds no fusion block.
    pub fusion_hidden: Option<usize>,
    pub opts: HiddenOpts,
}

impl ModelSpec {
    /// Branch widths follow [`TrainConfig`]. The fusion block exists only when all three
    /// signals are present.
    pub fn for_signals(signals: &[SignalGroup], cfg: &TrainConfig) -> Self {
        let branches = signals
            .iter()
            .map(|&signal| BranchSpec {
                signal,
                input_dim: signal.width(),
                hidden_dims: vec![signal.width(); cfg.hidden_layers],
                embed_dim: cfg.embed_dim,
            })
            .collect();
        let fusion = SignalGroup::ALL.iter().all(|g| signals.contains(g));
        Self {
            branches,
            fusion_hidden: fusion.then_some(cfg.fusion_hidden),
            opts: cfg.hidden_opts(),
        }
    }

    pub fn n_heads(&self) -> usize {
        self.branches.len() + usize::from(self.fusion_hidden.is_some())
    }

    pub fn heads(&self) -> Vec<Head> {
        let mut h: Vec<Head> = self.branches.iter().map(|b| Head::Branch(b.signal)).collect();
        if self.fusion_hidden.is_some() {
            h.push(Head::Fusion);
        }
        h
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.branches.is_empty() {
            return Err("at least one branch is required".into());
        }
        for b in &self.branches {
            if b.input_dim == 0 || b.embed_dim == 0 || b.hidden_dims.contains(&0) {
                return Err(format!("branch {}: widths must be >= 1", b.signal));
            }
        }
        if self.fusion_hidden == Some(0) {
            return Err("fusion width must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.opts.dropout) {
            return Err(format!("dropout must lie in [0, 1), got {}", self.opts.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Branch(SignalGroup),
    Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub hidden: Vec<Hidden>,
    pub embed: Dense,
    pub head: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub hidden: Hidden,
    pub head: Dense,
}

/// Network parameters. A zeroed copy of the same shape doubles as the gradient buffer
/// and as Adam's moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: ModelSpec,
    pub branches: Vec<Branch>,
    pub fusion: Option<Fusion>,
}

struct BranchCache {
    hidden: Vec<HiddenCache>,
    last: Array2<f64>,
    embed: Array2<f64>,
}

/// Everything backward needs from a training-mode forward pass.
pub struct ForwardCache {
    branches: Vec<BranchCache>,
    fusion: Option<(HiddenCache, Array2<f64>)>,
    /// One column of probabilities per head, in [`ModelSpec::heads`] order.
    pub probs: Vec<Array1<f64>>,
}

fn column(a: Array2<f64>) -> Array1<f64> {
    a.column(0).mapv(sigmoid)
}

impl Network {
    /// Glorot-uniform weights from `seed`; BN scale 1, shift 0, running mean 0, variance 1.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branches = spec
            .branches
            .iter()
            .map(|b| {
                let mut fan_in = b.input_dim;
                let hidden = b
                    .hidden_dims
                    .iter()
                    .map(|&w| {
                        let h = Hidden::new(fan_in, w, &mut rng);
                        fan_in = w;
                        h
                    })
                    .collect();
                let embed = Dense::glorot(fan_in, b.embed_dim, &mut rng);
                let head = Dense::glorot(b.embed_dim, 1, &mut rng);
                Branch { hidden, embed, head }
            })
            .collect();
        let fusion = spec.fusion_hidden.map(|w| {
            let concat: usize = spec.branches.iter().map(|b| b.embed_dim).sum();
            Fusion {
                hidden: Hidden::new(concat, w, &mut rng),
                head: Dense::glorot(w, 1, &mut rng),
            }
        });
        Self {
            spec: spec.clone(),
            branches,
            fusion,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| Branch {
                    hidden: b.hidden.iter().map(Hidden::zeros_like).collect(),
                    embed: b.embed.zeros_like(),
                    head: b.head.zeros_like(),
                })
                .collect(),
            fusion: self.fusion.as_ref().map(|f| Fusion {
                hidden: f.hidden.zeros_like(),
                head: f.head.zeros_like(),
            }),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_inputs(&self, inputs: &[Array2<f64>]) -> Result<usize, NnError> {
        if inputs.len() != self.branches.len() {
            return Err(NnError::BranchCount {
                expected: self.branches.len(),
                found: inputs.len(),
            });
        }
        let n = inputs[0].nrows();
        for (i, (x, b)) in inputs.iter().zip(&self.spec.branches).enumerate() {
            if x.ncols() != b.input_dim {
                return Err(NnError::ShapeMismatch {
                    branch: i,
                    expected: b.input_dim,
                    found: x.ncols(),
                });
            }
            if x.nrows() != n {
                return Err(NnError::RowMismatch);
            }
        }
        if n == 0 {
            return Err(NnError::EmptyBatch);
        }
        Ok(n)
    }

    /// Inference pass: running BN statistics, no dropout. One probability column per head.
    pub fn forward_eval(&self, inputs: &[Array2<f64>]) -> Result<Vec<Array1<f64>>, NnError> {
        self.check_inputs(inputs)?;
        let o = &self.spec.opts;
        let mut probs = Vec::with_capacity(self.spec.n_heads());
        let mut embeds = Vec::with_capacity(self.branches.len());
        for (b, x) in self.branches.iter().zip(inputs) {
            let mut h = x.clone();
            for layer in &b.hidden {
                h = layer.forward_eval(&h, o);
            }
            let e = b.embed.forward(&h);
            probs.push(column(b.head.forward(&e)));
            embeds.push(e);
        }
        if let Some(f) = &self.fusion {
            let views: Vec<_> = embeds.iter().map(|e| e.view()).collect();
            let cat = concatenate(Axis(1), &views).expect("equal row counts");
            let h = f.hidden.forward_eval(&cat, o);
            probs.push(column(f.head.forward(&h)));
        }
        Ok(probs)
    }

    /// Training pass with batch statistics and dropout masks drawn from `rng`.
    pub fn forward_train(
        &self,
        inputs: &[Array2<f64>],
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardCache, NnError> {
        let n = self.check_inputs(inputs)?;
        if n < 2 && self.spec.opts.batch_norm {
            return Err(NnError::BatchTooSmall(n));
        }
        let o = &self.spec.opts;
        let mut probs = Vec::with_capacity(self.spec.n_heads());
        let mut caches = Vec::with_capacity(self.branches.len());
        for (b, x) in self.branches.iter().zip(inputs) {
            let mut h = x.clone();
            let mut hidden = Vec::with_capacity(b.hidden.len());
            for layer in &b.hidden {
                let (out, c) = layer.forward_train(&h, o, rng);
                hidden.push(c);
                h = out;
            }
            let e = b.embed.forward(&h);
            probs.push(column(b.head.forward(&e)));
            caches.push(BranchCache {
                hidden,
                last: h,
                embed: e,
            });
        }
        let fusion = match &self.fusion {
            Some(f) => {
                let views: Vec<_> = caches.iter().map(|c| c.embed.view()).collect();
                let cat = concatenate(Axis(1), &views).expect("equal row counts");
                let (h, c) = f.hidden.forward_train(&cat, o, rng);
                probs.push(column(f.head.forward(&h)));
                Some((c, h))
            }
            None => None,
        };
        Ok(ForwardCache {
            branches: caches,
            fusion,
            probs,
        })
    }

    /// Folds the batch statistics of a training pass into the running estimates.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let o = self.spec.opts;
        for (b, c) in self.branches.iter_mut().zip(&cache.branches) {
            for (layer, hc) in b.hidden.iter_mut().zip(&c.hidden) {
                layer.update_running(hc, &o);
            }
        }
        if let (Some(f), Some((hc, _))) = (self.fusion.as_mut(), cache.fusion.as_ref()) {
            f.hidden.update_running(hc, &o);
        }
    }

    /// Gradients of the loss given `dlogits` (one column per head, already divided by
    /// the batch size).
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[Array1<f64>]) -> Network {
        let mut grad = self.zeros_like();
        let o = &self.spec.opts;
        let as_col = |d: &Array1<f64>| d.view().insert_axis(Axis(1)).to_owned();

        let mut d_embeds: Vec<Array2<f64>> = self
            .branches
            .iter()
            .zip(&cache.branches)
            .zip(grad.branches.iter_mut())
            .zip(dlogits)
            .map(|(((b, c), g), d)| b.head.backward(&c.embed, &as_col(d), &mut g.head))
            .collect();

        if let (Some(f), Some((hc, h)), Some(gf)) =
            (self.fusion.as_ref(), cache.fusion.as_ref(), grad.fusion.as_mut())
        {
            let d = &dlogits[self.branches.len()];
            let dh = f.head.backward(h, &as_col(d), &mut gf.head);
            let dcat = f.hidden.backward(hc, &dh, o, &mut gf.hidden);
            let mut start = 0;
            for (de, spec) in d_embeds.iter_mut().zip(&self.spec.branches) {
                *de += &dcat.slice(s![.., start..start + spec.embed_dim]);
                start += spec.embed_dim;
            }
        }

        for (((b, c), g), de) in self
            .branches
            .iter()
            .zip(&cache.branches)
            .zip(grad.branches.iter_mut())
            .zip(&d_embeds)
        {
            let mut d = b.embed.backward(&c.last, de, &mut g.embed);
            for ((layer, hc), gl) in b.hidden.iter().zip(&c.hidden).zip(g.hidden.iter_mut()).rev() {
                d = layer.backward(hc, &d, o, gl);
            }
        }
        grad
    }
}

impl Params for Network {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for b in &self.branches {
            for h in &b.hidden {
                v.extend(h.params());
            }
            v.extend(b.embed.params());
            v.extend(b.head.params());
        }
        if let Some(f) = &self.fusion {
            v.extend(f.hidden.params());
            v.extend(f.head.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for b in &mut self.branches {
            for h in &mut b.hidden {
                v.extend(h.params_mut());
            }
            v.extend(b.embed.params_mut());
            v.extend(b.head.params_mut());
        }
        if let Some(f) = &mut self.fusion {
            v.extend(f.hidden.params_mut());
            v.extend(f.head.params_mut());
        }
        v
    }
}

/// Per-row weights for the loss: uniform, or balanced `n / (2 n_c)`.
pub fn row_weights(labels: &[u8], balanced: bool) -> Array1<f64> {
    if !balanced {
        return Array1::ones(labels.len());
    }
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y != 0).count() as f64;
    let w1 = if pos > 0.0 { n / (2.0 * pos) } else { 0.0 };
    let w0 = if pos < n { n / (2.0 * (n - pos)) } else { 0.0 };
    labels.iter().map(|&y| if y != 0 { w1 } else { w0 }).collect()
}

/// Sum over heads of the mean (weighted) binary cross-entropy, and its gradient with
/// respect to each head's logit. Clamped probabilities contribute no gradient.
pub fn bce_loss(probs: &[Array1<f64>], labels: &[u8], weights: &Array1<f64>) -> (f64, Vec<Array1<f64>>) {
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(probs.len());
    for p in probs {
        let mut loss = 0.0;
        let mut g = Array1::zeros(p.len());
        for (i, (&pi, &y)) in p.iter().zip(labels).enumerate() {
            let y = f64::from(y);
            let pc = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= weights[i] * (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
            if pc == pi {
                g[i] = weights[i] * (pi - y) / n;
            }
        }
        total += loss / n;
        grads.push(g);
    }
    (total, grads)
}

/// Adam moments and step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Network,
    v: Network,
    t: i32,
}

impl Adam {
    pub fn new(net: &Network, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: net.zeros_like(),
            v: net.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, net: &mut Network, grad: &Network) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(grad.params())
            .zip(self.m.params_mut())
            .zip(self.v.params_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Loss and analytic gradient on one batch. `mask_seed` fixes the dropout masks.
pub fn loss_and_grad(
    net: &Network,
    inputs: &[Array2<f64>],
    labels: &[u8],
    weights: &Array1<f64>,
    mask_seed: u64,
) -> Result<(f64, Network), NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let cache = net.forward_train(inputs, &mut rng)?;
    let (loss, dlogits) = bce_loss(&cache.probs, labels, weights);
    Ok((loss, net.backward(&cache, &dlogits)))
}

/// Mean of the selected heads' probabilities (all heads when `heads` is empty).
pub fn average_heads(spec: &ModelSpec, probs: &[Array1<f64>], heads: &[Head]) -> Array1<f64> {
    let all = spec.heads();
    let chosen: Vec<usize> = all
        .iter()
        .enumerate()
        .filter(|(_, h)| heads.is_empty() || heads.contains(h))
        .map(|(i, _)| i)
        .collect();
    let n = probs.first().map_or(0, |p| p.len());
    let mut out = Array1::zeros(n);
    for &i in &chosen {
        out += &probs[i];
    }
    out / chosen.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_spec(batch_norm: bool, dropout: f64) -> ModelSpec {
        let opts = HiddenOpts {
            batch_norm,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            dropout,
        };
        let branch = |signal, input_dim| BranchSpec {
            signal,
            input_dim,
            hidden_dims: vec![5],
            embed_dim: 3,
        };
        ModelSpec {
            branches: vec![
                branch(SignalGroup::Eda, 4),
                branch(SignalGroup::Bvp, 3),
                branch(SignalGroup::St, 2),
            ],
            fusion_hidden: Some(4),
            opts,
        }
    }

    fn batch(spec: &ModelSpec, n: usize, seed: u64) -> (Vec<Array2<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = spec
            .branches
            .iter()
            .map(|b| Array2::from_shape_simple_fn((n, b.input_dim), || rng.random_range(-2.0..2.0)))
            .collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        (inputs, labels)
    }

    fn finite_difference_check(spec: &ModelSpec) {
        let net = Network::init(spec, 11);
        let (x, y) = batch(spec, 8, 5);
        let w = row_weights(&y, false);
        let (_, grad) = loss_and_grad(&net, &x, &y, &w, 99).unwrap();
        let h = 1e-4;
        let analytic: Vec<f64> = grad.params().concat();
        let mut k = 0;
        let mut worst = 0.0f64;
        let n_tensors = net.params().len();
        for t in 0..n_tensors {
            let len = net.params()[t].len();
            for i in 0..len {
                let mut plus = net.clone();
                plus.params_mut()[t][i] += h;
                let mut minus = net.clone();
                minus.params_mut()[t][i] -= h;
                let lp = loss_and_grad(&plus, &x, &y, &w, 99).unwrap().0;
                let lm = loss_and_grad(&minus, &x, &y, &w, 99).unwrap().0;
                let numeric = (lp - lm) / (2.0 * h);
                let a = analytic[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                k += 1;
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradient_matches_finite_differences_with_bn_and_dropout() {
        finite_difference_check(&small_spec(true, 0.2));
    }

    #[test]
    fn gradient_matches_finite_differences_plain() {
        finite_difference_check(&small_spec(false, 0.0));
    }

    #[test]
    fn half_probability_loss_is_four_ln2() {
        let probs = vec![Array1::from_elem(10, 0.5); 4];
        let y: Vec<u8> = (0..10).map(|i| (i % 3 == 0) as u8).collect();
        let (loss, _) = bce_loss(&probs, &y, &row_weights(&y, false));
        assert!((loss - 4.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_have_near_zero_loss() {
        let y = [1u8, 0, 1];
        let probs = vec![Array1::from(vec![1.0, 0.0, 1.0]); 4];
        let (loss, g) = bce_loss(&probs, &y, &row_weights(&y, false));
        assert!(loss <= 4.0 * -(1.0 - PROB_CLAMP).ln() + 1e-15);
        assert!(g.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        let spec = small_spec(true, 0.0);
        let mut net = Network::init(&spec, 1);
        let before = net.clone();
        let mut grad = net.zeros_like();
        for (i, p) in grad.params_mut().into_iter().enumerate() {
            for (j, v) in p.iter_mut().enumerate() {
                *v = if (i + j) % 3 == 0 { 0.0 } else { ((i * 31 + j) as f64 - 40.0) * 0.37 };
            }
        }
        let mut adam = Adam::new(&net, 0.003, 0.9, 0.999, 1e-8);
        adam.step(&mut net, &grad);
        for ((p, q), g) in net.params().concat().iter().zip(before.params().concat()).zip(grad.params().concat()) {
            let delta = (q - p).abs();
            if g == 0.0 {
                assert_eq!(delta, 0.0);
            } else {
                let expected = 0.003 * g.abs() / (g.abs() + 1e-8);
                assert!((delta - expected).abs() < 1e-12, "{delta} vs {expected}");
            }
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let spec = small_spec(false, 0.0);
        let net = Network::init(&spec, 4);
        let (x, y) = batch(&spec, 2, 8);
        let doubled: Vec<Array2<f64>> = x
            .iter()
            .map(|a| concatenate(Axis(0), &[a.view(), a.view()]).unwrap())
            .collect();
        let y2: Vec<u8> = y.iter().chain(&y).copied().collect();
        let (l1, g1) = loss_and_grad(&net, &x, &y, &row_weights(&y, false), 0).unwrap();
        let (l2, g2) = loss_and_grad(&net, &doubled, &y2, &row_weights(&y2, false), 0).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.params().concat().iter().zip(g2.params().concat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_seeded() {
        let spec = small_spec(true, 0.1);
        assert_eq!(Network::init(&spec, 3), Network::init(&spec, 3));
        assert_ne!(Network::init(&spec, 3), Network::init(&spec, 4));
    }

    #[test]
    fn eval_outputs_are_probabilities_and_deterministic() {
        let spec = small_spec(true, 0.1);
        let net = Network::init(&spec, 2);
        let (x, _) = batch(&spec, 6, 1);
        let a = net.forward_eval(&x).unwrap();
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|p| p.iter().all(|&v| v > 0.0 && v < 1.0)));
        assert_eq!(a, net.forward_eval(&x).unwrap());
    }

    #[test]
    fn shape_errors() {
        let spec = small_spec(true, 0.1);
        let net = Network::init(&spec, 2);
        let (mut x, _) = batch(&spec, 6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one: Vec<Array2<f64>> = x.iter().map(|a| a.slice(s![0..1, ..]).to_owned()).collect();
        assert_eq!(net.forward_train(&one, &mut rng).err(), Some(NnError::BatchTooSmall(1)));
        x[1] = Array2::zeros((6, 7));
        assert_eq!(
            net.forward_eval(&x).err(),
            Some(NnError::ShapeMismatch {
                branch: 1,
                expected: 3,
                found: 7
            })
        );
    }

    #[test]
    fn averaging_heads() {
        let spec = small_spec(false, 0.0);
        let probs: Vec<Array1<f64>> = [0.9, 0.9, 0.9, 0.1].iter().map(|&p| Array1::from(vec![p])).collect();
        assert!((average_heads(&spec, &probs, &[])[0] - 0.7).abs() < 1e-12);
        assert_eq!(average_heads(&spec, &probs, &[Head::Fusion])[0], 0.1);
    }

    #[test]
    fn single_active_head_matches_standalone_branch() {
        let full_spec = small_spec(true, 0.0);
        let full = Network::init(&full_spec, 21);
        let single_spec = ModelSpec {
            branches: vec![full_spec.branches[1].clone()],
            fusion_hidden: None,
            opts: full_spec.opts,
        };
        let single = Network {
            spec: single_spec.clone(),
            branches: vec![full.branches[1].clone()],
            fusion: None,
        };
        let (x, _) = batch(&full_spec, 5, 3);
        let pf = full.forward_eval(&x).unwrap();
        let ps = single.forward_eval(&x[1..2]).unwrap();
        assert_eq!(
            average_heads(&full_spec, &pf, &[Head::Branch(SignalGroup::Bvp)]),
            average_heads(&single_spec, &ps, &[])
        );
    }
}
