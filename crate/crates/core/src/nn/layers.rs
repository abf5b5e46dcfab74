use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer `y = x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit));
        Self {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

/// `dense → batch norm → ReLU → dropout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hidden {
    pub dense: Dense,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenOpts {
    pub batch_norm: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub dropout: f64,
}

/// Activations kept from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct HiddenCache {
    x: Array2<f64>,
    pub(crate) x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    pre_relu: Array2<f64>,
    mask: Array2<f64>,
    batch_mean: Array1<f64>,
    batch_var_unbiased: Array1<f64>,
}

impl Hidden {
    pub fn new(fan_in: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            dense: Dense::glorot(fan_in, width, rng),
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let w = self.gamma.len();
        Self {
            dense: self.dense.zeros_like(),
            gamma: Array1::zeros(w),
            beta: Array1::zeros(w),
            running_mean: Array1::zeros(w),
            running_var: Array1::zeros(w),
        }
    }

    pub fn forward_eval(&self, x: &Array2<f64>, o: &HiddenOpts) -> Array2<f64> {
        let mut z = self.dense.forward(x);
        if o.batch_norm {
            let inv_std = self.running_var.mapv(|v| 1.0 / (v + o.bn_eps).sqrt());
            z = (&z - &self.running_mean) * &inv_std * &self.gamma + &self.beta;
        }
        z.mapv_into(|v| v.max(0.0))
    }

    /// Training pass on a batch of at least two rows. Batch statistics normalise the
    /// pre-activations; dropout masks come from `rng`. Running estimates are left alone
    /// until [`Hidden::update_running`] is called with the returned cache.
    pub fn forward_train(
        &self,
        x: &Array2<f64>,
        o: &HiddenOpts,
        rng: &mut ChaCha8Rng,
    ) -> (Array2<f64>, HiddenCache) {
        let z = self.dense.forward(x);
        let n = z.nrows() as f64;
        let width = z.ncols();
        let (x_hat, inv_std, pre_relu, batch_mean, batch_var_unbiased) = if o.batch_norm {
            let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
            let centred = &z - &mean;
            let var = centred.mapv(|v| v * v).sum_axis(Axis(0)) / n;
            let inv_std = var.mapv(|v| 1.0 / (v + o.bn_eps).sqrt());
            let x_hat = &centred * &inv_std;
            let pre = &x_hat * &self.gamma + &self.beta;
            let unbiased = &var * (n / (n - 1.0).max(1.0));
            (x_hat, inv_std, pre, mean, unbiased)
        } else {
            (z.clone(), Array1::ones(width), z, Array1::zeros(width), Array1::ones(width))
        };
        let keep = 1.0 - o.dropout;
        let mask = Array2::from_shape_simple_fn(pre_relu.raw_dim(), || {
            if o.dropout == 0.0 || rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let out = pre_relu.mapv(|v| v.max(0.0)) * &mask;
        let cache = HiddenCache {
            x: x.clone(),
            x_hat,
            inv_std,
            pre_relu,
            mask,
            batch_mean,
            batch_var_unbiased,
        };
        (out, cache)
    }

    /// Exponential moving average of the batch statistics held in `cache`.
    pub fn update_running(&mut self, cache: &HiddenCache, o: &HiddenOpts) {
        if !o.batch_norm {
            return;
        }
        let m = o.bn_momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + &cache.batch_mean * m;
        self.running_var = &self.running_var * (1.0 - m) + &cache.batch_var_unbiased * m;
    }

    pub fn backward(
        &self,
        cache: &HiddenCache,
        dout: &Array2<f64>,
        o: &HiddenOpts,
        grad: &mut Hidden,
    ) -> Array2<f64> {
        let relu_gate = cache.pre_relu.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let dy = dout * &cache.mask * &relu_gate;
        let dz = if o.batch_norm {
            grad.gamma += &(&dy * &cache.x_hat).sum_axis(Axis(0));
            grad.beta += &dy.sum_axis(Axis(0));
            let dx_hat = &dy * &self.gamma;
            let n = dy.nrows() as f64;
            let sum_dx_hat = dx_hat.sum_axis(Axis(0));
            let sum_dx_hat_xhat = (&dx_hat * &cache.x_hat).sum_axis(Axis(0));
            ((&dx_hat * n) - &sum_dx_hat - &(&cache.x_hat * &sum_dx_hat_xhat)) * &cache.inv_std / n
        } else {
            dy
        };
        self.dense.backward(&cache.x, &dz, &mut grad.dense)
    }
}

/// Trainable tensors in a fixed traversal order (running statistics excluded).
pub trait Params {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Params for Dense {
    fn params(&self) -> Vec<&[f64]> {
        vec![
            self.w.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
        ]
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl Params for Hidden {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.dense.params();
        v.push(self.gamma.as_slice().expect("standard layout"));
        v.push(self.beta.as_slice().expect("standard layout"));
        v
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.dense.params_mut();
        v.push(self.gamma.as_slice_mut().expect("standard layout"));
        v.push(self.beta.as_slice_mut().expect("standard layout"));
        v
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
