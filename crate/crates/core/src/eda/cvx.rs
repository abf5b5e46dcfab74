//! Convex tonic/phasic decomposition of skin conductance.
//!
//! The observed signal `y` is modelled as `phasic + tonic + noise` where
//!
//! * `phasic = M q` and the sudomotor driver `p = A q >= 0`, with `A`/`M` the
//!   autoregressive and moving-average parts of the bilinear-discretised Bateman
//!   impulse response (both lower-banded with bandwidth 2);
//! * `tonic = B l + C d`, a cubic B-spline with evenly spaced knots plus an offset and a
//!   linear trend.
//!
//! The decomposition solves
//!
//! ```text
//! minimise  ½‖M q + B l + C d − y‖² + α·Σ(A q) + ½γ‖l‖²   subject to  A q ≥ 0
//! ```
//!
//! with an ADMM operator-splitting iteration. The KKT matrix of every iteration is a
//! pentadiagonal block (in `q`) bordered by a handful of dense columns (`d`, `l`), so it
//! is factorised once per penalty update with a banded Cholesky plus a small Schur
//! complement, and each iteration costs O(n · border).

use serde::{Deserialize, Serialize};

/// Model and solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvxEdaParams {
    /// Slow (decay) time constant of the Bateman response, seconds.
    pub tau0_s: f64,
    /// Fast (rise) time constant, seconds.
    pub tau1_s: f64,
    pub knot_spacing_s: f64,
    /// Sparsity weight on the driver.
    pub alpha: f64,
    /// Ridge weight on the spline coefficients.
    pub gamma: f64,
    pub max_iter: usize,
    /// Bound on `‖A q − p‖∞` in driver units at termination.
    pub primal_tol: f64,
    /// Bound on the stationarity residual at termination.
    pub dual_tol: f64,
}

impl Default for CvxEdaParams {
    fn default() -> Self {
        Self {
            tau0_s: 2.0,
            tau1_s: 0.7,
            knot_spacing_s: 10.0,
            alpha: 8e-4,
            gamma: 1e-2,
            max_iter: 20_000,
            primal_tol: 1e-6,
            dual_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvxSolution {
    pub phasic: Vec<f64>,
    pub tonic: Vec<f64>,
    pub driver: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NotConverged {
    pub iterations: usize,
    pub residual: f64,
}

/// Rows `i >= 2` of a lower-banded operator: `(R x)[i] = c[0] x[i] + c[1] x[i-1] + c[2] x[i-2]`.
/// Rows 0 and 1 are zero.
#[derive(Debug, Clone, Copy)]
struct Band3 {
    c: [f64; 3],
}

impl Band3 {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out[..2.min(n)].iter_mut().for_each(|v| *v = 0.0);
        for i in 2..n {
            out[i] = self.c[0] * x[i] + self.c[1] * x[i - 1] + self.c[2] * x[i - 2];
        }
    }

    /// `out += Rᵀ v`
    fn apply_t_add(&self, v: &[f64], out: &mut [f64]) {
        for i in 2..v.len() {
            out[i] += self.c[0] * v[i];
            out[i - 1] += self.c[1] * v[i];
            out[i - 2] += self.c[2] * v[i];
        }
    }

    /// Adds `Rᵀ diag(w) R` into a lower band of half-width 2 (`band[i][k]` is entry
    /// `(i, i-2+k)`).
    fn gram_into(&self, n: usize, weight: impl Fn(usize) -> f64, band: &mut [[f64; 3]]) {
        for i in 2..n {
            let w = weight(i);
            if w == 0.0 {
                continue;
            }
            // row i touches columns i, i-1, i-2 with coefficients c0, c1, c2
            let cols = [(i, self.c[0]), (i - 1, self.c[1]), (i - 2, self.c[2])];
            for &(a, ca) in &cols {
                for &(b, cb) in &cols {
                    if b <= a {
                        band[a][2 + b - a] += w * ca * cb;
                    }
                }
            }
        }
    }
}

/// Cholesky factor of a symmetric positive-definite matrix with lower half-bandwidth 2.
struct BandCholesky {
    l: Vec<[f64; 3]>,
}

impl BandCholesky {
    fn factor(band: &[[f64; 3]]) -> Option<Self> {
        let n = band.len();
        let mut l = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in i.saturating_sub(2)..=i {
                let mut sum = band[i][2 + j - i];
                for k in i.saturating_sub(2).max(j.saturating_sub(2))..j {
                    sum -= l[i][2 + k - i] * l[j][2 + k - j];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return None;
                    }
                    l[i][2] = sum.sqrt();
                } else {
                    l[i][2 + j - i] = sum / l[j][2];
                }
            }
        }
        Some(Self { l })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(2)..i {
                s -= self.l[i][2 + k - i] * x[k];
            }
            x[i] = s / self.l[i][2];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + 3).min(n) {
                s -= self.l[k][2 + i - k] * x[k];
            }
            x[i] = s / self.l[i][2];
        }
    }
}

/// Dense Cholesky for the small Schur complement.
struct DenseCholesky {
    m: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    fn factor(a: &[f64], m: usize) -> Option<Self> {
        let mut l = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let mut sum = a[i * m + j];
                for k in 0..j {
                    sum -= l[i * m + k] * l[j * m + k];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return None;
                    }
                    l[i * m + i] = sum.sqrt();
                } else {
                    l[i * m + j] = sum / l[j * m + j];
                }
            }
        }
        Some(Self { m, l })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * m + k] * x[k];
            }
            x[i] = s / self.l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = x[i];
            for k in i + 1..m {
                s -= self.l[k * m + i] * x[k];
            }
            x[i] = s / self.l[i * m + i];
        }
    }
}

/// The decomposition problem for one signal.
struct Problem {
    n: usize,
    /// Driver operator, rows scaled to unit norm.
    a: Band3,
    a_scale: f64,
    m: Band3,
    /// Tonic regressors (offset, trend, spline columns), each of length n, column-major.
    border: Vec<Vec<f64>>,
    /// Index of the first spline column inside `border`.
    spline_start: usize,
    gamma: f64,
    /// Linear term of the objective, length n + border.len().
    lin: Vec<f64>,
}

/// Bilinear-transform ARMA coefficients of the Bateman response for sampling step `delta`.
fn bateman_arma(tau0: f64, tau1: f64, delta: f64) -> ([f64; 3], [f64; 3]) {
    let a1 = 1.0 / tau0.min(tau1);
    let a0 = 1.0 / tau0.max(tau1);
    let d2 = delta * delta;
    let den = (a1 - a0) * d2;
    let ar = [
        (a1 * delta + 2.0) * (a0 * delta + 2.0) / den,
        (2.0 * a1 * a0 * d2 - 8.0) / den,
        (a1 * delta - 2.0) * (a0 * delta - 2.0) / den,
    ];
    (ar, [1.0, 2.0, 1.0])
}

/// Cubic B-spline columns with knots every `knot` samples, as the self-convolution of a
/// triangular kernel normalised to unit peak.
fn spline_columns(n: usize, knot: usize) -> Vec<Vec<f64>> {
    let knot = knot.max(2);
    let tri: Vec<f64> = (1..knot).chain((1..=knot).rev()).map(|v| v as f64).collect();
    let mut spl = vec![0.0; 2 * tri.len() - 1];
    for (i, &a) in tri.iter().enumerate() {
        for (j, &b) in tri.iter().enumerate() {
            spl[i + j] += a * b;
        }
    }
    let peak = spl.iter().cloned().fold(0.0, f64::max);
    spl.iter_mut().for_each(|v| *v /= peak);
    let half = (spl.len() / 2) as isize;
    (0..n)
        .step_by(knot)
        .map(|center| {
            let mut col = vec![0.0; n];
            for (k, &v) in spl.iter().enumerate() {
                let idx = center as isize - half + k as isize;
                if idx >= 0 && (idx as usize) < n {
                    col[idx as usize] = v;
                }
            }
            col
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Problem {
    fn new(y: &[f64], fs_hz: f64, params: &CvxEdaParams) -> Self {
        let n = y.len();
        let delta = 1.0 / fs_hz;
        let (ar, ma) = bateman_arma(params.tau0_s, params.tau1_s, delta);
        let a_scale = 1.0 / dot(&ar, &ar).sqrt();
        let a = Band3 {
            c: ar.map(|v| v * a_scale),
        };
        let m = Band3 { c: ma };

        let mut border = vec![
            vec![1.0; n],
            (1..=n).map(|i| i as f64 / n as f64).collect::<Vec<_>>(),
        ];
        let spline_start = border.len();
        let knot = (params.knot_spacing_s / delta).round() as usize;
        border.extend(spline_columns(n, knot));

        // lin = [α Aᵀ1 − Mᵀy ; −Gᵀ_border y]
        let mut lin = vec![0.0; n + border.len()];
        let ones = vec![params.alpha / a_scale; n];
        a.apply_t_add(&ones, &mut lin[..n]);
        let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
        m.apply_t_add(&neg_y, &mut lin[..n]);
        for (j, col) in border.iter().enumerate() {
            lin[n + j] = -dot(col, y);
        }
        Self {
            n,
            a,
            a_scale,
            m,
            border,
            spline_start,
            gamma: params.gamma,
            lin,
        }
    }

    fn dim(&self) -> usize {
        self.n + self.border.len()
    }

    /// `G x` where `G = [M | border]`.
    fn g_apply(&self, x: &[f64], out: &mut [f64]) {
        self.m.apply(&x[..self.n], out);
        for (j, col) in self.border.iter().enumerate() {
            let c = x[self.n + j];
            if c != 0.0 {
                out.iter_mut().zip(col).for_each(|(o, v)| *o += c * v);
            }
        }
    }

    /// `P x = Gᵀ G x + γ [0; 0; l]`.
    fn p_apply(&self, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.g_apply(x, scratch);
        out.iter_mut().for_each(|v| *v = 0.0);
        self.m.apply_t_add(scratch, &mut out[..self.n]);
        for (j, col) in self.border.iter().enumerate() {
            out[self.n + j] = dot(col, scratch);
            if j >= self.spline_start {
                out[self.n + j] += self.gamma * x[self.n + j];
            }
        }
    }
}

/// Factorisation of `P + σI + ρ AᵀA` split into banded block, border and Schur complement.
struct Kkt {
    band: BandCholesky,
    /// `K11⁻¹ K12`, one column per border variable.
    w: Vec<Vec<f64>>,
    k12: Vec<Vec<f64>>,
    schur: DenseCholesky,
}

impl Kkt {
    /// Factors `P + σI + Aᵀ diag(row_weight) A`.
    fn factor(p: &Problem, sigma: f64, row_weight: impl Fn(usize) -> f64) -> Option<Self> {
        let n = p.n;
        let nb = p.border.len();
        let mut band = vec![[0.0; 3]; n];
        p.m.gram_into(n, |_| 1.0, &mut band);
        p.a.gram_into(n, row_weight, &mut band);
        for row in band.iter_mut() {
            row[2] += sigma;
        }
        let chol = BandCholesky::factor(&band)?;

        let k12: Vec<Vec<f64>> = p
            .border
            .iter()
            .map(|col| {
                let mut out = vec![0.0; n];
                p.m.apply_t_add(col, &mut out);
                out
            })
            .collect();
        let w: Vec<Vec<f64>> = k12
            .iter()
            .map(|c| {
                let mut v = c.clone();
                chol.solve_in_place(&mut v);
                v
            })
            .collect();
        let mut s = vec![0.0; nb * nb];
        for i in 0..nb {
            for j in 0..=i {
                let mut v = dot(&p.border[i], &p.border[j]) - dot(&k12[i], &w[j]);
                if i == j {
                    v += sigma;
                    if i >= p.spline_start {
                        v += p.gamma;
                    }
                }
                s[i * nb + j] = v;
                s[j * nb + i] = v;
            }
        }
        let schur = DenseCholesky::factor(&s, nb)?;
        Some(Self {
            band: chol,
            w,
            k12,
            schur,
        })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.band.l.len();
        let (head, tail) = x.split_at_mut(n);
        self.band.solve_in_place(head);
        for (t, k) in tail.iter_mut().zip(&self.k12) {
            *t -= dot(k, head);
        }
        self.schur.solve_in_place(tail);
        for (t, w) in tail.iter().zip(&self.w) {
            head.iter_mut().zip(w).for_each(|(h, wv)| *h -= t * wv);
        }
    }
}

const SIGMA: f64 = 1e-6;
const RELAX: f64 = 1.6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;
const POLISH_DELTA: f64 = 1e-6;
const POLISH_REFINE: usize = 6;
const POLISH_MAX_SWEEPS: usize = 200;
const POLISH_GRACE: usize = 3;
const POLISH_AFTER: usize = 10;

/// Workspace for residual evaluation.
struct Residuals {
    ax: Vec<f64>,
    px: Vec<f64>,
    at_dual: Vec<f64>,
    scratch: Vec<f64>,
}

impl Residuals {
    fn new(n: usize, dim: usize) -> Self {
        Self {
            ax: vec![0.0; n],
            px: vec![0.0; dim],
            at_dual: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// Primal residual in driver units and the stationarity residual `‖Px + q + Aᵀy‖∞`.
    fn eval(&mut self, prob: &Problem, x: &[f64], z: &[f64], dual: &[f64]) -> (f64, f64) {
        let n = prob.n;
        prob.a.apply(&x[..n], &mut self.ax);
        let prim = self
            .ax
            .iter()
            .zip(z)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / prob.a_scale;
        prob.p_apply(x, &mut self.scratch, &mut self.px);
        self.at_dual.iter_mut().for_each(|v| *v = 0.0);
        prob.a.apply_t_add(dual, &mut self.at_dual);
        let mut dual_res = 0.0f64;
        for i in 0..x.len() {
            let extra = if i < n { self.at_dual[i] } else { 0.0 };
            dual_res = dual_res.max((self.px[i] + prob.lin[i] + extra).abs());
        }
        (prim, dual_res)
    }
}

/// Equality-constrained solve with the rows in `active` held at zero, by iterative
/// refinement of the regularised KKT system. Returns `x`, the multipliers `y` (zero off
/// the active set) and `A x`.
fn solve_active(prob: &Problem, active: &[bool]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = prob.n;
    let dim = prob.dim();
    let kkt = Kkt::factor(prob, POLISH_DELTA, |i| {
        if active[i] {
            1.0 / POLISH_DELTA
        } else {
            0.0
        }
    })?;
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; n];
    let mut px = vec![0.0; dim];
    let mut ax = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for _ in 0..POLISH_REFINE {
        // r1 = −q − Px − A_actᵀy, r2 = −A_act x
        prob.p_apply(&x, &mut scratch, &mut px);
        let mut r1: Vec<f64> = px.iter().zip(&prob.lin).map(|(p, q)| -q - p).collect();
        let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
        prob.a.apply_t_add(&neg_y, &mut r1[..n]);
        prob.a.apply(&x[..n], &mut ax);
        let r2: Vec<f64> = (0..n).map(|i| if active[i] { -ax[i] } else { 0.0 }).collect();

        let scaled: Vec<f64> = r2.iter().map(|v| v / POLISH_DELTA).collect();
        prob.a.apply_t_add(&scaled, &mut r1[..n]);
        kkt.solve_in_place(&mut r1);
        prob.a.apply(&r1[..n], &mut ax);
        for i in 0..n {
            if active[i] {
                y[i] += (ax[i] - r2[i]) / POLISH_DELTA;
            }
        }
        x.iter_mut().zip(&r1).for_each(|(a, d)| *a += d);
    }
    prob.a.apply(&x[..n], &mut ax);
    Some((x, y, ax))
}

/// Block principal pivoting on the active set, warm-started from an ADMM estimate.
///
/// All infeasible indices are swapped while their count keeps falling (with a few
/// grace steps); otherwise only the last infeasible index is swapped, which guarantees
/// termination. Returns `(x, z, dual)` at the exact optimum.
fn polish(prob: &Problem, mut active: Vec<bool>) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = prob.n;
    let tol = 1e-12 * (1.0 + inf_norm(&prob.lin));
    let mut best = usize::MAX;
    let mut grace = POLISH_GRACE;
    for _ in 0..POLISH_MAX_SWEEPS {
        let (x, y, ax) = solve_active(prob, &active)?;
        let infeasible: Vec<usize> = (2..n)
            .filter(|&i| if active[i] { y[i] > tol } else { ax[i] < -tol })
            .collect();
        if infeasible.is_empty() {
            let z = ax.iter().map(|v| v.max(0.0)).collect();
            let y = y.iter().map(|v| v.min(0.0)).collect();
            return Some((x, z, y));
        }
        if infeasible.len() < best {
            best = infeasible.len();
            grace = POLISH_GRACE;
            infeasible.iter().for_each(|&i| active[i] = !active[i]);
        } else if grace > 0 {
            grace -= 1;
            infeasible.iter().for_each(|&i| active[i] = !active[i]);
        } else {
            let i = *infeasible.last().unwrap();
            active[i] = !active[i];
        }
    }
    None
}

/// Solves the decomposition for `y` sampled at `fs_hz`.
pub fn solve(y: &[f64], fs_hz: f64, params: &CvxEdaParams) -> Result<CvxSolution, NotConverged> {
    let prob = Problem::new(y, fs_hz, params);
    let n = prob.n;
    let dim = prob.dim();
    let mut rho = 0.1;
    let mut kkt = Kkt::factor(&prob, SIGMA, |_| rho).ok_or(NotConverged {
        iterations: 0,
        residual: f64::INFINITY,
    })?;

    let mut x = vec![0.0; dim];
    let mut z = vec![0.0; n];
    let mut dual = vec![0.0; n];
    let mut rhs = vec![0.0; dim];
    let mut ax = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut work = Residuals::new(n, dim);
    let mut last_active: Option<Vec<bool>> = None;

    let mut residuals = (f64::INFINITY, f64::INFINITY);
    for iter in 1..=params.max_iter {
        // x-update: (P + σI + ρAᵀA) x̃ = σx − q + Aᵀ(ρz − y)
        for i in 0..dim {
            rhs[i] = SIGMA * x[i] - prob.lin[i];
        }
        for i in 0..n {
            t[i] = rho * z[i] - dual[i];
        }
        prob.a.apply_t_add(&t, &mut rhs[..n]);
        kkt.solve_in_place(&mut rhs);
        prob.a.apply(&rhs[..n], &mut ax);
        for i in 0..dim {
            x[i] = RELAX * rhs[i] + (1.0 - RELAX) * x[i];
        }
        for i in 0..n {
            let relaxed = RELAX * ax[i] + (1.0 - RELAX) * z[i];
            let z_new = (relaxed + dual[i] / rho).max(0.0);
            dual[i] += rho * (relaxed - z_new);
            z[i] = z_new;
        }

        if iter % CHECK_EVERY != 0 && iter != params.max_iter {
            continue;
        }
        residuals = work.eval(&prob, &x, &z, &dual);
        if residuals.0 < params.primal_tol && residuals.1 < params.dual_tol {
            return Ok(finish(&prob, &x, &z, iter, residuals));
        }

        let active: Vec<bool> = (0..n).map(|i| i >= 2 && dual[i] < 0.0 && z[i] < -dual[i]).collect();
        if iter >= POLISH_AFTER && last_active.as_ref() != Some(&active) {
            if let Some((px, pz, py)) = polish(&prob, active.clone()) {
                let r = work.eval(&prob, &px, &pz, &py);
                if r.0 < params.primal_tol && r.1 < params.dual_tol {
                    return Ok(finish(&prob, &px, &pz, iter, r));
                }
            }
            last_active = Some(active);
        }

        if iter % ADAPT_EVERY == 0 {
            let (prim, dual_res) = residuals;
            let prim_scale = inf_norm(&work.ax).max(inf_norm(&z)).max(1e-12);
            let dual_scale = inf_norm(&work.px)
                .max(inf_norm(&work.at_dual))
                .max(inf_norm(&prob.lin))
                .max(1e-12);
            let ratio = ((prim * prob.a_scale / prim_scale) / (dual_res / dual_scale).max(1e-30))
                .sqrt();
            let new_rho = (rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                if let Some(k) = Kkt::factor(&prob, SIGMA, |_| new_rho) {
                    rho = new_rho;
                    kkt = k;
                }
            }
        }
    }
    Err(NotConverged {
        iterations: params.max_iter,
        residual: residuals.0.max(residuals.1),
    })
}

fn finish(
    prob: &Problem,
    x: &[f64],
    z: &[f64],
    iterations: usize,
    (primal_residual, dual_residual): (f64, f64),
) -> CvxSolution {
    let n = prob.n;
    let mut phasic = vec![0.0; n];
    prob.m.apply(&x[..n], &mut phasic);
    let mut tonic = vec![0.0; n];
    for (j, col) in prob.border.iter().enumerate() {
        let c = x[n + j];
        tonic.iter_mut().zip(col).for_each(|(t, v)| *t += c * v);
    }
    let driver = z.iter().map(|v| v / prob.a_scale).collect();
    CvxSolution {
        phasic,
        tonic,
        driver,
        iterations,
        primal_residual,
        dual_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_cholesky_solves_pentadiagonal_system() {
        let n = 12;
        let mut band = vec![[0.0; 3]; n];
        for (i, row) in band.iter_mut().enumerate() {
            row[2] = 6.0 + i as f64 * 0.1;
            if i >= 1 {
                row[1] = -1.5;
            }
            if i >= 2 {
                row[0] = 0.5;
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let entry = |i: usize, j: usize| -> f64 {
            let (a, b) = if i >= j { (i, j) } else { (j, i) };
            if a - b > 2 {
                0.0
            } else {
                band[a][2 + b - a]
            }
        };
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| entry(i, j) * x_true[j]).sum())
            .collect();
        BandCholesky::factor(&band).unwrap().solve_in_place(&mut rhs);
        for (a, b) in rhs.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kkt_solve_matches_dense_operator() {
        let y: Vec<f64> = (0..120).map(|i| (i as f64 * 0.05).sin() + 0.5).collect();
        let prob = Problem::new(&y, 4.0, &CvxEdaParams::default());
        let (sigma, rho) = (1e-3, 0.7);
        let kkt = Kkt::factor(&prob, sigma, |_| rho).unwrap();
        let dim = prob.dim();
        let x_true: Vec<f64> = (0..dim).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        // K x = P x + σ x + ρ AᵀA x, assembled from the matrix-free operators
        let mut kx = vec![0.0; dim];
        let mut scratch = vec![0.0; prob.n];
        prob.p_apply(&x_true, &mut scratch, &mut kx);
        let mut ax = vec![0.0; prob.n];
        prob.a.apply(&x_true[..prob.n], &mut ax);
        let scaled: Vec<f64> = ax.iter().map(|v| rho * v).collect();
        prob.a.apply_t_add(&scaled, &mut kx[..prob.n]);
        for (k, x) in kx.iter_mut().zip(&x_true) {
            *k += sigma * x;
        }
        kkt.solve_in_place(&mut kx);
        for (a, b) in kx.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    fn bateman(t: f64, tau0: f64, tau1: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            (-t / tau0).exp() - (-t / tau1).exp()
        }
    }

    #[test]
    fn single_bump_driver_is_localised() {
        let fs = 4.0;
        let onset_s = 22.0;
        let y: Vec<f64> = (0..240)
            .map(|i| 0.3 + 0.4 * bateman(i as f64 / fs - onset_s, 2.0, 0.7))
            .collect();
        let sol = solve(&y, fs, &CvxEdaParams::default()).unwrap();
        assert!(sol.driver.iter().all(|&d| d >= -1e-8));
        let peak = sol
            .driver
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((peak as f64 / fs - onset_s).abs() <= 0.5, "driver peak at {}", peak as f64 / fs);
        let total: f64 = sol.driver.iter().sum();
        let near: f64 = sol.driver[peak - 2..=peak + 2].iter().sum();
        assert!(near > 0.8 * total, "{near} of {total}");
    }

    #[test]
    fn solution_is_stationary_and_reconstructs() {
        let fs = 4.0;
        let y: Vec<f64> = (0..240)
            .map(|i| {
                let t = i as f64 / fs;
                0.2 + 0.004 * t + 0.3 * bateman(t - 10.0, 2.0, 0.7) + 0.2 * bateman(t - 35.0, 2.0, 0.7)
            })
            .collect();
        let sol = solve(&y, fs, &CvxEdaParams::default()).unwrap();
        assert!(sol.primal_residual < 1e-6 && sol.dual_residual < 1e-6);
        let resid: f64 = y
            .iter()
            .zip(sol.phasic.iter().zip(&sol.tonic))
            .map(|(v, (p, t))| (v - p - t).powi(2))
            .sum::<f64>()
            / y.len() as f64;
        assert!(resid.sqrt() < 0.01);
    }

    #[test]
    fn spline_columns_have_unit_peak_at_knots() {
        let cols = spline_columns(240, 40);
        assert_eq!(cols.len(), 6);
        for (k, col) in cols.iter().enumerate() {
            assert!((col[k * 40] - 1.0).abs() < 1e-12);
        }
    }
}
