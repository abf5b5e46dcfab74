//! Butterworth IIR design (analog prototype, pre-warped bilinear transform) and
//! zero-phase forward-backward filtering over cascaded second-order sections.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;

const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
}

/// One second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + z_inv * self.b1 + z2 * self.b2) / (1.0 + z_inv * self.a1 + z2 * self.a2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    /// Transposed direct form II state that makes a constant input `u` a fixed point.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let g = self.dc_gain();
        [(g - self.b0) * u, (self.b2 - self.a2 * g) * u]
    }

    fn run(&self, x: &mut [f64], state: [f64; 2]) {
        let [mut s1, mut s2] = state;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b0 * xin + s1;
            s1 = self.b1 * xin - self.a1 * y + s2;
            s2 = self.b2 * xin - self.a2 * y;
            *v = y;
        }
    }
}

/// A digital Butterworth filter as a cascade of biquads plus its design metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    order: usize,
    cutoff_hz: Vec<f64>,
    kind: FilterKind,
    fs_hz: f64,
}

impl IirFilter {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cutoff_hz(&self) -> &[f64] {
        &self.cutoff_hz
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    /// Number of poles of the digital transfer function (twice the order for bandpass).
    pub fn n_poles(&self) -> usize {
        match self.kind {
            FilterKind::Bandpass => 2 * self.order,
            _ => self.order,
        }
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections
            .iter()
            .flat_map(|s| {
                if s.a2 == 0.0 {
                    // first-order section of an odd-order design
                    vec![Complex64::new(-s.a1, 0.0)]
                } else {
                    s.poles().to_vec()
                }
            })
            .collect()
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.fs_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    /// Single causal pass from zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    /// Causal pass whose initial state is the steady state for a constant input equal to `x[0]`.
    fn filter_steady(&self, y: &mut [f64]) {
        let mut u = y.first().copied().unwrap_or(0.0);
        for s in &self.sections {
            let state = s.steady_state(u);
            s.run(y, state);
            u *= s.dc_gain();
        }
    }
}

/// Designs an `order`-th order digital Butterworth filter.
///
/// `cutoff_hz` holds one corner frequency for lowpass/highpass and `[low, high]` for
/// bandpass. Corners are pre-warped so the -3 dB point lands exactly on the requested
/// frequency after the bilinear transform.
pub fn design_butterworth(
    order: usize,
    cutoff_hz: &[f64],
    fs_hz: f64,
    kind: FilterKind,
) -> Result<IirFilter, DspError> {
    if order == 0 || order > MAX_ORDER {
        return Err(DspError::InvalidOrder(order));
    }
    let nyquist_hz = fs_hz / 2.0;
    let expected = if kind == FilterKind::Bandpass { 2 } else { 1 };
    let in_range = cutoff_hz.len() == expected
        && cutoff_hz.iter().all(|&f| f > 0.0 && f < nyquist_hz)
        && (expected == 1 || cutoff_hz[0] < cutoff_hz[1]);
    if !in_range || !(fs_hz > 0.0) {
        return Err(DspError::CutoffOutOfRange {
            cutoff_hz: cutoff_hz.to_vec(),
            nyquist_hz,
        });
    }

    let fs2 = 2.0 * fs_hz;
    let warp = |f: f64| fs2 * (PI * f / fs_hz).tan();
    let n = order as f64;
    let prototype: Vec<Complex64> = (0..order)
        .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n)))
        .collect();

    // Analog zeros/poles/gain after the frequency transformation.
    let (zeros, poles, gain) = match kind {
        FilterKind::Lowpass => {
            let wo = warp(cutoff_hz[0]);
            let poles: Vec<_> = prototype.iter().map(|p| p * wo).collect();
            (Vec::new(), poles, wo.powi(order as i32))
        }
        FilterKind::Highpass => {
            let wo = warp(cutoff_hz[0]);
            let poles: Vec<_> = prototype.iter().map(|p| wo / p).collect();
            let prod: Complex64 = prototype.iter().map(|p| -p).product();
            (vec![Complex64::new(0.0, 0.0); order], poles, 1.0 / prod.re)
        }
        FilterKind::Bandpass => {
            let w1 = warp(cutoff_hz[0]);
            let w2 = warp(cutoff_hz[1]);
            let wo2 = w1 * w2;
            let bw = w2 - w1;
            let mut poles = Vec::with_capacity(2 * order);
            for p in &prototype {
                let half = p * (bw / 2.0);
                let root = (half * half - wo2).sqrt();
                poles.push(half + root);
                poles.push(half - root);
            }
            (
                vec![Complex64::new(0.0, 0.0); order],
                poles,
                bw.powi(order as i32),
            )
        }
    };

    // Bilinear transform; zeros at analog infinity land on z = -1.
    let to_z = |s: &Complex64| (fs2 + s) / (fs2 - s);
    let mut zd: Vec<Complex64> = zeros.iter().map(to_z).collect();
    let pd: Vec<Complex64> = poles.iter().map(to_z).collect();
    zd.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), poles.len() - zeros.len()));
    let num: Complex64 = zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = poles.iter().map(|p| fs2 - p).product();
    let kd = gain * (num / den).re;

    let sections = zpk_to_sections(&zd, &pd, kd);
    let filter = IirFilter {
        sections,
        order,
        cutoff_hz: cutoff_hz.to_vec(),
        kind,
        fs_hz,
    };
    let worst = pd.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(worst < 1.0 - 1e-9) {
        return Err(DspError::UnstableDesign(worst));
    }
    Ok(filter)
}

fn is_real(c: &Complex64) -> bool {
    c.im.abs() <= 1e-12 * c.norm().max(1.0)
}

/// Quadratic factors `[1, c1, c2]` grouping conjugate pairs, then real roots two at a time.
/// Real roots are paired opposite-sign first so bandpass sections get `1 - z^-2` numerators.
fn quadratic_factors(roots: &[Complex64]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for r in roots {
        if is_real(r) {
            reals.push(r.re);
        } else if r.im > 0.0 {
            out.push([1.0, -2.0 * r.re, r.norm_sqr()]);
        }
    }
    let (mut pos, mut neg): (Vec<f64>, Vec<f64>) = reals.into_iter().partition(|&r| r >= 0.0);
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    while let (Some(a), Some(b)) = (pos.last().copied(), neg.last().copied()) {
        pos.pop();
        neg.pop();
        out.push([1.0, -(a + b), a * b]);
    }
    let mut rest: Vec<f64> = pos.into_iter().chain(neg).collect();
    while rest.len() >= 2 {
        let a = rest.pop().unwrap();
        let b = rest.pop().unwrap();
        out.push([1.0, -(a + b), a * b]);
    }
    if let Some(a) = rest.pop() {
        out.push([1.0, -a, 0.0]);
    }
    out
}

fn zpk_to_sections(zeros: &[Complex64], poles: &[Complex64], gain: f64) -> Vec<Biquad> {
    let num = quadratic_factors(zeros);
    let den = quadratic_factors(poles);
    debug_assert_eq!(num.len(), den.len());
    let per_section = gain.abs().powf(1.0 / den.len() as f64);
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(i, (b, a))| {
            let g = if i == 0 {
                per_section * gain.signum()
            } else {
                per_section
            };
            Biquad {
                b0: g * b[0],
                b1: g * b[1],
                b2: g * b[2],
                a1: a[1],
                a2: a[2],
            }
        })
        .collect()
}

/// Zero-phase filtering: forward and backward passes over an odd-reflection padded copy
/// of `x` (pad length `3 * n_poles`), each pass started from the steady state of its
/// first sample. Output length equals input length.
pub fn filtfilt(filter: &IirFilter, x: &[f64]) -> Result<Vec<f64>, DspError> {
    let pad = 3 * filter.n_poles();
    let n = x.len();
    if n <= pad {
        return Err(DspError::SignalTooShort { len: n, needed: pad });
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    filter.filter_steady(&mut ext);
    ext.reverse();
    filter.filter_steady(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}
