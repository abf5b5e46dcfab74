//! Descriptive statistics used by the feature extractors.
//!
//! Standard deviations are population (ddof = 0). Kurtosis is Fisher's excess
//! kurtosis and skewness the moment coefficient, both without bias correction.

use super::DspError;

fn need(x: &[f64], n: usize) -> Result<(), DspError> {
    if x.len() < n {
        Err(DspError::TooFewSamples {
            len: x.len(),
            needed: n,
        })
    } else {
        Ok(())
    }
}

pub fn mean(x: &[f64]) -> Result<f64, DspError> {
    need(x, 1)?;
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

pub fn variance(x: &[f64]) -> Result<f64, DspError> {
    need(x, 2)?;
    let m = mean(x)?;
    Ok(x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64)
}

pub fn std(x: &[f64]) -> Result<f64, DspError> {
    Ok(variance(x)?.sqrt())
}

pub fn min(x: &[f64]) -> Result<f64, DspError> {
    need(x, 1)?;
    Ok(x.iter().cloned().fold(f64::INFINITY, f64::min))
}

pub fn max(x: &[f64]) -> Result<f64, DspError> {
    need(x, 1)?;
    Ok(x.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

pub fn range(x: &[f64]) -> Result<f64, DspError> {
    Ok(max(x)? - min(x)?)
}

pub fn median(x: &[f64]) -> Result<f64, DspError> {
    need(x, 1)?;
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(super::percentile_sorted(&s, 50.0))
}

pub fn rms(x: &[f64]) -> Result<f64, DspError> {
    need(x, 1)?;
    Ok((x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt())
}

/// Least-squares slope of `x` against time `i / fs_hz`, in units per second.
pub fn slope(x: &[f64], fs_hz: f64) -> Result<f64, DspError> {
    need(x, 2)?;
    let n = x.len() as f64;
    let t_mean = (n - 1.0) / (2.0 * fs_hz);
    let x_mean = mean(x)?;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let dt = i as f64 / fs_hz - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    Ok(sxy / sxx)
}

pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64, DspError> {
    let n = x.len().min(y.len());
    need(&x[..n], 2)?;
    let (x, y) = (&x[..n], &y[..n]);
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(DspError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn central_moments(x: &[f64]) -> Result<(f64, f64, f64), DspError> {
    let m = mean(x)?;
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    // relative cutoff so floating-point residue of a constant series reads as zero
    if m2 <= 1e-24 * (1.0 + m * m) {
        return Err(DspError::ZeroVariance);
    }
    Ok((m2, m3, m4))
}

pub fn skewness(x: &[f64]) -> Result<f64, DspError> {
    need(x, 2)?;
    let (m2, m3, _) = central_moments(x)?;
    Ok(m3 / m2.powf(1.5))
}

pub fn kurtosis(x: &[f64]) -> Result<f64, DspError> {
    need(x, 4)?;
    let (m2, _, m4) = central_moments(x)?;
    Ok(m4 / (m2 * m2) - 3.0)
}

/// First difference scaled to units per second.
pub fn derivative(x: &[f64], fs_hz: f64) -> Vec<f64> {
    x.windows(2).map(|w| (w[1] - w[0]) * fs_hz).collect()
}
