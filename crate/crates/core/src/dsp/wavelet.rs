use std::f64::consts::FRAC_1_SQRT_2;

use super::DspError;

/// Median absolute deviation to Gaussian sigma.
const MAD_TO_SIGMA: f64 = 0.6745;

/// One level of the Haar transform. Odd-length input is extended symmetrically by
/// repeating its last sample, so both outputs have `ceil(n / 2)` coefficients.
pub fn haar_dwt(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let half = x.len().div_ceil(2);
    let mut approx = Vec::with_capacity(half);
    let mut detail = Vec::with_capacity(half);
    for k in 0..half {
        let a = x[2 * k];
        let b = if 2 * k + 1 < x.len() { x[2 * k + 1] } else { a };
        approx.push((a + b) * FRAC_1_SQRT_2);
        detail.push((a - b) * FRAC_1_SQRT_2);
    }
    (approx, detail)
}

/// Inverse of [`haar_dwt`], truncated to `len` samples.
pub fn haar_idwt(approx: &[f64], detail: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * approx.len());
    for (&a, &d) in approx.iter().zip(detail) {
        out.push((a + d) * FRAC_1_SQRT_2);
        out.push((a - d) * FRAC_1_SQRT_2);
    }
    out.truncate(len);
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Multilevel Haar denoising with soft thresholding at the universal threshold
/// `sigma * sqrt(2 ln N)`, sigma estimated from the finest detail level as
/// `median(|d1|) / 0.6745`. The same threshold is applied to every detail level.
pub fn wavelet_denoise(x: &[f64], levels: usize) -> Result<Vec<f64>, DspError> {
    let needed = 1usize << levels.min(30);
    if levels == 0 || x.len() < needed {
        return Err(DspError::TooFewSamples {
            len: x.len(),
            needed,
        });
    }
    let mut lengths = Vec::with_capacity(levels);
    let mut details = Vec::with_capacity(levels);
    let mut approx = x.to_vec();
    for _ in 0..levels {
        lengths.push(approx.len());
        let (a, d) = haar_dwt(&approx);
        details.push(d);
        approx = a;
    }
    let mut finest: Vec<f64> = details[0].iter().map(|d| d.abs()).collect();
    let sigma = median(&mut finest) / MAD_TO_SIGMA;
    let threshold = sigma * (2.0 * (x.len() as f64).ln()).sqrt();
    for level in details.iter_mut() {
        for d in level.iter_mut() {
            *d = soft_threshold(*d, threshold);
        }
    }
    for (detail, len) in details.iter().zip(&lengths).rev() {
        approx = haar_idwt(&approx, detail, *len);
    }
    Ok(approx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn perfect_reconstruction_without_thresholding() {
        for n in [8usize, 9, 13, 240] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
            let (a, d) = haar_dwt(&x);
            let y = haar_idwt(&a, &d, n);
            assert!(rmse(&x, &y) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn zero_signal_stays_zero() {
        assert_eq!(wavelet_denoise(&[0.0; 64], 3).unwrap(), vec![0.0; 64]);
    }

    #[test]
    fn clean_ramp_is_kept() {
        // two-minute window at 4 Hz
        let x: Vec<f64> = (0..480).map(|i| 0.01 * i as f64).collect();
        let y = wavelet_denoise(&x, 3).unwrap();
        assert_eq!(y.len(), x.len());
        let range = x[479] - x[0];
        assert!(rmse(&x, &y) < 0.01 * range, "rmse {}", rmse(&x, &y));
    }

    #[test]
    fn noisy_ramp_gets_closer_to_clean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let clean: Vec<f64> = (0..480).map(|i| i as f64 / 480.0).collect();
        let noisy: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
        let out = wavelet_denoise(&noisy, 3).unwrap();
        assert!(rmse(&out, &clean) < rmse(&noisy, &clean));
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            wavelet_denoise(&[1.0; 7], 3),
            Err(DspError::TooFewSamples { len: 7, needed: 8 })
        );
        assert!(wavelet_denoise(&[1.0; 8], 3).is_ok());
    }
}
