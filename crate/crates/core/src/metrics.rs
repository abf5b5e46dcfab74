//! Classification metrics over binary labels (1 = stress).

/// Confusion counts `[[tn, fp], [fn, tp]]`.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> [[usize; 2]; 2] {
    let mut c = [[0usize; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        c[(t != 0) as usize][(p != 0) as usize] += 1;
    }
    c
}

pub fn accuracy(y_true: &[u8], y_pred: &[u8]) -> f64 {
    if y_true.is_empty() {
        return f64::NAN;
    }
    let hits = y_true.iter().zip(y_pred).filter(|(t, p)| (**t != 0) == (**p != 0)).count();
    hits as f64 / y_true.len() as f64
}

/// Mean of per-class recall over the classes present in `y_true`. A single-class input
/// therefore scores its plain recall; an empty input is NaN.
pub fn balanced_accuracy(y_true: &[u8], y_pred: &[u8]) -> f64 {
    let c = confusion(y_true, y_pred);
    let recalls: Vec<f64> = (0..2)
        .filter(|&k| c[k][0] + c[k][1] > 0)
        .map(|k| c[k][k] as f64 / (c[k][0] + c[k][1]) as f64)
        .collect();
    if recalls.is_empty() {
        return f64::NAN;
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}
