use super::{BvpConfig, BvpError};
use crate::dsp::stats;

pub const MIN_VALID_INTERVALS: usize = 4;

/// Inter-beat intervals with the beat times that bound them.
#[derive(Debug, Clone, PartialEq)]
pub struct RrSeries {
    pub intervals_ms: Vec<f64>,
    pub anchor_times_s: Vec<f64>,
}

impl RrSeries {
    pub fn from_beats(beats: &[usize], fs_hz: f64) -> Result<Self, BvpError> {
        if beats.len() < 2 {
            return Err(BvpError::InsufficientBeats { beats: beats.len() });
        }
        let anchor_times_s: Vec<f64> = beats.iter().map(|&b| b as f64 / fs_hz).collect();
        let intervals_ms = anchor_times_s.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
        Ok(Self {
            intervals_ms,
            anchor_times_s,
        })
    }

    /// Builds a series from intervals alone, anchoring the first beat at time zero.
    pub fn from_intervals(intervals_ms: &[f64]) -> Self {
        let mut anchor_times_s = vec![0.0];
        for rr in intervals_ms {
            anchor_times_s.push(anchor_times_s.last().unwrap() + rr / 1000.0);
        }
        Self {
            intervals_ms: intervals_ms.to_vec(),
            anchor_times_s,
        }
    }
}

/// Cleaned normal-to-normal intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct NnSeries {
    pub intervals_ms: Vec<f64>,
}

/// Range filter, then the ectopic-beat rule against the last accepted interval, then
/// linear interpolation over rejected positions. Rejected runs at either end take the
/// nearest accepted value.
///
/// Before the first acceptance the reference is the median of the in-range intervals,
/// so a spurious leading interval cannot reject the rest of the series.
pub fn clean_rr(rr: &RrSeries, cfg: &BvpConfig) -> Result<NnSeries, BvpError> {
    let x = &rr.intervals_ms;
    let in_range = |v: f64| (cfg.rr_min_ms..=cfg.rr_max_ms).contains(&v);
    let plausible: Vec<f64> = x.iter().copied().filter(|&v| in_range(v)).collect();
    let mut valid = vec![false; x.len()];
    let Ok(mut last) = stats::median(&plausible) else {
        return Err(BvpError::TooFewValidBeats {
            valid: 0,
            needed: MIN_VALID_INTERVALS,
        });
    };
    for (i, &v) in x.iter().enumerate() {
        if !in_range(v) || (v - last).abs() > cfg.ectopic_frac * last {
            continue;
        }
        valid[i] = true;
        last = v;
    }
    let kept: Vec<usize> = (0..x.len()).filter(|&i| valid[i]).collect();
    if kept.len() < MIN_VALID_INTERVALS {
        return Err(BvpError::TooFewValidBeats {
            valid: kept.len(),
            needed: MIN_VALID_INTERVALS,
        });
    }

    let mut out = x.clone();
    for i in 0..x.len() {
        if valid[i] {
            continue;
        }
        let right = kept.partition_point(|&k| k < i);
        out[i] = match (right.checked_sub(1).map(|l| kept[l]), kept.get(right)) {
            (Some(a), Some(&b)) => {
                let frac = (i - a) as f64 / (b - a) as f64;
                x[a] + frac * (x[b] - x[a])
            }
            (Some(a), None) => x[a],
            (None, Some(&b)) => x[b],
            (None, None) => unreachable!("at least one interval kept"),
        };
    }
    Ok(NnSeries { intervals_ms: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(x: &[f64]) -> Result<Vec<f64>, BvpError> {
        clean_rr(&RrSeries::from_intervals(x), &BvpConfig::default()).map(|nn| nn.intervals_ms)
    }

    #[test]
    fn steady_series_unchanged() {
        assert_eq!(clean(&[1000.0; 8]).unwrap(), vec![1000.0; 8]);
    }

    #[test]
    fn ectopic_interval_interpolated() {
        assert_eq!(clean(&[1000.0, 1300.0, 1000.0, 1000.0, 1000.0]).unwrap(), vec![1000.0; 5]);
    }

    #[test]
    fn out_of_range_interval_interpolated() {
        assert_eq!(
            clean(&[1000.0, 2500.0, 1000.0, 1000.0, 1000.0]).unwrap(),
            vec![1000.0; 5]
        );
        assert_eq!(
            clean(&[900.0, 250.0, 1000.0, 1000.0, 1000.0]).unwrap(),
            vec![900.0, 950.0, 1000.0, 1000.0, 1000.0]
        );
    }

    #[test]
    fn three_intervals_with_outlier_are_too_few() {
        assert_eq!(
            clean(&[1000.0, 2500.0, 1000.0]),
            Err(BvpError::TooFewValidBeats { valid: 2, needed: 4 })
        );
    }

    #[test]
    fn spurious_first_interval_does_not_poison_series() {
        assert_eq!(
            clean(&[420.0, 1000.0, 1010.0, 990.0, 1000.0]).unwrap(),
            vec![1000.0, 1000.0, 1010.0, 990.0, 1000.0]
        );
    }

    #[test]
    fn edges_take_nearest_valid() {
        assert_eq!(
            clean(&[250.0, 800.0, 800.0, 820.0, 800.0, 3000.0]).unwrap(),
            vec![800.0, 800.0, 800.0, 820.0, 800.0, 800.0]
        );
    }

    #[test]
    fn anchors_follow_intervals() {
        let rr = RrSeries::from_beats(&[0, 64, 192], 64.0).unwrap();
        assert_eq!(rr.intervals_ms, vec![1000.0, 2000.0]);
        assert_eq!(rr.anchor_times_s.len(), rr.intervals_ms.len() + 1);
        assert!(RrSeries::from_beats(&[3], 64.0).is_err());
    }
}
