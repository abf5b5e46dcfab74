//! In-memory data model for wearable recordings and the neutral on-disk dataset format.
//!
//! A dataset root holds one directory per subject:
//!
//! ```text
//! <root>/<subject_id>/eda.csv    # sampling_rate_hz=4
//! <root>/<subject_id>/bvp.csv    # sampling_rate_hz=64
//! <root>/<subject_id>/temp.csv   # sampling_rate_hz=4
//! <root>/<subject_id>/labels.csv # start_s,end_s,condition
//! ```

mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, load_subject, write_subject, IngestError};

/// Largest tolerated difference between the durations of the three signals of one subject.
pub const MAX_DURATION_MISMATCH_S: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SliceError {
    #[error("span [{t0}, {t1}) s is outside the series duration {duration} s")]
    OutOfRange { t0: f64, t1: f64, duration: f64 },
}

/// A uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sampling_rate_hz: f64,
}

impl TimeSeries {
    /// Panics if the sampling rate is not a positive finite number.
    pub fn new(samples: Vec<f64>, sampling_rate_hz: f64) -> Self {
        assert!(
            sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0,
            "sampling rate must be positive, got {sampling_rate_hz}"
        );
        Self {
            samples,
            sampling_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    /// Index range `[round(t0*fs), round(t1*fs))` of the span `[t0, t1)`.
    pub fn index_range(&self, t0: f64, t1: f64) -> Result<std::ops::Range<usize>, SliceError> {
        let duration = self.duration_s();
        let out_of_range = SliceError::OutOfRange { t0, t1, duration };
        if !(t0 >= 0.0 && t0 < t1 && t1 <= duration + 1e-9) {
            return Err(out_of_range);
        }
        let start = (t0 * self.sampling_rate_hz).round() as usize;
        let end = ((t1 * self.sampling_rate_hz).round() as usize).min(self.samples.len());
        if start >= end {
            return Err(out_of_range);
        }
        Ok(start..end)
    }

    /// Borrowed view of the samples in `[t0, t1)` seconds.
    pub fn window(&self, t0: f64, t1: f64) -> Result<&[f64], SliceError> {
        Ok(&self.samples[self.index_range(t0, t1)?])
    }

    /// Copies the samples in `[t0, t1)` seconds into a new series with the same rate.
    pub fn slice(&self, t0: f64, t1: f64) -> Result<TimeSeries, SliceError> {
        Ok(TimeSeries::new(
            self.window(t0, t1)?.to_vec(),
            self.sampling_rate_hz,
        ))
    }
}

/// Protocol condition annotated on a span of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Baseline,
    Amusement,
    Stress,
    Meditation,
    Other,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Baseline,
        Condition::Amusement,
        Condition::Stress,
        Condition::Meditation,
        Condition::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Amusement => "amusement",
            Condition::Stress => "stress",
            Condition::Meditation => "meditation",
            Condition::Other => "other",
        }
    }

    /// Binary stress label: baseline and amusement are non-stress, stress is stress,
    /// meditation and anything else never produce a label.
    pub fn binary_label(self) -> Option<BinaryLabel> {
        match self {
            Condition::Baseline | Condition::Amusement => Some(BinaryLabel::NonStress),
            Condition::Stress => Some(BinaryLabel::Stress),
            Condition::Meditation | Condition::Other => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub condition: Condition,
}

impl ConditionInterval {
    pub fn new(start_s: f64, end_s: f64, condition: Condition) -> Self {
        Self {
            start_s,
            end_s,
            condition,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    fn overlap(&self, t0: f64, t1: f64) -> f64 {
        (self.end_s.min(t1) - self.start_s.max(t0)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    NonStress = 0,
    Stress = 1,
}

impl BinaryLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(BinaryLabel::NonStress),
            1 => Some(BinaryLabel::Stress),
            _ => None,
        }
    }

    pub fn is_stress(self) -> bool {
        self == BinaryLabel::Stress
    }
}

/// One subject's wrist recording: EDA (4 Hz), BVP (64 Hz) and skin temperature (4 Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub eda: TimeSeries,
    pub bvp: TimeSeries,
    pub st: TimeSeries,
    pub intervals: Vec<ConditionInterval>,
}

impl SubjectRecord {
    /// Duration covered by all three signals.
    pub fn duration_s(&self) -> f64 {
        self.eda
            .duration_s()
            .min(self.bvp.duration_s())
            .min(self.st.duration_s())
    }

    /// A subject is usable for training when it has both a stress and a baseline interval.
    pub fn is_trainable(&self) -> bool {
        let has = |c| self.intervals.iter().any(|i| i.condition == c);
        has(Condition::Stress) && has(Condition::Baseline)
    }
}

/// Label of `[t0, t1)`: the condition covering at least `coverage_threshold` of the
/// span decides, mapped to the binary task. `None` when no condition covers enough of
/// the span or the covering condition carries no binary label.
pub fn label_for_span(
    intervals: &[ConditionInterval],
    t0: f64,
    t1: f64,
    coverage_threshold: f64,
) -> Option<BinaryLabel> {
    let span = t1 - t0;
    if span <= 0.0 {
        return None;
    }
    let mut coverage = [0.0f64; 5];
    for iv in intervals {
        coverage[iv.condition as usize] += iv.overlap(t0, t1);
    }
    let needed = coverage_threshold * span - 1e-9 * span.max(1.0);
    let mut best: Option<(Condition, f64)> = None;
    let mut tied = false;
    for cond in Condition::ALL {
        let c = coverage[cond as usize];
        if c < needed || c <= 0.0 {
            continue;
        }
        match best {
            Some((_, b)) if c < b => {}
            Some((_, b)) if c == b => tied = true,
            _ => {
                best = Some((cond, c));
                tied = false;
            }
        }
    }
    if tied {
        return None;
    }
    best.and_then(|(c, _)| c.binary_label())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, fs: f64) -> TimeSeries {
        TimeSeries::new((0..n).map(|i| i as f64).collect(), fs)
    }

    #[test]
    fn slice_full_span() {
        let ts = ramp(100, 4.0);
        assert_eq!(ts.slice(0.0, 25.0).unwrap().len(), 100);
    }

    #[test]
    fn slice_minute_at_4hz() {
        let ts = ramp(1000, 4.0);
        let s = ts.slice(0.0, 60.0).unwrap();
        assert_eq!(s.len(), 240);
        assert_eq!(s.sampling_rate_hz(), 4.0);
    }

    #[test]
    fn slice_offset_at_64hz() {
        let ts = ramp(64 * 70, 64.0);
        let s = ts.slice(0.25, 60.25).unwrap();
        assert_eq!(s.len(), 3840);
        assert_eq!(s.samples()[0], 16.0);
    }

    #[test]
    fn slice_out_of_range() {
        let ts = ramp(100, 4.0);
        assert!(ts.slice(0.0, 26.0).is_err());
        assert!(ts.slice(-1.0, 2.0).is_err());
        assert!(ts.slice(3.0, 3.0).is_err());
    }

    #[test]
    fn condition_mapping() {
        assert_eq!(Condition::Baseline.binary_label(), Some(BinaryLabel::NonStress));
        assert_eq!(Condition::Amusement.binary_label(), Some(BinaryLabel::NonStress));
        assert_eq!(Condition::Stress.binary_label(), Some(BinaryLabel::Stress));
        assert_eq!(Condition::Meditation.binary_label(), None);
        assert_eq!(Condition::Other.binary_label(), None);
        assert_eq!("amusement".parse::<Condition>(), Ok(Condition::Amusement));
        assert!("rest".parse::<Condition>().is_err());
    }

    #[test]
    fn span_labels() {
        let ivs = [
            ConditionInterval::new(0.0, 100.0, Condition::Baseline),
            ConditionInterval::new(100.0, 200.0, Condition::Stress),
            ConditionInterval::new(200.0, 300.0, Condition::Amusement),
            ConditionInterval::new(300.0, 400.0, Condition::Meditation),
        ];
        assert_eq!(label_for_span(&ivs, 120.0, 180.0, 1.0), Some(BinaryLabel::Stress));
        assert_eq!(label_for_span(&ivs, 210.0, 270.0, 1.0), Some(BinaryLabel::NonStress));
        assert_eq!(label_for_span(&ivs, 70.0, 130.0, 1.0), None);
        assert_eq!(label_for_span(&ivs, 310.0, 370.0, 1.0), None);
        assert_eq!(label_for_span(&ivs, 380.0, 440.0, 1.0), None);
        // Relaxed coverage picks the majority condition.
        assert_eq!(label_for_span(&ivs, 80.0, 140.0, 0.6), Some(BinaryLabel::Stress));
    }

    #[test]
    fn trainable_requires_stress_and_baseline() {
        let ts = ramp(10, 4.0);
        let mut rec = SubjectRecord {
            subject_id: "S".into(),
            eda: ts.clone(),
            bvp: TimeSeries::new(vec![0.0; 160], 64.0),
            st: ts,
            intervals: vec![ConditionInterval::new(0.0, 1.0, Condition::Baseline)],
        };
        assert!(!rec.is_trainable());
        rec.intervals
            .push(ConditionInterval::new(1.0, 2.0, Condition::Stress));
        assert!(rec.is_trainable());
    }
}
