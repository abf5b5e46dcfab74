//! Deterministic synthetic cohort with stress-dependent physiology.
//!
//! Under stress, skin conductance responses are more frequent, the heart beats faster
//! with less beat-to-beat variability and skin temperature drifts downwards. Every
//! subject gets its own offsets, so the task is subject-independent in the same sense
//! as the real data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Condition, ConditionInterval, SubjectRecord, TimeSeries};

pub const EDA_HZ: f64 = 4.0;
pub const BVP_HZ: f64 = 64.0;
pub const ST_HZ: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub duration_s: f64,
    pub seed: u64,
    /// Consecutive conditions splitting the recording into equal blocks.
    pub schedule: Vec<Condition>,
    pub scr_rate_stress_per_min: f64,
    pub scr_rate_rest_per_min: f64,
    pub rr_stress_ms: f64,
    pub rr_rest_ms: f64,
    pub st_slope_stress: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 6,
            duration_s: 1200.0,
            seed: 42,
            schedule: vec![
                Condition::Baseline,
                Condition::Stress,
                Condition::Amusement,
                Condition::Meditation,
            ],
            scr_rate_stress_per_min: 3.0,
            scr_rate_rest_per_min: 0.5,
            rr_stress_ms: 700.0,
            rr_rest_ms: 900.0,
            st_slope_stress: -0.002,
        }
    }
}

struct SubjectTraits {
    eda_level: f64,
    scr_gain: f64,
    rr_offset_ms: f64,
    rr_jitter_ms: f64,
    resp_hz: f64,
    st_level: f64,
    bvp_gain: f64,
}

impl SubjectTraits {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            eda_level: rng.random_range(1.0..6.0),
            scr_gain: rng.random_range(0.15..0.6),
            rr_offset_ms: rng.random_range(-60.0..60.0),
            rr_jitter_ms: rng.random_range(25.0..45.0),
            resp_hz: rng.random_range(0.2..0.3),
            st_level: rng.random_range(31.5..34.5),
            bvp_gain: rng.random_range(30.0..120.0),
        }
    }
}

fn intervals(cfg: &SynthConfig) -> Vec<ConditionInterval> {
    let block = cfg.duration_s / cfg.schedule.len() as f64;
    cfg.schedule
        .iter()
        .enumerate()
        .map(|(i, &c)| ConditionInterval::new(i as f64 * block, (i + 1) as f64 * block, c))
        .collect()
}

fn condition_at(ivs: &[ConditionInterval], t: f64) -> Condition {
    ivs.iter()
        .find(|iv| t >= iv.start_s && t < iv.end_s)
        .or(ivs.last())
        .map(|iv| iv.condition)
        .unwrap_or(Condition::Other)
}

fn bateman(t: f64) -> f64 {
    const TAU0: f64 = 2.0;
    const TAU1: f64 = 0.7;
    if t < 0.0 {
        0.0
    } else {
        (-t / TAU0).exp() - (-t / TAU1).exp()
    }
}

fn synth_eda(cfg: &SynthConfig, ivs: &[ConditionInterval], tr: &SubjectTraits, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (cfg.duration_s * EDA_HZ).round() as usize;
    let peak = {
        let t_max = (2.0f64 / 0.7).ln() * 2.0 * 0.7 / 1.3;
        bateman(t_max)
    };
    let mut onsets = Vec::new();
    let mut t = 0.0;
    while t < cfg.duration_s {
        let rate = if condition_at(ivs, t) == Condition::Stress {
            cfg.scr_rate_stress_per_min
        } else {
            cfg.scr_rate_rest_per_min
        };
        t += Exp::new(rate / 60.0).unwrap().sample(rng);
        if t < cfg.duration_s {
            onsets.push((t, tr.scr_gain * rng.random_range(0.5..1.5)));
        }
    }
    let noise = Normal::new(0.0, 0.005).unwrap();
    let drift_phase = rng.random_range(0.0..std::f64::consts::TAU);
    (0..n)
        .map(|i| {
            let t = i as f64 / EDA_HZ;
            let tonic = tr.eda_level + 0.3 * (std::f64::consts::TAU * t / 900.0 + drift_phase).sin();
            let phasic: f64 = onsets
                .iter()
                .filter(|(o, _)| t >= *o && t - o < 30.0)
                .map(|(o, a)| a * bateman(t - o) / peak)
                .sum();
            tonic + phasic + noise.sample(rng)
        })
        .collect()
}

fn synth_bvp(cfg: &SynthConfig, ivs: &[ConditionInterval], tr: &SubjectTraits, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (cfg.duration_s * BVP_HZ).round() as usize;
    let mut beats = Vec::new();
    let mut t = rng.random_range(0.0..0.5);
    while t < cfg.duration_s + 2.0 {
        let stress = condition_at(ivs, t) == Condition::Stress;
        let (base, jitter) = if stress {
            (cfg.rr_stress_ms, 0.5 * tr.rr_jitter_ms)
        } else {
            (cfg.rr_rest_ms, tr.rr_jitter_ms)
        };
        let resp = 0.5 * jitter * (std::f64::consts::TAU * tr.resp_hz * t).sin();
        let rr = base + tr.rr_offset_ms + resp + Normal::new(0.0, 0.5 * jitter).unwrap().sample(rng);
        beats.push((t, rr.clamp(450.0, 1400.0) / 1000.0));
        t += rr.clamp(450.0, 1400.0) / 1000.0;
    }
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut out = vec![0.0; n];
    let mut first = 0;
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / BVP_HZ;
        while first < beats.len() && beats[first].0 < t - 1.5 {
            first += 1;
        }
        let mut s = 0.0;
        for &(b, rr) in beats[first..].iter().take_while(|(b, _)| *b < t + 1.0) {
            let systolic = (-0.5 * ((t - b) / 0.07).powi(2)).exp();
            let dicrotic = 0.35 * (-0.5 * ((t - b - 0.35 * rr) / 0.09).powi(2)).exp();
            s += systolic + dicrotic;
        }
        let wander = 0.3 * (std::f64::consts::TAU * 0.08 * t).sin();
        *v = tr.bvp_gain * (s + wander + noise.sample(rng));
    }
    out
}

fn synth_st(cfg: &SynthConfig, ivs: &[ConditionInterval], tr: &SubjectTraits, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (cfg.duration_s * ST_HZ).round() as usize;
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut level = tr.st_level;
    (0..n)
        .map(|i| {
            let t = i as f64 / ST_HZ;
            let slope = if condition_at(ivs, t) == Condition::Stress {
                cfg.st_slope_stress
            } else {
                // slow recovery towards the subject's resting level
                0.002 * (tr.st_level - level)
            };
            level += slope / ST_HZ;
            level + noise.sample(rng)
        })
        .collect()
}

/// Subject `index` of the cohort; identical for identical `(cfg, index)`.
pub fn synth_subject(cfg: &SynthConfig, index: usize) -> SubjectRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let traits = SubjectTraits::draw(&mut rng);
    let ivs = intervals(cfg);
    let eda = synth_eda(cfg, &ivs, &traits, &mut rng);
    let bvp = synth_bvp(cfg, &ivs, &traits, &mut rng);
    let st = synth_st(cfg, &ivs, &traits, &mut rng);
    SubjectRecord {
        subject_id: format!("S{:02}", index + 1),
        eda: TimeSeries::new(eda, EDA_HZ),
        bvp: TimeSeries::new(bvp, BVP_HZ),
        st: TimeSeries::new(st, ST_HZ),
        intervals: ivs,
    }
}

pub fn synth_dataset(cfg: &SynthConfig) -> Vec<SubjectRecord> {
    use rayon::prelude::*;
    (0..cfg.n_subjects)
        .into_par_iter()
        .map(|i| synth_subject(cfg, i))
        .collect()
}
