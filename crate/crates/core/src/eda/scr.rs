/// Skin conductance responses found in a phasic trace. All lists have one entry per event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScrEvents {
    pub onsets: Vec<usize>,
    pub peaks: Vec<usize>,
    pub amplitudes: Vec<f64>,
    /// Onset to half-recovery, next onset or window end, in seconds.
    pub durations: Vec<f64>,
    /// Sample index closing each event span.
    pub ends: Vec<usize>,
}

impl ScrEvents {
    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }
}

/// Finds SCRs as upward crossings of `min_amplitude_frac · max(phasic)`.
///
/// The onset is the last sample below the threshold, the peak the first local maximum
/// of the supra-threshold run (its maximum when the run never turns down).
pub fn detect_scr_events(phasic: &[f64], fs_hz: f64, min_amplitude_frac: f64) -> ScrEvents {
    let mut ev = ScrEvents::default();
    let max = phasic.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if phasic.len() < 2 || !(max > 0.0) {
        return ev;
    }
    let thr = min_amplitude_frac * max;
    let n = phasic.len();

    let mut i = 1;
    while i < n {
        if !(phasic[i - 1] < thr && phasic[i] >= thr) {
            i += 1;
            continue;
        }
        let onset = i - 1;
        let mut run_end = i;
        while run_end + 1 < n && phasic[run_end + 1] >= thr {
            run_end += 1;
        }
        let peak = (i..=run_end)
            .find(|&j| j + 1 < n && phasic[j] >= phasic[j - 1] && phasic[j] > phasic[j + 1])
            .unwrap_or_else(|| {
                (i..=run_end)
                    .max_by(|&a, &b| phasic[a].total_cmp(&phasic[b]))
                    .unwrap_or(run_end)
            });
        ev.onsets.push(onset);
        ev.peaks.push(peak);
        ev.amplitudes.push((phasic[peak] - phasic[onset]).max(0.0));
        i = run_end + 1;
    }

    for k in 0..ev.len() {
        let (onset, peak) = (ev.onsets[k], ev.peaks[k]);
        let half = phasic[peak] - 0.5 * ev.amplitudes[k];
        let next_onset = ev.onsets.get(k + 1).copied().unwrap_or(n - 1);
        let end = (peak + 1..next_onset)
            .find(|&j| phasic[j] <= half)
            .unwrap_or(next_onset);
        ev.ends.push(end);
        ev.durations.push((end - onset) as f64 / fs_hz);
    }
    ev
}
