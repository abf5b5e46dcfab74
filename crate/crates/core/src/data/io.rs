use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{
    Condition, ConditionInterval, SubjectRecord, TimeSeries, MAX_DURATION_MISMATCH_S,
};
use crate::numfmt::sig9;

pub const EDA_FILE: &str = "eda.csv";
pub const BVP_FILE: &str = "bvp.csv";
pub const ST_FILE: &str = "temp.csv";
pub const LABELS_FILE: &str = "labels.csv";
const LABELS_HEADER: &str = "start_s,end_s,condition";
const RATE_KEY: &str = "# sampling_rate_hz=";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: missing file", path.display())]
    MissingFile { path: PathBuf },
    #[error("{}:{line}: malformed header: {reason}", path.display())]
    MalformedHeader {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}:{line}: cannot parse {text:?}", path.display())]
    MalformedLine {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{}:{line}: non-finite sample", path.display())]
    NonFiniteSample { path: PathBuf, line: usize },
    #[error("{}:{line}: interval start must be before its end", path.display())]
    InvalidInterval { path: PathBuf, line: usize },
    #[error("{}:{line}: interval overlaps interval on line {other_line}", path.display())]
    OverlappingIntervals {
        path: PathBuf,
        line: usize,
        other_line: usize,
    },
    #[error("{}: signal has no samples", path.display())]
    EmptySignal { path: PathBuf },
    #[error("{}: signal durations differ by {spread_s:.3} s (eda {eda_s:.3}, bvp {bvp_s:.3}, temp {st_s:.3})", dir.display())]
    DurationMismatch {
        dir: PathBuf,
        spread_s: f64,
        eda_s: f64,
        bvp_s: f64,
        st_s: f64,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            IngestError::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            IngestError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn read_signal(path: &Path) -> Result<TimeSeries, IngestError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    let malformed = |reason: &str| IngestError::MalformedHeader {
        path: path.to_path_buf(),
        line: 1,
        reason: reason.to_string(),
    };
    let rate: f64 = header
        .strip_prefix(RATE_KEY)
        .ok_or_else(|| malformed("expected `# sampling_rate_hz=<float>`"))?
        .trim()
        .parse()
        .map_err(|_| malformed("sampling rate is not a number"))?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(malformed("sampling rate must be positive"));
    }
    let mut samples = Vec::with_capacity(text.len() / 8);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| IngestError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            text: t.to_string(),
        })?;
        if !v.is_finite() {
            return Err(IngestError::NonFiniteSample {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(IngestError::EmptySignal {
            path: path.to_path_buf(),
        });
    }
    Ok(TimeSeries::new(samples, rate))
}

fn read_labels(path: &Path) -> Result<Vec<ConditionInterval>, IngestError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header != LABELS_HEADER {
        return Err(IngestError::MalformedHeader {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected `{LABELS_HEADER}`"),
        });
    }
    let mut rows: Vec<(usize, ConditionInterval)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let malformed = || IngestError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            text: t.to_string(),
        };
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(malformed());
        }
        let start: f64 = fields[0].parse().map_err(|_| malformed())?;
        let end: f64 = fields[1].parse().map_err(|_| malformed())?;
        let condition: Condition = fields[2].parse().map_err(|_| malformed())?;
        if !start.is_finite() || !end.is_finite() {
            return Err(IngestError::NonFiniteSample {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        if start >= end {
            return Err(IngestError::InvalidInterval {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        rows.push((line_no, ConditionInterval::new(start, end, condition)));
    }
    rows.sort_by(|a, b| a.1.start_s.total_cmp(&b.1.start_s));
    for pair in rows.windows(2) {
        let (prev_line, prev) = pair[0];
        let (line, cur) = pair[1];
        if cur.start_s < prev.end_s {
            return Err(IngestError::OverlappingIntervals {
                path: path.to_path_buf(),
                line: line.max(prev_line),
                other_line: line.min(prev_line),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, iv)| iv).collect())
}

/// Loads and validates one subject directory. The subject id is the directory name.
pub fn load_subject(dir: impl AsRef<Path>) -> Result<SubjectRecord, IngestError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(IngestError::MissingFile {
            path: dir.to_path_buf(),
        });
    }
    let subject_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let eda = read_signal(&dir.join(EDA_FILE))?;
    let bvp = read_signal(&dir.join(BVP_FILE))?;
    let st = read_signal(&dir.join(ST_FILE))?;
    let intervals = read_labels(&dir.join(LABELS_FILE))?;

    let durations = [eda.duration_s(), bvp.duration_s(), st.duration_s()];
    let hi = durations.iter().cloned().fold(f64::MIN, f64::max);
    let lo = durations.iter().cloned().fold(f64::MAX, f64::min);
    if hi - lo > MAX_DURATION_MISMATCH_S {
        return Err(IngestError::DurationMismatch {
            dir: dir.to_path_buf(),
            spread_s: hi - lo,
            eda_s: durations[0],
            bvp_s: durations[1],
            st_s: durations[2],
        });
    }
    Ok(SubjectRecord {
        subject_id,
        eda,
        bvp,
        st,
        intervals,
    })
}

/// Loads every subject directory under `root`, ordered by subject id.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<SubjectRecord>, IngestError> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            IngestError::MissingFile {
                path: root.to_path_buf(),
            }
        } else {
            IngestError::Io {
                path: root.to_path_buf(),
                source,
            }
        }
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(load_subject).collect()
}

fn write_file(path: &Path, body: &str) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(body.as_bytes()).map_err(io_err)
}

fn signal_text(ts: &TimeSeries) -> String {
    let mut out = String::with_capacity(ts.len() * 12 + 32);
    out.push_str(RATE_KEY);
    out.push_str(&sig9(ts.sampling_rate_hz()));
    out.push('\n');
    for &v in ts.samples() {
        out.push_str(&sig9(v));
        out.push('\n');
    }
    out
}

/// Writes `rec` into `dir` (created if needed) in the neutral format.
pub fn write_subject(rec: &SubjectRecord, dir: impl AsRef<Path>) -> Result<(), IngestError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join(EDA_FILE), &signal_text(&rec.eda))?;
    write_file(&dir.join(BVP_FILE), &signal_text(&rec.bvp))?;
    write_file(&dir.join(ST_FILE), &signal_text(&rec.st))?;

    let mut intervals = rec.intervals.clone();
    intervals.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut labels = String::from(LABELS_HEADER);
    labels.push('\n');
    for iv in &intervals {
        labels.push_str(&format!(
            "{},{},{}\n",
            sig9(iv.start_s),
            sig9(iv.end_s),
            iv.condition
        ));
    }
    write_file(&dir.join(LABELS_FILE), &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) {
        fs::create_dir_all(dir).unwrap();
        let eda: String = std::iter::once("# sampling_rate_hz=4\n".to_string())
            .chain((0..40).map(|i| format!("{}\n", sig9(1.0 + i as f64 * 0.01))))
            .collect();
        let bvp: String = std::iter::once("# sampling_rate_hz=64\n".to_string())
            .chain((0..640).map(|i| format!("{}\n", sig9((i as f64 * 0.1).sin()))))
            .collect();
        let st: String = std::iter::once("# sampling_rate_hz=4\n".to_string())
            .chain((0..40).map(|_| "33.1\n".to_string()))
            .collect();
        fs::write(dir.join(EDA_FILE), eda).unwrap();
        fs::write(dir.join(BVP_FILE), bvp).unwrap();
        fs::write(dir.join(ST_FILE), st).unwrap();
        fs::write(
            dir.join(LABELS_FILE),
            "start_s,end_s,condition\n0,5,baseline\n5,10,stress\n",
        )
        .unwrap();
    }

    #[test]
    fn loads_well_formed_subject() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("S2");
        fixture(&dir);
        let rec = load_subject(&dir).unwrap();
        assert_eq!(rec.subject_id, "S2");
        assert_eq!(rec.eda.sampling_rate_hz(), 4.0);
        assert_eq!(rec.bvp.sampling_rate_hz(), 64.0);
        assert_eq!(rec.eda.len(), 40);
        assert_eq!(rec.intervals.len(), 2);
        assert!(rec.is_trainable());
    }

    #[test]
    fn nan_sample_names_line() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("S3");
        fixture(&dir);
        let mut text = fs::read_to_string(dir.join(EDA_FILE)).unwrap();
        text = text.replacen("1.05\n", "NaN\n", 1);
        fs::write(dir.join(EDA_FILE), text).unwrap();
        match load_subject(&dir) {
            Err(IngestError::NonFiniteSample { path, line }) => {
                assert!(path.ends_with(EDA_FILE));
                // header is line 1, sample index 5 sits on line 7
                assert_eq!(line, 7);
            }
            other => panic!("expected NonFiniteSample, got {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("S4");
        fixture(&dir);
        fs::remove_file(dir.join(BVP_FILE)).unwrap();
        assert!(matches!(
            load_subject(&dir),
            Err(IngestError::MissingFile { path }) if path.ends_with(BVP_FILE)
        ));
    }

    #[test]
    fn malformed_rate_header() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("S5");
        fixture(&dir);
        let text = fs::read_to_string(dir.join(ST_FILE)).unwrap();
        fs::write(dir.join(ST_FILE), text.replacen("# sampling_rate_hz=4", "rate 4", 1)).unwrap();
        assert!(matches!(
            load_subject(&dir),
            Err(IngestError::MalformedHeader { line: 1, .. })
        ));
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("S6");
        fixture(&dir);
        fs::write(
            dir.join(LABELS_FILE),
            "start_s,end_s,condition\n0,6,baseline\n5,10,stress\n",
        )
        .unwrap();
        assert!(matches!(
            load_subject(&dir),
            Err(IngestError::OverlappingIntervals { line: 3, other_line: 2, .. })
        ));
    }

    #[test]
    fn duration_mismatch_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("S7");
        fixture(&dir);
        let st: String = std::iter::once("# sampling_rate_hz=4\n".to_string())
            .chain((0..80).map(|_| "33\n".to_string()))
            .collect();
        fs::write(dir.join(ST_FILE), st).unwrap();
        assert!(matches!(
            load_subject(&dir),
            Err(IngestError::DurationMismatch { .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("S8");
        fixture(&dir);
        let rec = load_subject(&dir).unwrap();
        let out = tmp.path().join("copy").join("S8");
        write_subject(&rec, &out).unwrap();
        let again = load_subject(&out).unwrap();
        assert_eq!(rec, again);
        for f in [EDA_FILE, BVP_FILE, ST_FILE, LABELS_FILE] {
            let a = fs::read_to_string(out.join(f)).unwrap();
            write_subject(&again, tmp.path().join("copy2")).unwrap();
            let b = fs::read_to_string(tmp.path().join("copy2").join(f)).unwrap();
            assert_eq!(a, b, "{f} not byte-identical");
        }
    }
}
