use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{DroppedWindow, FeatureRow};
use crate::data::BinaryLabel;
use crate::dictionary::{fused_columns, FUSED_WIDTH};
use crate::numfmt::sig9;

const ID_COLUMNS: [&str; 3] = ["subject_id", "window_start_s", "label"];

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: header does not match the feature dictionary (first difference at column {column}: expected `{expected}`, found `{found}`)", path.display())]
    SchemaMismatch {
        path: PathBuf,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn header() -> Vec<String> {
    ID_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(fused_columns())
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MatrixError + '_ {
    move |source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes rows as CSV with a header naming every column; values at 9 significant digits.
pub fn save_matrix(path: impl AsRef<Path>, rows: &[FeatureRow]) -> Result<(), MatrixError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "{}", header().join(","))?;
        for row in rows {
            write!(
                w,
                "{},{},{}",
                row.subject_id,
                sig9(row.window_start_s),
                row.label.as_u8()
            )?;
            for v in row.fused() {
                write!(w, ",{}", sig9(v))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>, MatrixError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let found: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let expected = header();
    let n_cols = expected.len();
    for i in 0..n_cols.max(found.len()) {
        let e = expected.get(i).map(String::as_str).unwrap_or("");
        let f = found.get(i).copied().unwrap_or("");
        if e != f {
            return Err(MatrixError::SchemaMismatch {
                path: path.to_path_buf(),
                column: i + 1,
                expected: e.to_string(),
                found: f.to_string(),
            });
        }
    }

    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| MatrixError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(malformed(format!("expected {n_cols} fields, found {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64, MatrixError> {
            s.parse::<f64>()
                .map_err(|_| malformed(format!("cannot parse number `{s}`")))
        };
        let label = fields[2]
            .parse::<u8>()
            .ok()
            .and_then(BinaryLabel::from_u8)
            .ok_or_else(|| malformed(format!("invalid label `{}`", fields[2])))?;
        let fused = fields[3..]
            .iter()
            .map(|s| num(s))
            .collect::<Result<Vec<f64>, _>>()?;
        debug_assert_eq!(fused.len(), FUSED_WIDTH);
        rows.push(FeatureRow::from_fused(
            fields[0].to_string(),
            num(fields[1])?,
            label,
            &fused,
        ));
    }
    Ok(rows)
}

/// Drop log as CSV: subject, window start, failing signal, reason.
pub fn save_drop_log(path: impl AsRef<Path>, dropped: &[DroppedWindow]) -> Result<(), MatrixError> {
    let path = path.as_ref();
    let mut out = String::from("subject_id,window_start_s,signal,reason\n");
    for d in dropped {
        let reason = d.reason.replace(['"', ','], " ");
        out.push_str(&format!(
            "{},{},{},{}\n",
            d.subject_id,
            sig9(d.window_start_s),
            d.signal,
            reason
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize) -> FeatureRow {
        let v = |i: usize| ((i * 7919 + k * 104729) % 1000) as f64 / 37.0 - 11.0;
        FeatureRow {
            subject_id: format!("S{k}"),
            window_start_s: k as f64 * 0.25,
            label: if k.is_multiple_of(2) { BinaryLabel::Stress } else { BinaryLabel::NonStress },
            eda: std::array::from_fn(v),
            bvp: std::array::from_fn(|i| v(i + 36) * 1e3),
            st: std::array::from_fn(|i| v(i + 66) * 1e-4),
        }
    }

    #[test]
    fn round_trip_within_nine_digits_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<FeatureRow> = (0..5).map(row).collect();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        save_matrix(&a, &rows).unwrap();
        let loaded = load_matrix(&a).unwrap();
        assert_eq!(loaded.len(), rows.len());
        for (x, y) in rows.iter().zip(&loaded) {
            assert_eq!(x.subject_id, y.subject_id);
            assert_eq!(x.label, y.label);
            for (p, q) in x.fused().iter().zip(y.fused()) {
                assert!((p - q).abs() <= 5e-9 * p.abs(), "{p} vs {q}");
            }
        }
        save_matrix(&b, &loaded).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn tampered_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        save_matrix(&p, &[row(1)]).unwrap();
        let text = fs::read_to_string(&p).unwrap().replacen("eda_mean", "eda_avg", 1);
        fs::write(&p, text).unwrap();
        match load_matrix(&p) {
            Err(MatrixError::SchemaMismatch { column, .. }) => assert_eq!(column, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_matrix_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        save_matrix(&p, &[]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(load_matrix(&p).unwrap().is_empty());
    }
}
