//! Per-frame labels CSV: header `frame,label,importance`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    frame: usize,
    label: u8,
    importance: f64,
}

pub fn write_labels(path: &Path, labels: &[u8], importance: &[f64]) -> Result<()> {
    if labels.len() != importance.len() {
        return Err(Error::invalid("labels and importance lengths differ"));
    }
    let mut w = csv::Writer::from_path(path)?;
    for (frame, (&label, &importance)) in labels.iter().zip(importance).enumerate() {
        w.serialize(Row { frame, label, importance })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<(Vec<u8>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["frame", "label", "importance"] {
        return Err(Error::format(
            "labels header",
            format!("expected frame,label,importance in {}", path.display()),
        ));
    }
    let mut labels = Vec::new();
    let mut importance = Vec::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row?;
        if row.frame != i {
            return Err(Error::format("frame", format!("row {i} has frame index {}", row.frame)));
        }
        if row.label > 1 {
            return Err(Error::format("label", format!("frame {i} label {} not in {{0,1}}", row.label)));
        }
        if !row.importance.is_finite() {
            return Err(Error::format("importance", format!("frame {i} importance is not finite")));
        }
        labels.push(row.label);
        importance.push(row.importance);
    }
    Ok((labels, importance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        write_labels(&p, &[1, 0, 1], &[0.5, -1.25, 3.0]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("frame,label,importance\n0,1,0.5\n"));
        let (z, imp) = read_labels(&p).unwrap();
        assert_eq!(z, vec![1, 0, 1]);
        assert_eq!(imp, vec![0.5, -1.25, 3.0]);
    }

    #[test]
    fn rejects_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        std::fs::write(&p, "frame,label,importance\n0,2,0.1\n").unwrap();
        assert!(matches!(read_labels(&p), Err(Error::Format { .. })));
    }
}
