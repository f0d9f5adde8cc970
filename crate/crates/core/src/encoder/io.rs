//! CSV persistence for encoded pairs: `left_id,right_id,label,weight,x_0..`.
//! A JSON sidecar records how the vectors were produced.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Composition, EncodedPair};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSidecar {
    pub dim: usize,
    pub composition: Composition,
    pub remove_first_pc: bool,
    pub embedding_source: String,
}

impl PairSidecar {
    pub fn path_for(pairs_path: &Path) -> PathBuf {
        let mut s = pairs_path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn write(&self, pairs_path: &Path) -> Result<()> {
        let path = Self::path_for(pairs_path);
        let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn read(pairs_path: &Path) -> Result<Option<Self>> {
        let path = Self::path_for(pairs_path);
        if !path.exists() {
            return Ok(None);
        }
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_reader(f)?))
    }
}

pub fn write_pairs_to<F: Scalar, W: Write>(pairs: &[EncodedPair<F>], w: W) -> Result<()> {
    let dim = pairs.first().map_or(0, EncodedPair::dim);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "left_id".to_string(),
        "right_id".to_string(),
        "label".to_string(),
        "weight".to_string(),
    ];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    wtr.write_record(&header)?;
    for p in pairs {
        if p.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: p.dim(),
            });
        }
        let mut row = vec![
            p.left_id.clone(),
            p.right_id.clone(),
            p.label.map(|l| l.to_string()).unwrap_or_default(),
            p.weight.to_f64_lossy().to_string(),
        ];
        row.extend(p.x.iter().map(|x| x.to_f64_lossy().to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<pairs>", e))?;
    Ok(())
}

pub fn write_pairs<F: Scalar>(pairs: &[EncodedPair<F>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pairs_to(pairs, f)
}

pub fn read_pairs_from<F: Scalar, R: Read>(
    reader: R,
    source: &str,
    origin: &str,
) -> Result<Vec<EncodedPair<F>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["left_id", "right_id", "label", "weight"];
    if headers.len() < 4 || headers.iter().take(4).ne(expected) {
        return Err(Error::Parse {
            path: source.to_string(),
            message: "expected header left_id,right_id,label,weight,x_0,...".into(),
        });
    }
    let dim = headers.len() - 4;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let perr = |message: String| Error::ParseLine {
            path: source.to_string(),
            line,
            message,
        };
        let num = |s: &str| -> Result<F> {
            let v: f64 = s.trim().parse().map_err(|_| perr(format!("invalid number {s:?}")))?;
            if !v.is_finite() {
                return Err(perr(format!("non-finite value {s:?}")));
            }
            Ok(F::lit(v))
        };
        let label = match row.get(2).map(str::trim) {
            Some("") | None => None,
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some(other) => return Err(perr(format!("label must be 0, 1 or empty, found {other:?}"))),
        };
        let weight = num(row.get(3).unwrap_or_default())?;
        if weight < F::zero() {
            return Err(perr("negative weight".into()));
        }
        let x = (0..dim)
            .map(|j| num(row.get(4 + j).unwrap_or_default()))
            .collect::<Result<Vec<F>>>()?;
        out.push(EncodedPair {
            left_id: row.get(0).unwrap_or_default().to_string(),
            right_id: row.get(1).unwrap_or_default().to_string(),
            x,
            label,
            weight,
            origin: origin.to_string(),
        });
    }
    Ok(out)
}

/// Reads a pair file; `origin` defaults to the file stem.
pub fn read_pairs<F: Scalar>(path: impl AsRef<Path>, origin: Option<&str>) -> Result<Vec<EncodedPair<F>>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_pairs_from(f, &path.display().to_string(), origin.unwrap_or(&stem))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_values_exactly() {
        let pairs = vec![
            EncodedPair::new("a", "b", vec![0.1_f64, 1.0 / 3.0]).with_label(1),
            EncodedPair::new("a,x", "c", vec![0.0, 2e-17]),
        ];
        let mut buf = Vec::new();
        write_pairs_to(&pairs, &mut buf).unwrap();
        let back: Vec<EncodedPair<f64>> = read_pairs_from(&buf[..], "mem", "").unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn rejects_bad_labels_and_headers() {
        let bad = "left_id,right_id,label,weight,x_0\na,b,7,1,0.5\n";
        assert!(read_pairs_from::<f64, _>(bad.as_bytes(), "mem", "").is_err());
        let bad = "l,r,label,weight,x_0\na,b,1,1,0.5\n";
        assert!(read_pairs_from::<f64, _>(bad.as_bytes(), "mem", "").is_err());
    }
}
