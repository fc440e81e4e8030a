use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linops::Vector;

/// Parses `label idx:val idx:val …` lines with 1-based indices into a dense
/// matrix. `dim` fixes the column count; otherwise the largest index is
/// used. Blank lines and `#` comments are skipped.
pub fn parse_libsvm(text: &str, dim: Option<usize>) -> Result<(DMatrix<f64>, Vector)> {
    let mut rows: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_idx = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno + 1, msg };
        let mut tokens = line.split_whitespace();
        let label: f64 = tokens
            .next()
            .expect("nonempty line")
            .parse()
            .map_err(|_| err("label is not a number".into()))?;
        let mut row = BTreeMap::new();
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
            let i: usize = i.parse().map_err(|_| err(format!("bad index {i:?}")))?;
            if i == 0 {
                return Err(err("indices are 1-based".into()));
            }
            let v: f64 = v.parse().map_err(|_| err(format!("bad value {v:?}")))?;
            if row.insert(i, v).is_some() {
                return Err(err(format!("duplicate index {i}")));
            }
            max_idx = max_idx.max(i);
        }
        rows.push(row);
        labels.push(label);
    }
    let p = match dim {
        Some(p) if p < max_idx => {
            return Err(Error::Parse { line: 0, msg: format!("index {max_idx} exceeds the declared dimension {p}") })
        }
        Some(p) => p,
        None => max_idx,
    };
    let mut w = DMatrix::zeros(rows.len(), p);
    for (r, row) in rows.iter().enumerate() {
        for (&i, &v) in row {
            w[(r, i - 1)] = v;
        }
    }
    Ok((w, Vector::from_vec(labels)))
}

pub fn read_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<(DMatrix<f64>, Vector)> {
    parse_libsvm(&fs::read_to_string(path)?, dim)
}

/// Canonical form: shortest round-trip float formatting, nonzero entries
/// only, single spaces, trailing newline.
pub fn format_libsvm(w: &DMatrix<f64>, labels: &Vector) -> Result<String> {
    if w.nrows() != labels.len() {
        return Err(Error::DimensionMismatch { expected: w.nrows(), got: labels.len() });
    }
    let mut out = String::new();
    for (r, label) in labels.iter().enumerate() {
        write!(out, "{label}").expect("string write");
        for c in 0..w.ncols() {
            let v = w[(r, c)];
            if v != 0.0 {
                write!(out, " {}:{v}", c + 1).expect("string write");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_libsvm(path: impl AsRef<Path>, w: &DMatrix<f64>, labels: &Vector) -> Result<()> {
    fs::write(path, format_libsvm(w, labels)?)?;
    Ok(())
}

/// Maps two distinct label values to `{0, 1}`, the smaller to 0.
pub fn binary_labels(labels: &Vector) -> Result<Vector> {
    let mut values: Vec<f64> = labels.iter().cloned().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    match values.as_slice() {
        [only] => Ok(labels.map(|l| if l == *only && *only > 0.0 { 1.0 } else { 0.0 })),
        [lo, _] => Ok(labels.map(|l| if l == *lo { 0.0 } else { 1.0 })),
        _ => Err(Error::InvalidParameter(format!("expected two label values, found {}", values.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_definition() {
        let (w, a) = parse_libsvm("1 1:0.5 3:2\n", Some(3)).unwrap();
        assert_eq!(w.row(0).iter().cloned().collect::<Vec<_>>(), vec![0.5, 0.0, 2.0]);
        assert_eq!(a[0], 1.0);
    }

    #[test]
    fn empty_feature_line_is_zero_row() {
        let (w, a) = parse_libsvm("0\n", Some(2)).unwrap();
        assert_eq!(w.row(0).amax(), 0.0);
        assert_eq!(a[0], 0.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_libsvm("1 1:1\n0 2:1 2:3\n", None) {
            Err(Error::Parse { line: 2, msg }) => assert!(msg.contains("duplicate")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_libsvm("1 1:1\nx 1:1\n", None), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_libsvm("1 0:1\n", None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn labels_remap() {
        let l = binary_labels(&Vector::from_column_slice(&[-1., 1., 1., -1.])).unwrap();
        assert_eq!(l.as_slice(), &[0., 1., 1., 0.]);
        assert!(binary_labels(&Vector::from_column_slice(&[0., 1., 2.])).is_err());
    }
}
