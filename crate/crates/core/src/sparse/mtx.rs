//! MatrixMarket coordinate I/O (`.mtx`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::csc::CscMatrix;
use super::SparseError;

fn check_extension(path: &Path) -> Result<(), SparseError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("mtx") => Ok(()),
        _ => Err(SparseError::Io(format!("{}: unsupported matrix format, expected .mtx", path.display()))),
    }
}

/// Renders a matrix as MatrixMarket text (1-based coordinates).
pub fn to_matrix_market(a: &CscMatrix) -> String {
    let kind = if a.is_symmetric() { "symmetric" } else { "general" };
    let mut out = String::new();
    let _ = writeln!(out, "%%MatrixMarket matrix coordinate real {kind}");
    let _ = writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (r, c, v) in a.iter() {
        let _ = writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v);
    }
    out
}

pub fn from_matrix_market(text: &str) -> Result<CscMatrix, SparseError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SparseError::Io("empty MatrixMarket input".into()))?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(SparseError::Io(format!("unsupported MatrixMarket header: {header}")));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(SparseError::Io(format!("unsupported field type {}", fields[3])));
    }
    let symmetric = match fields[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(SparseError::Io(format!("unsupported symmetry {other}"))),
    };
    let mut data = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size = data.next().ok_or_else(|| SparseError::Io("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| SparseError::Io(format!("bad size line: {size}"))))
        .collect::<Result<_, _>>()?;
    if dims.len() != 3 {
        return Err(SparseError::Io(format!("bad size line: {size}")));
    }
    let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
    let mut triplets = Vec::with_capacity(nnz);
    for line in data {
        let mut it = line.split_whitespace();
        let parse_err = || SparseError::Io(format!("bad entry line: {line}"));
        let r: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
        let c: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
        let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
        if r == 0 || c == 0 {
            return Err(parse_err());
        }
        triplets.push((r - 1, c - 1, v));
    }
    if triplets.len() != nnz {
        return Err(SparseError::Io(format!("expected {nnz} entries, found {}", triplets.len())));
    }
    CscMatrix::from_triplets(nrows, ncols, &triplets, symmetric)
}

pub fn write_matrix(path: impl AsRef<Path>, a: &CscMatrix) -> Result<(), SparseError> {
    let path = path.as_ref();
    check_extension(path)?;
    fs::write(path, to_matrix_market(a)).map_err(|e| SparseError::Io(format!("{}: {e}", path.display())))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<CscMatrix, SparseError> {
    let path = path.as_ref();
    check_extension(path)?;
    let text = fs::read_to_string(path).map_err(|e| SparseError::Io(format!("{}: {e}", path.display())))?;
    from_matrix_market(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_symmetric() {
        let a = CscMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (2, 0, -1.5), (1, 1, 1e-300)], true).unwrap();
        let b = from_matrix_market(&to_matrix_market(&a)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extension_selects_format() {
        let dir = tempfile::tempdir().unwrap();
        let a = CscMatrix::identity(2);
        assert!(write_matrix(dir.path().join("k.txt"), &a).is_err());
        let p = dir.path().join("k.mtx");
        write_matrix(&p, &a).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), a);
    }
}
