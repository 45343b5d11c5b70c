//! Reading observation matrices from CSV.

use std::path::Path;

use anyhow::{bail, Context, Result};

use ustest::SampleMatrix;

/// Reads a headed CSV of numeric columns, one observation per row.
/// Empty, non-numeric and non-finite cells are rejected.
pub fn read_sample(path: &Path) -> Result<SampleMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let width = rdr.headers()?.len();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: malformed record", path.display()))?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != width {
            bail!("{}: line {line}: expected {width} fields, found {}", path.display(), rec.len());
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => bail!("{}: line {line}, column {}: not a finite number: {cell:?}", path.display(), j + 1),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no observations", path.display());
    }
    Ok(SampleMatrix::from_rows(&rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_rows() {
        let f = write("a,b\n1,2\n3.5, -4\n");
        let x = read_sample(f.path()).unwrap();
        assert_eq!((x.n(), x.p()), (2, 2));
        assert_eq!(x.row(1), &[3.5, -4.0]);
    }

    #[test]
    fn rejects_bad_cells() {
        for bad in ["a,b\n1,\n", "a,b\n1,NaN\n", "a,b\n1,x\n", "a,b\n1,inf\n", "a,b\n1\n", "a,b\n"] {
            assert!(read_sample(write(bad).path()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn error_names_the_line() {
        let err = read_sample(write("a,b\n1,2\n3,NaN\n").path()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
