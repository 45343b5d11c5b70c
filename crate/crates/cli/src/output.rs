//! CSV rendering and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use ustest::experiments::SizeCurve;

pub const SIZE_HEADER: [&str; 6] = ["statistic", "alpha", "empirical_size", "se", "replicates", "degenerate_count"];

/// Size curves as CSV. With `n` given, a leading `n` column is added.
pub fn size_csv(curves: &[(Option<usize>, &SizeCurve)]) -> Result<Vec<u8>> {
    let swept = curves.iter().any(|(n, _)| n.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = Vec::new();
    if swept {
        header.push("n");
    }
    header.extend(SIZE_HEADER);
    w.write_record(&header)?;
    for (n, curve) in curves {
        for c in &curve.curves {
            for pt in &c.points {
                let mut row = Vec::with_capacity(7);
                if let Some(n) = n {
                    row.push(n.to_string());
                }
                row.extend([
                    c.kind.to_string(),
                    pt.alpha.to_string(),
                    pt.empirical_size.to_string(),
                    pt.se.to_string(),
                    c.replicates.to_string(),
                    c.degenerate_count.to_string(),
                ]);
                w.write_record(&row)?;
            }
        }
    }
    w.into_inner().context("flushing CSV buffer")
}

/// `key = value` lines.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_path_appends_suffix() {
        assert_eq!(meta_path(Path::new("out/size.csv")), PathBuf::from("out/size.csv.meta"));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn key_value_lines() {
        assert_eq!(key_values(&[("a", "1".into()), ("b", "x y".into())]), "a = 1\nb = x y\n");
    }
}
