//! File helpers: atomic writes, the flat `key = value` text format and the
//! two-column sample CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes a map as `key = value` lines.
pub fn format_kv(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            what: "key-value file",
            detail: format!("line {}: expected `key = value`", lineno + 1),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Writes a `n x 2` sample matrix as CSV with header `x0,x1`.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn samples_to_csv(samples: &Array2<f64>) -> String {
    let mut out = String::with_capacity(samples.nrows() * 40 + 8);
    out.push_str("x0,x1\n");
    for row in samples.rows() {
        let _ = writeln!(out, "{},{}", row[0], row[1]);
    }
    out
}

pub fn samples_from_csv(text: &str) -> Result<Array2<f64>> {
    let bad = |detail: String| Error::Format { what: "sample CSV", detail };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "x0,x1" => {}
        other => return Err(bad(format!("expected header `x0,x1`, found {other:?}"))),
    }
    let mut flat = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        for _ in 0..2 {
            let field = parts.next().ok_or_else(|| bad(format!("row {}: missing column", i + 1)))?;
            flat.push(field.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)))?);
        }
        if parts.next().is_some() {
            return Err(bad(format!("row {}: too many columns", i + 1)));
        }
    }
    let n = flat.len() / 2;
    Ok(Array2::from_shape_vec((n, 2), flat).expect("two values per row"))
}

pub fn read_samples(path: &Path) -> Result<Array2<f64>> {
    samples_from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kv_round_trip_and_comments() {
        let text = "# comment\n a = 1 \n\nb=two words\n";
        let map = parse_kv(text).unwrap();
        assert_eq!(map["a"], "1");
        assert_eq!(map["b"], "two words");
        assert_eq!(parse_kv(&format_kv(&map)).unwrap(), map);
        assert!(parse_kv("novalue\n").is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = array![[0.1, -1.0 / 3.0], [1e-300, 2.5e10]];
        let back = samples_from_csv(&samples_to_csv(&m)).unwrap();
        assert_eq!(back, m);
        assert!(samples_from_csv("a,b\n1,2\n").is_err());
        assert!(samples_from_csv("x0,x1\n1\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("scoregeo-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
