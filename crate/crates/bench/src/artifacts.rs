//! CSV writing, checksums and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_COPY: &str = "config.toml";

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::csv(path, e))?;
    w.write_record(header).map_err(|e| BenchError::csv(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref()))
            .map_err(|e| BenchError::csv(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Header and records of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::csv(path, e))?;
    let header = r
        .headers()
        .map_err(|e| BenchError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| BenchError::csv(path, e))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every file below `dir`, as sorted `/`-separated relative paths.
/// Subdirectories holding their own run manifest and config copy are
/// separate runs and are skipped.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| BenchError::io(dir, e))? {
            let path = entry.map_err(|e| BenchError::io(dir, e))?.path();
            if path.is_dir() {
                if !(path.join(MANIFEST_FILE).is_file() && path.join(CONFIG_COPY).is_file()) {
                    walk(root, &path, out)?;
                }
            } else {
                let rel = path.strip_prefix(root).expect("walk stays below root");
                let parts: Vec<_> = rel.iter().map(|p| p.to_string_lossy()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

/// Writes `manifest.txt` listing the seed, the config copy and a SHA-256
/// line for every other file below `dir`.
pub fn write_manifest(dir: &Path, seed: u64) -> Result<()> {
    let mut text = format!("seed {seed}\nconfig {CONFIG_COPY}\n");
    for rel in list_files(dir)? {
        if rel == MANIFEST_FILE {
            continue;
        }
        let hash = sha256_file(&dir.join(&rel))?;
        text.push_str(&format!("sha256 {hash} {rel}\n"));
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| BenchError::io(path, e))
}

/// Problems found comparing `manifest.txt` with the files below `dir`.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| BenchError::io(&path, e))?;
    let mut problems = Vec::new();
    let mut listed = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.splitn(3, ' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("seed"), Some(s), None) if s.parse::<u64>().is_ok() => {}
            (Some("config"), Some(_), None) => {}
            (Some("sha256"), Some(hash), Some(rel)) => {
                let file = dir.join(rel);
                if !file.is_file() {
                    problems.push(format!("manifest lists missing file {rel}"));
                } else if sha256_file(&file)? != hash {
                    problems.push(format!("checksum mismatch for {rel}"));
                }
                listed.push(rel.to_string());
            }
            _ => problems.push(format!("manifest line {} is malformed: {line:?}", n + 1)),
        }
    }
    for rel in list_files(dir)? {
        if rel != MANIFEST_FILE && !listed.contains(&rel) {
            problems.push(format!("{rel} is not in the manifest"));
        }
    }
    Ok(problems)
}

pub fn create_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|e| BenchError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write_text(&root.join(CONFIG_COPY), "seed = 1\n").unwrap();
        create_dir(&root.join("a")).unwrap();
        write_text(&root.join("a/x.csv"), "epoch\n0\n").unwrap();
        write_manifest(root, 1).unwrap();
        assert!(verify_manifest(root).unwrap().is_empty());

        create_dir(&root.join("nested")).unwrap();
        write_text(&root.join("nested/y.csv"), "x\n").unwrap();
        write_text(&root.join("nested").join(CONFIG_COPY), "").unwrap();
        write_manifest(&root.join("nested"), 1).unwrap();
        assert!(verify_manifest(root).unwrap().is_empty());

        write_text(&root.join("a/x.csv"), "epoch\n1\n").unwrap();
        write_text(&root.join("extra.txt"), "").unwrap();
        let problems = verify_manifest(root).unwrap();
        assert_eq!(problems.len(), 2, "{problems:?}");
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![vec!["1".to_string(), "failed: a, b".to_string()]];
        write_csv(&path, &["n", "status"], &rows).unwrap();
        let (h, r) = read_csv(&path).unwrap();
        assert_eq!(h, ["n", "status"]);
        assert_eq!(r, rows);
        assert_eq!(num(0.1), "0.1");
    }
}
