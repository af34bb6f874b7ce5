//! CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Accuracy in [0,1] written as a percentage with two decimals.
#[derive(Debug, Clone, Copy)]
pub struct Pct(pub f64);

impl Serialize for Pct {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.2}", 100.0 * self.0))
    }
}

/// Real value rounded to four decimals.
#[derive(Debug, Clone, Copy)]
pub struct Fixed4(pub f64);

impl Serialize for Fixed4 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.4}", self.0))
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Serialize)]
pub struct SummaryRow<'a> {
    pub dataset: &'a str,
    pub method: &'a str,
    pub scheme: &'a str,
    pub seeds: usize,
    pub mean_test_acc: Pct,
    pub std_test_acc: Pct,
}

impl<'a> SummaryRow<'a> {
    pub fn new(dataset: &'a str, method: &'a str, scheme: &'a str, accs: &[f64]) -> Self {
        let (mean, std) = mean_std(accs);
        Self {
            dataset,
            method,
            scheme,
            seeds: accs.len(),
            mean_test_acc: Pct(mean),
            std_test_acc: Pct(std),
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
pub struct FileHash {
    pub file: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct DatasetRecord {
    pub name: String,
    pub path: PathBuf,
    pub files: Vec<FileHash>,
}

/// SHA-256 of every file in the dataset directory (split files included),
/// sorted by relative path.
pub fn hash_dataset(name: &str, dir: &Path) -> Result<DatasetRecord> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let files = files
        .into_iter()
        .map(|rel| {
            let bytes = fs::read(dir.join(&rel))
                .with_context(|| format!("reading {}", dir.join(&rel).display()))?;
            let digest = Sha256::digest(&bytes);
            Ok(FileHash {
                file: rel,
                sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DatasetRecord {
        name: name.to_string(),
        path: dir.to_path_buf(),
        files,
    })
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walked from root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Everything needed to rerun a command and get identical tables.
#[derive(Serialize)]
pub struct Manifest<'a, H: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub threads: usize,
    pub seeds: &'a [u64],
    pub datasets: Vec<DatasetRecord>,
    pub variance: Option<&'a str>,
    pub hyperparameters: H,
}

impl<'a, H: Serialize> Manifest<'a, H> {
    pub fn new(
        command: &'a str,
        seeds: &'a [u64],
        datasets: Vec<DatasetRecord>,
        hyperparameters: H,
    ) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
            seeds,
            datasets,
            variance: None,
            hyperparameters,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        write_json(&out_dir.join("manifest.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_has_two_decimals() {
        assert_eq!(serde_json::to_string(&Pct(0.81824)).unwrap(), "\"81.82\"");
        assert_eq!(serde_json::to_string(&Pct(1.0)).unwrap(), "\"100.00\"");
    }

    #[test]
    fn mean_and_population_std() {
        let (m, s) = mean_std(&[0.2, 0.4]);
        assert!((m - 0.3).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-15);
    }

    #[test]
    fn dataset_hash_is_hex_sha256() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), b"abc").unwrap();
        let rec = hash_dataset("x", dir.path()).unwrap();
        assert_eq!(rec.files[0].file, "a.txt");
        assert_eq!(
            rec.files[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
