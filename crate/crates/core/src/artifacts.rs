//! JSON stage artifacts.
//!
//! Every JSON file is written through [`canonical_json`]: keys sorted,
//! two-space indentation, shortest round-trip float formatting and a
//! trailing newline, so equal values always produce equal bytes.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Coreset;
use crate::selector::BinPartition;

pub const FEATURES_FILE: &str = "features.mmeb";
pub const REDUCED_FILE: &str = "reduced.mmeb";
pub const PARTITION_FILE: &str = "partition.json";
pub const CORESET_FILE: &str = "coreset.json";
pub const CORESET_TEXT_FILE: &str = "coreset.txt";
pub const REPORT_FILE: &str = "report.json";

pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap, which sorts them.
    let value = serde_json::to_value(value)
        .map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    let mut text = serde_json::to_string_pretty(&value)
        .map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, canonical_json(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    n: usize,
    num_bins: usize,
    bins: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

/// `{"bins": [[...], ...], "config_fingerprint": ..., "n": ..., "num_bins": ...}`
pub fn partition_json(partition: &BinPartition, fingerprint: Option<&str>) -> Result<String> {
    canonical_json(&PartitionFile {
        n: partition.n(),
        num_bins: partition.num_bins(),
        bins: partition.bins().to_vec(),
        config_fingerprint: fingerprint.map(str::to_string),
    })
}

pub fn write_partition(
    path: impl AsRef<Path>,
    partition: &BinPartition,
    fingerprint: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, partition_json(partition, fingerprint)?).map_err(|e| Error::io(path, e))
}

pub fn read_partition(path: impl AsRef<Path>) -> Result<(BinPartition, Option<String>)> {
    let file: PartitionFile = read_json(&path)?;
    if file.num_bins != file.bins.len() {
        return Err(Error::Partition(format!(
            "num_bins is {} but {} bins are listed",
            file.num_bins,
            file.bins.len()
        )));
    }
    Ok((BinPartition::new(file.n, file.bins)?, file.config_fingerprint))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoresetFile {
    n: usize,
    fraction: f64,
    seed: u64,
    indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

pub fn coreset_json(coreset: &Coreset) -> Result<String> {
    canonical_json(&CoresetFile {
        n: coreset.n,
        fraction: coreset.fraction,
        seed: coreset.seed,
        indices: coreset.indices.clone(),
        config_fingerprint: coreset.config_fingerprint.clone(),
    })
}

pub fn write_coreset(path: impl AsRef<Path>, coreset: &Coreset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, coreset_json(coreset)?).map_err(|e| Error::io(path, e))
}

pub fn read_coreset(path: impl AsRef<Path>) -> Result<Coreset> {
    let file: CoresetFile = read_json(&path)?;
    let sorted = file.indices.windows(2).all(|w| w[0] < w[1]);
    if !sorted || file.indices.last().is_some_and(|&i| i >= file.n) {
        return Err(Error::Format(format!(
            "{}: coreset indices must be strictly increasing and below n",
            path.as_ref().display()
        )));
    }
    Ok(Coreset {
        n: file.n,
        fraction: file.fraction,
        seed: file.seed,
        indices: file.indices,
        config_fingerprint: file.config_fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_sorts_keys() {
        #[derive(Serialize)]
        struct S {
            zeta: u32,
            alpha: f64,
        }
        let text = canonical_json(&S { zeta: 1, alpha: 0.2 }).unwrap();
        assert_eq!(text, "{\n  \"alpha\": 0.2,\n  \"zeta\": 1\n}\n");
    }

    #[test]
    fn partition_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(PARTITION_FILE);
        let p = BinPartition::new(4, vec![vec![2, 1], vec![0, 3]]).unwrap();
        write_partition(&path, &p, Some("abc")).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["bins"], serde_json::json!([[2, 1], [0, 3]]));
        assert_eq!(v["num_bins"], 2);
        assert_eq!(read_partition(&path).unwrap(), (p, Some("abc".to_string())));
    }

    #[test]
    fn corrupt_partition_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(PARTITION_FILE);
        fs::write(&path, r#"{"n": 3, "num_bins": 2, "bins": [[0, 1], [1, 2]]}"#).unwrap();
        assert_eq!(read_partition(&path).unwrap_err().kind(), "PartitionError");
    }

    #[test]
    fn coreset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CORESET_FILE);
        let c = Coreset {
            n: 10,
            fraction: 0.2,
            seed: u64::MAX,
            indices: vec![3, 7],
            config_fingerprint: None,
        };
        write_coreset(&path, &c).unwrap();
        assert_eq!(read_coreset(&path).unwrap(), c);
        assert_eq!(c.to_index_text(), "3\n7\n");
    }
}
