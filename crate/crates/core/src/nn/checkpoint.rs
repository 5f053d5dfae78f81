//! Named-tensor checkpoints.
//!
//! A checkpoint is a pair of files: a JSON manifest listing each tensor's
//! name, shape and element offset, and a flat binary file holding every
//! tensor's values back to back as little-endian `f64`. Tensors are stored
//! in name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const FORMAT: &str = "bridgerec-tensors";
const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        crate::error::check_len("Tensor::new", n, data.len())?;
        Ok(Self { shape, data })
    }

    pub fn vector(data: &[f64]) -> Self {
        Self {
            shape: vec![data.len()],
            data: data.to_vec(),
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self {
            shape: vec![rows, cols],
            data: data.to_vec(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    dtype: String,
    data_file: String,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` not found")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Moves every tensor of `other` in under `prefix.`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: Checkpoint) {
        for (name, t) in other.tensors {
            self.tensors.insert(format!("{prefix}.{name}"), t);
        }
    }

    /// Tensors under `prefix.`, with the prefix stripped.
    pub fn sub(&self, prefix: &str) -> Checkpoint {
        let p = format!("{prefix}.");
        Checkpoint {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Manifest JSON and the binary payload.
    pub fn to_bytes(&self, data_file: &str) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut payload = Vec::new();
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset,
            });
            offset += t.data.len();
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.to_string(),
            dtype: DTYPE.to_string(),
            data_file: data_file.to_string(),
            tensors: entries,
        };
        Ok((serde_json::to_vec_pretty(&manifest)?, payload))
    }

    pub fn from_bytes(manifest: &[u8], payload: &[u8]) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(manifest)?;
        if manifest.format != FORMAT || manifest.dtype != DTYPE {
            return Err(Error::Checkpoint(format!(
                "unsupported format {}/{}",
                manifest.format, manifest.dtype
            )));
        }
        if !payload.len().is_multiple_of(8) {
            return Err(Error::Checkpoint("payload length not a multiple of 8".into()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            let n: usize = e.shape.iter().product();
            let end = e.offset + n;
            if end > values.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` extends past end of payload",
                    e.name
                )));
            }
            tensors.insert(
                e.name,
                Tensor {
                    shape: e.shape,
                    data: values[e.offset..end].to_vec(),
                },
            );
        }
        Ok(Self { tensors })
    }

    /// Writes `<path>` (manifest) and `<path>.bin` beside it.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let data_path = data_path(manifest_path);
        let data_name = data_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (manifest, payload) = self.to_bytes(&data_name)?;
        if let Some(dir) = manifest_path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        fs::write(manifest_path, manifest).map_err(|e| Error::io(manifest_path, e))?;
        fs::write(&data_path, payload).map_err(|e| Error::io(&data_path, e))?;
        Ok(())
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        if !manifest_path.exists() {
            return Err(Error::MissingArtifact(manifest_path.to_path_buf()));
        }
        let manifest = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let parsed: Manifest = serde_json::from_slice(&manifest)?;
        let data_path = manifest_path
            .parent()
            .map(|d| d.join(&parsed.data_file))
            .unwrap_or_else(|| PathBuf::from(&parsed.data_file));
        if !data_path.exists() {
            return Err(Error::MissingArtifact(data_path));
        }
        let payload = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        Self::from_bytes(&manifest, &payload)
    }
}

fn data_path(manifest_path: &Path) -> PathBuf {
    let mut s = manifest_path.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_round_trip_is_bit_exact() {
        let mut ck = Checkpoint::new();
        ck.insert("a", Tensor::matrix(2, 2, &[1.0, -0.0, f64::MIN_POSITIVE, 1e300]));
        ck.insert("b", Tensor::vector(&[std::f64::consts::PI]));
        let (m, p) = ck.to_bytes("x.bin").unwrap();
        let back = Checkpoint::from_bytes(&m, &p).unwrap();
        for name in ["a", "b"] {
            let (x, y) = (ck.get(name).unwrap(), back.get(name).unwrap());
            assert_eq!(x.shape, y.shape);
            let xb: Vec<u64> = x.data.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn file_round_trip_and_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        assert!(matches!(Checkpoint::load(&path), Err(Error::MissingArtifact(_))));
        let mut ck = Checkpoint::new();
        ck.insert("w", Tensor::matrix(1, 3, &[0.1, 0.2, 0.3]));
        ck.save(&path).unwrap();
        assert!(dir.path().join("model.json.bin").exists());
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn prefixes() {
        let mut inner = Checkpoint::new();
        inner.insert("w1", Tensor::vector(&[1.0]));
        let mut outer = Checkpoint::new();
        outer.merge_prefixed("meta", inner.clone());
        assert!(outer.contains("meta.w1"));
        assert_eq!(outer.sub("meta"), inner);
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut ck = Checkpoint::new();
        ck.insert("w", Tensor::vector(&[1.0, 2.0]));
        let (m, p) = ck.to_bytes("w.bin").unwrap();
        assert!(Checkpoint::from_bytes(&m, &p[..8]).is_err());
    }
}
