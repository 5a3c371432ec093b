//! Single-file checkpoint archives.
//!
//! Layout: an 8-byte magic, a length-prefixed JSON metadata record, then a
//! count of named tensor records, each `(name, dims, f64 little-endian
//! data)`. Model parameters are stored under the `model/` namespace;
//! optimizer state under `optim/`. Loading into a parameter store considers
//! only the `model/` namespace and reports what matched.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::ParamStore;

const MAGIC: &[u8; 8] = b"FFDCKPT1";

/// Prefix for model parameters inside the archive.
pub const MODEL_NS: &str = "model/";
/// Prefix for optimizer state inside the archive.
pub const OPTIM_NS: &str = "optim/";

/// Everything about a run that is not a tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    /// Run/model configuration, stored as opaque JSON so the archive format
    /// does not depend on config evolution.
    pub config: serde_json::Value,
    /// Per-channel pixel normalization applied during training.
    pub normalization: Normalization,
    /// Completed training epochs.
    pub epoch: u32,
    pub total_epochs: u32,
    pub seed: u64,
    /// Validation AUC of the best epoch seen so far, when tracked.
    pub best_val_auc: Option<f64>,
    /// Epoch that produced `best_val_auc`.
    pub best_epoch: Option<u32>,
}

/// Pixel normalization constants: `(pixel - mean) / std`, one entry per
/// channel (grayscale pipelines carry one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A parsed archive.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }
}

/// Write an archive. Tensors are sorted by name so identical contents give
/// identical bytes.
pub fn save(path: &Path, meta: &CheckpointMeta, tensors: &[(String, ArrayD<f64>)]) -> Result<()> {
    let mut sorted: Vec<&(String, ArrayD<f64>)> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let meta_bytes = serde_json::to_vec(meta)
        .map_err(|e| Error::Format(format!("metadata encoding failed: {e}")))?;
    w.write_u32::<LittleEndian>(meta_bytes.len() as u32)?;
    w.write_all(&meta_bytes)?;
    w.write_u64::<LittleEndian>(sorted.len() as u64)?;
    for (name, tensor) in sorted {
        let name_bytes = name.as_bytes();
        w.write_u32::<LittleEndian>(name_bytes.len() as u32)?;
        w.write_all(name_bytes)?;
        w.write_u32::<LittleEndian>(tensor.ndim() as u32)?;
        for d in tensor.shape() {
            w.write_u64::<LittleEndian>(*d as u64)?;
        }
        for v in tensor.iter() {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read an archive back.
pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for a checkpoint".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint archive (bad magic)".into()));
    }
    let meta_len = r.read_u32::<LittleEndian>()? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::Format(format!("metadata parse failed: {e}")))?;
    let count = r.read_u64::<LittleEndian>()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let ndim = r.read_u32::<LittleEndian>()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let numel: usize = dims.iter().product();
        let mut data = vec![0.0f64; numel];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        let tensor = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
        tensors.push((name, tensor));
    }
    Ok(Checkpoint { meta, tensors })
}

/// How strictly weight loading treats discrepancies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Any missing, unexpected, or shape-mismatched parameter is an error.
    Strict,
    /// Load what matches, report the rest.
    Lenient,
}

/// What happened during a weight load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub matched: Vec<String>,
    /// Store parameters absent from the archive.
    pub missing: Vec<String>,
    /// Archive model tensors with no matching store parameter.
    pub unexpected: Vec<String>,
    /// Names present on both sides with differing shapes (not loaded).
    pub shape_mismatch: Vec<String>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty() && self.shape_mismatch.is_empty()
    }

    /// One-line summary for logs.
    pub fn summary(&self) -> String {
        format!(
            "{} matched, {} missing, {} unexpected, {} shape-mismatched",
            self.matched.len(),
            self.missing.len(),
            self.unexpected.len(),
            self.shape_mismatch.len()
        )
    }
}

/// Copy the archive's `model/` tensors into matching store parameters.
/// Store parameter `p` matches archive tensor `model/p`.
pub fn apply_to_store(
    store: &mut ParamStore,
    ckpt: &Checkpoint,
    strictness: Strictness,
) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    let mut seen = vec![false; store.len()];
    for (name, tensor) in &ckpt.tensors {
        let Some(bare) = name.strip_prefix(MODEL_NS) else {
            continue; // other namespaces (optimizer state) are not weights
        };
        match store.id(bare) {
            None => report.unexpected.push(bare.to_string()),
            Some(id) => {
                seen[id] = true;
                if store.value(id).shape() != tensor.shape() {
                    report.shape_mismatch.push(bare.to_string());
                } else {
                    *store.value_mut(id) = tensor.clone();
                    report.matched.push(bare.to_string());
                }
            }
        }
    }
    for (id, name, _) in store.iter() {
        if !seen[id] {
            report.missing.push(name.to_string());
        }
    }
    for list in [
        &mut report.matched,
        &mut report.missing,
        &mut report.unexpected,
        &mut report.shape_mismatch,
    ] {
        list.sort();
    }
    if strictness == Strictness::Strict && !report.is_clean() {
        return Err(Error::Data(format!(
            "strict weight load failed: {}",
            report.summary()
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;
    use tempfile::tempdir;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            format_version: 1,
            config: serde_json::json!({"note": "test"}),
            normalization: Normalization {
                mean: vec![0.5],
                std: vec![0.25],
            },
            epoch: 3,
            total_epochs: 5,
            seed: 42,
            best_val_auc: Some(0.97),
            best_epoch: Some(2),
        }
    }

    fn store_with(names: &[(&str, Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, v) in names {
            s.register(*n, arr1(v).into_dyn());
        }
        s
    }

    fn tensors_of(store: &ParamStore) -> Vec<(String, ArrayD<f64>)> {
        store
            .iter()
            .map(|(_, n, v)| (format!("{MODEL_NS}{n}"), v.clone()))
            .collect()
    }

    #[test]
    fn roundtrip_is_clean() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let mut store = store_with(&[("w", vec![1.0, 2.0]), ("b", vec![0.5])]);
        save(&path, &meta(), &tensors_of(&store)).unwrap();
        // Perturb, reload, verify restoration.
        store.value_mut(0).fill(9.0);
        let ckpt = load(&path).unwrap();
        assert_eq!(ckpt.meta.epoch, 3);
        assert_eq!(ckpt.meta.seed, 42);
        assert_eq!(ckpt.meta.normalization.mean, vec![0.5]);
        let report = apply_to_store(&mut store, &ckpt, Strictness::Strict).unwrap();
        assert!(report.is_clean());
        assert_eq!(report.matched.len(), 2);
        assert_eq!(store.value(store.id("w").unwrap()).as_slice().unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn missing_parameters_are_reported_and_strict_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let partial = store_with(&[("w", vec![1.0, 2.0])]);
        save(&path, &meta(), &tensors_of(&partial)).unwrap();
        let mut full = store_with(&[("w", vec![0.0, 0.0]), ("extra.bias", vec![0.0])]);
        let ckpt = load(&path).unwrap();
        assert!(matches!(
            apply_to_store(&mut full, &ckpt, Strictness::Strict),
            Err(Error::Data(_))
        ));
        let report = apply_to_store(&mut full, &ckpt, Strictness::Lenient).unwrap();
        assert_eq!(report.missing, vec!["extra.bias".to_string()]);
        assert_eq!(report.matched, vec!["w".to_string()]);
    }

    #[test]
    fn unexpected_and_shape_mismatch_are_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let source = store_with(&[("w", vec![1.0, 2.0, 3.0]), ("stray", vec![7.0])]);
        save(&path, &meta(), &tensors_of(&source)).unwrap();
        // Target has w with a different shape and no stray.
        let mut target = store_with(&[("w", vec![0.0, 0.0])]);
        let ckpt = load(&path).unwrap();
        let report = apply_to_store(&mut target, &ckpt, Strictness::Lenient).unwrap();
        assert_eq!(report.shape_mismatch, vec!["w".to_string()]);
        assert_eq!(report.unexpected, vec!["stray".to_string()]);
        // The mismatched tensor is left untouched.
        assert_eq!(target.value(0).as_slice().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn optimizer_namespace_is_ignored_by_weight_loads() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let store = store_with(&[("w", vec![1.0])]);
        let mut tensors = tensors_of(&store);
        tensors.push((format!("{OPTIM_NS}m/w"), arr1(&[0.1]).into_dyn()));
        save(&path, &meta(), &tensors).unwrap();
        let mut target = store_with(&[("w", vec![0.0])]);
        let ckpt = load(&path).unwrap();
        let report = apply_to_store(&mut target, &ckpt, Strictness::Strict).unwrap();
        assert!(report.is_clean());
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"FF").unwrap();
        assert!(matches!(load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn identical_contents_give_identical_bytes() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let store = store_with(&[("b", vec![2.0]), ("a", vec![1.0])]);
        save(&p1, &meta(), &tensors_of(&store)).unwrap();
        // Same tensors handed over in a different order.
        let mut reversed = tensors_of(&store);
        reversed.reverse();
        save(&p2, &meta(), &reversed).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
