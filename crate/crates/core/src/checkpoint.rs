//! Checkpoint persistence.
//!
//! A checkpoint is a directory holding `manifest.json` (an ordered JSON array
//! of `{name, shape, dtype: "f32"}` entries) and `tensors.bin` (the tensors'
//! little-endian f32 values, row-major, concatenated in manifest order).
//! Round-trips are bit-exact at f32 precision.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

pub fn save_tensors(dir: &Path, entries: &[(&str, &Tensor)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest: Vec<ManifestEntry> = entries
        .iter()
        .map(|(name, t)| ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: "f32".to_string(),
        })
        .collect();
    let mut bin = Vec::new();
    for (_, t) in entries {
        for &v in t.data() {
            bin.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    let mut f = fs::File::create(dir.join(TENSORS_FILE))?;
    f.write_all(&bin)?;
    Ok(())
}

pub fn load_tensors(dir: &Path) -> Result<Vec<(String, Tensor)>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    let mut bin = Vec::new();
    fs::File::open(dir.join(TENSORS_FILE))?.read_to_end(&mut bin)?;

    let expected: usize = manifest
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if bin.len() != expected * 4 {
        return Err(Error::format(
            dir.join(TENSORS_FILE).display().to_string(),
            0,
            format!("expected {} bytes, found {}", expected * 4, bin.len()),
        ));
    }

    let mut out = Vec::with_capacity(manifest.len());
    let mut offset = 0usize;
    for entry in manifest {
        if entry.dtype != "f32" {
            return Err(Error::format(
                manifest_path.display().to_string(),
                0,
                format!("unsupported dtype {:?} for {}", entry.dtype, entry.name),
            ));
        }
        let numel: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let bytes: [u8; 4] = bin[offset..offset + 4].try_into().unwrap();
            data.push(f32::from_le_bytes(bytes) as f64);
            offset += 4;
        }
        out.push((entry.name, Tensor::from_vec(&entry.shape, data)?));
    }
    Ok(out)
}

/// Save every parameter of `store` in registration order.
pub fn save_params(dir: &Path, store: &ParamStore) -> Result<()> {
    let entries: Vec<(&str, &Tensor)> = store
        .iter()
        .map(|(_, p)| (p.name.as_str(), &p.value))
        .collect();
    save_tensors(dir, &entries)
}

/// Replace the values of `store` with a saved checkpoint. Names and shapes
/// must match exactly.
pub fn load_params(dir: &Path, store: &mut ParamStore) -> Result<()> {
    let loaded = load_tensors(dir)?;
    if loaded.len() != store.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} tensors, model expects {}",
            loaded.len(),
            store.len()
        )));
    }
    for (name, tensor) in loaded {
        let id = store
            .id_of(&name)
            .ok_or_else(|| Error::Data(format!("checkpoint tensor {name:?} unknown to model")))?;
        let p = store.get_mut(id);
        if p.value.shape() != tensor.shape() {
            return Err(Error::Data(format!(
                "checkpoint tensor {name:?} has shape {:?}, model expects {:?}",
                tensor.shape(),
                p.value.shape()
            )));
        }
        p.value = tensor;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let a = Tensor::from_vec(&[2, 2], vec![1.5, -0.25, 3.0e-7, 42.0]).unwrap();
        let b = Tensor::vector(vec![0.1, 0.2]);
        save_tensors(dir.path(), &[("a", &a), ("b", &b)]).unwrap();

        let loaded = load_tensors(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "a");
        assert_eq!(loaded[1].0, "b");
        for (orig, (_, got)) in [&a, &b].iter().zip(&loaded) {
            for (x, y) in orig.data().iter().zip(got.data()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }

        // Saving what was loaded reproduces identical bytes.
        let dir2 = tempfile::tempdir().unwrap();
        let refs: Vec<(&str, &Tensor)> =
            loaded.iter().map(|(n, t)| (n.as_str(), t)).collect();
        save_tensors(dir2.path(), &refs).unwrap();
        let bin1 = std::fs::read(dir.path().join(TENSORS_FILE)).unwrap();
        let bin2 = std::fs::read(dir2.path().join(TENSORS_FILE)).unwrap();
        assert_eq!(bin1, bin2);
        let man1 = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        let man2 = std::fs::read(dir2.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(man1, man2);
    }

    #[test]
    fn truncated_binary_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = Tensor::vector(vec![1.0, 2.0, 3.0]);
        save_tensors(dir.path(), &[("a", &a)]).unwrap();
        let bin_path = dir.path().join(TENSORS_FILE);
        let bytes = std::fs::read(&bin_path).unwrap();
        std::fs::write(&bin_path, &bytes[..8]).unwrap();
        assert!(load_tensors(dir.path()).is_err());
    }

    #[test]
    fn param_store_round_trip() {
        let mut store = ParamStore::new();
        store.add("w1", Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        store.add("b1", Tensor::vector(vec![-1.0])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_params(dir.path(), &store).unwrap();

        let mut other = store.clone();
        for p in other.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        load_params(dir.path(), &mut other).unwrap();
        for ((_, p), (_, q)) in store.iter().zip(other.iter()) {
            assert_eq!(p.value, q.value);
        }
    }
}
