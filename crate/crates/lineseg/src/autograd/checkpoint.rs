//! Checkpoint file: a JSON manifest (layer names, shapes, arbitrary
//! metadata) followed by raw little-endian `f64` parameter data.
//!
//! Layout: magic `LSEG`, format version (u32 LE), manifest length (u64 LE),
//! manifest JSON bytes, then each parameter's values in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::{Grid, ParamStore};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LSEG";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    step: u64,
    /// Free-form metadata (network configuration and the like).
    meta: serde_json::Value,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: [usize; 3],
}

/// Write every parameter of `store` with `meta` attached to the manifest.
pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: serde_json::Value) -> Result<()> {
    let manifest = Manifest {
        step: store.step(),
        meta,
        params: store
            .params
            .iter()
            .map(|(name, p)| {
                let (c, h, w) = p.value.shape();
                ParamEntry {
                    name: name.clone(),
                    shape: [c, h, w],
                }
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&manifest_bytes)?;
    for entry in &manifest.params {
        let grid = store.get(&entry.name)?;
        for v in grid.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a checkpoint, returning the parameters and the stored metadata.
pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| truncated(path))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic bytes, not a checkpoint file",
            path.display()
        )));
    }
    let mut buf4 = [0u8; 4];
    input.read_exact(&mut buf4).map_err(|_| truncated(path))?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version} (expected {VERSION})",
            path.display()
        )));
    }
    let mut buf8 = [0u8; 8];
    input.read_exact(&mut buf8).map_err(|_| truncated(path))?;
    let manifest_len = u64::from_le_bytes(buf8) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    input
        .read_exact(&mut manifest_bytes)
        .map_err(|_| truncated(path))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;

    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let [c, h, w] = entry.shape;
        let n = c * h * w;
        let mut data = vec![0.0f64; n];
        for v in data.iter_mut() {
            input.read_exact(&mut buf8).map_err(|_| truncated(path))?;
            *v = f64::from_le_bytes(buf8);
        }
        store.insert(&entry.name, Grid::from_vec(c, h, w, data)?);
    }
    store.set_step(manifest.step);
    Ok((store, manifest.meta))
}

fn truncated(path: &Path) -> Error {
    Error::Checkpoint(format!("{}: truncated checkpoint file", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn roundtrip_preserves_values_and_meta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = ParamStore::new();
        store.insert("enc.w", Grid::from_vec(2, 3, 4, (0..24).map(|i| i as f64 * 0.1).collect()).unwrap());
        store.insert("enc.b", Grid::vector(vec![1.5, -0.25]));
        store.set_step(42);
        save_checkpoint(&path, &store, json!({"input_size": 64})).unwrap();

        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.step(), 42);
        assert_eq!(meta["input_size"], 64);
        assert_eq!(loaded.get("enc.w").unwrap(), store.get("enc.w").unwrap());
        assert_eq!(loaded.get("enc.b").unwrap(), store.get("enc.b").unwrap());
    }

    #[test]
    fn bad_magic_is_rejected_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOPE whatever").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("junk.ckpt"));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = ParamStore::new();
        store.insert("w", Grid::vector(vec![1.0, 2.0, 3.0]));
        save_checkpoint(&path, &store, serde_json::Value::Null).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
