//! Flat binary parameter container.
//!
//! ```text
//! magic     8 bytes   "OCTICKPT"
//! version   u32 LE    1
//! length    u64 LE    byte length of the manifest
//! manifest  UTF-8 JSON {"config": ..., "arrays": [{"name", "rows", "cols", "offset"}]}
//! payload   f64 LE    every array row-major, `offset` counted in f64 elements
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::error::{OcticError, Result};
use crate::tensor::Mat;

pub const MAGIC: &[u8; 8] = b"OCTICKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

/// A decoded checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub arrays: Vec<(String, Mat)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    config: &serde_json::Value,
    arrays: &[(String, &Mat)],
) -> Result<()> {
    let mut entries = Vec::with_capacity(arrays.len());
    let mut offset = 0;
    for (name, m) in arrays {
        entries.push(ArrayEntry {
            name: name.clone(),
            rows: m.rows(),
            cols: m.cols(),
            offset,
        });
        offset += m.data().len();
    }
    let manifest = serde_json::to_vec(&Manifest {
        config: config.clone(),
        arrays: entries,
    })
    .map_err(|e| OcticError::Format(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(&manifest)?;
    let mut buf = Vec::with_capacity(offset * 8);
    for (_, m) in arrays {
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(OcticError::Format("not a checkpoint (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(OcticError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| OcticError::Format("manifest too large".into()))?;
    let mut manifest = vec![0u8; len];
    r.read_exact(&mut manifest)?;
    let manifest: Manifest =
        serde_json::from_slice(&manifest).map_err(|e| OcticError::Format(e.to_string()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 8 != 0 {
        return Err(OcticError::Format("payload is not a whole number of f64".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut arrays = Vec::with_capacity(manifest.arrays.len());
    for e in manifest.arrays {
        let n = e.rows * e.cols;
        let data = values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| OcticError::Format(format!("array {} runs past the payload", e.name)))?;
        arrays.push((e.name, Mat::from_vec(e.rows, e.cols, data.to_vec())));
    }
    Ok(Checkpoint {
        config: manifest.config,
        arrays,
    })
}

/// Write every parameter of `model` under its path name.
pub fn save_params<W: Write, P: Parameterized>(w: W, model: &mut P, config: &serde_json::Value) -> Result<()> {
    let params = model.params_mut("");
    let arrays: Vec<(String, &Mat)> = params.iter().map(|p| (p.name.clone(), &*p.value)).collect();
    write_checkpoint(w, config, &arrays)
}

/// Load parameters into an already-built `model`; names and shapes must
/// match exactly. Returns the stored config.
pub fn load_params<R: Read, P: Parameterized>(r: R, model: &mut P) -> Result<serde_json::Value> {
    let ckpt = read_checkpoint(r)?;
    let params = model.params_mut("");
    if params.len() != ckpt.arrays.len() {
        return Err(OcticError::Format(format!(
            "checkpoint holds {} arrays, model has {}",
            ckpt.arrays.len(),
            params.len()
        )));
    }
    for (p, (name, m)) in params.into_iter().zip(&ckpt.arrays) {
        if &p.name != name || p.value.shape() != m.shape() {
            return Err(OcticError::Format(format!(
                "checkpoint array {name} {:?} does not match parameter {} {:?}",
                m.shape(),
                p.name,
                p.value.shape()
            )));
        }
        *p.value = m.clone();
    }
    Ok(ckpt.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Mat::from_vec(2, 2, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]);
        let b = Mat::from_vec(1, 3, vec![std::f64::consts::PI, -2.5, 7.0]);
        let cfg = serde_json::json!({"width": 16});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &[("a".into(), &a), ("b.c".into(), &b)]).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.config, cfg);
        for ((_, m), orig) in back.arrays.iter().zip([&a, &b]) {
            let bits: Vec<u64> = m.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = orig.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, want);
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, OcticError::Format(_)));
    }
}
