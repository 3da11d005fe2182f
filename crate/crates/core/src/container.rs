//! Single-file tensor container: magic, format version, a JSON manifest and
//! little-endian f64 blobs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::atomic_write;

const MAGIC: &[u8; 8] = b"GFIQA\0CK";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 elements from the start of the blob section.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    blobs: Vec<BlobEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub meta: serde_json::Value,
    pub tensors: Vec<(BlobEntry, Vec<f64>)>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&(BlobEntry, Vec<f64>)> {
        self.tensors.iter().find(|(e, _)| e.name == name)
    }
}

pub fn encode<'a>(meta: &serde_json::Value, tensors: impl IntoIterator<Item = (&'a str, &'a [usize], &'a [f64])>) -> Result<Vec<u8>> {
    let mut blobs = Vec::new();
    let mut body: Vec<u8> = Vec::new();
    let mut offset = 0;
    for (name, shape, data) in tensors {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(shape, data.len()));
        }
        blobs.push(BlobEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len: data.len(),
        });
        offset += data.len();
        body.reserve(data.len() * 8);
        for v in data {
            body.extend(v.to_le_bytes());
        }
    }
    let manifest = serde_json::to_vec(&Manifest { meta: meta.clone(), blobs }).map_err(|e| Error::Input(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + manifest.len() + body.len());
    out.extend(MAGIC);
    out.extend(CONTAINER_VERSION.to_le_bytes());
    out.extend((manifest.len() as u64).to_le_bytes());
    out.extend(&manifest);
    out.extend(body);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    let bad = |m: String| Error::Input(format!("container: {m}"));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CONTAINER_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let mend = 20usize.checked_add(mlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[20..mend]).map_err(|e| bad(e.to_string()))?;
    let body = &bytes[mend..];
    let mut tensors = Vec::with_capacity(manifest.blobs.len());
    for e in manifest.blobs {
        if e.shape.iter().product::<usize>() != e.len {
            return Err(bad(format!("blob {} shape does not match its length", e.name)));
        }
        let start = e.offset * 8;
        let end = start + e.len * 8;
        let raw = body.get(start..end).ok_or_else(|| bad(format!("blob {} is truncated", e.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((e, data));
    }
    Ok(Container {
        meta: manifest.meta,
        tensors,
    })
}

pub fn write<'a>(path: &Path, meta: &serde_json::Value, tensors: impl IntoIterator<Item = (&'a str, &'a [usize], &'a [f64])>) -> Result<()> {
    atomic_write(path, &encode(meta, tensors)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = vec![1.0, -2.5, 3.25, 0.0, 1e-300, f64::MAX];
        let b = vec![7.0];
        let meta = serde_json::json!({"kind": "test", "n": 3});
        let bytes = encode(&meta, [("a", &[2usize, 3][..], &a[..]), ("b", &[1usize][..], &b[..])]).unwrap();
        let c = decode(&bytes).unwrap();
        assert_eq!(c.meta, meta);
        assert_eq!(c.get("a").unwrap().1, a);
        assert_eq!(c.get("b").unwrap().0.shape, vec![1]);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&serde_json::json!({}), [("a", &[2usize][..], &[1.0, 2.0][..])]).unwrap();
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut v2 = bytes;
        v2[8] = 9;
        assert!(decode(&v2).is_err());
    }
}
