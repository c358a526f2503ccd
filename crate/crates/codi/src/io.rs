//! Checksums and the self-describing binary container used for checkpoints
//! and cached datasets.
//!
//! Container layout: 8-byte magic, u32 format version, u64 JSON header
//! length, the JSON header, then raw little-endian f64 blobs whose lengths
//! are declared in the header. Readers validate magic, version and lengths
//! and report the offending path on any mismatch.

use crate::error::{CoreError, Result};
use serde::{de::DeserializeOwned, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const CONTAINER_VERSION: u32 = 1;

/// Hex digest of the exact bit patterns of a float slice.
pub fn checksum_f64(values: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    hex(&hasher.finalize())
}

/// Hex digest of raw bytes.
pub fn checksum_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write a container with a serializable header and named f64 blobs.
pub fn write_container<H: Serialize>(
    path: &Path,
    magic: &[u8; 8],
    header: &H,
    blobs: &[&[f64]],
) -> Result<()> {
    let json = serde_json::to_vec(header)
        .map_err(|e| CoreError::Invalid(format!("header serialization: {e}")))?;
    let mut buf = Vec::with_capacity(json.len() + blobs.iter().map(|b| b.len() * 8).sum::<usize>());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for blob in blobs {
        for v in *blob {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CoreError::io(parent.display().to_string(), e))?;
    }
    let mut file =
        fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

/// Read a container written by [`write_container`]. `blob_lens` declares the
/// expected blob lengths (usually taken from the header after a first parse);
/// here the header is parsed first and the caller supplies a closure mapping
/// it to the blob lengths.
pub fn read_container<H: DeserializeOwned>(
    path: &Path,
    magic: &[u8; 8],
    blob_lens: impl FnOnce(&H) -> Vec<usize>,
) -> Result<(H, Vec<Vec<f64>>)> {
    let pathstr = path.display().to_string();
    let mut file = fs::File::open(path).map_err(|e| CoreError::io(pathstr.clone(), e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)
        .map_err(|e| CoreError::io(pathstr.clone(), e))?;
    let corrupt = |detail: &str| CoreError::Corrupt {
        path: pathstr.clone(),
        detail: detail.into(),
    };
    if buf.len() < 20 {
        return Err(corrupt("truncated header"));
    }
    if &buf[0..8] != magic {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(corrupt(&format!("unsupported format version {version}")));
    }
    let json_len = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
    if buf.len() < 20 + json_len {
        return Err(corrupt("truncated json header"));
    }
    let header: H = serde_json::from_slice(&buf[20..20 + json_len])
        .map_err(|e| corrupt(&format!("header parse: {e}")))?;
    let lens = blob_lens(&header);
    let mut offset = 20 + json_len;
    let mut blobs = Vec::with_capacity(lens.len());
    for len in lens {
        let bytes = len * 8;
        if buf.len() < offset + bytes {
            return Err(corrupt("truncated data blob"));
        }
        let mut blob = Vec::with_capacity(len);
        for chunk in buf[offset..offset + bytes].chunks_exact(8) {
            blob.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        blobs.push(blob);
        offset += bytes;
    }
    if offset != buf.len() {
        return Err(corrupt("trailing bytes after declared blobs"));
    }
    Ok((header, blobs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Header {
        name: String,
        len: usize,
    }

    #[test]
    fn roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let header = Header {
            name: "t".into(),
            len: 3,
        };
        let blob = [1.0, -2.5, std::f64::consts::PI];
        write_container(&path, b"CODITEST", &header, &[&blob]).unwrap();
        let (h, blobs): (Header, _) =
            read_container(&path, b"CODITEST", |h: &Header| vec![h.len]).unwrap();
        assert_eq!(h, header);
        assert_eq!(blobs[0], blob.to_vec());

        // Flip a magic byte.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let err = read_container::<Header>(&path, b"CODITEST", |h| vec![h.len]).unwrap_err();
        assert!(err.to_string().contains("corrupt"));
    }

    #[test]
    fn checksum_is_bit_exact() {
        assert_eq!(checksum_f64(&[0.0]), checksum_f64(&[0.0]));
        assert_ne!(checksum_f64(&[0.0]), checksum_f64(&[-0.0]));
    }
}
