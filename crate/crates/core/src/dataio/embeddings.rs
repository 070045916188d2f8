//! Binary embedding files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `LSEB`                            |
//! | 4      | 4    | format version, u32 = 1                 |
//! | 8      | 8    | n, u64                                  |
//! | 16     | 4    | d, u32                                  |
//! | 20     | 4    | V (views), u32                          |
//! | 24     | 1    | dtype, u8 = 0 (IEEE-754 binary32 LE)    |
//! | 25     | 7    | reserved, zero                          |
//! | 32     | ...  | V blocks of n x d row-major binary32 LE |
//!
//! Values are widened to `f64` on read and narrowed back on write, so a
//! read/write cycle reproduces the binary32 payload exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::EmbeddingTensor;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"LSEB";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
const DTYPE_F32: u8 = 0;

pub fn encode_embeddings(t: &EmbeddingTensor) -> Vec<u8> {
    let (n, d, v) = (t.n(), t.dim(), t.num_views());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d * v);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(v as u32).to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&[0u8; 7]);
    for view in t.views() {
        for &x in view.as_slice() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_embeddings(bytes: &[u8], path: Option<&Path>) -> Result<EmbeddingTensor> {
    let err = |offset: usize, msg: String| Error::format_at_offset(path.map(Path::to_path_buf), offset as u64, msg);
    if bytes.len() < HEADER_LEN {
        return Err(err(
            bytes.len(),
            format!("truncated header: expected {HEADER_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(err(0, format!("bad magic {:?}, expected \"LSEB\"", &bytes[0..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(err(4, format!("unsupported format version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u32_at(16) as u64;
    let v = u32_at(20) as u64;
    if bytes[24] != DTYPE_F32 {
        return Err(err(24, format!("unsupported dtype code {}", bytes[24])));
    }
    if let Some(p) = bytes[25..32].iter().position(|&b| b != 0) {
        return Err(err(25 + p, "reserved header bytes must be zero".into()));
    }
    if d == 0 {
        return Err(err(16, "dimension must be at least 1".into()));
    }
    if v == 0 {
        return Err(err(20, "view count must be at least 1".into()));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(v))
        .and_then(|x| x.checked_mul(4))
        .and_then(|x| x.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| err(8, "header sizes overflow".into()))?;
    if bytes.len() as u64 != expected {
        return Err(err(
            bytes.len(),
            format!(
                "payload length mismatch: expected {expected} bytes for n={n}, d={d}, V={v}, found {}",
                bytes.len()
            ),
        ));
    }
    let (n, d, v) = (n as usize, d as usize, v as usize);
    let mut views = Vec::with_capacity(v);
    let mut offset = HEADER_LEN;
    for _ in 0..v {
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            let x = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            if !x.is_finite() {
                return Err(err(offset, format!("non-finite value {x}")));
            }
            data.push(f64::from(x));
            offset += 4;
        }
        views.push(Matrix::from_vec(n, d, data)?);
    }
    EmbeddingTensor::new(views)
}

pub fn write_embeddings(path: impl AsRef<Path>, t: &EmbeddingTensor) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&encode_embeddings(t))?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_embeddings(&bytes, Some(path))
}

/// Writes a plain matrix (e.g. class text embeddings) as a single-view file.
pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write_embeddings(path, &EmbeddingTensor::single(m.clone())?)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let t = read_embeddings(path.as_ref())?;
    if t.num_views() != 1 {
        return Err(Error::format_at_offset(
            Some(path.as_ref().to_path_buf()),
            20,
            format!("expected a single-view matrix file, found {} views", t.num_views()),
        ));
    }
    Ok(t.canonical().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_hand_assembled_fixture() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"LSEB");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&[0; 7]);
        assert_eq!(bytes.len(), 32);
        bytes.extend_from_slice(&0.5f32.to_le_bytes());
        let t = decode_embeddings(&bytes, None).unwrap();
        assert_eq!((t.n(), t.dim(), t.num_views()), (1, 1, 1));
        assert_eq!(t.canonical().get(0, 0), 0.5);
        assert_eq!(encode_embeddings(&t), bytes);
    }

    #[test]
    fn truncated_file_names_lengths() {
        let t = EmbeddingTensor::single(Matrix::filled(2, 3, 1.0)).unwrap();
        let mut bytes = encode_embeddings(&t);
        bytes.truncate(bytes.len() - 3);
        let e = decode_embeddings(&bytes, None).unwrap_err().to_string();
        assert!(e.contains("expected 56 bytes"), "{e}");
        assert!(e.contains("found 53"), "{e}");
    }

    #[test]
    fn rejects_bad_header_fields() {
        let t = EmbeddingTensor::single(Matrix::filled(1, 1, 1.0)).unwrap();
        let good = encode_embeddings(&t);

        let mut b = good.clone();
        b[0] = b'X';
        assert!(decode_embeddings(&b, None).unwrap_err().to_string().contains("magic"));

        let mut b = good.clone();
        b[4] = 2;
        assert!(decode_embeddings(&b, None).unwrap_err().to_string().contains("version"));

        let mut b = good.clone();
        b[30] = 1;
        assert!(decode_embeddings(&b, None).unwrap_err().to_string().contains("reserved"));

        let mut b = good.clone();
        b[32..36].copy_from_slice(&f32::NAN.to_le_bytes());
        let e = decode_embeddings(&b, None).unwrap_err().to_string();
        assert!(e.contains("byte 32") && e.contains("non-finite"), "{e}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            n in 1usize..6, d in 1usize..5, v in 1usize..4,
            seed in prop::collection::vec(-1e6f32..1e6, 120),
        ) {
            let views: Vec<Matrix> = (0..v).map(|k| {
                let data = (0..n * d).map(|i| f64::from(seed[(k * n * d + i) % seed.len()])).collect();
                Matrix::from_vec(n, d, data).unwrap()
            }).collect();
            let t = EmbeddingTensor::new(views).unwrap();
            let bytes = encode_embeddings(&t);
            let back = decode_embeddings(&bytes, None).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(encode_embeddings(&back), bytes);
        }
    }
}
