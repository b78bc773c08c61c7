//! Little-endian binary storage for tensors.
//!
//! Layout: 8-byte magic `INOARR1\0`, `u32` rank, one `u64` per dimension,
//! then the row-major `f64` data.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::Tensor;

const MAGIC: &[u8; 8] = b"INOARR1\0";

#[derive(Debug, Error)]
pub enum ArrayError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: not a tensor file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * t.ndim() + 8 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor, ArrayError> {
    let truncated = |expected: usize| ArrayError::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 12 {
        return Err(truncated(12));
    }
    if &bytes[..8] != MAGIC {
        return Err(ArrayError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let ndim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header = 12 + 8 * ndim;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let at = 12 + 8 * i;
        shape.push(u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| ArrayError::Invalid {
            path: path.to_path_buf(),
            detail: format!("shape {shape:?} overflows"),
        })?;
    let expected = header + 8 * count;
    if bytes.len() != expected {
        return Err(truncated(expected));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data).map_err(|e| ArrayError::Invalid {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<(), ArrayError> {
    let io_err = |source| ArrayError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&encode_tensor(t)).map_err(io_err)
}

pub fn read_tensor(path: &Path) -> Result<Tensor, ArrayError> {
    let io_err = |source| ArrayError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    fs::File::open(path).map_err(io_err)?.read_to_end(&mut bytes).map_err(io_err)?;
    decode_tensor(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let t = Tensor::new(vec![2, 3], vec![0.1, -2.5e-300, 1.0 / 3.0, 7.0, -0.0, 1e300]).unwrap();
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_and_scalar() {
        let path = Path::new("x");
        for t in [Tensor::zeros(&[0, 4]), Tensor::scalar(2.0)] {
            assert_eq!(decode_tensor(&encode_tensor(&t), path).unwrap(), t);
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let path = Path::new("x");
        let bytes = encode_tensor(&Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(
            decode_tensor(&bytes[..bytes.len() - 1], path),
            Err(ArrayError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor(&bad, path), Err(ArrayError::BadMagic { .. })));
        let mut nan = bytes;
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_tensor(&nan, path), Err(ArrayError::Invalid { .. })));
    }
}
