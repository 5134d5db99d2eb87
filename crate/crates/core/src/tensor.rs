//! Dense row-major `f32` tensors and the ATNS binary container.
//!
//! ATNS layout (all integers little-endian, no padding, no footer):
//!
//! ```text
//! offset  size        field
//! 0       4           magic "ATNS"
//! 4       1           version (= 1)
//! 5       1           rank r (1 or 2)
//! 6       2           reserved, zero
//! 8       8 * r       dimension sizes, u64
//! 8+8r    4 * prod    payload, f32
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ATNS";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic {0:?}, expected \"ATNS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported ATNS version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported rank {0}, expected 1 or 2")]
    BadRank(u8),
    #[error("reserved header bytes must be zero")]
    BadReserved,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("shape {shape:?} does not hold {len} values")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// A 1-D or 2-D row-major `f32` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.len() > 2 || shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::ShapeMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix by stacking equally long rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r.as_ref());
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count; a vector counts as a single row.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols() + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.cols().max(1))
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: vec![idx.len(), c],
            data,
        }
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.shape.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes one ATNS blob; the slice must hold exactly one tensor.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < 8 {
            return Err(TensorError::Truncated {
                expected: 8,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(TensorError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(TensorError::UnsupportedVersion(bytes[4]));
        }
        let rank = bytes[5];
        if rank != 1 && rank != 2 {
            return Err(TensorError::BadRank(rank));
        }
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(TensorError::BadReserved);
        }
        let header = 8 + 8 * rank as usize;
        if bytes.len() < header {
            return Err(TensorError::Truncated {
                expected: header,
                found: bytes.len(),
            });
        }
        let shape: Vec<usize> = bytes[8..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or(TensorError::Truncated {
                expected: usize::MAX,
                found: bytes.len(),
            })?
            / 4;
        let expected = header + 4 * count;
        if bytes.len() < expected {
            return Err(TensorError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(TensorError::TrailingBytes(bytes.len() - expected));
        }
        let data: Vec<f32> = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor { shape, data };
        if let Some(i) = t.first_non_finite() {
            return Err(TensorError::NonFinite(i));
        }
        Ok(t)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TensorError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|source| TensorError::Io {
            path: "<reader>".into(),
            source,
        })?;
        Self::from_bytes(&buf)
    }
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Tensor::from_bytes(&bytes)
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<(), TensorError> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_bytes_decode() {
        let t = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[0..8], b"ATNS\x01\x02\x00\x00");
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 24);
        let back = Tensor::from_bytes(&bytes).unwrap();
        assert_eq!(back.shape(), &[2, 3]);
        assert_eq!(back.data(), &[1., 2., 3., 4., 5., 6.]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = Tensor::vector(vec![1.0]).to_bytes();
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(TensorError::BadMagic(m)) if &m == b"XXXX"
        ));
    }

    #[test]
    fn rejects_truncation_and_trailing() {
        let bytes = Tensor::vector(vec![1.0, 2.0]).to_bytes();
        assert!(matches!(
            Tensor::from_bytes(&bytes[..bytes.len() - 1]),
            Err(TensorError::Truncated { .. })
        ));
        assert!(matches!(
            Tensor::from_bytes(&bytes[..10]),
            Err(TensorError::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            Tensor::from_bytes(&long),
            Err(TensorError::TrailingBytes(1))
        ));
    }

    #[test]
    fn rejects_non_finite_and_bad_header() {
        let bytes = Tensor::vector(vec![1.0, f32::NAN]).to_bytes();
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(TensorError::NonFinite(1))
        ));
        let bytes = Tensor::vector(vec![f32::INFINITY]).to_bytes();
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(TensorError::NonFinite(0))
        ));
        let mut bytes = Tensor::vector(vec![1.0]).to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(TensorError::UnsupportedVersion(2))
        ));
        bytes[4] = 1;
        bytes[5] = 3;
        assert!(matches!(Tensor::from_bytes(&bytes), Err(TensorError::BadRank(3))));
        bytes[5] = 1;
        bytes[7] = 1;
        assert!(matches!(Tensor::from_bytes(&bytes), Err(TensorError::BadReserved)));
    }

    #[test]
    fn shape_must_match_len() {
        assert!(Tensor::matrix(2, 2, vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.atns");
        let t = Tensor::matrix(2, 2, vec![0.5, -1.25, 3.0, 1e-30]).unwrap();
        save_tensor(&p, &t).unwrap();
        assert_eq!(load_tensor(&p).unwrap(), t);
        assert!(matches!(
            load_tensor(dir.path().join("missing.atns")),
            Err(TensorError::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(
            bits in proptest::collection::vec(any::<u32>(), 1..64),
        ) {
            let data: Vec<f32> = bits
                .into_iter()
                .map(f32::from_bits)
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect();
            let t = Tensor::vector(data);
            let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
            let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
