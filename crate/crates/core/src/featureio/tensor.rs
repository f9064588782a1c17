//! `.ftf` tensor files: a fixed little-endian header followed by a row-major payload.
//!
//! Layout: magic `FTF1`, version byte `0x01`, dtype byte, two reserved zero bytes,
//! `u32` ndim, `ndim × u64` dims, then the payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FTF1";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0x01,
    /// Used for model parameters so checkpoints round-trip bit-exactly.
    F64 = 0x02,
}

impl DType {
    pub fn from_code(code: u8) -> Option<DType> {
        match code {
            0x01 => Some(DType::F32),
            0x02 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    shape: Vec<u64>,
    data: TensorData,
}

fn check_shape(shape: &[u64], len: usize) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::ShapeMismatch("shape must have at least one dimension".into()));
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!("zero-sized dimension in {shape:?}")));
    }
    let count = shape
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ShapeMismatch(format!("element count overflows for {shape:?}")))?;
    if count != len as u64 {
        return Err(Error::ShapeMismatch(format!(
            "shape {shape:?} implies {count} elements, payload has {len}"
        )));
    }
    Ok(())
}

impl TensorFile {
    pub fn new(shape: Vec<u64>, data: TensorData) -> Result<Self> {
        check_shape(&shape, data.len())?;
        Ok(TensorFile { shape, data })
    }

    pub fn from_f32(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        Self::new(shape.iter().map(|&d| d as u64).collect(), TensorData::F32(data))
    }

    pub fn from_f64(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::new(shape.iter().map(|&d| d as u64).collect(), TensorData::F64(data))
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[u64] {
        &self.shape
    }

    pub fn dims(&self) -> Vec<usize> {
        self.shape.iter().map(|&d| d as usize).collect()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    /// Payload widened to `f64` (lossless for both dtypes).
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let dtype = self.dtype();
        let mut out = Vec::with_capacity(12 + 8 * self.shape.len() + dtype.size() * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(dtype as u8);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for d in &self.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic(path.to_path_buf()));
        }
        let truncated = |expected: usize| Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        };
        if bytes.len() < 12 {
            return Err(truncated(12));
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("version {:#04x}", bytes[4]),
            });
        }
        let dtype = DType::from_code(bytes[5]).ok_or_else(|| Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("dtype code {:#04x}", bytes[5]),
        })?;
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: "reserved bytes are not zero".into(),
            });
        }
        let ndim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_len = 12 + 8 * ndim;
        if bytes.len() < header_len {
            return Err(truncated(header_len));
        }
        let shape: Vec<u64> = bytes[12..header_len]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("invalid shape {shape:?} in {}", path.display())));
        }
        let count = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|c| usize::try_from(c).ok())
            .and_then(|c| c.checked_mul(dtype.size()).map(|b| (c, b)));
        let Some((count, payload_len)) = count else {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} is too large")));
        };
        let payload = &bytes[header_len..];
        if payload.len() < payload_len {
            return Err(truncated(header_len + payload_len));
        }
        if payload.len() > payload_len {
            return Err(Error::ShapeMismatch(format!(
                "{} trailing bytes after {count} elements in {}",
                payload.len() - payload_len,
                path.display()
            )));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        TensorFile::new(shape, data)
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorFile::decode(&bytes, path)
}
