//! Binary container for one dense tensor.
//!
//! Layout, all integers little-endian:
//!
//! | offset      | size | field                                |
//! |-------------|------|--------------------------------------|
//! | 0           | 4    | magic `"TCRA"`                       |
//! | 4           | 2    | format version, currently 1          |
//! | 6           | 1    | scalar type: 0 = f32, 1 = f64        |
//! | 7           | 1    | rank n                               |
//! | 8           | 4·n  | dimensions, u32 each                 |
//! | 8 + 4·n     | rest | row-major scalars, little-endian     |
//!
//! The payload length must match the dimensions exactly; trailing bytes are
//! as much an error as missing ones. Every parse failure reports the byte
//! offset at which the reader stopped.

use std::fs;
use std::path::Path;

use tcra_core::Tensor;

use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TCRA";
pub const VERSION: u16 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;
const HEADER_LEN: usize = 8;

/// A tensor as stored on disk, keeping whichever scalar width the file used.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl TensorData {
    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(t) => t.shape(),
            TensorData::F64(t) => t.shape(),
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::F64(_) => "f64",
        }
    }

    /// Widens to f64 regardless of the stored type.
    pub fn into_f64(self) -> Tensor<f64> {
        match self {
            TensorData::F32(t) => t.to_f64(),
            TensorData::F64(t) => t,
        }
    }
}

/// Serializes a tensor with 4-byte scalars.
pub fn encode_f32(tensor: &Tensor<f32>) -> Vec<u8> {
    let mut out = header(DTYPE_F32, tensor.shape());
    for &x in tensor.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Serializes a tensor with 8-byte scalars.
pub fn encode_f64(tensor: &Tensor<f64>) -> Vec<u8> {
    let mut out = header(DTYPE_F64, tensor.shape());
    for &x in tensor.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn header(dtype: u8, shape: &[usize]) -> Vec<u8> {
    assert!(shape.len() <= u8::MAX as usize, "tensor rank exceeds format");
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * shape.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype);
    out.push(shape.len() as u8);
    for &d in shape {
        assert!(d <= u32::MAX as usize, "tensor dimension exceeds format");
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out
}

/// Parses a tensor from bytes; `path` only labels error messages.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<TensorData> {
    let fail = |offset: usize, message: String| -> Error {
        Error::format(path, offset as u64, message)
    };

    if bytes.len() < HEADER_LEN {
        return Err(fail(
            bytes.len(),
            format!("truncated header: {} bytes, need {HEADER_LEN}", bytes.len()),
        ));
    }
    if bytes[..4] != MAGIC {
        return Err(fail(0, format!("bad magic {:?}, expected \"TCRA\"", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(fail(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let dtype = bytes[6];
    if dtype != DTYPE_F32 && dtype != DTYPE_F64 {
        return Err(fail(6, format!("unknown dtype {dtype}, expected 0 (f32) or 1 (f64)")));
    }
    let ndim = bytes[7] as usize;

    let dims_end = HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(fail(
            bytes.len(),
            format!("truncated dimension list: rank {ndim} needs {dims_end} header bytes"),
        ));
    }
    let mut shape = Vec::with_capacity(ndim);
    let mut numel = 1usize;
    for i in 0..ndim {
        let at = HEADER_LEN + 4 * i;
        let d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        numel = numel.checked_mul(d).ok_or_else(|| {
            fail(at, format!("dimension product overflows at dim {i} = {d}"))
        })?;
        shape.push(d);
    }

    let scalar = if dtype == DTYPE_F32 { 4 } else { 8 };
    let expected = dims_end + numel * scalar;
    let payload = &bytes[dims_end..];
    if bytes.len() < expected {
        return Err(fail(
            bytes.len(),
            format!(
                "truncated payload: {} scalars need {} bytes, found {}",
                numel,
                numel * scalar,
                payload.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(fail(
            expected,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }

    let tensor = if dtype == DTYPE_F32 {
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        TensorData::F32(Tensor::new(shape, data).map_err(Error::Core)?)
    } else {
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        TensorData::F64(Tensor::new(shape, data).map_err(Error::Core)?)
    };
    Ok(tensor)
}

pub fn read(path: &Path) -> Result<TensorData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

pub fn write_f32(path: &Path, tensor: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode_f32(tensor)).map_err(|e| Error::io(path, e))
}

pub fn write_f64(path: &Path, tensor: &Tensor<f64>) -> Result<()> {
    fs::write(path, encode_f64(tensor)).map_err(|e| Error::io(path, e))
}
