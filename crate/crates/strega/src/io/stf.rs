//! STF: a minimal binary tensor container.
//!
//! Layout: magic `STRG` (4 bytes), version `0x01`, dtype (`0x00` = f32
//! little-endian, `0x01` = u8), rank (1..=8), one pad byte `0x00`, then
//! `rank` little-endian u64 dims, then the row-major payload.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"STRG";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0x00;
pub const DTYPE_U8: u8 = 0x01;

const OFFSET_MAGIC: usize = 0;
const OFFSET_VERSION: usize = 4;
const OFFSET_DTYPE: usize = 5;
const OFFSET_RANK: usize = 6;
const OFFSET_PAD: usize = 7;
const OFFSET_DIMS: usize = 8;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn encode_header(dtype: u8, dims: &[usize]) -> Result<Vec<u8>> {
    if dims.is_empty() || dims.len() > 8 {
        return Err(Error::Dimension(format!(
            "STF rank must be 1..=8, got {}",
            dims.len()
        )));
    }
    let mut bytes = Vec::with_capacity(OFFSET_DIMS + dims.len() * 8);
    bytes.extend_from_slice(&MAGIC);
    bytes.push(VERSION);
    bytes.push(dtype);
    bytes.push(dims.len() as u8);
    bytes.push(0x00);
    for &d in dims {
        bytes.extend_from_slice(&(d as u64).to_le_bytes());
    }
    Ok(bytes)
}

/// Parse the header, returning (dtype, dims, payload offset).
fn decode_header(bytes: &[u8]) -> Result<(u8, Vec<usize>, usize)> {
    if bytes.len() < OFFSET_DIMS {
        return Err(format_err(
            bytes.len(),
            format!("file truncated at {} bytes, header needs 8", bytes.len()),
        ));
    }
    if bytes[..4] != MAGIC {
        return Err(format_err(
            OFFSET_MAGIC,
            format!("bad magic {:?}, expected \"STRG\"", &bytes[..4]),
        ));
    }
    if bytes[OFFSET_VERSION] != VERSION {
        return Err(format_err(
            OFFSET_VERSION,
            format!("unsupported version 0x{:02x}", bytes[OFFSET_VERSION]),
        ));
    }
    let dtype = bytes[OFFSET_DTYPE];
    if dtype != DTYPE_F32 && dtype != DTYPE_U8 {
        return Err(format_err(
            OFFSET_DTYPE,
            format!("unknown dtype 0x{dtype:02x}"),
        ));
    }
    let rank = bytes[OFFSET_RANK] as usize;
    if rank == 0 || rank > 8 {
        return Err(format_err(OFFSET_RANK, format!("rank {rank} outside 1..=8")));
    }
    if bytes[OFFSET_PAD] != 0x00 {
        return Err(format_err(
            OFFSET_PAD,
            format!("pad byte must be 0x00, got 0x{:02x}", bytes[OFFSET_PAD]),
        ));
    }
    let payload_at = OFFSET_DIMS + rank * 8;
    if bytes.len() < payload_at {
        return Err(format_err(
            bytes.len(),
            format!("file truncated inside the dims table ({rank} dims)"),
        ));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| {
            let at = OFFSET_DIMS + i * 8;
            u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize
        })
        .collect();
    Ok((dtype, dims, payload_at))
}

fn check_payload(bytes: &[u8], dims: &[usize], payload_at: usize, width: usize) -> Result<usize> {
    let count: usize = dims.iter().product();
    let expect = count * width;
    let got = bytes.len() - payload_at;
    if got != expect {
        return Err(format_err(
            payload_at,
            format!("dims {dims:?} imply {expect} payload bytes, file has {got}"),
        ));
    }
    Ok(count)
}

/// Write a float tensor (dtype 0x00).
pub fn stf_write(tensor: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = encode_header(DTYPE_F32, tensor.dims())?;
    bytes.reserve(tensor.len() * 4);
    for &v in tensor.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path.as_ref(), bytes).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Read a float tensor (dtype 0x00).
pub fn stf_read(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let bytes = fs::read(path.as_ref()).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let (dtype, dims, payload_at) = decode_header(&bytes)?;
    if dtype != DTYPE_F32 {
        return Err(format_err(
            OFFSET_DTYPE,
            format!("expected float dtype 0x00, file has 0x{dtype:02x}"),
        ));
    }
    let count = check_payload(&bytes, &dims, payload_at, 4)?;
    let data: Vec<f32> = (0..count)
        .map(|i| {
            let at = payload_at + i * 4;
            f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
        })
        .collect();
    Tensor::from_vec(&dims, data)
}

/// Write raw bytes with dims (dtype 0x01); used for binary and label masks.
pub fn stf_write_u8(dims: &[usize], data: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let expect: usize = dims.iter().product();
    if expect != data.len() {
        return Err(Error::Dimension(format!(
            "dims {dims:?} imply {expect} bytes, got {}",
            data.len()
        )));
    }
    let mut bytes = encode_header(DTYPE_U8, dims)?;
    bytes.extend_from_slice(data);
    fs::write(path.as_ref(), bytes).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Read dims and raw bytes (dtype 0x01).
pub fn stf_read_u8(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = fs::read(path.as_ref()).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let (dtype, dims, payload_at) = decode_header(&bytes)?;
    if dtype != DTYPE_U8 {
        return Err(format_err(
            OFFSET_DTYPE,
            format!("expected byte dtype 0x01, file has 0x{dtype:02x}"),
        ));
    }
    check_payload(&bytes, &dims, payload_at, 1)?;
    Ok((dims, bytes[payload_at..].to_vec()))
}
