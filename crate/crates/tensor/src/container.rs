//! Framed binary files: a UTF-8 JSON header, a newline, a zero byte, then a
//! payload of little-endian 32-bit floats.
//!
//! Both parameter checkpoints and gridded datasets use this framing.

use std::io::Write;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, TensorError};

pub const HEADER_TERMINATOR: [u8; 2] = [b'\n', 0];

pub fn write_header<W: Write, H: Serialize>(w: &mut W, header: &H) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    if json.contains(&0) || json.contains(&b'\n') {
        return Err(TensorError::Checkpoint("header must be single-line JSON".into()));
    }
    w.write_all(&json)?;
    w.write_all(&HEADER_TERMINATOR)?;
    Ok(())
}

/// Splits a framed file into its parsed header and the raw payload.
pub fn split<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, &[u8])> {
    let end = bytes
        .windows(2)
        .position(|w| w == HEADER_TERMINATOR)
        .ok_or_else(|| TensorError::Checkpoint("missing header terminator".into()))?;
    let header = serde_json::from_slice(&bytes[..end])?;
    Ok((header, &bytes[end + 2..]))
}

pub fn write_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let mut buf = Vec::new();
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_f32s(payload: &[u8], offset_bytes: usize, count: usize) -> Result<Vec<f32>> {
    let end = offset_bytes + count * 4;
    if end > payload.len() {
        return Err(TensorError::Checkpoint(format!("payload has {} bytes, need {end}", payload.len())));
    }
    Ok(payload[offset_bytes..end].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
