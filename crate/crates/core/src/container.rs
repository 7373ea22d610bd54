//! `MAGIC | u32 header length | JSON header | payload` framing shared by the
//! raster, weights and checkpoint files.

use crate::error::{Error, Result};

pub(crate) fn join(magic: &[u8; 4], header: &[u8], payload_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + header.len() + payload_len);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out
}

/// Split into (header, payload). The last magic byte is the format version.
pub(crate) fn split<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    what: &str,
) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "{what}: file too short ({} bytes)",
            bytes.len()
        )));
    }
    if bytes[..3] != magic[..3] {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    if bytes[3] != magic[3] {
        return Err(Error::Format(format!(
            "{what}: unsupported version {:?}",
            bytes[3] as char
        )));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Format(format!(
            "{what}: header declares {n} bytes but only {} remain",
            bytes.len() - 8
        )));
    }
    Ok((&bytes[8..8 + n], &bytes[8 + n..]))
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn get_f32s(payload: &[u8]) -> Vec<f64> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect()
}

pub(crate) fn get_f64s(payload: &[u8]) -> Vec<f64> {
    payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}
