//! Little-endian helpers for the binary artifact formats.
//!
//! Every file starts with an 8-byte magic tag followed by fixed-width
//! little-endian fields.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn write_magic<W: Write>(w: &mut W, magic: &[u8; 8]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub(crate) fn read_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Reads a length field and rejects values that cannot be a sane in-memory size.
pub(crate) fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let v = read_u64(r)?;
    Some(v)
        .filter(|&n| n < (1u64 << 40))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::Format(format!("implausible length {v}")))
}
