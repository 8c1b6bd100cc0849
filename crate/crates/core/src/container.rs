//! Binary container for compressed images.
//!
//! Layout (all integers little-endian):
//!
//! | bytes            | content                                         |
//! |------------------|-------------------------------------------------|
//! | 16               | magic `\x89C2GGRID\r\n\x1a\n\0\0\0\0`            |
//! | 1                | format version (`1`)                            |
//! | 4 + 4 + 4        | `kx`, `ky`, `P` as `u32`                         |
//! | 8                | grid spacing `d` in µm as `f64`                  |
//! | 4·kx·ky·P        | `f32` payload, row-major `[x][y][c]`             |
//! | ceil(kx·ky / 8)  | occupancy bitmap, node order, LSB first          |
//! | 1                | label (`0`, `1`, or `0xff` for none)             |
//! | 8 + 8            | kept / deleted object counts as `u64`            |
//! | 4 + n            | source id length and UTF-8 bytes                |
//!
//! [`write_tiff`] additionally exports an uncompressed multi-channel float
//! TIFF for image viewers. The container remains the format of record.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{C2GImage, C2GMeta, GridSpec, ModelError};

pub const C2G_MAGIC: [u8; 16] = *b"\x89C2GGRID\r\n\x1a\n\0\0\0\0";
pub const C2G_VERSION: u8 = 1;
const HEADER_LEN: usize = 16 + 1 + 12 + 8;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a C2G file (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("file truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_c2g(img: &C2GImage, path: &Path) -> Result<(), ContainerError> {
    fs::write(path, encode_c2g(img)?)?;
    Ok(())
}

pub fn read_c2g(path: &Path) -> Result<C2GImage, ContainerError> {
    decode_c2g(&fs::read(path)?)
}

pub fn encode_c2g(img: &C2GImage) -> Result<Vec<u8>, ContainerError> {
    img.check_invariants()?;
    let spec = img.spec();
    let dims = [spec.kx, spec.ky, spec.channels];
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * spec.len() + spec.nodes() / 8 + 64);
    out.extend_from_slice(&C2G_MAGIC);
    out.push(C2G_VERSION);
    for d in dims {
        let d = u32::try_from(d)
            .map_err(|_| ContainerError::DimensionMismatch(format!("{d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&spec.d_um.to_le_bytes());
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&pack_bits(img.occupancy()));

    let meta = img.meta();
    out.push(meta.label.unwrap_or(0xff));
    out.extend_from_slice(&(meta.kept as u64).to_le_bytes());
    out.extend_from_slice(&(meta.deleted as u64).to_le_bytes());
    let id = meta.source_id.as_bytes();
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    Ok(out)
}

pub fn decode_c2g(bytes: &[u8]) -> Result<C2GImage, ContainerError> {
    let mut r = Cursor::new(bytes);
    if bytes.len() < 16 || bytes[..16] != C2G_MAGIC {
        return Err(ContainerError::BadMagic);
    }
    r.skip(16)?;
    let version = r.u8()?;
    if version != C2G_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let kx = r.u32()? as usize;
    let ky = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let d_um = f64::from_le_bytes(r.take::<8>()?);

    let values = kx
        .checked_mul(ky)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ContainerError::DimensionMismatch(format!("{kx}x{ky}x{channels}")))?;
    let payload_bytes = values
        .checked_mul(4)
        .ok_or_else(|| ContainerError::DimensionMismatch(format!("{kx}x{ky}x{channels}")))?;
    let payload = r.slice(payload_bytes)?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let nodes = kx * ky;
    let occupancy = unpack_bits(r.slice(nodes.div_ceil(8))?, nodes);

    let label = match r.u8()? {
        0xff => None,
        l => Some(l),
    };
    let kept = u64::from_le_bytes(r.take::<8>()?) as usize;
    let deleted = u64::from_le_bytes(r.take::<8>()?) as usize;
    let id_len = r.u32()? as usize;
    let source_id = String::from_utf8(r.slice(id_len)?.to_vec())
        .map_err(|_| ContainerError::DimensionMismatch("source id is not UTF-8".into()))?;
    if r.remaining() != 0 {
        return Err(ContainerError::DimensionMismatch(format!(
            "{} trailing bytes after declared content",
            r.remaining()
        )));
    }

    let spec = GridSpec {
        d_um,
        kx,
        ky,
        channels,
    };
    Ok(C2GImage::new(
        spec,
        data,
        occupancy,
        C2GMeta {
            source_id,
            kept,
            deleted,
            label,
        },
    )?)
}

pub(crate) fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub(crate) fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

/// Bounds-checked little-endian reader.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn slice(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(ContainerError::TruncatedFile {
                needed: self.pos.saturating_add(n),
                found: self.buf.len(),
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn skip(&mut self, n: usize) -> Result<(), ContainerError> {
        self.slice(n).map(|_| ())
    }

    pub(crate) fn take<const N: usize>(&mut self) -> Result<[u8; N], ContainerError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.slice(N)?);
        Ok(a)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Writes an uncompressed little-endian TIFF with `P` float32 samples per
/// pixel; image columns run along the grid x axis.
pub fn write_tiff(img: &C2GImage, path: &Path) -> Result<(), ContainerError> {
    fs::write(path, encode_tiff(img))?;
    Ok(())
}

pub fn encode_tiff(img: &C2GImage) -> Vec<u8> {
    const SHORT: u16 = 3;
    const LONG: u16 = 4;
    let spec = img.spec();
    let (w, h, p) = (spec.kx as u32, spec.ky as u32, spec.channels);

    let mut out = Vec::new();
    out.extend_from_slice(b"II*\0");
    out.extend_from_slice(&0u32.to_le_bytes()); // IFD offset, patched below
    let strip_offset = out.len() as u32;
    for y in 0..spec.ky {
        for x in 0..spec.kx {
            for v in img.pixel(x, y) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let strip_len = out.len() as u32 - strip_offset;

    // (tag, type, values) ; arrays longer than 4 bytes go out of line.
    let mut entries: Vec<(u16, u16, Vec<u32>)> = vec![
        (256, LONG, vec![w]),
        (257, LONG, vec![h]),
        (258, SHORT, vec![32; p]),
        (259, SHORT, vec![1]),
        (262, SHORT, vec![1]),
        (273, LONG, vec![strip_offset]),
        (277, SHORT, vec![p as u32]),
        (278, LONG, vec![h]),
        (279, LONG, vec![strip_len]),
        (284, SHORT, vec![1]),
    ];
    if p > 1 {
        entries.push((338, SHORT, vec![0; p - 1]));
    }
    entries.push((339, SHORT, vec![3; p]));

    let encode_values = |ty: u16, vals: &[u32]| -> Vec<u8> {
        let mut b = Vec::new();
        for &v in vals {
            if ty == SHORT {
                b.extend_from_slice(&(v as u16).to_le_bytes());
            } else {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    };

    let mut inline = Vec::with_capacity(entries.len());
    for (_, ty, vals) in &entries {
        let bytes = encode_values(*ty, vals);
        if bytes.len() <= 4 {
            let mut field = [0u8; 4];
            field[..bytes.len()].copy_from_slice(&bytes);
            inline.push(field);
        } else {
            if out.len() % 2 == 1 {
                out.push(0);
            }
            let off = out.len() as u32;
            out.extend_from_slice(&bytes);
            inline.push(off.to_le_bytes());
        }
    }
    if out.len() % 2 == 1 {
        out.push(0);
    }
    let ifd_offset = out.len() as u32;
    out[4..8].copy_from_slice(&ifd_offset.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for ((tag, ty, vals), field) in entries.iter().zip(&inline) {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&ty.to_le_bytes());
        out.extend_from_slice(&(vals.len() as u32).to_le_bytes());
        out.extend_from_slice(field);
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out
}
