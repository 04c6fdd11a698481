//! Binary field files.
//!
//! Layout (all little-endian):
//!
//! | offset | size | content                         |
//! |--------|------|---------------------------------|
//! | 0      | 8    | magic `EPFIELD\0`               |
//! | 8      | 8    | `u64` nx                        |
//! | 16     | 8    | `u64` ny                        |
//! | 24     | 8    | `f64` domain length             |
//! | 32     | 8    | `u64` layout, 0 = row-major     |
//! | 40     | ...  | `nx·ny` complex values, re, im  |
//!
//! Values are physical-space samples on the grid of [`crate::field`].

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{Grid, SpectralField, C64};

pub const MAGIC: &[u8; 8] = b"EPFIELD\0";
pub const HEADER_LEN: usize = 40;
pub const LAYOUT_ROW_MAJOR: u64 = 0;

pub fn encode(field: &SpectralField) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.n as u64).to_le_bytes());
    out.extend_from_slice(&(g.n as u64).to_le_bytes());
    out.extend_from_slice(&g.length.to_le_bytes());
    out.extend_from_slice(&LAYOUT_ROW_MAJOR.to_le_bytes());
    for z in field.physical() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn word(bytes: &[u8], at: usize) -> [u8; 8] {
    bytes[at..at + 8].try_into().expect("slice of length 8")
}

pub fn decode(bytes: &[u8]) -> Result<SpectralField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::InvalidInput("field file shorter than header".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::InvalidInput("bad field file magic".into()));
    }
    let nx = u64::from_le_bytes(word(bytes, 8)) as usize;
    let ny = u64::from_le_bytes(word(bytes, 16)) as usize;
    let length = f64::from_le_bytes(word(bytes, 24));
    let layout = u64::from_le_bytes(word(bytes, 32));
    if layout != LAYOUT_ROW_MAJOR {
        return Err(Error::InvalidInput(format!("unsupported layout flag {layout}")));
    }
    if nx != ny {
        return Err(Error::InvalidInput(format!("only square grids are supported, got {nx}x{ny}")));
    }
    let grid = Grid::new(nx, length)?;
    let expected = HEADER_LEN + 16 * grid.len();
    if bytes.len() != expected {
        return Err(Error::InvalidInput(format!(
            "field file has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let phys: Vec<C64> = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| C64::new(f64::from_le_bytes(word(c, 0)), f64::from_le_bytes(word(c, 8))))
        .collect();
    if phys.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("field file contains non-finite values".into()));
    }
    SpectralField::from_physical(grid, phys)
}

pub fn write_to<W: Write>(w: &mut W, field: &SpectralField) -> std::io::Result<()> {
    w.write_all(&encode(field))
}

pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Result<SpectralField>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(decode(&buf))
}
