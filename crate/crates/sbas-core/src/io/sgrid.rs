//! SGRID raster format.
//!
//! Layout: one ASCII header line `SGRID 1 <width> <height> <dx_m> <dy_m>
//! <nodata>` terminated by `\n`, immediately followed by `width * height`
//! little-endian 32-bit floats, row-major, top row first. The format is
//! deliberately minimal so any language can reproduce it bit-for-bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

const MAGIC: &str = "SGRID 1";

/// Serialize a raster to SGRID bytes. Values are stored as f32; the nodata
/// sentinel is already f32-quantized by construction, so a file round trip
/// reproduces it exactly.
pub fn encode(raster: &Raster) -> Vec<u8> {
    let header = format!(
        "{MAGIC} {} {} {} {} {}\n",
        raster.width(),
        raster.height(),
        raster.dx_m(),
        raster.dy_m(),
        raster.nodata()
    );
    let mut out = Vec::with_capacity(header.len() + raster.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for &v in raster.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decode SGRID bytes; `path` is used only for error reporting.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Raster> {
    let sgrid_err = |offset: u64, msg: String| Error::Sgrid {
        path: path.into(),
        offset,
        msg,
    };
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| sgrid_err(bytes.len() as u64, "missing header newline".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|e| sgrid_err(e.valid_up_to() as u64, "header is not ASCII".into()))?;
    if !header.starts_with(MAGIC) {
        return Err(sgrid_err(0, format!("bad magic, expected \"{MAGIC}\"")));
    }
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(sgrid_err(
            0,
            format!("header needs 7 fields (magic + 5 values), got {}", fields.len()),
        ));
    }
    let width: usize = fields[2]
        .parse()
        .map_err(|e| sgrid_err(0, format!("invalid width {:?}: {e}", fields[2])))?;
    let height: usize = fields[3]
        .parse()
        .map_err(|e| sgrid_err(0, format!("invalid height {:?}: {e}", fields[3])))?;
    let dx_m: f64 = fields[4]
        .parse()
        .map_err(|e| sgrid_err(0, format!("invalid dx_m {:?}: {e}", fields[4])))?;
    let dy_m: f64 = fields[5]
        .parse()
        .map_err(|e| sgrid_err(0, format!("invalid dy_m {:?}: {e}", fields[5])))?;
    let nodata: f64 = fields[6]
        .parse()
        .map_err(|e| sgrid_err(0, format!("invalid nodata {:?}: {e}", fields[6])))?;

    let payload_start = newline + 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| sgrid_err(0, format!("dimensions {width}x{height} overflow")))?;
    let available = bytes.len() - payload_start;
    if available < expected {
        return Err(sgrid_err(
            bytes.len() as u64,
            format!(
                "payload truncated: header declares {width}x{height} pixels \
                 ({expected} bytes) but only {available} bytes follow"
            ),
        ));
    }
    if available > expected {
        return Err(sgrid_err(
            (payload_start + expected) as u64,
            format!("{} trailing bytes after the declared payload", available - expected),
        ));
    }
    let values: Vec<f64> = bytes[payload_start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Raster::from_values(width, height, dx_m, dy_m, nodata, values)
}

pub fn write_sgrid(raster: &Raster, path: &Path) -> Result<()> {
    std::fs::write(path, encode(raster)).map_err(|e| Error::io(path, e))
}

pub fn read_sgrid(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
