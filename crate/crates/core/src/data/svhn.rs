//! SVHN cropped digits stored as MATLAB level-5 `.mat` files.

use std::io::Read;

use flate2::read::ZlibDecoder;

use super::Split;
use crate::error::{Error, Result};
use crate::image::Image;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

#[derive(Debug, Clone)]
pub struct MatArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Data(format!("malformed MAT file: {}", msg.into()))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    /// Reads one data element tag and payload, skipping padding.
    fn element(&mut self) -> Result<(u32, &'a [u8])> {
        let raw = self.u32()?;
        if raw >> 16 != 0 {
            let n = (raw >> 16) as usize;
            let payload = self.take(4)?;
            return Ok((raw & 0xffff, &payload[..n.min(4)]));
        }
        let n = self.u32()? as usize;
        let payload = self.take(n)?;
        if raw != MI_COMPRESSED {
            let pad = (8 - n % 8) % 8;
            self.pos = (self.pos + pad).min(self.buf.len());
        }
        Ok((raw, payload))
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }
}

fn numeric(ty: u32, bytes: &[u8]) -> Result<Vec<f64>> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            bytes.chunks_exact($n).map(|c| <$t>::from_le_bytes(c.try_into().expect("width")) as f64).collect()
        };
    }
    Ok(match ty {
        MI_INT8 => bytes.iter().map(|&b| b as i8 as f64).collect(),
        MI_UINT8 => bytes.iter().map(|&b| b as f64).collect(),
        MI_INT16 => conv!(i16, 2),
        MI_UINT16 => conv!(u16, 2),
        MI_INT32 => conv!(i32, 4),
        MI_UINT32 => conv!(u32, 4),
        MI_SINGLE => conv!(f32, 4),
        MI_DOUBLE => conv!(f64, 8),
        other => return Err(bad(format!("unsupported numeric type {other}"))),
    })
}

fn parse_matrix(payload: &[u8]) -> Result<MatArray> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let (_, _flags) = c.element()?;
    let (dt, dims) = c.element()?;
    if dt != MI_INT32 {
        return Err(bad("dimensions must be int32"));
    }
    let dims: Vec<usize> = numeric(dt, dims)?.into_iter().map(|d| d as usize).collect();
    let (_, name) = c.element()?;
    let name = String::from_utf8_lossy(name).into_owned();
    let (ty, real) = c.element()?;
    let data = numeric(ty, real)?;
    let expected: usize = dims.iter().product();
    if data.len() != expected {
        return Err(bad(format!("`{name}` has {} values for dims {dims:?}", data.len())));
    }
    Ok(MatArray { name, dims, data })
}

fn collect(buf: &[u8], out: &mut Vec<MatArray>) -> Result<()> {
    let mut c = Cursor { buf, pos: 0 };
    while !c.done() {
        let (ty, payload) = c.element()?;
        match ty {
            MI_COMPRESSED => {
                let mut inner = Vec::new();
                ZlibDecoder::new(payload).read_to_end(&mut inner)?;
                collect(&inner, out)?;
            }
            MI_MATRIX => out.push(parse_matrix(payload)?),
            _ => {}
        }
    }
    Ok(())
}

/// Parses all numeric arrays of a little-endian level-5 MAT file.
pub fn parse_mat(bytes: &[u8]) -> Result<Vec<MatArray>> {
    if bytes.len() < 128 {
        return Err(bad("shorter than the 128-byte header"));
    }
    if &bytes[126..128] != b"IM" {
        return Err(bad("only little-endian files are supported"));
    }
    let mut out = Vec::new();
    collect(&bytes[128..], &mut out)?;
    Ok(out)
}

/// Converts the `X` (32x32x3xN, column-major) and `y` arrays into a split.
/// Label 10 denotes the digit 0.
pub fn split_from_mat(bytes: &[u8]) -> Result<Split> {
    let arrays = parse_mat(bytes)?;
    let x = arrays.iter().find(|a| a.name == "X").ok_or_else(|| bad("missing `X`"))?;
    let y = arrays.iter().find(|a| a.name == "y").ok_or_else(|| bad("missing `y`"))?;
    if x.dims.len() != 4 || x.dims[0] != 32 || x.dims[1] != 32 || x.dims[2] != 3 {
        return Err(bad(format!("`X` dims {:?}", x.dims)));
    }
    let n = x.dims[3];
    if y.data.len() != n {
        return Err(bad(format!("{} labels for {n} images", y.data.len())));
    }
    let mut split = Split::default();
    for i in 0..n {
        let img = Image::from_fn(32, 32, 3, |r, c, ch| x.data[r + 32 * (c + 32 * (ch + 3 * i))] as u8);
        let label = match y.data[i] as usize {
            10 => 0,
            l @ 0..=9 => l,
            l => return Err(bad(format!("label {l} out of range"))),
        };
        split.push(img, label);
    }
    Ok(split)
}
