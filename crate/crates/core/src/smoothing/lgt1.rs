//! `LGT1` logits interchange: `magic "LGT1" | T u64 | C u32 | T·C × f32`, row-major, little-endian.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::ndmath::Matrix;

pub const MAGIC: &[u8; 4] = b"LGT1";
pub const HEADER_LEN: usize = 4 + 8 + 4;

pub fn encode(logits: &Matrix) -> Result<Vec<u8>> {
    logits.ensure_finite("logits")?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * logits.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.write_u64::<LE>(logits.rows() as u64)?;
    buf.write_u32::<LE>(logits.cols() as u32)?;
    for &v in logits.as_slice() {
        buf.write_f32::<LE>(v as f32)?;
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for LGT1 magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected LGT1", String::from_utf8_lossy(&magic))));
    }
    let short = |_| Error::Format("truncated LGT1 header".into());
    let rows = r.read_u64::<LE>().map_err(short)?;
    let cols = r.read_u32::<LE>().map_err(short)?;
    let expected = HEADER_LEN as u128 + 4 * rows as u128 * cols as u128;
    if expected != bytes.len() as u128 {
        return Err(Error::Corruption(format!("{} bytes on disk, header implies {expected}", bytes.len())));
    }
    let mut data = vec![0f32; rows as usize * cols as usize];
    r.read_f32_into::<LE>(&mut data)?;
    let m = Matrix::new(rows as usize, cols as usize, data.into_iter().map(f64::from).collect())?;
    m.ensure_finite("logits")?;
    Ok(m)
}

pub fn write_logits(logits: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(logits)?)?;
    Ok(())
}

pub fn read_logits(path: impl AsRef<Path>) -> Result<Matrix> {
    decode(&fs::read(path)?)
}
