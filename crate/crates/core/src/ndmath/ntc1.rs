//! `NTC1` named-tensor checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "NTC1" | count u32 |
//!   count × ( name_len u16 | name utf-8 | rank u8 | dims u32×rank | f32×prod(dims) )
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

use super::{NamedTensor, TensorStore};

pub const MAGIC: &[u8; 4] = b"NTC1";

pub fn write<W: Write>(store: &TensorStore, mut w: W) -> Result<()> {
    for t in &store.tensors {
        if t.data.len() != t.numel() {
            return Err(Error::Validation(format!(
                "tensor {} has {} values for dims {:?}",
                t.name,
                t.data.len(),
                t.dims
            )));
        }
        if t.name.len() > u16::MAX as usize || t.dims.len() > u8::MAX as usize {
            return Err(Error::Validation(format!("tensor {} name or rank too large", t.name)));
        }
    }
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(store.tensors.len() as u32)?;
    for t in &store.tensors {
        w.write_u16::<LE>(t.name.len() as u16)?;
        w.write_all(t.name.as_bytes())?;
        w.write_u8(t.dims.len() as u8)?;
        for &d in &t.dims {
            w.write_u32::<LE>(d as u32)?;
        }
        for &v in &t.data {
            w.write_f32::<LE>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<TensorStore> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for NTC1 magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected NTC1", String::from_utf8_lossy(&magic))));
    }
    let count = r.read_u32::<LE>().map_err(truncated)?;
    let mut tensors = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let len = r.read_u16::<LE>().map_err(truncated)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|e| Error::Corruption(format!("tensor name: {e}")))?;
        let rank = r.read_u8().map_err(truncated)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.read_u32::<LE>().map_err(truncated)? as usize);
        }
        let numel: usize = dims.iter().product();
        let mut data = vec![0f32; numel];
        r.read_f32_into::<LE>(&mut data).map_err(truncated)?;
        tensors.push(NamedTensor { name, dims, data });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Corruption("trailing bytes after last tensor".into()));
    }
    Ok(TensorStore { tensors })
}

fn truncated(e: std::io::Error) -> Error {
    Error::Corruption(format!("truncated NTC1 payload: {e}"))
}

pub fn save(store: &TensorStore, path: impl AsRef<Path>) -> Result<()> {
    write(store, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<TensorStore> {
    read(BufReader::new(File::open(path)?))
}
