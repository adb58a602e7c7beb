//! `AFA1` audio feature track.
//!
//! ```text
//! magic "AFA1" | D_a u32 | hop f64 | count u64
//! count × ( timestamp f64 | D_a × f32 )
//! ```
//! Little-endian throughout.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

use super::AudioTrack;

pub const MAGIC: &[u8; 4] = b"AFA1";
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode(track: &AudioTrack) -> Result<Vec<u8>> {
    track.validate()?;
    let mut buf = Vec::with_capacity(HEADER_LEN + track.len() * (8 + 4 * track.dim));
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LE>(track.dim as u32)?;
    buf.write_f64::<LE>(track.hop)?;
    buf.write_u64::<LE>(track.len() as u64)?;
    for i in 0..track.len() {
        buf.write_f64::<LE>(track.timestamps[i])?;
        for &v in track.feature(i) {
            buf.write_f32::<LE>(v)?;
        }
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<AudioTrack> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for AFA1 magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected AFA1", String::from_utf8_lossy(&magic))));
    }
    let short = |_| Error::Format("truncated AFA1 header".into());
    let dim = r.read_u32::<LE>().map_err(short)? as usize;
    let hop = r.read_f64::<LE>().map_err(short)?;
    let count = r.read_u64::<LE>().map_err(short)?;
    let expected = HEADER_LEN as u128 + count as u128 * (8 + 4 * dim as u128);
    if expected != bytes.len() as u128 {
        return Err(Error::Corruption(format!(
            "{} bytes on disk, header implies {expected} ({count} entries of {dim} dims)",
            bytes.len()
        )));
    }
    let mut track = AudioTrack::new(dim, hop);
    track.timestamps.reserve(count as usize);
    track.features = vec![0f32; count as usize * dim];
    for i in 0..count as usize {
        track.timestamps.push(r.read_f64::<LE>()?);
        r.read_f32_into::<LE>(&mut track.features[i * dim..(i + 1) * dim])?;
    }
    track.validate()?;
    Ok(track)
}

pub fn write_audio_file(track: &AudioTrack, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(track)?)?;
    Ok(())
}

pub fn read_audio_file(path: impl AsRef<Path>) -> Result<AudioTrack> {
    decode(&fs::read(path)?)
}
