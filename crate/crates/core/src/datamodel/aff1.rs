//! `AFF1` per-frame feature file.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header:
//!   magic "AFF1"            4 bytes
//!   format_version u16      = 1
//!   flags u16               bit0: audio present in schema
//!   video_id_len u16
//!   video_id                utf-8, video_id_len bytes
//!   fps f64
//!   frame_count u64
//!   n_scales u8             = 3
//!   scales 3 × f32          0.9, 1.2, 1.5
//!   D_v u32
//!   D_a u32
//! record (frame_count times):
//!   frame_index u64
//!   timestamp f64
//!   label u8                0..=7, 255 = missing
//!   audio_present u8        0 or 1
//!   visual 3·D_v × f32      scale-major
//!   audio D_a × f32         zeros when absent
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

use super::{Expression, FrameRecord, VideoSequence, SCALES};

pub const MAGIC: &[u8; 4] = b"AFF1";
pub const FORMAT_VERSION: u16 = 1;
pub const FLAG_AUDIO: u16 = 1;

/// Header size in bytes for a video id of `id_len` bytes.
pub fn header_len(id_len: usize) -> usize {
    4 + 2 + 2 + 2 + id_len + 8 + 8 + 1 + 3 * 4 + 4 + 4
}

/// Bytes per record.
pub fn record_len(visual_dim: usize, audio_dim: usize) -> usize {
    8 + 8 + 1 + 1 + 4 * (3 * visual_dim + audio_dim)
}

/// Serializes after validating; nothing is produced for an invalid sequence.
pub fn encode(seq: &VideoSequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let n = seq.records.len();
    let mut buf = Vec::with_capacity(header_len(seq.video_id.len()) + n * record_len(seq.visual_dim, seq.audio_dim));
    buf.extend_from_slice(MAGIC);
    buf.write_u16::<LE>(FORMAT_VERSION)?;
    buf.write_u16::<LE>(if seq.has_audio_schema() { FLAG_AUDIO } else { 0 })?;
    buf.write_u16::<LE>(seq.video_id.len() as u16)?;
    buf.extend_from_slice(seq.video_id.as_bytes());
    buf.write_f64::<LE>(seq.fps)?;
    buf.write_u64::<LE>(n as u64)?;
    buf.write_u8(SCALES.len() as u8)?;
    for s in SCALES {
        buf.write_f32::<LE>(s)?;
    }
    buf.write_u32::<LE>(seq.visual_dim as u32)?;
    buf.write_u32::<LE>(seq.audio_dim as u32)?;
    for rec in &seq.records {
        buf.write_u64::<LE>(rec.frame_index)?;
        buf.write_f64::<LE>(rec.timestamp)?;
        buf.write_u8(Expression::encode(rec.label))?;
        buf.write_u8(rec.audio.is_some() as u8)?;
        for scale in &rec.visual {
            for &v in scale {
                buf.write_f32::<LE>(v)?;
            }
        }
        match &rec.audio {
            Some(a) => {
                for &v in a {
                    buf.write_f32::<LE>(v)?;
                }
            }
            None => buf.resize(buf.len() + 4 * seq.audio_dim, 0),
        }
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<VideoSequence> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for AFF1 magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected AFF1", String::from_utf8_lossy(&magic))));
    }
    let version = r.read_u16::<LE>().map_err(short_header)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported AFF1 version {version}")));
    }
    let flags = r.read_u16::<LE>().map_err(short_header)?;
    let id_len = r.read_u16::<LE>().map_err(short_header)? as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(short_header)?;
    let video_id = String::from_utf8(id).map_err(|e| Error::Format(format!("video id: {e}")))?;
    let fps = r.read_f64::<LE>().map_err(short_header)?;
    let frame_count = r.read_u64::<LE>().map_err(short_header)?;
    let n_scales = r.read_u8().map_err(short_header)?;
    if n_scales as usize != SCALES.len() {
        return Err(Error::Format(format!("expected 3 scales, header says {n_scales}")));
    }
    for want in SCALES {
        let got = r.read_f32::<LE>().map_err(short_header)?;
        if got.to_bits() != want.to_bits() {
            return Err(Error::Format(format!("unexpected scale {got}, expected {want}")));
        }
    }
    let visual_dim = r.read_u32::<LE>().map_err(short_header)? as usize;
    let audio_dim = r.read_u32::<LE>().map_err(short_header)? as usize;
    let audio_schema = flags & FLAG_AUDIO != 0;
    if audio_schema != (audio_dim > 0) {
        return Err(Error::Corruption(format!("audio flag {audio_schema} with D_a = {audio_dim}")));
    }
    if flags & !FLAG_AUDIO != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#06x}")));
    }

    let header = header_len(id_len);
    let per = record_len(visual_dim, audio_dim) as u128;
    let expected = header as u128 + per * frame_count as u128;
    if expected != bytes.len() as u128 {
        return Err(Error::Corruption(format!(
            "{} bytes on disk, header implies {expected} ({frame_count} frames, D_v={visual_dim}, D_a={audio_dim})",
            bytes.len()
        )));
    }

    let mut records = Vec::with_capacity(frame_count as usize);
    for _ in 0..frame_count {
        let frame_index = r.read_u64::<LE>()?;
        let timestamp = r.read_f64::<LE>()?;
        let label = Expression::decode(r.read_u8()?)?;
        let present = match r.read_u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Corruption(format!("audio_present byte {b}"))),
        };
        let mut visual: [Vec<f32>; 3] = Default::default();
        for v in &mut visual {
            *v = vec![0f32; visual_dim];
            r.read_f32_into::<LE>(v)?;
        }
        let mut audio = vec![0f32; audio_dim];
        r.read_f32_into::<LE>(&mut audio)?;
        if !present && audio.iter().any(|v| v.to_bits() != 0) {
            return Err(Error::Corruption(format!("frame {frame_index}: absent audio with nonzero payload")));
        }
        records.push(FrameRecord { frame_index, timestamp, visual, audio: present.then_some(audio), label });
    }
    let seq = VideoSequence { video_id, fps, visual_dim, audio_dim, records };
    seq.validate()?;
    Ok(seq)
}

fn short_header(_: std::io::Error) -> Error {
    Error::Format("truncated AFF1 header".into())
}

pub fn write_feature_file(seq: &VideoSequence, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(seq)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<VideoSequence> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: u64, dv: usize, da: Option<usize>, label: Option<Expression>) -> FrameRecord {
        let f = |k: usize| (0..dv).map(|j| (i as f32) + (k * 10 + j) as f32 * 0.5).collect();
        FrameRecord {
            frame_index: i,
            timestamp: i as f64 / 25.0,
            visual: [f(0), f(1), f(2)],
            audio: da.map(|d| vec![-(i as f32); d]),
            label,
        }
    }

    #[test]
    fn empty_is_header_only() {
        let seq = VideoSequence::new("vid", 30.0, 4, 2);
        let bytes = encode(&seq).unwrap();
        assert_eq!(bytes.len(), header_len(3));
        assert_eq!(header_len(0), 47);
        assert_eq!(decode(&bytes).unwrap(), seq);
    }

    #[test]
    fn one_record_size() {
        let mut seq = VideoSequence::new("", 25.0, 4, 2);
        seq.records.push(rec(0, 4, Some(2), Some(Expression::Fear)));
        // 8 + 8 + 1 + 1 + 4·(12 + 2) = 74
        assert_eq!(encode(&seq).unwrap().len(), 47 + 74);
    }

    #[test]
    fn hand_assembled_two_frames() {
        let mut b: Vec<u8> = Vec::new();
        b.extend(b"AFF1");
        b.extend(1u16.to_le_bytes());
        b.extend(1u16.to_le_bytes());
        b.extend(2u16.to_le_bytes());
        b.extend(b"ab");
        b.extend(25f64.to_le_bytes());
        b.extend(2u64.to_le_bytes());
        b.push(3);
        for s in [0.9f32, 1.2, 1.5] {
            b.extend(s.to_le_bytes());
        }
        b.extend(1u32.to_le_bytes());
        b.extend(1u32.to_le_bytes());
        // frame 0: label Happiness, audio 0.5
        b.extend(0u64.to_le_bytes());
        b.extend(0f64.to_le_bytes());
        b.push(4);
        b.push(1);
        for v in [1f32, 2.0, 3.0, 0.5] {
            b.extend(v.to_le_bytes());
        }
        // frame 3: missing label, no audio
        b.extend(3u64.to_le_bytes());
        b.extend(0.12f64.to_le_bytes());
        b.push(255);
        b.push(0);
        for v in [-1f32, -2.0, -3.0, 0.0] {
            b.extend(v.to_le_bytes());
        }
        let seq = decode(&b).unwrap();
        assert_eq!(seq.video_id, "ab");
        assert_eq!(seq.fps, 25.0);
        assert_eq!((seq.visual_dim, seq.audio_dim), (1, 1));
        assert_eq!(seq.records.len(), 2);
        let r0 = &seq.records[0];
        assert_eq!(r0.frame_index, 0);
        assert_eq!(r0.label, Some(Expression::Happiness));
        assert_eq!(r0.visual, [vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(r0.audio, Some(vec![0.5]));
        let r1 = &seq.records[1];
        assert_eq!((r1.frame_index, r1.timestamp), (3, 0.12));
        assert_eq!(r1.label, None);
        assert_eq!(r1.audio, None);
        assert_eq!(encode(&seq).unwrap(), b);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&VideoSequence::new("x", 25.0, 1, 0)).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn payload_length_mismatch_is_corruption() {
        let mut seq = VideoSequence::new("x", 25.0, 2, 0);
        seq.records.push(rec(0, 2, None, None));
        let mut bytes = encode(&seq).unwrap();
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn non_monotone_index_rejected() {
        let mut seq = VideoSequence::new("x", 25.0, 2, 0);
        seq.records.push(rec(5, 2, None, None));
        seq.records.push(rec(5, 2, None, None));
        assert!(matches!(encode(&seq), Err(Error::Validation(_))));
        // and on decode, when assembled by patching a valid file
        seq.records[1].frame_index = 6;
        let mut bytes = encode(&seq).unwrap();
        let off = header_len(1) + record_len(2, 0);
        bytes[off..off + 8].copy_from_slice(&5u64.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn invalid_sequence_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.aff1");
        let mut seq = VideoSequence::new("x", 25.0, 2, 0);
        seq.records.push(rec(0, 3, None, None));
        assert!(write_feature_file(&seq, &path).is_err());
        assert!(!path.exists());
    }
}
