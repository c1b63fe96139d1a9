//! Segment file codec.
//!
//! `"NGSG" | u16 version` followed by chunks of
//! `u32 key_len | key | u32 count | count * (i64 ts, f64 value) | u32 crc32c`,
//! all little-endian. The checksum covers the chunk bytes from `key_len`
//! through the last point.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use super::ops::Point;

pub const MAGIC: &[u8; 4] = b"NGSG";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentChunk {
    pub key: String,
    pub points: Vec<Point>,
}

pub fn encode(chunks: &[SegmentChunk]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for chunk in chunks {
        let start = buf.len();
        buf.extend_from_slice(&(chunk.key.len() as u32).to_le_bytes());
        buf.extend_from_slice(chunk.key.as_bytes());
        buf.extend_from_slice(&(chunk.points.len() as u32).to_le_bytes());
        for (ts, v) in &chunk.points {
            buf.extend_from_slice(&ts.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32c::crc32c(&buf[start..]);
        buf.extend_from_slice(&crc.to_le_bytes());
    }
    buf
}

/// Decodes a whole segment. On failure returns the byte offset of the first
/// bad chunk (or of the header).
pub fn decode(bytes: &[u8]) -> Result<Vec<SegmentChunk>, u64> {
    if bytes.len() < 6
        || &bytes[0..4] != MAGIC
        || u16::from_le_bytes([bytes[4], bytes[5]]) != VERSION
    {
        return Err(0);
    }
    let mut pos = 6;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let start = pos;
        let chunk = decode_chunk(bytes, &mut pos).ok_or(start as u64)?;
        out.push(chunk);
    }
    Ok(out)
}

fn decode_chunk(bytes: &[u8], pos: &mut usize) -> Option<SegmentChunk> {
    let start = *pos;
    let read_u32 = |at: usize| -> Option<u32> {
        Some(u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
    };
    let key_len = read_u32(start)? as usize;
    let key = std::str::from_utf8(bytes.get(start + 4..start + 4 + key_len)?)
        .ok()?
        .to_string();
    let count_at = start + 4 + key_len;
    let count = read_u32(count_at)? as usize;
    let points_at = count_at + 4;
    let points_end = points_at.checked_add(count.checked_mul(16)?)?;
    let raw = bytes.get(points_at..points_end)?;
    let crc = read_u32(points_end)?;
    if crc32c::crc32c(&bytes[start..points_end]) != crc {
        return None;
    }
    let points: Vec<Point> = raw
        .chunks_exact(16)
        .map(|p| {
            (
                i64::from_le_bytes(p[0..8].try_into().unwrap()),
                f64::from_le_bytes(p[8..16].try_into().unwrap()),
            )
        })
        .collect();
    if points.windows(2).any(|w| w[0].0 >= w[1].0) {
        return None;
    }
    *pos = points_end + 4;
    Some(SegmentChunk { key, points })
}

/// Writes via a temporary file and rename so a segment is never observed
/// half-written.
pub fn write_file(path: &Path, chunks: &[SegmentChunk], sync: bool) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&encode(chunks))?;
        if sync {
            f.sync_all()?;
        }
    }
    std::fs::rename(tmp, path)
}
