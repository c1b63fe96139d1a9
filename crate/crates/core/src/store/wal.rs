//! Write-ahead log.
//!
//! Record layout, little-endian:
//! `u32 payload_len | payload | u32 crc32c(payload)` where
//! `payload = u32 key_len | key (canonical UTF-8) | i64 ts_ms | f64 value`.
//! A short or checksum-failing record ends the log; everything after it is
//! discarded on recovery.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::model::SeriesKey;

pub const WAL_FILE: &str = "wal.log";
const MAX_RECORD: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct WalRecord {
    pub key: String,
    pub ts: i64,
    pub value: f64,
}

pub fn encode_record(buf: &mut Vec<u8>, key: &SeriesKey, ts: i64, value: f64) {
    let key = key.to_string();
    let payload_len = 4 + key.len() + 16;
    buf.reserve(payload_len + 8);
    buf.extend_from_slice(&(payload_len as u32).to_le_bytes());
    let start = buf.len();
    buf.extend_from_slice(&(key.len() as u32).to_le_bytes());
    buf.extend_from_slice(key.as_bytes());
    buf.extend_from_slice(&ts.to_le_bytes());
    buf.extend_from_slice(&value.to_le_bytes());
    let crc = crc32c::crc32c(&buf[start..]);
    buf.extend_from_slice(&crc.to_le_bytes());
}

/// Decodes every intact record; returns them with the byte length of the
/// valid prefix.
pub fn decode_records(bytes: &[u8]) -> (Vec<WalRecord>, usize) {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some((rec, next)) = decode_one(bytes, pos) {
        out.push(rec);
        pos = next;
    }
    (out, pos)
}

fn decode_one(bytes: &[u8], pos: usize) -> Option<(WalRecord, usize)> {
    let len = u32::from_le_bytes(bytes.get(pos..pos + 4)?.try_into().ok()?);
    if !(20..=MAX_RECORD).contains(&len) {
        return None;
    }
    let payload = bytes.get(pos + 4..pos + 4 + len as usize)?;
    let crc_at = pos + 4 + len as usize;
    let crc = u32::from_le_bytes(bytes.get(crc_at..crc_at + 4)?.try_into().ok()?);
    if crc32c::crc32c(payload) != crc {
        return None;
    }
    let key_len = u32::from_le_bytes(payload[0..4].try_into().ok()?) as usize;
    if 4 + key_len + 16 != payload.len() {
        return None;
    }
    let key = std::str::from_utf8(&payload[4..4 + key_len])
        .ok()?
        .to_string();
    let ts = i64::from_le_bytes(payload[4 + key_len..12 + key_len].try_into().ok()?);
    let value = f64::from_le_bytes(payload[12 + key_len..20 + key_len].try_into().ok()?);
    Some((WalRecord { key, ts, value }, crc_at + 4))
}

pub struct Wal {
    path: PathBuf,
    file: File,
    len: u64,
    sync: bool,
}

impl Wal {
    /// Opens the log, returning its intact records. A torn tail is truncated.
    pub fn open(dir: &Path, sync: bool) -> io::Result<(Self, Vec<WalRecord>, u64)> {
        let path = dir.join(WAL_FILE);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (records, valid) = decode_records(&bytes);
        let torn = (bytes.len() - valid) as u64;
        if torn > 0 {
            file.set_len(valid as u64)?;
            file.sync_all()?;
        }
        Ok((
            Self {
                path,
                file,
                len: valid as u64,
                sync,
            },
            records,
            torn,
        ))
    }

    /// Writes pre-encoded records with a single write call.
    pub fn write(&mut self, buf: &[u8]) -> io::Result<()> {
        if buf.is_empty() {
            return Ok(());
        }
        self.file.write_all(buf)?;
        if self.sync {
            self.file.sync_data()?;
        }
        self.len += buf.len() as u64;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Atomically replaces the log with `buf`.
    pub fn rewrite(&mut self, buf: &[u8]) -> io::Result<()> {
        let tmp = self.path.with_extension("log.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &self.path)?;
        self.file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&self.path)?;
        self.len = buf.len() as u64;
        Ok(())
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.file.sync_all()
    }
}
