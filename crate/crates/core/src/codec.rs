//! Canonical byte encoding shared by blocks, transactions and contract
//! state. Fields are written in declaration order; variable-length fields
//! carry a big-endian u32 length prefix. The same bytes feed SHA-256 for
//! block hashes and state roots, so the encoding must never change shape
//! between writer and replayer.

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("invalid utf-8 string at offset {0}")]
    BadString(usize),
    #[error("trailing bytes after decode: {0} left")]
    TrailingBytes(usize),
    #[error("bad magic bytes")]
    BadMagic,
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(data);
    h.finalize().into()
}

/// Canonical writer: big-endian integers, u32-length-prefixed byte fields.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_digest(&mut self, d: &[u8; 32]) {
        self.buf.extend_from_slice(d);
    }

    pub fn put_bytes(&mut self, b: &[u8]) {
        self.put_u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }

    pub fn put_str(&mut self, s: &str) {
        self.put_bytes(s.as_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }
}

/// Canonical reader mirroring [`Writer`].
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.data.len() {
            return Err(DecodeError::Truncated(self.pos));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn get_u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u32(&mut self) -> Result<u32, DecodeError> {
        let s = self.take(4)?;
        Ok(u32::from_be_bytes(s.try_into().unwrap()))
    }

    pub fn get_u64(&mut self) -> Result<u64, DecodeError> {
        let s = self.take(8)?;
        Ok(u64::from_be_bytes(s.try_into().unwrap()))
    }

    pub fn get_i64(&mut self) -> Result<i64, DecodeError> {
        let s = self.take(8)?;
        Ok(i64::from_be_bytes(s.try_into().unwrap()))
    }

    pub fn get_digest(&mut self) -> Result<[u8; 32], DecodeError> {
        let s = self.take(32)?;
        Ok(s.try_into().unwrap())
    }

    pub fn get_bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let n = self.get_u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    pub fn get_str(&mut self) -> Result<String, DecodeError> {
        let start = self.pos;
        let b = self.get_bytes()?;
        String::from_utf8(b).map_err(|_| DecodeError::BadString(start))
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.pos != self.data.len() {
            return Err(DecodeError::TrailingBytes(self.data.len() - self.pos));
        }
        Ok(())
    }
}

/// value × 10⁶, rounded half-to-even. On-chain metrics are fixed-point so
/// state roots never depend on float formatting.
pub fn to_micro(v: f64) -> u64 {
    let scaled = (v * 1_000_000.0).round_ties_even();
    if scaled <= 0.0 {
        0
    } else {
        scaled as u64
    }
}

pub fn from_micro(v: u64) -> f64 {
    v as f64 / 1_000_000.0
}
