//! Canonical byte encoding.
//!
//! Everything that is hashed or signed goes through this module so digests are
//! reproducible from the field values alone. The layout is:
//!
//! * every field is `len: u32 big-endian ‖ content`;
//! * unsigned integers are 8 content bytes, big-endian; signed integers are
//!   8 bytes of big-endian two's complement; booleans are one byte `0x00`/`0x01`;
//! * strings are their UTF-8 bytes;
//! * a nested record is a single field whose content is the concatenation of
//!   the record's own fields in declared order;
//! * a list is a single field whose content is a `u64` count field followed by
//!   one nested-record field per element.
//!
//! Decoding is strict: trailing bytes, short reads, and wrong integer widths are
//! all errors.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("field at offset {offset} has length {found}, expected {expected}")]
    BadLength { offset: usize, expected: usize, found: usize },
    #[error("{0} trailing bytes after record")]
    Trailing(usize),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Types with a canonical encoding.
pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError>;

    fn to_canonical(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn from_canonical(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(bytes);
        let value = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        let len = u32::try_from(data.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(data);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.bytes(&[v as u8])
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn nested(&mut self, f: impl FnOnce(&mut Encoder)) -> &mut Self {
        let mut inner = Encoder::new();
        f(&mut inner);
        self.bytes(&inner.buf)
    }

    pub fn record<T: Canonical>(&mut self, value: &T) -> &mut Self {
        self.nested(|e| value.encode(e))
    }

    pub fn list<T>(&mut self, items: &[T], f: impl Fn(&mut Encoder, &T)) -> &mut Self {
        self.nested(|e| {
            e.u64(items.len() as u64);
            for item in items {
                e.nested(|inner| f(inner, item));
            }
        })
    }

    pub fn records<T: Canonical>(&mut self, items: &[T]) -> &mut Self {
        self.list(items, |e, item| item.encode(e))
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let start = self.pos;
        let header = self.data.get(start..start + 4).ok_or(CodecError::Truncated(start))?;
        let len = u32::from_be_bytes(header.try_into().unwrap()) as usize;
        let body_start = start + 4;
        let body =
            self.data.get(body_start..body_start.saturating_add(len)).ok_or(CodecError::Truncated(body_start))?;
        self.pos = body_start + len;
        Ok(body)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let offset = self.pos;
        let body = self.bytes()?;
        body.try_into().map_err(|_| CodecError::BadLength { offset, expected: N, found: body.len() })
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.array::<8>()?))
    }

    pub fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_be_bytes(self.array::<8>()?))
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.array::<1>()? {
            [0] => Ok(false),
            [1] => Ok(true),
            [b] => Err(CodecError::Invalid(format!("boolean byte {b:#04x}"))),
        }
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let body = self.bytes()?;
        String::from_utf8(body.to_vec()).map_err(|e| CodecError::Invalid(e.to_string()))
    }

    pub fn nested<T>(&mut self, f: impl FnOnce(&mut Decoder<'a>) -> Result<T, CodecError>) -> Result<T, CodecError> {
        let body = self.bytes()?;
        let mut inner = Decoder::new(body);
        let value = f(&mut inner)?;
        inner.finish()?;
        Ok(value)
    }

    pub fn record<T: Canonical>(&mut self) -> Result<T, CodecError> {
        self.nested(|d| T::decode(d))
    }

    pub fn list<T>(
        &mut self,
        mut f: impl FnMut(&mut Decoder<'a>) -> Result<T, CodecError>,
    ) -> Result<Vec<T>, CodecError> {
        self.nested(|d| {
            let count = d.u64()?;
            // Each element costs at least its 4-byte header.
            if count > (d.remaining() / 4) as u64 {
                return Err(CodecError::Invalid(format!("list count {count} exceeds input")));
            }
            (0..count).map(|_| d.nested(&mut f)).collect()
        })
    }

    pub fn records<T: Canonical>(&mut self) -> Result<Vec<T>, CodecError> {
        self.list(|d| T::decode(d))
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

/// Serde adapter writing byte strings as lowercase hex.
pub mod serde_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
