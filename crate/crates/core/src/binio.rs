//! Shared pieces of the two binary formats: a bounds-checked reader and
//! the length-prefixed `key=value` metadata block.

use std::str::FromStr;

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Reader { bytes, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Corruption(format!(
                    "{} truncated: need {n} bytes at offset {}, have {}",
                    self.what,
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    /// `count` little-endian `f32`s; the byte length is checked before
    /// anything is allocated.
    pub fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let nbytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::Corruption(format!("{}: element count overflows", self.what)))?;
        let raw = self.take(nbytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct Meta {
    entries: Vec<(String, String)>,
}

impl Meta {
    pub fn new() -> Self {
        Meta::default()
    }

    pub fn put(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        debug_assert!(!key.contains('=') && !key.contains('\n') && !value.contains('\n'));
        self.entries.push((key.to_string(), value));
        self
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(format!("metadata key {key:?} missing")))
    }

    pub fn get_opt(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::format(format!("metadata key {key:?} has bad value {raw:?}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::format(format!("metadata key {key:?} has bad list {raw:?}")))
            })
            .collect()
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        let body: String = self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(body.as_bytes());
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let text = std::str::from_utf8(raw).map_err(|_| Error::format("metadata block is not UTF-8"))?;
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("metadata line without '=': {line:?}")))?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Meta { entries })
    }
}

pub(crate) fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trip() {
        let mut m = Meta::new();
        m.put("a", 1).put("shape", join(&[1, 14, 14])).put("x", 0.1f64);
        let mut buf = Vec::new();
        m.write(&mut buf);
        let back = Meta::read(&mut Reader::new(&buf, "test")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.list::<usize>("shape").unwrap(), vec![1, 14, 14]);
        assert_eq!(back.parse::<f64>("x").unwrap(), 0.1);
    }

    #[test]
    fn short_reads_are_corruption() {
        let mut r = Reader::new(&[1, 2, 3], "test");
        assert!(matches!(r.u32().unwrap_err(), Error::Corruption(_)));
        let mut r = Reader::new(&[0; 8], "test");
        assert!(r.f32s(usize::MAX / 2).is_err());
    }
}
