//! Little-endian binary helpers, sidecar metadata, and content hashing.
//!
//! Every binary file written by this crate starts with an 8-byte magic
//! followed by a `u32` format version. See `docs/FORMATS.md` for layouts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const MAGIC_VECTORS: &[u8; 8] = b"MVRVECS\0";
pub const MAGIC_CODEBOOK: &[u8; 8] = b"MVRCBOOK";
pub const MAGIC_ASSIGNMENT: &[u8; 8] = b"MVRASSGN";
pub const MAGIC_CODEC: &[u8; 8] = b"MVRPQCDC";
pub const MAGIC_COMPRESSED: &[u8; 8] = b"MVRCMPRS";
pub const MAGIC_GRAPH: &[u8; 8] = b"MVRHNSWG";
pub const MAGIC_LISTS: &[u8; 8] = b"MVRILIST";

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn with_header(magic: &[u8; 8]) -> Self {
        let mut w = ByteWriter::default();
        w.bytes(magic);
        w.u32(FORMAT_VERSION);
        w
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32s(&mut self, vs: &[u32]) {
        self.buf.reserve(vs.len() * 4);
        for v in vs {
            self.u32(*v);
        }
    }

    pub fn u64s(&mut self, vs: &[u64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.u64(*v);
        }
    }

    pub fn f32s(&mut self, vs: &[f32]) {
        self.buf.reserve(vs.len() * 4);
        for v in vs {
            self.f32(*v);
        }
    }

    /// Unsigned LEB128.
    pub fn varint(&mut self, mut v: u64) {
        loop {
            let byte = (v & 0x7f) as u8;
            v >>= 7;
            if v == 0 {
                self.buf.push(byte);
                return;
            }
            self.buf.push(byte | 0x80);
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8], path: &'a Path) -> Self {
        ByteReader { data, pos: 0, path }
    }

    /// Checks magic and version, leaving the cursor after the 12-byte prefix.
    pub fn with_header(data: &'a [u8], path: &'a Path, magic: &[u8; 8]) -> Result<Self> {
        let mut r = ByteReader::new(data, path);
        if data.len() < 12 {
            return Err(r.header_err("file shorter than header"));
        }
        let found = r.take(8)?;
        if found != magic {
            return Err(r.header_err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.header_err(format!("unsupported version {version}")));
        }
        Ok(r)
    }

    pub fn header_err(&self, reason: impl Into<String>) -> Error {
        Error::MalformedHeader {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn short(&self, need: usize) -> Error {
        Error::SizeMismatch {
            path: self.path.to_path_buf(),
            expected: (self.pos + need) as u64,
            actual: self.data.len() as u64,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.short(n));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let b = self.take(checked_bytes(n, 4, self)?)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        let b = self.take(checked_bytes(n, 8, self)?)?;
        Ok(b.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(checked_bytes(n, 4, self)?)?;
        Ok(bytes_to_f32s(b))
    }

    pub fn varint(&mut self) -> Result<u64> {
        let mut out = 0u64;
        let mut shift = 0;
        loop {
            let byte = self.u8()?;
            if shift >= 64 {
                return Err(self.header_err("varint overflow"));
            }
            out |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(out);
            }
            shift += 7;
        }
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::SizeMismatch {
                path: self.path.to_path_buf(),
                expected: self.pos as u64,
                actual: self.data.len() as u64,
            });
        }
        Ok(())
    }
}

fn checked_bytes(n: usize, width: usize, r: &ByteReader<'_>) -> Result<usize> {
    n.checked_mul(width)
        .ok_or_else(|| r.header_err(format!("element count {n} overflows")))
}

pub fn bytes_to_f32s(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn f32s_to_bytes(vs: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(vs.len() * 4);
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn u32s_to_bytes(vs: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(vs.len() * 4);
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn u64s_to_bytes(vs: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(vs.len() * 8);
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_raw(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// `key: value` sidecar metadata. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    pub path: PathBuf,
    entries: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Metadata {
            path: path.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut meta = Metadata::new(path);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| Error::MalformedMetadata {
                path: path.to_path_buf(),
                reason: format!("line {} is not `key: value`", idx + 1),
            })?;
            meta.entries
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Metadata::parse(path, &text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::MalformedMetadata {
            path: self.path.clone(),
            reason: format!("missing key `{key}`"),
        })
    }

    pub fn require_u64(&self, key: &str) -> Result<u64> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::MalformedMetadata {
            path: self.path.clone(),
            reason: format!("`{key}` is not an unsigned integer: {raw:?}"),
        })
    }

    /// Resolves a path-valued key relative to the metadata file's directory.
    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        let raw = self.require(key)?;
        Ok(self.resolve(raw))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|raw| self.resolve(raw))
    }

    fn resolve(&self, raw: &str) -> PathBuf {
        let p = Path::new(raw);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path
                .parent()
                .map(|d| d.join(p))
                .unwrap_or_else(|| p.to_path_buf())
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn save(&self) -> Result<()> {
        write_file(&self.path, self.render().as_bytes())
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn varint_roundtrip() {
        let values = [0u64, 1, 127, 128, 300, 16_383, 16_384, u32::MAX as u64, u64::MAX];
        let mut w = ByteWriter::default();
        for v in values {
            w.varint(v);
        }
        let bytes = w.into_inner();
        let path = Path::new("mem");
        let mut r = ByteReader::new(&bytes, path);
        for v in values {
            assert_eq!(r.varint().unwrap(), v);
        }
        r.expect_end().unwrap();
    }

    #[test]
    fn header_rejects_wrong_magic() {
        let mut w = ByteWriter::with_header(MAGIC_CODEC);
        w.u32(7);
        let bytes = w.into_inner();
        let err = ByteReader::with_header(&bytes, Path::new("x"), MAGIC_GRAPH).err().unwrap();
        assert!(matches!(err, Error::MalformedHeader { .. }));
    }

    #[test]
    fn short_read_is_size_mismatch() {
        let bytes = [1u8, 2, 3];
        let mut r = ByteReader::new(&bytes, Path::new("x"));
        assert!(matches!(r.u32(), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn metadata_parse_and_resolve() {
        let meta = Metadata::parse(
            Path::new("/data/set/corpus.meta"),
            "# comment\ndim: 4\nvectors: corpus.f32\n\nabs: /tmp/x\n",
        )
        .unwrap();
        assert_eq!(meta.require_u64("dim").unwrap(), 4);
        assert_eq!(
            meta.require_path("vectors").unwrap(),
            PathBuf::from("/data/set/corpus.f32")
        );
        assert_eq!(meta.require_path("abs").unwrap(), PathBuf::from("/tmp/x"));
        assert!(meta.require("missing").is_err());
        assert!(Metadata::parse(Path::new("m"), "novalue").is_err());
    }
}
