//! Checksummed binary envelopes with atomic replacement.
//!
//! Layout (little-endian): `"RGFO"`, version `u32`, kind `u32`, provenance `u64`,
//! payload length `u64`, payload, FNV-1a-64 of the payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::StoreError;
use crate::scalar::Fnv1a;

pub const MAGIC: [u8; 4] = *b"RGFO";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Operator = 1,
    Svd = 2,
    Field = 3,
}

impl Kind {
    pub fn from_u32(v: u32) -> Option<Kind> {
        match v {
            1 => Some(Kind::Operator),
            2 => Some(Kind::Svd),
            3 => Some(Kind::Field),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Operator => "operator",
            Kind::Svd => "svd",
            Kind::Field => "field",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub kind: u32,
    pub provenance: u64,
    pub payload_len: u64,
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn encode(kind: Kind, provenance: u64, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&provenance.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&Fnv1a::hash(payload).to_le_bytes());
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

/// Parses and verifies the header only.
pub fn parse_header(bytes: &[u8], name: &str) -> Result<Header, StoreError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(StoreError::BadMagic(name.to_string()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::Length { declared: HEADER_LEN as u64, available: bytes.len() as u64 });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    Ok(Header { version, kind: u32_at(bytes, 8), provenance: u64_at(bytes, 12), payload_len: u64_at(bytes, 20) })
}

/// Verifies every field and returns the payload.
pub fn decode(bytes: &[u8], name: &str, kind: Kind, provenance: u64) -> Result<Vec<u8>, StoreError> {
    let h = parse_header(bytes, name)?;
    if h.kind != kind as u32 {
        return Err(StoreError::KindMismatch { expected: kind as u32, found: h.kind });
    }
    if h.provenance != provenance {
        return Err(StoreError::ProvenanceMismatch { expected: provenance, found: h.provenance });
    }
    let available = (bytes.len() - HEADER_LEN) as u64;
    if available != h.payload_len.saturating_add(8) {
        return Err(StoreError::Length { declared: h.payload_len, available: available.saturating_sub(8) });
    }
    let end = HEADER_LEN + h.payload_len as usize;
    let payload = &bytes[HEADER_LEN..end];
    let stored = u64_at(bytes, end);
    let computed = Fnv1a::hash(payload);
    if stored != computed {
        return Err(StoreError::Checksum { stored, computed });
    }
    Ok(payload.to_vec())
}

/// Writes to a sibling temporary file, syncs, then renames over `path`.
pub fn write_envelope(kind: Kind, provenance: u64, payload: &[u8], path: &Path) -> Result<(), StoreError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let bytes = encode(kind, provenance, payload);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    res.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

pub fn read_envelope(path: &Path, kind: Kind, provenance: u64) -> Result<Vec<u8>, StoreError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes, &path.display().to_string(), kind, provenance)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub path: PathBuf,
    pub header: Option<Header>,
    pub size: u64,
}

/// Files in `dir` with the envelope extension, sorted by name; unreadable headers are
/// reported as `None`.
pub fn list_cache(dir: &Path) -> Result<Vec<CacheEntry>, StoreError> {
    let mut out = Vec::new();
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(io_err(dir, e)),
    };
    for ent in rd {
        let ent = ent.map_err(|e| io_err(dir, e))?;
        let path = ent.path();
        if path.extension().is_some_and(|x| x == "rgfo") {
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let header = parse_header(&bytes, &path.display().to_string()).ok();
            out.push(CacheEntry { path, header, size: bytes.len() as u64 });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Removes every envelope file in `dir`; returns the number removed.
pub fn clear_cache(dir: &Path) -> Result<usize, StoreError> {
    let entries = list_cache(dir)?;
    for e in &entries {
        fs::remove_file(&e.path).map_err(|err| io_err(&e.path, err))?;
    }
    Ok(entries.len())
}
