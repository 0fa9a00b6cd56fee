//! On-disk feature cache: one binary record per chunk and framing.
//!
//! Record layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "ATFC"
//! version      u16      = 1
//! reserved     u16      = 0
//! source_crc   u32      checksum of the source audio bytes
//! config_crc   u32      checksum of the extraction settings
//! sample_rate  u32
//! window       u32      samples
//! hop          u32      samples
//! num_samples  u64
//! rows         u32
//! cols         u32
//! id_len       u16
//! id           id_len bytes, UTF-8
//! data_crc     u32      checksum of the payload bytes
//! header_crc   u32      checksum of every header byte before this field
//! payload      rows * cols f32, row-major
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{FeatureMatrix, FrameLayout, MfccConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ATFC";
pub const CACHE_VERSION: u16 = 1;

/// Identifies the inputs a record was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub source_crc: u32,
    pub config_crc: u32,
}

impl CacheKey {
    pub fn new(source_bytes: &[u8], window_ms: f64, hop_ms: f64, mfcc: &MfccConfig) -> Self {
        CacheKey {
            source_crc: crc32fast::hash(source_bytes),
            config_crc: config_fingerprint(window_ms, hop_ms, mfcc),
        }
    }
}

pub fn config_fingerprint(window_ms: f64, hop_ms: f64, mfcc: &MfccConfig) -> u32 {
    let text = format!(
        "v{CACHE_VERSION};{window_ms:?};{hop_ms:?};{:?};{};{};{:?};{:?};{:?}",
        mfcc.pre_emphasis, mfcc.num_filters, mfcc.num_coefficients, mfcc.low_hz, mfcc.high_hz, mfcc.log_floor
    );
    crc32fast::hash(text.as_bytes())
}

pub fn encode_record(features: &FeatureMatrix, key: CacheKey) -> Vec<u8> {
    let (rows, cols) = features.features.dim();
    let id = features.chunk_id.as_bytes();
    let mut payload = Vec::with_capacity(rows * cols * 4);
    for &v in features.features.iter() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }

    let mut out = Vec::with_capacity(64 + id.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&key.source_crc.to_le_bytes());
    out.extend_from_slice(&key.config_crc.to_le_bytes());
    let layout = features.layout;
    out.extend_from_slice(&layout.sample_rate.to_le_bytes());
    out.extend_from_slice(&(layout.window as u32).to_le_bytes());
    out.extend_from_slice(&(layout.hop as u32).to_le_bytes());
    out.extend_from_slice(&(layout.num_samples as u64).to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    let header_crc = crc32fast::hash(&out);
    out.extend_from_slice(&header_crc.to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Cache("record truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a record, verifying magic, version and both checksums.
pub fn decode_record(bytes: &[u8]) -> Result<(FeatureMatrix, CacheKey)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = r.u16()?;
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported cache version {version}")));
    }
    r.u16()?;
    let key = CacheKey {
        source_crc: r.u32()?,
        config_crc: r.u32()?,
    };
    let layout = FrameLayout {
        sample_rate: r.u32()?,
        window: r.u32()? as usize,
        hop: r.u32()? as usize,
        num_samples: r.u64()? as usize,
    };
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let id_len = r.u16()? as usize;
    let id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| Error::Cache("chunk id is not UTF-8".into()))?
        .to_string();
    let data_crc = r.u32()?;
    let header_end = r.pos;
    let header_crc = r.u32()?;
    if crc32fast::hash(&bytes[..header_end]) != header_crc {
        return Err(Error::Cache("header checksum mismatch".into()));
    }
    let payload = r.take(rows * cols * 4)?;
    if r.pos != bytes.len() {
        return Err(Error::Cache("trailing bytes after payload".into()));
    }
    if crc32fast::hash(payload) != data_crc {
        return Err(Error::Cache("payload checksum mismatch".into()));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let features = Array2::from_shape_vec((rows, cols), values).expect("length checked");
    Ok((
        FeatureMatrix {
            chunk_id: id,
            features,
            layout,
        },
        key,
    ))
}

pub fn store(path: impl AsRef<Path>, features: &FeatureMatrix, key: CacheKey) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_record(features, key)).map_err(|e| Error::io(path, e))
}

/// Outcome of a cache lookup.
#[derive(Debug)]
pub enum Lookup {
    Hit(FeatureMatrix),
    Missing,
    /// The record exists but was computed from other inputs.
    Stale,
    Corrupt(Error),
}

pub fn lookup(path: impl AsRef<Path>, key: CacheKey) -> Lookup {
    let bytes = match fs::read(path.as_ref()) {
        Ok(bytes) => bytes,
        Err(_) => return Lookup::Missing,
    };
    match decode_record(&bytes) {
        Ok((features, stored)) if stored == key => Lookup::Hit(features),
        Ok(_) => Lookup::Stale,
        Err(e) => Lookup::Corrupt(e),
    }
}

/// Loads a record without checking which inputs produced it.
pub fn load(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_record(&bytes).map(|(f, _)| f)
}
