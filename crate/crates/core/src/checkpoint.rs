//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "MEGA" | version: u32 = 1 | layer count: u32 | (rows: u32, cols: u32) per layer
//!        | f32 values (per layer: weights row-major, then bias) | CRC32 of all preceding bytes
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::genome::{Genome, LayerShape, ShapeManifest};

pub const MAGIC: &[u8; 4] = b"MEGA";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(genome: &Genome) -> Result<Vec<u8>> {
    let manifest = genome.manifest();
    let mut buf = Vec::with_capacity(16 + 8 * manifest.layers().len() + 4 * genome.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32(manifest.layers().len())?.to_le_bytes());
    for layer in manifest.layers() {
        buf.extend_from_slice(&to_u32(layer.rows)?.to_le_bytes());
        buf.extend_from_slice(&to_u32(layer.cols)?.to_le_bytes());
    }
    for (index, &v) in genome.values().iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::NonFiniteValue { index });
        }
        buf.extend_from_slice(&narrow.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidSpec(format!("dimension {n} does not fit in u32")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self, expected_total: usize) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or(Error::LengthMismatch {
            expected: expected_total,
            actual: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Genome> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32(12)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let layer_count = cur.u32(12)? as usize;
    let header_len = 12 + 8 * layer_count;
    if bytes.len() < header_len {
        return Err(Error::LengthMismatch {
            expected: header_len,
            actual: bytes.len(),
        });
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let rows = cur.u32(header_len)? as usize;
        let cols = cur.u32(header_len)? as usize;
        layers.push(LayerShape { rows, cols });
    }
    let manifest = ShapeManifest::new(layers);
    let total = manifest.total_len();
    let expected = header_len + 4 * total + 4;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let body_end = expected - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let values = bytes[header_len..body_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Genome::new(values, manifest)
}

/// Writes to a sibling temp file and renames it into place, so a failed
/// save never leaves a partial checkpoint behind.
pub fn save_checkpoint(genome: &Genome, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(genome)?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Genome> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
