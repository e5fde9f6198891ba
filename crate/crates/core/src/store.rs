//! On-disk model container and a minimal ZIP wrapper for size reporting.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "BRNN"  magic            4 bytes
//! version u16              currently 1
//! flavor  u8               0 = float (f32), 1 = quantized (u8 + range)
//! num_users, input_dim, hidden, window_len   u16 each
//! count   u8               always 6 tensors
//! per tensor: id u8, rank u8, dims u32×rank, payload
//!   float payload:      len·4 bytes of f32
//!   quantized payload:  min f32, max f32, len bytes of codes
//! crc32   u32              over every byte after the magic, before itself
//! ```
//!
//! Tensor order is the model's canonical order (layer1.w, layer1.b,
//! layer2.w, layer2.b, dense.w, dense.b). Saving a loaded float model
//! reproduces the file byte for byte: parameters live as f32 on disk and
//! promotion to f64 is exact.

use std::fs;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::lstm::{LstmModel, HIDDEN_SIZE, INPUT_DIM, NUM_GATES};
use crate::quantize::{QuantizedModel, QuantizedTensor};

const MAGIC: &[u8; 4] = b"BRNN";
const VERSION: u16 = 1;
const TENSOR_COUNT: usize = 6;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed model file: {0}")]
    MalformedHeader(String),
    #[error("unsupported model file version {got}")]
    VersionUnsupported { got: u16 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("file truncated: need {needed} bytes, found {got}")]
    TruncatedData { needed: usize, got: usize },
    #[error("expected a {expected} model, found {got}")]
    WrongFlavor {
        expected: &'static str,
        got: &'static str,
    },
    #[error("model I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Payload encoding of a stored model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Float,
    Quantized,
}

impl Flavor {
    fn code(self) -> u8 {
        match self {
            Flavor::Float => 0,
            Flavor::Quantized => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Flavor::Float => "float",
            Flavor::Quantized => "quantized",
        }
    }
}

/// Either flavor, as read back from disk.
#[derive(Debug)]
pub enum StoredModel {
    Float(LstmModel),
    Quantized(QuantizedModel),
}

/// Shapes of the six tensors for a given user count, canonical order.
fn tensor_dims(num_users: usize) -> [Vec<u32>; TENSOR_COUNT] {
    let h = HIDDEN_SIZE as u32;
    let g = NUM_GATES as u32;
    let d = INPUT_DIM as u32;
    let n = num_users as u32;
    [
        vec![g * h, d + h],
        vec![g * h],
        vec![g * h, h + h],
        vec![g * h],
        vec![n, h],
        vec![n],
    ]
}

/// Exact on-disk size for a model of `num_users`, by flavor.
#[must_use]
pub fn model_file_len(num_users: usize, flavor: Flavor) -> u64 {
    let params: usize = tensor_dims(num_users)
        .iter()
        .map(|d| d.iter().product::<u32>() as usize)
        .sum();
    let header = 15u64;
    let table: u64 = 1 + tensor_dims(num_users)
        .iter()
        .map(|d| 2 + 4 * d.len() as u64)
        .sum::<u64>();
    let payload = match flavor {
        Flavor::Float => 4 * params as u64,
        Flavor::Quantized => 8 * TENSOR_COUNT as u64 + params as u64,
    };
    header + table + payload + 4
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

fn push_header(out: &mut Vec<u8>, flavor: Flavor, num_users: usize, window_len: usize) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(flavor.code());
    out.extend_from_slice(&(num_users as u16).to_le_bytes());
    out.extend_from_slice(&(INPUT_DIM as u16).to_le_bytes());
    out.extend_from_slice(&(HIDDEN_SIZE as u16).to_le_bytes());
    out.extend_from_slice(&(window_len as u16).to_le_bytes());
    out.push(TENSOR_COUNT as u8);
}

fn push_tensor_entry(out: &mut Vec<u8>, id: u8, dims: &[u32]) {
    out.push(id);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
}

fn finish(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&out[MAGIC.len()..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Serializes a float model to its byte form.
#[must_use]
pub fn encode_float_model(model: &LstmModel) -> Vec<u8> {
    let dims = tensor_dims(model.num_users);
    let mut out = Vec::with_capacity(model_file_len(model.num_users, Flavor::Float) as usize);
    push_header(&mut out, Flavor::Float, model.num_users, model.window_len);
    for (id, (slice, d)) in model.tensors().iter().zip(&dims).enumerate() {
        push_tensor_entry(&mut out, id as u8, d);
        for &v in *slice {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    finish(out)
}

/// Serializes a quantized model to its byte form.
#[must_use]
pub fn encode_quantized_model(q: &QuantizedModel) -> Vec<u8> {
    let dims = tensor_dims(q.num_users);
    let mut out = Vec::with_capacity(model_file_len(q.num_users, Flavor::Quantized) as usize);
    push_header(&mut out, Flavor::Quantized, q.num_users, q.window_len);
    for (id, (tensor, d)) in q.tensors.iter().zip(&dims).enumerate() {
        let expected: u32 = d.iter().product();
        assert_eq!(tensor.codes.len(), expected as usize, "tensor {id} shape");
        push_tensor_entry(&mut out, id as u8, d);
        out.extend_from_slice(&tensor.min.to_le_bytes());
        out.extend_from_slice(&tensor.max.to_le_bytes());
        out.extend_from_slice(&tensor.codes);
    }
    finish(out)
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.pos + n > self.bytes.len() {
            return Err(StoreError::TruncatedData {
                needed: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, StoreError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses either flavor from raw bytes.
///
/// # Errors
///
/// The full range of [`StoreError`]: bad magic or geometry, unsupported
/// version, truncation, checksum mismatch.
pub fn decode_model(bytes: &[u8]) -> Result<StoredModel, StoreError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 4 || cur.take(4)? != MAGIC {
        return Err(StoreError::MalformedHeader("missing BRNN magic".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(StoreError::VersionUnsupported { got: version });
    }
    let flavor = match cur.u8()? {
        0 => Flavor::Float,
        1 => Flavor::Quantized,
        other => {
            return Err(StoreError::MalformedHeader(format!(
                "unknown flavor {other}"
            )))
        }
    };
    let num_users = cur.u16()? as usize;
    let input_dim = cur.u16()? as usize;
    let hidden = cur.u16()? as usize;
    let window_len = cur.u16()? as usize;
    if num_users < 2 || input_dim != INPUT_DIM || hidden != HIDDEN_SIZE {
        return Err(StoreError::MalformedHeader(format!(
            "unsupported geometry: {num_users} users, input {input_dim}, hidden {hidden}"
        )));
    }

    // Sizes are closed-form; catch truncation before trusting the CRC.
    let expected = model_file_len(num_users, flavor) as usize;
    if bytes.len() < expected {
        return Err(StoreError::TruncatedData {
            needed: expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(StoreError::MalformedHeader(format!(
            "{} trailing bytes",
            bytes.len() - expected
        )));
    }

    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[MAGIC.len()..bytes.len() - 4]);
    if stored != computed {
        return Err(StoreError::ChecksumMismatch { stored, computed });
    }

    let count = cur.u8()? as usize;
    if count != TENSOR_COUNT {
        return Err(StoreError::MalformedHeader(format!(
            "expected {TENSOR_COUNT} tensors, header says {count}"
        )));
    }

    let expected_dims = tensor_dims(num_users);
    let mut packed: Vec<f32> = Vec::new();
    let mut tensors: Vec<QuantizedTensor> = Vec::new();
    for (id, want) in expected_dims.iter().enumerate() {
        let got_id = cur.u8()?;
        let rank = cur.u8()? as usize;
        if got_id as usize != id || rank != want.len() {
            return Err(StoreError::MalformedHeader(format!(
                "tensor {id}: unexpected id {got_id} or rank {rank}"
            )));
        }
        let mut len = 1usize;
        for want_dim in want {
            let dim = cur.u32()?;
            if dim != *want_dim {
                return Err(StoreError::MalformedHeader(format!(
                    "tensor {id}: dimension {dim}, expected {want_dim}"
                )));
            }
            len *= dim as usize;
        }
        match flavor {
            Flavor::Float => {
                let raw = cur.take(len * 4)?;
                packed.extend(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
                );
            }
            Flavor::Quantized => {
                let min = cur.f32()?;
                let max = cur.f32()?;
                let codes = cur.take(len)?.to_vec();
                tensors.push(QuantizedTensor { codes, min, max });
            }
        }
    }

    Ok(match flavor {
        Flavor::Float => {
            StoredModel::Float(LstmModel::unpack_f32(&packed, num_users, window_len))
        }
        Flavor::Quantized => StoredModel::Quantized(QuantizedModel {
            tensors,
            num_users,
            window_len,
        }),
    })
}

// ---------------------------------------------------------------------------
// File wrappers
// ---------------------------------------------------------------------------

/// Writes a float model; returns the byte count.
///
/// # Errors
///
/// `IoFailure` on write problems.
pub fn save_float_model(model: &LstmModel, path: &Path) -> Result<u64, StoreError> {
    let bytes = encode_float_model(model);
    fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

/// Writes a quantized model; returns the byte count.
///
/// # Errors
///
/// `IoFailure` on write problems.
pub fn save_quantized_model(q: &QuantizedModel, path: &Path) -> Result<u64, StoreError> {
    let bytes = encode_quantized_model(q);
    fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

/// Reads either flavor.
///
/// # Errors
///
/// See [`decode_model`] plus `IoFailure`.
pub fn load_model(path: &Path) -> Result<StoredModel, StoreError> {
    decode_model(&fs::read(path)?)
}

/// Reads a float model, rejecting quantized files.
///
/// # Errors
///
/// `WrongFlavor` when the file holds a quantized model.
pub fn load_float_model(path: &Path) -> Result<LstmModel, StoreError> {
    match load_model(path)? {
        StoredModel::Float(m) => Ok(m),
        StoredModel::Quantized(_) => Err(StoreError::WrongFlavor {
            expected: Flavor::Float.name(),
            got: Flavor::Quantized.name(),
        }),
    }
}

/// Reads a quantized model, rejecting float files.
///
/// # Errors
///
/// `WrongFlavor` when the file holds a float model.
pub fn load_quantized_model(path: &Path) -> Result<QuantizedModel, StoreError> {
    match load_model(path)? {
        StoredModel::Quantized(q) => Ok(q),
        StoredModel::Float(_) => Err(StoreError::WrongFlavor {
            expected: Flavor::Quantized.name(),
            got: Flavor::Float.name(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Single-entry ZIP
// ---------------------------------------------------------------------------

/// Fixed DOS date stamp (2000-01-01, 00:00) so archives are reproducible.
const DOS_DATE: u16 = ((2000 - 1980) << 9) | (1 << 5) | 1;
const DOS_TIME: u16 = 0;

/// Writes `data` as the single deflate-compressed entry of a ZIP archive.
/// Timestamps are fixed, so identical input yields identical bytes.
/// Returns the archive's total size.
///
/// # Errors
///
/// `IoFailure` on compression or write problems.
pub fn write_zip_single(zip_path: &Path, entry_name: &str, data: &[u8]) -> Result<u64, StoreError> {
    use flate2::write::DeflateEncoder;
    use flate2::Compression;
    use std::io::Write;

    let mut encoder = DeflateEncoder::new(Vec::new(), Compression::default());
    encoder.write_all(data)?;
    let compressed = encoder.finish()?;
    let crc = crc32fast::hash(data);
    let name = entry_name.as_bytes();

    let mut out = Vec::with_capacity(compressed.len() + 128);
    // Local file header.
    out.extend_from_slice(&[0x50, 0x4b, 0x03, 0x04]);
    out.extend_from_slice(&20u16.to_le_bytes()); // version needed
    out.extend_from_slice(&0u16.to_le_bytes()); // flags
    out.extend_from_slice(&8u16.to_le_bytes()); // method: deflate
    out.extend_from_slice(&DOS_TIME.to_le_bytes());
    out.extend_from_slice(&DOS_DATE.to_le_bytes());
    out.extend_from_slice(&crc.to_le_bytes());
    out.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // extra length
    out.extend_from_slice(name);
    out.extend_from_slice(&compressed);

    // Central directory.
    let cd_offset = out.len() as u32;
    out.extend_from_slice(&[0x50, 0x4b, 0x01, 0x02]);
    out.extend_from_slice(&20u16.to_le_bytes()); // made by
    out.extend_from_slice(&20u16.to_le_bytes()); // version needed
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&8u16.to_le_bytes());
    out.extend_from_slice(&DOS_TIME.to_le_bytes());
    out.extend_from_slice(&DOS_DATE.to_le_bytes());
    out.extend_from_slice(&crc.to_le_bytes());
    out.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // extra
    out.extend_from_slice(&0u16.to_le_bytes()); // comment
    out.extend_from_slice(&0u16.to_le_bytes()); // disk
    out.extend_from_slice(&0u16.to_le_bytes()); // internal attrs
    out.extend_from_slice(&0u32.to_le_bytes()); // external attrs
    out.extend_from_slice(&0u32.to_le_bytes()); // local header offset
    out.extend_from_slice(name);
    let cd_len = out.len() as u32 - cd_offset;

    // End of central directory.
    out.extend_from_slice(&[0x50, 0x4b, 0x05, 0x06]);
    out.extend_from_slice(&0u16.to_le_bytes()); // disk
    out.extend_from_slice(&0u16.to_le_bytes()); // cd disk
    out.extend_from_slice(&1u16.to_le_bytes()); // entries on disk
    out.extend_from_slice(&1u16.to_le_bytes()); // entries total
    out.extend_from_slice(&cd_len.to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // comment

    fs::write(zip_path, &out)?;
    Ok(out.len() as u64)
}

/// Inflates the single entry of an archive produced by
/// [`write_zip_single`]; used to verify archives and by tests.
///
/// # Errors
///
/// `MalformedHeader` when the archive structure or checksum is off.
pub fn read_zip_single(zip_path: &Path) -> Result<Vec<u8>, StoreError> {
    use flate2::read::DeflateDecoder;

    let bytes = fs::read(zip_path)?;
    if bytes.len() < 30 || bytes[0..4] != [0x50, 0x4b, 0x03, 0x04] {
        return Err(StoreError::MalformedHeader("not a ZIP archive".into()));
    }
    let crc = u32::from_le_bytes(bytes[14..18].try_into().unwrap());
    let compressed_len = u32::from_le_bytes(bytes[18..22].try_into().unwrap()) as usize;
    let name_len = u16::from_le_bytes(bytes[26..28].try_into().unwrap()) as usize;
    let extra_len = u16::from_le_bytes(bytes[28..30].try_into().unwrap()) as usize;
    let start = 30 + name_len + extra_len;
    if bytes.len() < start + compressed_len {
        return Err(StoreError::TruncatedData {
            needed: start + compressed_len,
            got: bytes.len(),
        });
    }

    let mut data = Vec::new();
    DeflateDecoder::new(&bytes[start..start + compressed_len])
        .read_to_end(&mut data)
        .map_err(|e| StoreError::MalformedHeader(format!("deflate stream: {e}")))?;
    if crc32fast::hash(&data) != crc {
        return Err(StoreError::MalformedHeader(
            "entry checksum mismatch".into(),
        ));
    }
    Ok(data)
}
