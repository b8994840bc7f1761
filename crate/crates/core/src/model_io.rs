//! The AFWT weight-file format.
//!
//! ```text
//! offset  field
//! 0       magic            b"AFWT"
//! 4       format version   u32 (currently 1)
//! 8       head tag         u32 (0 = emotion, 1 = va)
//! 12      record count     u32
//! 16      arch id length   u32
//! 20      arch id          UTF-8, zero-padded to an 8-byte boundary
//! ...     records          one per tensor, each starting 8-byte aligned:
//!           name length u32 | dtype u32 (0 = f32, 1 = f64) | rank u32 | reserved u32
//!           dims (rank × u32)
//!           name (UTF-8), zero-padded to 8
//!           values (little-endian), zero-padded to 8
//! end-4   CRC-32 (IEEE) of every preceding byte, u32
//! ```
//!
//! All integers are little-endian. The header names the architecture only;
//! loading rebuilds the graph from its builder and checks every record's
//! name and dims against it. Optimiser state is not stored.

use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchId, Head, LayerParamCount, Model, ModelGraph};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AFWT";
pub const FORMAT_VERSION: u32 = 1;
/// Declared payloads or files larger than this are refused before any
/// allocation.
pub const MAX_DECLARED_BYTES: u64 = 64 * 1024 * 1024;

const DTYPE_F32: u32 = 0;
const DTYPE_F64: u32 = 1;
const HEADER_FIXED: usize = 20;
const RECORD_FIXED: usize = 16;
const CRC_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an AFWT file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("file truncated")]
    Truncated,
    #[error("declared size of {0} bytes exceeds the limit")]
    Oversize(u64),
    #[error("unknown architecture id {0:?}")]
    UnknownArch(String),
    #[error("unknown head tag {0}")]
    UnknownHead(u32),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u32),
    #[error("tensor {tensor:?} has dims {found:?}, architecture expects {expected:?}")]
    ShapeConformance { tensor: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("record {index} is named {found:?}, architecture expects {expected:?}")]
    NameMismatch { index: usize, expected: String, found: String },
    #[error("file has {found} tensor records, architecture expects {expected}")]
    RecordCount { expected: usize, found: usize },
    #[error("model has no tensors to save")]
    EmptyModel,
    #[error("only the named architectures can be saved, got graph {0:?}")]
    UnsupportedGraph(String),
    #[error("invalid utf-8 in {0}")]
    Utf8(&'static str),
    #[error("trailing bytes after last record")]
    TrailingBytes,
    #[error(transparent)]
    Model(#[from] crate::error::Error),
}

pub type Result<T, E = WeightFileError> = std::result::Result<T, E>;

fn pad8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

fn head_tag(head: Head) -> u32 {
    match head {
        Head::Emotion => 0,
        Head::ValenceArousal => 1,
    }
}

fn head_from_tag(tag: u32) -> Result<Head> {
    match tag {
        0 => Ok(Head::Emotion),
        1 => Ok(Head::ValenceArousal),
        other => Err(WeightFileError::UnknownHead(other)),
    }
}

fn record_len(name: &str, shape: &[usize], elem_size: usize) -> usize {
    let count: usize = shape.iter().product();
    pad8(RECORD_FIXED + 4 * shape.len() + name.len()) + pad8(count * elem_size)
}

/// Exact f32 file size for `graph`.
pub fn encoded_len(graph: &ModelGraph) -> crate::error::Result<u64> {
    let specs = graph.tensor_specs()?;
    let body: usize = specs.iter().map(|s| record_len(&s.name, &s.shape, 4)).sum();
    Ok((pad8(HEADER_FIXED + graph.name.len()) + body + CRC_LEN) as u64)
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn align(&mut self) {
        let target = pad8(self.buf.len());
        self.buf.resize(target, 0);
    }
}

/// Encodes named f32 tensors under an architecture id and head.
pub fn encode_records(arch_id: &str, head: Head, records: &[(String, &Tensor<f32>)]) -> Result<Vec<u8>> {
    if records.is_empty() {
        return Err(WeightFileError::EmptyModel);
    }
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(head_tag(head));
    w.u32(records.len() as u32);
    w.u32(arch_id.len() as u32);
    w.buf.extend_from_slice(arch_id.as_bytes());
    w.align();
    for (name, tensor) in records {
        w.u32(name.len() as u32);
        w.u32(DTYPE_F32);
        w.u32(tensor.rank() as u32);
        w.u32(0);
        for &d in tensor.shape() {
            w.u32(d as u32);
        }
        w.buf.extend_from_slice(name.as_bytes());
        w.align();
        w.buf.reserve(tensor.len() * 4);
        for v in tensor.data() {
            w.buf.extend_from_slice(&v.to_le_bytes());
        }
        w.align();
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    Ok(w.buf)
}

pub fn to_bytes(model: &Model<f32>) -> Result<Vec<u8>> {
    let graph = model.graph();
    let arch = graph.arch.ok_or_else(|| WeightFileError::UnsupportedGraph(graph.name.clone()))?;
    if *graph != ModelGraph::build(arch, graph.head) {
        return Err(WeightFileError::UnsupportedGraph(graph.name.clone()));
    }
    encode_records(arch.as_str(), graph.head, &model.named_tensors())
}

/// Writes `model` to `path` and returns the number of bytes written.
pub fn save(model: &Model<f32>, path: impl AsRef<Path>) -> Result<u64> {
    let bytes = to_bytes(model)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(WeightFileError::Truncated)?;
        let slice = self.buf.get(self.pos..end).ok_or(WeightFileError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn align(&mut self) -> Result<()> {
        let target = pad8(self.pos);
        self.take(target - self.pos).map(|_| ())
    }

    fn str(&mut self, len: usize, what: &'static str) -> Result<&'a str> {
        std::str::from_utf8(self.take(len)?).map_err(|_| WeightFileError::Utf8(what))
    }
}

/// A parsed record before it is matched against an architecture.
struct RawRecord {
    name: String,
    dims: Vec<usize>,
    values: Vec<f32>,
}

struct Parsed {
    arch_id: String,
    head: Head,
    records: Vec<RawRecord>,
}

fn verify_checksum(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < CRC_LEN {
        return Err(WeightFileError::Truncated);
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(WeightFileError::Checksum { stored, computed });
    }
    Ok(payload)
}

fn parse(bytes: &[u8]) -> Result<Parsed> {
    if bytes.len() as u64 > MAX_DECLARED_BYTES {
        return Err(WeightFileError::Oversize(bytes.len() as u64));
    }
    let payload = verify_checksum(bytes)?;
    let mut r = Reader { buf: payload, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(WeightFileError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(WeightFileError::UnsupportedVersion(version));
    }
    let head = head_from_tag(r.u32()?)?;
    let count = r.u32()? as usize;
    let arch_len = r.u32()? as usize;
    let arch_id = r.str(arch_len, "architecture id")?.to_owned();
    r.align()?;

    let mut records = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let dtype = r.u32()?;
        let rank = r.u32()? as usize;
        let _reserved = r.u32()?;
        let elem = match dtype {
            DTYPE_F32 => 4u64,
            DTYPE_F64 => 8u64,
            other => return Err(WeightFileError::UnsupportedDtype(other)),
        };
        let mut dims = Vec::with_capacity(rank.min(8));
        let mut declared = elem;
        for _ in 0..rank {
            let d = r.u32()? as u64;
            declared = declared.saturating_mul(d);
            dims.push(d as usize);
        }
        if declared > MAX_DECLARED_BYTES {
            return Err(WeightFileError::Oversize(declared));
        }
        let name = r.str(name_len, "tensor name")?.to_owned();
        r.align()?;
        let raw = r.take(declared as usize)?;
        let values = match dtype {
            DTYPE_F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect(),
            _ => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32).collect(),
        };
        r.align()?;
        records.push(RawRecord { name, dims, values });
    }
    if r.pos != payload.len() {
        return Err(WeightFileError::TrailingBytes);
    }
    Ok(Parsed { arch_id, head, records })
}

/// Rebuilds a model from bytes produced by [`to_bytes`].
pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let parsed = parse(bytes)?;
    let arch: ArchId = parsed.arch_id.parse().map_err(|_| WeightFileError::UnknownArch(parsed.arch_id.clone()))?;
    let graph = ModelGraph::build(arch, parsed.head);
    let specs = graph.tensor_specs()?;
    for (index, (spec, rec)) in specs.iter().zip(&parsed.records).enumerate() {
        if spec.name != rec.name {
            return Err(WeightFileError::NameMismatch { index, expected: spec.name.clone(), found: rec.name.clone() });
        }
        if spec.shape != rec.dims {
            return Err(WeightFileError::ShapeConformance {
                tensor: rec.name.clone(),
                expected: spec.shape.clone(),
                found: rec.dims.clone(),
            });
        }
    }
    if specs.len() != parsed.records.len() {
        return Err(WeightFileError::RecordCount { expected: specs.len(), found: parsed.records.len() });
    }
    // Initial values are overwritten by the file contents below.
    let mut model = Model::<f32>::new(graph, &mut crate::rng::SeededRng::new(0))?;
    for ((_, slot), rec) in model.named_tensors_mut().into_iter().zip(parsed.records) {
        *slot = Tensor::from_data(&rec.dims, rec.values)?;
    }
    Ok(model)
}

pub fn load(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    let len = fs::metadata(path)?.len();
    if len > MAX_DECLARED_BYTES {
        return Err(WeightFileError::Oversize(len));
    }
    from_bytes(&fs::read(path)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub params: usize,
}

/// Summary of a weight file.
#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub arch_id: String,
    pub head: Head,
    pub total_params: usize,
    pub trainable_params: usize,
    pub bytes: u64,
    pub layers: Vec<LayerParamCount>,
    pub tensors: Vec<TensorInfo>,
}

impl ModelInfo {
    /// Human-readable per-layer table.
    pub fn table(&self) -> String {
        let mut out = format!("{} ({} head)\n", self.arch_id, self.head);
        out.push_str(&format!("{:<6} {:<16} {:<16} {:>10}\n", "name", "type", "output", "params"));
        for l in &self.layers {
            let shape = l.output_shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
            out.push_str(&format!("{:<6} {:<16} {:<16} {:>10}\n", l.name, l.kind, shape, l.total()));
        }
        out.push_str(&format!("total params: {} ({} trainable)\n", self.total_params, self.trainable_params));
        out.push_str(&format!("file size: {} bytes ({:.2} MB)\n", self.bytes, self.bytes as f64 / 1e6));
        out
    }
}

pub fn model_info(path: impl AsRef<Path>) -> Result<ModelInfo> {
    let path = path.as_ref();
    let bytes = fs::metadata(path)?.len();
    let model = load(path)?;
    let report = model.param_report()?;
    let tensors = model
        .named_tensors()
        .into_iter()
        .map(|(name, t)| TensorInfo { name, shape: t.shape().to_vec(), params: t.len() })
        .collect();
    Ok(ModelInfo {
        arch_id: model.graph().name.clone(),
        head: model.head(),
        total_params: report.total_params,
        trainable_params: report.trainable_params,
        bytes,
        layers: report.layers,
        tensors,
    })
}
