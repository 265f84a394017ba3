//! Versioned, checksummed binary persistence for trained models.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SYNIDS01" (the trailing two bytes are the format
//!               generation; other generations are rejected)
//! 8       4     u32 version (currently 1)
//! 12      8     u64 payload length in bytes
//! 20      n     payload (see below)
//! 20+n    4     u32 CRC-32 (IEEE) of the payload bytes
//! ```
//!
//! Payload field order:
//! basis {u64 dim; dim f64 a; dim f64 b; 4 f64 gram row-major; f64 gram_det},
//! calibration {4 f64 u_min/u_max/v_min/v_max; u32 width; u32 height},
//! vocabulary {u64 k; u64 dim; k*dim f64 centroids row-major; k f64 idf;
//! u64 rng_seed}, ensemble {u64 learners; per learner 2 classes
//! (legitimate then ddos) of {f64 prior; u64 dim; dim f64 means; dim f64
//! variances}; learners f64 alphas; u64 error_count; error_count f64
//! round_errors}, metadata {u64 len; len bytes UTF-8 JSON}.

use std::path::Path;

use thiserror::Error;

use crate::classifier::{BoostedEnsemble, ClassStats, ModelMetadata, NaiveBayesModel, TrainedModel};
use crate::imaging::CanvasCalibration;
use crate::projection::ProjectionBasis;
use crate::vocabulary::Vocabulary;

const MAGIC: &[u8; 8] = b"SYNIDS01";
const MAGIC_PREFIX: &[u8; 6] = b"SYNIDS";
const VERSION: u32 = 1;
/// Upper bound on any length field, to keep corrupt headers from allocating.
const SANE_LEN: u64 = 1 << 33;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model file error: {0}")]
    FileError(String),
    #[error("format version mismatch: found {found}, supported {supported}")]
    FormatVersionMismatch { found: String, supported: String },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
}

impl From<std::io::Error> for ModelIoError {
    fn from(e: std::io::Error) -> Self {
        ModelIoError::FileError(e.to_string())
    }
}

/// CRC-32 (IEEE 802.3): reflected, polynomial 0xEDB88320, init and final
/// xor 0xFFFFFFFF.
pub fn crc32(data: &[u8]) -> u32 {
    const TABLE: [u32; 256] = {
        let mut table = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            table[i] = c;
            i += 1;
        }
        table
    };
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc = TABLE[((crc ^ u32::from(b)) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelIoError::FileError(format!(
                "payload truncated at offset {} (need {n} bytes)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ModelIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize, ModelIoError> {
        let v = self.u64()?;
        if v > SANE_LEN {
            return Err(ModelIoError::FileError(format!("implausible length field {v}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64, ModelIoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelIoError> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn write_class(w: &mut Writer, s: &ClassStats) {
    w.f64(s.prior);
    w.u64(s.means.len() as u64);
    w.f64s(&s.means);
    w.f64s(&s.variances);
}

fn read_class(r: &mut Reader) -> Result<ClassStats, ModelIoError> {
    let prior = r.f64()?;
    let dim = r.len()?;
    let means = r.f64s(dim)?;
    let variances = r.f64s(dim)?;
    Ok(ClassStats {
        prior,
        means,
        variances,
    })
}

fn encode_payload(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer::new();
    // Basis: stored verbatim (including the precomputed Gram data) so a
    // load/save cycle is bit-identical.
    let b = &model.basis;
    w.u64(b.a.len() as u64);
    w.f64s(&b.a);
    w.f64s(&b.b);
    w.f64(b.gram[0][0]);
    w.f64(b.gram[0][1]);
    w.f64(b.gram[1][0]);
    w.f64(b.gram[1][1]);
    w.f64(b.gram_det);
    // Calibration.
    let c = &model.calibration;
    w.f64(c.u_min);
    w.f64(c.u_max);
    w.f64(c.v_min);
    w.f64(c.v_max);
    w.u32(c.width);
    w.u32(c.height);
    // Vocabulary.
    let v = &model.vocabulary;
    let dim = v.centroids.first().map_or(0, Vec::len);
    w.u64(v.k as u64);
    w.u64(dim as u64);
    for row in &v.centroids {
        w.f64s(row);
    }
    w.f64s(&v.idf);
    w.u64(v.rng_seed);
    // Ensemble.
    let e = &model.ensemble;
    w.u64(e.learners.len() as u64);
    for nb in &e.learners {
        write_class(&mut w, &nb.legitimate);
        write_class(&mut w, &nb.ddos);
    }
    w.f64s(&e.alphas);
    w.u64(e.round_errors.len() as u64);
    w.f64s(&e.round_errors);
    // Metadata JSON block.
    let meta = serde_json::to_vec(&model.metadata).expect("metadata serializes");
    w.u64(meta.len() as u64);
    w.bytes(&meta);
    w.buf
}

fn decode_payload(payload: &[u8]) -> Result<TrainedModel, ModelIoError> {
    let mut r = Reader::new(payload);
    let dim = r.len()?;
    let a = r.f64s(dim)?;
    let b = r.f64s(dim)?;
    let gram = [[r.f64()?, r.f64()?], [r.f64()?, r.f64()?]];
    let gram_det = r.f64()?;
    let basis = ProjectionBasis {
        a,
        b,
        gram,
        gram_det,
    };
    let calibration = CanvasCalibration {
        u_min: r.f64()?,
        u_max: r.f64()?,
        v_min: r.f64()?,
        v_max: r.f64()?,
        width: r.u32()?,
        height: r.u32()?,
    };
    let k = r.len()?;
    let cdim = r.len()?;
    let mut centroids = Vec::with_capacity(k);
    for _ in 0..k {
        centroids.push(r.f64s(cdim)?);
    }
    let idf = r.f64s(k)?;
    let rng_seed = r.u64()?;
    let vocabulary = Vocabulary {
        centroids,
        k,
        idf,
        rng_seed,
    };
    let n_learners = r.len()?;
    let mut learners = Vec::with_capacity(n_learners);
    for _ in 0..n_learners {
        let legitimate = read_class(&mut r)?;
        let ddos = read_class(&mut r)?;
        learners.push(NaiveBayesModel { legitimate, ddos });
    }
    let alphas = r.f64s(n_learners)?;
    let n_errors = r.len()?;
    let round_errors = r.f64s(n_errors)?;
    let ensemble = BoostedEnsemble {
        learners,
        alphas,
        round_errors,
    };
    let meta_len = r.len()?;
    let meta_raw = r.take(meta_len)?;
    let metadata: ModelMetadata = serde_json::from_slice(meta_raw)
        .map_err(|e| ModelIoError::FileError(format!("metadata block: {e}")))?;
    if !r.done() {
        return Err(ModelIoError::FileError(format!(
            "{} trailing payload bytes",
            payload.len() - r.pos
        )));
    }
    Ok(TrainedModel {
        basis,
        calibration,
        vocabulary,
        ensemble,
        metadata,
    })
}

/// Serializes the model to its full file image.
pub fn model_to_bytes(model: &TrainedModel) -> Vec<u8> {
    let payload = encode_payload(model);
    let mut out = Vec::with_capacity(payload.len() + 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    let crc = crc32(&payload);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses a full file image.
pub fn model_from_bytes(data: &[u8]) -> Result<TrainedModel, ModelIoError> {
    if data.len() < 24 {
        return Err(ModelIoError::FileError(format!(
            "file too short ({} bytes) for a model header",
            data.len()
        )));
    }
    let magic = &data[0..8];
    if &magic[0..6] != MAGIC_PREFIX {
        return Err(ModelIoError::FileError("not a model file (bad magic)".into()));
    }
    if magic != MAGIC {
        return Err(ModelIoError::FormatVersionMismatch {
            found: String::from_utf8_lossy(magic).into_owned(),
            supported: String::from_utf8_lossy(MAGIC).into_owned(),
        });
    }
    let version = u32::from_le_bytes(data[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(ModelIoError::FormatVersionMismatch {
            found: format!("version {version}"),
            supported: format!("version {VERSION}"),
        });
    }
    let payload_len = u64::from_le_bytes(data[12..20].try_into().unwrap());
    let expected = data.len() as u64 - 24;
    if payload_len != expected {
        return Err(ModelIoError::FileError(format!(
            "payload length field {payload_len} does not match file ({expected})"
        )));
    }
    let payload = &data[20..20 + payload_len as usize];
    let stored = u32::from_le_bytes(data[20 + payload_len as usize..].try_into().unwrap());
    let computed = crc32(payload);
    if stored != computed {
        return Err(ModelIoError::ChecksumMismatch { stored, computed });
    }
    decode_payload(payload)
}

/// Writes the model atomically (temp file in the same directory, then
/// rename).
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelIoError> {
    let bytes = model_to_bytes(model);
    let file_name = path
        .file_name()
        .ok_or_else(|| ModelIoError::FileError(format!("invalid path {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        ModelIoError::FileError(e.to_string())
    })?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelIoError> {
    let data = std::fs::read(path)?;
    model_from_bytes(&data)
}
