//! Turning a detection-only dataset into a detection + teacher-embedding
//! dataset.
//!
//! A [`TeacherEmbedder`] maps every `(image_id, box)` pair to a unit-norm
//! embedding of dimension `D_t`. The crop-and-resize step a real Re-ID
//! network needs stays outside this crate; the embedder only records the crop
//! contract so the dataset metadata can state what produced it.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::BBox;
use crate::rng;

/// Tolerance on the unit-norm invariant of stored teacher embeddings.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistillError {
    #[error("embedding has zero or non-finite norm")]
    DegenerateEmbedding,
    #[error("embedding norm {0} is not 1 within tolerance")]
    NotUnitNorm(f64),
    #[error("embedding dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("truncation dimension {requested} outside 1..={available}")]
    TruncationRange { requested: usize, available: usize },
    #[error("no teacher embedding for record {index} (image {image_id:?})")]
    LookupMiss { index: usize, image_id: String },
    #[error("storage base must be positive")]
    ZeroBase,
}

/// Pseudo ground-truth embedding. Stored as 4-byte floats, L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEmbedding(Vec<f32>);

impl TeacherEmbedding {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: &[f64]) -> Result<Self, DistillError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(DistillError::DegenerateEmbedding);
        }
        Ok(Self(values.iter().map(|v| (v / norm) as f32).collect()))
    }

    /// Wraps already-normalized values, checking the unit-norm invariant.
    pub fn from_unit(values: Vec<f32>) -> Result<Self, DistillError> {
        let norm = l2_norm_f32(&values);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(DistillError::NotUnitNorm(norm));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

fn l2_norm_f32(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

/// Embedding regressed by the joint model, or a truncated teacher target.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentEmbedding(pub Vec<f64>);

impl StudentEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Takes the first `dim` elements of a teacher embedding. The prefix is not
/// re-normalized.
pub fn truncate(teacher: &TeacherEmbedding, dim: usize) -> Result<StudentEmbedding, DistillError> {
    if dim == 0 || dim > teacher.dim() {
        return Err(DistillError::TruncationRange {
            requested: dim,
            available: teacher.dim(),
        });
    }
    Ok(StudentEmbedding(
        teacher.0[..dim].iter().map(|&v| v as f64).collect(),
    ))
}

/// A row of a detection dataset: one labelled box in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: String,
    pub bbox: BBox,
    pub class_id: u32,
}

impl DetectionRecord {
    pub fn person(image_id: impl Into<String>, bbox: BBox) -> Self {
        Self {
            image_id: image_id.into(),
            bbox,
            class_id: 0,
        }
    }

    pub fn key(&self) -> RecordKey {
        RecordKey::new(&self.image_id, &self.bbox)
    }
}

/// Exact lookup key for `(image_id, box)`. Boxes compare bitwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordKey {
    pub image_id: String,
    bits: [u64; 4],
}

impl RecordKey {
    pub fn new(image_id: &str, b: &BBox) -> Self {
        Self {
            image_id: image_id.to_string(),
            bits: [
                b.x_min.to_bits(),
                b.y_min.to_bits(),
                b.x_max.to_bits(),
                b.y_max.to_bits(),
            ],
        }
    }

    fn hash64(&self) -> u64 {
        rng::derive_seed(0, &self.image_id, &self.bits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    pub record: DetectionRecord,
    pub teacher: TeacherEmbedding,
}

/// Input resolution the teacher expects for each crop (height x width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropContract {
    pub height: u32,
    pub width: u32,
}

impl Default for CropContract {
    fn default() -> Self {
        Self {
            height: 256,
            width: 128,
        }
    }
}

impl fmt::Display for CropContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMetadata {
    pub dim: usize,
    pub embedder: String,
    pub crop: CropContract,
    pub seed: u64,
    pub float_width: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistilledDataset {
    pub metadata: DatasetMetadata,
    pub records: Vec<AugmentedRecord>,
}

/// Produces teacher embeddings for detection records.
pub trait TeacherEmbedder: Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn crop(&self) -> CropContract {
        CropContract::default()
    }
    fn seed(&self) -> u64 {
        0
    }
    /// Whether `embed` may be called from several threads at once.
    fn concurrent_safe(&self) -> bool {
        true
    }
    fn embed(
        &self,
        index: usize,
        record: &DetectionRecord,
    ) -> Result<TeacherEmbedding, DistillError>;
}

/// Attaches a teacher embedding to every record, preserving order.
pub fn distill_dataset<E: TeacherEmbedder + ?Sized>(
    records: &[DetectionRecord],
    embedder: &E,
) -> Result<DistilledDataset, DistillError> {
    let dim = embedder.dim();
    let one = |(index, record): (usize, &DetectionRecord)| {
        let teacher = embedder.embed(index, record)?;
        if teacher.dim() != dim {
            return Err(DistillError::DimensionMismatch {
                expected: dim,
                found: teacher.dim(),
            });
        }
        Ok(AugmentedRecord {
            record: record.clone(),
            teacher,
        })
    };
    let records = if embedder.concurrent_safe() {
        records
            .par_iter()
            .enumerate()
            .map(one)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        records
            .iter()
            .enumerate()
            .map(one)
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(DistilledDataset {
        metadata: DatasetMetadata {
            dim,
            embedder: embedder.name(),
            crop: embedder.crop(),
            seed: embedder.seed(),
            float_width: 4,
        },
        records,
    })
}

/// Bytes needed to store the teacher embeddings, as a fraction of `base_bytes`.
pub fn storage_overhead(
    dataset: &[AugmentedRecord],
    base_bytes: u64,
    float_width: u32,
) -> Result<f64, DistillError> {
    if base_bytes == 0 {
        return Err(DistillError::ZeroBase);
    }
    let payload: u64 = dataset
        .iter()
        .map(|r| r.teacher.dim() as u64 * float_width as u64)
        .sum();
    Ok(payload as f64 / base_bytes as f64)
}

/// Deterministic stand-in for a Re-ID teacher.
///
/// Each identity owns a seeded random unit vector. A sample adds isotropic
/// Gaussian noise whose expected norm is `noise_sigma` (per-component standard
/// deviation `noise_sigma / sqrt(dim)`), keyed by `sample_key`, and the result
/// is re-normalized.
pub fn synthetic_oracle_embed(
    dim: usize,
    identity: u64,
    noise_sigma: f64,
    seed: u64,
    sample_key: u64,
) -> TeacherEmbedding {
    let mut base_rng = rng::stream(seed, "oracle-identity", &[identity]);
    let mut v: Vec<f64> = (0..dim).map(|_| base_rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    if noise_sigma > 0.0 {
        let scale = noise_sigma / (dim as f64).sqrt();
        let mut noise_rng = rng::stream(seed, "oracle-noise", &[identity, sample_key]);
        for x in v.iter_mut() {
            let n: f64 = noise_rng.sample(StandardNormal);
            *x += scale * n;
        }
    }
    // A normal draw of exactly zero norm does not happen in practice; the
    // fallback keeps the function total.
    TeacherEmbedding::normalized(&v).unwrap_or_else(|_| {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        TeacherEmbedding::normalized(&e).expect("basis vector")
    })
}

/// [`TeacherEmbedder`] backed by [`synthetic_oracle_embed`].
///
/// With an identity map, records are resolved to identities by exact
/// `(image_id, box)` lookup and a miss is an error. Without one, the identity
/// is a hash of the record key, so every distinct box is its own identity.
#[derive(Debug, Clone)]
pub struct OracleEmbedder {
    pub dim: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    identities: Option<HashMap<RecordKey, u64>>,
}

impl OracleEmbedder {
    pub fn new(dim: usize, seed: u64, noise_sigma: f64) -> Self {
        Self {
            dim,
            seed,
            noise_sigma,
            identities: None,
        }
    }

    pub fn with_identities(mut self, identities: HashMap<RecordKey, u64>) -> Self {
        self.identities = Some(identities);
        self
    }
}

impl TeacherEmbedder for OracleEmbedder {
    fn name(&self) -> String {
        "oracle".to_string()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn embed(
        &self,
        index: usize,
        record: &DetectionRecord,
    ) -> Result<TeacherEmbedding, DistillError> {
        let key = record.key();
        let identity = match &self.identities {
            Some(map) => *map.get(&key).ok_or_else(|| DistillError::LookupMiss {
                index,
                image_id: record.image_id.clone(),
            })?,
            None => key.hash64(),
        };
        Ok(synthetic_oracle_embed(
            self.dim,
            identity,
            self.noise_sigma,
            self.seed,
            key.hash64(),
        ))
    }
}

/// [`TeacherEmbedder`] over precomputed embeddings keyed by `(image_id, box)`.
#[derive(Debug, Clone)]
pub struct LookupEmbedder {
    name: String,
    dim: usize,
    table: HashMap<RecordKey, TeacherEmbedding>,
}

impl LookupEmbedder {
    /// Raw vectors are L2-normalized on insertion.
    pub fn new(
        name: impl Into<String>,
        entries: impl IntoIterator<Item = (RecordKey, Vec<f64>)>,
    ) -> Result<Self, DistillError> {
        let mut dim = None;
        let mut table = HashMap::new();
        for (key, raw) in entries {
            match dim {
                None => dim = Some(raw.len()),
                Some(d) if d != raw.len() => {
                    return Err(DistillError::DimensionMismatch {
                        expected: d,
                        found: raw.len(),
                    })
                }
                _ => {}
            }
            table.insert(key, TeacherEmbedding::normalized(&raw)?);
        }
        Ok(Self {
            name: name.into(),
            dim: dim.unwrap_or(0),
            table,
        })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl TeacherEmbedder for LookupEmbedder {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(
        &self,
        index: usize,
        record: &DetectionRecord,
    ) -> Result<TeacherEmbedding, DistillError> {
        self.table
            .get(&record.key())
            .cloned()
            .ok_or_else(|| DistillError::LookupMiss {
                index,
                image_id: record.image_id.clone(),
            })
    }
}

/// Cosine similarity of two vectors; 0 if either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
