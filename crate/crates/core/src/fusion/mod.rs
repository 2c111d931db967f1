//! Cross-modal attention fusion of text and image embeddings.
//!
//! Text items act as queries over image keys and values:
//!
//! ```text
//! scores = Q · Kᵀ / √d_k
//! W      = softmax_rows(scores)
//! agg    = W · V
//! fused  = combine(text, agg)
//! ```
//!
//! Image keys and values are computed once per corpus ([`ImageMemory`]) so
//! queries at search time are encoded exactly like indexed chunks.

mod matrix;
mod records;

use serde::{Deserialize, Serialize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{EmbeddingVector, Modality};
use crate::error::{Error, Result};
use crate::par::Execution;

pub use matrix::Matrix;
pub use records::{read_fused_jsonl, write_fused_jsonl, FusedRecord, FusionMode};

use matrix::dot;

/// One modality's embeddings, one row per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEmbeddings {
    pub modality: Modality,
    pub matrix: Matrix,
    pub ids: Vec<String>,
}

impl ModalityEmbeddings {
    pub fn new(modality: Modality, matrix: Matrix, ids: Vec<String>) -> Result<Self> {
        if ids.len() != matrix.rows() {
            return Err(Error::shape("embedding ids", matrix.rows(), ids.len()));
        }
        if !matrix.is_finite() {
            return Err(Error::validation("matrix", "contains non-finite values"));
        }
        Ok(Self {
            modality,
            matrix,
            ids,
        })
    }

    pub fn from_vectors(modality: Modality, dim: usize, vectors: &[EmbeddingVector]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
        let ids = vectors.iter().map(|v| v.source_id.clone()).collect();
        Self::new(modality, Matrix::from_rows(dim, &rows)?, ids)
    }

    pub fn empty(modality: Modality, dim: usize) -> Self {
        Self {
            modality,
            matrix: Matrix::zeros(0, dim),
            ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionInit {
    Identity,
    SeededRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Query,
    Key,
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub d_k: usize,
    pub init: ProjectionInit,
    pub seed: u64,
}

impl ProjectionWeights {
    pub fn new(d: usize, d_k: usize, init: ProjectionInit, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::validation("d", "embedding dim must be at least 1"));
        }
        if d_k == 0 {
            return Err(Error::validation("d_k", "must be at least 1"));
        }
        match init {
            ProjectionInit::Identity => {
                if d_k != d {
                    return Err(Error::validation(
                        "d_k",
                        format!("identity projections need d_k = d = {d}, got {d_k}"),
                    ));
                }
                Ok(Self {
                    w_q: Matrix::identity(d),
                    w_k: Matrix::identity(d),
                    w_v: Matrix::identity(d),
                    d_k,
                    init,
                    seed,
                })
            }
            ProjectionInit::SeededRandom => {
                // Uniform in [-1/√d, 1/√d); q, k and v drawn in that order.
                let scale = 1.0 / (d as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut draw = || {
                    let data = (0..d * d_k)
                        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
                        .collect();
                    Matrix::from_vec(d, d_k, data).expect("sized buffer")
                };
                let w_q = draw();
                let w_k = draw();
                let w_v = draw();
                Ok(Self {
                    w_q,
                    w_k,
                    w_v,
                    d_k,
                    init,
                    seed,
                })
            }
        }
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(d, d, ProjectionInit::Identity, 0)
    }

    pub fn seeded_random(d: usize, d_k: usize, seed: u64) -> Result<Self> {
        Self::new(d, d_k, ProjectionInit::SeededRandom, seed)
    }

    pub fn d(&self) -> usize {
        self.w_q.rows()
    }

    fn matrix(&self, role: Role) -> &Matrix {
        match role {
            Role::Query => &self.w_q,
            Role::Key => &self.w_k,
            Role::Value => &self.w_v,
        }
    }

    fn project_row(&self, x: &[f64], role: Role) -> Vec<f64> {
        match self.init {
            ProjectionInit::Identity => x.to_vec(),
            ProjectionInit::SeededRandom => self.matrix(role).left_mul_row(x),
        }
    }
}

/// Row-scaled dot products between queries and keys.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScores(pub Matrix);

/// Row-stochastic attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights(pub Matrix);

pub fn project_qkv(source: &ModalityEmbeddings, weights: &ProjectionWeights, role: Role) -> Result<Matrix> {
    project_matrix(&source.matrix, weights, role)
}

fn project_matrix(m: &Matrix, weights: &ProjectionWeights, role: Role) -> Result<Matrix> {
    if m.cols() != weights.d() {
        return Err(Error::shape("projection input dim (weights rows)", weights.d(), m.cols()));
    }
    let rows = m.iter_rows().map(|r| weights.project_row(r, role)).collect();
    Ok(Matrix::from_row_vecs(weights.d_k, rows))
}

pub fn attention_scores(queries: &Matrix, keys: &Matrix, d_k: usize) -> Result<AttentionScores> {
    if d_k == 0 {
        return Err(Error::Domain("d_k must be positive".into()));
    }
    if queries.cols() != d_k {
        return Err(Error::shape("query columns vs d_k", d_k, queries.cols()));
    }
    if keys.cols() != d_k {
        return Err(Error::shape("key columns vs d_k", d_k, keys.cols()));
    }
    let rows = queries.iter_rows().map(|q| score_row(q, keys, d_k)).collect();
    Ok(AttentionScores(Matrix::from_row_vecs(keys.rows(), rows)))
}

fn score_row(q: &[f64], keys: &Matrix, d_k: usize) -> Vec<f64> {
    let scale = (d_k as f64).sqrt();
    keys.iter_rows().map(|k| dot(q, k) / scale).collect()
}

pub fn softmax_rows(scores: &AttentionScores) -> Result<AttentionWeights> {
    if !scores.0.is_finite() {
        return Err(Error::Domain("attention scores contain non-finite values".into()));
    }
    let m = &scores.0;
    let rows = m.iter_rows().map(softmax_row).collect();
    Ok(AttentionWeights(Matrix::from_row_vecs(m.cols(), rows)))
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn aggregate(weights: &AttentionWeights, values: &Matrix) -> Result<Matrix> {
    weights
        .0
        .matmul(values)
        .map_err(|_| Error::shape("attention weights columns vs value rows", values.rows(), weights.0.cols()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    Concat,
    Mean,
}

pub fn combine_features(text: &[f64], image: &[f64], combine: Combine) -> Result<Vec<f64>> {
    match combine {
        Combine::Concat => Ok(text.iter().chain(image).copied().collect()),
        Combine::Mean => {
            if text.len() != image.len() {
                return Err(Error::shape("mean combine lengths", text.len(), image.len()));
            }
            Ok(text.iter().zip(image).map(|(a, b)| (a + b) / 2.0).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub combine: Combine,
    /// Second pass where images attend over text; the image values become
    /// the mean of their own projection and that aggregate.
    pub symmetric: bool,
    /// Minimum attention weight for an image id to be linked to a record.
    pub provenance_threshold: f64,
    /// Projection width; `None` keeps the embedding dim.
    pub d_k: Option<usize>,
    pub init: ProjectionInit,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            combine: Combine::Concat,
            symmetric: false,
            provenance_threshold: 0.1,
            d_k: None,
            init: ProjectionInit::SeededRandom,
            seed: 7,
        }
    }
}

impl FusionConfig {
    pub fn weights(&self, d: usize) -> Result<ProjectionWeights> {
        ProjectionWeights::new(d, self.d_k.unwrap_or(d), self.init, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.provenance_threshold) {
            return Err(Error::validation("provenance_threshold", "must be in [0, 1]"));
        }
        if self.d_k == Some(0) {
            return Err(Error::validation("d_k", "must be at least 1"));
        }
        Ok(())
    }

    /// Length of a fused vector for embedding dim `d`.
    pub fn fused_dim(&self, d: usize) -> usize {
        match self.combine {
            Combine::Concat => d + self.d_k.unwrap_or(d),
            Combine::Mean => d,
        }
    }
}

/// Projected image keys and values shared by every text query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMemory {
    pub ids: Vec<String>,
    pub keys: Matrix,
    pub values: Matrix,
}

impl ImageMemory {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn build_memory(
    image: &ModalityEmbeddings,
    text: &ModalityEmbeddings,
    weights: &ProjectionWeights,
    config: &FusionConfig,
) -> Result<ImageMemory> {
    let keys = project_qkv(image, weights, Role::Key)?;
    let mut values = project_qkv(image, weights, Role::Value)?;
    if config.symmetric && !image.is_empty() && !text.is_empty() {
        let q_img = project_qkv(image, weights, Role::Query)?;
        let k_txt = project_qkv(text, weights, Role::Key)?;
        let v_txt = project_qkv(text, weights, Role::Value)?;
        let w = softmax_rows(&attention_scores(&q_img, &k_txt, weights.d_k)?)?;
        let back = aggregate(&w, &v_txt)?;
        let rows = values
            .iter_rows()
            .zip(back.iter_rows())
            .map(|(v, b)| combine_features(v, b, Combine::Mean))
            .collect::<Result<Vec<_>>>()?;
        values = Matrix::from_row_vecs(weights.d_k, rows);
    }
    Ok(ImageMemory {
        ids: image.ids.clone(),
        keys,
        values,
    })
}

/// Attended result for one text row.
#[derive(Debug, Clone, PartialEq)]
pub struct Attended {
    pub vector: Vec<f64>,
    pub weights: Vec<f64>,
    pub image_ids: Vec<String>,
}

/// Fuses one raw text embedding against the memory. Used for both chunks
/// and queries.
pub fn attend(
    text_row: &[f64],
    memory: &ImageMemory,
    weights: &ProjectionWeights,
    config: &FusionConfig,
) -> Result<Attended> {
    if text_row.len() != weights.d() {
        return Err(Error::shape("text embedding dim (weights rows)", weights.d(), text_row.len()));
    }
    if memory.is_empty() {
        return Ok(Attended {
            vector: text_only_vector(text_row, weights.d_k, config.combine),
            weights: Vec::new(),
            image_ids: Vec::new(),
        });
    }
    let q = weights.project_row(text_row, Role::Query);
    let w = softmax_row(&score_row(&q, &memory.keys, weights.d_k));
    let agg = memory.values.left_mul_row(&w);
    let vector = combine_features(text_row, &agg, config.combine)?;
    let image_ids = memory
        .ids
        .iter()
        .zip(&w)
        .filter(|(_, &wt)| wt >= config.provenance_threshold)
        .map(|(id, _)| id.clone())
        .collect();
    Ok(Attended {
        vector,
        weights: w,
        image_ids,
    })
}

/// Text-only vector with the same width as a fused one, so both share an
/// index layout.
fn text_only_vector(text_row: &[f64], d_k: usize, combine: Combine) -> Vec<f64> {
    match combine {
        Combine::Concat => text_row.iter().copied().chain(std::iter::repeat_n(0.0, d_k)).collect(),
        Combine::Mean => text_row.to_vec(),
    }
}

/// Full fusion over a corpus. Returns the records and the memory used.
pub fn cross_modal_fuse(
    text: &ModalityEmbeddings,
    image: &ModalityEmbeddings,
    weights: &ProjectionWeights,
    config: &FusionConfig,
    execution: Execution,
) -> Result<(Vec<FusedRecord>, ImageMemory)> {
    config.validate()?;
    if text.dim() != weights.d() {
        return Err(Error::shape("text embedding dim (weights rows)", weights.d(), text.dim()));
    }
    if !image.is_empty() && image.dim() != weights.d() {
        return Err(Error::shape("image embedding dim (weights rows)", weights.d(), image.dim()));
    }
    let memory = if image.is_empty() {
        ImageMemory {
            ids: Vec::new(),
            keys: Matrix::zeros(0, weights.d_k),
            values: Matrix::zeros(0, weights.d_k),
        }
    } else {
        build_memory(image, text, weights, config)?
    };
    if memory.is_empty() && !text.is_empty() {
        log::warn!("no image embeddings; fusing {} text items as text-only", text.len());
    }
    let mode = if memory.is_empty() {
        FusionMode::TextOnly
    } else {
        FusionMode::CrossAttention
    };
    let records = execution
        .map_range(text.len(), |i| {
            attend(text.matrix.row(i), &memory, weights, config).map(|a| FusedRecord {
                vector: a.vector,
                text_ids: vec![text.ids[i].clone()],
                image_ids: a.image_ids,
                mode,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((records, memory))
}

/// Ablation baseline: each text vector concatenated with its paired image
/// vector, or zeros when unpaired.
pub fn naive_concat_fuse(
    text: &ModalityEmbeddings,
    image: &ModalityEmbeddings,
    pairing: &std::collections::BTreeMap<String, String>,
) -> Result<Vec<FusedRecord>> {
    let by_id: std::collections::HashMap<&str, usize> =
        image.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    for (t, img) in pairing {
        if !by_id.contains_key(img.as_str()) {
            return Err(Error::validation(
                "pairing",
                format!("text item `{t}` is paired with unknown image `{img}`"),
            ));
        }
    }
    let zeros = vec![0.0; image.dim()];
    Ok(text
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let paired = pairing.get(id).map(|img| by_id[img.as_str()]);
            let image_part = paired.map_or(zeros.as_slice(), |j| image.matrix.row(j));
            FusedRecord {
                vector: text.matrix.row(i).iter().chain(image_part).copied().collect(),
                text_ids: vec![id.clone()],
                image_ids: paired.map(|j| vec![image.ids[j].clone()]).unwrap_or_default(),
                mode: FusionMode::Concat,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
