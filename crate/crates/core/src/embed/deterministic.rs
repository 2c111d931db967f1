use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EmbeddingVector, Modality};

/// Uniform values in `[-1, 1)` from a ChaCha8 stream keyed by
/// `sha256(seed_le || content)`. ChaCha and the float conversion are fully
/// specified, so the output is identical on every platform.
pub fn deterministic_raw(content: &[u8], dim: usize, seed: u64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(content);
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

/// Scales to unit L2 norm; the zero vector is returned unchanged.
pub fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Reproducible unit vector for `content`.
pub fn deterministic_test_embedding(content: &[u8], dim: usize, seed: u64) -> EmbeddingVector {
    let mut values = deterministic_raw(content, dim.max(1), seed);
    l2_normalize(&mut values);
    EmbeddingVector {
        source_id: String::new(),
        modality: Modality::Text,
        values,
    }
}
