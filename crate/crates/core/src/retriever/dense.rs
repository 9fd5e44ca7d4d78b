//! Dense retrieval slot: any text embedder plus cosine similarity.
//!
//! [`HashingEmbedder`] is a deterministic feature-hashing embedder over the
//! shared tokenizer; it stands in for a trained dual encoder in tests and
//! offline runs.

use super::{DocEntry, RetrieveError, ScoredIndex};
use crate::store::MemoryItem;
use crate::text::analyze;

/// Maps text to a fixed-length vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Signed feature hashing of tokens, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(256)
    }
}

// FNV-1a, 64 bit.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for tok in analyze(text).tokens {
            let h = fnv1a(tok.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Brute-force cosine index over one character's items.
pub struct DenseIndex<E> {
    character_id: String,
    docs: Vec<DocEntry>,
    vectors: Vec<Vec<f32>>,
    embedder: E,
}

impl<E: Embedder> DenseIndex<E> {
    pub fn build(items: &[MemoryItem], embedder: E) -> Result<Self, RetrieveError> {
        let first = items.first().ok_or(RetrieveError::EmptyCorpus)?;
        let mut docs = Vec::with_capacity(items.len());
        let mut vectors = Vec::with_capacity(items.len());
        for it in items {
            if it.character_id != first.character_id {
                return Err(RetrieveError::MixedCharacters(
                    first.character_id.clone(),
                    it.character_id.clone(),
                ));
            }
            let v = embedder.embed(&it.text);
            docs.push(DocEntry {
                item_id: it.item_id.clone(),
                mem_type: it.mem_type,
                len: analyze(&it.text).len() as u32,
            });
            vectors.push(v);
        }
        Ok(DenseIndex {
            character_id: first.character_id.clone(),
            docs,
            vectors,
            embedder,
        })
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl<E: Embedder> ScoredIndex for DenseIndex<E> {
    fn character_id(&self) -> &str {
        &self.character_id
    }

    fn docs(&self) -> &[DocEntry] {
        &self.docs
    }

    fn score_all(&self, question: &str) -> Vec<f64> {
        let q = self.embedder.embed(question);
        self.vectors.iter().map(|v| cosine(&q, v)).collect()
    }
}
