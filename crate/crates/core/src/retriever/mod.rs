//! Per-character memory retrieval.
//!
//! [`InvertedIndex`] is the BM25 backend; [`dense::DenseIndex`] is the
//! embedding slot. Both expose [`ScoredIndex`], which is all that
//! [`retrieve`] and [`retrieve_per_type`] need.

mod bm25;
pub mod dense;
mod persist;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{MemoryItem, MemoryType};

pub use bm25::{Bm25Params, InvertedIndex, Posting};
pub use persist::{INDEX_MAGIC, INDEX_VERSION};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("items belong to more than one character ({0:?} and {1:?})")]
    MixedCharacters(String, String),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-document metadata shared by all index kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntry {
    pub item_id: String,
    pub mem_type: MemoryType,
    /// Length in tokens.
    pub len: u32,
}

/// An index over one character's memory items that can score every
/// document for a question.
pub trait ScoredIndex: Send + Sync {
    fn character_id(&self) -> &str;
    fn docs(&self) -> &[DocEntry];
    /// One score per document, in document order.
    fn score_all(&self, question: &str) -> Vec<f64>;
}

/// A retrieved memory with its raw score and, after re-ranking, its
/// composite score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub item_id: String,
    pub raw_score: f64,
    pub mem_type: MemoryType,
    pub composite_score: Option<f64>,
}

/// Total order on scores in which `-0.0` and `0.0` are equal.
pub fn score_cmp(a: f64, b: f64) -> Ordering {
    (a + 0.0).total_cmp(&(b + 0.0))
}

/// Descending score, then ascending item id.
pub fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    score_cmp(b.0, a.0).then_with(|| a.1.cmp(b.1))
}

fn top_k(docs: &[DocEntry], scores: &[f64], subset: &mut Vec<u32>, k: usize) -> Vec<RankedCandidate> {
    let cmp = |&a: &u32, &b: &u32| {
        rank_order(
            (scores[a as usize], docs[a as usize].item_id.as_str()),
            (scores[b as usize], docs[b as usize].item_id.as_str()),
        )
    };
    if subset.len() > k {
        subset.select_nth_unstable_by(k - 1, cmp);
        subset.truncate(k);
    }
    subset.sort_unstable_by(cmp);
    subset
        .iter()
        .map(|&d| RankedCandidate {
            item_id: docs[d as usize].item_id.clone(),
            raw_score: scores[d as usize],
            mem_type: docs[d as usize].mem_type,
            composite_score: None,
        })
        .collect()
}

/// Top `k` documents by raw score; ties go to the smaller item id.
pub fn retrieve<I: ScoredIndex + ?Sized>(
    index: &I,
    question: &str,
    k: usize,
) -> Result<Vec<RankedCandidate>, RetrieveError> {
    if k == 0 {
        return Err(RetrieveError::ZeroK);
    }
    let docs = index.docs();
    if docs.is_empty() {
        return Err(RetrieveError::EmptyCorpus);
    }
    let scores = index.score_all(question);
    let mut all: Vec<u32> = (0..docs.len() as u32).collect();
    Ok(top_k(docs, &scores, &mut all, k))
}

/// Top `k` of each memory type: the semantic block followed by the episodic
/// block, each sorted. A type with fewer than `k` items contributes all of
/// them.
pub fn retrieve_per_type<I: ScoredIndex + ?Sized>(
    index: &I,
    question: &str,
    k: usize,
) -> Result<Vec<RankedCandidate>, RetrieveError> {
    if k == 0 {
        return Err(RetrieveError::ZeroK);
    }
    let docs = index.docs();
    if docs.is_empty() {
        return Err(RetrieveError::EmptyCorpus);
    }
    let scores = index.score_all(question);
    let mut pool = Vec::with_capacity(2 * k);
    for t in MemoryType::ALL {
        let mut subset: Vec<u32> = (0..docs.len() as u32)
            .filter(|&d| docs[d as usize].mem_type == t)
            .collect();
        pool.extend(top_k(docs, &scores, &mut subset, k));
    }
    Ok(pool)
}

/// Builds one BM25 index per character, keyed by character id.
pub fn build_indexes(
    items: &[MemoryItem],
    params: Bm25Params,
) -> Result<BTreeMap<String, InvertedIndex>, RetrieveError> {
    let mut groups: BTreeMap<&str, Vec<MemoryItem>> = BTreeMap::new();
    for it in items {
        groups.entry(it.character_id.as_str()).or_default().push(it.clone());
    }
    groups
        .into_iter()
        .map(|(cid, group)| Ok((cid.to_string(), InvertedIndex::build_with(&group, params)?)))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::store::{Provenance, Subtype};

    pub(crate) fn item(id: &str, t: Subtype, text: &str) -> MemoryItem {
        MemoryItem {
            item_id: id.into(),
            character_id: "c".into(),
            mem_type: t.mem_type(),
            subtype: t,
            text: text.into(),
            provenance: Provenance::Event { event_id: id.into() },
        }
    }

    #[test]
    fn rare_token_wins_top1() {
        let items = vec![
            item("a", Subtype::Event, "we went hiking"),
            item("b", Subtype::Event, "we went to the zoo"),
            item("c", Subtype::Event, "we went swimming"),
        ];
        let idx = InvertedIndex::build(&items).unwrap();
        let top = retrieve(&idx, "zoo", 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].item_id, "b");
    }

    #[test]
    fn exhaustive_k_returns_all_sorted() {
        let items = vec![
            item("b", Subtype::Event, "x y"),
            item("a", Subtype::Event, "x"),
            item("c", Subtype::Event, "z"),
        ];
        let idx = InvertedIndex::build(&items).unwrap();
        let all = retrieve(&idx, "x", 10).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[2].item_id, "c");
        assert_eq!(all[2].raw_score, 0.0);
        for w in all.windows(2) {
            assert!(rank_order((w[0].raw_score, &w[0].item_id), (w[1].raw_score, &w[1].item_id)).is_lt());
        }
        assert!(matches!(retrieve(&idx, "x", 0), Err(RetrieveError::ZeroK)));
    }

    #[test]
    fn per_type_pool_shapes() {
        let mut items = Vec::new();
        for i in 0..3 {
            items.push(item(&format!("s{i}"), Subtype::Profile, &format!("fact {i}")));
            items.push(item(&format!("e{i}"), Subtype::Event, &format!("event {i}")));
        }
        let idx = InvertedIndex::build(&items).unwrap();
        let pool = retrieve_per_type(&idx, "fact event 1", 2).unwrap();
        assert_eq!(pool.len(), 4);
        assert!(pool[..2].iter().all(|c| c.mem_type == MemoryType::Semantic));
        assert!(pool[2..].iter().all(|c| c.mem_type == MemoryType::Episodic));

        let mut items = vec![
            item("s0", Subtype::Profile, "a"),
            item("s1", Subtype::Relationship, "b"),
        ];
        for i in 0..8 {
            items.push(item(&format!("e{i}"), Subtype::Dialogue, &format!("turn {i}")));
        }
        let idx = InvertedIndex::build(&items).unwrap();
        assert_eq!(retrieve_per_type(&idx, "turn", 5).unwrap().len(), 7);
    }

    #[test]
    fn build_indexes_groups_by_character() {
        let mut items = vec![item("a", Subtype::Event, "x"), item("b", Subtype::Event, "y")];
        items[1].character_id = "d".into();
        let idx = build_indexes(&items, Bm25Params::default()).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx["d"].docs()[0].item_id, "b");
    }
}
