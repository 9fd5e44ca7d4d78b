//! Okapi BM25 over an in-memory inverted index.
//!
//! ```text
//! score(D, Q) = sum over query tokens t of
//!     idf(t) * tf(t, D) * (k1 + 1) / (tf(t, D) + k1 * (1 - b + b * |D| / avgdl))
//! idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! Repeated query tokens count once per occurrence. The `+1` inside the log
//! keeps idf non-negative.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DocEntry, RetrieveError, ScoredIndex};
use crate::store::{MemoryItem, MemoryType};
use crate::text::{analyze, TokenList};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// BM25 index over one character's memory items.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub(super) character_id: String,
    pub(super) params: Bm25Params,
    pub(super) docs: Vec<DocEntry>,
    /// Posting lists sorted by document.
    pub(super) postings: BTreeMap<String, Vec<Posting>>,
    pub(super) avg_doc_len: f64,
    pub(super) by_type: [Vec<u32>; 2],
}

impl InvertedIndex {
    pub fn build(items: &[MemoryItem]) -> Result<Self, RetrieveError> {
        Self::build_with(items, Bm25Params::default())
    }

    pub fn build_with(items: &[MemoryItem], params: Bm25Params) -> Result<Self, RetrieveError> {
        let first = items.first().ok_or(RetrieveError::EmptyCorpus)?;
        let character_id = first.character_id.clone();
        let mut docs = Vec::with_capacity(items.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();

        for (d, it) in items.iter().enumerate() {
            if it.character_id != character_id {
                return Err(RetrieveError::MixedCharacters(
                    character_id,
                    it.character_id.clone(),
                ));
            }
            let toks = analyze(&it.text);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in toks.iter() {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t.to_string()).or_default().push(Posting {
                    doc: d as u32,
                    tf: n,
                });
            }
            docs.push(DocEntry {
                item_id: it.item_id.clone(),
                mem_type: it.mem_type,
                len: toks.len() as u32,
            });
        }
        Ok(Self::from_parts(character_id, params, docs, postings))
    }

    pub(super) fn from_parts(
        character_id: String,
        params: Bm25Params,
        docs: Vec<DocEntry>,
        postings: BTreeMap<String, Vec<Posting>>,
    ) -> Self {
        let total: u64 = docs.iter().map(|d| d.len as u64).sum();
        let avg_doc_len = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        let mut by_type = [Vec::new(), Vec::new()];
        for (i, d) in docs.iter().enumerate() {
            by_type[d.mem_type.index()].push(i as u32);
        }
        InvertedIndex {
            character_id,
            params,
            docs,
            postings,
            avg_doc_len,
            by_type,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn postings(&self, token: &str) -> Option<&[Posting]> {
        self.postings.get(token).map(Vec::as_slice)
    }

    pub fn vocabulary_len(&self) -> usize {
        self.postings.len()
    }

    /// Document refs of one memory type, ascending.
    pub fn docs_of_type(&self, t: MemoryType) -> &[u32] {
        &self.by_type[t.index()]
    }

    pub fn position(&self, item_id: &str) -> Option<usize> {
        self.docs.iter().position(|d| d.item_id == item_id)
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * len as f64 / self.avg_doc_len;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Score of one document. Panics if `doc` is out of range.
    pub fn bm25_score(&self, query: &TokenList, doc: usize) -> f64 {
        let len = self.docs[doc].len;
        let mut score = 0.0;
        for tok in query.iter() {
            let Some(list) = self.postings.get(tok) else {
                continue;
            };
            if let Ok(pos) = list.binary_search_by_key(&(doc as u32), |p| p.doc) {
                score += self.term_weight(self.idf(list.len()), list[pos].tf, len);
            }
        }
        score
    }

    /// Scores for every document, accumulated term by term in query order.
    pub fn score_tokens(&self, query: &TokenList) -> Vec<f64> {
        let mut acc = vec![0.0; self.docs.len()];
        for tok in query.iter() {
            let Some(list) = self.postings.get(tok) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                acc[p.doc as usize] += self.term_weight(idf, p.tf, self.docs[p.doc as usize].len);
            }
        }
        acc
    }
}

impl ScoredIndex for InvertedIndex {
    fn character_id(&self) -> &str {
        &self.character_id
    }

    fn docs(&self) -> &[DocEntry] {
        &self.docs
    }

    fn score_all(&self, question: &str) -> Vec<f64> {
        self.score_tokens(&analyze(question))
    }
}
