//! Recall@K and anchor-based MAP.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::store::QAItem;
use crate::text::normalize;

/// Recall over the questions that have at least one gold id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    pub value: f64,
    pub scored: usize,
    /// Questions without gold ids.
    pub excluded: usize,
}

/// Fraction of questions whose top `k` retrieved ids include any gold id.
/// Questions with no gold ids are excluded; with none left the value is 0.
pub fn recall_at_k<S: AsRef<str>>(retrieved: &[Vec<S>], gold: &[Vec<S>], k: usize) -> Recall {
    assert_eq!(retrieved.len(), gold.len(), "one ranking per question");
    let mut hits = 0usize;
    let mut scored = 0usize;
    for (ranking, g) in retrieved.iter().zip(gold) {
        if g.is_empty() {
            continue;
        }
        scored += 1;
        if ranking
            .iter()
            .take(k)
            .any(|r| g.iter().any(|x| x.as_ref() == r.as_ref()))
        {
            hits += 1;
        }
    }
    Recall {
        value: if scored == 0 { 0.0 } else { hits as f64 / scored as f64 },
        scored,
        excluded: retrieved.len() - scored,
    }
}

/// Number of anchor entries whose normalized text occurs in the normalized
/// response. Each entry counts at most once however often it occurs; an
/// anchor that normalizes to nothing never matches.
pub fn em_count<S: AsRef<str>>(response: &str, anchors: &[S]) -> usize {
    let r = normalize(response);
    anchors
        .iter()
        .filter(|a| {
            let a = normalize(a.as_ref());
            !a.is_empty() && r.contains(&a)
        })
        .count()
}

/// MAP with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapBreakdown {
    pub map: f64,
    pub scored: usize,
    /// QA ids without anchors, left out of the mean.
    pub excluded: Vec<String>,
}

/// Mean over questions of matched anchors / total anchors. Summation runs
/// in `qa_id` order so the result does not depend on input order.
pub fn map_breakdown<S: AsRef<str>>(responses: &[S], qa: &[QAItem]) -> Result<MapBreakdown, EvalError> {
    assert_eq!(responses.len(), qa.len(), "one response per question");
    let mut order: Vec<usize> = (0..qa.len()).collect();
    order.sort_by(|&a, &b| qa[a].qa_id.cmp(&qa[b].qa_id));
    let mut sum = 0.0;
    let mut scored = 0usize;
    let mut excluded = Vec::new();
    for i in order {
        let anchors = qa[i].anchor_texts();
        if anchors.is_empty() {
            excluded.push(qa[i].qa_id.clone());
            continue;
        }
        sum += em_count(responses[i].as_ref(), &anchors) as f64 / anchors.len() as f64;
        scored += 1;
    }
    if scored == 0 {
        return Err(EvalError::NoScorableQuestions);
    }
    Ok(MapBreakdown {
        map: sum / scored as f64,
        scored,
        excluded,
    })
}

pub fn map_memory_anchors<S: AsRef<str>>(responses: &[S], qa: &[QAItem]) -> Result<f64, EvalError> {
    map_breakdown(responses, qa).map(|b| b.map)
}
