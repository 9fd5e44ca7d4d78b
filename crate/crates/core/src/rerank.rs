//! Classification-weighted re-ranking of the per-type candidate pool.
//!
//! Each candidate gets `alpha * p + beta * sigmoid(s)`, where `s` is its raw
//! retrieval score and `p` is the classifier's probability for the
//! candidate's memory type. The top `k` by that composite score survive.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassDistribution, QuestionClassifier};
use crate::retriever::{score_cmp, RankedCandidate};

#[derive(Debug, Error, PartialEq)]
pub enum RerankError {
    #[error("empty candidate pool")]
    EmptyPool,
    #[error("invalid rerank config: {0}")]
    Config(String),
    #[error("{expected} probabilities needed, got {got}")]
    ProbabilityCount { expected: usize, got: usize },
}

/// Where the per-candidate probability comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilitySource {
    /// The question's probability of the candidate's known memory type.
    #[default]
    QueryType,
    /// The classifier run on the memory text, probability of the question's
    /// predicted type.
    MemoryText,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub probability_source: ProbabilitySource,
    /// Min-max scale raw scores within the pool before the sigmoid.
    pub normalize_scores: bool,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            alpha: 0.5,
            beta: 0.5,
            k: 3,
            probability_source: ProbabilitySource::QueryType,
            normalize_scores: false,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<(), RerankError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RerankError::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.k == 0 {
            return Err(RerankError::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `alpha * p + beta * sigmoid(s)`.
pub fn composite_score(p: f64, s: f64, cfg: &RerankConfig) -> f64 {
    cfg.alpha * p + cfg.beta * sigmoid(s)
}

/// Descending composite, then descending raw score, then ascending item id.
fn candidate_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    let ca = a.composite_score.unwrap_or(f64::NEG_INFINITY);
    let cb = b.composite_score.unwrap_or(f64::NEG_INFINITY);
    score_cmp(cb, ca)
        .then_with(|| score_cmp(b.raw_score, a.raw_score))
        .then_with(|| a.item_id.cmp(&b.item_id))
}

fn scaled_scores(pool: &[RankedCandidate], normalize: bool) -> Vec<f64> {
    let raw: Vec<f64> = pool.iter().map(|c| c.raw_score).collect();
    if !normalize {
        return raw;
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        raw.iter().map(|s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

/// Re-ranks with one probability per pool entry.
pub fn rerank_with_probabilities(
    pool: &[RankedCandidate],
    probabilities: &[f64],
    cfg: &RerankConfig,
) -> Result<Vec<RankedCandidate>, RerankError> {
    if pool.is_empty() {
        return Err(RerankError::EmptyPool);
    }
    if probabilities.len() != pool.len() {
        return Err(RerankError::ProbabilityCount {
            expected: pool.len(),
            got: probabilities.len(),
        });
    }
    let scores = scaled_scores(pool, cfg.normalize_scores);
    let mut out: Vec<RankedCandidate> = pool
        .iter()
        .zip(probabilities.iter().zip(&scores))
        .map(|(c, (&p, &s))| RankedCandidate {
            composite_score: Some(composite_score(p, s, cfg)),
            ..c.clone()
        })
        .collect();
    out.sort_by(candidate_order);
    out.truncate(cfg.k);
    Ok(out)
}

/// Re-ranks the pool using the question's class distribution: each
/// candidate's probability is `dist.prob(candidate.mem_type)`.
pub fn rerank(
    pool: &[RankedCandidate],
    dist: &ClassDistribution,
    cfg: &RerankConfig,
) -> Result<Vec<RankedCandidate>, RerankError> {
    let probs: Vec<f64> = pool.iter().map(|c| dist.prob(c.mem_type)).collect();
    rerank_with_probabilities(pool, &probs, cfg)
}

/// Re-ranks by classifying each memory's own text: the probability is that
/// the memory belongs to the question's predicted type.
pub fn rerank_by_memory_text(
    pool: &[RankedCandidate],
    texts: &[&str],
    question_dist: &ClassDistribution,
    classifier: &dyn QuestionClassifier,
    cfg: &RerankConfig,
) -> Result<Vec<RankedCandidate>, RerankError> {
    if texts.len() != pool.len() {
        return Err(RerankError::ProbabilityCount {
            expected: pool.len(),
            got: texts.len(),
        });
    }
    let target = question_dist.predicted();
    let probs: Vec<f64> = texts
        .iter()
        .map(|t| classifier.classify(t).prob(target))
        .collect();
    rerank_with_probabilities(pool, &probs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::MemoryType;
    use proptest::prelude::*;

    fn cand(id: &str, t: MemoryType, s: f64) -> RankedCandidate {
        RankedCandidate {
            item_id: id.into(),
            raw_score: s,
            mem_type: t,
            composite_score: None,
        }
    }

    #[test]
    fn composite_examples() {
        let cfg = RerankConfig::default();
        assert_eq!(composite_score(1.0, 0.0, &cfg), 0.75);
        assert!((composite_score(0.0, 1e6, &cfg) - 0.5).abs() < 1e-15);
        // sigmoid(1) = 0.7310585786300049
        let v = composite_score(0.8, 1.0, &cfg);
        assert!((v - 0.7655292893150025).abs() < 1e-12, "{v}");
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn certain_semantic_dominates() {
        let pool = vec![
            cand("e1", MemoryType::Episodic, 2.0),
            cand("s1", MemoryType::Semantic, 2.0),
            cand("e2", MemoryType::Episodic, 2.0),
            cand("s2", MemoryType::Semantic, 2.0),
        ];
        let cfg = RerankConfig { k: 4, ..Default::default() };
        let out = rerank(&pool, &ClassDistribution::certain(MemoryType::Semantic), &cfg).unwrap();
        let types: Vec<_> = out.iter().map(|c| c.mem_type).collect();
        assert_eq!(
            types,
            [MemoryType::Semantic, MemoryType::Semantic, MemoryType::Episodic, MemoryType::Episodic]
        );
        assert_eq!(out[0].item_id, "s1");
    }

    #[test]
    fn empty_pool_and_bad_config() {
        let cfg = RerankConfig::default();
        assert_eq!(rerank(&[], &ClassDistribution::UNIFORM, &cfg), Err(RerankError::EmptyPool));
        assert!(RerankConfig { alpha: 1.5, ..cfg }.validate().is_err());
        assert!(RerankConfig { k: 0, ..cfg }.validate().is_err());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn saturated_sigmoid_falls_back_to_raw_score() {
        // sigmoid(40) and sigmoid(50) are both 1.0 in f64
        assert_eq!(sigmoid(40.0), sigmoid(50.0));
        let pool = vec![cand("a", MemoryType::Episodic, 40.0), cand("b", MemoryType::Episodic, 50.0)];
        let out = rerank(&pool, &ClassDistribution::UNIFORM, &RerankConfig::default()).unwrap();
        assert_eq!(out[0].item_id, "b");
    }

    #[test]
    fn min_max_normalization() {
        let pool = vec![cand("a", MemoryType::Episodic, 10.0), cand("b", MemoryType::Semantic, 20.0)];
        let cfg = RerankConfig { normalize_scores: true, ..Default::default() };
        let out = rerank(&pool, &ClassDistribution::UNIFORM, &cfg).unwrap();
        assert_eq!(out[0].item_id, "b");
        assert_eq!(out[0].composite_score, Some(composite_score(0.5, 1.0, &cfg)));
        assert_eq!(out[1].composite_score, Some(composite_score(0.5, 0.0, &cfg)));
    }

    struct Keyword;
    impl QuestionClassifier for Keyword {
        fn classify(&self, q: &str) -> ClassDistribution {
            if q.contains("when") {
                ClassDistribution::certain(MemoryType::Episodic)
            } else {
                ClassDistribution::certain(MemoryType::Semantic)
            }
        }
    }

    #[test]
    fn memory_text_mode_uses_classifier_on_items() {
        let pool = vec![cand("a", MemoryType::Semantic, 1.0), cand("b", MemoryType::Semantic, 1.0)];
        let texts = ["job title", "when we met"];
        let dist = ClassDistribution::certain(MemoryType::Episodic);
        let out = rerank_by_memory_text(&pool, &texts, &dist, &Keyword, &RerankConfig::default()).unwrap();
        assert_eq!(out[0].item_id, "b");
    }

    fn pool_strategy() -> impl Strategy<Value = Vec<RankedCandidate>> {
        proptest::collection::vec((any::<bool>(), -5.0f64..15.0, 0u32..3), 1..12).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (sem, s, round))| {
                    // rounding makes raw-score ties common
                    let s = if round == 0 { s.round() } else { s };
                    let t = if sem { MemoryType::Semantic } else { MemoryType::Episodic };
                    cand(&format!("m{i:02}"), t, s)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matches_sort_oracle(pool in pool_strategy(), p in 0.0f64..=1.0, k in 1usize..8) {
            let dist = ClassDistribution { p_semantic: p, p_episodic: 1.0 - p };
            let cfg = RerankConfig { k, ..Default::default() };
            let got = rerank(&pool, &dist, &cfg).unwrap();

            let mut scored: Vec<(f64, f64, String)> = pool
                .iter()
                .map(|c| {
                    let pr = if c.mem_type == MemoryType::Semantic { p } else { 1.0 - p };
                    (0.5 * pr + 0.5 / (1.0 + (-c.raw_score).exp()), c.raw_score, c.item_id.clone())
                })
                .collect();
            scored.sort_by(|a, b| {
                b.0.partial_cmp(&a.0).unwrap()
                    .then(b.1.partial_cmp(&a.1).unwrap())
                    .then(a.2.cmp(&b.2))
            });
            let expected: Vec<String> = scored.into_iter().take(k).map(|x| x.2).collect();
            let ids: Vec<String> = got.iter().map(|c| c.item_id.clone()).collect();
            prop_assert_eq!(ids, expected);
            prop_assert_eq!(got.len(), k.min(pool.len()));
            for c in &got {
                let v = c.composite_score.unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!(pool.iter().any(|x| x.item_id == c.item_id));
            }
        }

        #[test]
        fn uniform_distribution_keeps_raw_order(pool in pool_strategy(), k in 1usize..8) {
            let cfg = RerankConfig { k, ..Default::default() };
            let got = rerank(&pool, &ClassDistribution::UNIFORM, &cfg).unwrap();
            let mut raw = pool.clone();
            raw.sort_by(|a, b| b.raw_score.partial_cmp(&a.raw_score).unwrap().then(a.item_id.cmp(&b.item_id)));
            let expected: Vec<_> = raw.iter().take(k).map(|c| c.item_id.clone()).collect();
            let ids: Vec<_> = got.iter().map(|c| c.item_id.clone()).collect();
            prop_assert_eq!(ids, expected);
        }

        #[test]
        fn strictly_increasing(p in 0.0f64..0.99, s in -10.0f64..10.0, dp in 0.001f64..0.01, ds in 0.01f64..1.0) {
            let cfg = RerankConfig::default();
            prop_assert!(composite_score(p + dp, s, &cfg) > composite_score(p, s, &cfg));
            prop_assert!(composite_score(p, s + ds, &cfg) > composite_score(p, s, &cfg));
        }
    }
}
