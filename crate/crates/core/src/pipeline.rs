//! Classification, retrieval and re-ranking for one question.

use std::collections::HashMap;

use thiserror::Error;

use crate::classifier::{ClassDistribution, QuestionClassifier};
use crate::rerank::{rerank, rerank_by_memory_text, ProbabilitySource, RerankConfig, RerankError};
use crate::retriever::{retrieve, retrieve_per_type, RankedCandidate, RetrieveError, ScoredIndex};
use crate::store::MemoryItem;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error("index refers to unknown item {0}")]
    UnknownItem(String),
}

/// Intermediate state of one retrieval, kept for display and reports.
#[derive(Debug, Clone)]
pub struct RetrievalTrace {
    /// Present when a classifier took part.
    pub distribution: Option<ClassDistribution>,
    /// Per-type candidate pool with composite scores, in composite order
    /// (empty without a classifier).
    pub pool: Vec<RankedCandidate>,
    /// Final ranking, best first.
    pub ranked: Vec<RankedCandidate>,
}

/// Ranks up to `depth` memories for `question`.
///
/// With a classifier, the top `depth` items of each memory type form the
/// pool, which is re-ranked by composite score. Without one, this is plain
/// top-`depth` retrieval.
pub fn retrieve_ranked(
    index: &dyn ScoredIndex,
    items: &HashMap<&str, &MemoryItem>,
    question: &str,
    classifier: Option<&dyn QuestionClassifier>,
    cfg: &RerankConfig,
    depth: usize,
) -> Result<RetrievalTrace, PipelineError> {
    let Some(classifier) = classifier else {
        return Ok(RetrievalTrace {
            distribution: None,
            pool: Vec::new(),
            ranked: retrieve(index, question, depth)?,
        });
    };
    let dist = classifier.classify(question);
    let pool = retrieve_per_type(index, question, depth)?;
    let cfg = RerankConfig { k: pool.len(), ..*cfg };
    let scored = match cfg.probability_source {
        ProbabilitySource::QueryType => rerank(&pool, &dist, &cfg)?,
        ProbabilitySource::MemoryText => {
            let texts = pool
                .iter()
                .map(|c| {
                    items
                        .get(c.item_id.as_str())
                        .map(|it| it.text.as_str())
                        .ok_or_else(|| PipelineError::UnknownItem(c.item_id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rerank_by_memory_text(&pool, &texts, &dist, classifier, &cfg)?
        }
    };
    let ranked = scored[..depth.min(scored.len())].to_vec();
    Ok(RetrievalTrace {
        distribution: Some(dist),
        pool: scored,
        ranked,
    })
}

/// Resolves ranked candidates to memory items, in rank order.
pub fn resolve<'a>(
    ranked: &[RankedCandidate],
    items: &HashMap<&str, &'a MemoryItem>,
) -> Result<Vec<&'a MemoryItem>, PipelineError> {
    ranked
        .iter()
        .map(|c| {
            items
                .get(c.item_id.as_str())
                .copied()
                .ok_or_else(|| PipelineError::UnknownItem(c.item_id.clone()))
        })
        .collect()
}

pub fn item_lookup(items: &[MemoryItem]) -> HashMap<&str, &MemoryItem> {
    items.iter().map(|it| (it.item_id.as_str(), it)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::tests::item;
    use crate::retriever::InvertedIndex;
    use crate::store::Subtype;

    struct Fixed(ClassDistribution);
    impl QuestionClassifier for Fixed {
        fn classify(&self, _: &str) -> ClassDistribution {
            self.0
        }
    }

    #[test]
    fn uniform_classifier_matches_plain_top1() {
        let items = vec![
            item("a", Subtype::Profile, "wang wei的职业: 摄影师"),
            item("b", Subtype::Event, "wang wei 去了 杭州 拍照"),
            item("c", Subtype::Dialogue, "wang wei: 职业 摄影"),
        ];
        let idx = InvertedIndex::build(&items).unwrap();
        let lookup = item_lookup(&items);
        let cfg = RerankConfig::default();
        let plain = retrieve_ranked(&idx, &lookup, "wang wei 职业", None, &cfg, 1).unwrap();
        let uni = Fixed(ClassDistribution::UNIFORM);
        let reranked = retrieve_ranked(&idx, &lookup, "wang wei 职业", Some(&uni), &cfg, 1).unwrap();
        assert_eq!(plain.ranked[0].item_id, reranked.ranked[0].item_id);
        assert!(plain.pool.is_empty());
        assert_eq!(reranked.pool.len(), 2);
        assert!(reranked.pool.iter().all(|c| c.composite_score.is_some()));
    }

    #[test]
    fn confident_classifier_promotes_type() {
        let items = vec![
            item("a", Subtype::Profile, "摄影"),
            item("b", Subtype::Event, "摄影 摄影 杭州"),
        ];
        let idx = InvertedIndex::build(&items).unwrap();
        let lookup = item_lookup(&items);
        let sem = Fixed(ClassDistribution::certain(crate::store::MemoryType::Semantic));
        let t = retrieve_ranked(&idx, &lookup, "摄影", Some(&sem), &RerankConfig::default(), 1).unwrap();
        assert_eq!(t.ranked[0].item_id, "a");
        let got = resolve(&t.ranked, &lookup).unwrap();
        assert_eq!(got[0].text, "摄影");
    }
}
