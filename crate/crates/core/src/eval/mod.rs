//! Metrics and the ablation harness.
//!
//! [`run_ablation`] answers every QA item under one [`AblationSetting`] and
//! scores the responses. Per-question work runs on a small thread pool;
//! results are stored by input position and aggregated in `qa_id` order, so
//! reports are identical across runs for deterministic backends.

mod judge;
mod metrics;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::classifier::{classification_metrics, ClassificationMetrics, QuestionClassifier};
use crate::pipeline::{item_lookup, resolve, retrieve_ranked};
use crate::rerank::{RerankConfig, RerankError};
use crate::retriever::{rank_order, InvertedIndex, ScoredIndex};
use crate::store::{MemoryItem, MemoryType, QAItem};
use crate::synthesis::{
    build_prompt, generate_logged, CallBudget, GenerationBackend, GenerationParams, GenerationRequest,
    PromptTemplate,
};

pub use judge::{judge, parse_judge_reply, JudgeScores, JudgeSummary, JUDGE_TEMPLATE};
pub use metrics::{em_count, map_breakdown, map_memory_anchors, recall_at_k, MapBreakdown, Recall};
pub use report::{render_table, LatencyStats};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no question has any anchors")]
    NoScorableQuestions,
    #[error("setting {0} needs a trained classifier")]
    MissingClassifier(AblationSetting),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error("unknown {kind} {value:?}")]
    Parse { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pipeline {
    /// Classification re-ranking over per-type retrieval.
    #[serde(rename = "W-MC+R")]
    WMcR,
    /// Plain retrieval.
    #[serde(rename = "W/o-MC+W-R")]
    WoMcWR,
    /// Bare generator, no memories.
    #[serde(rename = "W/o-MC+R")]
    WoMcR,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::WMcR, Pipeline::WoMcWR, Pipeline::WoMcR];

    pub fn label(self) -> &'static str {
        match self {
            Pipeline::WMcR => "W-MC+R",
            Pipeline::WoMcWR => "W/o-MC+W-R",
            Pipeline::WoMcR => "W/o-MC+R",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pipeline {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "wmcr" => Ok(Pipeline::WMcR),
            "womcwr" => Ok(Pipeline::WoMcWR),
            "womcr" => Ok(Pipeline::WoMcR),
            _ => Err(EvalError::Parse {
                kind: "pipeline",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MemoryCondition {
    /// No memories in the prompt.
    Nr,
    /// A wrong but confusable memory.
    Ir,
    /// The gold reference memories.
    Cr,
    /// Whatever the pipeline retrieves.
    Retrieved,
}

impl MemoryCondition {
    pub const ALL: [MemoryCondition; 4] = [
        MemoryCondition::Nr,
        MemoryCondition::Ir,
        MemoryCondition::Cr,
        MemoryCondition::Retrieved,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MemoryCondition::Nr => "NR",
            MemoryCondition::Ir => "IR",
            MemoryCondition::Cr => "CR",
            MemoryCondition::Retrieved => "RETRIEVED",
        }
    }
}

impl fmt::Display for MemoryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MemoryCondition {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nr" => Ok(MemoryCondition::Nr),
            "ir" => Ok(MemoryCondition::Ir),
            "cr" => Ok(MemoryCondition::Cr),
            "retrieved" => Ok(MemoryCondition::Retrieved),
            _ => Err(EvalError::Parse {
                kind: "memory condition",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AblationSetting {
    pub pipeline: Pipeline,
    pub memory_condition: MemoryCondition,
}

impl AblationSetting {
    pub fn new(pipeline: Pipeline, memory_condition: MemoryCondition) -> Self {
        AblationSetting {
            pipeline,
            memory_condition,
        }
    }

    /// The condition that actually applies: the bare pipeline never sees
    /// memories.
    pub fn effective_condition(&self) -> MemoryCondition {
        if self.pipeline == Pipeline::WoMcR {
            MemoryCondition::Nr
        } else {
            self.memory_condition
        }
    }

    pub fn uses_retrieval(&self) -> bool {
        self.effective_condition() == MemoryCondition::Retrieved
    }

    pub fn uses_classifier(&self) -> bool {
        self.uses_retrieval() && self.pipeline == Pipeline::WMcR
    }
}

impl fmt::Display for AblationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.pipeline, self.memory_condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// `rerank.k` is the number of memories placed in the prompt.
    pub rerank: RerankConfig,
    pub recall_ks: Vec<usize>,
    pub seed: u64,
    pub max_in_flight: usize,
    /// Cap on backend attempts across the whole run.
    pub call_budget: Option<u64>,
    pub params: GenerationParams,
    pub template: PromptTemplate,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rerank: RerankConfig::default(),
            recall_ks: vec![1, 2, 3, 5],
            seed: 42,
            max_in_flight: 4,
            call_budget: None,
            params: GenerationParams::default(),
            template: PromptTemplate::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.rerank.validate()?;
        if self.recall_ks.iter().any(|&k| k == 0) {
            return Err(EvalError::Config("recall k must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(EvalError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    fn depth(&self) -> usize {
        self.recall_ks
            .iter()
            .copied()
            .chain([self.rerank.k])
            .max()
            .unwrap_or(self.rerank.k)
    }
}

/// Read-only state shared by all questions of a run.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub items: &'a [MemoryItem],
    pub indexes: &'a BTreeMap<String, InvertedIndex>,
    pub classifier: Option<&'a dyn QuestionClassifier>,
    /// Optional rubric judge for correctness and coherence.
    pub judge: Option<&'a dyn GenerationBackend>,
}

/// Outcome for one QA item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub qa_id: String,
    pub character_id: String,
    /// Ranking used for Recall@K, best first. Empty when retrieval is off.
    pub retrieved: Vec<String>,
    /// Ids of the memories placed in the prompt.
    pub memories: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_type: Option<MemoryType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_type: Option<MemoryType>,
    pub response: String,
    pub anchors_hit: usize,
    pub anchors_total: usize,
    pub attempts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: AblationSetting,
    pub n_questions: usize,
    pub k: usize,
    /// Empty when the setting does not retrieve.
    pub recall_at_k: BTreeMap<usize, f64>,
    /// Questions left out of Recall@K for lack of resolved references.
    pub recall_excluded: usize,
    /// `None` when no question has anchors.
    pub map_score: Option<f64>,
    pub map_excluded: Vec<String>,
    /// Questions whose retrieval or generation failed; they score 0.
    pub failed: usize,
    pub classification_metrics: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeSummary>,
    /// Wall-clock timings per stage. Not serialized: they differ between
    /// otherwise identical runs.
    #[serde(skip)]
    pub latency: BTreeMap<String, LatencyStats>,
    pub per_question: Vec<QuestionResult>,
}

struct Timings {
    retrieval_ms: Option<f64>,
    generation_ms: Option<f64>,
}

struct Shared<'a> {
    ctx: EvalContext<'a>,
    setting: AblationSetting,
    backend: &'a dyn GenerationBackend,
    cfg: &'a EvalConfig,
    budget: Option<CallBudget>,
    lookup: HashMap<&'a str, &'a MemoryItem>,
    by_character: BTreeMap<&'a str, Vec<&'a MemoryItem>>,
}

fn seeded_rng(seed: u64, qa_id: &str) -> ChaCha8Rng {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(qa_id.as_bytes())
        .finalize();
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")))
}

/// The most confusable wrong memory: the best-scoring non-reference item of
/// the same character, else a seeded random item of another character.
fn incorrect_memory<'a>(s: &Shared<'a>, q: &QAItem) -> Option<&'a MemoryItem> {
    if let Some(index) = s.ctx.indexes.get(&q.character_id) {
        let docs = index.docs();
        let scores = index.score_all(&q.question);
        let best = (0..docs.len())
            .filter(|&d| !q.reference_item_ids.contains(&docs[d].item_id))
            .min_by(|&a, &b| {
                rank_order(
                    (scores[a], docs[a].item_id.as_str()),
                    (scores[b], docs[b].item_id.as_str()),
                )
            });
        if let Some(d) = best {
            if let Some(it) = s.lookup.get(docs[d].item_id.as_str()) {
                return Some(*it);
            }
        }
    }
    let others: Vec<&Vec<&MemoryItem>> = s
        .by_character
        .iter()
        .filter(|(c, _)| **c != q.character_id)
        .map(|(_, v)| v)
        .collect();
    let mut rng = seeded_rng(s.cfg.seed, &q.qa_id);
    others.choose(&mut rng).and_then(|v| v.choose(&mut rng)).copied()
}

fn gold_type(s: &Shared<'_>, q: &QAItem) -> Option<MemoryType> {
    q.reference_item_ids
        .first()
        .and_then(|id| s.lookup.get(id.as_str()))
        .map(|it| it.mem_type)
}

fn evaluate_question(s: &Shared<'_>, q: &QAItem) -> (QuestionResult, Timings) {
    let mut result = QuestionResult {
        qa_id: q.qa_id.clone(),
        character_id: q.character_id.clone(),
        retrieved: Vec::new(),
        memories: Vec::new(),
        predicted_type: None,
        gold_type: gold_type(s, q),
        response: String::new(),
        anchors_hit: 0,
        anchors_total: q.anchors.len(),
        attempts: 0,
        error: None,
        judge: None,
    };
    let mut timings = Timings {
        retrieval_ms: None,
        generation_ms: None,
    };

    let memories: Vec<&MemoryItem> = match s.setting.effective_condition() {
        MemoryCondition::Nr => Vec::new(),
        MemoryCondition::Cr => q
            .reference_item_ids
            .iter()
            .filter_map(|id| s.lookup.get(id.as_str()).copied())
            .collect(),
        MemoryCondition::Ir => incorrect_memory(s, q).into_iter().collect(),
        MemoryCondition::Retrieved => {
            let Some(index) = s.ctx.indexes.get(&q.character_id) else {
                result.error = Some(format!("unknown character {:?}", q.character_id));
                return (result, timings);
            };
            let classifier = if s.setting.pipeline == Pipeline::WMcR {
                s.ctx.classifier
            } else {
                None
            };
            let t0 = Instant::now();
            let trace = retrieve_ranked(index, &s.lookup, &q.question, classifier, &s.cfg.rerank, s.cfg.depth());
            timings.retrieval_ms = Some(t0.elapsed().as_secs_f64() * 1e3);
            let trace = match trace {
                Ok(t) => t,
                Err(e) => {
                    result.error = Some(e.to_string());
                    return (result, timings);
                }
            };
            result.predicted_type = trace.distribution.map(|d| d.predicted());
            result.retrieved = trace.ranked.iter().map(|c| c.item_id.clone()).collect();
            match resolve(&trace.ranked[..trace.ranked.len().min(s.cfg.rerank.k)], &s.lookup) {
                Ok(m) => m,
                Err(e) => {
                    result.error = Some(e.to_string());
                    return (result, timings);
                }
            }
        }
    };
    result.memories = memories.iter().map(|m| m.item_id.clone()).collect();

    let owned: Vec<MemoryItem> = memories.into_iter().cloned().collect();
    let prompt = build_prompt(&s.cfg.template, &q.question, &owned);
    let request = GenerationRequest {
        prompt: &prompt,
        question: &q.question,
        memories: &owned,
        params: &s.cfg.params,
    };
    let t0 = Instant::now();
    let (outcome, attempts) = generate_logged(s.backend, &request, s.budget.as_ref());
    timings.generation_ms = Some(t0.elapsed().as_secs_f64() * 1e3);
    result.attempts = attempts.len();
    match outcome {
        Ok(text) => {
            result.anchors_hit = em_count(&text, &q.anchor_texts());
            result.response = text;
        }
        Err(e) => {
            warn!(qa_id = %q.qa_id, error = %e, "generation failed");
            result.error = Some(e.to_string());
        }
    }

    if let Some(judge_backend) = s.ctx.judge {
        if result.error.is_none() {
            result.judge = Some(judge(&q.question, &result.response, &q.answer, judge_backend, &s.cfg.params));
        }
    }
    (result, timings)
}

/// Answers and scores every question under `setting`.
///
/// A failed retrieval or generation is recorded on its question, which then
/// scores 0; the run continues.
pub fn run_ablation(
    ctx: EvalContext<'_>,
    qa: &[QAItem],
    setting: AblationSetting,
    backend: &dyn GenerationBackend,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if setting.uses_classifier() && ctx.classifier.is_none() {
        return Err(EvalError::MissingClassifier(setting));
    }
    let mut by_character: BTreeMap<&str, Vec<&MemoryItem>> = BTreeMap::new();
    for it in ctx.items {
        by_character.entry(it.character_id.as_str()).or_default().push(it);
    }
    let shared = Shared {
        ctx,
        setting,
        backend,
        cfg,
        budget: cfg.call_budget.map(CallBudget::new),
        lookup: item_lookup(ctx.items),
        by_character,
    };

    let started = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<(QuestionResult, Timings)>>> =
        Mutex::new((0..qa.len()).map(|_| None).collect());
    let workers = cfg.max_in_flight.min(qa.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= qa.len() {
                    break;
                }
                let out = evaluate_question(&shared, &qa[i]);
                slots.lock().expect("result lock")[i] = Some(out);
            });
        }
    });
    let (per_question, timings): (Vec<QuestionResult>, Vec<Timings>) = slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|s| s.expect("every question evaluated"))
        .unzip();

    let mut recall = BTreeMap::new();
    let mut recall_excluded = 0;
    if setting.uses_retrieval() {
        let retrieved: Vec<Vec<String>> = per_question.iter().map(|r| r.retrieved.clone()).collect();
        let gold: Vec<Vec<String>> = qa.iter().map(|q| q.reference_item_ids.clone()).collect();
        let mut ks = cfg.recall_ks.clone();
        ks.sort_unstable();
        ks.dedup();
        for k in ks {
            let r = recall_at_k(&retrieved, &gold, k);
            recall_excluded = r.excluded;
            recall.insert(k, r.value);
        }
    }

    let responses: Vec<&str> = per_question.iter().map(|r| r.response.as_str()).collect();
    let (map_score, map_excluded) = match map_breakdown(&responses, qa) {
        Ok(b) => (Some(b.map), b.excluded),
        Err(_) => (None, qa.iter().map(|q| q.qa_id.clone()).collect()),
    };

    let classification = if setting.uses_classifier() {
        let pairs: Vec<(MemoryType, MemoryType)> = per_question
            .iter()
            .filter_map(|r| Some((r.gold_type?, r.predicted_type?)))
            .collect();
        (!pairs.is_empty()).then(|| classification_metrics(&pairs))
    } else {
        None
    };

    let judge_summary = ctx
        .judge
        .map(|_| JudgeSummary::from_scores(per_question.iter().map(|r| r.judge.as_ref())));

    let mut latency = BTreeMap::new();
    let retrieval: Vec<f64> = timings.iter().filter_map(|t| t.retrieval_ms).collect();
    let generation: Vec<f64> = timings.iter().filter_map(|t| t.generation_ms).collect();
    for (stage, samples) in [("retrieval", retrieval), ("generation", generation)] {
        if let Some(s) = LatencyStats::from_samples(samples) {
            latency.insert(stage.to_string(), s);
        }
    }

    let failed = per_question.iter().filter(|r| r.error.is_some()).count();
    info!(
        %setting,
        questions = qa.len(),
        failed,
        map = ?map_score,
        elapsed_ms = started.elapsed().as_millis() as u64,
        "ablation finished"
    );
    Ok(EvalReport {
        setting,
        n_questions: qa.len(),
        k: cfg.rerank.k,
        recall_at_k: recall,
        recall_excluded,
        map_score,
        map_excluded,
        failed,
        classification_metrics: classification,
        judge: judge_summary,
        latency,
        per_question,
    })
}
