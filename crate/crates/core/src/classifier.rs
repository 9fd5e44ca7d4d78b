//! Memory classification: does a question need semantic or episodic memory?
//!
//! The native model is multinomial naive Bayes over the shared tokenizer
//! with additive smoothing. Anything else (an LLM prompted to pick a type,
//! an external model) plugs in through [`QuestionClassifier`].

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::store::MemoryType;
use crate::synthesis::{generate, GenerationBackend, GenerationParams, GenerationRequest};
use crate::text::analyze;

pub const MODEL_FORMAT: &str = "memq-naive-bayes";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no training examples for class {0}")]
    InsufficientData(MemoryType),
    #[error("smoothing must be positive and finite, got {0}")]
    BadSmoothing(f64),
    #[error("unsupported model file: {0}")]
    Format(String),
    #[error("malformed labeled question on line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Probability over the two memory types for one question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub p_semantic: f64,
    pub p_episodic: f64,
}

impl ClassDistribution {
    pub const UNIFORM: ClassDistribution = ClassDistribution {
        p_semantic: 0.5,
        p_episodic: 0.5,
    };

    pub fn certain(t: MemoryType) -> Self {
        match t {
            MemoryType::Semantic => ClassDistribution {
                p_semantic: 1.0,
                p_episodic: 0.0,
            },
            MemoryType::Episodic => ClassDistribution {
                p_semantic: 0.0,
                p_episodic: 1.0,
            },
        }
    }

    /// Two-class softmax of log scores.
    pub fn from_log_scores(semantic: f64, episodic: f64) -> Self {
        ClassDistribution {
            p_semantic: logistic(semantic - episodic),
            p_episodic: logistic(episodic - semantic),
        }
    }

    pub fn prob(&self, t: MemoryType) -> f64 {
        match t {
            MemoryType::Semantic => self.p_semantic,
            MemoryType::Episodic => self.p_episodic,
        }
    }

    /// Argmax; semantic wins ties.
    pub fn predicted(&self) -> MemoryType {
        if self.p_semantic >= self.p_episodic {
            MemoryType::Semantic
        } else {
            MemoryType::Episodic
        }
    }

    /// Probability of the predicted class.
    pub fn confidence(&self) -> f64 {
        self.prob(self.predicted())
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Anything that maps a question to a memory-type distribution.
pub trait QuestionClassifier: Send + Sync {
    fn classify(&self, question: &str) -> ClassDistribution;
}

/// A question with its gold memory type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuestion {
    pub label: MemoryType,
    pub question: String,
}

/// Multinomial naive Bayes over the two memory types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    format: String,
    version: u32,
    vocabulary: BTreeMap<String, usize>,
    /// Indexed by [`MemoryType::index`].
    log_priors: [f64; 2],
    log_likelihoods: [Vec<f64>; 2],
    smoothing: f64,
}

impl NaiveBayes {
    pub fn train(examples: &[LabeledQuestion], smoothing: f64) -> Result<Self, ClassifierError> {
        if !(smoothing.is_finite() && smoothing > 0.0) {
            return Err(ClassifierError::BadSmoothing(smoothing));
        }
        let mut docs = [0usize; 2];
        for ex in examples {
            docs[ex.label.index()] += 1;
        }
        for t in MemoryType::ALL {
            if docs[t.index()] == 0 {
                return Err(ClassifierError::InsufficientData(t));
            }
        }

        let tokenized: Vec<(usize, Vec<String>)> = examples
            .iter()
            .map(|ex| (ex.label.index(), analyze(&ex.question).tokens))
            .collect();
        let mut vocabulary = BTreeMap::new();
        for (_, toks) in &tokenized {
            for t in toks {
                if !vocabulary.contains_key(t) {
                    vocabulary.insert(t.clone(), 0);
                }
            }
        }
        for (i, v) in vocabulary.values_mut().enumerate() {
            *v = i;
        }
        let v = vocabulary.len();

        let mut counts = [vec![0u64; v], vec![0u64; v]];
        let mut totals = [0u64; 2];
        for (class, toks) in &tokenized {
            for t in toks {
                counts[*class][vocabulary[t]] += 1;
                totals[*class] += 1;
            }
        }

        let n = examples.len() as f64;
        let log_priors = [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()];
        let log_likelihoods = [0, 1].map(|c| {
            let denom = totals[c] as f64 + smoothing * v as f64;
            counts[c]
                .iter()
                .map(|&k| ((k as f64 + smoothing) / denom).ln())
                .collect::<Vec<_>>()
        });

        Ok(NaiveBayes {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            vocabulary,
            log_priors,
            log_likelihoods,
            smoothing,
        })
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn log_prior(&self, t: MemoryType) -> f64 {
        self.log_priors[t.index()]
    }

    pub fn log_likelihood(&self, t: MemoryType, token: &str) -> Option<f64> {
        self.vocabulary
            .get(token)
            .map(|&i| self.log_likelihoods[t.index()][i])
    }

    /// Joint log score per class. Tokens outside the vocabulary are skipped.
    pub fn log_scores(&self, question: &str) -> [f64; 2] {
        let mut scores = self.log_priors;
        for tok in analyze(question).tokens {
            if let Some(&i) = self.vocabulary.get(&tok) {
                scores[0] += self.log_likelihoods[0][i];
                scores[1] += self.log_likelihoods[1][i];
            }
        }
        scores
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), ClassifierError> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self, ClassifierError> {
        let model: NaiveBayes = serde_json::from_reader(r)?;
        if model.format != MODEL_FORMAT {
            return Err(ClassifierError::Format(format!("format {:?}", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(ClassifierError::Format(format!("version {}", model.version)));
        }
        let v = model.vocabulary.len();
        if v == 0 || model.log_likelihoods.iter().any(|l| l.len() != v) {
            return Err(ClassifierError::Format("inconsistent vocabulary".into()));
        }
        Ok(model)
    }
}

impl QuestionClassifier for NaiveBayes {
    fn classify(&self, question: &str) -> ClassDistribution {
        let [s, e] = self.log_scores(question);
        ClassDistribution::from_log_scores(s, e)
    }
}

pub const CLASSIFY_INSTRUCTION: &str = "判断回答下面的问题需要哪一类记忆。\
语义记忆(semantic)：个人资料、社会关系等不依赖具体经历的事实。\
情景记忆(episodic)：具体的事件和对话经历。\
只回答 semantic 或 episodic。\n问题：";

/// Instruction-prompted classifier over any generation backend.
///
/// The reply is mapped to a one-hot distribution. Replies naming neither
/// or both types, and backend failures, yield the uniform distribution,
/// which makes the reranker fall back to raw retrieval order.
pub struct PromptedClassifier<B> {
    backend: B,
    params: GenerationParams,
}

impl<B: GenerationBackend> PromptedClassifier<B> {
    pub fn new(backend: B) -> Self {
        PromptedClassifier {
            backend,
            params: GenerationParams {
                max_tokens: 8,
                ..GenerationParams::default()
            },
        }
    }

    pub fn with_params(backend: B, params: GenerationParams) -> Self {
        PromptedClassifier { backend, params }
    }
}

/// Reads a memory type out of a free-text reply.
pub fn parse_type_reply(reply: &str) -> Option<MemoryType> {
    let r = reply.to_lowercase();
    let sem = r.contains("semantic") || r.contains("语义");
    let epi = r.contains("episodic") || r.contains("情景");
    match (sem, epi) {
        (true, false) => Some(MemoryType::Semantic),
        (false, true) => Some(MemoryType::Episodic),
        _ => None,
    }
}

impl<B: GenerationBackend> QuestionClassifier for PromptedClassifier<B> {
    fn classify(&self, question: &str) -> ClassDistribution {
        let prompt = format!("{CLASSIFY_INSTRUCTION}{question}");
        let request = GenerationRequest {
            prompt: &prompt,
            question,
            memories: &[],
            params: &self.params,
        };
        match generate(&self.backend, &request, None) {
            Ok(g) => match parse_type_reply(&g.text) {
                Some(t) => ClassDistribution::certain(t),
                None => {
                    warn!(reply = %g.text, "unparseable classification reply");
                    ClassDistribution::UNIFORM
                }
            },
            Err(e) => {
                warn!(error = %e, "classification backend failed");
                ClassDistribution::UNIFORM
            }
        }
    }
}

/// Per-class precision/recall/F1 and support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: MemoryType,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Support-weighted averages, plus the per-class breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`, indexed by [`MemoryType::index`].
    pub confusion: [[usize; 2]; 2],
}

/// Metrics from (gold, predicted) pairs. A class never predicted gets
/// precision 0.
pub fn classification_metrics(pairs: &[(MemoryType, MemoryType)]) -> ClassificationMetrics {
    let mut confusion = [[0usize; 2]; 2];
    for (gold, pred) in pairs {
        confusion[gold.index()][pred.index()] += 1;
    }
    let n = pairs.len();
    let mut per_class = Vec::new();
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for t in MemoryType::ALL {
        let c = t.index();
        let tp = confusion[c][c] as f64;
        let predicted = (confusion[0][c] + confusion[1][c]) as f64;
        let support = confusion[c][0] + confusion[c][1];
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if n > 0 {
            let w = support as f64 / n as f64;
            wp += w * precision;
            wr += w * recall;
            wf += w * f1;
        }
        per_class.push(ClassMetrics {
            label: t,
            precision,
            recall,
            f1,
            support,
        });
    }
    let correct = confusion[0][0] + confusion[1][1];
    ClassificationMetrics {
        precision: wp,
        recall: wr,
        f1: wf,
        accuracy: if n > 0 { correct as f64 / n as f64 } else { 0.0 },
        per_class,
        confusion,
    }
}

pub fn evaluate_classifier(
    model: &dyn QuestionClassifier,
    test: &[LabeledQuestion],
) -> ClassificationMetrics {
    let pairs: Vec<_> = test
        .iter()
        .map(|ex| (ex.label, model.classify(&ex.question).predicted()))
        .collect();
    classification_metrics(&pairs)
}

/// Reads `label<TAB>question` lines. Blank lines and `#` comments skipped.
pub fn read_labeled<R: Read>(r: R) -> Result<Vec<LabeledQuestion>, ClassifierError> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, question) = line.split_once('\t').ok_or_else(|| ClassifierError::BadRecord {
            line: i + 1,
            reason: "expected label<TAB>question".into(),
        })?;
        let label = label
            .parse::<MemoryType>()
            .map_err(|reason| ClassifierError::BadRecord { line: i + 1, reason })?;
        out.push(LabeledQuestion {
            label,
            question: question.to_string(),
        });
    }
    Ok(out)
}

pub fn write_labeled<W: Write>(examples: &[LabeledQuestion], mut w: W) -> std::io::Result<()> {
    for ex in examples {
        let q = ex.question.replace(['\t', '\n'], " ");
        writeln!(w, "{}\t{}", ex.label, q)?;
    }
    Ok(())
}
