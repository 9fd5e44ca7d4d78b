//! Answer synthesis: prompt assembly and pluggable generation backends.

mod mock;
pub mod net;
mod remote;
mod transcript;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::store::MemoryItem;

pub use mock::{mock_extractive_generate, truncate_answer, MockExtractive, NO_MEMORY_RESPONSE};
pub use remote::{ChatCompletionsBackend, API_KEY_ENV};
pub use transcript::{transcript_key, RecordingBackend, ReplayBackend, Transcript, TranscriptStore};

/// Word limit written into answer prompts.
pub const WORD_LIMIT: usize = 50;

/// Rendered in the memories slot when no memory is supplied.
pub const NO_MEMORY_MARKER: &str = "[no memory provided]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("placeholder {{{name}}} appears {count} times, expected exactly once")]
    Placeholder { name: &'static str, count: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("endpoint returned {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("call budget of {cap} exhausted")]
    BudgetExceeded { cap: u64 },
    #[error("network access is disabled")]
    NetworkDenied,
    #[error("no recorded transcript for key {0}")]
    ReplayMiss(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl GenerationError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GenerationError::Timeout
                | GenerationError::RateLimited { .. }
                | GenerationError::Endpoint { .. }
                | GenerationError::Transport(_)
        )
    }
}

const PLACEHOLDERS: [&str; 3] = ["question", "memories", "word_limit"];

/// Answer prompt with `{question}`, `{memories}` and `{word_limit}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    body: String,
}

const DEFAULT_BODY: &str = "你是一个拥有长期记忆的人。下面是与问题相关的个人记忆，请结合这些记忆回答问题。\n\
如果记忆中没有相关信息，请如实说明，不要编造。回答不超过{word_limit}个词。\n\
\n\
记忆：\n\
{memories}\n\
\n\
问题：{question}\n\
回答：";

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        for name in PLACEHOLDERS {
            let count = body.matches(&format!("{{{name}}}")).count();
            if count != 1 {
                return Err(TemplateError::Placeholder { name, count });
            }
        }
        Ok(PromptTemplate {
            template_id: template_id.into(),
            body,
        })
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Substitutes the three slots in a single left-to-right pass, so slot
    /// syntax inside the values is left alone.
    pub fn render(&self, question: &str, memories: &str, word_limit: usize) -> String {
        let word_limit = word_limit.to_string();
        let mut out = String::with_capacity(self.body.len() + question.len() + memories.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let hit = PLACEHOLDERS
                .iter()
                .find(|name| tail[1..].starts_with(*name) && tail[1 + name.len()..].starts_with('}'));
            match hit {
                Some(&name) => {
                    out.push_str(match name {
                        "question" => question,
                        "memories" => memories,
                        _ => &word_limit,
                    });
                    rest = &tail[name.len() + 2..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new("answer-v1", DEFAULT_BODY).expect("default template is valid")
    }
}

/// Numbered list in rank order, each line tagged with the memory subtype.
pub fn render_memories(memories: &[MemoryItem]) -> String {
    if memories.is_empty() {
        return NO_MEMORY_MARKER.to_string();
    }
    memories
        .iter()
        .enumerate()
        .map(|(i, m)| format!("{}. [{}] {}", i + 1, m.subtype.tag(), m.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_prompt(template: &PromptTemplate, question: &str, memories: &[MemoryItem]) -> String {
    template.render(question.trim(), &render_memories(memories), WORD_LIMIT)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(with = "millis")]
    pub timeout: Duration,
    /// Extra attempts after the first.
    pub retries: u32,
    /// First backoff delay; doubles per retry unless the server names one.
    #[serde(with = "millis")]
    pub backoff: Duration,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_tokens: 256,
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Everything a backend may look at for one answer.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub question: &'a str,
    pub memories: &'a [MemoryItem],
    pub params: &'a GenerationParams,
}

/// A text generator. Implementations must be safe to call concurrently and
/// must return within the request timeout.
pub trait GenerationBackend: Send + Sync {
    /// Stable identity, used in transcript keys.
    fn name(&self) -> &str;
    /// True if calls leave the process.
    fn is_remote(&self) -> bool {
        false
    }
    /// One attempt, no retries.
    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerationError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn is_remote(&self) -> bool {
        (**self).is_remote()
    }
    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerationError> {
        (**self).complete(request)
    }
}

/// Caps the total number of backend attempts across a run.
#[derive(Debug)]
pub struct CallBudget {
    cap: u64,
    used: AtomicU64,
}

impl CallBudget {
    pub fn new(cap: u64) -> Self {
        CallBudget {
            cap,
            used: AtomicU64::new(0),
        }
    }

    fn take(&self) -> Result<(), GenerationError> {
        let prev = self.used.fetch_add(1, Ordering::SeqCst);
        if prev >= self.cap {
            self.used.fetch_sub(1, Ordering::SeqCst);
            Err(GenerationError::BudgetExceeded { cap: self.cap })
        } else {
            Ok(())
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: u32,
    pub latency_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub attempts: Vec<AttemptLog>,
    pub latency_ms: f64,
}

/// Calls the backend, retrying retryable errors up to `params.retries`
/// times. Rate-limit responses that name a delay are honored; otherwise the
/// delay starts at `params.backoff` and doubles.
pub fn generate(
    backend: &dyn GenerationBackend,
    request: &GenerationRequest<'_>,
    budget: Option<&CallBudget>,
) -> Result<Generation, GenerationError> {
    let started = Instant::now();
    let (result, attempts) = generate_logged(backend, request, budget);
    result.map(|text| Generation {
        text,
        attempts,
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// [`generate`], returning the attempt log whether or not it succeeded.
pub fn generate_logged(
    backend: &dyn GenerationBackend,
    request: &GenerationRequest<'_>,
    budget: Option<&CallBudget>,
) -> (Result<String, GenerationError>, Vec<AttemptLog>) {
    let mut attempts = Vec::new();
    let mut delay = request.params.backoff;
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        if let Some(b) = budget {
            if let Err(e) = b.take() {
                return (Err(e), attempts);
            }
        }
        let t0 = Instant::now();
        let result = backend.complete(request);
        let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok(text) => {
                debug!(backend = backend.name(), attempt, latency_ms, "generation ok");
                attempts.push(AttemptLog {
                    attempt,
                    latency_ms,
                    error: None,
                });
                return (Ok(text), attempts);
            }
            Err(e) => {
                warn!(backend = backend.name(), attempt, latency_ms, error = %e, "generation failed");
                attempts.push(AttemptLog {
                    attempt,
                    latency_ms,
                    error: Some(e.to_string()),
                });
                if !e.is_retryable() || attempt > request.params.retries {
                    return (Err(e), attempts);
                }
                let wait = match &e {
                    GenerationError::RateLimited {
                        retry_after: Some(d),
                    } => *d,
                    _ => delay,
                };
                std::thread::sleep(wait);
                delay = delay.saturating_mul(2);
            }
        }
    }
}
