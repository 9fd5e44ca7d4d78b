//! Deterministic offline backend: answers with the top-ranked memory.

use super::{GenerationBackend, GenerationError, GenerationRequest};
use crate::store::MemoryItem;
use crate::text::is_cjk;

/// Returned when no memory is supplied.
pub const NO_MEMORY_RESPONSE: &str = "no relevant memory";

/// Length budget in half-word units: a Latin word costs 2, a CJK char 1,
/// so the cap is 50 words or 100 CJK chars.
const BUDGET_UNITS: usize = 100;

/// Cuts `text` to 50 words / 100 CJK chars.
pub fn truncate_answer(text: &str) -> &str {
    let mut units = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        let cost = if is_cjk(c) {
            in_word = false;
            1
        } else if c.is_alphanumeric() {
            let starts = !in_word;
            in_word = true;
            if starts {
                2
            } else {
                0
            }
        } else {
            in_word = false;
            0
        };
        if units + cost > BUDGET_UNITS {
            return text[..i].trim_end();
        }
        units += cost;
    }
    text
}

pub fn mock_extractive_generate(_question: &str, memories: &[MemoryItem]) -> String {
    match memories.first() {
        Some(m) => truncate_answer(&m.text).to_string(),
        None => NO_MEMORY_RESPONSE.to_string(),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockExtractive;

impl GenerationBackend for MockExtractive {
    fn name(&self) -> &str {
        "mock-extractive"
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerationError> {
        Ok(mock_extractive_generate(request.question, request.memories))
    }
}
