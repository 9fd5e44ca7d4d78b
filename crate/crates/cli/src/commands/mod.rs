pub mod answer;
pub mod classify;
pub mod data;
pub mod eval;
pub mod index;

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::Format;

/// Prints `value` as JSON, or the text rendering.
pub fn emit<T: Serialize>(fmt: Format, value: &T, text: impl FnOnce() -> String) -> CliResult<()> {
    match fmt {
        Format::Json => {
            let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
            println!("{s}");
        }
        Format::Text => print!("{}", text()),
    }
    Ok(())
}

/// Shortens `s` to `max` chars for table display.
pub fn clip(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let mut out: String = s.chars().take(max.saturating_sub(1)).collect();
        out.push('…');
        out
    }
}
