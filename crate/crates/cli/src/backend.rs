use std::path::Path;

use memq::synthesis::net::deny_network;
use memq::synthesis::{
    ChatCompletionsBackend, GenerationBackend, MockExtractive, RecordingBackend, ReplayBackend, TranscriptStore,
    API_KEY_ENV,
};
use tracing::warn;

use crate::config::{BackendConfig, BackendKind};
use crate::error::{CliError, CliResult};

/// Builds the configured backend. Offline kinds switch the process-wide
/// network guard off so nothing can leave the machine. With `record_to`,
/// every successful call is also written there as a transcript.
pub fn make_backend(cfg: &BackendConfig, record_to: Option<&Path>) -> CliResult<Box<dyn GenerationBackend>> {
    let inner: Box<dyn GenerationBackend> = match cfg.kind {
        BackendKind::Mock => {
            deny_network();
            Box::new(MockExtractive)
        }
        BackendKind::Replay => {
            deny_network();
            let dir = cfg
                .transcripts
                .as_ref()
                .ok_or_else(|| CliError::config("replay backend needs transcripts"))?;
            if !dir.is_dir() {
                return Err(CliError::artifact(dir, "transcript directory not found"));
            }
            let name = cfg
                .replay_of
                .clone()
                .ok_or_else(|| CliError::config("replay backend needs replay_of"))?;
            Box::new(ReplayBackend::new(name, TranscriptStore::new(dir)))
        }
        BackendKind::Chat => {
            if std::env::var_os(API_KEY_ENV).is_none() {
                warn!("{API_KEY_ENV} is not set; sending requests without credentials");
            }
            Box::new(ChatCompletionsBackend::new(&cfg.base_url, &cfg.model).map_err(|e| CliError::Backend(e.to_string()))?)
        }
    };
    Ok(match record_to {
        Some(dir) => Box::new(RecordingBackend::new(inner, TranscriptStore::new(dir))),
        None => inner,
    })
}
