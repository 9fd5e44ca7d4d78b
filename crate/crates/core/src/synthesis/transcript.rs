//! Content-addressed transcripts of backend calls, for record and replay.
//!
//! A transcript is keyed by SHA-256 over the backend name, prompt, sampling
//! temperature and token cap; it lives at `<dir>/<key>.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{GenerationBackend, GenerationError, GenerationParams, GenerationRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub backend: String,
    pub prompt: String,
    pub params: GenerationParams,
    pub response: String,
    pub latency_ms: f64,
}

pub fn transcript_key(backend: &str, prompt: &str, params: &GenerationParams) -> String {
    let canonical = json!({
        "backend": backend,
        "prompt": prompt,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

impl TranscriptStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TranscriptStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Writes the transcript unless one with the same key exists.
    pub fn save(&self, t: &Transcript) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path(&t.key);
        if path.exists() {
            return Ok(());
        }
        let bytes = serde_json::to_vec_pretty(t).map_err(std::io::Error::from)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)
    }

    pub fn load(&self, key: &str) -> std::io::Result<Option<Transcript>> {
        match fs::read(self.path(key)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes).map_err(std::io::Error::from)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Wraps a backend and persists every successful call.
pub struct RecordingBackend<B> {
    inner: B,
    store: TranscriptStore,
}

impl<B: GenerationBackend> RecordingBackend<B> {
    pub fn new(inner: B, store: TranscriptStore) -> Self {
        RecordingBackend { inner, store }
    }
}

impl<B: GenerationBackend> GenerationBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn is_remote(&self) -> bool {
        self.inner.is_remote()
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerationError> {
        let t0 = Instant::now();
        let response = self.inner.complete(request)?;
        let t = Transcript {
            key: transcript_key(self.inner.name(), request.prompt, request.params),
            backend: self.inner.name().to_string(),
            prompt: request.prompt.to_string(),
            params: request.params.clone(),
            response: response.clone(),
            latency_ms: t0.elapsed().as_secs_f64() * 1e3,
        };
        if let Err(e) = self.store.save(&t) {
            tracing::warn!(error = %e, key = %t.key, "could not persist transcript");
        }
        Ok(response)
    }
}

/// Serves recorded responses; never touches the network.
pub struct ReplayBackend {
    name: String,
    store: TranscriptStore,
}

impl ReplayBackend {
    /// `recorded_as` is the name of the backend that produced the fixtures.
    pub fn new(recorded_as: impl Into<String>, store: TranscriptStore) -> Self {
        ReplayBackend {
            name: recorded_as.into(),
            store,
        }
    }
}

impl GenerationBackend for ReplayBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerationError> {
        let key = transcript_key(&self.name, request.prompt, request.params);
        match self.store.load(&key) {
            Ok(Some(t)) => Ok(t.response),
            Ok(None) => Err(GenerationError::ReplayMiss(key)),
            Err(e) => Err(GenerationError::Transport(e.to_string())),
        }
    }
}
