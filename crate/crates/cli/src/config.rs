//! Run configuration: TOML file plus command-line overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use memq::eval::{AblationSetting, EvalConfig, MemoryCondition, Pipeline};
use memq::rerank::RerankConfig;
use memq::retriever::Bm25Params;
use memq::synthesis::GenerationParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub qa: PathBuf,
    pub labeled: PathBuf,
    pub index_dir: PathBuf,
    pub model: PathBuf,
    pub run_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "data/corpus.jsonl".into(),
            qa: "data/qa.json".into(),
            labeled: "data/labeled.tsv".into(),
            index_dir: "data/index".into(),
            model: "data/model.json".into(),
            run_dir: "runs/latest".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Chat,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_tokens: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
    pub call_budget: Option<u64>,
    /// Recorded transcripts served by the replay backend.
    pub transcripts: Option<PathBuf>,
    /// Name of the backend that produced the transcripts, e.g.
    /// `chat:gpt-3.5-turbo` or `mock-extractive`.
    pub replay_of: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let p = GenerationParams::default();
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            timeout_ms: p.timeout.as_millis() as u64,
            retries: p.retries,
            backoff_ms: p.backoff.as_millis() as u64,
            max_tokens: p.max_tokens,
            temperature: p.temperature,
            max_in_flight: 4,
            call_budget: None,
            transcripts: None,
            replay_of: None,
        }
    }
}

impl BackendConfig {
    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            timeout: Duration::from_millis(self.timeout_ms),
            retries: self.retries,
            backoff: Duration::from_millis(self.backoff_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Pipeline names, or `all`.
    pub settings: Vec<String>,
    /// Memory conditions, or `all`.
    pub conditions: Vec<String>,
    pub recall_ks: Vec<usize>,
    /// Score answers with the backend as a rubric judge.
    pub judge: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            settings: vec!["w-mc+r".into()],
            conditions: vec!["retrieved".into()],
            recall_ks: vec![1, 2, 3, 5],
            judge: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub bm25: Bm25Params,
    pub rerank: RerankConfig,
    pub backend: BackendConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            paths: Paths::default(),
            bm25: Bm25Params::default(),
            rerank: RerankConfig::default(),
            backend: BackendConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

fn expand<T: Copy, E: std::fmt::Display>(
    names: &[String],
    all: &[T],
    parse: impl Fn(&str) -> Result<T, E>,
    what: &str,
) -> CliResult<Vec<T>> {
    if names.is_empty() {
        return Err(CliError::config(format!("at least one {what} is required")));
    }
    let mut out: Vec<T> = Vec::new();
    for n in names {
        for part in n.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend_from_slice(all);
            } else {
                out.push(parse(part).map_err(CliError::config)?);
            }
        }
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn pipelines(&self) -> CliResult<Vec<Pipeline>> {
        let mut v = expand(&self.eval.settings, &Pipeline::ALL, str::parse::<Pipeline>, "setting")?;
        dedup_in_order(&mut v);
        Ok(v)
    }

    pub fn conditions(&self) -> CliResult<Vec<MemoryCondition>> {
        let mut v = expand(
            &self.eval.conditions,
            &MemoryCondition::ALL,
            str::parse::<MemoryCondition>,
            "condition",
        )?;
        dedup_in_order(&mut v);
        Ok(v)
    }

    pub fn settings(&self) -> CliResult<Vec<AblationSetting>> {
        let conditions = self.conditions()?;
        Ok(self
            .pipelines()?
            .into_iter()
            .flat_map(|p| conditions.iter().map(move |&c| AblationSetting::new(p, c)))
            .collect())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            rerank: self.rerank,
            recall_ks: self.eval.recall_ks.clone(),
            seed: self.seed,
            max_in_flight: self.backend.max_in_flight,
            call_budget: self.backend.call_budget,
            params: self.backend.params(),
            template: Default::default(),
        }
    }

    /// Checks everything that can be checked without touching artifacts.
    pub fn validate(&self) -> CliResult<()> {
        self.eval_config().validate().map_err(CliError::config)?;
        if !(self.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.bm25.b)) {
            return Err(CliError::config(format!(
                "bm25 k1 must be >= 0 and b in [0, 1], got k1={} b={}",
                self.bm25.k1, self.bm25.b
            )));
        }
        self.settings()?;
        let b = &self.backend;
        if b.timeout_ms == 0 {
            return Err(CliError::config("backend.timeout_ms must be positive"));
        }
        match b.kind {
            BackendKind::Chat if b.base_url.trim().is_empty() || b.model.trim().is_empty() => {
                return Err(CliError::config("chat backend needs base_url and model"));
            }
            BackendKind::Replay if b.transcripts.is_none() || b.replay_of.is_none() => {
                return Err(CliError::config("replay backend needs transcripts and replay_of"));
            }
            _ => {}
        }
        if self.eval.judge && b.kind == BackendKind::Mock {
            return Err(CliError::config("the judge needs a chat or replay backend"));
        }
        Ok(())
    }
}

fn dedup_in_order<T: PartialEq + Copy>(v: &mut Vec<T>) {
    let mut seen = Vec::new();
    v.retain(|x| {
        if seen.contains(x) {
            false
        } else {
            seen.push(*x);
            true
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_with_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
seed = 7
[rerank]
alpha = 0.3
beta = 0.7
k = 2
[backend]
kind = "replay"
transcripts = "t"
replay_of = "mock-extractive"
[eval]
settings = ["all"]
conditions = ["nr,cr"]
"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.rerank.k, 2);
        assert_eq!(cfg.paths, Paths::default());
        let s = cfg.settings().unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], AblationSetting::new(Pipeline::WMcR, MemoryCondition::Nr));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        let mut cfg = RunConfig::default();
        cfg.rerank.alpha = 2.0;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.eval.settings = vec!["nope".into()];
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.backend.kind = BackendKind::Replay;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
