use clap::Args;
use memq::classifier::{ClassDistribution, QuestionClassifier};
use memq::pipeline::{item_lookup, resolve, retrieve_ranked};
use memq::store::MemoryItem;
use memq::synthesis::{build_prompt, generate, GenerationRequest};
use serde::Serialize;

use super::emit;
use super::index::{hits, render_hits, Hit};
use crate::artifacts::{load_indexed, load_model};
use crate::backend::make_backend;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::{BackendArgs, Format};

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[arg(long)]
    character: String,
    /// Memories placed in the prompt.
    #[arg(long)]
    k: Option<usize>,
    /// Skip classification; plain top-k retrieval.
    #[arg(long, conflicts_with = "uniform")]
    no_classify: bool,
    /// Re-rank with an even type distribution instead of the trained model.
    #[arg(long)]
    uniform: bool,
    /// Also print the rendered prompt.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    backend: BackendArgs,
    question: String,
}

struct Uniform;

impl QuestionClassifier for Uniform {
    fn classify(&self, _: &str) -> ClassDistribution {
        ClassDistribution::UNIFORM
    }
}

#[derive(Serialize)]
struct Out<'a> {
    character: &'a str,
    question: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution: Option<ClassDistribution>,
    pool: Vec<Hit>,
    top_k: Vec<Hit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
    backend: String,
    answer: String,
    attempts: usize,
}

pub fn answer(cfg: &mut RunConfig, a: &AnswerArgs, fmt: Format) -> CliResult<()> {
    if let Some(k) = a.k {
        cfg.rerank.k = k;
    }
    a.backend.apply(cfg);
    cfg.validate()?;
    let k = cfg.rerank.k;

    let model = if a.no_classify || a.uniform {
        None
    } else {
        Some(load_model(&cfg.paths.model)?)
    };
    let classifier: Option<&dyn QuestionClassifier> = match (&model, a.uniform) {
        (Some(m), _) => Some(m),
        (None, true) => Some(&Uniform),
        (None, false) => None,
    };
    let loaded = load_indexed(&cfg.paths.corpus, &cfg.paths.index_dir, Some(&a.character))?;
    let backend = make_backend(&cfg.backend, None)?;

    let index = &loaded.indexes[&a.character];
    let lookup = item_lookup(&loaded.items);
    let trace = retrieve_ranked(index, &lookup, &a.question, classifier, &cfg.rerank, k)
        .map_err(|e| CliError::Other(e.to_string()))?;
    let memories: Vec<MemoryItem> = resolve(&trace.ranked, &lookup)
        .map_err(|e| CliError::Missing(e.to_string()))?
        .into_iter()
        .cloned()
        .collect();
    let prompt = build_prompt(&Default::default(), &a.question, &memories);
    let params = cfg.backend.params();
    let request = GenerationRequest {
        prompt: &prompt,
        question: &a.question,
        memories: &memories,
        params: &params,
    };
    let generation = generate(backend.as_ref(), &request, None).map_err(|e| CliError::Backend(e.to_string()))?;

    let out = Out {
        character: &a.character,
        question: &a.question,
        distribution: trace.distribution,
        pool: hits(&trace.pool, &lookup)?,
        top_k: hits(&trace.ranked, &lookup)?,
        prompt: a.verbose.then(|| prompt.clone()),
        backend: backend.name().to_string(),
        answer: generation.text,
        attempts: generation.attempts.len(),
    };
    emit(fmt, &out, || {
        let mut s = String::new();
        match &out.distribution {
            Some(d) => s.push_str(&format!(
                "classification: semantic {:.4}  episodic {:.4}\n",
                d.p_semantic, d.p_episodic
            )),
            None => s.push_str("classification: off\n"),
        }
        if !out.pool.is_empty() {
            s.push_str(&format!("candidate pool ({}):\n{}", out.pool.len(), render_hits(&out.pool)));
        }
        s.push_str(&format!("top {k}:\n{}", render_hits(&out.top_k)));
        if let Some(p) = &out.prompt {
            s.push_str(&format!("prompt:\n{p}\n"));
        }
        s.push_str(&format!("answer ({}):\n{}\n", out.backend, out.answer));
        s
    })
}
