use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use memq::classifier::QuestionClassifier;
use memq::eval::{render_table, run_ablation, EvalContext, EvalError, EvalReport};
use serde::Serialize;
use serde_json::json;
use tracing::info;

use super::emit;
use crate::artifacts::{check_run_dir, create_run_dir, load_indexed, load_model, load_qa, sha256_file, write_file, write_json, INDEX_MANIFEST};
use crate::backend::make_backend;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::refs;
use crate::{BackendArgs, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Ablate,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pipelines to run (w-mc+r, w/o-mc+w-r, w/o-mc+r or all).
    #[arg(long, value_delimiter = ',')]
    setting: Vec<String>,
    /// Memory conditions (nr, ir, cr, retrieved or all).
    #[arg(long, value_delimiter = ',')]
    condition: Vec<String>,
    /// Memories placed in each prompt.
    #[arg(long)]
    k: Option<usize>,
    /// New or empty directory for the run's outputs.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Show published MAP next to ours, for the named model.
    #[arg(long, num_args = 0..=1, default_missing_value = "gpt-3.5-turbo")]
    paper_refs: Option<String>,
    /// Score answers with the backend as a rubric judge.
    #[arg(long)]
    judge: bool,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Cap on backend attempts for the whole run.
    #[arg(long)]
    call_budget: Option<u64>,
    #[command(flatten)]
    backend: BackendArgs,
}

fn apply(cfg: &mut RunConfig, a: &EvalArgs, mode: Mode) {
    match (mode, a.setting.is_empty()) {
        (_, false) => cfg.eval.settings = a.setting.clone(),
        (Mode::Ablate, true) => cfg.eval.settings = vec!["w/o-mc+w-r".into()],
        (Mode::Eval, true) => {}
    }
    match (mode, a.condition.is_empty()) {
        (_, false) => cfg.eval.conditions = a.condition.clone(),
        (Mode::Ablate, true) => cfg.eval.conditions = vec!["nr".into(), "ir".into(), "cr".into()],
        (Mode::Eval, true) => {}
    }
    if let Some(k) = a.k {
        cfg.rerank.k = k;
    }
    if let Some(out) = &a.out {
        cfg.paths.run_dir = out.clone();
    }
    if a.judge {
        cfg.eval.judge = true;
    }
    if let Some(n) = a.max_in_flight {
        cfg.backend.max_in_flight = n;
    }
    if a.call_budget.is_some() {
        cfg.backend.call_budget = a.call_budget;
    }
    a.backend.apply(cfg);
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::MissingClassifier(_) => CliError::Missing(e.to_string()),
        EvalError::NoScorableQuestions => CliError::Missing(e.to_string()),
        other => CliError::config(other),
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    run_dir: &'a PathBuf,
    rows: Vec<serde_json::Value>,
}

pub fn eval(cfg: &mut RunConfig, a: &EvalArgs, fmt: Format, mode: Mode) -> CliResult<()> {
    apply(cfg, a, mode);
    cfg.validate()?;
    let settings = cfg.settings()?;
    let tables = refs::tables();
    if let Some(model) = &a.paper_refs {
        if !refs::models(&tables).contains(&model.as_str()) {
            return Err(CliError::config(format!(
                "no reference numbers for {model:?}; known: {}",
                refs::models(&tables).join(", ")
            )));
        }
    }
    let run_dir = cfg.paths.run_dir.clone();
    check_run_dir(&run_dir)?;

    let loaded = load_indexed(&cfg.paths.corpus, &cfg.paths.index_dir, None)?;
    let (qa, alignment) = load_qa(&cfg.paths.qa, &loaded.items)?;
    let needs_model = settings.iter().any(|s| s.uses_classifier());
    let model = if needs_model { Some(load_model(&cfg.paths.model)?) } else { None };

    create_run_dir(&run_dir)?;
    let backend = make_backend(&cfg.backend, Some(&run_dir.join("transcripts")))?;
    let ctx = EvalContext {
        items: &loaded.items,
        indexes: &loaded.indexes,
        classifier: model.as_ref().map(|m| m as &dyn QuestionClassifier),
        judge: cfg.eval.judge.then_some(backend.as_ref()),
    };
    let eval_cfg = cfg.eval_config();

    let started = Instant::now();
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut timings = Vec::new();
    for setting in &settings {
        let t0 = Instant::now();
        let report = run_ablation(ctx, &qa, *setting, backend.as_ref(), &eval_cfg).map_err(eval_error)?;
        timings.push(json!({
            "setting": setting,
            "elapsed_ms": t0.elapsed().as_secs_f64() * 1e3,
            "latency": report.latency,
        }));
        info!(%setting, map = ?report.map_score, "setting done");
        reports.push(report);
    }
    let total_ms = started.elapsed().as_secs_f64() * 1e3;

    let paper = |s: &memq::eval::AblationSetting| {
        a.paper_refs
            .as_deref()
            .and_then(|m| refs::reference_map(&tables, m, s))
    };
    let table = render_table(&reports, &paper);

    let mut artifacts = BTreeMap::new();
    let mut record = |name: &str, path: &PathBuf| -> CliResult<()> {
        artifacts.insert(
            name.to_string(),
            json!({"path": path, "sha256": sha256_file(path)?}),
        );
        Ok(())
    };
    record("corpus", &cfg.paths.corpus)?;
    record("qa", &cfg.paths.qa)?;
    record("index_manifest", &cfg.paths.index_dir.join(INDEX_MANIFEST))?;
    if model.is_some() {
        record("model", &cfg.paths.model)?;
    }
    let manifest = json!({
        "memq_version": env!("CARGO_PKG_VERSION"),
        "command": match mode { Mode::Eval => "eval", Mode::Ablate => "ablate" },
        "seed": cfg.seed,
        "backend": backend.name(),
        "settings": settings,
        "questions": qa.len(),
        "unaligned_references": alignment.unaligned.len(),
        "paper_refs": a.paper_refs,
        "artifacts": artifacts,
    });
    write_json(&run_dir.join("config.json"), cfg)?;
    write_json(&run_dir.join("manifest.json"), &manifest)?;
    write_json(&run_dir.join("report.json"), &reports)?;
    write_file(&run_dir.join("report.txt"), |w| std::io::Write::write_all(w, table.as_bytes()))?;
    write_json(
        &run_dir.join("timings.json"),
        &json!({"total_ms": total_ms, "settings": timings}),
    )?;

    let summary = Summary {
        run_dir: &run_dir,
        rows: reports
            .iter()
            .map(|r| {
                json!({
                    "setting": r.setting,
                    "n_questions": r.n_questions,
                    "map": r.map_score,
                    "paper_map": paper(&r.setting),
                    "recall_at_k": r.recall_at_k,
                    "accuracy": r.classification_metrics.as_ref().map(|m| m.accuracy),
                    "failed": r.failed,
                    "generation_latency": r.latency.get("generation").copied(),
                })
            })
            .collect(),
    };
    emit(fmt, &summary, || {
        let mut s = table.clone();
        if a.paper_refs.is_some() {
            s.push_str("(paper ref: published numbers for comparison only)\n");
        }
        s.push_str(&format!("run written to {}\n", run_dir.display()));
        s
    })?;

    if let Some(r) = reports.iter().find(|r| r.n_questions > 0 && r.failed == r.n_questions) {
        let first = r
            .per_question
            .iter()
            .find_map(|q| q.error.clone())
            .unwrap_or_default();
        return Err(CliError::Backend(format!(
            "every question failed under {}: {first}",
            r.setting
        )));
    }
    Ok(())
}
