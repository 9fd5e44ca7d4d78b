use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use memq::classifier::QuestionClassifier;
use memq::eval::{recall_at_k, LatencyStats};
use memq::pipeline::{item_lookup, retrieve_ranked};
use memq::retriever::RankedCandidate;
use memq::store::segment_memories;
use serde::Serialize;

use super::{clip, emit};
use crate::artifacts::{load_database, load_indexed, load_model, load_qa, sha256_file, write_index_dir, IndexManifest};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::Format;

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Output directory (defaults to the configured index dir).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    character: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    question: String,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Re-rank with the trained classifier.
    #[arg(long)]
    classify: bool,
    /// Recall cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
}

pub fn build(cfg: &RunConfig, a: &BuildArgs, fmt: Format) -> CliResult<()> {
    let dir = a.out.clone().unwrap_or_else(|| cfg.paths.index_dir.clone());
    let t0 = Instant::now();
    let db = load_database(&cfg.paths.corpus)?;
    let items = segment_memories(&db);
    if items.is_empty() {
        return Err(CliError::artifact(&cfg.paths.corpus, "corpus has no memory items"));
    }
    let manifest = write_index_dir(&dir, &items, cfg.bm25, sha256_file(&cfg.paths.corpus)?)?;
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;

    #[derive(Serialize)]
    struct Out<'a> {
        dir: &'a PathBuf,
        items: usize,
        elapsed_ms: f64,
        manifest: &'a IndexManifest,
    }
    let out = Out {
        dir: &dir,
        items: items.len(),
        elapsed_ms,
        manifest: &manifest,
    };
    emit(fmt, &out, || {
        format!(
            "indexed {} items for {} characters into {} ({:.1} ms)\n",
            items.len(),
            manifest.characters.len(),
            dir.display(),
            elapsed_ms
        )
    })
}

#[derive(Serialize)]
pub(crate) struct Hit {
    rank: usize,
    item_id: String,
    mem_type: memq::store::MemoryType,
    subtype: memq::store::Subtype,
    raw_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    composite_score: Option<f64>,
    text: String,
}

pub(crate) fn hits(
    ranked: &[RankedCandidate],
    lookup: &std::collections::HashMap<&str, &memq::store::MemoryItem>,
) -> CliResult<Vec<Hit>> {
    ranked
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let it = lookup
                .get(c.item_id.as_str())
                .ok_or_else(|| CliError::Missing(format!("index refers to unknown item {}", c.item_id)))?;
            Ok(Hit {
                rank: i + 1,
                item_id: c.item_id.clone(),
                mem_type: it.mem_type,
                subtype: it.subtype,
                raw_score: c.raw_score,
                composite_score: c.composite_score,
                text: it.text.clone(),
            })
        })
        .collect()
}

/// Aligned table of ranked hits.
pub(crate) fn render_hits(hits: &[Hit]) -> String {
    let show_composite = hits.iter().any(|h| h.composite_score.is_some());
    let mut s = String::new();
    for h in hits {
        let composite = match h.composite_score {
            Some(c) if show_composite => format!("  composite {c:.4}"),
            _ => String::new(),
        };
        s.push_str(&format!(
            "  {:>2}. {} [{:<3}] raw {:>8.4}{}  {}\n",
            h.rank,
            h.item_id,
            h.subtype.tag(),
            h.raw_score,
            composite,
            clip(&h.text, 60)
        ));
    }
    s
}

pub fn query(cfg: &RunConfig, a: &QueryArgs, fmt: Format) -> CliResult<()> {
    if a.k == 0 {
        return Err(CliError::config("--k must be at least 1"));
    }
    let loaded = load_indexed(&cfg.paths.corpus, &cfg.paths.index_dir, Some(&a.character))?;
    let index = &loaded.indexes[&a.character];
    let t0 = Instant::now();
    let ranked = memq::retriever::retrieve(index, &a.question, a.k).map_err(|e| CliError::Other(e.to_string()))?;
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
    let lookup = item_lookup(&loaded.items);
    let hits = hits(&ranked, &lookup)?;

    #[derive(Serialize)]
    struct Out<'a> {
        character: &'a str,
        question: &'a str,
        elapsed_ms: f64,
        hits: &'a [Hit],
    }
    let out = Out {
        character: &a.character,
        question: &a.question,
        elapsed_ms,
        hits: &hits,
    };
    emit(fmt, &out, || render_hits(&hits))
}

pub fn retrieve(cfg: &mut RunConfig, a: &RetrieveArgs, fmt: Format) -> CliResult<()> {
    if let Some(ks) = &a.ks {
        cfg.eval.recall_ks = ks.clone();
    }
    cfg.validate()?;
    let mut ks = cfg.eval.recall_ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let depth = *ks.last().ok_or_else(|| CliError::config("no recall cutoffs"))?;

    let loaded = load_indexed(&cfg.paths.corpus, &cfg.paths.index_dir, None)?;
    let (qa, alignment) = load_qa(&cfg.paths.qa, &loaded.items)?;
    let model = if a.classify { Some(load_model(&cfg.paths.model)?) } else { None };
    let classifier = model.as_ref().map(|m| m as &dyn QuestionClassifier);
    let lookup = item_lookup(&loaded.items);

    let mut retrieved = Vec::with_capacity(qa.len());
    let mut latencies = Vec::with_capacity(qa.len());
    let mut unknown = 0usize;
    for q in &qa {
        let Some(index) = loaded.indexes.get(&q.character_id) else {
            unknown += 1;
            retrieved.push(Vec::new());
            continue;
        };
        let t0 = Instant::now();
        let trace = retrieve_ranked(index, &lookup, &q.question, classifier, &cfg.rerank, depth)
            .map_err(|e| CliError::Other(e.to_string()))?;
        latencies.push(t0.elapsed().as_secs_f64() * 1e3);
        retrieved.push(trace.ranked.into_iter().map(|c| c.item_id).collect::<Vec<_>>());
    }
    let gold: Vec<Vec<String>> = qa.iter().map(|q| q.reference_item_ids.clone()).collect();
    let mut recall = BTreeMap::new();
    let mut excluded = 0;
    for &k in &ks {
        let r = recall_at_k(&retrieved, &gold, k);
        excluded = r.excluded;
        recall.insert(k, r.value);
    }

    #[derive(Serialize)]
    struct Out {
        questions: usize,
        scored: usize,
        excluded: usize,
        unknown_character: usize,
        unaligned_references: usize,
        classify: bool,
        recall_at_k: BTreeMap<usize, f64>,
        latency: Option<LatencyStats>,
    }
    let out = Out {
        questions: qa.len(),
        scored: qa.len() - excluded,
        excluded,
        unknown_character: unknown,
        unaligned_references: alignment.unaligned.len(),
        classify: a.classify,
        recall_at_k: recall,
        latency: LatencyStats::from_samples(latencies),
    };
    emit(fmt, &out, || {
        let mut s = format!(
            "questions {} (scored {}, excluded {})  retriever {}\n",
            out.questions,
            out.scored,
            out.excluded,
            if out.classify { "BM25 + classifier re-rank" } else { "BM25" }
        );
        for (k, v) in &out.recall_at_k {
            s.push_str(&format!("  R@{k:<3} {v:.3}\n"));
        }
        if let Some(l) = &out.latency {
            s.push_str(&format!("  mean query {:.3} ms, p95 {:.3} ms\n", l.mean_ms, l.p95_ms));
        }
        s
    })
}
