use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use memq::classifier::{write_labeled, LabeledQuestion};
use memq::import::{import_memory, import_qa, ImportReport};
use memq::store::{
    align_references, segment_memories, serialize_database, serialize_qa, AlignmentReport, DatabaseStats,
    MemoryDatabase, QAItem,
};
use memq::synth::{generate_corpus, GenSpec};
use serde::Serialize;

use super::emit;
use crate::artifacts::{load_database, write_file, write_json};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::Format;

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of characters.
    #[arg(long)]
    chars: Option<usize>,
    /// JSON generator spec; flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    qa_per_char: Option<usize>,
    #[arg(long)]
    events_per_char: Option<usize>,
    #[arg(long)]
    relationships_per_char: Option<usize>,
    #[arg(long)]
    turns_per_dialogue: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Memory file in the published repository layout (instead of --corpus).
    #[arg(long, requires = "published_qa")]
    published_memory: Option<PathBuf>,
    /// QA file in the published repository layout (instead of --qa).
    #[arg(long, requires = "published_memory")]
    published_qa: Option<PathBuf>,
    /// Output directory for the canonical files.
    #[arg(short, long)]
    out: PathBuf,
}

/// File names inside a data directory.
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QA_FILE: &str = "qa.json";
pub const LABELED_FILE: &str = "labeled.tsv";

#[derive(Debug, Serialize)]
struct DataSummary {
    out: PathBuf,
    stats: DatabaseStats,
    memory_items: usize,
    qa_items: usize,
    labeled_questions: usize,
    alignment: AlignmentReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    import: Option<ImportReport>,
}

impl DataSummary {
    fn text(&self) -> String {
        let s = &self.stats;
        let mut out = format!(
            "wrote {}\n  characters {}  profile attributes {}  relationships {}  events {}  dialogues {}  utterances {}\n  memory items {}  qa items {}  labeled questions {}\n  references aligned: {} exact, {} fuzzy, {} unaligned\n",
            self.out.display(),
            s.characters,
            s.profile_attributes,
            s.relationships,
            s.events,
            s.dialogues,
            s.utterances,
            self.memory_items,
            self.qa_items,
            self.labeled_questions,
            self.alignment.exact,
            self.alignment.fuzzy,
            self.alignment.unaligned.len(),
        );
        if let Some(r) = &self.import {
            out.push_str(&format!(
                "  import: {} values skipped, {} anchors dropped, {} event links cleared\n",
                r.skipped.len(),
                r.dropped_anchors,
                r.cleared_event_links
            ));
        }
        out
    }
}

fn write_data_dir(
    out: &Path,
    db: &MemoryDatabase,
    qa: &[QAItem],
    labeled: &[LabeledQuestion],
) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;
    write_file(&out.join(CORPUS_FILE), |w| {
        serialize_database(db, w).map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))
    })?;
    write_file(&out.join(QA_FILE), |w| {
        serialize_qa(qa, w).map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))
    })?;
    write_file(&out.join(LABELED_FILE), |w| write_labeled(labeled, w))
}

pub fn gen(cfg: &RunConfig, a: &GenArgs, fmt: Format) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => GenSpec::default(),
    };
    spec.seed = cfg.seed;
    for (flag, slot) in [
        (a.chars, &mut spec.n_characters),
        (a.qa_per_char, &mut spec.qa_per_char),
        (a.events_per_char, &mut spec.events_per_char),
        (a.relationships_per_char, &mut spec.relationships_per_char),
        (a.turns_per_dialogue, &mut spec.turns_per_dialogue),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if spec.n_characters == 0 {
        return Err(CliError::config("--chars must be at least 1"));
    }

    let corpus = generate_corpus(&spec);
    write_data_dir(&a.out, &corpus.db, &corpus.qa, &corpus.labeled)?;
    write_json(&a.out.join("gen_spec.json"), &spec)?;
    let items = segment_memories(&corpus.db);
    let alignment = align_references(&corpus.qa, &items).report;
    let summary = DataSummary {
        out: a.out.clone(),
        stats: corpus.db.stats(),
        memory_items: items.len(),
        qa_items: corpus.qa.len(),
        labeled_questions: corpus.labeled.len(),
        alignment,
        import: None,
    };
    emit(fmt, &summary, || summary.text())
}

/// Labels each question with the memory type of its first reference.
fn labels_from_references(qa: &[QAItem], db_items: &[memq::store::MemoryItem]) -> Vec<LabeledQuestion> {
    let types: HashMap<&str, memq::store::MemoryType> =
        db_items.iter().map(|it| (it.item_id.as_str(), it.mem_type)).collect();
    qa.iter()
        .filter_map(|q| {
            let t = *types.get(q.reference_item_ids.first()?.as_str())?;
            Some(LabeledQuestion {
                label: t,
                question: q.question.clone(),
            })
        })
        .collect()
}

fn read_json(path: &Path) -> CliResult<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::artifact(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::artifact(path, e))
}

pub fn ingest(cfg: &RunConfig, a: &IngestArgs, fmt: Format) -> CliResult<()> {
    let (db, qa, import) = match (&a.published_memory, &a.published_qa) {
        (Some(mp), Some(qp)) => {
            let (db, mut report) = import_memory(&read_json(mp)?).map_err(|e| CliError::artifact(mp, e))?;
            let qa = import_qa(&read_json(qp)?, &mut report).map_err(|e| CliError::artifact(qp, e))?;
            (db, qa, Some(report))
        }
        _ => {
            let db = load_database(&cfg.paths.corpus)?;
            let qa_path = &cfg.paths.qa;
            let file = fs::File::open(qa_path).map_err(|e| CliError::artifact(qa_path, e))?;
            let qa = memq::store::ingest_qa(std::io::BufReader::new(file))
                .map_err(|e| CliError::artifact(qa_path, e))?;
            (db, qa, None)
        }
    };
    let items = segment_memories(&db);
    let aligned = align_references(&qa, &items);
    let labeled = labels_from_references(&aligned.qa, &items);
    write_data_dir(&a.out, &db, &aligned.qa, &labeled)?;
    let summary = DataSummary {
        out: a.out.clone(),
        stats: db.stats(),
        memory_items: items.len(),
        qa_items: aligned.qa.len(),
        labeled_questions: labeled.len(),
        alignment: aligned.report,
        import,
    };
    write_json(&a.out.join("ingest_report.json"), &summary)?;
    emit(fmt, &summary, || summary.text())
}
