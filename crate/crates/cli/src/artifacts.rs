//! Reading and writing on-disk artifacts: corpus, QA, labeled questions,
//! classifier model, index directory and run directories.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use memq::classifier::{read_labeled, LabeledQuestion, NaiveBayes};
use memq::retriever::{build_indexes, Bm25Params, InvertedIndex, ScoredIndex};
use memq::store::{
    align_references, ingest_database, ingest_qa, segment_memories, AlignmentReport, IngestOptions,
    MemoryDatabase, MemoryItem, QAItem,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::error::{CliError, CliResult};

pub const INDEX_MANIFEST: &str = "manifest.json";
const INDEX_DIR_FORMAT: &str = "memq-index-dir";
const INDEX_DIR_VERSION: u32 = 1;

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::artifact(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::artifact(path, e))
}

pub fn load_database(path: &Path) -> CliResult<MemoryDatabase> {
    ingest_database(open(path)?, &IngestOptions::default()).map_err(|e| CliError::artifact(path, e))
}

/// Loads QA items and resolves their references against `items`.
pub fn load_qa(path: &Path, items: &[MemoryItem]) -> CliResult<(Vec<QAItem>, AlignmentReport)> {
    let qa = ingest_qa(open(path)?).map_err(|e| CliError::artifact(path, e))?;
    let aligned = align_references(&qa, items);
    if !aligned.report.unaligned.is_empty() {
        warn!(
            unaligned = aligned.report.unaligned.len(),
            "some reference memories could not be matched to memory items"
        );
    }
    Ok((aligned.qa, aligned.report))
}

pub fn load_labeled(path: &Path) -> CliResult<Vec<LabeledQuestion>> {
    read_labeled(open(path)?).map_err(|e| CliError::artifact(path, e))
}

pub fn load_model(path: &Path) -> CliResult<NaiveBayes> {
    NaiveBayes::load(open(path)?).map_err(|e| {
        CliError::artifact(path, format!("{e} (train one with `memq classifier train`)"))
    })
}

/// Creates `path` and writes through a buffered writer.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::write(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::write(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub character_id: String,
    pub file: String,
    pub docs: usize,
    pub sha256: String,
}

/// Maps character ids to their index files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format: String,
    pub version: u32,
    pub corpus_sha256: String,
    pub bm25: Bm25Params,
    pub characters: Vec<IndexEntry>,
}

/// Builds per-character indexes and writes them with a manifest.
pub fn write_index_dir(
    dir: &Path,
    items: &[MemoryItem],
    params: Bm25Params,
    corpus_sha256: String,
) -> CliResult<IndexManifest> {
    let indexes = build_indexes(items, params).map_err(|e| CliError::Other(e.to_string()))?;
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    let mut characters = Vec::new();
    for (i, (cid, index)) in indexes.iter().enumerate() {
        let file = format!("c{i:05}.bm25");
        let bytes = index.to_bytes();
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| CliError::write(&path, e))?;
        characters.push(IndexEntry {
            character_id: cid.clone(),
            file,
            docs: index.docs().len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = IndexManifest {
        format: INDEX_DIR_FORMAT.into(),
        version: INDEX_DIR_VERSION,
        corpus_sha256,
        bm25: params,
        characters,
    };
    write_json(&dir.join(INDEX_MANIFEST), &manifest)?;
    info!(dir = %dir.display(), characters = manifest.characters.len(), "index written");
    Ok(manifest)
}

pub fn read_index_manifest(dir: &Path) -> CliResult<IndexManifest> {
    let path = dir.join(INDEX_MANIFEST);
    let m: IndexManifest = serde_json::from_reader(open(&path)?).map_err(|e| CliError::artifact(&path, e))?;
    if m.format != INDEX_DIR_FORMAT || m.version != INDEX_DIR_VERSION {
        return Err(CliError::artifact(
            &path,
            format!("unsupported index directory {} v{}", m.format, m.version),
        ));
    }
    Ok(m)
}

fn read_index(dir: &Path, entry: &IndexEntry) -> CliResult<InvertedIndex> {
    let path = dir.join(&entry.file);
    let index = InvertedIndex::read_from(open(&path)?).map_err(|e| CliError::artifact(&path, e))?;
    if index.character_id() != entry.character_id {
        return Err(CliError::artifact(&path, "character id does not match the manifest"));
    }
    Ok(index)
}

/// Everything derived from the corpus that queries need.
pub struct Loaded {
    pub items: Vec<MemoryItem>,
    pub indexes: BTreeMap<String, InvertedIndex>,
}

/// Loads the corpus and its index directory, refusing a stale index.
/// `only` restricts loading to one character.
pub fn load_indexed(corpus: &Path, index_dir: &Path, only: Option<&str>) -> CliResult<Loaded> {
    let corpus_sha256 = sha256_file(corpus)?;
    let db = load_database(corpus)?;
    let manifest = read_index_manifest(index_dir)?;
    if manifest.corpus_sha256 != corpus_sha256 {
        return Err(CliError::Missing(format!(
            "index in {} was built from a different corpus; rerun `memq index build`",
            index_dir.display()
        )));
    }
    let mut indexes = BTreeMap::new();
    for entry in &manifest.characters {
        if only.map_or(true, |c| c == entry.character_id) {
            indexes.insert(entry.character_id.clone(), read_index(index_dir, entry)?);
        }
    }
    if let Some(c) = only {
        if !indexes.contains_key(c) {
            return Err(CliError::Missing(format!("unknown character {c:?}")));
        }
    }
    let items = match only {
        Some(c) => db
            .get(c)
            .map(memq::store::segment_character)
            .unwrap_or_default(),
        None => segment_memories(&db),
    };
    Ok(Loaded {
        items,
        indexes,
    })
}

/// Refuses an existing nonempty run directory so earlier runs are never
/// overwritten.
pub fn check_run_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        let nonempty = fs::read_dir(dir)
            .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?
            .next()
            .is_some();
        if nonempty {
            return Err(CliError::config(format!(
                "run directory {} already exists and is not empty",
                dir.display()
            )));
        }
    }
    Ok(())
}

pub fn create_run_dir(dir: &Path) -> CliResult<()> {
    check_run_dir(dir)?;
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}
