//! Character memory data model, ingestion and segmentation into retrievable
//! memory items.
//!
//! A corpus file holds one JSON object per character (a concatenated stream
//! or a top-level array). Segmentation turns every profile attribute,
//! relationship, event and dialogue turn into one [`MemoryItem`]; profile and
//! relationship items are semantic memory, events and dialogue turns are
//! episodic.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::{analyze, normalize};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("duplicate character id {0:?}")]
    DuplicateCharacter(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl StoreError {
    fn schema(path: impl Into<String>, reason: impl Into<String>) -> Self {
        StoreError::Schema {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryType {
    Semantic,
    Episodic,
}

impl MemoryType {
    pub const ALL: [MemoryType; 2] = [MemoryType::Semantic, MemoryType::Episodic];

    pub fn index(self) -> usize {
        match self {
            MemoryType::Semantic => 0,
            MemoryType::Episodic => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryType::Semantic => "semantic",
            MemoryType::Episodic => "episodic",
        }
    }

    pub fn other(self) -> MemoryType {
        match self {
            MemoryType::Semantic => MemoryType::Episodic,
            MemoryType::Episodic => MemoryType::Semantic,
        }
    }
}

impl fmt::Display for MemoryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MemoryType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "semantic" | "sem" => Ok(MemoryType::Semantic),
            "episodic" | "epi" => Ok(MemoryType::Episodic),
            other => Err(format!("unknown memory type {other:?}")),
        }
    }
}

/// Finer memory kind: profile, social relationship, event, dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subtype {
    #[serde(rename = "PRO")]
    Profile,
    #[serde(rename = "SR")]
    Relationship,
    #[serde(rename = "EVT")]
    Event,
    #[serde(rename = "DLG")]
    Dialogue,
}

impl Subtype {
    pub fn mem_type(self) -> MemoryType {
        match self {
            Subtype::Profile | Subtype::Relationship => MemoryType::Semantic,
            Subtype::Event | Subtype::Dialogue => MemoryType::Episodic,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Subtype::Profile => "PRO",
            Subtype::Relationship => "SR",
            Subtype::Event => "EVT",
            Subtype::Dialogue => "DLG",
        }
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relationship {
    pub peer_name: String,
    pub category: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub event_id: String,
    pub topic: String,
    pub narrative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueTurn {
    pub speaker: String,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub dialogue_id: String,
    #[serde(default)]
    pub event_id: Option<String>,
    pub turns: Vec<DialogueTurn>,
}

/// Everything remembered about one character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterMemory {
    pub character_id: String,
    #[serde(default)]
    pub profile: BTreeMap<String, String>,
    #[serde(default)]
    pub relationships: Vec<Relationship>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub dialogues: Vec<Dialogue>,
}

/// Where a memory item came from inside its [`CharacterMemory`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Profile { attribute: String },
    Relationship { index: usize, peer_name: String },
    Event { event_id: String },
    DialogueTurn { dialogue_id: String, turn: usize },
}

impl Provenance {
    /// Path string hashed into the item id.
    pub fn path(&self) -> String {
        match self {
            Provenance::Profile { attribute } => format!("profile/{attribute}"),
            Provenance::Relationship { index, .. } => format!("relationship/{index}"),
            Provenance::Event { event_id } => format!("event/{event_id}"),
            Provenance::DialogueTurn { dialogue_id, turn } => {
                format!("dialogue/{dialogue_id}/{turn}")
            }
        }
    }
}

/// One retrievable unit of memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub item_id: String,
    pub character_id: String,
    pub mem_type: MemoryType,
    pub subtype: Subtype,
    pub text: String,
    pub provenance: Provenance,
}

/// 16 hex chars of SHA-256 over character id, subtype tag and provenance path.
pub fn item_id(character_id: &str, subtype: Subtype, provenance: &Provenance) -> String {
    let mut h = Sha256::new();
    h.update(character_id.as_bytes());
    h.update([0u8]);
    h.update(subtype.tag().as_bytes());
    h.update([0u8]);
    h.update(provenance.path().as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseStats {
    pub characters: usize,
    pub profile_attributes: usize,
    pub relationships: usize,
    pub events: usize,
    pub dialogues: usize,
    pub utterances: usize,
}

/// Ingested, validated corpus. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct MemoryDatabase {
    characters: Vec<CharacterMemory>,
    by_id: HashMap<String, usize>,
    categories: BTreeSet<String>,
}

impl MemoryDatabase {
    pub fn characters(&self) -> &[CharacterMemory] {
        &self.characters
    }

    pub fn get(&self, character_id: &str) -> Option<&CharacterMemory> {
        self.by_id.get(character_id).map(|&i| &self.characters[i])
    }

    pub fn len(&self) -> usize {
        self.characters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characters.is_empty()
    }

    /// Relationship categories seen during ingestion.
    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn stats(&self) -> DatabaseStats {
        let mut s = DatabaseStats {
            characters: self.characters.len(),
            ..Default::default()
        };
        for c in &self.characters {
            s.profile_attributes += c.profile.values().filter(|v| !v.trim().is_empty()).count();
            s.relationships += c.relationships.len();
            s.events += c.events.len();
            s.dialogues += c.dialogues.len();
            s.utterances += c.dialogues.iter().map(|d| d.turns.len()).sum::<usize>();
        }
        s
    }

    /// Builds a database from already-parsed characters, applying the same
    /// validation as [`ingest_database`].
    pub fn from_characters(
        characters: Vec<CharacterMemory>,
        opts: &IngestOptions,
    ) -> Result<Self, StoreError> {
        let mut db = MemoryDatabase::default();
        for (i, c) in characters.into_iter().enumerate() {
            db.insert(c, &format!("record[{i}]"), opts)?;
        }
        Ok(db)
    }

    fn insert(
        &mut self,
        c: CharacterMemory,
        path: &str,
        opts: &IngestOptions,
    ) -> Result<(), StoreError> {
        validate_character(&c, path, opts)?;
        if self.by_id.contains_key(&c.character_id) {
            return Err(StoreError::DuplicateCharacter(c.character_id));
        }
        for r in &c.relationships {
            self.categories.insert(r.category.clone());
        }
        self.by_id.insert(c.character_id.clone(), self.characters.len());
        self.characters.push(c);
        Ok(())
    }
}

/// Ingestion knobs.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// When set, relationship categories outside this set are rejected.
    pub category_vocabulary: Option<BTreeSet<String>>,
}

fn validate_character(
    c: &CharacterMemory,
    path: &str,
    opts: &IngestOptions,
) -> Result<(), StoreError> {
    if c.character_id.trim().is_empty() {
        return Err(StoreError::schema(
            format!("{path}.character_id"),
            "must be nonempty",
        ));
    }
    let mut event_ids = HashSet::new();
    for (i, e) in c.events.iter().enumerate() {
        if e.event_id.is_empty() {
            return Err(StoreError::schema(
                format!("{path}.events[{i}].event_id"),
                "must be nonempty",
            ));
        }
        if !event_ids.insert(e.event_id.as_str()) {
            return Err(StoreError::schema(
                format!("{path}.events[{i}].event_id"),
                format!("duplicate event id {:?}", e.event_id),
            ));
        }
    }
    let mut dialogue_ids = HashSet::new();
    for (i, d) in c.dialogues.iter().enumerate() {
        if d.dialogue_id.is_empty() {
            return Err(StoreError::schema(
                format!("{path}.dialogues[{i}].dialogue_id"),
                "must be nonempty",
            ));
        }
        if !dialogue_ids.insert(d.dialogue_id.as_str()) {
            return Err(StoreError::schema(
                format!("{path}.dialogues[{i}].dialogue_id"),
                format!("duplicate dialogue id {:?}", d.dialogue_id),
            ));
        }
        if let Some(ev) = &d.event_id {
            if !event_ids.contains(ev.as_str()) {
                return Err(StoreError::schema(
                    format!("{path}.dialogues[{i}].event_id"),
                    format!("references unknown event {ev:?}"),
                ));
            }
        }
    }
    if let Some(vocab) = &opts.category_vocabulary {
        for (i, r) in c.relationships.iter().enumerate() {
            if !vocab.contains(&r.category) {
                return Err(StoreError::schema(
                    format!("{path}.relationships[{i}].category"),
                    format!("category {:?} not in vocabulary", r.category),
                ));
            }
        }
    }
    Ok(())
}

/// Parses a stream of JSON values, each a character object or an array of
/// them.
fn json_stream<T, R>(reader: R) -> impl Iterator<Item = Result<(String, T), StoreError>>
where
    T: serde::de::DeserializeOwned,
    R: Read,
{
    let stream = serde_json::Deserializer::from_reader(reader).into_iter::<serde_json::Value>();
    let mut record = 0usize;
    stream.flat_map(move |value| {
        let out: Vec<Result<(String, T), StoreError>> = match value {
            Err(e) => vec![Err(StoreError::schema(
                format!("record[{record}]"),
                e.to_string(),
            ))],
            Ok(serde_json::Value::Array(values)) => values
                .into_iter()
                .map(|v| {
                    let path = format!("record[{record}]");
                    record += 1;
                    decode(v, &path).map(|t| (path, t))
                })
                .collect(),
            Ok(v) => {
                let path = format!("record[{record}]");
                record += 1;
                vec![decode(v, &path).map(|t| (path, t))]
            }
        };
        out
    })
}

fn decode<T: serde::de::DeserializeOwned>(v: serde_json::Value, path: &str) -> Result<T, StoreError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let full = if inner == "." {
            path.to_string()
        } else {
            format!("{path}.{inner}")
        };
        StoreError::schema(full, e.into_inner().to_string())
    })
}

/// Reads a canonical corpus stream into a validated database.
pub fn ingest_database<R: Read>(reader: R, opts: &IngestOptions) -> Result<MemoryDatabase, StoreError> {
    let mut db = MemoryDatabase::default();
    for rec in json_stream::<CharacterMemory, _>(reader) {
        let (path, c) = rec?;
        db.insert(c, &path, opts)?;
    }
    Ok(db)
}

/// Writes the database as one JSON object per line, in ingestion order.
pub fn serialize_database<W: Write>(db: &MemoryDatabase, mut w: W) -> Result<(), StoreError> {
    for c in &db.characters {
        serde_json::to_writer(&mut w, c).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Turns every memory element into a retrievable item, in a fixed order:
/// profile (attribute order), relationships, events, dialogue turns.
pub fn segment_memories(db: &MemoryDatabase) -> Vec<MemoryItem> {
    db.characters.iter().flat_map(segment_character).collect()
}

pub fn segment_character(c: &CharacterMemory) -> Vec<MemoryItem> {
    let mut items = Vec::new();
    let cid = c.character_id.as_str();
    let mut push = |subtype: Subtype, provenance: Provenance, raw: String| {
        let text = normalize(&raw);
        if text.is_empty() {
            return;
        }
        items.push(MemoryItem {
            item_id: item_id(cid, subtype, &provenance),
            character_id: cid.to_string(),
            mem_type: subtype.mem_type(),
            subtype,
            text,
            provenance,
        });
    };

    for (attr, value) in &c.profile {
        if value.trim().is_empty() {
            continue;
        }
        push(
            Subtype::Profile,
            Provenance::Profile {
                attribute: attr.clone(),
            },
            format!("{cid}的{attr}: {value}"),
        );
    }
    for (index, r) in c.relationships.iter().enumerate() {
        push(
            Subtype::Relationship,
            Provenance::Relationship {
                index,
                peer_name: r.peer_name.clone(),
            },
            r.description.clone(),
        );
    }
    for e in &c.events {
        push(
            Subtype::Event,
            Provenance::Event {
                event_id: e.event_id.clone(),
            },
            e.narrative.clone(),
        );
    }
    for d in &c.dialogues {
        for (turn, t) in d.turns.iter().enumerate() {
            if t.utterance.trim().is_empty() {
                continue;
            }
            push(
                Subtype::Dialogue,
                Provenance::DialogueTurn {
                    dialogue_id: d.dialogue_id.clone(),
                    turn,
                },
                format!("{}: {}", t.speaker, t.utterance),
            );
        }
    }
    items
}

/// A key fragment of the gold answer, as a char-offset span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// One question with its gold answer, reference memories and anchors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAItem {
    pub qa_id: String,
    pub character_id: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub reference_memory_texts: Vec<String>,
    #[serde(default)]
    pub reference_item_ids: Vec<String>,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
}

impl QAItem {
    pub fn anchor_texts(&self) -> Vec<&str> {
        self.anchors.iter().map(|a| a.text.as_str()).collect()
    }
}

/// Slice of `s` by char offsets, if in range.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut idx = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let b0 = idx.nth(start)?;
    let b1 = if end == start {
        b0
    } else {
        idx.nth(end - start - 1)?
    };
    Some(&s[b0..b1])
}

pub fn validate_anchor(answer: &str, anchor: &Anchor) -> bool {
    char_slice(answer, anchor.start, anchor.end) == Some(anchor.text.as_str())
}

fn validate_qa(qa: &QAItem, path: &str) -> Result<(), StoreError> {
    if qa.qa_id.is_empty() {
        return Err(StoreError::schema(format!("{path}.qa_id"), "must be nonempty"));
    }
    for (i, a) in qa.anchors.iter().enumerate() {
        if !validate_anchor(&qa.answer, a) {
            return Err(StoreError::schema(
                format!("{path}.anchors[{i}]"),
                format!(
                    "span [{}, {}) of answer does not equal {:?}",
                    a.start, a.end, a.text
                ),
            ));
        }
    }
    Ok(())
}

/// Reads QA items (array or concatenated objects), validating anchor spans.
pub fn ingest_qa<R: Read>(reader: R) -> Result<Vec<QAItem>, StoreError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in json_stream::<QAItem, _>(reader) {
        let (path, qa) = rec?;
        validate_qa(&qa, &path)?;
        if !seen.insert(qa.qa_id.clone()) {
            return Err(StoreError::schema(
                format!("{path}.qa_id"),
                format!("duplicate qa id {:?}", qa.qa_id),
            ));
        }
        out.push(qa);
    }
    Ok(out)
}

pub fn serialize_qa<W: Write>(qa: &[QAItem], mut w: W) -> Result<(), StoreError> {
    serde_json::to_writer_pretty(&mut w, qa).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Minimum token-set overlap for fuzzy reference resolution.
pub const ALIGN_OVERLAP_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnalignedReference {
    pub qa_id: String,
    pub reference_index: usize,
    /// Best overlap found among the character's items.
    pub best_overlap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub exact: usize,
    pub fuzzy: usize,
    pub unaligned: Vec<UnalignedReference>,
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub qa: Vec<QAItem>,
    pub report: AlignmentReport,
}

/// Jaccard overlap of the two token sets.
pub fn token_overlap(a: &str, b: &str) -> f64 {
    let ta: HashSet<String> = analyze(a).tokens.into_iter().collect();
    let tb: HashSet<String> = analyze(b).tokens.into_iter().collect();
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count();
    let union = ta.len() + tb.len() - inter;
    inter as f64 / union as f64
}

/// Resolves each QA item's reference texts to item ids of the same
/// character: exact match after normalization first, then the best token
/// overlap at or above [`ALIGN_OVERLAP_THRESHOLD`]. Anything else is
/// reported as unaligned.
pub fn align_references(qa: &[QAItem], items: &[MemoryItem]) -> Alignment {
    let mut by_char: HashMap<&str, Vec<&MemoryItem>> = HashMap::new();
    for it in items {
        by_char.entry(it.character_id.as_str()).or_default().push(it);
    }
    let mut report = AlignmentReport::default();
    let mut out = Vec::with_capacity(qa.len());

    for q in qa {
        let pool = by_char.get(q.character_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let mut ids: Vec<String> = Vec::new();
        for (ri, reference) in q.reference_memory_texts.iter().enumerate() {
            let norm = normalize(reference);
            if let Some(hit) = pool.iter().find(|it| it.text == norm) {
                report.exact += 1;
                if !ids.contains(&hit.item_id) {
                    ids.push(hit.item_id.clone());
                }
                continue;
            }
            let mut best: Option<(&MemoryItem, f64)> = None;
            for it in pool {
                let o = token_overlap(&norm, &it.text);
                if best.map_or(true, |(_, b)| o > b) {
                    best = Some((it, o));
                }
            }
            match best {
                Some((it, o)) if o >= ALIGN_OVERLAP_THRESHOLD => {
                    report.fuzzy += 1;
                    if !ids.contains(&it.item_id) {
                        ids.push(it.item_id.clone());
                    }
                }
                other => report.unaligned.push(UnalignedReference {
                    qa_id: q.qa_id.clone(),
                    reference_index: ri,
                    best_overlap: other.map_or(0.0, |(_, o)| o),
                }),
            }
        }
        let mut q = q.clone();
        q.reference_item_ids = ids;
        out.push(q);
    }
    Alignment { qa: out, report }
}
