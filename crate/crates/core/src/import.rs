//! Adapter from the published PerLTQA repository layout to the canonical
//! schema.
//!
//! The public release ships one memory file keyed by character name and one
//! QA file; field names differ between releases and languages, so every
//! field is looked up under a list of known aliases. Anything that cannot be
//! mapped is skipped and counted in the [`ImportReport`] rather than failing
//! the import.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::store::{
    Anchor, CharacterMemory, Dialogue, DialogueTurn, Event, IngestOptions, MemoryDatabase, QAItem, Relationship,
    StoreError,
};

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("expected {expected} at {path}")]
    Shape { path: String, expected: &'static str },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImportReport {
    pub characters: usize,
    pub qa_items: usize,
    /// Paths of values that could not be mapped.
    pub skipped: Vec<String>,
    /// Anchor strings not found verbatim in their answer.
    pub dropped_anchors: usize,
    /// Dialogue event links pointing at unknown events, cleared.
    pub cleared_event_links: usize,
}

const PROFILE_KEYS: &[&str] = &["profile", "profiles", "Profile", "个人资料", "档案"];
const RELATION_KEYS: &[&str] = &[
    "social_relationship",
    "social_relationships",
    "relationships",
    "Social Relationship",
    "社会关系",
];
const EVENT_KEYS: &[&str] = &["events", "event", "Events", "事件"];
const DIALOGUE_KEYS: &[&str] = &["dialogues", "dialogue", "Dialogues", "对话"];
const NAME_KEYS: &[&str] = &["character_id", "character", "name", "姓名", "名字"];
const CATEGORY_KEYS: &[&str] = &["category", "relationship", "relation", "关系", "关系类型"];
const DESCRIPTION_KEYS: &[&str] = &["description", "content", "描述", "内容", "简介"];
const NARRATIVE_KEYS: &[&str] = &["narrative", "content", "description", "内容", "事件内容", "描述"];
const TOPIC_KEYS: &[&str] = &["topic", "title", "summary", "主题", "标题", "事件名称"];
const TURNS_KEYS: &[&str] = &["turns", "content", "dialogue", "utterances", "内容", "对话内容"];
const EVENT_LINK_KEYS: &[&str] = &["event_id", "event", "事件", "事件id"];
const SPEAKER_KEYS: &[&str] = &["speaker", "role", "说话人", "角色"];
const UTTERANCE_KEYS: &[&str] = &["utterance", "text", "content", "内容", "话语"];
const QUESTION_KEYS: &[&str] = &["question", "Question", "问题"];
const ANSWER_KEYS: &[&str] = &["answer", "Answer", "答案"];
const REFERENCE_KEYS: &[&str] = &["reference_memory", "Reference Memory", "reference", "references", "参考记忆"];
const ANCHOR_KEYS: &[&str] = &["memory_anchors", "Memory Anchors", "anchors", "anchor", "记忆锚点"];
const QA_ID_KEYS: &[&str] = &["qa_id", "id", "ID"];

fn field<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k)).filter(|v| !v.is_null())
}

/// Scalar or list rendered as text; objects are skipped.
fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(text_of).collect();
            (!parts.is_empty()).then(|| parts.join("、"))
        }
        _ => None,
    }
}

/// Entries of a collection given either as an object keyed by id or as an
/// array (ids then become positions).
fn entries(v: &Value) -> Vec<(String, &Value)> {
    match v {
        Value::Object(m) => m.iter().map(|(k, v)| (k.clone(), v)).collect(),
        Value::Array(a) => a.iter().enumerate().map(|(i, v)| (i.to_string(), v)).collect(),
        _ => Vec::new(),
    }
}

fn split_turn(line: &str) -> DialogueTurn {
    for sep in [':', '：'] {
        if let Some((speaker, utterance)) = line.split_once(sep) {
            if !speaker.trim().is_empty() && speaker.chars().count() <= 30 {
                return DialogueTurn {
                    speaker: speaker.trim().to_string(),
                    utterance: utterance.trim().to_string(),
                };
            }
        }
    }
    DialogueTurn {
        speaker: String::new(),
        utterance: line.trim().to_string(),
    }
}

fn turns_of(v: &Value, report: &mut ImportReport, path: &str) -> Vec<DialogueTurn> {
    let mut out = Vec::new();
    match v {
        Value::String(s) => out.extend(s.lines().filter(|l| !l.trim().is_empty()).map(split_turn)),
        Value::Array(_) | Value::Object(_) => {
            for (key, t) in entries(v) {
                match t {
                    Value::String(s) => {
                        let mut turn = split_turn(s);
                        if turn.speaker.is_empty() && v.is_object() {
                            turn.speaker = key.clone();
                        }
                        out.push(turn);
                    }
                    Value::Object(o) => match field(o, UTTERANCE_KEYS).and_then(text_of) {
                        Some(utterance) => out.push(DialogueTurn {
                            speaker: field(o, SPEAKER_KEYS).and_then(text_of).unwrap_or_default(),
                            utterance,
                        }),
                        None => report.skipped.push(format!("{path}.{key}")),
                    },
                    _ => report.skipped.push(format!("{path}.{key}")),
                }
            }
        }
        _ => report.skipped.push(path.to_string()),
    }
    out
}

fn character(name: &str, obj: &Map<String, Value>, report: &mut ImportReport) -> CharacterMemory {
    let base = format!("memory[{name:?}]");
    let mut profile = BTreeMap::new();
    if let Some(Value::Object(p)) = field(obj, PROFILE_KEYS) {
        for (attr, v) in p {
            match text_of(v) {
                Some(t) => {
                    profile.insert(attr.clone(), t);
                }
                None => report.skipped.push(format!("{base}.profile.{attr}")),
            }
        }
    }

    let mut relationships = Vec::new();
    if let Some(v) = field(obj, RELATION_KEYS) {
        for (key, r) in entries(v) {
            let rel = match r {
                Value::Object(o) => field(o, DESCRIPTION_KEYS).and_then(text_of).map(|description| Relationship {
                    peer_name: field(o, NAME_KEYS).and_then(text_of).unwrap_or_else(|| key.clone()),
                    category: field(o, CATEGORY_KEYS).and_then(text_of).unwrap_or_else(|| "unknown".into()),
                    description,
                }),
                other => text_of(other).map(|description| Relationship {
                    peer_name: key.clone(),
                    category: "unknown".into(),
                    description,
                }),
            };
            match rel {
                Some(rel) => relationships.push(rel),
                None => report.skipped.push(format!("{base}.relationships.{key}")),
            }
        }
    }

    let mut events = Vec::new();
    if let Some(v) = field(obj, EVENT_KEYS) {
        for (key, e) in entries(v) {
            let ev = match e {
                Value::Object(o) => field(o, NARRATIVE_KEYS).and_then(text_of).map(|narrative| Event {
                    event_id: field(o, &["event_id", "id"]).and_then(text_of).unwrap_or_else(|| key.clone()),
                    topic: field(o, TOPIC_KEYS).and_then(text_of).unwrap_or_default(),
                    narrative,
                }),
                other => text_of(other).map(|narrative| Event {
                    event_id: key.clone(),
                    topic: String::new(),
                    narrative,
                }),
            };
            match ev {
                Some(ev) => events.push(ev),
                None => report.skipped.push(format!("{base}.events.{key}")),
            }
        }
    }

    let mut dialogues = Vec::new();
    if let Some(v) = field(obj, DIALOGUE_KEYS) {
        for (key, d) in entries(v) {
            let path = format!("{base}.dialogues.{key}");
            let (event_id, turns) = match d {
                Value::Object(o) if field(o, TURNS_KEYS).is_some() => (
                    field(o, EVENT_LINK_KEYS).and_then(text_of),
                    turns_of(field(o, TURNS_KEYS).expect("checked"), report, &path),
                ),
                other => (None, turns_of(other, report, &path)),
            };
            let event_id = match event_id {
                Some(id) if events.iter().any(|e| e.event_id == id) => Some(id),
                Some(_) => {
                    report.cleared_event_links += 1;
                    None
                }
                None => None,
            };
            dialogues.push(Dialogue {
                dialogue_id: key,
                event_id,
                turns,
            });
        }
    }

    CharacterMemory {
        character_id: name.to_string(),
        profile,
        relationships,
        events,
        dialogues,
    }
}

/// Maps a published memory file onto the canonical model.
pub fn import_memory(root: &Value) -> Result<(MemoryDatabase, ImportReport), ImportError> {
    let mut report = ImportReport::default();
    let mut characters = Vec::new();
    match root {
        Value::Object(m) => {
            for (name, v) in m {
                match v {
                    Value::Object(o) => characters.push(character(name, o, &mut report)),
                    _ => report.skipped.push(format!("memory[{name:?}]")),
                }
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                let Value::Object(o) = v else {
                    report.skipped.push(format!("memory[{i}]"));
                    continue;
                };
                match field(o, NAME_KEYS).and_then(text_of) {
                    Some(name) => characters.push(character(&name, o, &mut report)),
                    None => report.skipped.push(format!("memory[{i}]")),
                }
            }
        }
        _ => {
            return Err(ImportError::Shape {
                path: "memory".into(),
                expected: "an object keyed by character or an array of characters",
            })
        }
    }
    report.characters = characters.len();
    let db = MemoryDatabase::from_characters(characters, &IngestOptions::default())?;
    Ok((db, report))
}

fn char_find(hay: &str, needle: &str) -> Option<(usize, usize)> {
    let b = hay.find(needle)?;
    let start = hay[..b].chars().count();
    Some((start, start + needle.chars().count()))
}

fn qa_item(character: &str, index: usize, o: &Map<String, Value>, report: &mut ImportReport) -> Option<QAItem> {
    let question = field(o, QUESTION_KEYS).and_then(text_of)?;
    let answer = field(o, ANSWER_KEYS).and_then(text_of).unwrap_or_default();
    let reference_memory_texts = match field(o, REFERENCE_KEYS) {
        Some(Value::Array(a)) => a.iter().filter_map(text_of).collect(),
        Some(v) => text_of(v).into_iter().collect(),
        None => Vec::new(),
    };
    let mut anchors = Vec::new();
    if let Some(v) = field(o, ANCHOR_KEYS) {
        let raw: Vec<String> = match v {
            Value::Array(a) => a
                .iter()
                .filter_map(|x| match x {
                    Value::Object(ao) => field(ao, &["text", "anchor"]).and_then(text_of),
                    other => text_of(other),
                })
                .collect(),
            Value::String(s) => s
                .split([',', '，', '、', ';', '；'])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            _ => Vec::new(),
        };
        for text in raw {
            match char_find(&answer, &text) {
                Some((start, end)) => anchors.push(Anchor { text, start, end }),
                None => report.dropped_anchors += 1,
            }
        }
    }
    Some(QAItem {
        qa_id: field(o, QA_ID_KEYS)
            .and_then(text_of)
            .unwrap_or_else(|| format!("{character}-{index}")),
        character_id: character.to_string(),
        question,
        answer,
        reference_memory_texts,
        reference_item_ids: Vec::new(),
        anchors,
    })
}

/// Maps a published QA file onto [`QAItem`]s. Reference ids are left empty
/// for [`crate::store::align_references`] to fill.
pub fn import_qa(root: &Value, report: &mut ImportReport) -> Result<Vec<QAItem>, ImportError> {
    fn take(character: &str, list: &Value, out: &mut Vec<QAItem>, report: &mut ImportReport) {
        for (i, (_, v)) in entries(list).into_iter().enumerate() {
            let item = match v {
                Value::Object(o) => qa_item(character, i, o, report),
                _ => None,
            };
            match item {
                Some(q) => out.push(q),
                None => report.skipped.push(format!("qa[{character:?}][{i}]")),
            }
        }
    }

    let mut out = Vec::new();
    match root {
        Value::Object(m) => {
            for (name, list) in m {
                take(name, list, &mut out, report);
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                let Value::Object(o) = v else {
                    report.skipped.push(format!("qa[{i}]"));
                    continue;
                };
                match field(o, NAME_KEYS).and_then(text_of) {
                    Some(name) if field(o, QUESTION_KEYS).is_some() => {
                        if let Some(q) = qa_item(&name, i, o, report) {
                            out.push(q);
                        }
                    }
                    Some(name) => {
                        let list = field(o, &["qa", "questions", "items"]).cloned().unwrap_or(Value::Null);
                        take(&name, &list, &mut out, report);
                    }
                    None => report.skipped.push(format!("qa[{i}]")),
                }
            }
        }
        _ => {
            return Err(ImportError::Shape {
                path: "qa".into(),
                expected: "an object keyed by character or an array",
            })
        }
    }
    // Duplicate ids from the source get a positional suffix.
    let mut seen = std::collections::HashMap::<String, usize>::new();
    for q in &mut out {
        let n = seen.entry(q.qa_id.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            q.qa_id = format!("{}#{}", q.qa_id, n);
        }
    }
    report.qa_items = out.len();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{align_references, segment_memories, validate_anchor};
    use serde_json::json;

    fn memory() -> Value {
        json!({
            "王伟": {
                "profile": {"职业": "摄影师", "年龄": 32, "爱好": ["登山", "摄影"], "照片": {"url": "x"}},
                "social_relationship": {
                    "李娜": {"关系": "同事", "描述": "李娜是王伟的同事，两人常一起出差。"},
                    "张强": "张强是王伟的大学同学。"
                },
                "events": {
                    "e1": {"主题": "杭州拍摄", "内容": "2019年王伟在杭州拍摄了西湖日出。"},
                    "e2": "2020年王伟参加了摄影展。"
                },
                "dialogues": {
                    "d1": {"event_id": "e1", "content": ["王伟：今天的日出真美。", "李娜：拍到了吗？"]},
                    "d2": {"event_id": "missing", "content": "王伟: 你好\n张强: 好久不见"}
                }
            }
        })
    }

    #[test]
    fn maps_published_layout() {
        let (db, report) = import_memory(&memory()).unwrap();
        assert_eq!(report.characters, 1);
        assert_eq!(report.cleared_event_links, 1);
        assert_eq!(report.skipped, vec!["memory[\"王伟\"].profile.照片".to_string()]);
        let c = db.get("王伟").unwrap();
        assert_eq!(c.profile["年龄"], "32");
        assert_eq!(c.profile["爱好"], "登山、摄影");
        assert_eq!(c.relationships.len(), 2);
        let lina = c.relationships.iter().find(|r| r.peer_name == "李娜").unwrap();
        assert_eq!(lina.category, "同事");
        assert_eq!(c.events.len(), 2);
        assert_eq!(c.dialogues[0].turns[1].speaker, "李娜");
        assert_eq!(c.dialogues[1].turns.len(), 2);
        assert_eq!(segment_memories(&db).len(), 3 + 2 + 2 + 4);
    }

    #[test]
    fn maps_qa_and_aligns() {
        let (db, mut report) = import_memory(&memory()).unwrap();
        let qa = json!({
            "王伟": [
                {"Question": "王伟的职业是什么？", "Answer": "王伟是一名摄影师。",
                 "Reference Memory": "王伟的职业: 摄影师", "Memory Anchors": ["摄影师", "记者"]},
                {"问题": "王伟在杭州拍了什么？", "答案": "西湖日出。", "参考记忆": ["2019年王伟在杭州拍摄了西湖日出。"],
                 "记忆锚点": "西湖日出"}
            ]
        });
        let items = import_qa(&qa, &mut report).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(report.dropped_anchors, 1);
        assert!(items.iter().all(|q| q.anchors.iter().all(|a| validate_anchor(&q.answer, a))));
        let aligned = align_references(&items, &segment_memories(&db));
        assert!(aligned.report.unaligned.is_empty());
        assert!(aligned.qa.iter().all(|q| q.reference_item_ids.len() == 1));
    }

    #[test]
    fn rejects_scalars() {
        assert!(matches!(import_memory(&json!(3)), Err(ImportError::Shape { .. })));
    }
}
