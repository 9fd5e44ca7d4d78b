//! Deterministic generator of memory corpora with QA items.
//!
//! Output has the same shape as a real personal-memory dataset: characters
//! with profiles, relationships, events and event dialogues, plus questions
//! that each target one memory item. Every fact phrase a question asks about
//! is drawn at most once per character, so exactly one memory item contains
//! each anchor. Semantic and episodic questions use distinct phrasings, which
//! makes the labels learnable.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::LabeledQuestion;
use crate::store::{
    segment_character, Anchor, CharacterMemory, Dialogue, DialogueTurn, Event, IngestOptions,
    MemoryDatabase, MemoryItem, QAItem, Relationship, Subtype,
};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub n_characters: usize,
    pub relationships_per_char: usize,
    pub events_per_char: usize,
    pub dialogues_per_event: usize,
    pub turns_per_dialogue: usize,
    pub qa_per_char: usize,
    pub anchor_per_qa: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 42,
            n_characters: 20,
            relationships_per_char: 9,
            events_per_char: 10,
            dialogues_per_event: 1,
            turns_per_dialogue: 4,
            qa_per_char: 24,
            anchor_per_qa: 3,
        }
    }
}

impl GenSpec {
    /// The reference configuration used by the acceptance suite.
    pub fn shipped() -> Self {
        GenSpec::default()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub db: MemoryDatabase,
    pub qa: Vec<QAItem>,
    pub labeled: Vec<LabeledQuestion>,
}

const SURNAMES: &[&str] = &[
    "Wang", "Li", "Zhang", "Liu", "Chen", "Yang", "Zhao", "Huang", "Zhou", "Wu", "Xu", "Sun",
    "Hu", "Zhu", "Gao", "Lin", "He", "Guo", "Ma", "Luo",
];

const SYLLABLES: &[&str] = &[
    "jia", "hao", "xin", "yu", "zi", "han", "ming", "rui", "an", "qi", "chen", "wen", "bo",
    "yi", "lan", "tian", "kai", "xuan", "mei", "jun", "shu", "ning", "feng", "yao", "lin",
    "ze", "qing", "hong", "le", "xiao",
];

const GENDERS: &[&str] = &["男", "女"];
const NICKNAMES: &[&str] = &[
    "小虎", "阿星", "大宝", "小鱼", "豆豆", "团子", "阿福", "小月", "果果", "石头", "阿青", "米粒",
];
const NATIONALITIES: &[&str] = &[
    "中国", "新加坡", "加拿大", "澳大利亚", "马来西亚", "新西兰", "英国", "法国",
];
const APPEARANCES: &[&str] = &[
    "高个子短发", "戴圆框眼镜", "留着长卷发", "皮肤黝黑", "总是穿格子衬衫", "眉毛浓密",
    "扎着马尾辫", "左脸有酒窝",
];
const ACHIEVEMENTS: &[&str] = &[
    "出版过一本摄影集", "完成过三次全程马拉松", "创办了一家社区咖啡馆", "设计过一座跨江大桥",
    "培养出两名奥赛金牌学生", "研发过一款手机应用", "策划过一次城市音乐节", "救治过上千名病人",
];
const EDUCATIONS: &[&str] = &[
    "复旦大学新闻系", "浙江大学计算机系", "四川美术学院", "同济大学建筑系", "北京师范大学物理系",
    "中山大学医学院", "武汉大学法学院", "南开大学经济学院",
];
const PROFESSIONS: &[&str] = &[
    "摄影师", "建筑设计师", "中学物理老师", "急诊科医生", "软件工程师", "西餐厨师", "财经记者",
    "执业律师", "注册会计师", "宠物医生",
];
const EMPLOYERS: &[&str] = &[
    "星河传媒公司", "华东建筑设计院", "市第一人民医院", "蓝鲸科技公司", "启明中学",
    "晨光律师事务所", "远航物流集团", "青禾餐饮集团",
];
const AWARDS: &[&str] = &[
    "金镜头奖", "青年教师教学比赛一等奖", "年度优秀员工奖", "城市设计银奖", "新人创作奖",
    "科技进步三等奖", "最佳新闻报道奖", "社区服务之星",
];
const ROLE_MODELS: &[&str] = &[
    "鲁迅", "梁思成", "居里夫人", "袁隆平", "贝聿铭", "张桂梅", "屠呦呦", "钱学森",
];

const CATEGORIES: &[&str] = &[
    "同事", "大学同学", "表哥", "邻居", "健身教练", "老朋友", "合伙人", "导师", "室友", "客户",
];
const HOBBIES: &[&str] = &[
    "打羽毛球", "做陶艺", "养多肉植物", "弹吉他", "钓鱼", "下围棋", "写毛笔字", "拍星空",
    "做烘焙", "跳街舞", "骑山地车", "收集邮票", "攀岩", "画水彩", "种蔬菜", "玩魔方",
];
const CITIES: &[&str] = &[
    "杭州", "成都", "西安", "青岛", "厦门", "大理", "苏州", "南京", "重庆", "长沙", "昆明", "桂林",
    "哈尔滨", "武汉", "丽江", "拉萨",
];
const SPOTS: &[&str] = &[
    "一家茶馆", "湖边公园", "老街书店", "海边码头", "山顶观景台", "夜市", "博物馆", "体育馆",
    "火车站", "美术馆", "植物园", "咖啡馆", "菜市场", "游乐园", "滑雪场", "古镇客栈",
];
const ACTIVITIES: &[&str] = &[
    "一起看话剧", "一起参加读书会", "一起拍日落", "一起包饺子", "一起逛庙会", "一起划船",
    "一起露营", "一起看画展", "一起学做陶艺", "一起骑行", "一起放风筝", "一起听讲座",
    "一起打保龄球", "一起做志愿者", "一起看球赛", "一起逛花市", "一起爬山", "一起吃火锅",
    "一起看烟花", "一起学潜水",
];
const INCIDENTS: &[&str] = &[
    "下了一场大雨", "遇到了一只流浪猫", "手机没电了", "赶上了末班车", "捡到了一个钱包",
    "看到了双彩虹", "迷路了两个小时", "吃到了最好吃的糖葫芦", "排了很久的队", "认识了一位老画家",
    "丢了一把雨伞", "拍到了流星", "碰到了小学班主任", "被堵在了隧道里", "中了一张彩票",
    "停了一整晚的电", "帮一位老人找到了家", "差点错过了航班", "收到了一封匿名信", "看到了海豚",
    "参加了一场婚礼", "发现了一家宝藏小店", "遇上了沙尘暴", "喝到了自酿的米酒",
];
const COLORS: &[&str] = &[
    "红色的", "蓝色的", "墨绿色的", "米白色的", "橘黄色的", "深灰色的", "粉色的", "咖啡色的",
    "紫色的", "银色的",
];
const OBJECTS: &[&str] = &[
    "保温杯", "帆布包", "折叠伞", "胶片相机", "笔记本", "望远镜", "登山杖", "蓝牙音箱", "手电筒",
    "野餐垫", "草编帽", "水彩盒", "小提琴", "滑板", "行李箱", "风衣", "围巾", "手套", "墨镜",
    "充电宝",
];
const DEEDS: &[&str] = &[
    "顺路买了", "临走前送了", "路上弄丢了", "意外收到了", "排队领到了", "在摊位上试了",
    "帮朋友挑了", "抽奖抽中了",
];
const THINGS: &[&str] = &[
    "一束向日葵", "两斤橘子", "一本旧杂志", "一只风筝", "一盒月饼", "一张明信片", "一副象棋",
    "一个书签", "一把折扇", "一罐蜂蜜",
];

/// Fixed attribute order: (name, vocabulary, usable as a question target).
const PROFILE_FIELDS: &[(&str, &[&str], bool)] = &[
    ("性别", GENDERS, false),
    ("昵称", NICKNAMES, true),
    ("年龄", &[], true),
    ("国籍", NATIONALITIES, true),
    ("外貌", APPEARANCES, true),
    ("成就", ACHIEVEMENTS, true),
    ("教育背景", EDUCATIONS, true),
    ("职业", PROFESSIONS, true),
    ("工作单位", EMPLOYERS, true),
    ("获奖", AWARDS, true),
    ("偶像", ROLE_MODELS, true),
];

const SEMANTIC_PRO_TEMPLATES: &[&str] = &[
    "{name}的{attr}是什么？",
    "请问{name}的{attr}是什么？",
    "你知道{name}的{attr}是什么吗？",
];

/// Shuffled draw-without-replacement; when exhausted, reshuffles and tags
/// later rounds with a numeric suffix so values stay distinct.
struct Pool {
    items: Vec<String>,
    next: usize,
    round: usize,
}

impl Pool {
    fn new(items: Vec<String>, rng: &mut ChaCha8Rng) -> Self {
        let mut items = items;
        items.shuffle(rng);
        Pool {
            items,
            next: 0,
            round: 0,
        }
    }

    fn of(items: &[&str], rng: &mut ChaCha8Rng) -> Self {
        Self::new(items.iter().map(|s| s.to_string()).collect(), rng)
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> String {
        if self.next == self.items.len() {
            self.items.shuffle(rng);
            self.next = 0;
            self.round += 1;
        }
        let base = &self.items[self.next];
        self.next += 1;
        if self.round == 0 {
            base.clone()
        } else {
            format!("{base}{}", self.round + 1)
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn given_names() -> Vec<String> {
    let mut out = Vec::with_capacity(SYLLABLES.len() * SYLLABLES.len());
    for a in SYLLABLES {
        for b in SYLLABLES {
            if a != b {
                out.push(capitalize(&format!("{a}{b}")));
            }
        }
    }
    out
}

fn compose(a: &[&str], b: &[&str], sep: &str) -> Vec<String> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| format!("{x}{sep}{y}")))
        .collect()
}

fn dates() -> Vec<String> {
    let mut out = Vec::new();
    for y in 2008..2024 {
        for m in 1..=12 {
            for d in 1..=28 {
                out.push(format!("{y}年{m}月{d}日"));
            }
        }
    }
    out
}

/// A question target: the memory item, the question, and the answer with
/// its fact phrases in order of appearance.
struct Target {
    subtype: Subtype,
    provenance_key: String,
    question: String,
    answer: String,
    facts: Vec<String>,
}

struct CharacterDraft {
    memory: CharacterMemory,
    targets: Vec<Target>,
}

fn person_name(surname: &str, given: &str) -> String {
    format!("{surname} {given}")
}

fn draft_character(spec: &GenSpec, name: String, rng: &mut ChaCha8Rng) -> CharacterDraft {
    let mut given = Pool::new(given_names(), rng);
    let mut surnames = Pool::of(SURNAMES, rng);
    let mut places = Pool::new(compose(CITIES, SPOTS, "的"), rng);
    let mut categories = Pool::of(CATEGORIES, rng);
    let mut hobbies = Pool::of(HOBBIES, rng);
    let mut dates = Pool::new(dates(), rng);
    let mut activities = Pool::of(ACTIVITIES, rng);
    let mut incidents = Pool::of(INCIDENTS, rng);
    let mut objects = Pool::new(compose(COLORS, OBJECTS, ""), rng);
    let mut extras = Pool::new(compose(DEEDS, THINGS, ""), rng);
    let mut amounts = Pool::new((100..1000).map(|n| n.to_string()).collect(), rng);

    let mut targets = Vec::new();
    let mut profile = std::collections::BTreeMap::new();
    for (attr, vocab, targetable) in PROFILE_FIELDS {
        let value = if vocab.is_empty() {
            format!("{}岁", rng.gen_range(22..66))
        } else {
            vocab.choose(rng).expect("nonempty vocabulary").to_string()
        };
        if *targetable {
            let template = SEMANTIC_PRO_TEMPLATES.choose(rng).expect("templates");
            targets.push(Target {
                subtype: Subtype::Profile,
                provenance_key: format!("profile/{attr}"),
                question: template.replace("{name}", &name).replace("{attr}", attr),
                answer: format!("{name}的{attr}是{value}。"),
                facts: vec![value.clone()],
            });
        }
        profile.insert(attr.to_string(), value);
    }

    let mut relationships = Vec::new();
    for i in 0..spec.relationships_per_char {
        let peer = person_name(&surnames.draw(rng), &given.draw(rng));
        let category = categories.draw(rng);
        let place = places.draw(rng);
        let hobby = hobbies.draw(rng);
        let description = format!("{peer}是{name}的{category}，两人在{place}认识，{peer}平时喜欢{hobby}。");
        targets.push(Target {
            subtype: Subtype::Relationship,
            provenance_key: format!("relationship/{i}"),
            question: format!("{peer}和{name}是什么关系？两人在哪里认识，{peer}平时喜欢什么？"),
            answer: description.clone(),
            facts: vec![category.clone(), place, hobby],
        });
        relationships.push(Relationship {
            peer_name: peer,
            category,
            description,
        });
    }

    let mut events = Vec::new();
    let mut dialogues = Vec::new();
    for e in 0..spec.events_per_char {
        let event_id = format!("E{e:03}");
        let counterpart = person_name(&surnames.draw(rng), &given.draw(rng));
        let date = dates.draw(rng);
        let place = places.draw(rng);
        let activity = activities.draw(rng);
        let incident = incidents.draw(rng);
        let narrative = format!("{date}，{name}和{counterpart}在{place}{activity}，那天{incident}。");
        targets.push(Target {
            subtype: Subtype::Event,
            provenance_key: format!("event/{event_id}"),
            question: format!("{name}和{counterpart}{activity}是在什么时候、什么地方？那天发生了什么？"),
            answer: narrative.clone(),
            facts: vec![date, place, incident],
        });

        for j in 0..spec.dialogues_per_event {
            let dialogue_id = format!("D{e:03}-{j}");
            let mut turns = Vec::new();
            for t in 0..spec.turns_per_dialogue {
                let speaker = if t % 2 == 0 { &name } else { &counterpart };
                let object = objects.draw(rng);
                let amount = format!("{}元", amounts.draw(rng));
                let extra = extras.draw(rng);
                let utterance = format!("那次{activity}，我带着{object}，花了{amount}，还{extra}。");
                targets.push(Target {
                    subtype: Subtype::Dialogue,
                    provenance_key: format!("dialogue/{dialogue_id}/{t}"),
                    question: format!(
                        "{speaker}在对话里说那次带着{object}{activity}，当时花了多少钱，还做了什么？"
                    ),
                    answer: format!("{speaker}说那次{activity}带着{object}，花了{amount}，还{extra}。"),
                    facts: vec![object, amount, extra],
                });
                turns.push(DialogueTurn {
                    speaker: speaker.clone(),
                    utterance,
                });
            }
            dialogues.push(Dialogue {
                dialogue_id,
                event_id: Some(event_id.clone()),
                turns,
            });
        }
        events.push(Event {
            event_id,
            topic: activity,
            narrative,
        });
    }

    CharacterDraft {
        memory: CharacterMemory {
            character_id: name,
            profile,
            relationships,
            events,
            dialogues,
        },
        targets,
    }
}

/// Char-offset span of `needle` in `hay`, searching from char `from`.
fn find_span(hay: &str, needle: &str, from: usize) -> Option<(usize, usize)> {
    let byte_from = hay.char_indices().nth(from).map(|(b, _)| b).unwrap_or(hay.len());
    let b = hay[byte_from..].find(needle)? + byte_from;
    let start = hay[..b].chars().count();
    Some((start, start + needle.chars().count()))
}

fn anchors_for(answer: &str, facts: &[String], limit: usize) -> Option<Vec<Anchor>> {
    let mut anchors = Vec::new();
    let mut from = 0;
    for f in facts.iter().take(limit) {
        let (start, end) = find_span(answer, f, from)?;
        anchors.push(Anchor {
            text: f.clone(),
            start,
            end,
        });
        from = end;
    }
    Some(anchors)
}

/// Each fact must occur, after normalization, in the target item and in no
/// other item of the character.
fn facts_unique(facts: &[String], target: &MemoryItem, items: &[MemoryItem]) -> bool {
    facts.iter().all(|f| {
        let nf = normalize(f);
        target.text.contains(&nf)
            && items
                .iter()
                .filter(|it| it.item_id != target.item_id)
                .all(|it| !it.text.contains(&nf))
    })
}

pub fn generate_corpus(spec: &GenSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut names = Pool::new(
        SURNAMES
            .iter()
            .flat_map(|s| given_names().into_iter().map(move |g| person_name(s, &g)))
            .collect(),
        &mut rng,
    );

    let mut characters = Vec::with_capacity(spec.n_characters);
    let mut qa = Vec::new();
    let mut labeled = Vec::new();
    let mut used_names = HashSet::new();

    for ci in 0..spec.n_characters {
        let mut name = names.draw(&mut rng);
        while !used_names.insert(name.clone()) {
            name = names.draw(&mut rng);
        }
        let draft = draft_character(spec, name, &mut rng);
        let items = segment_character(&draft.memory);

        let mut semantic = Vec::new();
        let mut episodic = Vec::new();
        for target in &draft.targets {
            let Some(item) = items.iter().find(|it| it.provenance.path() == target.provenance_key) else {
                continue;
            };
            let facts: Vec<String> = target.facts.iter().take(spec.anchor_per_qa).cloned().collect();
            if !facts_unique(&facts, item, &items) {
                continue;
            }
            if target.subtype.mem_type() == crate::store::MemoryType::Semantic {
                semantic.push((target, item));
            } else {
                episodic.push((target, item));
            }
        }
        semantic.shuffle(&mut rng);
        episodic.shuffle(&mut rng);

        let want_sem = spec.qa_per_char / 2;
        let take_sem = want_sem.min(semantic.len());
        let take_epi = (spec.qa_per_char - take_sem).min(episodic.len());
        let take_sem = (spec.qa_per_char - take_epi).min(semantic.len());
        let mut chosen: Vec<_> = semantic
            .into_iter()
            .take(take_sem)
            .chain(episodic.into_iter().take(take_epi))
            .collect();
        chosen.shuffle(&mut rng);

        for (qi, (target, item)) in chosen.into_iter().enumerate() {
            let anchors = anchors_for(&target.answer, &target.facts, spec.anchor_per_qa)
                .expect("facts are embedded in the answer");
            let qa_id = format!("c{ci:03}-q{qi:03}");
            labeled.push(LabeledQuestion {
                label: target.subtype.mem_type(),
                question: target.question.clone(),
            });
            qa.push(QAItem {
                qa_id,
                character_id: draft.memory.character_id.clone(),
                question: target.question.clone(),
                answer: target.answer.clone(),
                reference_memory_texts: vec![item.text.clone()],
                reference_item_ids: vec![item.item_id.clone()],
                anchors,
            });
        }
        characters.push(draft.memory);
    }

    let db = MemoryDatabase::from_characters(characters, &IngestOptions::default())
        .expect("generated characters are valid");
    SyntheticCorpus { db, qa, labeled }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{align_references, segment_memories, serialize_database, validate_anchor};

    fn small() -> GenSpec {
        GenSpec {
            seed: 7,
            n_characters: 5,
            ..GenSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_corpus(&small());
        let b = generate_corpus(&small());
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        serialize_database(&a.db, &mut ba).unwrap();
        serialize_database(&b.db, &mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(a.qa, b.qa);
        let c = generate_corpus(&GenSpec { seed: 8, ..small() });
        assert_ne!(a.qa, c.qa);
    }

    #[test]
    fn shape_follows_spec() {
        let spec = small();
        let corpus = generate_corpus(&spec);
        let stats = corpus.db.stats();
        assert_eq!(stats.characters, 5);
        assert_eq!(stats.relationships, 5 * spec.relationships_per_char);
        assert_eq!(stats.events, 5 * spec.events_per_char);
        assert_eq!(stats.utterances, 5 * spec.events_per_char * spec.turns_per_dialogue);
        assert_eq!(corpus.qa.len(), 5 * spec.qa_per_char);
        assert_eq!(corpus.labeled.len(), corpus.qa.len());
        let semantic = corpus
            .labeled
            .iter()
            .filter(|l| l.label == crate::store::MemoryType::Semantic)
            .count();
        assert_eq!(semantic, corpus.qa.len() / 2);
    }

    #[test]
    fn anchors_valid_and_unique() {
        let corpus = generate_corpus(&small());
        let items = segment_memories(&corpus.db);
        for q in &corpus.qa {
            assert!(!q.anchors.is_empty());
            assert!(q.anchors.len() <= 3);
            for a in &q.anchors {
                assert!(validate_anchor(&q.answer, a), "{:?}", a);
                let holders: Vec<_> = items
                    .iter()
                    .filter(|it| it.character_id == q.character_id && it.text.contains(&normalize(&a.text)))
                    .collect();
                assert_eq!(holders.len(), 1, "anchor {:?} in {} items", a.text, holders.len());
                assert_eq!(holders[0].item_id, q.reference_item_ids[0]);
            }
        }
    }

    #[test]
    fn references_align_exactly() {
        let corpus = generate_corpus(&small());
        let items = segment_memories(&corpus.db);
        let mut stripped = corpus.qa.clone();
        stripped.iter_mut().for_each(|q| q.reference_item_ids.clear());
        let aligned = align_references(&stripped, &items);
        assert!(aligned.report.unaligned.is_empty());
        assert_eq!(aligned.report.fuzzy, 0);
        for (a, b) in aligned.qa.iter().zip(&corpus.qa) {
            assert_eq!(a.reference_item_ids, b.reference_item_ids);
        }
    }

    #[test]
    fn pool_exhaustion_stays_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Pool::of(&["a", "b"], &mut rng);
        let drawn: HashSet<_> = (0..6).map(|_| p.draw(&mut rng)).collect();
        assert_eq!(drawn.len(), 6);
    }

    #[test]
    fn zero_counts() {
        let corpus = generate_corpus(&GenSpec {
            n_characters: 0,
            ..GenSpec::default()
        });
        assert!(corpus.db.is_empty());
        assert!(corpus.qa.is_empty());
    }
}
