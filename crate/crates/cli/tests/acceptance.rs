//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any gating criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use memq::classifier::{evaluate_classifier, ClassDistribution, LabeledQuestion, NaiveBayes, QuestionClassifier};
use memq::eval::{
    em_count, map_memory_anchors, recall_at_k, run_ablation, AblationSetting, EvalConfig, EvalContext,
    MemoryCondition, Pipeline,
};
use memq::import::{import_memory, import_qa};
use memq::rerank::{composite_score, rerank, RerankConfig};
use memq::retriever::{build_indexes, retrieve, Bm25Params, InvertedIndex, RankedCandidate, ScoredIndex};
use memq::store::{
    align_references, segment_memories, Anchor, MemoryItem, MemoryType, Provenance, QAItem, Subtype,
};
use memq::synth::{generate_corpus, GenSpec};
use memq::synthesis::net::{deny_network, remote_requests};
use memq::synthesis::MockExtractive;
use memq::text::{analyze, normalize};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn interleaved_halves(labeled: &[LabeledQuestion]) -> (Vec<LabeledQuestion>, Vec<LabeledQuestion>) {
    let (train, test): (Vec<_>, Vec<_>) = labeled.iter().cloned().enumerate().partition(|(i, _)| i % 2 == 0);
    (
        train.into_iter().map(|(_, q)| q).collect(),
        test.into_iter().map(|(_, q)| q).collect(),
    )
}

// ---------------------------------------------------------------- 1. BM25

const VOCAB: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "记", "忆", "山", "水",
];

fn random_doc(rng: &mut ChaCha8Rng, max_tokens: usize) -> String {
    let n = rng.gen_range(1..=max_tokens);
    (0..n)
        .map(|_| *VOCAB.choose(rng).expect("nonempty"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn synthetic_item(i: usize, text: String, t: Subtype) -> MemoryItem {
    MemoryItem {
        item_id: format!("d{i:03}"),
        character_id: "c".into(),
        mem_type: t.mem_type(),
        subtype: t,
        text,
        provenance: Provenance::Event { event_id: i.to_string() },
    }
}

/// Direct Okapi BM25 over token lists, no index.
fn brute_force_scores(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    docs.iter()
        .map(|d| {
            let mut score = 0.0;
            for q in query {
                let tf = d.iter().filter(|t| *t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|x| x.contains(q)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
            }
            score
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut max_diff = 0.0f64;
    let mut queries = 0;
    for _ in 0..200 {
        let n_docs = rng.gen_range(1..=50);
        let items: Vec<MemoryItem> = (0..n_docs)
            .map(|i| synthetic_item(i, random_doc(&mut rng, 12), Subtype::Event))
            .collect();
        let index = InvertedIndex::build(&items).map_err(|e| e.to_string())?;
        let doc_tokens: Vec<Vec<String>> = items.iter().map(|it| analyze(&it.text).tokens).collect();
        for _ in 0..20 {
            let q = random_doc(&mut rng, 6);
            let expected = brute_force_scores(&doc_tokens, &analyze(&q).tokens, 1.2, 0.75);
            let got = index.score_all(&q);
            for (a, b) in got.iter().zip(&expected) {
                max_diff = max_diff.max((a - b).abs());
            }
            ensure!(max_diff <= 1e-9, "score mismatch {max_diff:e} for query {q:?}");

            let mut order: Vec<usize> = (0..n_docs).collect();
            order.sort_by(|&a, &b| {
                expected[b]
                    .partial_cmp(&expected[a])
                    .expect("finite scores")
                    .then_with(|| items[a].item_id.cmp(&items[b].item_id))
            });
            let ranked = retrieve(&index, &q, n_docs).map_err(|e| e.to_string())?;
            let ids: Vec<&str> = ranked.iter().map(|c| c.item_id.as_str()).collect();
            let oracle: Vec<&str> = order.iter().map(|&i| items[i].item_id.as_str()).collect();
            ensure!(ids == oracle, "ranking mismatch for query {q:?}");
            queries += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("{queries} queries, max |diff| {max_diff:.1e}, {secs:.2} s"))
}

// ------------------------------------------------------------ 2. reranker

fn direct_composite(p: f64, s: f64, alpha: f64, beta: f64) -> f64 {
    alpha * p + beta * (1.0 / (1.0 + (-s).exp()))
}

/// Composite descending, then raw score descending, then id ascending.
fn oracle_rerank(pool: &[RankedCandidate], dist: &ClassDistribution, cfg: &RerankConfig) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64, f64)> = pool
        .iter()
        .map(|c| {
            let p = match c.mem_type {
                MemoryType::Semantic => dist.p_semantic,
                MemoryType::Episodic => dist.p_episodic,
            };
            (c.item_id.clone(), c.raw_score, composite_score(p, c.raw_score, cfg))
        })
        .collect();
    let desc = |x: f64, y: f64| y.partial_cmp(&x).expect("finite scores");
    scored.sort_by(|a, b| desc(a.2, b.2).then(desc(a.1, b.1)).then(a.0.cmp(&b.0)));
    scored.into_iter().take(cfg.k).map(|(id, _, c)| (id, c)).collect()
}

fn random_pool(rng: &mut ChaCha8Rng) -> Vec<RankedCandidate> {
    let n = rng.gen_range(1..=12);
    (0..n)
        .map(|i| RankedCandidate {
            item_id: format!("m{:02}", rng.gen_range(0..40) * 100 + i),
            // Coarse values force ties in both raw and composite scores.
            raw_score: if rng.gen_bool(0.3) {
                rng.gen_range(0..4) as f64
            } else {
                rng.gen_range(-5.0..40.0)
            },
            mem_type: if rng.gen_bool(0.5) { MemoryType::Semantic } else { MemoryType::Episodic },
            composite_score: None,
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let cfg = RerankConfig::default();
    let mut max_diff = 0.0f64;
    for i in 0..40 {
        for j in 0..25 {
            let p = i as f64 / 39.0;
            let s = -30.0 + 60.0 * j as f64 / 24.0;
            max_diff = max_diff.max((composite_score(p, s, &cfg) - direct_composite(p, s, 0.5, 0.5)).abs());
        }
    }
    ensure!(max_diff <= 1e-12, "composite differs by {max_diff:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..500 {
        let pool = random_pool(&mut rng);
        let ps = rng.gen_range(0.0..=1.0);
        let dist = ClassDistribution {
            p_semantic: ps,
            p_episodic: 1.0 - ps,
        };
        let k = rng.gen_range(1..=pool.len() + 2);
        let alpha = rng.gen_range(0.0..=1.0);
        let cfg = RerankConfig {
            alpha,
            beta: 1.0 - alpha,
            k,
            ..RerankConfig::default()
        };
        let got: Vec<(String, f64)> = rerank(&pool, &dist, &cfg)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|c| (c.item_id, c.composite_score.unwrap_or(f64::NAN)))
            .collect();
        ensure!(got == oracle_rerank(&pool, &dist, &cfg), "pool {trial}: rerank differs from oracle");

        // Uniform distribution: order is raw score order.
        let uni = rerank(&pool, &ClassDistribution::UNIFORM, &cfg).map_err(|e| e.to_string())?;
        let mut by_raw = pool.clone();
        by_raw.sort_by(|a, b| {
            b.raw_score
                .partial_cmp(&a.raw_score)
                .expect("finite scores")
                .then(a.item_id.cmp(&b.item_id))
        });
        let a: Vec<&str> = uni.iter().map(|c| c.item_id.as_str()).collect();
        let b: Vec<&str> = by_raw.iter().take(k).map(|c| c.item_id.as_str()).collect();
        ensure!(a == b, "pool {trial}: uniform rerank changed the raw order");
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("grid max |diff| {max_diff:.1e}, 500 pools match, {secs:.2} s"))
}

// ------------------------------------------------------------------ 3. MAP

const MAP_ALPHABET: &[char] = &['a', 'b', 'c', '1', '记', '忆', '山'];

fn random_normal_string(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    (0..n).map(|_| *MAP_ALPHABET.choose(rng).expect("nonempty")).collect()
}

/// Sliding-window containment over chars.
fn naive_contains(hay: &str, needle: &str) -> bool {
    let h: Vec<char> = hay.chars().collect();
    let n: Vec<char> = needle.chars().collect();
    n.len() <= h.len() && (0..=h.len() - n.len()).any(|i| h[i..i + n.len()] == n[..])
}

fn qa_with_anchors(id: usize, anchors: &[String]) -> QAItem {
    QAItem {
        qa_id: format!("q{id:04}"),
        character_id: "c".into(),
        question: String::new(),
        answer: anchors.concat(),
        reference_memory_texts: Vec::new(),
        reference_item_ids: Vec::new(),
        anchors: anchors
            .iter()
            .map(|a| Anchor {
                text: a.clone(),
                start: 0,
                end: a.chars().count(),
            })
            .collect(),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut responses = Vec::new();
    let mut qa = Vec::new();
    let mut oracle_sum = 0.0;
    for i in 0..1000 {
        let response = random_normal_string(&mut rng, 20);
        let n_anchors = rng.gen_range(1..=4);
        let anchors: Vec<String> = (0..n_anchors).map(|_| random_normal_string(&mut rng, 3)).collect();
        ensure!(
            normalize(&response) == response && anchors.iter().all(|a| normalize(a) == *a),
            "generator produced non-normalized text"
        );
        let hits = anchors.iter().filter(|a| naive_contains(&response, a)).count();
        let expected = hits as f64 / anchors.len() as f64;
        let single = map_memory_anchors(&[response.as_str()], &[qa_with_anchors(i, &anchors)]).map_err(|e| e.to_string())?;
        ensure!(single == expected, "pair {i}: {single} != {expected}");
        ensure!(em_count(&response, &anchors) == hits, "pair {i}: EM count differs");
        oracle_sum += expected;
        responses.push(response);
        qa.push(qa_with_anchors(i, &anchors));
    }
    let map = map_memory_anchors(&responses, &qa).map_err(|e| e.to_string())?;
    let oracle = oracle_sum / 1000.0;
    ensure!(map == oracle, "aggregate MAP {map} != oracle {oracle}");

    let all: Vec<String> = qa.iter().map(|q| q.anchor_texts().join("|")).collect();
    let full = map_memory_anchors(&all, &qa).map_err(|e| e.to_string())?;
    let none: Vec<&str> = qa.iter().map(|_| "zzz").collect();
    let empty = map_memory_anchors(&none, &qa).map_err(|e| e.to_string())?;
    ensure!(full == 1.0 && empty == 0.0, "MAP(all)={full} MAP(none)={empty}");
    Ok(format!("1000 pairs exact, MAP {map:.4}, MAP(all)=1, MAP(none)=0"))
}

// ----------------------------------------------------------- 4. classifier

fn criterion_4() -> Outcome {
    let corpus = generate_corpus(&GenSpec::shipped());
    ensure!(corpus.labeled.len() >= 400, "only {} labeled questions", corpus.labeled.len());
    let (train, test) = interleaved_halves(&corpus.labeled);
    let model = NaiveBayes::train(&train, 1.0).map_err(|e| e.to_string())?;
    let m = evaluate_classifier(&model, &test);
    ensure!(m.accuracy >= 0.90, "accuracy {:.4}", m.accuracy);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut probes: Vec<String> = corpus.labeled.iter().map(|q| q.question.clone()).collect();
    probes.extend(["".to_string(), "   ".into(), "？！".into(), "zzzz qqqq".into(), "的".repeat(500)]);
    probes.extend((0..200).map(|_| random_normal_string(&mut rng, 40)));
    let mut worst = 0.0f64;
    for q in &probes {
        let d = model.classify(q);
        worst = worst.max((d.p_semantic + d.p_episodic - 1.0).abs());
        ensure!(
            (0.0..=1.0).contains(&d.p_semantic) && (0.0..=1.0).contains(&d.p_episodic),
            "probability out of range for {q:?}"
        );
    }
    ensure!(worst <= 1e-9, "probabilities sum off by {worst:e}");
    Ok(format!(
        "{} questions, held-out accuracy {:.4} (weighted F1 {:.4}), max |sum-1| {worst:.1e}",
        corpus.labeled.len(),
        m.accuracy,
        m.f1
    ))
}

// --------------------------------------------------------- 5. end to end

fn criterion_5() -> Outcome {
    deny_network();
    let before = remote_requests();
    let t0 = Instant::now();
    let corpus = generate_corpus(&GenSpec::shipped());
    let items = segment_memories(&corpus.db);
    let indexes = build_indexes(&items, Bm25Params::default()).map_err(|e| e.to_string())?;
    let (train, _) = interleaved_halves(&corpus.labeled);
    let model = NaiveBayes::train(&train, 1.0).map_err(|e| e.to_string())?;
    let ctx = EvalContext {
        items: &items,
        indexes: &indexes,
        classifier: Some(&model),
        judge: None,
    };
    let cfg = EvalConfig {
        seed: 42,
        rerank: RerankConfig { k: 3, ..RerankConfig::default() },
        ..EvalConfig::default()
    };
    let mut map = BTreeMap::new();
    for (label, setting) in [
        ("CR", AblationSetting::new(Pipeline::WoMcWR, MemoryCondition::Cr)),
        ("NR", AblationSetting::new(Pipeline::WoMcWR, MemoryCondition::Nr)),
        ("W-MC+R", AblationSetting::new(Pipeline::WMcR, MemoryCondition::Retrieved)),
        ("W/o-MC+R", AblationSetting::new(Pipeline::WoMcR, MemoryCondition::Retrieved)),
    ] {
        let r = run_ablation(ctx, &corpus.qa, setting, &MockExtractive, &cfg).map_err(|e| e.to_string())?;
        ensure!(r.failed == 0, "{label}: {} questions failed", r.failed);
        map.insert(label, r.map_score.ok_or(format!("{label}: no MAP"))?);
    }
    let secs = t0.elapsed().as_secs_f64();
    let (cr, nr, wmc, bare) = (map["CR"], map["NR"], map["W-MC+R"], map["W/o-MC+R"]);
    ensure!(cr == 1.0, "MAP(CR) = {cr}");
    ensure!(nr == 0.0, "MAP(NR) = {nr}");
    ensure!(wmc >= 0.70, "MAP(W-MC+R) = {wmc}");
    ensure!(wmc >= bare + 0.5, "MAP(W-MC+R) {wmc} vs MAP(W/o-MC+R) {bare}");
    ensure!(secs < 120.0, "took {secs:.1} s");
    ensure!(remote_requests() == before, "network requests were attempted");
    Ok(format!(
        "CR {cr:.3}, NR {nr:.3}, W-MC+R {wmc:.3}, W/o-MC+R {bare:.3}, {} questions, {secs:.2} s, 0 remote requests",
        corpus.qa.len()
    ))
}

// ------------------------------------------------------------ 6. retrieval

fn recall_table(
    items: &[MemoryItem],
    indexes: &BTreeMap<String, InvertedIndex>,
    qa: &[QAItem],
) -> Result<BTreeMap<usize, f64>, String> {
    let mut retrieved = Vec::new();
    for q in qa {
        retrieved.push(match indexes.get(&q.character_id) {
            Some(idx) => retrieve(idx, &q.question, 5)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|c| c.item_id)
                .collect(),
            None => Vec::new(),
        });
    }
    let _ = items;
    let gold: Vec<Vec<String>> = qa.iter().map(|q| q.reference_item_ids.clone()).collect();
    Ok((1..=5).map(|k| (k, recall_at_k(&retrieved, &gold, k).value)).collect())
}

fn monotone(r: &BTreeMap<usize, f64>) -> bool {
    r.values().zip(r.values().skip(1)).all(|(a, b)| a <= b)
}

fn criterion_6() -> Outcome {
    let corpus = generate_corpus(&GenSpec::shipped());
    let items = segment_memories(&corpus.db);
    let indexes = build_indexes(&items, Bm25Params::default()).map_err(|e| e.to_string())?;
    let r = recall_table(&items, &indexes, &corpus.qa)?;
    ensure!(r[&1] >= 0.95, "R@1 = {}", r[&1]);
    ensure!(r[&5] == 1.0, "R@5 = {}", r[&5]);
    ensure!(monotone(&r), "Recall@K not monotone: {r:?}");
    Ok(format!(
        "R@1 {:.3}, R@2 {:.3}, R@3 {:.3}, R@5 {:.3}, monotone",
        r[&1], r[&2], r[&3], r[&5]
    ))
}

/// Optional check against the published dataset, located through
/// MEMQ_PUBLISHED_MEMORY and MEMQ_PUBLISHED_QA.
fn criterion_6_published() -> Option<Outcome> {
    let mem = std::env::var_os("MEMQ_PUBLISHED_MEMORY")?;
    let qa = std::env::var_os("MEMQ_PUBLISHED_QA")?;
    Some((|| {
        let read = |p: &std::ffi::OsStr| -> Result<serde_json::Value, String> {
            let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        let (db, mut report) = import_memory(&read(&mem)?).map_err(|e| e.to_string())?;
        let qa = import_qa(&read(&qa)?, &mut report).map_err(|e| e.to_string())?;
        let items = segment_memories(&db);
        let aligned = align_references(&qa, &items);
        let indexes = build_indexes(&items, Bm25Params::default()).map_err(|e| e.to_string())?;
        let r = recall_table(&items, &indexes, &aligned.qa)?;
        ensure!(monotone(&r), "Recall@K not monotone: {r:?}");
        ensure!((0.60..=0.80).contains(&r[&1]), "BM25 R@1 = {:.3}", r[&1]);
        Ok(format!("published data: BM25 R@1 {:.3}, {} questions", r[&1], aligned.qa.len()))
    })())
}

// ---------------------------------------------------------- 7. performance

fn criterion_7() -> Outcome {
    let spec = GenSpec {
        seed: 7,
        n_characters: 1,
        relationships_per_char: 9,
        events_per_char: 1000,
        dialogues_per_event: 1,
        turns_per_dialogue: 9,
        qa_per_char: 0,
        anchor_per_qa: 3,
    };
    let corpus = generate_corpus(&spec);
    let mut items = segment_memories(&corpus.db);
    ensure!(items.len() >= 10_000, "generator produced only {} items", items.len());
    items.truncate(10_000);

    let t0 = Instant::now();
    let index = InvertedIndex::build(&items).map_err(|e| e.to_string())?;
    let build_s = t0.elapsed().as_secs_f64();
    ensure!(build_s < 5.0, "index build took {build_s:.2} s");

    // Queries shaped like the generator's questions, about random items.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let name = &corpus.db.characters()[0].character_id;
    let queries: Vec<String> = (0..1000)
        .map(|_| {
            let it = items.choose(&mut rng).expect("nonempty");
            let snippet: String = it.text.chars().skip(rng.gen_range(0..8)).take(14).collect();
            format!("{name}和{snippet}是在什么时候、什么地方？")
        })
        .collect();
    let t1 = Instant::now();
    let mut sink = 0usize;
    for q in &queries {
        sink += retrieve(&index, q, 5).map_err(|e| e.to_string())?.len();
    }
    let mean_ms = t1.elapsed().as_secs_f64() * 1e3 / queries.len() as f64;
    ensure!(sink == 5 * queries.len(), "short result lists");
    ensure!(mean_ms < 10.0, "mean query {mean_ms:.3} ms");
    Ok(format!(
        "build {} items {:.3} s, mean query {mean_ms:.3} ms over 1000",
        items.len(),
        build_s
    ))
}

// ---------------------------------------------------------- 8. determinism

fn memq(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_memq"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "memq {} failed ({}): {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    memq(dir, &["gen", "--seed", "42", "--chars", "20", "-o", "data"])?;
    memq(dir, &["index", "build"])?;
    memq(dir, &["classifier", "train", "--holdout", "0.5"])?;
    let run = ["eval", "--setting", "all", "--condition", "all", "--k", "3", "--backend", "mock"];
    memq(dir, &[&run[..], &["--out", "runs/first"]].concat())?;
    memq(dir, &[&run[..], &["--out", "runs/second"]].concat())?;
    let mut sizes = HashMap::new();
    for f in ["report.json", "report.txt"] {
        let a = std::fs::read(dir.join("runs/first").join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.join("runs/second").join(f)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{f} differs between runs");
        sizes.insert(f, a.len());
    }
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(dir.join("runs/first/report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure!(reports.len() == 12, "expected 12 report rows, got {}", reports.len());
    Ok(format!(
        "report.json ({} bytes) and report.txt identical across runs",
        sizes["report.json"]
    ))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 8] = [
        ("1", "BM25 oracle equivalence", criterion_1),
        ("2", "reranker correctness", criterion_2),
        ("3", "MAP oracle equivalence", criterion_3),
        ("4", "classifier on synthetic corpus", criterion_4),
        ("5", "end-to-end ablation ordering", criterion_5),
        ("6", "retrieval quality on synthetic corpus", criterion_6),
        ("7", "index and query performance", criterion_7),
        ("8", "deterministic eval reports", criterion_8),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name}: {why}");
            }
        }
    }
    match criterion_6_published() {
        None => println!("SKIP 6b published-data BM25 Recall@1 (set MEMQ_PUBLISHED_MEMORY and MEMQ_PUBLISHED_QA)"),
        Some(Ok(detail)) => println!("PASS 6b {detail} (non-gating)"),
        Some(Err(why)) => println!("FAIL 6b published-data BM25 Recall@1: {why} (non-gating)"),
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
