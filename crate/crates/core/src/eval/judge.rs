//! LLM rubric judge for correctness and coherence.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::synthesis::{generate, GenerationBackend, GenerationParams, GenerationRequest};

pub const JUDGE_TEMPLATE: &str = "请根据参考答案评价模型回答。\n\
正确性：回答与参考答案的事实是否一致，0 到 10 分。\n\
连贯性：回答是否通顺、前后一致，0 到 10 分。\n\
按如下格式输出两行，不要输出其他内容：\n\
correctness: <分数>\n\
coherence: <分数>\n\
\n\
问题：{question}\n\
参考答案：{answer}\n\
模型回答：{response}";

/// Scores in [0, 1]; a missing score means the reply could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub correctness: Option<f64>,
    pub coherence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn score_re(names: &str) -> Regex {
    Regex::new(&format!(r"(?i)(?:{names})\s*[:：=]?\s*(\d+(?:\.\d+)?)")).expect("valid pattern")
}

/// Extracts (correctness, coherence) from a 0-10 rubric reply, scaled to
/// [0, 1]. Out-of-range or absent values come back as `None`.
pub fn parse_judge_reply(reply: &str) -> (Option<f64>, Option<f64>) {
    static CORRECTNESS: OnceLock<Regex> = OnceLock::new();
    static COHERENCE: OnceLock<Regex> = OnceLock::new();
    let grab = |re: &Regex| {
        re.captures(reply)
            .and_then(|c| c[1].parse::<f64>().ok())
            .filter(|v| (0.0..=10.0).contains(v))
            .map(|v| v / 10.0)
    };
    (
        grab(CORRECTNESS.get_or_init(|| score_re("correctness|正确性"))),
        grab(COHERENCE.get_or_init(|| score_re("coherence|coherency|连贯性"))),
    )
}

pub fn judge(
    question: &str,
    response: &str,
    gold_answer: &str,
    backend: &dyn GenerationBackend,
    params: &GenerationParams,
) -> JudgeScores {
    let prompt = JUDGE_TEMPLATE
        .replace("{question}", question)
        .replace("{answer}", gold_answer)
        .replace("{response}", response);
    let request = GenerationRequest {
        prompt: &prompt,
        question,
        memories: &[],
        params,
    };
    match generate(backend, &request, None) {
        Ok(g) => {
            let (correctness, coherence) = parse_judge_reply(&g.text);
            let error = (correctness.is_none() || coherence.is_none())
                .then(|| format!("unparseable judge reply: {:?}", g.text));
            JudgeScores {
                correctness,
                coherence,
                error,
            }
        }
        Err(e) => JudgeScores {
            correctness: None,
            coherence: None,
            error: Some(e.to_string()),
        },
    }
}

/// Means over the questions that received a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub correctness: Option<f64>,
    pub coherence: Option<f64>,
    pub missing_correctness: usize,
    pub missing_coherence: usize,
}

impl JudgeSummary {
    pub fn from_scores<'a>(scores: impl Iterator<Item = Option<&'a JudgeScores>>) -> Self {
        let (mut cor, mut coh) = (Vec::new(), Vec::new());
        let (mut miss_cor, mut miss_coh) = (0, 0);
        for s in scores {
            match s.and_then(|s| s.correctness) {
                Some(v) => cor.push(v),
                None => miss_cor += 1,
            }
            match s.and_then(|s| s.coherence) {
                Some(v) => coh.push(v),
                None => miss_coh += 1,
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        JudgeSummary {
            correctness: mean(&cor),
            coherence: mean(&coh),
            missing_correctness: miss_cor,
            missing_coherence: miss_coh,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::GenerationError;

    struct Reply(&'static str);
    impl GenerationBackend for Reply {
        fn name(&self) -> &str {
            "reply"
        }
        fn complete(&self, r: &GenerationRequest<'_>) -> Result<String, GenerationError> {
            assert!(r.prompt.contains("参考答案：摄影师"));
            Ok(self.0.into())
        }
    }

    #[test]
    fn parses_rubric() {
        assert_eq!(parse_judge_reply("correctness: 8\ncoherence: 10"), (Some(0.8), Some(1.0)));
        assert_eq!(parse_judge_reply("正确性：7.5 连贯性=9"), (Some(0.75), Some(0.9)));
        assert_eq!(parse_judge_reply("Correctness 11, coherence: x"), (None, None));
    }

    #[test]
    fn unparseable_is_missing_and_flagged() {
        let p = GenerationParams::default();
        let s = judge("q", "r", "摄影师", &Reply("looks fine"), &p);
        assert_eq!((s.correctness, s.coherence), (None, None));
        assert!(s.error.is_some());
        let ok = judge("q", "r", "摄影师", &Reply("correctness: 10\ncoherence: 9"), &p);
        assert_eq!(ok.error, None);
        let summary = JudgeSummary::from_scores([Some(&s), Some(&ok), None].into_iter());
        assert_eq!(summary.correctness, Some(1.0));
        assert_eq!(summary.missing_correctness, 2);
    }
}
