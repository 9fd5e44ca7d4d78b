use std::path::PathBuf;

use clap::Args;
use memq::classifier::{evaluate_classifier, ClassificationMetrics, LabeledQuestion, NaiveBayes};
use serde::Serialize;

use super::emit;
use crate::artifacts::{load_labeled, load_model, write_file};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::Format;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Fraction of the questions held out for evaluation, spread evenly
    /// through the file.
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    /// Additive smoothing.
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    /// Model output path (defaults to the configured model path).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {}

/// Deterministic interleaved split: question `i` is held out when the
/// running quota `floor((i + 1) * f)` steps up.
pub fn split(examples: &[LabeledQuestion], holdout: f64) -> (Vec<LabeledQuestion>, Vec<LabeledQuestion>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let quota = |n: usize| (n as f64 * holdout).floor() as usize;
        if quota(i + 1) > quota(i) {
            test.push(ex.clone());
        } else {
            train.push(ex.clone());
        }
    }
    (train, test)
}

pub(crate) fn render_metrics(m: &ClassificationMetrics) -> String {
    let mut s = format!(
        "  weighted precision {:.3}  recall {:.3}  F1 {:.3}  accuracy {:.3}\n",
        m.precision, m.recall, m.f1, m.accuracy
    );
    for c in &m.per_class {
        s.push_str(&format!(
            "  {:<9} precision {:.3}  recall {:.3}  F1 {:.3}  support {}\n",
            c.label.as_str(),
            c.precision,
            c.recall,
            c.f1,
            c.support
        ));
    }
    s
}

pub fn train(cfg: &RunConfig, a: &TrainArgs, fmt: Format) -> CliResult<()> {
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(CliError::config("--holdout must be in [0, 1)"));
    }
    if !(a.smoothing > 0.0) {
        return Err(CliError::config("--smoothing must be positive"));
    }
    let examples = load_labeled(&cfg.paths.labeled)?;
    let (train, test) = split(&examples, a.holdout);
    let model = NaiveBayes::train(&train, a.smoothing).map_err(|e| CliError::artifact(&cfg.paths.labeled, e))?;
    let out_path = a.out.clone().unwrap_or_else(|| cfg.paths.model.clone());
    write_file(&out_path, |w| {
        model
            .save(w)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))
    })?;
    let heldout = (!test.is_empty()).then(|| evaluate_classifier(&model, &test));

    #[derive(Serialize)]
    struct Out<'a> {
        model: &'a PathBuf,
        train: usize,
        heldout: usize,
        vocabulary: usize,
        metrics: Option<ClassificationMetrics>,
    }
    let out = Out {
        model: &out_path,
        train: train.len(),
        heldout: test.len(),
        vocabulary: model.vocabulary_len(),
        metrics: heldout,
    };
    emit(fmt, &out, || {
        let mut s = format!(
            "trained on {} questions ({} tokens in vocabulary), saved {}\n",
            out.train,
            out.vocabulary,
            out_path.display()
        );
        if let Some(m) = &out.metrics {
            s.push_str(&format!("held-out evaluation on {} questions:\n", out.heldout));
            s.push_str(&render_metrics(m));
        }
        s
    })
}

pub fn eval(cfg: &RunConfig, _: &EvalArgs, fmt: Format) -> CliResult<()> {
    let model = load_model(&cfg.paths.model)?;
    let examples = load_labeled(&cfg.paths.labeled)?;
    if examples.is_empty() {
        return Err(CliError::artifact(&cfg.paths.labeled, "no labeled questions"));
    }
    let m = evaluate_classifier(&model, &examples);
    emit(fmt, &m, || {
        format!("{} questions:\n{}", examples.len(), render_metrics(&m))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use memq::store::MemoryType;

    #[test]
    fn split_is_interleaved() {
        let ex: Vec<LabeledQuestion> = (0..10)
            .map(|i| LabeledQuestion {
                label: MemoryType::Semantic,
                question: i.to_string(),
            })
            .collect();
        let (train, test) = split(&ex, 0.5);
        assert_eq!(train.len(), 5);
        let held: Vec<&str> = test.iter().map(|q| q.question.as_str()).collect();
        assert_eq!(held, ["1", "3", "5", "7", "9"]);
        let (train, test) = split(&ex, 0.0);
        assert_eq!((train.len(), test.len()), (10, 0));
    }
}
