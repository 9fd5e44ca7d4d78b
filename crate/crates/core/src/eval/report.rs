//! Latency summaries and the human-readable results table.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{AblationSetting, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<f64>) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(LatencyStats {
            count: n,
            mean_ms: samples.iter().sum::<f64>() / n as f64,
            p95_ms: samples[rank - 1],
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// One row per report. `paper_map` supplies a reference MAP per setting; the
/// column is omitted when it yields nothing for every row.
pub fn render_table(reports: &[EvalReport], paper_map: &dyn Fn(&AblationSetting) -> Option<f64>) -> String {
    let ks: BTreeSet<usize> = reports.iter().flat_map(|r| r.recall_at_k.keys().copied()).collect();
    let refs: Vec<Option<f64>> = reports.iter().map(|r| paper_map(&r.setting)).collect();
    let show_refs = refs.iter().any(Option::is_some);

    let mut header: Vec<String> = ["Setting", "Condition", "N", "MAP"].map(String::from).to_vec();
    if show_refs {
        header.push("MAP (paper ref)".into());
    }
    header.extend(ks.iter().map(|k| format!("R@{k}")));
    header.extend(["Acc", "Failed"].map(String::from));

    let mut rows = vec![header];
    for (r, reference) in reports.iter().zip(&refs) {
        let mut row = vec![
            r.setting.pipeline.label().to_string(),
            r.setting.memory_condition.label().to_string(),
            r.n_questions.to_string(),
            fmt_opt(r.map_score),
        ];
        if show_refs {
            row.push(fmt_opt(*reference));
        }
        row.extend(ks.iter().map(|k| fmt_opt(r.recall_at_k.get(k).copied())));
        row.push(fmt_opt(r.classification_metrics.as_ref().map(|m| m.accuracy)));
        row.push(r.failed.to_string());
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                if c < 2 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).expect("writing to a String");
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            writeln!(out, "{}", "-".repeat(total)).expect("writing to a String");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_p95() {
        let s = LatencyStats::from_samples((1..=20).map(f64::from).collect()).unwrap();
        assert_eq!(s.p95_ms, 19.0);
        assert_eq!(s.mean_ms, 10.5);
        assert_eq!(LatencyStats::from_samples(vec![3.0]).unwrap().p95_ms, 3.0);
        assert!(LatencyStats::from_samples(vec![]).is_none());
    }
}
