//! Published reference numbers, shown next to our results for comparison.

use std::collections::BTreeMap;

use memq::eval::{AblationSetting, MemoryCondition};
use serde::Deserialize;

const DATA: &str = include_str!("../data/paper_refs.json");

#[derive(Debug, Deserialize)]
pub struct RefTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl RefTable {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.get(row)?.get(c).copied()
    }
}

pub type RefTables = BTreeMap<String, RefTable>;

pub fn tables() -> RefTables {
    serde_json::from_str(DATA).expect("embedded reference data is valid")
}

/// Reference MAP for `setting` as reported for `model`: the pipeline
/// comparison for retrieved memories, the memory-condition comparison
/// otherwise.
pub fn reference_map(tables: &RefTables, model: &str, setting: &AblationSetting) -> Option<f64> {
    match setting.effective_condition() {
        MemoryCondition::Retrieved => tables.get("memory_synthesis")?.get(model, setting.pipeline.label()),
        c => {
            if setting.memory_condition != c {
                // The bare pipeline: compare with its own published row.
                return tables.get("memory_synthesis")?.get(model, setting.pipeline.label());
            }
            tables.get("memory_conditions")?.get(model, c.label())
        }
    }
}

pub fn models(tables: &RefTables) -> Vec<&str> {
    let mut v: Vec<&str> = ["memory_synthesis", "memory_conditions"]
        .iter()
        .filter_map(|t| tables.get(*t))
        .flat_map(|t| t.rows.keys().map(String::as_str))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use memq::eval::Pipeline;

    #[test]
    fn looks_up_both_tables() {
        let t = tables();
        let m = "gpt-3.5-turbo";
        let get = |p, c| reference_map(&t, m, &AblationSetting::new(p, c));
        assert_eq!(get(Pipeline::WMcR, MemoryCondition::Retrieved), Some(0.756));
        assert_eq!(get(Pipeline::WoMcR, MemoryCondition::Retrieved), Some(0.156));
        assert_eq!(get(Pipeline::WoMcWR, MemoryCondition::Cr), Some(0.842));
        assert_eq!(get(Pipeline::WoMcWR, MemoryCondition::Nr), Some(0.156));
        assert_eq!(reference_map(&t, "nobody", &AblationSetting::new(Pipeline::WMcR, MemoryCondition::Ir)), None);
        assert!(models(&t).contains(&"Qwen-7B"));
        assert_eq!(t["retrieval"].get("BM25", "R@1"), Some(0.705));
    }
}
