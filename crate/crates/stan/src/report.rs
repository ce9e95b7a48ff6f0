//! Evaluation reports as JSON and as aligned text tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use stan_core::train::EvalReport;
use stan_core::Variant;

/// JSON form of a report. `wall_clock_secs` is the only field that differs
/// between two runs with the same seed and config.
pub fn to_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize")
}

pub fn from_json(text: &str) -> serde_json::Result<EvalReport> {
    serde_json::from_str(text)
}

fn recall_header(report: &EvalReport) -> Vec<String> {
    report.recall.iter().map(|r| format!("Recall@{}", r.k)).collect()
}

pub fn table(report: &EvalReport) -> String {
    let mut out = String::new();
    let heads = recall_header(report);
    let width = heads.iter().map(String::len).max().unwrap_or(8).max(8);
    let _ = writeln!(out, "{:<10}{}", "split", heads.iter().map(|h| format!("{h:>width$}")).collect::<String>());
    for (name, rows) in [("test", &report.recall), ("val", &report.val_recall)] {
        if rows.is_empty() {
            continue;
        }
        let vals: String = rows.iter().map(|r| format!("{:>width$.4}", r.recall)).collect();
        let _ = writeln!(out, "{name:<10}{vals}");
    }
    let _ = writeln!(out, "best epoch {} of {}, seed {}", report.best_epoch, report.epochs.len(), report.seed);
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub name: String,
    pub report: EvalReport,
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let Some(first) = rows.first() else { return out };
    let heads = recall_header(&first.report);
    let width = heads.iter().map(String::len).max().unwrap_or(8).max(8) + 2;
    let _ = writeln!(out, "{:<10}{}", "variant", heads.iter().map(|h| format!("{h:>width$}")).collect::<String>());
    for row in rows {
        let vals: String = row.report.recall.iter().map(|r| format!("{:>width$.4}", r.recall)).collect();
        let _ = writeln!(out, "{:<10}{vals}", row.name);
    }
    out
}
