use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentMode, ExperimentReport};
use super::HarnessError;
use crate::costmodel::csv_quote;

pub const REPORT_COLUMNS: [&str; 11] = [
    "Model",
    "Dataset",
    "Epochs",
    "Train Time",
    "Train Loss",
    "Train Accuracy",
    "Test Loss",
    "Test Accuracy",
    "Precision",
    "Recall",
    "F1-score",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(HarnessError::Spec(format!("unknown report format `{other}` (md or csv)"))),
        }
    }
}

const ABSENT: &str = "---";

fn fixed(v: f64) -> String {
    format!("{v:.4}")
}

/// One report as table cells in [`REPORT_COLUMNS`] order. Train time is
/// in seconds; fields that do not apply (nothing trained, no scores)
/// render as `---`.
pub fn report_cells(r: &ExperimentReport) -> Vec<String> {
    let dataset = match r.mode {
        ExperimentMode::CrossDataset(_) => format!("{} -> {}", r.train_dataset, r.eval_dataset),
        _ => r.eval_dataset.clone(),
    };
    let last = r.last_epoch();
    vec![
        r.model.clone(),
        dataset,
        r.epochs.to_string(),
        r.train_seconds.map_or(ABSENT.into(), fixed),
        last.map_or(ABSENT.into(), |e| fixed(e.train_loss)),
        last.map_or(ABSENT.into(), |e| fixed(e.train_accuracy)),
        r.test.mean_loss.map_or(ABSENT.into(), fixed),
        fixed(r.test.accuracy),
        fixed(r.test.precision),
        fixed(r.test.recall),
        fixed(r.test.f1),
    ]
}

/// Renders one row per report. Markdown and CSV share the same cell
/// strings.
pub fn emit_report(reports: &[ExperimentReport], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", REPORT_COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(REPORT_COLUMNS.len()));
            for r in reports {
                let _ = writeln!(out, "| {} |", report_cells(r).join(" | "));
            }
        }
        ReportFormat::Csv => {
            let _ = writeln!(out, "{}", REPORT_COLUMNS.join(","));
            for r in reports {
                let cells: Vec<String> = report_cells(r).iter().map(|c| csv_quote(c)).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
        }
    }
    out
}
