//! Prediction file: header `#edgeslm-pred v1`, then one
//! `id<TAB>true_label<TAB>predicted_label<TAB>score` line per record. The
//! score field may be empty.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics, ConfusionCounts, MetricsReport, MulticlassConfusion};
use super::HarnessError;
use crate::learner::bce_from_probability;

pub const PREDICTION_HEADER: &str = "#edgeslm-pred v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub true_label: u32,
    pub predicted_label: u32,
    pub score: Option<f64>,
}

pub fn write_predictions<W: Write>(writer: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{PREDICTION_HEADER}")?;
    for r in records {
        write!(w, "{}\t{}\t{}\t", r.id, r.true_label, r.predicted_label)?;
        if let Some(s) = r.score {
            write!(w, "{s}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<(), HarnessError> {
    write_predictions(File::create(path)?, records)?;
    Ok(())
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>, HarnessError> {
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, message: String| HarnessError::Parse { line, message };
    match lines.next() {
        Some((_, Ok(first))) if first.trim_end_matches('\r') == PREDICTION_HEADER => {}
        Some((_, Ok(first))) => {
            return Err(parse_err(1, format!("expected header `{PREDICTION_HEADER}`, found `{first}`")));
        }
        Some((_, Err(e))) => return Err(parse_err(1, e.to_string())),
        None => return Err(parse_err(1, "empty file (missing header)".into())),
    }
    let mut records = Vec::new();
    let mut seen: BTreeMap<u64, usize> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad id `{}`", fields[0])))?;
        let label = |s: &str, what: &str| {
            s.parse::<u32>()
                .map_err(|_| parse_err(line_no, format!("bad {what} `{s}`")))
        };
        let true_label = label(fields[1], "true label")?;
        let predicted_label = label(fields[2], "predicted label")?;
        let score = match fields[3] {
            "" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| parse_err(line_no, format!("bad score `{s}`")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(parse_err(line_no, format!("score {v} outside [0, 1]")));
                }
                Some(v)
            }
        };
        if let Some(first) = seen.insert(id, line_no) {
            return Err(HarnessError::DuplicateId {
                id,
                line: line_no,
                first_line: first,
            });
        }
        records.push(PredictionRecord {
            id,
            true_label,
            predicted_label,
            score,
        });
    }
    Ok(records)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, HarnessError> {
    read_predictions(BufReader::new(File::open(path)?))
}

/// Scored predictions. Binary inputs (all labels 0/1) carry the binary
/// confusion; the multiclass matrix is always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionScore {
    pub metrics: MetricsReport,
    pub binary: Option<ConfusionCounts>,
    pub per_class: MulticlassConfusion,
}

/// Binary inputs get binary metrics (plus mean BCE when every record has
/// a score); anything else gets macro-averaged multiclass metrics.
pub fn score_predictions(records: &[PredictionRecord]) -> Result<PredictionScore, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let pairs = records.iter().map(|r| (r.predicted_label, r.true_label));
    let per_class = MulticlassConfusion::from_pairs(pairs.clone());
    let is_binary = records.iter().all(|r| r.true_label <= 1 && r.predicted_label <= 1);
    if is_binary {
        let counts = confusion(pairs)?;
        let mut report = metrics(&counts);
        let scores: Option<Vec<f64>> = records.iter().map(|r| r.score).collect();
        if let Some(scores) = scores {
            let total: f64 = scores
                .iter()
                .zip(records)
                .map(|(&s, r)| bce_from_probability(s, r.true_label as u8))
                .sum();
            report.mean_loss = Some(total / records.len() as f64);
        }
        Ok(PredictionScore {
            metrics: report,
            binary: Some(counts),
            per_class,
        })
    } else {
        Ok(PredictionScore {
            metrics: per_class.macro_metrics(),
            binary: None,
            per_class,
        })
    }
}

pub fn score_prediction_file(path: impl AsRef<Path>) -> Result<PredictionScore, HarnessError> {
    score_predictions(&load_predictions(path)?)
}
