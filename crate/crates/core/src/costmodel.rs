//! Analytical cost model for one transformer forward pass on an edge
//! device: FLOPs, memory components, RAM estimate and per-unit latency.
//!
//! All counts are exact `u64` arithmetic with checked overflow; the only
//! floating-point step is the latency division.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{HardwareProfile, ModelProfile};

/// Bytes per displayed megabyte.
pub const MB: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("count overflow while computing {0}")]
    Overflow(&'static str),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("arrival interval must be a positive finite number of seconds")]
    InvalidInterval,
}

fn mul(what: &'static str, factors: &[u64]) -> Result<u64, CostError> {
    factors
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f))
        .ok_or(CostError::Overflow(what))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub batch_size: u64,
    pub seq_length: u64,
    /// Bytes per stored scalar (2, 4 or 8).
    pub bytes_per_scalar: u64,
    pub runtime_overhead_bytes: u64,
}

impl Default for WorkloadSpec {
    /// Batch 8, 128 tokens, 4-byte floats, 100 MB runtime overhead.
    fn default() -> Self {
        Self {
            batch_size: 8,
            seq_length: 128,
            bytes_per_scalar: 4,
            runtime_overhead_bytes: 100 * MB,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.batch_size == 0 {
            return Err(CostError::InvalidWorkload("batch_size must be >= 1".into()));
        }
        if self.seq_length == 0 {
            return Err(CostError::InvalidWorkload("seq_length must be >= 1".into()));
        }
        if ![2, 4, 8].contains(&self.bytes_per_scalar) {
            return Err(CostError::InvalidWorkload(format!(
                "bytes_per_scalar must be 2, 4 or 8 (got {})",
                self.bytes_per_scalar
            )));
        }
        Ok(())
    }
}

/// `4 · S² · hidden · heads`
pub fn attention_flops(seq_length: u64, hidden_size: u64, n_heads: u64) -> Result<u64, CostError> {
    mul("attention flops", &[4, seq_length, seq_length, hidden_size, n_heads])
}

/// `8 · S · hidden²`
pub fn feedforward_flops(seq_length: u64, hidden_size: u64) -> Result<u64, CostError> {
    mul("feedforward flops", &[8, seq_length, hidden_size, hidden_size])
}

/// `layers · (attention + feedforward)` for one forward pass.
pub fn total_flops(profile: &ModelProfile, seq_length: u64) -> Result<u64, CostError> {
    let per_layer = attention_flops(seq_length, profile.hidden_size, profile.n_heads)?
        .checked_add(feedforward_flops(seq_length, profile.hidden_size)?)
        .ok_or(CostError::Overflow("per-layer flops"))?;
    mul("total flops", &[profile.n_layers, per_layer])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryComponents {
    pub weight_bytes: u64,
    pub input_bytes: u64,
    pub activation_bytes: u64,
    pub output_bytes: u64,
}

impl MemoryComponents {
    pub fn sum(&self) -> Result<u64, CostError> {
        [self.input_bytes, self.activation_bytes, self.output_bytes]
            .iter()
            .try_fold(self.weight_bytes, |acc, &b| acc.checked_add(b))
            .ok_or(CostError::Overflow("memory sum"))
    }
}

pub fn memory_components(profile: &ModelProfile, workload: &WorkloadSpec) -> Result<MemoryComponents, CostError> {
    let WorkloadSpec {
        batch_size: b,
        seq_length: s,
        bytes_per_scalar: fpa,
        ..
    } = *workload;
    Ok(MemoryComponents {
        weight_bytes: mul("weight bytes", &[profile.n_params, fpa])?,
        input_bytes: mul("input bytes", &[b, s, fpa])?,
        activation_bytes: mul("activation bytes", &[b, s, profile.hidden_size, profile.n_layers, fpa])?,
        output_bytes: mul("output bytes", &[b, s, profile.vocab_size, fpa])?,
    })
}

/// Memory components plus the workload's runtime overhead.
pub fn ram_estimate(profile: &ModelProfile, workload: &WorkloadSpec) -> Result<u64, CostError> {
    memory_components(profile, workload)?
        .sum()?
        .checked_add(workload.runtime_overhead_bytes)
        .ok_or(CostError::Overflow("ram estimate"))
}

/// Seconds per forward pass on each execution unit of `hardware`.
pub fn latency(total_flops: u64, hardware: &HardwareProfile) -> BTreeMap<String, f64> {
    hardware
        .units
        .iter()
        .map(|u| (u.name.clone(), total_flops as f64 / u.flops_per_second))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: String,
    pub hardware: String,
    pub workload: WorkloadSpec,
    pub attention_flops_per_layer: u64,
    pub feedforward_flops_per_layer: u64,
    pub total_flops: u64,
    pub weight_bytes: u64,
    pub input_bytes: u64,
    pub activation_bytes: u64,
    pub output_bytes: u64,
    pub ram_estimate_bytes: u64,
    pub reference_ram_mb: Option<u64>,
    pub latency_seconds: BTreeMap<String, f64>,
}

pub fn estimate(
    profile: &ModelProfile,
    workload: &WorkloadSpec,
    hardware: &HardwareProfile,
) -> Result<CostReport, CostError> {
    workload.validate()?;
    let s = workload.seq_length;
    let attention = attention_flops(s, profile.hidden_size, profile.n_heads)?;
    let feedforward = feedforward_flops(s, profile.hidden_size)?;
    let total = total_flops(profile, s)?;
    let memory = memory_components(profile, workload)?;
    Ok(CostReport {
        model: profile.name.clone(),
        hardware: hardware.name.clone(),
        workload: *workload,
        attention_flops_per_layer: attention,
        feedforward_flops_per_layer: feedforward,
        total_flops: total,
        weight_bytes: memory.weight_bytes,
        input_bytes: memory.input_bytes,
        activation_bytes: memory.activation_bytes,
        output_bytes: memory.output_bytes,
        ram_estimate_bytes: ram_estimate(profile, workload)?,
        reference_ram_mb: profile.reference_ram_mb,
        latency_seconds: latency(total, hardware),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitingFactor {
    Ram,
    Throughput,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub fits_ram: bool,
    pub keeps_up: BTreeMap<String, bool>,
    pub limiting_factor: LimitingFactor,
}

/// RAM fit against the device capacity and, per unit, whether one
/// inference finishes before the next packet arrives.
pub fn feasibility(
    report: &CostReport,
    hardware: &HardwareProfile,
    arrival_interval: f64,
) -> Result<FeasibilityVerdict, CostError> {
    if !(arrival_interval.is_finite() && arrival_interval > 0.0) {
        return Err(CostError::InvalidInterval);
    }
    let fits_ram = report.ram_estimate_bytes <= hardware.ram_capacity_bytes;
    let keeps_up: BTreeMap<String, bool> = hardware
        .units
        .iter()
        .map(|u| {
            let seconds = report
                .latency_seconds
                .get(&u.name)
                .copied()
                .unwrap_or(report.total_flops as f64 / u.flops_per_second);
            (u.name.clone(), seconds <= arrival_interval)
        })
        .collect();
    let limiting_factor = if !fits_ram {
        LimitingFactor::Ram
    } else if !keeps_up.values().any(|&k| k) {
        LimitingFactor::Throughput
    } else {
        LimitingFactor::None
    };
    Ok(FeasibilityVerdict {
        fits_ram,
        keeps_up,
        limiting_factor,
    })
}

/// Formats a latency like the published table: milliseconds below one
/// second, seconds otherwise, two decimals.
pub fn format_latency(seconds: f64) -> String {
    if seconds < 1.0 {
        format!("{:.2}ms", seconds * 1e3)
    } else {
        format!("{seconds:.2}s")
    }
}

fn mb(bytes: u64) -> f64 {
    bytes as f64 / MB as f64
}

/// One row per model; latency columns are `(hardware, unit)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub latency_columns: Vec<(String, String)>,
    pub rows: Vec<CostTableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostTableRow {
    pub model: String,
    pub total_flops: u64,
    pub weight_bytes: u64,
    pub input_bytes: u64,
    pub activation_bytes: u64,
    pub output_bytes: u64,
    pub ram_estimate_bytes: u64,
    pub reference_ram_mb: Option<u64>,
    pub latency_seconds: Vec<f64>,
}

impl CostTable {
    /// Estimates every model on every hardware profile under one workload.
    pub fn build(
        models: &[&ModelProfile],
        hardware: &[&HardwareProfile],
        workload: &WorkloadSpec,
    ) -> Result<Self, CostError> {
        let latency_columns = hardware
            .iter()
            .flat_map(|h| h.units.iter().map(|u| (h.name.clone(), u.name.clone())))
            .collect();
        workload.validate()?;
        let mut rows = Vec::with_capacity(models.len());
        for model in models {
            let total = total_flops(model, workload.seq_length)?;
            let memory = memory_components(model, workload)?;
            let latency_seconds = hardware
                .iter()
                .flat_map(|h| h.units.iter().map(|u| total as f64 / u.flops_per_second))
                .collect();
            rows.push(CostTableRow {
                model: model.name.clone(),
                total_flops: total,
                weight_bytes: memory.weight_bytes,
                input_bytes: memory.input_bytes,
                activation_bytes: memory.activation_bytes,
                output_bytes: memory.output_bytes,
                ram_estimate_bytes: ram_estimate(model, workload)?,
                reference_ram_mb: model.reference_ram_mb,
                latency_seconds,
            });
        }
        Ok(Self { latency_columns, rows })
    }

    fn header(&self) -> Vec<String> {
        let mut cols: Vec<String> = [
            "Model",
            "Total FLOPs (GFLOPs)",
            "Weights (MB)",
            "Input Tensors (B)",
            "Activations (MB)",
            "Output Tensors (MB)",
            "RAM Estimate (MB)",
            "Reference RAM (MB)",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend(self.latency_columns.iter().map(|(h, u)| format!("Latency {h} {u}")));
        cols
    }

    fn display_cells(&self, row: &CostTableRow) -> Vec<String> {
        let mut cells = vec![
            row.model.clone(),
            format!("{:.2}", row.total_flops as f64 / 1e9),
            format!("{:.2}", mb(row.weight_bytes)),
            format!("{:.2}", row.input_bytes as f64),
            format!("{:.2}", mb(row.activation_bytes)),
            format!("{:.2}", mb(row.output_bytes)),
            format!("{:.2}", mb(row.ram_estimate_bytes)),
            row.reference_ram_mb.map_or("---".into(), |r| r.to_string()),
        ];
        cells.extend(row.latency_seconds.iter().map(|&s| format_latency(s)));
        cells
    }

    /// Markdown with the published table's units and precision.
    pub fn to_markdown(&self) -> String {
        let header = self.header();
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", self.display_cells(row).join(" | "));
        }
        out
    }

    /// CSV with exact byte and FLOP counts and latencies in seconds.
    pub fn to_csv(&self) -> String {
        let mut cols: Vec<String> = [
            "model",
            "total_flops",
            "weight_bytes",
            "input_bytes",
            "activation_bytes",
            "output_bytes",
            "ram_estimate_bytes",
            "reference_ram_mb",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend(self.latency_columns.iter().map(|(h, u)| format!("latency_s_{h}_{u}")));
        let mut out = cols.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut cells = vec![
                csv_quote(&row.model),
                row.total_flops.to_string(),
                row.weight_bytes.to_string(),
                row.input_bytes.to_string(),
                row.activation_bytes.to_string(),
                row.output_bytes.to_string(),
                row.ram_estimate_bytes.to_string(),
                row.reference_ram_mb.map_or(String::new(), |r| r.to_string()),
            ];
            cells.extend(row.latency_seconds.iter().map(|s| format!("{s}")));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{builtin_hardware_profiles, builtin_model_profiles};

    fn model(name: &str) -> ModelProfile {
        builtin_model_profiles().into_iter().find(|m| m.name == name).unwrap()
    }

    fn hw(name: &str) -> HardwareProfile {
        builtin_hardware_profiles().into_iter().find(|h| h.name == name).unwrap()
    }

    #[test]
    fn attention_examples() {
        assert_eq!(attention_flops(128, 768, 12), Ok(603_979_776));
        assert_eq!(attention_flops(1, 1, 1), Ok(4));
        assert_eq!(attention_flops(128, 2048, 32), Ok(4_294_967_296));
    }

    #[test]
    fn feedforward_examples() {
        assert_eq!(feedforward_flops(128, 768), Ok(603_979_776));
        assert_eq!(feedforward_flops(1, 1), Ok(8));
        assert_eq!(feedforward_flops(128, 256), Ok(67_108_864));
    }

    #[test]
    fn overflow_is_reported() {
        assert_eq!(
            attention_flops(u64::MAX / 2, 2, 2),
            Err(CostError::Overflow("attention flops"))
        );
        assert!(feedforward_flops(1 << 40, 1 << 20).is_err());
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_flops(&model("distilGPT2"), 128), Ok(7_247_757_312));
        assert_eq!(total_flops(&model("TinyT5"), 128), Ok(536_870_912));
        let mut empty = model("TinyT5");
        empty.n_layers = 0;
        assert_eq!(total_flops(&empty, 128), Ok(0));
    }

    #[test]
    fn memory_examples() {
        let w = WorkloadSpec::default();
        let m = memory_components(&model("distilGPT2"), &w).unwrap();
        assert_eq!(m.weight_bytes, 327_650_304);
        assert_eq!(m.input_bytes, 4096);
        assert_eq!(m.activation_bytes, 18_874_368);
        assert_eq!(m.output_bytes, 205_852_672);
        let m = memory_components(&model("TinyBERT"), &w).unwrap();
        assert_eq!(m.activation_bytes, 5_111_808);
        let tiny = WorkloadSpec {
            batch_size: 1,
            seq_length: 1,
            ..w
        };
        assert_eq!(memory_components(&model("Llama-3.2-1B"), &tiny).unwrap().input_bytes, 4);
    }

    #[test]
    fn ram_examples() {
        let w = WorkloadSpec::default();
        assert_eq!(ram_estimate(&model("distilGPT2"), &w), Ok(652_381_440));
        let t5 = ram_estimate(&model("TinyT5"), &w).unwrap() as f64 / 1e6;
        assert!((t5 - 298.08).abs() < 0.01, "{t5}");

        let degenerate = ModelProfile {
            name: "empty".into(),
            distilled_from: None,
            hidden_size: 1,
            n_heads: 1,
            n_layers: 0,
            vocab_size: 10,
            n_params: 0,
            reference_ram_mb: None,
        };
        let w = WorkloadSpec {
            batch_size: 1,
            seq_length: 1,
            bytes_per_scalar: 4,
            runtime_overhead_bytes: 0,
        };
        assert_eq!(ram_estimate(&degenerate, &w), Ok(4 + 40));
    }

    #[test]
    fn latency_examples() {
        let pi = latency(7_247_757_312, &hw("raspberry-pi-3"));
        assert!((pi["cpu"] - 24.159).abs() < 5e-4);
        let nano = latency(total_flops(&model("Llama-3.2-1B"), 128).unwrap(), &hw("jetson-nano"));
        assert!((nano["gpu"] - 2.749).abs() < 5e-4);
        assert!(latency(0, &hw("jetson-nano")).values().all(|&s| s == 0.0));
    }

    #[test]
    fn estimate_examples() {
        let w = WorkloadSpec::default();
        let r = estimate(&model("TinyBERT"), &w, &hw("jetson-nano")).unwrap();
        assert_eq!(format!("{:.2}", r.total_flops as f64 / 1e9), "1.38");
        assert_eq!(format!("{:.2}", mb(r.weight_bytes)), "57.40");
        assert_eq!(format_latency(r.latency_seconds["cpu"]), "138.02ms");
        assert_eq!(format_latency(r.latency_seconds["gpu"]), "27.60ms");
        let r = estimate(&model("TinyBERT"), &w, &hw("raspberry-pi-3")).unwrap();
        assert_eq!(format_latency(r.latency_seconds["cpu"]), "4.60s");
        let r = estimate(&model("distilBERT"), &w, &hw("jetson-nano")).unwrap();
        assert_eq!(format!("{:.2}", mb(r.output_bytes)), "125.02");
        let r = estimate(&model("TinyT5"), &w, &hw("raspberry-pi-3")).unwrap();
        assert_eq!(format_latency(r.latency_seconds["cpu"]), "1.79s");
        assert_eq!(
            r.total_flops,
            model("TinyT5").n_layers * (r.attention_flops_per_layer + r.feedforward_flops_per_layer)
        );
    }

    #[test]
    fn invalid_workload_rejected() {
        let w = WorkloadSpec {
            bytes_per_scalar: 3,
            ..WorkloadSpec::default()
        };
        assert!(matches!(
            estimate(&model("TinyT5"), &w, &hw("jetson-nano")),
            Err(CostError::InvalidWorkload(_))
        ));
    }

    #[test]
    fn feasibility_examples() {
        let w = WorkloadSpec::default();
        let pi = hw("raspberry-pi-3");
        let llama = estimate(&model("Llama-3.2-1B"), &w, &pi).unwrap();
        let v = feasibility(&llama, &pi, 1.0).unwrap();
        assert!(!v.fits_ram);
        assert!(!v.keeps_up["cpu"]);
        assert_eq!(v.limiting_factor, LimitingFactor::Ram);

        let nano = hw("jetson-nano");
        let t5 = estimate(&model("TinyT5"), &w, &nano).unwrap();
        let v = feasibility(&t5, &nano, 1.0).unwrap();
        assert!(v.fits_ram);
        assert!(v.keeps_up["gpu"]);
        assert_eq!(v.limiting_factor, LimitingFactor::None);

        // fits in RAM but too slow everywhere
        let distil = estimate(&model("distilGPT2"), &w, &pi).unwrap();
        let v = feasibility(&distil, &pi, 1.0).unwrap();
        assert!(v.fits_ram);
        assert_eq!(v.limiting_factor, LimitingFactor::Throughput);

        let mut zero = t5.clone();
        zero.total_flops = 0;
        zero.ram_estimate_bytes = 0;
        zero.latency_seconds.values_mut().for_each(|s| *s = 0.0);
        assert_eq!(feasibility(&zero, &pi, 1.0).unwrap().limiting_factor, LimitingFactor::None);
        assert_eq!(feasibility(&zero, &pi, 0.0), Err(CostError::InvalidInterval));
    }

    #[test]
    fn latency_formatting() {
        assert_eq!(format_latency(0.14495514624), "144.96ms");
        assert_eq!(format_latency(24.15919104), "24.16s");
        assert_eq!(format_latency(0.0), "0.00ms");
    }
}
