//! Single-server FIFO queue model of an edge device classifying one
//! packet per arrival interval, with an optional wall-clock variant.

mod realtime;

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use realtime::{run_realtime, PacketClassifier, RealtimeReport};

use crate::costmodel::{estimate, CostError, WorkloadSpec};
use crate::datapipe::{synth_generate, SynthConfig};
use crate::learner::ClassifierState;
use crate::registry::{HardwareProfile, ModelProfile};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("hardware `{hardware}` has no execution unit `{unit}` (available: {available})")]
    UnknownUnit {
        hardware: String,
        unit: String,
        available: String,
    },
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("measuring classifier latency: {0}")]
    Measurement(String),
}

/// Where the per-packet service time comes from.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum LatencySource {
    /// Cost-model latency of `model` on one execution unit of `hardware`.
    Analytical {
        model: ModelProfile,
        hardware: HardwareProfile,
        unit: String,
        workload: WorkloadSpec,
    },
    /// Median wall-clock prediction time of the built-in classifier.
    Measured(Arc<ClassifierState>),
    /// A given number of seconds.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub arrival_interval: f64,
    pub duration: f64,
    /// Maximum packets waiting behind the one in service; `None` is
    /// unbounded.
    pub queue_capacity: Option<usize>,
    pub latency_source: LatencySource,
    /// Fraction of compute held by the device's primary task, in [0, 1).
    pub primary_task_share: f64,
}

impl SimConfig {
    pub fn new(latency_source: LatencySource, duration: f64) -> Self {
        Self {
            arrival_interval: 1.0,
            duration,
            queue_capacity: None,
            latency_source,
            primary_task_share: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.arrival_interval.is_finite() && self.arrival_interval > 0.0) {
            return bad(format!("arrival interval must be > 0, got {}", self.arrival_interval));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad(format!("duration must be >= 0, got {}", self.duration));
        }
        if !(0.0..1.0).contains(&self.primary_task_share) {
            return bad(format!("primary task share must be in [0, 1), got {}", self.primary_task_share));
        }
        if let LatencySource::Fixed(s) = self.latency_source {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("fixed service time must be > 0, got {s}"));
            }
        }
        Ok(())
    }
}

/// Number of timed predictions whose median is the measured latency.
pub const MEASUREMENT_SAMPLES: usize = 32;

/// Median of [`MEASUREMENT_SAMPLES`] timed predictions on synthetic
/// packets.
pub fn measure_latency(classifier: &dyn PacketClassifier) -> Result<f64, SimError> {
    let packets = synth_generate(&SynthConfig::new(MEASUREMENT_SAMPLES, 16, 4, 0.5, 0))
        .map_err(|e| SimError::Measurement(e.to_string()))?;
    let mut times = Vec::with_capacity(MEASUREMENT_SAMPLES);
    for r in &packets.records {
        let start = Instant::now();
        classifier.classify(&r.text).map_err(SimError::Measurement)?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = 0.5 * (times[mid - 1] + times[mid]);
    // A clock too coarse to see one prediction still yields a usable rate.
    Ok(median.max(1e-9))
}

/// Seconds to classify one packet. Analytical and fixed times are
/// stretched by `1 / (1 − primary_task_share)`; measured times already
/// reflect the machine they ran on.
pub fn service_time(config: &SimConfig) -> Result<f64, SimError> {
    config.validate()?;
    let available = 1.0 - config.primary_task_share;
    match &config.latency_source {
        LatencySource::Analytical {
            model,
            hardware,
            unit,
            workload,
        } => {
            let report = estimate(model, workload, hardware)?;
            let base = report.latency_seconds.get(unit).copied().ok_or_else(|| SimError::UnknownUnit {
                hardware: hardware.name.clone(),
                unit: unit.clone(),
                available: hardware.units.iter().map(|u| u.name.as_str()).collect::<Vec<_>>().join(", "),
            })?;
            Ok(base / available)
        }
        LatencySource::Fixed(s) => Ok(s / available),
        LatencySource::Measured(state) => measure_latency(state.as_ref()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    Stable,
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    /// Service time over arrival interval.
    pub rho: f64,
    pub verdict: StabilityVerdict,
}

pub fn stability_for(service_time: f64, arrival_interval: f64) -> Stability {
    let rho = service_time / arrival_interval;
    Stability {
        rho,
        verdict: if rho <= 1.0 {
            StabilityVerdict::Stable
        } else {
            StabilityVerdict::Saturated
        },
    }
}

pub fn stability(config: &SimConfig) -> Result<Stability, SimError> {
    Ok(stability_for(service_time(config)?, config.arrival_interval))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub arrivals: u64,
    pub completed: u64,
    pub dropped: u64,
    /// Packets in the system (waiting or in service) at the end.
    pub final_backlog: u64,
    pub max_backlog: u64,
    /// Mean arrival-to-departure time of completed packets; 0 if none.
    pub mean_sojourn: f64,
    /// Server busy time within the run over its duration.
    pub utilization: f64,
    pub service_time: f64,
}

impl SimReport {
    pub fn is_conserved(&self) -> bool {
        self.completed + self.dropped + self.final_backlog == self.arrivals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub report: SimReport,
    pub stability: Stability,
    /// `(time, backlog)` after every event, starting with `(0, 0)`.
    pub trajectory: Vec<(f64, u64)>,
}

impl SimOutcome {
    pub fn write_trajectory_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "time,backlog")?;
        for (t, b) in &self.trajectory {
            writeln!(w, "{t},{b}")?;
        }
        w.flush()
    }
}

/// Event loop with a known service time. Packet `i` arrives at
/// `i·interval` for every arrival strictly before `duration`; departures
/// at or before `duration` count as completed, and a departure is handled
/// before an arrival at the same instant.
pub fn simulate(service_time: f64, arrival_interval: f64, duration: f64, capacity: Option<usize>) -> SimOutcome {
    let mut waiting: VecDeque<f64> = VecDeque::new();
    // (arrival time, departure time) of the packet in service
    let mut in_service: Option<(f64, f64)> = None;
    let mut trajectory = vec![(0.0, 0)];
    let (mut arrivals, mut completed, mut dropped, mut max_backlog) = (0u64, 0u64, 0u64, 0u64);
    let mut sojourn_total = 0.0;
    let mut busy = 0.0;
    let mut next_index = 0u64;

    loop {
        let next_arrival = next_index as f64 * arrival_interval;
        let arrival_due = next_arrival < duration;
        let departure = in_service.map(|(_, d)| d).filter(|&d| d <= duration);
        let now = match (departure, arrival_due) {
            (Some(d), true) if d <= next_arrival => d,
            (Some(d), false) => d,
            (_, true) => next_arrival,
            (None, false) => break,
        };
        if departure == Some(now) {
            let (arrived, left) = in_service.take().expect("departure without service");
            completed += 1;
            sojourn_total += left - arrived;
            busy += service_time;
            if let Some(next) = waiting.pop_front() {
                in_service = Some((next, now + service_time));
            }
        } else {
            arrivals += 1;
            next_index += 1;
            if in_service.is_none() {
                in_service = Some((now, now + service_time));
            } else if capacity.is_none_or(|c| waiting.len() < c) {
                waiting.push_back(now);
            } else {
                dropped += 1;
            }
        }
        let backlog = waiting.len() as u64 + u64::from(in_service.is_some());
        max_backlog = max_backlog.max(backlog);
        trajectory.push((now, backlog));
    }
    if let Some((_, d)) = in_service {
        busy += service_time - (d - duration);
    }
    let report = SimReport {
        arrivals,
        completed,
        dropped,
        final_backlog: waiting.len() as u64 + u64::from(in_service.is_some()),
        max_backlog,
        mean_sojourn: if completed == 0 { 0.0 } else { sojourn_total / completed as f64 },
        utilization: if duration > 0.0 { (busy / duration).clamp(0.0, 1.0) } else { 0.0 },
        service_time,
    };
    SimOutcome {
        report,
        stability: stability_for(service_time, arrival_interval),
        trajectory,
    }
}

pub fn run(config: &SimConfig) -> Result<SimOutcome, SimError> {
    let s = service_time(config)?;
    Ok(simulate(s, config.arrival_interval, config.duration, config.queue_capacity))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_second_service() {
        let out = simulate(0.5, 1.0, 60.0, None);
        let r = &out.report;
        assert_eq!((r.arrivals, r.completed, r.max_backlog), (60, 60, 1));
        assert_eq!(r.utilization, 0.5);
        assert_eq!(r.mean_sojourn, 0.5);
        assert!(r.is_conserved());
    }

    #[test]
    fn zero_duration_is_empty() {
        let r = simulate(2.0, 1.0, 0.0, None).report;
        assert_eq!((r.arrivals, r.completed, r.dropped, r.final_backlog, r.max_backlog), (0, 0, 0, 0, 0));
        assert_eq!(r.utilization, 0.0);
    }

    #[test]
    fn capacity_drops() {
        let r = simulate(10.0, 1.0, 10.0, Some(2)).report;
        assert_eq!(r.arrivals, 10);
        assert_eq!(r.completed, 1);
        assert_eq!(r.final_backlog, 2);
        assert_eq!(r.dropped, 7);
        assert_eq!(r.utilization, 1.0);
        assert!(r.is_conserved());
    }

    #[test]
    fn service_equal_to_interval_is_boundary_stable() {
        let s = stability_for(1.0, 1.0);
        assert_eq!(s.rho, 1.0);
        assert_eq!(s.verdict, StabilityVerdict::Stable);
        let r = simulate(1.0, 1.0, 5.0, None).report;
        assert_eq!(r.max_backlog, 1);
        assert_eq!(r.completed, 5);
    }

    #[test]
    fn share_stretches_fixed_time() {
        let mut c = SimConfig::new(LatencySource::Fixed(0.2), 10.0);
        c.primary_task_share = 0.5;
        assert_eq!(service_time(&c).unwrap(), 0.4);
        c.primary_task_share = 1.0;
        assert!(service_time(&c).is_err());
    }
}
