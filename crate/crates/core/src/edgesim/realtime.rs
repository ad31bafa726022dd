use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, RecvTimeoutError, TrySendError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{SimConfig, SimError, SimReport};
use crate::learner::{ClassifierState, Prediction};

/// Anything that can label one serialized packet.
pub trait PacketClassifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<Prediction, String>;
}

impl PacketClassifier for ClassifierState {
    fn classify(&self, text: &str) -> Result<Prediction, String> {
        Ok(self.predict(text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealtimeReport {
    pub report: SimReport,
    /// Work units completed by the primary-task worker.
    pub primary_task_cycles: u64,
    /// Set when the classifier failed; the report then covers the run up
    /// to the failure.
    pub error: Option<String>,
}

const PRIMARY_TASK_SLICE: Duration = Duration::from_millis(10);

/// Wall-clock run: the calling thread emits `packets` (cycled) at the
/// arrival interval into a bounded queue; one worker classifies them and
/// another occupies `primary_task_share` of each time slice with busy
/// work. Packets that find the queue full are dropped. Only packets
/// classified before `duration` count as completed.
pub fn run_realtime(
    config: &SimConfig,
    classifier: &dyn PacketClassifier,
    packets: &[String],
) -> Result<RealtimeReport, SimError> {
    config.validate()?;
    if packets.is_empty() {
        return Err(SimError::InvalidConfig("real-time run needs at least one packet".into()));
    }
    // The channel holds waiting packets; a capacity of 0 is run as 1.
    let capacity = config.queue_capacity.unwrap_or(1 << 20).max(1);
    let (tx, rx) = sync_channel::<(Instant, usize)>(capacity);
    let deadline = Instant::now() + Duration::from_secs_f64(config.duration);
    let start = Instant::now();
    let stop = AtomicBool::new(false);
    let failed = AtomicBool::new(false);
    let completed = AtomicU64::new(0);
    let max_backlog = AtomicU64::new(0);
    let in_flight = AtomicU64::new(0);
    let busy_nanos = AtomicU64::new(0);
    let sojourn_nanos = AtomicU64::new(0);
    let cycles = AtomicU64::new(0);
    let error: Mutex<Option<String>> = Mutex::new(None);
    let mut arrivals = 0u64;
    let mut dropped = 0u64;

    thread::scope(|scope| {
        let (stop, failed, completed, in_flight, busy_nanos, sojourn_nanos, error) =
            (&stop, &failed, &completed, &in_flight, &busy_nanos, &sojourn_nanos, &error);
        scope.spawn(move || {
            loop {
                let item = match rx.recv_timeout(Duration::from_millis(5)) {
                    Ok(item) => item,
                    Err(RecvTimeoutError::Timeout) if !stop.load(Ordering::Acquire) => continue,
                    Err(_) => break,
                };
                if Instant::now() > deadline {
                    break;
                }
                let began = Instant::now();
                let result = classifier.classify(&packets[item.1 % packets.len()]);
                let finished = Instant::now();
                busy_nanos.fetch_add((finished - began).as_nanos() as u64, Ordering::Relaxed);
                if let Err(e) = result {
                    *error.lock().expect("error slot poisoned") = Some(e);
                    failed.store(true, Ordering::Release);
                    break;
                }
                if finished > deadline {
                    break;
                }
                sojourn_nanos.fetch_add((finished - item.0).as_nanos() as u64, Ordering::Relaxed);
                completed.fetch_add(1, Ordering::Relaxed);
                in_flight.fetch_sub(1, Ordering::AcqRel);
            }
        });

        if config.primary_task_share > 0.0 {
            scope.spawn(|| {
                let work = PRIMARY_TASK_SLICE.mul_f64(config.primary_task_share);
                while !stop.load(Ordering::Acquire) && Instant::now() < deadline {
                    let slice = Instant::now();
                    let mut acc = 0u64;
                    while slice.elapsed() < work {
                        acc = std::hint::black_box(acc.wrapping_mul(6364136223846793005).wrapping_add(1));
                    }
                    cycles.fetch_add(1, Ordering::Relaxed);
                    if let Some(rest) = PRIMARY_TASK_SLICE.checked_sub(slice.elapsed()) {
                        thread::sleep(rest);
                    }
                }
            });
        }

        let interval = Duration::from_secs_f64(config.arrival_interval);
        let mut index = 0usize;
        loop {
            let due = start + interval.mul_f64(index as f64);
            if due >= deadline || failed.load(Ordering::Acquire) {
                break;
            }
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            if failed.load(Ordering::Acquire) {
                break;
            }
            arrivals += 1;
            let backlog = in_flight.fetch_add(1, Ordering::AcqRel) + 1;
            match tx.try_send((Instant::now(), index)) {
                Ok(()) => {
                    max_backlog.fetch_max(backlog, Ordering::Relaxed);
                }
                Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                    in_flight.fetch_sub(1, Ordering::AcqRel);
                    dropped += 1;
                }
            }
            index += 1;
        }
        if let Some(rest) = deadline.checked_duration_since(Instant::now()) {
            if !failed.load(Ordering::Acquire) {
                thread::sleep(rest);
            }
        }
        stop.store(true, Ordering::Release);
        drop(tx);
    });

    let completed = completed.into_inner();
    let busy = busy_nanos.into_inner() as f64 * 1e-9;
    let report = SimReport {
        arrivals,
        completed,
        dropped,
        final_backlog: arrivals - completed - dropped,
        max_backlog: max_backlog.into_inner(),
        mean_sojourn: if completed == 0 {
            0.0
        } else {
            sojourn_nanos.into_inner() as f64 * 1e-9 / completed as f64
        },
        utilization: if config.duration > 0.0 {
            (busy / config.duration).clamp(0.0, 1.0)
        } else {
            0.0
        },
        service_time: if completed == 0 { 0.0 } else { busy / completed as f64 },
    };
    Ok(RealtimeReport {
        report,
        primary_task_cycles: cycles.into_inner(),
        error: error.into_inner().expect("error slot poisoned"),
    })
}
