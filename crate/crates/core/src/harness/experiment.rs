use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionCounts, MetricsReport};
use super::predfile::{score_predictions, PredictionRecord};
use super::HarnessError;
use crate::datapipe::{few_shot_subsample, kfold_plan, split, LabeledRecord, DEFAULT_FEW_SHOT_LIMIT, DEFAULT_TRAIN_RATIO};
use crate::learner::{train, ClassifierState, EpochLog, HashedFeaturizer, TrainConfig};

/// Name of the built-in classifier in reports.
pub const BUILTIN_MODEL_NAME: &str = "hashed-linear";

/// Seconds since an arbitrary origin.
pub trait Clock: Sync {
    fn now(&self) -> f64;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Advances by a fixed step on every reading. With a single reader, any
/// interval bracketed by two consecutive readings measures exactly `step`.
pub struct SteppingClock {
    step: f64,
    ticks: AtomicU64,
}

impl SteppingClock {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> f64 {
        self.ticks.fetch_add(1, Ordering::Relaxed) as f64 * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FewShot,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    ZeroShot,
    FewShot,
    Complete,
    CrossDataset(Regime),
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentMode::ZeroShot => f.write_str("zero_shot"),
            ExperimentMode::FewShot => f.write_str("few_shot"),
            ExperimentMode::Complete => f.write_str("complete"),
            ExperimentMode::CrossDataset(Regime::FewShot) => f.write_str("cross_dataset/few_shot"),
            ExperimentMode::CrossDataset(Regime::Complete) => f.write_str("cross_dataset/complete"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: ExperimentMode,
    pub train_dataset: String,
    /// Required for cross-dataset runs; otherwise ignored.
    pub eval_dataset: Option<String>,
    pub config: TrainConfig,
    /// Seeds the train/test split and the few-shot subsample.
    pub seed: u64,
    pub train_ratio: f64,
    pub few_shot_limit: usize,
}

impl ExperimentSpec {
    pub fn new(mode: ExperimentMode, train_dataset: impl Into<String>, config: TrainConfig, seed: u64) -> Self {
        Self {
            mode,
            train_dataset: train_dataset.into(),
            eval_dataset: None,
            config,
            seed,
            train_ratio: DEFAULT_TRAIN_RATIO,
            few_shot_limit: DEFAULT_FEW_SHOT_LIMIT,
        }
    }

    pub fn cross(
        regime: Regime,
        train_dataset: impl Into<String>,
        eval_dataset: impl Into<String>,
        config: TrainConfig,
        seed: u64,
    ) -> Self {
        Self {
            eval_dataset: Some(eval_dataset.into()),
            ..Self::new(ExperimentMode::CrossDataset(regime), train_dataset, config, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: String,
    pub mode: ExperimentMode,
    pub train_dataset: String,
    pub eval_dataset: String,
    /// 0 when nothing was trained.
    pub epochs: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub train_seconds: Option<f64>,
    pub log: Vec<EpochLog>,
    pub test: MetricsReport,
    pub confusion: ConfusionCounts,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn last_epoch(&self) -> Option<&EpochLog> {
        self.log.last()
    }
}

/// Scores every record with `state`.
pub fn predict_records(state: &ClassifierState, records: &[LabeledRecord]) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| {
            let p = state.predict(&r.text);
            PredictionRecord {
                id: r.id,
                true_label: u32::from(r.binary_label),
                predicted_label: u32::from(p.label),
                score: Some(p.score),
            }
        })
        .collect()
}

/// Predictions plus their metrics (mean BCE included), computed through
/// the same path as prediction-file scoring.
pub fn evaluate(
    state: &ClassifierState,
    records: &[LabeledRecord],
) -> Result<(Vec<PredictionRecord>, MetricsReport, ConfusionCounts), HarnessError> {
    let predictions = predict_records(state, records);
    let score = score_predictions(&predictions)?;
    let counts = score.binary.unwrap_or_default();
    Ok((predictions, score.metrics, counts))
}

fn cloned(refs: Vec<&LabeledRecord>) -> Vec<LabeledRecord> {
    refs.into_iter().cloned().collect()
}

/// Runs one protocol. `train_data` is split by `spec.seed` into train and
/// test parts; cross-dataset runs evaluate on all of `eval_data` instead
/// of the test part.
pub fn run_experiment(
    spec: &ExperimentSpec,
    train_data: &[LabeledRecord],
    eval_data: Option<&[LabeledRecord]>,
    clock: &dyn Clock,
) -> Result<ExperimentReport, HarnessError> {
    run_experiment_full(spec, train_data, eval_data, clock).map(|run| run.report)
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub state: ClassifierState,
    /// Predictions on the evaluation set, in record order.
    pub predictions: Vec<PredictionRecord>,
}

/// [`run_experiment`], keeping the final state and the predictions.
pub fn run_experiment_full(
    spec: &ExperimentSpec,
    train_data: &[LabeledRecord],
    eval_data: Option<&[LabeledRecord]>,
    clock: &dyn Clock,
) -> Result<ExperimentRun, HarnessError> {
    spec.config.validate()?;
    let plan = split(train_data.len(), spec.train_ratio, spec.seed)?;
    let (train_part, test_part) = plan.apply(train_data);

    let (regime, eval_name, eval_set) = match spec.mode {
        ExperimentMode::CrossDataset(regime) => {
            let eval_name = spec
                .eval_dataset
                .clone()
                .ok_or_else(|| HarnessError::Spec("cross-dataset run needs an evaluation dataset".into()))?;
            if eval_name.eq_ignore_ascii_case(&spec.train_dataset) {
                return Err(HarnessError::Spec(format!(
                    "cross-dataset run must evaluate on a different dataset than `{eval_name}`"
                )));
            }
            let eval_data =
                eval_data.ok_or_else(|| HarnessError::Spec(format!("no records supplied for `{eval_name}`")))?;
            (Some(regime), eval_name, eval_data.to_vec())
        }
        ExperimentMode::ZeroShot => (None, spec.train_dataset.clone(), cloned(test_part)),
        ExperimentMode::FewShot => (Some(Regime::FewShot), spec.train_dataset.clone(), cloned(test_part)),
        ExperimentMode::Complete => (Some(Regime::Complete), spec.train_dataset.clone(), cloned(test_part)),
    };

    let train_records = cloned(train_part);
    let (state, log, train_seconds, n_train) = match regime {
        None => {
            let featurizer = HashedFeaturizer::new(spec.config.hash_dimension, spec.config.hash_seed)?;
            (ClassifierState::untrained(featurizer), Vec::new(), None, 0)
        }
        Some(regime) => {
            let records = match regime {
                Regime::FewShot => few_shot_subsample(&train_records, spec.few_shot_limit, spec.seed)?,
                Regime::Complete => train_records,
            };
            let start = clock.now();
            let outcome = train(&records, &spec.config)?;
            let elapsed = clock.now() - start;
            (outcome.state, outcome.log, Some(elapsed), records.len())
        }
    };

    let (predictions, test, confusion) = evaluate(&state, &eval_set)?;
    let report = ExperimentReport {
        model: BUILTIN_MODEL_NAME.to_string(),
        mode: spec.mode,
        train_dataset: spec.train_dataset.clone(),
        eval_dataset: eval_name,
        epochs: log.len(),
        n_train,
        n_eval: eval_set.len(),
        train_seconds,
        log,
        test,
        confusion,
        seed: spec.seed,
    };
    Ok(ExperimentRun {
        report,
        state,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub k: usize,
    /// Seed that produced the fold assignment actually used.
    pub plan_seed: u64,
    pub attempts: usize,
    pub folds: Vec<ExperimentReport>,
    /// Max minus min fold accuracy.
    pub spread: f64,
}

pub const KFOLD_MAX_ATTEMPTS: usize = 10;

/// k-fold validation. If some fold's training complement holds a single
/// class, the assignment is redrawn with the next seed, up to 10 tries.
pub fn run_kfold(
    dataset: &str,
    records: &[LabeledRecord],
    k: usize,
    config: &TrainConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<KFoldReport, HarnessError> {
    config.validate()?;
    let mut attempt = 0;
    let plan = loop {
        if attempt == KFOLD_MAX_ATTEMPTS {
            return Err(HarnessError::Spec(format!(
                "no {k}-fold assignment with two classes in every training part after {KFOLD_MAX_ATTEMPTS} attempts"
            )));
        }
        let plan = kfold_plan(records.len(), k, seed.wrapping_add(attempt as u64))?;
        attempt += 1;
        let ok = (0..k).all(|f| {
            let idx = plan.train_indices(f);
            let first = idx.first().map(|&i| records[i].binary_label);
            idx.iter().any(|&i| Some(records[i].binary_label) != first)
        });
        if ok {
            break plan;
        }
    };

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let train_set: Vec<LabeledRecord> = plan.train_indices(f).iter().map(|&i| records[i].clone()).collect();
        let test_set: Vec<LabeledRecord> = plan.folds[f].iter().map(|&i| records[i].clone()).collect();
        let start = clock.now();
        let outcome = train(&train_set, config)?;
        let elapsed = clock.now() - start;
        let (_, test, confusion) = evaluate(&outcome.state, &test_set)?;
        folds.push(ExperimentReport {
            model: BUILTIN_MODEL_NAME.to_string(),
            mode: ExperimentMode::Complete,
            train_dataset: dataset.to_string(),
            eval_dataset: format!("{dataset} fold {}", f + 1),
            epochs: outcome.log.len(),
            n_train: train_set.len(),
            n_eval: test_set.len(),
            train_seconds: Some(elapsed),
            log: outcome.log,
            test,
            confusion,
            seed: plan.seed,
        });
    }
    let accs = folds.iter().map(|r| r.test.accuracy);
    let spread = accs.clone().fold(f64::NEG_INFINITY, f64::max) - accs.fold(f64::INFINITY, f64::min);
    Ok(KFoldReport {
        k,
        plan_seed: plan.seed,
        attempts: attempt,
        folds,
        spread,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub regime: Regime,
    pub datasets: Vec<String>,
    /// `cells[row][col]`: trained on `datasets[row]`, evaluated on
    /// `datasets[col]`; `None` on the diagonal.
    pub cells: Vec<Vec<Option<ExperimentReport>>>,
}

impl CrossMatrix {
    pub fn accuracy(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col].as_ref().map(|r| r.test.accuracy)
    }

    fn render(&self, sep: &str, header_rule: bool) -> String {
        let mut out = String::new();
        let row = |cells: Vec<String>| -> String {
            if sep == "|" {
                format!("| {} |\n", cells.join(" | "))
            } else {
                format!("{}\n", cells.join(sep))
            }
        };
        let mut header = vec!["Train \\ Eval".to_string()];
        header.extend(self.datasets.iter().cloned());
        out.push_str(&row(header));
        if header_rule {
            out.push_str(&row(vec!["---".to_string(); self.datasets.len() + 1]));
        }
        for (i, name) in self.datasets.iter().enumerate() {
            let mut cells = vec![name.clone()];
            for j in 0..self.datasets.len() {
                cells.push(match self.accuracy(i, j) {
                    Some(a) => format!("{:.2}%", a * 100.0),
                    None => "---".to_string(),
                });
            }
            out.push_str(&row(cells));
        }
        out
    }

    /// Accuracy percentages with `---` on the diagonal.
    pub fn to_markdown(&self) -> String {
        self.render("|", true)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("train,eval,accuracy\n");
        for (i, a) in self.datasets.iter().enumerate() {
            for (j, b) in self.datasets.iter().enumerate() {
                let cell = self.accuracy(i, j).map_or("---".to_string(), |v| format!("{v:.4}"));
                out.push_str(&format!(
                    "{},{},{cell}\n",
                    crate::costmodel::csv_quote(a),
                    crate::costmodel::csv_quote(b)
                ));
            }
        }
        out
    }
}

/// Every ordered pair of distinct datasets. Rows run on separate threads;
/// each cell is seeded identically, so the matrix does not depend on
/// scheduling.
pub fn cross_matrix(
    datasets: &[(String, Vec<LabeledRecord>)],
    regime: Regime,
    config: &TrainConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<CrossMatrix, HarnessError> {
    if datasets.len() < 2 {
        return Err(HarnessError::Spec("cross matrix needs at least 2 datasets".into()));
    }
    let rows: Vec<Result<Vec<Option<ExperimentReport>>, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = datasets
            .iter()
            .enumerate()
            .map(|(i, (train_name, train_records))| {
                scope.spawn(move || {
                    datasets
                        .iter()
                        .enumerate()
                        .map(|(j, (eval_name, eval_records))| {
                            if i == j {
                                return Ok(None);
                            }
                            let spec = ExperimentSpec::cross(regime, train_name, eval_name, *config, seed);
                            run_experiment(&spec, train_records, Some(eval_records), clock).map(Some)
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("cross-matrix worker panicked"))
            .collect()
    });
    Ok(CrossMatrix {
        regime,
        datasets: datasets.iter().map(|(n, _)| n.clone()).collect(),
        cells: rows.into_iter().collect::<Result<_, _>>()?,
    })
}
