use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Binary confusion counts with attack (1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Counts `(predicted, true)` pairs; labels must be 0 or 1.
pub fn confusion<I>(pairs: I) -> Result<ConfusionCounts, HarnessError>
where
    I: IntoIterator<Item = (u32, u32)>,
{
    let mut c = ConfusionCounts::default();
    for (predicted, actual) in pairs {
        if predicted > 1 || actual > 1 {
            return Err(HarnessError::InvalidLabel(format!(
                "binary confusion needs labels 0/1, got predicted {predicted}, true {actual}"
            )));
        }
        c.record(predicted == 1, actual == 1);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDivision {
    Accuracy,
    Precision,
    Recall,
    F1,
}

/// Classification metrics; a metric whose denominator is zero is 0 and
/// listed in `zero_division`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean per-record binary cross-entropy, when scores were available.
    pub mean_loss: Option<f64>,
    pub support: u64,
    pub zero_division: BTreeSet<ZeroDivision>,
}

fn ratio(num: u64, den: u64, flag: ZeroDivision, flags: &mut BTreeSet<ZeroDivision>) -> f64 {
    if den == 0 {
        flags.insert(flag);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall and F1 from counts. F1 is computed as
/// `2tp / (2tp + fp + fn)`, which equals the harmonic mean of precision
/// and recall whenever both are defined.
pub fn metrics(c: &ConfusionCounts) -> MetricsReport {
    let mut flags = BTreeSet::new();
    let accuracy = ratio(c.tp + c.tn, c.total(), ZeroDivision::Accuracy, &mut flags);
    let precision = ratio(c.tp, c.tp + c.fp, ZeroDivision::Precision, &mut flags);
    let recall = ratio(c.tp, c.tp + c.fn_, ZeroDivision::Recall, &mut flags);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, ZeroDivision::F1, &mut flags);
    MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        mean_loss: None,
        support: c.total(),
        zero_division: flags,
    }
}

/// Square confusion matrix over the union of observed classes;
/// `counts[t][p]` counts records of class `classes[t]` predicted as
/// `classes[p]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticlassConfusion {
    pub classes: Vec<u32>,
    pub counts: Vec<Vec<u64>>,
}

impl MulticlassConfusion {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
        let classes: Vec<u32> = pairs
            .iter()
            .flat_map(|&(p, t)| [p, t])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos: BTreeMap<u32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
        for (p, t) in pairs {
            counts[pos[&t]][pos[&p]] += 1;
        }
        Self { classes, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// One-vs-rest counts for the class at position `index`.
    pub fn one_vs_rest(&self, index: usize) -> ConfusionCounts {
        let tp = self.counts[index][index];
        let row: u64 = self.counts[index].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[index]).sum();
        ConfusionCounts {
            tp,
            fp: col - tp,
            fn_: row - tp,
            tn: self.total() - row - col + tp,
        }
    }

    /// Overall accuracy plus precision, recall and F1 averaged over
    /// classes with equal weight.
    pub fn macro_metrics(&self) -> MetricsReport {
        let total = self.total();
        let mut flags = BTreeSet::new();
        let correct: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        let accuracy = ratio(correct, total, ZeroDivision::Accuracy, &mut flags);
        let k = self.classes.len().max(1) as f64;
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for i in 0..self.classes.len() {
            let m = metrics(&self.one_vs_rest(i));
            p += m.precision;
            r += m.recall;
            f += m.f1;
            flags.extend(m.zero_division.into_iter().filter(|z| *z != ZeroDivision::Accuracy));
        }
        MetricsReport {
            accuracy,
            precision: p / k,
            recall: r / k,
            f1: f / k,
            mean_loss: None,
            support: total,
            zero_division: flags,
        }
    }
}
