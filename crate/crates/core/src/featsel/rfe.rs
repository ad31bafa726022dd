use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{standardize, FeatselError, Method, NumericMatrix, SelectionResult};
use crate::learner::{fit_linear, SparseVector, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfeConfig {
    pub n_keep: usize,
    pub step: usize,
    /// Settings for each refit of the linear classifier.
    pub train: TrainConfig,
}

impl RfeConfig {
    pub fn new(n_keep: usize) -> Self {
        Self {
            n_keep,
            step: 1,
            train: TrainConfig {
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
        }
    }
}

/// Recursive feature elimination with the learner's linear head on
/// standardized columns. Each round refits on the survivors and drops the
/// `step` smallest |weight| (ties drop the later column). A feature's
/// score is the round that removed it; survivors score one past the last
/// round.
pub fn rfe(x: &NumericMatrix, y: &[u8], config: &RfeConfig) -> Result<SelectionResult, FeatselError> {
    x.require_rows()?;
    let p = x.n_cols();
    if y.len() != x.n_rows() {
        return Err(FeatselError::Shape(format!("{} targets for {} rows", y.len(), x.n_rows())));
    }
    if config.n_keep == 0 || config.n_keep > p {
        return Err(FeatselError::InvalidArgument(format!("n_keep must be in 1..={p}, got {}", config.n_keep)));
    }
    if config.step == 0 {
        return Err(FeatselError::InvalidArgument("step must be >= 1".into()));
    }
    let z = standardize(x).matrix;
    let mut surviving: Vec<usize> = (0..p).collect();
    let mut scores = vec![0.0; p];
    let mut round = 0usize;
    while surviving.len() > config.n_keep {
        round += 1;
        let xs: Vec<SparseVector> = (0..z.n_rows())
            .map(|r| {
                let row = z.row(r);
                SparseVector::from_dense(&surviving.iter().map(|&j| row[j]).collect::<Vec<_>>())
            })
            .collect();
        let (model, _) = fit_linear(&xs, y, surviving.len(), &config.train, None)?;
        let weights = model.weights();
        let mut order: Vec<usize> = (0..surviving.len()).collect();
        order.sort_by(|&a, &b| weights[a].abs().total_cmp(&weights[b].abs()).then(b.cmp(&a)));
        let n_drop = config.step.min(surviving.len() - config.n_keep);
        let mut drop: Vec<usize> = order[..n_drop].to_vec();
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for pos in drop {
            scores[surviving.remove(pos)] = round as f64;
        }
    }
    for &j in &surviving {
        scores[j] = (round + 1) as f64;
    }
    Ok(SelectionResult {
        method: Method::Rfe,
        feature_names: x.column_names().to_vec(),
        scores,
        kept: surviving,
        params: BTreeMap::from([
            ("n_keep".to_string(), config.n_keep.to_string()),
            ("step".to_string(), config.step.to_string()),
            ("refits".to_string(), round.to_string()),
            ("learning_rate".to_string(), config.train.learning_rate.to_string()),
            ("epochs".to_string(), config.train.epochs.to_string()),
            ("seed".to_string(), config.train.seed.to_string()),
        ]),
        flags: Vec::new(),
    })
}
