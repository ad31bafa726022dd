use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{top_n, FeatselError, Method, NumericMatrix, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    /// Top-n features to keep; `None` keeps features scoring above the
    /// mean importance.
    pub n_keep: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            seed: 0,
            n_keep: None,
        }
    }
}

fn gini(positives: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = positives as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [u8],
    max_depth: usize,
    max_features: usize,
    n_total: f64,
    importance: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<Split> {
        let n = rows.len();
        let pos_total = rows.iter().filter(|&&r| self.y[r] == 1).count();
        let parent = gini(pos_total, n);
        let mut best: Option<Split> = None;
        let mut candidates = index::sample(rng, self.columns.len(), self.max_features).into_vec();
        candidates.sort_unstable();
        let mut sorted: Vec<(f64, u8)> = Vec::with_capacity(n);
        for f in candidates {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.columns[f][r], self.y[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                left_pos += usize::from(sorted[i].1);
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let left = i + 1;
                let right = n - left;
                let child = (left as f64 * gini(left_pos, left) + right as f64 * gini(pos_total - left_pos, right))
                    / n as f64;
                let decrease = parent - child;
                if decrease > best.as_ref().map_or(1e-15, |b| b.decrease) {
                    best = Some(Split {
                        feature: f,
                        threshold: 0.5 * (sorted[i].0 + sorted[i + 1].0),
                        decrease,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) {
        if depth >= self.max_depth || rows.len() < 2 {
            return;
        }
        let Some(split) = self.best_split(&rows, rng) else {
            return;
        };
        self.importance[split.feature] += rows.len() as f64 / self.n_total * split.decrease;
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.columns[split.feature][r] <= split.threshold);
        self.grow(left, depth + 1, rng);
        self.grow(right, depth + 1, rng);
    }
}

/// Mean decrease in Gini impurity over bagged CART trees, each split
/// choosing among `round(√p)` random features. Per-tree importances are
/// normalized, averaged, and normalized again to sum to 1.
pub fn random_forest_importance(
    x: &NumericMatrix,
    y: &[u8],
    config: &ForestConfig,
) -> Result<SelectionResult, FeatselError> {
    x.require_rows()?;
    let p = x.n_cols();
    let n = x.n_rows();
    if y.len() != n {
        return Err(FeatselError::Shape(format!("{} targets for {n} rows", y.len())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(FeatselError::InvalidArgument("targets must be 0 or 1".into()));
    }
    if config.n_trees == 0 || config.max_depth == 0 {
        return Err(FeatselError::InvalidArgument("n_trees and max_depth must be >= 1".into()));
    }
    let max_features = ((p as f64).sqrt().round() as usize).clamp(1, p.max(1));
    let mut params = BTreeMap::from([
        ("n_trees".to_string(), config.n_trees.to_string()),
        ("max_depth".to_string(), config.max_depth.to_string()),
        ("max_features".to_string(), max_features.to_string()),
        ("seed".to_string(), config.seed.to_string()),
    ]);
    let mut flags = Vec::new();
    let mut scores = vec![0.0; p];

    if y.iter().all(|&v| v == y[0]) {
        flags.push("single-class target; all importances are 0".to_string());
    } else {
        let columns = x.columns();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.n_trees {
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut builder = TreeBuilder {
                columns: &columns,
                y,
                max_depth: config.max_depth,
                max_features,
                n_total: n as f64,
                importance: vec![0.0; p],
            };
            builder.grow(rows, 0, &mut rng);
            let total: f64 = builder.importance.iter().sum();
            if total > 0.0 {
                for (s, v) in scores.iter_mut().zip(&builder.importance) {
                    *s += v / total;
                }
            }
        }
        let total: f64 = scores.iter().sum();
        if total > 0.0 {
            scores.iter_mut().for_each(|s| *s /= total);
        } else {
            flags.push("no tree found an impurity-reducing split".to_string());
        }
    }

    let kept = match config.n_keep {
        Some(k) => {
            params.insert("n_keep".to_string(), k.to_string());
            top_n(&scores, k.min(p))
        }
        None => {
            let mean = 1.0 / p as f64;
            (0..p).filter(|&j| scores[j] > mean).collect()
        }
    };
    Ok(SelectionResult {
        method: Method::RandomForest,
        feature_names: x.column_names().to_vec(),
        scores,
        kept,
        params,
        flags,
    })
}
