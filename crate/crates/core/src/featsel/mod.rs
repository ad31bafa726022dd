//! Feature analysis over numeric matrices: correlation filtering, lasso,
//! PCA, recursive feature elimination and random-forest importance.
//!
//! Results are reports. Nothing here rewrites a dataset; callers decide
//! whether to apply a kept set.

mod forest;
mod lasso;
mod matrix;
mod pca;
mod rfe;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{random_forest_importance, ForestConfig};
pub use lasso::{lambda_grid, lambda_max, lasso, lasso_fit, lasso_path, soft_threshold, LassoConfig, LassoFit};
pub use matrix::{
    binary_target, correlation_filter, correlation_matrix, standardize, Correlation, NumericMatrix, Standardized,
    DEFAULT_CORRELATION_THRESHOLD,
};
pub use pca::{jacobi_eigen, pca, EigenDecomposition, PcaConfig, PcaFit};
pub use rfe::{rfe, RfeConfig};

use crate::learner::LearnerError;

#[derive(Debug, Error)]
pub enum FeatselError {
    #[error("matrix shape: {0}")]
    Shape(String),
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("at least 2 rows are required, got {0}")]
    TooFewRows(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lasso,
    Rfe,
    Pca,
    RandomForest,
    Correlation,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lasso, Method::Rfe, Method::Pca, Method::RandomForest, Method::Correlation];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::Rfe => "rfe",
            Method::Pca => "pca",
            Method::RandomForest => "random_forest",
            Method::Correlation => "correlation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = FeatselError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == normalized || (normalized == "forest" && *m == Method::RandomForest))
            .ok_or_else(|| FeatselError::InvalidArgument(format!("unknown selection method `{s}`")))
    }
}

/// One method's verdict. `scores` has one entry per input column; what a
/// score means depends on the method (|coefficient|, elimination round,
/// max |loading|, impurity decrease, max |r|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    pub feature_names: Vec<String>,
    pub scores: Vec<f64>,
    /// Ascending column indices.
    pub kept: Vec<usize>,
    pub params: BTreeMap<String, String>,
    /// Non-fatal conditions met during the fit.
    pub flags: Vec<String>,
}

impl SelectionResult {
    pub fn kept_names(&self) -> Vec<&str> {
        self.kept.iter().map(|&i| self.feature_names[i].as_str()).collect()
    }

    pub fn is_kept(&self, column: usize) -> bool {
        self.kept.binary_search(&column).is_ok()
    }

    /// CSV with columns `feature,method,score,kept`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "feature,method,score,kept")?;
        for (i, (name, score)) in self.feature_names.iter().zip(&self.scores).enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                crate::costmodel::csv_quote(name),
                self.method,
                score,
                self.is_kept(i)
            )?;
        }
        w.flush()
    }
}

/// Indices of the `n` highest scores (ties to the lower index), ascending.
pub(crate) fn top_n(scores: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(n).collect();
    kept.sort_unstable();
    kept
}
