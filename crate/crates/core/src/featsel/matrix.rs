use std::collections::{BTreeMap, BTreeSet};

use super::{FeatselError, Method, SelectionResult};
use crate::datapipe::RawTable;
use crate::registry::DatasetDescriptor;

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.9;

/// Dense row-major matrix of finite values with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericMatrix {
    column_names: Vec<String>,
    n_rows: usize,
    values: Vec<f64>,
}

impl NumericMatrix {
    pub fn new(column_names: Vec<String>, n_rows: usize, values: Vec<f64>) -> Result<Self, FeatselError> {
        let n_cols = column_names.len();
        if values.len() != n_rows * n_cols {
            return Err(FeatselError::Shape(format!(
                "{} values do not fill {n_rows} x {n_cols}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatselError::NonFinite {
                row: pos / n_cols,
                column: pos % n_cols,
            });
        }
        Ok(Self {
            column_names,
            n_rows,
            values,
        })
    }

    pub fn from_rows(column_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, FeatselError> {
        let n_cols = column_names.len();
        if let Some(i) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(FeatselError::Shape(format!(
                "row {i} has {} values, expected {n_cols}",
                rows[i].len()
            )));
        }
        Self::new(column_names, rows.len(), rows.concat())
    }

    /// Builds from columns given as equal-length vectors.
    pub fn from_columns(column_names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self, FeatselError> {
        if column_names.len() != columns.len() {
            return Err(FeatselError::Shape("one name per column required".into()));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(FeatselError::Shape("columns differ in length".into()));
        }
        let values = (0..n_rows).flat_map(|r| columns.iter().map(move |c| c[r])).collect();
        Self::new(column_names, n_rows, values)
    }

    /// Feature columns of a table. Columns whose every cell parses as a
    /// finite number are used as-is; any other column is ordinal-encoded
    /// by sorted distinct value. Returns the names of encoded columns too.
    pub fn from_table(table: &RawTable, descriptor: &DatasetDescriptor) -> Result<(Self, Vec<String>), FeatselError> {
        let features = table.feature_indices(descriptor);
        let mut encoded = Vec::new();
        let mut columns = Vec::with_capacity(features.len());
        for &c in &features {
            let parsed: Option<Vec<f64>> = table
                .rows
                .iter()
                .map(|r| r[c].trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            let column = match parsed {
                Some(values) => values,
                None => {
                    let levels: BTreeSet<&str> = table.rows.iter().map(|r| r[c].as_str()).collect();
                    let code: BTreeMap<&str, f64> =
                        levels.into_iter().enumerate().map(|(i, v)| (v, i as f64)).collect();
                    encoded.push(table.column_names[c].clone());
                    table.rows.iter().map(|r| code[r[c].as_str()]).collect()
                }
            };
            columns.push(column);
        }
        let names = features.iter().map(|&c| table.column_names[c].clone()).collect();
        let mut m = Self::from_columns(names, &columns)?;
        m.n_rows = table.rows.len();
        Ok((m, encoded))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.n_cols();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols()).map(|c| self.column(c)).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let names = cols.iter().map(|&c| self.column_names[c].clone()).collect();
        let values = (0..self.n_rows)
            .flat_map(|r| cols.iter().map(move |&c| self.get(r, c)))
            .collect();
        Self {
            column_names: names,
            n_rows: self.n_rows,
            values,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Self {
            column_names: self.column_names.clone(),
            n_rows: rows.len(),
            values,
        }
    }

    pub(crate) fn require_rows(&self) -> Result<(), FeatselError> {
        if self.n_rows < 2 {
            return Err(FeatselError::TooFewRows(self.n_rows));
        }
        Ok(())
    }
}

/// 1 for rows whose primary label differs from the benign value.
pub fn binary_target(table: &RawTable, descriptor: &DatasetDescriptor) -> Result<Vec<u8>, FeatselError> {
    let label = descriptor.primary_label();
    let column = table
        .column(label)
        .ok_or_else(|| FeatselError::InvalidArgument(format!("table has no label column `{label}`")))?;
    Ok(column.map(|v| u8::from(v != descriptor.benign_label_value)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: NumericMatrix,
    pub means: Vec<f64>,
    /// Population standard deviations; 0 for constant columns.
    pub stds: Vec<f64>,
    pub constant: Vec<usize>,
}

/// Zero mean, unit population variance per column. Constant columns map
/// to all zeros and are listed in `constant`.
pub fn standardize(m: &NumericMatrix) -> Standardized {
    let n = m.n_rows.max(1) as f64;
    let p = m.n_cols();
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    let mut constant = Vec::new();
    for c in 0..p {
        let col = m.column(c);
        let mean = col.iter().sum::<f64>() / n;
        let is_constant = col.iter().all(|&v| v == col[0]);
        means[c] = mean;
        if is_constant {
            constant.push(c);
        } else {
            stds[c] = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        }
    }
    let values = (0..m.n_rows)
        .flat_map(|r| {
            let (means, stds) = (&means, &stds);
            (0..p).map(move |c| if stds[c] == 0.0 { 0.0 } else { (m.get(r, c) - means[c]) / stds[c] })
        })
        .collect();
    Standardized {
        matrix: NumericMatrix {
            column_names: m.column_names.clone(),
            n_rows: m.n_rows,
            values,
        },
        means,
        stds,
        constant,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub n: usize,
    /// Row-major `n × n`.
    pub values: Vec<f64>,
    /// Pairs `(i, j)`, `i < j`, where a column had zero variance; their
    /// correlation is reported as 0.
    pub zero_variance_pairs: Vec<(usize, usize)>,
}

impl Correlation {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Pearson correlation of every column pair. The diagonal is exactly 1,
/// including for constant columns.
pub fn correlation_matrix(m: &NumericMatrix) -> Correlation {
    let z = standardize(m);
    let p = m.n_cols();
    let n = m.n_rows.max(1) as f64;
    let cols = z.matrix.columns();
    let mut values = vec![0.0; p * p];
    let mut zero_variance_pairs = Vec::new();
    for i in 0..p {
        values[i * p + i] = 1.0;
        for j in i + 1..p {
            let r = if z.stds[i] == 0.0 || z.stds[j] == 0.0 {
                zero_variance_pairs.push((i, j));
                0.0
            } else {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                (dot / n).clamp(-1.0, 1.0)
            };
            values[i * p + j] = r;
            values[j * p + i] = r;
        }
    }
    Correlation {
        n: p,
        values,
        zero_variance_pairs,
    }
}

/// Drops, for every pair `i < j` with `|r| > threshold`, feature `j`.
/// Scores are each feature's largest |r| against any other feature.
pub fn correlation_filter(m: &NumericMatrix, threshold: f64) -> Result<SelectionResult, FeatselError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(FeatselError::InvalidArgument(format!(
            "correlation threshold must be in [0, 1], got {threshold}"
        )));
    }
    m.require_rows()?;
    let corr = correlation_matrix(m);
    let p = m.n_cols();
    let mut dropped = vec![false; p];
    let mut scores = vec![0.0f64; p];
    for i in 0..p {
        for j in i + 1..p {
            let r = corr.get(i, j).abs();
            scores[i] = scores[i].max(r);
            scores[j] = scores[j].max(r);
            if r > threshold {
                dropped[j] = true;
            }
        }
    }
    let mut flags = Vec::new();
    if !corr.zero_variance_pairs.is_empty() {
        flags.push(format!(
            "{} pair(s) involve a zero-variance column; correlation taken as 0",
            corr.zero_variance_pairs.len()
        ));
    }
    Ok(SelectionResult {
        method: Method::Correlation,
        feature_names: m.column_names.clone(),
        scores,
        kept: (0..p).filter(|&j| !dropped[j]).collect(),
        params: BTreeMap::from([("threshold".to_string(), threshold.to_string())]),
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::synthetic_descriptor;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(matches!(
            NumericMatrix::new(names(2), 2, vec![1.0, 2.0, f64::NAN, 0.0]),
            Err(FeatselError::NonFinite { row: 1, column: 0 })
        ));
        assert!(NumericMatrix::from_rows(names(2), &[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn z_scores_of_one_two_three() {
        let m = NumericMatrix::from_columns(names(1), &[vec![1.0, 2.0, 3.0]]).unwrap();
        let z = standardize(&m);
        let expect = 1.5f64.sqrt();
        assert!((z.matrix.get(0, 0) + expect).abs() < 1e-12);
        assert_eq!(z.matrix.get(1, 0), 0.0);
        assert!((z.matrix.get(2, 0) - expect).abs() < 1e-12);
    }

    #[test]
    fn constant_column_flagged() {
        let m = NumericMatrix::from_columns(names(2), &[vec![4.0; 3], vec![1.0, 0.0, 1.0]]).unwrap();
        let z = standardize(&m);
        assert_eq!(z.constant, vec![0]);
        assert!(z.matrix.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_correlation_drops_later() {
        let x = vec![1.0, 3.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let m = NumericMatrix::from_columns(names(2), &[x, y]).unwrap();
        let c = correlation_matrix(&m);
        assert_eq!(c.get(0, 1), 1.0);
        let r = correlation_filter(&m, 0.9).unwrap();
        assert_eq!(r.kept, vec![0]);
    }

    #[test]
    fn table_columns_ordinal_encoded() {
        let table = RawTable {
            column_names: vec!["proto".into(), "bytes".into(), "label".into()],
            rows: vec![
                vec!["udp".into(), "10".into(), "benign".into()],
                vec!["tcp".into(), "2.5".into(), "attack_0".into()],
                vec!["udp".into(), "7".into(), "benign".into()],
            ],
        };
        let desc = synthetic_descriptor(2);
        let (m, encoded) = NumericMatrix::from_table(&table, &desc).unwrap();
        assert_eq!(encoded, vec!["proto".to_string()]);
        assert_eq!(m.column(0), vec![1.0, 0.0, 1.0]);
        assert_eq!(m.column(1), vec![10.0, 2.5, 7.0]);
        assert_eq!(binary_target(&table, &desc).unwrap(), vec![0, 1, 0]);
    }
}
