use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{standardize, top_n, FeatselError, Method, NumericMatrix, SelectionResult};

const OFF_DIAGONAL_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Descending.
    pub values: Vec<f64>,
    /// `vectors[i]` belongs to `values[i]`; unit length, largest-magnitude
    /// entry positive.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations on a symmetric row-major `n × n` matrix until
/// the off-diagonal Frobenius norm drops below 1e-10.
pub fn jacobi_eigen(matrix: &[f64], n: usize) -> Result<EigenDecomposition, FeatselError> {
    if matrix.len() != n * n {
        return Err(FeatselError::Shape(format!("{} entries for {n} x {n}", matrix.len())));
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut sweeps = 0;
    while off_diagonal_norm(&a, n) >= OFF_DIAGONAL_TOLERANCE && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = (0..n).map(|k| v[k * n + i]).collect();
            let pivot = (0..n)
                .max_by(|&x, &y| col[x].abs().total_cmp(&col[y].abs()).then(y.cmp(&x)))
                .unwrap_or(0);
            if col.get(pivot).is_some_and(|&x| x < 0.0) {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    Ok(EigenDecomposition { values, vectors, sweeps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaConfig {
    pub k: usize,
    /// Features to keep by loading rank; defaults to `k`.
    pub n_keep: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `k × n_cols`, variance-descending.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Indices of kept components whose variance is ~0.
    pub degenerate: Vec<usize>,
}

impl PcaFit {
    fn standardized_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect()
    }

    /// Projects raw rows onto the components.
    pub fn transform(&self, x: &NumericMatrix) -> Vec<Vec<f64>> {
        (0..x.n_rows())
            .map(|r| {
                let z = self.standardized_row(x.row(r));
                self.components
                    .iter()
                    .map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }

    /// Maps component scores back to raw feature space.
    pub fn reconstruct(&self, scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
        scores
            .iter()
            .map(|s| {
                (0..self.means.len())
                    .map(|j| {
                        let z: f64 = self.components.iter().zip(s).map(|(c, t)| c[j] * t).sum();
                        z * self.stds[j] + self.means[j]
                    })
                    .collect()
            })
            .collect()
    }
}

/// Principal components of the standardized data (sample covariance).
/// Features are scored by their largest |loading| over the kept
/// components.
pub fn pca(x: &NumericMatrix, config: &PcaConfig) -> Result<(SelectionResult, PcaFit), FeatselError> {
    x.require_rows()?;
    let p = x.n_cols();
    if config.k == 0 || config.k > p {
        return Err(FeatselError::InvalidArgument(format!("k must be in 1..={p}, got {}", config.k)));
    }
    let n_keep = config.n_keep.unwrap_or(config.k);
    if n_keep > p {
        return Err(FeatselError::InvalidArgument(format!("cannot keep {n_keep} of {p} features")));
    }
    let z = standardize(x);
    let cols = z.matrix.columns();
    let denom = (x.n_rows() - 1) as f64;
    let mut cov = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let c = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / denom;
            cov[i * p + j] = c;
            cov[j * p + i] = c;
        }
    }
    let eig = jacobi_eigen(&cov, p)?;
    let trace: f64 = eig.values.iter().sum();
    let floor = 1e-10 * trace.max(1.0);
    let components: Vec<Vec<f64>> = eig.vectors[..config.k].to_vec();
    let explained_variance: Vec<f64> = eig.values[..config.k].iter().map(|v| v.max(0.0)).collect();
    let degenerate: Vec<usize> = (0..config.k).filter(|&i| explained_variance[i] <= floor).collect();

    let scores: Vec<f64> = (0..p)
        .map(|j| components.iter().map(|c| c[j].abs()).fold(0.0, f64::max))
        .collect();
    let mut flags = Vec::new();
    if !degenerate.is_empty() {
        flags.push(format!("components {degenerate:?} have ~0 variance (k exceeds rank)"));
    }
    if !z.constant.is_empty() {
        flags.push(format!("constant columns {:?}", z.constant));
    }
    let result = SelectionResult {
        method: Method::Pca,
        feature_names: x.column_names().to_vec(),
        kept: top_n(&scores, n_keep),
        scores,
        params: BTreeMap::from([
            ("k".to_string(), config.k.to_string()),
            ("n_keep".to_string(), n_keep.to_string()),
            ("jacobi_sweeps".to_string(), eig.sweeps.to_string()),
        ]),
        flags,
    };
    Ok((
        result,
        PcaFit {
            means: z.means,
            stds: z.stds,
            components,
            explained_variance,
            degenerate,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_needs_no_sweeps() {
        let e = jacobi_eigen(&[2.0, 0.0, 0.0, 5.0], 2).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0]);
        assert_eq!(e.vectors[0], vec![0.0, 1.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn points_on_diagonal_line() {
        let t = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.5];
        let x = NumericMatrix::from_columns(vec!["x".into(), "y".into()], &[t.to_vec(), t.to_vec()]).unwrap();
        let (_, fit) = pca(&x, &PcaConfig { k: 2, n_keep: None }).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((fit.components[0][0] - h).abs() < 1e-10);
        assert!((fit.components[0][1] - h).abs() < 1e-10);
        assert!(fit.explained_variance[1].abs() < 1e-10);
        assert_eq!(fit.degenerate, vec![1]);
    }

    #[test]
    fn rejects_bad_k() {
        let x = NumericMatrix::from_columns(vec!["a".into()], &[vec![1.0, 2.0]]).unwrap();
        assert!(pca(&x, &PcaConfig { k: 0, n_keep: None }).is_err());
        assert!(pca(&x, &PcaConfig { k: 2, n_keep: None }).is_err());
    }
}
