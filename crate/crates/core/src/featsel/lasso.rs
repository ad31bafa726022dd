use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{standardize, FeatselError, Method, NumericMatrix, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    /// Full coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.len()).filter(|&j| self.coefficients[j] != 0.0).collect()
    }
}

/// `sign(z)·max(|z| − g, 0)`.
pub fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Smallest λ at which every coefficient is zero: `max_j |x_jᵀy| / n`.
pub fn lambda_max(x: &NumericMatrix, y: &[f64]) -> f64 {
    let n = x.n_rows().max(1) as f64;
    (0..x.n_cols())
        .map(|j| (0..x.n_rows()).map(|r| x.get(r, j) * y[r]).sum::<f64>().abs() / n)
        .fold(0.0, f64::max)
}

/// `count` values from `lmax` down to `lmax·min_ratio`, evenly spaced in
/// log scale.
pub fn lambda_grid(lmax: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lmax],
        _ => (0..count)
            .map(|i| lmax * min_ratio.powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

fn check_inputs(x: &NumericMatrix, y: &[f64], config: &LassoConfig) -> Result<(), FeatselError> {
    x.require_rows()?;
    if y.len() != x.n_rows() {
        return Err(FeatselError::Shape(format!("{} targets for {} rows", y.len(), x.n_rows())));
    }
    if !(config.lambda >= 0.0 && config.lambda.is_finite()) {
        return Err(FeatselError::InvalidArgument(format!("lambda must be >= 0, got {}", config.lambda)));
    }
    if config.tol.is_nan() || config.tol <= 0.0 || config.max_iter == 0 {
        return Err(FeatselError::InvalidArgument("tol must be > 0 and max_iter >= 1".into()));
    }
    Ok(())
}

fn descend(columns: &[Vec<f64>], y: &[f64], config: &LassoConfig, start: Vec<f64>) -> LassoFit {
    let n = y.len() as f64;
    let norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
    let mut beta = start;
    let mut residual: Vec<f64> = y.to_vec();
    for (c, &b) in columns.iter().zip(&beta) {
        if b != 0.0 {
            for (r, v) in residual.iter_mut().zip(c) {
                *r -= v * b;
            }
        }
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for (j, c) in columns.iter().enumerate() {
            if norms[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let old = beta[j];
            let rho = c.iter().zip(&residual).map(|(v, r)| v * r).sum::<f64>() / n + norms[j] * old;
            let new = soft_threshold(rho, config.lambda) / norms[j];
            if new != old {
                let delta = new - old;
                for (r, v) in residual.iter_mut().zip(c) {
                    *r -= v * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    LassoFit {
        lambda: config.lambda,
        coefficients: beta,
        iterations,
        converged,
    }
}

/// Cyclic coordinate descent on `(1/2n)‖y − Xβ‖² + λ‖β‖₁` with `x` and
/// `y` taken as given (callers standardize and center).
pub fn lasso_fit(x: &NumericMatrix, y: &[f64], config: &LassoConfig) -> Result<LassoFit, FeatselError> {
    check_inputs(x, y, config)?;
    Ok(descend(&x.columns(), y, config, vec![0.0; x.n_cols()]))
}

/// Fits along `lambdas` in the given order, warm-starting each fit from
/// the previous one.
pub fn lasso_path(
    x: &NumericMatrix,
    y: &[f64],
    lambdas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<LassoFit>, FeatselError> {
    let columns = x.columns();
    let mut start = vec![0.0; x.n_cols()];
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let config = LassoConfig { lambda, tol, max_iter };
        check_inputs(x, y, &config)?;
        let fit = descend(&columns, y, &config, start);
        start = fit.coefficients.clone();
        fits.push(fit);
    }
    Ok(fits)
}

/// Standardizes `x`, centers `y`, fits, and keeps nonzero coefficients.
/// Scores are |β|.
pub fn lasso(x: &NumericMatrix, y: &[f64], config: &LassoConfig) -> Result<(SelectionResult, LassoFit), FeatselError> {
    let z = standardize(x);
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let fit = lasso_fit(&z.matrix, &centered, config)?;
    let mut flags = Vec::new();
    if !fit.converged {
        flags.push(format!("did not converge within {} iterations", config.max_iter));
    }
    if !z.constant.is_empty() {
        flags.push(format!("constant columns {:?} fixed at 0", z.constant));
    }
    let result = SelectionResult {
        method: Method::Lasso,
        feature_names: x.column_names().to_vec(),
        scores: fit.coefficients.iter().map(|b| b.abs()).collect(),
        kept: fit.support(),
        params: BTreeMap::from([
            ("lambda".to_string(), config.lambda.to_string()),
            ("tol".to_string(), config.tol.to_string()),
            ("max_iter".to_string(), config.max_iter.to_string()),
            ("iterations".to_string(), fit.iterations.to_string()),
        ]),
        flags,
    };
    Ok((result, fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_closed_form() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let x = NumericMatrix::from_columns(
            vec!["a".into(), "b".into()],
            &[vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0]],
        )
        .unwrap();
        let y = vec![2.0, -1.0, 0.5, -1.5];
        let lmax = lambda_max(&x, &y);
        let fit = lasso_fit(&x, &y, &LassoConfig::new(lmax)).unwrap();
        assert!(fit.support().is_empty());
        let fit = lasso_fit(&x, &y, &LassoConfig::new(lmax * 0.5)).unwrap();
        assert!(!fit.support().is_empty());
    }

    #[test]
    fn orthogonal_design_is_soft_thresholded_ols() {
        // Orthonormal columns (‖x‖²/n = 1): β = S(xᵀy/n, λ) exactly.
        let x = NumericMatrix::from_columns(
            vec!["a".into(), "b".into()],
            &[vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0]],
        )
        .unwrap();
        let y = vec![3.0, -1.0, 1.0, -3.0];
        let fit = lasso_fit(&x, &y, &LassoConfig::new(0.5)).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 1.5).abs() < 1e-12);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = lambda_grid(1.0, 3, 0.01);
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert!((g[2] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let x = NumericMatrix::from_columns(
            vec!["a".into(), "b".into()],
            &[vec![1.0, 2.0, 3.0, 4.0], vec![1.1, 2.0, 2.9, 4.2]],
        )
        .unwrap();
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let config = LassoConfig {
            lambda: 0.0,
            tol: 1e-15,
            max_iter: 1,
        };
        let fit = lasso_fit(&x, &y, &config).unwrap();
        assert!(!fit.converged);
    }
}
