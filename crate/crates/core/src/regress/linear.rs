//! Ordinary least squares and lasso on centered data.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter added to the normal equations.
pub const RIDGE_JITTER: f64 = 1e-10;
pub const LASSO_TOLERANCE: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.intercept + r.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Means, scaled Gram matrix `XcᵀXc / n` and `Xcᵀyc / n` of centered data.
struct Moments {
    x_mean: Vec<f64>,
    y_mean: f64,
    gram: Vec<Vec<f64>>,
    xty: Vec<f64>,
}

fn moments(x: ArrayView2<'_, f64>, y: &[f64]) -> Moments {
    let (n, k) = x.dim();
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..k).map(|j| x.column(j).sum() / nf).collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut gram = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    let mut centered = vec![0.0; k];
    for (row, &yi) in x.rows().into_iter().zip(y) {
        for j in 0..k {
            centered[j] = row[j] - x_mean[j];
        }
        let yc = yi - y_mean;
        for a in 0..k {
            xty[a] += centered[a] * yc;
            for b in a..k {
                gram[a][b] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..k {
        xty[a] /= nf;
        for b in a..k {
            gram[a][b] /= nf;
            gram[b][a] = gram[a][b];
        }
    }
    Moments {
        x_mean,
        y_mean,
        gram,
        xty,
    }
}

fn with_intercept(m: &Moments, coefficients: Vec<f64>) -> LinearModel {
    let intercept = m.y_mean
        - coefficients
            .iter()
            .zip(&m.x_mean)
            .map(|(b, mu)| b * mu)
            .sum::<f64>();
    LinearModel {
        coefficients,
        intercept,
    }
}

/// Least squares through the normal equations (Cholesky with a tiny ridge).
pub fn fit_ols(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<LinearModel> {
    if x.nrows() == 0 {
        return Err(Error::invalid("no training rows"));
    }
    let m = moments(x, y);
    let k = m.xty.len();
    let gram = DMatrix::from_fn(k, k, |a, b| m.gram[a][b] + if a == b { RIDGE_JITTER } else { 0.0 });
    let rhs = DVector::from_vec(m.xty.clone());
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
    let beta = chol.solve(&rhs);
    Ok(with_intercept(&m, beta.iter().copied().collect()))
}

/// Lasso, `(1/2n)‖y − Xβ − b‖² + λ‖β‖₁`, by cyclic coordinate descent.
pub fn fit_lasso(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    if x.nrows() == 0 {
        return Err(Error::invalid("no training rows"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lasso penalty must be nonnegative"));
    }
    let m = moments(x, y);
    let k = m.xty.len();
    let mut beta = vec![0.0; k];
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..k {
            let gjj = m.gram[j][j];
            if gjj <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let partial: f64 = m.xty[j]
                - (0..k)
                    .filter(|&l| l != j)
                    .map(|l| m.gram[j][l] * beta[l])
                    .sum::<f64>();
            let updated = soft_threshold(partial, lambda) / gjj;
            max_change = max_change.max((updated - beta[j]).abs());
            beta[j] = updated;
        }
        if max_change < LASSO_TOLERANCE {
            return Ok(with_intercept(&m, beta));
        }
    }
    log::warn!("lasso did not converge to {LASSO_TOLERANCE}");
    Ok(with_intercept(&m, beta))
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}
