//! Classical linear-regression adjustments for AR(1) errors: ordinary least
//! squares, Cochrane-Orcutt, and Prais-Winsten.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::stats::residual_autocorrelation;

/// Converged fit of `y = X beta + e`, `e_t = rho e_{t-1} + eps_t`.
///
/// The design matrix is used as given; include an intercept column yourself
/// if you want one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearFit {
    pub beta: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

const RHO_TOL: f64 = 1e-6;

fn to_nalgebra(x: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows(), x.cols(), x.data())
}

/// OLS as an SVD least-squares solve, with a rank check.
pub fn ols_fit(x: &Tensor, y: &[f64]) -> Result<Vec<f64>> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if x.rows() < x.cols() {
        return Err(Error::TooFewSamples {
            got: x.rows(),
            needed: x.cols(),
        });
    }
    let a = to_nalgebra(x);
    let tol = 1e-10 * a.amax().max(1.0);
    let svd = a.svd(true, true);
    let rank = svd.rank(tol);
    if rank < x.cols() {
        return Err(Error::RankDeficient {
            rank,
            cols: x.cols(),
        });
    }
    let sol = svd
        .solve(&DVector::from_column_slice(y), tol)
        .map_err(|m| Error::UndefinedStatistic(m.into()))?;
    Ok(sol.iter().copied().collect())
}

fn residuals_of(x: &Tensor, y: &[f64], beta: &[f64]) -> Vec<f64> {
    (0..x.rows())
        .map(|r| {
            let fitted: f64 = x
                .row_slice(r)
                .iter()
                .zip(beta)
                .map(|(xv, b)| xv * b)
                .sum();
            y[r] - fitted
        })
        .collect()
}

/// Quasi-differences every column: row t becomes `v_t - rho v_{t-1}`,
/// dropping the first observation.
fn quasi_difference(x: &Tensor, y: &[f64], rho: f64) -> (Tensor, Vec<f64>) {
    let t = x.rows();
    let n = x.cols();
    let mut xd = Vec::with_capacity((t - 1) * n);
    let mut yd = Vec::with_capacity(t - 1);
    for r in 1..t {
        for c in 0..n {
            xd.push(x.get(r, c) - rho * x.get(r - 1, c));
        }
        yd.push(y[r] - rho * y[r - 1]);
    }
    (Tensor::new(t - 1, n, xd), yd)
}

/// Prais-Winsten transform: keeps the first row, scaled by `sqrt(1 - rho^2)`.
fn pw_transform(x: &Tensor, y: &[f64], rho: f64) -> (Tensor, Vec<f64>) {
    let t = x.rows();
    let n = x.cols();
    let s = (1.0 - rho * rho).sqrt();
    let mut xd = Vec::with_capacity(t * n);
    let mut yd = Vec::with_capacity(t);
    for c in 0..n {
        xd.push(s * x.get(0, c));
    }
    yd.push(s * y[0]);
    for r in 1..t {
        for c in 0..n {
            xd.push(x.get(r, c) - rho * x.get(r - 1, c));
        }
        yd.push(y[r] - rho * y[r - 1]);
    }
    (Tensor::new(t, n, xd), yd)
}

fn iterate_feasible_gls(
    x: &Tensor,
    y: &[f64],
    max_iters: usize,
    transform: impl Fn(&Tensor, &[f64], f64) -> (Tensor, Vec<f64>),
) -> Result<LinearFit> {
    if x.rows() < 3 {
        return Err(Error::TooFewSamples {
            got: x.rows(),
            needed: 3,
        });
    }
    let mut rho = 0.0;
    let mut beta = ols_fit(x, y)?;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let e = residuals_of(x, y, &beta);
        let new_rho = residual_autocorrelation(&e)?.clamp(-0.999, 0.999);
        let (xt, yt) = transform(x, y, new_rho);
        beta = ols_fit(&xt, &yt)?;
        let converged = (new_rho - rho).abs() < RHO_TOL;
        rho = new_rho;
        if converged {
            break;
        }
    }
    let residuals = residuals_of(x, y, &beta);
    Ok(LinearFit {
        beta,
        rho,
        iterations,
        residuals,
    })
}

/// Cochrane-Orcutt estimation. `max_iters = 1` is the classic single-pass
/// procedure: OLS, estimate rho from the residuals, quasi-difference, refit.
pub fn cochrane_orcutt(x: &Tensor, y: &[f64], max_iters: usize) -> Result<LinearFit> {
    iterate_feasible_gls(x, y, max_iters.max(1), quasi_difference)
}

/// Prais-Winsten estimation: like Cochrane-Orcutt but the first observation
/// is retained under the stationary scaling instead of being dropped.
pub fn prais_winsten(x: &Tensor, y: &[f64], max_iters: usize) -> Result<LinearFit> {
    iterate_feasible_gls(x, y, max_iters.max(1), pw_transform)
}
