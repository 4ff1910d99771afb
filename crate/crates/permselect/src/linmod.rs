//! Penalized linear models on standardized predictors.
//!
//! Conventions, fixed so penalty values are interpretable across runs:
//!
//! - Lasso minimizes `(1/(2n)) ||y - X b||^2 + lambda ||b||_1`, solved by
//!   cyclic coordinate descent with covariance updates.
//! - Ridge minimizes `||y - X b||^2 + lambda ||b||^2`, solved through the
//!   normal equations `(X^T X + lambda I) b = X^T y` with a Cholesky
//!   factorization.
//!
//! Predictors are standardized to mean 0, population std 1 on training rows
//! only; responses are centered per response, with the training mean as the
//! intercept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, Matrix};
use crate::multiplicity::{SelectionMethod, SelectionResult};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Column means and population standard deviations fitted on training data.
/// Zero-variance columns are flagged and mapped to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "standardizer needs at least 2 rows, got {n}"
            )));
        }
        let p = x.cols();
        let mut means = vec![0.0; p];
        for i in 0..n {
            for (m, &v) in means.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for m in means.iter_mut() {
            *m /= n as f64;
        }
        let mut vars = vec![0.0; p];
        for i in 0..n {
            for j in 0..p {
                let d = x.get(i, j) - means[j];
                vars[j] += d * d;
            }
        }
        let mut stds = vec![0.0; p];
        let mut zero_variance = vec![false; p];
        for j in 0..p {
            let sd = (vars[j] / n as f64).sqrt();
            if sd > 0.0 {
                stds[j] = sd;
            } else {
                stds[j] = 1.0;
                zero_variance[j] = true;
            }
        }
        Ok(Standardizer { means, stds, zero_variance })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::InvalidInput(format!(
                "standardizer fitted on {} columns, input has {}",
                self.means.len(),
                x.cols()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let z = if self.zero_variance[j] {
                    0.0
                } else {
                    (x.get(i, j) - self.means[j]) / self.stds[j]
                };
                out.set(i, j, z);
            }
        }
        Ok(out)
    }
}

/// `sign(z) * max(|z| - gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Solves `(X^T X + lambda I) b = X^T y` with no centering or intercept.
/// With `lambda = 0` the matrix must be full column rank.
pub fn ridge_solve(x: &Matrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if y.len() != x.rows() {
        return Err(Error::InvalidInput(format!(
            "{} responses for {} rows",
            y.len(),
            x.rows()
        )));
    }
    let mut a = x.gram();
    for j in 0..a.rows() {
        a.set(j, j, a.get(j, j) + lambda);
    }
    let b = x.tr_matvec(y);
    cholesky_solve(&a, &b)
}

/// Normal-equation residual `||(X^T X + lambda I) b - X^T y||_inf`, used by
/// the correctness checks.
pub fn ridge_normal_residual(x: &Matrix, y: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let g = x.gram();
    let xty = x.tr_matvec(y);
    let mut worst = 0.0_f64;
    for j in 0..g.rows() {
        let mut r = lambda * beta[j] - xty[j];
        for (k, &bk) in beta.iter().enumerate() {
            r += g.get(j, k) * bk;
        }
        worst = worst.max(r.abs());
    }
    worst
}

pub const LASSO_TOL: f64 = 1e-7;
pub const LASSO_MAX_ITER: usize = 100_000;

/// Stationarity stop, relative to the gradient scale `max_j |x_j^T y / n|`
/// of the problem: once the worst KKT violation is below one part in 10^6
/// of that scale, the iterate is optimal for practical purposes.
const LASSO_KKT_STOP_REL: f64 = 1e-6;

/// Sweeps between exact refreshes of the tracked gradient, which otherwise
/// accumulates floating-point drift over incremental updates.
const LASSO_REFRESH_SWEEPS: usize = 64;

/// Stagnation stop for degenerate designs. Nearly collinear columns make
/// the minimizer a flat set along which coordinate descent can shuffle
/// weight between near-duplicate columns for 10^5+ sweeps with the
/// objective already converged to 8+ digits; neither the coefficient-change
/// nor the KKT threshold fires there in reasonable time. When a full
/// refresh window improves the objective by less than this fraction of its
/// starting value, the fit has stopped improving in any way that affects
/// predictions and the iterate is accepted.
const LASSO_STAGNATION_REL: f64 = 1e-8;

/// Sweeps before the stagnation rule may fire; tight criteria get an
/// uncontested head start on well-conditioned problems.
const LASSO_STAGNATION_MIN_SWEEPS: usize = 512;

/// The lasso normal-equation data for one design: `G = X^T X / n` and
/// `b = X^T y / n`, shared across penalties so a path can be solved with
/// warm starts.
struct LassoProblem {
    g: Matrix,
    b: Vec<f64>,
    /// Objective at beta = 0, `(1/(2n)) ||y||^2`.
    obj_zero: f64,
    kkt_stop: f64,
}

impl LassoProblem {
    fn new(x: &Matrix, y: &[f64]) -> Self {
        let n = x.rows() as f64;
        let p = x.cols();
        let mut g = x.gram();
        for v in 0..p {
            for w in 0..p {
                g.set(v, w, g.get(v, w) / n);
            }
        }
        let mut b = x.tr_matvec(y);
        for v in b.iter_mut() {
            *v /= n;
        }
        let obj_zero = y.iter().map(|v| v * v).sum::<f64>() / (2.0 * n);
        let kkt_stop = LASSO_KKT_STOP_REL * b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        LassoProblem { g, b, obj_zero, kkt_stop }
    }

    /// Exact objective from a freshly recomputed `gbeta`.
    fn objective(&self, lambda: f64, beta: &[f64], gbeta: &[f64]) -> f64 {
        let mut f = self.obj_zero;
        for (j, &bj) in beta.iter().enumerate() {
            f += 0.5 * bj * gbeta[j] - self.b[j] * bj + lambda * bj.abs();
        }
        f
    }

    fn refresh_gbeta(&self, beta: &[f64], gbeta: &mut [f64]) {
        let p = self.b.len();
        for k in 0..p {
            let mut acc = 0.0;
            for (j, &bj) in beta.iter().enumerate() {
                if bj != 0.0 {
                    acc += self.g.get(k, j) * bj;
                }
            }
            gbeta[k] = acc;
        }
    }

    /// Worst KKT violation at the current iterate, from the tracked gradient.
    fn kkt(&self, lambda: f64, beta: &[f64], gbeta: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (j, &bj) in beta.iter().enumerate() {
            let c = self.b[j] - gbeta[j];
            let violation = if bj == 0.0 {
                (c.abs() - lambda).max(0.0)
            } else {
                (c - lambda * bj.signum()).abs()
            };
            worst = worst.max(violation);
        }
        worst
    }

    /// Cyclic coordinate descent from the given iterate. `gbeta` must equal
    /// `G beta` on entry and is maintained on exit, so consecutive calls
    /// along a descending penalty path reuse the previous solution.
    fn solve_warm(
        &self,
        lambda: f64,
        tol: f64,
        max_iter: usize,
        beta: &mut [f64],
        gbeta: &mut [f64],
    ) -> Result<()> {
        let p = self.b.len();
        let stagnation_floor = LASSO_STAGNATION_REL * self.obj_zero;
        let mut last_obj = f64::INFINITY;
        for sweep in 0..max_iter {
            if sweep % LASSO_REFRESH_SWEEPS == 0 && sweep > 0 {
                self.refresh_gbeta(beta, gbeta);
                let obj = self.objective(lambda, beta, gbeta);
                if sweep >= LASSO_STAGNATION_MIN_SWEEPS && last_obj - obj <= stagnation_floor {
                    return Ok(());
                }
                last_obj = obj;
            }
            let mut max_change = 0.0_f64;
            for j in 0..p {
                let gjj = self.g.get(j, j);
                if gjj <= 0.0 {
                    continue; // zero-variance column, coefficient stays 0
                }
                let old = beta[j];
                let rho = self.b[j] - gbeta[j] + gjj * old;
                let new = soft_threshold(rho, lambda) / gjj;
                let delta = new - old;
                if delta != 0.0 {
                    for k in 0..p {
                        gbeta[k] += self.g.get(k, j) * delta;
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change <= tol || self.kkt(lambda, beta, gbeta) <= self.kkt_stop {
                return Ok(());
            }
        }
        Err(Error::Convergence(format!(
            "lasso did not converge within {max_iter} sweeps (lambda = {lambda})"
        )))
    }
}

/// Lasso coefficients by cyclic coordinate descent with covariance updates.
///
/// `x` should be standardized and `y` centered. Converged when the largest
/// coefficient change in a sweep is at most `tol` (or the objective stops
/// improving at floating-point scale); exceeding `max_iter` sweeps is
/// reported as an error rather than returning a half-converged fit.
pub fn lasso_fit(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if y.len() != x.rows() {
        return Err(Error::InvalidInput(format!(
            "{} responses for {} rows",
            y.len(),
            x.rows()
        )));
    }
    let problem = LassoProblem::new(x, y);
    let mut beta = vec![0.0_f64; x.cols()];
    let mut gbeta = vec![0.0_f64; x.cols()];
    problem.solve_warm(lambda, tol, max_iter, &mut beta, &mut gbeta)?;
    Ok(beta)
}

/// Worst KKT violation of a Lasso solution: for active coefficients the
/// scaled correlation `x_j^T (y - X b) / n` must equal `lambda * sign(b_j)`,
/// for inactive ones it must not exceed `lambda` in magnitude.
pub fn lasso_kkt_residual(x: &Matrix, y: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let n = x.rows() as f64;
    let fitted = x.matvec(beta);
    let residual: Vec<f64> = y.iter().zip(&fitted).map(|(yv, f)| yv - f).collect();
    let corr = x.tr_matvec(&residual);
    let mut worst = 0.0_f64;
    for (j, &bj) in beta.iter().enumerate() {
        let c = corr[j] / n;
        let violation = if bj == 0.0 {
            (c.abs() - lambda).max(0.0)
        } else {
            (c - lambda * bj.signum()).abs()
        };
        worst = worst.max(violation);
    }
    worst
}

/// Smallest penalty that zeroes every coefficient: `max_j |x_j^T y| / n`.
pub fn lasso_lambda_max(x: &Matrix, y: &[f64]) -> f64 {
    let n = x.rows() as f64;
    x.tr_matvec(y).iter().fold(0.0_f64, |acc, c| acc.max(c.abs() / n))
}

/// Descending log-spaced grid from `lambda_max` down over `decades` decades.
pub fn lasso_lambda_grid(x: &Matrix, y: &[f64], size: usize, decades: f64) -> Vec<f64> {
    let top = lasso_lambda_max(x, y);
    if top <= 0.0 || size == 0 {
        return vec![0.0];
    }
    if size == 1 {
        return vec![top];
    }
    (0..size)
        .map(|i| top * 10f64.powf(-decades * i as f64 / (size - 1) as f64))
        .collect()
}

/// Mean absolute error over all entries of two equally shaped matrices.
pub fn mae(predictions: &Matrix, truth: &Matrix) -> Result<f64> {
    if predictions.rows() != truth.rows() || predictions.cols() != truth.cols() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {}x{} vs {}x{}",
            predictions.rows(),
            predictions.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    if predictions.rows() == 0 {
        return Err(Error::InvalidInput("empty prediction matrix".into()));
    }
    let total: f64 = predictions
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / predictions.data().len() as f64)
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Seeded fold assignment: shuffled indices dealt round-robin into k folds.
fn fold_assignment(n: usize, k_folds: usize, seed: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut fold = vec![0usize; n];
    for (pos, &i) in indices.iter().enumerate() {
        fold[i] = pos % k_folds;
    }
    fold
}

/// Splits one fold out and centers the predictor columns on the fold-train
/// means. The solvers fit no intercept, so leaving fold-train column means
/// nonzero would force the coefficients to absorb them; with nearly
/// collinear columns that absorption runs through near-null directions with
/// enormous weights and wrecks the held-out error estimate.
fn split_fold(
    x: &Matrix,
    y: &[f64],
    fold: &[usize],
    held_out: usize,
) -> (Matrix, Vec<f64>, Matrix, Vec<f64>) {
    let mut train_rows = Vec::new();
    let mut train_y = Vec::new();
    let mut val_rows = Vec::new();
    let mut val_y = Vec::new();
    for i in 0..x.rows() {
        if fold[i] == held_out {
            val_rows.push(x.row(i).to_vec());
            val_y.push(y[i]);
        } else {
            train_rows.push(x.row(i).to_vec());
            train_y.push(y[i]);
        }
    }
    let p = x.cols();
    let mut means = vec![0.0_f64; p];
    for row in &train_rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= train_rows.len() as f64;
    }
    for row in train_rows.iter_mut().chain(val_rows.iter_mut()) {
        for (v, m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    (
        Matrix::from_rows(&train_rows).unwrap(),
        train_y,
        Matrix::from_rows(&val_rows).unwrap(),
        val_y,
    )
}

/// Picks the Lasso penalty minimizing mean validation MAE across seeded
/// folds; ties go to the larger (sparser) penalty.
///
/// Every (fold, lambda) fit starts from zero. On designs with nearly
/// collinear columns the minimizer is a flat set, and a path of warm starts
/// drags extra active coordinates from one penalty to the next; those
/// inflated representatives predict held-out rows differently than the
/// sparse representative a cold fit settles on, which distorts the error
/// curve precisely where the penalty choice matters. The fold Gram matrix
/// is still computed once and shared across the grid.
pub fn cv_select_lambda(
    x: &Matrix,
    y: &[f64],
    grid: &[f64],
    k_folds: usize,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if k_folds < 2 {
        return Err(Error::InvalidInput(format!("k_folds must be >= 2, got {k_folds}")));
    }
    if x.rows() < k_folds {
        return Err(Error::InvalidInput(format!(
            "{} rows cannot fill {k_folds} folds",
            x.rows()
        )));
    }
    let fold = fold_assignment(x.rows(), k_folds, seed);
    let mut errors = vec![0.0_f64; grid.len()];
    let mut held_out_rows = 0usize;
    for held_out in 0..k_folds {
        let (xt, yt, xv, yv) = split_fold(x, y, &fold, held_out);
        let y_mean = yt.iter().sum::<f64>() / yt.len() as f64;
        let centered: Vec<f64> = yt.iter().map(|v| v - y_mean).collect();
        let problem = LassoProblem::new(&xt, &centered);
        for (slot, &lambda) in grid.iter().enumerate() {
            let mut beta = vec![0.0_f64; x.cols()];
            let mut gbeta = vec![0.0_f64; x.cols()];
            problem.solve_warm(lambda, LASSO_TOL, LASSO_MAX_ITER, &mut beta, &mut gbeta)?;
            let pred = xv.matvec(&beta);
            errors[slot] +=
                pred.iter().zip(&yv).map(|(p, t)| (p + y_mean - t).abs()).sum::<f64>();
        }
        held_out_rows += yv.len();
    }
    debug_assert_eq!(held_out_rows, x.rows());
    let mut best = (f64::INFINITY, grid[0]);
    for (slot, &lambda) in grid.iter().enumerate() {
        let mean_err = errors[slot] / x.rows() as f64;
        // Strict improvement keeps the earlier (larger) lambda on ties.
        if mean_err < best.0 {
            best = (mean_err, lambda);
        }
    }
    Ok(best.1)
}

/// Ridge penalty shared across responses: the grid value minimizing the
/// mean validation MAE pooled over every response and fold. Ties go to the
/// larger penalty.
pub fn cv_select_ridge_lambda_multi(
    x: &Matrix,
    y: &Matrix,
    grid: &[f64],
    k_folds: usize,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if k_folds < 2 {
        return Err(Error::InvalidInput(format!("k_folds must be >= 2, got {k_folds}")));
    }
    if x.rows() < k_folds {
        return Err(Error::InvalidInput(format!(
            "{} rows cannot fill {k_folds} folds",
            x.rows()
        )));
    }
    if y.rows() != x.rows() {
        return Err(Error::InvalidInput(format!(
            "{} response rows for {} sample rows",
            y.rows(),
            x.rows()
        )));
    }
    let fold = fold_assignment(x.rows(), k_folds, seed);
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let mut total_err = 0.0;
        let mut total_n = 0usize;
        for held_out in 0..k_folds {
            for r in 0..y.cols() {
                let yr = y.column(r);
                let (xt, yt, xv, yv) = split_fold(x, &yr, &fold, held_out);
                let y_mean = yt.iter().sum::<f64>() / yt.len() as f64;
                let centered: Vec<f64> = yt.iter().map(|v| v - y_mean).collect();
                let beta = ridge_solve(&xt, &centered, lambda)?;
                let pred = xv.matvec(&beta);
                total_err += pred
                    .iter()
                    .zip(&yv)
                    .map(|(p, t)| (p + y_mean - t).abs())
                    .sum::<f64>();
                total_n += yv.len();
            }
        }
        let mean_err = total_err / total_n as f64;
        if mean_err < best.0 {
            best = (mean_err, lambda);
        }
    }
    Ok(best.1)
}

/// Default Ridge penalty grid, descending. Standardized columns have
/// `x_j^T x_j = n`, so penalties are scaled by the row count to keep the
/// shrinkage fraction `lambda / (n + lambda)` comparable across sizes.
pub fn ridge_lambda_grid(n_rows: usize, size: usize) -> Vec<f64> {
    let n = n_rows as f64;
    let (lo, hi) = (1e-8, 10.0);
    if size <= 1 {
        return vec![n * lo];
    }
    (0..size)
        .map(|i| {
            let t = i as f64 / (size - 1) as f64;
            // From hi down to lo, log-spaced.
            n * hi * (lo / hi).powf(t)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Multivariate selection and the fitted model
// ---------------------------------------------------------------------------

/// Coefficients below this magnitude (on standardized predictors) do not
/// count as selected.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

/// Per-response Lasso at the CV-chosen penalty; a variable is selected when
/// any response keeps it. `x_std` must be standardized; zero-variance
/// columns are identically zero there and can never enter a support.
pub fn multivariate_lasso_select(
    x_std: &Matrix,
    y: &Matrix,
    grid_size: usize,
    grid_decades: f64,
    k_folds: usize,
    seed: u64,
) -> Result<SelectionResult> {
    if y.rows() != x_std.rows() {
        return Err(Error::InvalidInput(format!(
            "{} response rows for {} sample rows",
            y.rows(),
            x_std.rows()
        )));
    }
    if y.cols() == 0 {
        return Err(Error::InvalidInput("need at least one response".into()));
    }
    let mut selected = Vec::new();
    let mut lambdas = Vec::with_capacity(y.cols());
    for r in 0..y.cols() {
        let yr = y.column(r);
        let grid = lasso_lambda_grid(x_std, &yr, grid_size, grid_decades);
        let lambda = cv_select_lambda(x_std, &yr, &grid, k_folds, seed)?;
        let y_mean = yr.iter().sum::<f64>() / yr.len() as f64;
        let centered: Vec<f64> = yr.iter().map(|v| v - y_mean).collect();
        let beta = lasso_fit(x_std, &centered, lambda, LASSO_TOL, LASSO_MAX_ITER)?;
        for (j, &b) in beta.iter().enumerate() {
            if b.abs() > SUPPORT_THRESHOLD {
                selected.push(j);
            }
        }
        lambdas.push(lambda);
    }
    SelectionResult::new(selected, SelectionMethod::Lasso { lambdas }, x_std.cols())
}

/// A fitted linear model restricted to a variable subset, with everything
/// needed to predict raw (unstandardized) inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub kind: ModelKind,
    /// `[variables_used.len()][n_responses]`, on standardized predictors.
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub variables_used: Vec<usize>,
    pub standardizer: Standardizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ridge,
    Lasso,
}

impl ModelFit {
    /// Ridge fit on the selected columns of a raw training matrix. An empty
    /// selection yields the intercept-only model.
    pub fn fit_ridge(
        x_raw: &Matrix,
        y: &Matrix,
        variables_used: &[usize],
        lambda: f64,
    ) -> Result<ModelFit> {
        if y.rows() != x_raw.rows() {
            return Err(Error::InvalidInput(format!(
                "{} response rows for {} sample rows",
                y.rows(),
                x_raw.rows()
            )));
        }
        let x_sub = x_raw.select_columns(variables_used);
        let n_responses = y.cols();
        let intercepts: Vec<f64> = (0..n_responses)
            .map(|r| y.column(r).iter().sum::<f64>() / y.rows() as f64)
            .collect();
        if variables_used.is_empty() {
            return Ok(ModelFit {
                kind: ModelKind::Ridge,
                coefficients: Vec::new(),
                intercepts,
                lambdas: vec![lambda; n_responses],
                variables_used: Vec::new(),
                standardizer: Standardizer {
                    means: Vec::new(),
                    stds: Vec::new(),
                    zero_variance: Vec::new(),
                },
            });
        }
        let standardizer = Standardizer::fit(&x_sub)?;
        let x_std = standardizer.apply(&x_sub)?;
        let mut coefficients = vec![vec![0.0; n_responses]; variables_used.len()];
        for r in 0..n_responses {
            let yr = y.column(r);
            let centered: Vec<f64> = yr.iter().map(|v| v - intercepts[r]).collect();
            let beta = ridge_solve(&x_std, &centered, lambda)?;
            for (j, &b) in beta.iter().enumerate() {
                coefficients[j][r] = b;
            }
        }
        Ok(ModelFit {
            kind: ModelKind::Ridge,
            coefficients,
            intercepts,
            lambdas: vec![lambda; n_responses],
            variables_used: variables_used.to_vec(),
            standardizer,
        })
    }

    /// Predicts raw input rows: standardize the used columns, apply the
    /// linear map, add intercepts.
    pub fn predict(&self, x_raw: &Matrix) -> Result<Matrix> {
        let n_responses = self.intercepts.len();
        if let Some(&max_var) = self.variables_used.iter().max() {
            if max_var >= x_raw.cols() {
                return Err(Error::InvalidInput(format!(
                    "model uses variable {max_var}, input has {} columns",
                    x_raw.cols()
                )));
            }
        }
        let x_sub = x_raw.select_columns(&self.variables_used);
        let mut out = Matrix::zeros(x_raw.rows(), n_responses);
        if self.variables_used.is_empty() {
            for i in 0..x_raw.rows() {
                for (r, &b0) in self.intercepts.iter().enumerate() {
                    out.set(i, r, b0);
                }
            }
            return Ok(out);
        }
        let x_std = self.standardizer.apply(&x_sub)?;
        for i in 0..x_std.rows() {
            let row = x_std.row(i);
            for r in 0..n_responses {
                let mut v = self.intercepts[r];
                for (j, &x) in row.iter().enumerate() {
                    v += self.coefficients[j][r] * x;
                }
                out.set(i, r, v);
            }
        }
        Ok(out)
    }
}
