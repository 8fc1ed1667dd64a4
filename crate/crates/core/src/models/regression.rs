use nalgebra::{DMatrix, DVector};

use crate::error::{OwlError, Result};
use crate::linalg::{sigmoid, softplus};
use crate::types::{Dataset, LinearParams, LogisticParams, ModelParams, WeightVector, EIGEN_FLOOR};

use super::{normalized, FitDiagnostics, WeightedFit};

/// Gradient-norm target for the logistic Newton solver.
pub const LOGISTIC_GRAD_TOL: f64 = 1e-8;
/// Largest absolute coefficient returned when the classes are separable.
pub const LOGISTIC_COEF_CLIP: f64 = 50.0;
const LOGISTIC_MAX_ITERS: usize = 200;

fn response(data: &Dataset) -> Result<&[f64]> {
    data.response()
        .ok_or_else(|| OwlError::Data("regression needs a response column".into()))
}

/// Design matrix with a leading intercept column.
fn design(data: &Dataset) -> DMatrix<f64> {
    let d = data.d();
    DMatrix::from_fn(data.n(), d + 1, |i, j| if j == 0 { 1.0 } else { data.row(i)[j - 1] })
}

/// Weighted least squares with an optional ridge penalty on the slopes.
///
/// `σ² = Σ w_i r_i²` with normalized weights, floored at 1e-10.
pub fn wmle_linear_regression(data: &Dataset, w: &WeightVector, ridge: f64) -> Result<WeightedFit> {
    crate::error::check_len(data.n(), w.len(), "weights")?;
    if !(ridge >= 0.0) {
        return Err(OwlError::InvalidParams("ridge must be >= 0".into()));
    }
    let y = response(data)?;
    let w = normalized(w.as_slice());
    let x = design(data);
    let p = x.ncols();
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for i in 0..data.n() {
        if w[i] <= 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..p {
            rhs[a] += w[i] * row[a] * y[i];
            for b in a..p {
                gram[(a, b)] += w[i] * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    for a in 1..p {
        gram[(a, a)] += ridge;
    }
    let beta = solve_spd(gram, &rhs)
        .ok_or_else(|| OwlError::Singular("weighted Gram matrix is singular; add a ridge penalty".into()))?;
    let fitted = &x * &beta;
    let var: f64 = (0..data.n()).map(|i| w[i] * (y[i] - fitted[i]).powi(2)).sum();
    let mut diagnostics = FitDiagnostics::default();
    if var < EIGEN_FLOOR {
        diagnostics.covariance_floored = true;
        diagnostics.warnings.push("residual variance floored at 1e-10".into());
    }
    Ok(WeightedFit {
        params: ModelParams::LinearRegression(LinearParams {
            intercept: beta[0],
            coef: beta.iter().skip(1).copied().collect(),
            sigma: var.max(EIGEN_FLOOR).sqrt(),
        }),
        diagnostics,
    })
}

/// Cholesky solve that rejects numerically singular systems.
fn solve_spd(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let diag_max = m.diagonal().iter().copied().fold(0.0, f64::max);
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-13 * diag_max) {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Weighted logistic regression by damped Newton with Armijo backtracking.
///
/// Minimizes `Σ w_i [softplus(η_i) − y_i η_i] + ridge ‖β‖² / 2` (intercept
/// unpenalized). Without a ridge, separable classes have no finite optimum;
/// the coefficients are then rescaled to at most `LOGISTIC_COEF_CLIP` and the
/// fit is flagged as not converged.
pub fn wmle_logistic_regression(data: &Dataset, w: &WeightVector, ridge: f64) -> Result<WeightedFit> {
    wmle_logistic_from(data, w, ridge, None)
}

pub(crate) fn wmle_logistic_from(
    data: &Dataset,
    w: &WeightVector,
    ridge: f64,
    start: Option<&LogisticParams>,
) -> Result<WeightedFit> {
    crate::error::check_len(data.n(), w.len(), "weights")?;
    if !(ridge >= 0.0) {
        return Err(OwlError::InvalidParams("ridge must be >= 0".into()));
    }
    let y = response(data)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(OwlError::Data("logistic labels must be 0 or 1".into()));
    }
    let w = normalized(w.as_slice());
    let x = design(data);
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    if let Some(s) = start.filter(|s| s.coef.len() + 1 == p) {
        beta[0] = s.intercept;
        for j in 0..s.coef.len() {
            beta[j + 1] = s.coef[j];
        }
    }
    let objective = |b: &DVector<f64>| -> f64 {
        let eta = &x * b;
        let loss: f64 = (0..data.n())
            .filter(|&i| w[i] > 0.0)
            .map(|i| w[i] * (softplus(eta[i]) - y[i] * eta[i]))
            .sum();
        loss + 0.5 * ridge * b.rows(1, p - 1).norm_squared()
    };

    let mut converged = false;
    let mut f = objective(&beta);
    for _ in 0..LOGISTIC_MAX_ITERS {
        let eta = &x * &beta;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..data.n() {
            if w[i] <= 0.0 {
                continue;
            }
            let mu = sigmoid(eta[i]);
            let row = x.row(i);
            let g = w[i] * (mu - y[i]);
            let h = w[i] * mu * (1.0 - mu);
            for a in 0..p {
                grad[a] += g * row[a];
                for b in a..p {
                    hess[(a, b)] += h * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for a in 1..p {
            grad[a] += ridge * beta[a];
            hess[(a, a)] += ridge;
        }
        if grad.norm() <= LOGISTIC_GRAD_TOL {
            converged = true;
            break;
        }
        // Levenberg-style damping keeps the step defined when curvature vanishes.
        let scale = hess.diagonal().iter().copied().fold(0.0, f64::max).max(1e-300);
        let mut damping = 0.0;
        let step = loop {
            let mut h = hess.clone();
            for a in 0..p {
                h[(a, a)] += damping;
            }
            if let Some(s) = solve_spd(h, &grad) {
                break s;
            }
            damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
            if damping > 1e10 * scale {
                break grad.clone();
            }
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &beta - &step * t;
            let fc = objective(&cand);
            if fc <= f - 1e-4 * t * slope {
                beta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let mut diagnostics = FitDiagnostics::default();
    let separable = ridge == 0.0 && is_separated(&x, &beta, y, &w);
    let max_abs = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if separable || max_abs > LOGISTIC_COEF_CLIP {
        converged = false;
        if max_abs > LOGISTIC_COEF_CLIP {
            beta *= LOGISTIC_COEF_CLIP / max_abs;
        }
        diagnostics
            .warnings
            .push("classes are (nearly) separable; coefficients clipped".into());
    }
    if !converged && diagnostics.warnings.is_empty() {
        diagnostics
            .warnings
            .push("logistic Newton solver stopped before the gradient tolerance".into());
    }
    diagnostics.converged = converged;
    Ok(WeightedFit {
        params: ModelParams::LogisticRegression(LogisticParams {
            intercept: beta[0],
            coef: beta.iter().skip(1).copied().collect(),
            converged,
        }),
        diagnostics,
    })
}

/// Every positively weighted point is classified with probability > 1 − 1e-6.
fn is_separated(x: &DMatrix<f64>, beta: &DVector<f64>, y: &[f64], w: &[f64]) -> bool {
    let eta = x * beta;
    (0..y.len())
        .filter(|&i| w[i] > 0.0)
        .all(|i| (2.0 * y[i] - 1.0) * eta[i] > 13.8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let data = Dataset::new(xs.to_vec(), 1, Some(xs.iter().map(|x| 2.0 * x).collect())).unwrap();
        let fit = wmle_linear_regression(&data, &WeightVector::uniform(4), 0.0).unwrap();
        let ModelParams::LinearRegression(p) = fit.params else {
            panic!()
        };
        assert_abs_diff_eq!(p.intercept, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.coef[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.sigma, 1e-5, epsilon = 1e-12);
        assert!(fit.diagnostics.covariance_floored);
    }

    #[test]
    fn two_point_interpolation() {
        let data = Dataset::new(vec![0.0, 1.0, 5.0], 1, Some(vec![1.0, 3.0, -40.0])).unwrap();
        let w = WeightVector::new(vec![0.5, 0.5, 0.0], 1.0).unwrap();
        let fit = wmle_linear_regression(&data, &w, 0.0).unwrap();
        let ModelParams::LinearRegression(p) = fit.params else {
            panic!()
        };
        assert_abs_diff_eq!(p.intercept, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p.coef[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn singular_without_ridge() {
        let data = Dataset::new(vec![1.0, 1.0, 1.0], 1, Some(vec![0.0, 1.0, 2.0])).unwrap();
        let w = WeightVector::uniform(3);
        assert!(matches!(
            wmle_linear_regression(&data, &w, 0.0),
            Err(OwlError::Singular(_))
        ));
        assert!(wmle_linear_regression(&data, &w, 0.1).is_ok());
    }

    #[test]
    fn logistic_symmetry_and_ridge() {
        let xs = vec![1.0, 2.0, 0.5, -1.0, -2.0, -0.5, 0.3, -0.3];
        let ys = vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let data = Dataset::new(xs, 1, Some(ys)).unwrap();
        let fit = wmle_logistic_regression(&data, &WeightVector::uniform(8), 0.0).unwrap();
        let ModelParams::LogisticRegression(p) = fit.params else {
            panic!()
        };
        assert!(p.converged);
        assert_abs_diff_eq!(p.intercept, 0.0, epsilon = 1e-8);
        let heavy = wmle_logistic_regression(&data, &WeightVector::uniform(8), 1e8).unwrap();
        let ModelParams::LogisticRegression(h) = heavy.params else {
            panic!()
        };
        assert!(h.coef[0].abs() < 1e-6);
    }

    #[test]
    fn logistic_separation_is_flagged() {
        let data = Dataset::new(vec![-2.0, -1.0, 1.0, 2.0], 1, Some(vec![0.0, 0.0, 1.0, 1.0])).unwrap();
        let fit = wmle_logistic_regression(&data, &WeightVector::uniform(4), 0.0).unwrap();
        let ModelParams::LogisticRegression(p) = fit.params else {
            panic!()
        };
        assert!(!p.converged);
        assert!(p.coef[0].abs() <= LOGISTIC_COEF_CLIP);
        assert!(p.coef[0] > 0.0);
    }
}
