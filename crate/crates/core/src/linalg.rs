//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{OwlError, Result};
use crate::types::{Covariance, GaussianComponent, EIGEN_FLOOR};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(OwlError::InvalidParams("covariance matrix is not square".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Symmetrizes `m` and lifts every eigenvalue to at least `floor`.
///
/// Returns the repaired matrix and whether any eigenvalue was lifted.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (sym, false);
    }
    let lifted = eig.eigenvalues.map(|l| l.max(floor));
    let repaired = &eig.eigenvectors * DMatrix::from_diagonal(&lifted) * eig.eigenvectors.transpose();
    ((&repaired + repaired.transpose()) * 0.5, true)
}

/// Precomputed evaluator of a multivariate normal log-density.
#[derive(Debug, Clone)]
pub struct MvnEval {
    mean: Vec<f64>,
    shape: Shape,
    /// `-(d ln 2π + ln det Σ) / 2`
    log_norm: f64,
}

#[derive(Debug, Clone)]
enum Shape {
    Spherical(f64),
    Diagonal(Vec<f64>),
    /// Lower Cholesky factor of Σ.
    Full(DMatrix<f64>),
}

impl MvnEval {
    pub fn new(c: &GaussianComponent) -> Result<Self> {
        let d = c.mean.len();
        if d == 0 {
            return Err(OwlError::InvalidParams("empty mean vector".into()));
        }
        if c.mean.iter().any(|v| !v.is_finite()) {
            return Err(OwlError::InvalidParams("non-finite mean".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let (shape, log_det) = match &c.covariance {
            Covariance::Spherical(v) => {
                if !positive(*v) {
                    return Err(OwlError::InvalidParams(format!("variance {v} is not positive")));
                }
                (Shape::Spherical(*v), d as f64 * v.ln())
            }
            Covariance::Diagonal(vs) => {
                if vs.len() != d {
                    return Err(OwlError::Dimension {
                        expected: d,
                        got: vs.len(),
                        context: "diagonal covariance",
                    });
                }
                if !vs.iter().all(|&v| positive(v)) {
                    return Err(OwlError::InvalidParams("variances must be positive".into()));
                }
                (Shape::Diagonal(vs.clone()), vs.iter().map(|v| v.ln()).sum())
            }
            Covariance::Full(rows) => {
                if rows.len() != d {
                    return Err(OwlError::Dimension {
                        expected: d,
                        got: rows.len(),
                        context: "full covariance",
                    });
                }
                let m = matrix_from_rows(rows)?;
                let chol = m
                    .cholesky()
                    .ok_or_else(|| OwlError::InvalidParams("covariance is not positive definite".into()))?;
                let l = chol.unpack();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                (Shape::Full(l), log_det)
            }
        };
        Ok(Self {
            mean: c.mean.clone(),
            shape,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let maha = match &self.shape {
            Shape::Spherical(v) => x.iter().zip(&self.mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>() / v,
            Shape::Diagonal(vs) => x
                .iter()
                .zip(&self.mean)
                .zip(vs)
                .map(|((a, m), v)| (a - m).powi(2) / v)
                .sum(),
            Shape::Full(l) => {
                let diff = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
                // Solve L y = diff; Mahalanobis distance is |y|².
                match l.solve_lower_triangular(&diff) {
                    Some(y) => y.norm_squared(),
                    None => f64::INFINITY,
                }
            }
        };
        self.log_norm - 0.5 * maha
    }
}

/// Stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln Σ exp(v_i)` without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Floors the eigenvalues of a covariance of any shape.
pub(crate) fn floor_covariance(c: Covariance) -> (Covariance, bool) {
    match c {
        Covariance::Spherical(v) => {
            let f = !(v >= EIGEN_FLOOR);
            (Covariance::Spherical(if f { EIGEN_FLOOR } else { v }), f)
        }
        Covariance::Diagonal(vs) => {
            let f = vs.iter().any(|v| !(*v >= EIGEN_FLOOR));
            (
                Covariance::Diagonal(vs.into_iter().map(|v| v.max(EIGEN_FLOOR)).collect()),
                f,
            )
        }
        Covariance::Full(rows) => {
            let d = rows.len();
            let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
            let (m, f) = floor_eigenvalues(&m, EIGEN_FLOOR);
            (Covariance::Full(rows_from_matrix(&m)), f)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_matches_diagonal_when_diagonal() {
        let diag = GaussianComponent {
            mean: vec![1.0, -2.0],
            covariance: Covariance::Diagonal(vec![0.5, 3.0]),
        };
        let full = GaussianComponent {
            mean: vec![1.0, -2.0],
            covariance: Covariance::Full(vec![vec![0.5, 0.0], vec![0.0, 3.0]]),
        };
        let (a, b) = (MvnEval::new(&diag).unwrap(), MvnEval::new(&full).unwrap());
        for x in [[0.0, 0.0], [1.0, -2.0], [4.0, 7.5]] {
            assert_abs_diff_eq!(a.log_pdf(&x), b.log_pdf(&x), epsilon = 1e-12);
        }
    }

    #[test]
    fn correlated_density_matches_closed_form() {
        let rho: f64 = 0.6;
        let c = GaussianComponent {
            mean: vec![0.0, 0.0],
            covariance: Covariance::Full(vec![vec![1.0, rho], vec![rho, 1.0]]),
        };
        let x = [0.3, -1.1];
        let q = (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / (1.0 - rho * rho);
        let expected = -LN_2PI - 0.5 * (1.0 - rho * rho).ln() - 0.5 * q;
        assert_abs_diff_eq!(MvnEval::new(&c).unwrap().log_pdf(&x), expected, epsilon = 1e-12);
    }

    #[test]
    fn eigen_floor_repairs_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (r, lifted) = floor_eigenvalues(&m, 1e-10);
        assert!(lifted);
        assert!(r.clone().cholesky().is_some());
        assert_abs_diff_eq!(r[(0, 1)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn softplus_is_stable() {
        assert_abs_diff_eq!(softplus(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(softplus(800.0), 800.0, epsilon = 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
    }
}
