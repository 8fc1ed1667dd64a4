//! Domain types shared by every stage of the estimator.
//!
//! All types here are plain immutable values (`Send + Sync`); solvers that
//! carry iterate state live in their own modules.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, OwlError, Result};

/// Tolerance on `|sum(w) - 1|` for a valid weight vector.
pub const MASS_TOL: f64 = 1e-9;
/// Slack allowed on the TV constraint `½‖w − o‖₁ ≤ ε`.
pub const TV_TOL: f64 = 1e-6;
/// Smallest admissible covariance eigenvalue / noise variance.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Observation matrix (row-major, `n × d`) with optional response and
/// multiplicity counts.
///
/// `counts[i]` is the number of rows that are bitwise equal to row `i`, so
/// duplicated rows always carry equal counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    d: usize,
    points: Vec<f64>,
    response: Option<Vec<f64>>,
    counts: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset from row-major `points` with `d` columns.
    pub fn new(points: Vec<f64>, d: usize, response: Option<Vec<f64>>) -> Result<Self> {
        if d == 0 {
            return Err(OwlError::Data("dataset needs at least one column".into()));
        }
        if points.is_empty() || points.len() % d != 0 {
            return Err(OwlError::Data(format!(
                "{} values cannot form rows of width {d}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|v| !v.is_finite()) {
            return Err(OwlError::Data(format!(
                "non-finite value at row {}, column {}",
                bad / d,
                bad % d
            )));
        }
        let n = points.len() / d;
        if let Some(y) = &response {
            check_len(n, y.len(), "response length")?;
            if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
                return Err(OwlError::Data(format!("non-finite response at row {bad}")));
            }
        }
        let counts = duplicate_counts(&points, d);
        Ok(Self {
            n,
            d,
            points,
            response,
            counts,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], response: Option<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut points = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(OwlError::Data(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            points.extend_from_slice(row);
        }
        Self::new(points, d, response)
    }

    /// One-dimensional dataset from a slice of scalars.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.d)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Rows selected by `idx` (repeats allowed), counts recomputed.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut points = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            if i >= self.n {
                return Err(OwlError::InvalidInput(format!("row index {i} out of range")));
            }
            points.extend_from_slice(self.row(i));
        }
        let response = self.response.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect());
        Self::new(points, self.d, response)
    }

    /// Same rows, new response column.
    pub fn with_response(&self, response: Option<Vec<f64>>) -> Result<Self> {
        Self::new(self.points.clone(), self.d, response)
    }

    /// True when every entry is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.points.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Per-column sample standard deviation (population form).
    pub fn column_std(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.d)
            .map(|j| {
                let mean = self.rows().map(|r| r[j]).sum::<f64>() / n;
                let var = self.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect()
    }
}

fn duplicate_counts(points: &[f64], d: usize) -> Vec<u32> {
    let keys: Vec<Vec<u64>> = points
        .chunks_exact(d)
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    let mut tally: HashMap<&[u64], u32> = HashMap::with_capacity(keys.len());
    for k in &keys {
        *tally.entry(k.as_slice()).or_insert(0) += 1;
    }
    keys.iter().map(|k| tally[k.as_slice()]).collect()
}

/// Simplex-valued observation weights produced under a TV radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w: Vec<f64>,
    epsilon: f64,
}

impl WeightVector {
    /// Validates simplex membership and the TV constraint.
    pub fn new(w: Vec<f64>, epsilon: f64) -> Result<Self> {
        let out = Self::new_on_simplex(w, epsilon)?;
        let tv = out.tv_from_uniform();
        if tv > epsilon + TV_TOL {
            return Err(OwlError::InvalidInput(format!(
                "weights are at TV distance {tv:.3e} from uniform, radius is {epsilon:.3e}"
            )));
        }
        Ok(out)
    }

    /// Validates simplex membership only; used for kernel-smoothed weights whose
    /// TV constraint is stated on the unnormalized vector.
    pub(crate) fn new_on_simplex(w: Vec<f64>, epsilon: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(OwlError::InvalidInput("empty weight vector".into()));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(OwlError::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let mass: f64 = w.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(OwlError::InvalidInput(format!("weights sum to {mass}, expected 1")));
        }
        Ok(Self { w, epsilon })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            w: vec![1.0 / n as f64; n],
            epsilon: 0.0,
        }
    }

    /// Normalizes a nonnegative vector to unit mass.
    pub fn normalized(mut w: Vec<f64>, epsilon: f64) -> Result<Self> {
        let mass: f64 = w.iter().sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(OwlError::InvalidInput(
                "cannot normalize weights with non-positive mass".into(),
            ));
        }
        w.iter_mut().for_each(|v| *v /= mass);
        Self::new_on_simplex(w, epsilon)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mass(&self) -> f64 {
        self.w.iter().sum()
    }

    /// `½ Σ |w_i − 1/n|`.
    pub fn tv_from_uniform(&self) -> f64 {
        let o = 1.0 / self.w.len() as f64;
        0.5 * self.w.iter().map(|v| (v - o).abs()).sum::<f64>()
    }

    /// Weights on the `n·w` scale (average 1), the form reported to users.
    pub fn scaled(&self) -> Vec<f64> {
        let n = self.w.len() as f64;
        self.w.iter().map(|v| v * n).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Spherical,
    Diagonal,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "covariance")]
pub enum Family {
    MultivariateNormal,
    LinearRegression,
    LogisticRegression,
    BernoulliProductMixture,
    GaussianMixture(CovarianceKind),
}

impl Family {
    /// Families whose likelihood is conditional on covariates (`y | x`).
    pub fn is_regression(self) -> bool {
        matches!(self, Family::LinearRegression | Family::LogisticRegression)
    }

    pub fn is_mixture(self) -> bool {
        matches!(self, Family::BernoulliProductMixture | Family::GaussianMixture(_))
    }

    /// Families whose sample space is discrete (indicator kernel is exact).
    pub fn is_discrete(self) -> bool {
        matches!(self, Family::BernoulliProductMixture | Family::LogisticRegression)
    }
}

/// Declarative model choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Number of mixture components (1 for non-mixtures).
    pub k: usize,
    /// L2 penalty on regression slopes.
    pub ridge: f64,
}

impl ModelSpec {
    pub fn gaussian() -> Self {
        Self {
            family: Family::MultivariateNormal,
            k: 1,
            ridge: 0.0,
        }
    }

    pub fn linear_regression() -> Self {
        Self {
            family: Family::LinearRegression,
            k: 1,
            ridge: 0.0,
        }
    }

    pub fn logistic_regression(ridge: f64) -> Self {
        Self {
            family: Family::LogisticRegression,
            k: 1,
            ridge,
        }
    }

    pub fn bernoulli_mixture(k: usize) -> Self {
        Self {
            family: Family::BernoulliProductMixture,
            k,
            ridge: 0.0,
        }
    }

    pub fn gaussian_mixture(kind: CovarianceKind, k: usize) -> Self {
        Self {
            family: Family::GaussianMixture(kind),
            k,
            ridge: 0.0,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(OwlError::InvalidParams("k must be at least 1".into()));
        }
        if !self.family.is_mixture() && self.k != 1 {
            return Err(OwlError::InvalidParams(format!(
                "{:?} is not a mixture; k must be 1",
                self.family
            )));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(OwlError::InvalidParams("ridge must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Free parameters of one component (excluding its mixing weight).
    pub fn component_dim(&self, d: usize) -> usize {
        match self.family {
            Family::MultivariateNormal | Family::GaussianMixture(CovarianceKind::Full) => d + d * (d + 1) / 2,
            Family::GaussianMixture(CovarianceKind::Diagonal) => 2 * d,
            Family::GaussianMixture(CovarianceKind::Spherical) => d + 1,
            Family::BernoulliProductMixture => d,
            Family::LinearRegression => d + 2,
            Family::LogisticRegression => d + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// Shared variance on every axis.
    Spherical(f64),
    /// Per-axis variances.
    Diagonal(Vec<f64>),
    /// Dense symmetric matrix, row-major rows.
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    pub fn kind(&self) -> CovarianceKind {
        match self {
            Covariance::Spherical(_) => CovarianceKind::Spherical,
            Covariance::Diagonal(_) => CovarianceKind::Diagonal,
            Covariance::Full(_) => CovarianceKind::Full,
        }
    }

    /// Dense `d × d` representation.
    pub fn to_dense(&self, d: usize) -> Vec<Vec<f64>> {
        match self {
            Covariance::Spherical(v) => (0..d)
                .map(|i| (0..d).map(|j| if i == j { *v } else { 0.0 }).collect())
                .collect(),
            Covariance::Diagonal(diag) => (0..d)
                .map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
                .collect(),
            Covariance::Full(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliComponent {
    /// Per-coordinate success probabilities.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Residual standard deviation.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture<C> {
    /// Mixing weights on the simplex.
    pub weights: Vec<f64>,
    pub components: Vec<C>,
    /// Hard component assignments, present when produced by hard EM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignments: Option<Vec<usize>>,
}

impl<C> Mixture<C> {
    pub fn k(&self) -> usize {
        self.components.len()
    }
}

/// Fitted parameters, tagged by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum ModelParams {
    Gaussian(GaussianComponent),
    LinearRegression(LinearParams),
    LogisticRegression(LogisticParams),
    BernoulliMixture(Mixture<BernoulliComponent>),
    GaussianMixture(Mixture<GaussianComponent>),
}

impl ModelParams {
    pub fn assignments(&self) -> Option<&[usize]> {
        match self {
            ModelParams::BernoulliMixture(m) => m.assignments.as_deref(),
            ModelParams::GaussianMixture(m) => m.assignments.as_deref(),
            _ => None,
        }
    }

    /// Named scalar view of the parameters, in a stable order.
    pub fn flatten(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        match self {
            ModelParams::Gaussian(g) => push_gaussian(&mut out, "", g),
            ModelParams::LinearRegression(p) => {
                out.push(("intercept".into(), p.intercept));
                for (j, c) in p.coef.iter().enumerate() {
                    out.push((format!("coef[{j}]"), *c));
                }
                out.push(("sigma".into(), p.sigma));
            }
            ModelParams::LogisticRegression(p) => {
                out.push(("intercept".into(), p.intercept));
                for (j, c) in p.coef.iter().enumerate() {
                    out.push((format!("coef[{j}]"), *c));
                }
            }
            ModelParams::BernoulliMixture(m) => {
                for (k, (pi, c)) in m.weights.iter().zip(&m.components).enumerate() {
                    out.push((format!("pi[{k}]"), *pi));
                    for (j, p) in c.probs.iter().enumerate() {
                        out.push((format!("lambda[{k}][{j}]"), *p));
                    }
                }
            }
            ModelParams::GaussianMixture(m) => {
                for (k, (pi, c)) in m.weights.iter().zip(&m.components).enumerate() {
                    out.push((format!("pi[{k}]"), *pi));
                    push_gaussian(&mut out, &format!("[{k}]"), c);
                }
            }
        }
        out
    }
}

fn push_gaussian(out: &mut Vec<(String, f64)>, tag: &str, g: &GaussianComponent) {
    for (j, m) in g.mean.iter().enumerate() {
        out.push((format!("mean{tag}[{j}]"), *m));
    }
    match &g.covariance {
        Covariance::Spherical(v) => out.push((format!("var{tag}"), *v)),
        Covariance::Diagonal(v) => {
            for (j, x) in v.iter().enumerate() {
                out.push((format!("var{tag}[{j}]"), *x));
            }
        }
        Covariance::Full(m) => {
            for (i, row) in m.iter().enumerate() {
                for (j, x) in row.iter().enumerate().skip(i) {
                    out.push((format!("cov{tag}[{i}][{j}]"), *x));
                }
            }
        }
    }
}

/// Outcome of one I-projection solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OklResult {
    /// Objective value at the returned weights (`0·log 0 = 0`).
    pub value: f64,
    pub weights: WeightVector,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// Kernelized solves only: the simplex vector `v` with `w ∝ A v`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_mixture: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    MaxIter,
    Converged,
    /// The θ-step could not improve the weighted likelihood.
    Stalled,
}

/// Per-iteration record of an OWL run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub okl_per_iter: Vec<f64>,
    pub theta_per_iter: Vec<ModelParams>,
    pub terminated_reason: TerminationReason,
}

impl FitTrace {
    /// Largest single-step increase of the OKL sequence (≤ 0 for a descent).
    pub fn max_increase(&self) -> f64 {
        self.okl_per_iter
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelSpec {
    /// `K(x, y) = 1{x = y}`: the histogram estimator.
    #[default]
    Indicator,
    /// Isotropic Gaussian density kernel with standard deviation `bandwidth`.
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let KernelSpec::Gaussian { bandwidth } = self {
            if !(*bandwidth > 0.0) || !bandwidth.is_finite() {
                return Err(OwlError::InvalidParams(
                    "Gaussian kernel bandwidth must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_exact_duplicates() {
        let data =
            Dataset::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0], vec![1.0, 2.0], vec![-0.0, 0.0]], None).unwrap();
        assert_eq!(data.counts(), &[2, 1, 2, 1]);
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Dataset::new(vec![], 1, None).is_err());
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2, None).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 1, None).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 1, Some(vec![1.0])).is_err());
        assert!(Dataset::new(vec![1.0], 0, None).is_err());
    }

    #[test]
    fn weight_vector_checks_ball() {
        assert!(WeightVector::new(vec![0.5, 0.5], 0.0).is_ok());
        assert!(WeightVector::new(vec![0.9, 0.1], 0.1).is_err());
        assert!(WeightVector::new(vec![0.9, 0.1], 0.4).is_ok());
        assert!(WeightVector::new(vec![0.9, 0.2], 1.0).is_err());
        assert!(WeightVector::new(vec![1.1, -0.1], 1.0).is_err());
        let w = WeightVector::new(vec![0.75, 0.25], 0.25).unwrap();
        assert_eq!(w.scaled(), vec![1.5, 0.5]);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::gaussian().validate().is_ok());
        assert!(ModelSpec::gaussian().with_k(2).validate().is_err());
        assert!(ModelSpec::bernoulli_mixture(0).validate().is_err());
        assert!(ModelSpec::logistic_regression(-1.0).validate().is_err());
        assert!(KernelSpec::Gaussian { bandwidth: 0.0 }.validate().is_err());
    }

    #[test]
    fn params_serialize_with_family_tag() {
        let p = ModelParams::LinearRegression(LinearParams {
            intercept: 1.0,
            coef: vec![2.0],
            sigma: 0.5,
        });
        let names: Vec<String> = p.flatten().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["intercept", "coef[0]", "sigma"]);
    }
}
