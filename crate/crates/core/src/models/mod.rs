//! Weighted maximum-likelihood fits for every supported family.

mod gaussian;
mod mixture;
mod regression;

pub use gaussian::{wmle_bernoulli_product, wmle_gaussian, P_CLIP};
pub use mixture::{initial_mixture, soft_em_mixture, with_assignments, wmle_mixture_hard_em};
pub use regression::{wmle_linear_regression, wmle_logistic_regression};

use crate::density::observation_logliks;
use crate::error::{check_len, Result};
use crate::rng::stream_rng;
use crate::types::{Dataset, Family, ModelParams, ModelSpec, WeightVector};

/// Side information from a weighted fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// A covariance or residual variance hit the eigenvalue floor.
    pub covariance_floored: bool,
    /// The inner optimizer (Newton, hard EM) reached its stopping rule.
    pub converged: bool,
    /// Mixture components that were reseeded after losing all members.
    pub reseeded_components: Vec<usize>,
    /// Hard-EM rounds used (0 for closed-form fits).
    pub rounds: usize,
    pub warnings: Vec<String>,
}

impl Default for FitDiagnostics {
    fn default() -> Self {
        Self {
            covariance_floored: false,
            converged: true,
            reseeded_components: Vec::new(),
            rounds: 0,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFit {
    pub params: ModelParams,
    pub diagnostics: FitDiagnostics,
}

/// Options for [`wmle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmleOptions {
    /// Round cap for hard EM.
    pub em_rounds: usize,
    /// Seed for the k-means++ start when a mixture has no initial value.
    pub seed: u64,
}

impl Default for WmleOptions {
    fn default() -> Self {
        Self {
            em_rounds: 100,
            seed: 0,
        }
    }
}

/// `w / Σ w`, with negative entries treated as zero.
pub(crate) fn normalized(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().map(|v| v.max(0.0)).sum();
    w.iter().map(|v| v.max(0.0) / total).collect()
}

/// Weighted MLE for `spec`. Mixtures start from `init` when given, otherwise
/// from a weighted k-means++ seeding; logistic regression warm-starts from
/// `init` when it holds logistic parameters.
pub fn wmle(
    spec: &ModelSpec,
    data: &Dataset,
    w: &WeightVector,
    init: Option<&ModelParams>,
    opts: WmleOptions,
) -> Result<WeightedFit> {
    spec.validate()?;
    check_len(data.n(), w.len(), "weights")?;
    match spec.family {
        Family::MultivariateNormal => wmle_gaussian(data, w),
        Family::LinearRegression => wmle_linear_regression(data, w, spec.ridge),
        Family::LogisticRegression => {
            let start = match init {
                Some(ModelParams::LogisticRegression(p)) => Some(p),
                _ => None,
            };
            regression::wmle_logistic_from(data, w, spec.ridge, start)
        }
        Family::BernoulliProductMixture if spec.k == 1 && init.is_none() => wmle_bernoulli_product(data, w),
        Family::BernoulliProductMixture | Family::GaussianMixture(_) => {
            let owned;
            let start = match init {
                Some(p) => p,
                None => {
                    let mut rng = stream_rng(opts.seed, 0);
                    owned = initial_mixture(spec, data, w, &mut rng)?;
                    &owned
                }
            };
            wmle_mixture_hard_em(data, w, spec, start, opts.em_rounds)
        }
    }
}

/// `Σ w_i log p_θ(x_i)`, using hard assignments when the parameters carry them.
pub fn weighted_loglik(spec: &ModelSpec, params: &ModelParams, data: &Dataset, w: &[f64]) -> Result<f64> {
    check_len(data.n(), w.len(), "weights")?;
    let ll = observation_logliks(spec, params, data)?;
    Ok(ll.iter().zip(w).map(|(l, wi)| wi * l).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CovarianceKind;

    #[test]
    fn scale_invariance_through_normalization() {
        let data = Dataset::from_column(&[0.3, -1.2, 2.5, 0.9, 4.0]).unwrap();
        let raw = [0.1, 0.4, 0.2, 0.2, 0.1];
        let scaled: Vec<f64> = raw.iter().map(|v| v * 7.0).collect();
        let a = WeightVector::new(normalized(&raw), 1.0).unwrap();
        let b = WeightVector::new(normalized(&scaled), 1.0).unwrap();
        let fa = wmle(&ModelSpec::gaussian(), &data, &a, None, WmleOptions::default()).unwrap();
        let fb = wmle(&ModelSpec::gaussian(), &data, &b, None, WmleOptions::default()).unwrap();
        let (pa, pb) = (fa.params.flatten(), fb.params.flatten());
        for ((_, x), (_, y)) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn mixture_without_init_is_seeded_deterministically() {
        let xs: Vec<f64> = (0..40)
            .map(|i| if i < 20 { i as f64 * 0.01 } else { 5.0 + i as f64 * 0.01 })
            .collect();
        let data = Dataset::from_column(&xs).unwrap();
        let spec = ModelSpec::gaussian_mixture(CovarianceKind::Spherical, 2);
        let w = WeightVector::uniform(40);
        let opts = WmleOptions { em_rounds: 50, seed: 9 };
        let a = wmle(&spec, &data, &w, None, opts).unwrap();
        let b = wmle(&spec, &data, &w, None, opts).unwrap();
        assert_eq!(a, b);
        let ll = weighted_loglik(&spec, &a.params, &data, w.as_slice()).unwrap();
        assert!(ll.is_finite());
    }
}
