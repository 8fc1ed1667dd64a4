//! Choosing the number of mixture components with weighted AIC / BIC.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{owl_fit, OwlConfig, OwlFit};
use crate::density::observation_logliks;
use crate::error::{OwlError, Result};
use crate::models::{initial_mixture, soft_em_mixture};
use crate::rng::stream_rng;
use crate::types::{Dataset, ModelParams, ModelSpec, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Aic,
    Bic,
}

impl Penalty {
    /// `κ` for `k` components with `dim` free parameters each (plus one
    /// mixing weight per component).
    pub fn kappa(self, k: usize, dim: usize, n: usize) -> f64 {
        let base = (k * (dim + 1)) as f64;
        match self {
            Penalty::Aic => base,
            Penalty::Bic => base / 2.0 * (n as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub chosen_k: usize,
    /// `(k, criterion)` for every `k` that produced a fit.
    pub values: Vec<(usize, f64)>,
    pub fits: Vec<(usize, OwlFit)>,
    pub warnings: Vec<String>,
}

/// `2κ − 2 Σ_i (n w_i) log(π_{z_i} p_{φ_{z_i}}(x_i))` for a fitted mixture.
pub fn weighted_criterion(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    weights: &[f64],
    penalty: Penalty,
) -> Result<f64> {
    let pi = match params {
        ModelParams::GaussianMixture(m) => &m.weights,
        ModelParams::BernoulliMixture(m) => &m.weights,
        _ => return Err(OwlError::InvalidParams("selection needs mixture parameters".into())),
    };
    let z = params
        .assignments()
        .ok_or_else(|| OwlError::InvalidParams("selection needs hard assignments".into()))?;
    let ll = observation_logliks(spec, params, data)?;
    let n = data.n();
    let fit: f64 = (0..n)
        .filter(|&i| weights[i] > 0.0)
        .map(|i| n as f64 * weights[i] * (pi[z[i]].ln() + ll[i]))
        .sum();
    let kappa = penalty.kappa(spec.k, spec.component_dim(data.d()), n);
    Ok(2.0 * kappa - 2.0 * fit)
}

/// Fits an OWL mixture for every `k` in `k_range` and returns the `k` with
/// the smallest weighted criterion (ties to the smaller `k`). With
/// `epsilon = 0` this is the ordinary criterion of the hard-EM fit.
pub fn owl_selection_criterion(
    spec: &ModelSpec,
    data: &Dataset,
    k_range: &[usize],
    epsilon: f64,
    penalty: Penalty,
    cfg: &OwlConfig,
) -> Result<SelectionResult> {
    if !spec.family.is_mixture() {
        return Err(OwlError::InvalidParams("model selection needs a mixture family".into()));
    }
    if k_range.is_empty() || k_range.contains(&0) {
        return Err(OwlError::InvalidInput("k range must be nonempty and positive".into()));
    }
    let cfg = cfg.clone().with_epsilon(epsilon);
    let runs: Vec<(usize, Result<(f64, OwlFit)>)> = k_range
        .par_iter()
        .map(|&k| {
            let s = spec.with_k(k);
            let r = owl_fit(&s, data, &cfg, None).and_then(|fit| {
                let c = weighted_criterion(&s, &fit.params, data, fit.weights.as_slice(), penalty)?;
                Ok((c, fit))
            });
            (k, r)
        })
        .collect();
    let mut values = Vec::new();
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    for (k, r) in runs {
        match r {
            Ok((c, fit)) => {
                values.push((k, c));
                fits.push((k, fit));
            }
            Err(e) => warnings.push(format!("k = {k} dropped: {e}")),
        }
    }
    let chosen_k = values
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|v| v.0)
        .ok_or_else(|| OwlError::FitFailed("no component count produced a fit".into()))?;
    Ok(SelectionResult {
        chosen_k,
        values,
        fits,
        warnings,
    })
}

/// Result of [`mixture_selection`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSelection {
    pub chosen_k: usize,
    pub values: Vec<(usize, f64)>,
    /// Best soft-EM fit and its log-likelihood for every `k` that fitted.
    pub fits: Vec<(usize, ModelParams, f64)>,
    pub warnings: Vec<String>,
}

/// Ordinary AIC / BIC, `2κ − 2 Σ_i log Σ_k π_k p_{φ_k}(x_i)`, with each `k`
/// fitted by soft EM from `starts` k-means++ seedings (the highest
/// likelihood is kept).
pub fn mixture_selection(
    spec: &ModelSpec,
    data: &Dataset,
    k_range: &[usize],
    penalty: Penalty,
    starts: usize,
    seed: u64,
) -> Result<MixtureSelection> {
    if !spec.family.is_mixture() {
        return Err(OwlError::InvalidParams("model selection needs a mixture family".into()));
    }
    if k_range.is_empty() || k_range.contains(&0) || starts == 0 {
        return Err(OwlError::InvalidInput(
            "k range must be nonempty and positive, with at least one start".into(),
        ));
    }
    let uniform = WeightVector::uniform(data.n());
    let runs: Vec<(usize, Result<(ModelParams, f64)>)> = k_range
        .par_iter()
        .map(|&k| {
            let s = spec.with_k(k);
            let best = (0..starts as u64)
                .filter_map(|r| {
                    let init = initial_mixture(&s, data, &uniform, &mut stream_rng(seed, r)).ok()?;
                    soft_em_mixture(data, &s, &init, EM_ROUNDS, EM_TOL).ok()
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or_else(|| OwlError::FitFailed(format!("soft EM failed from every start for k = {k}")));
            (k, best)
        })
        .collect();
    let mut values = Vec::new();
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    for (k, r) in runs {
        match r {
            Ok((params, ll)) => {
                let kappa = penalty.kappa(k, spec.component_dim(data.d()), data.n());
                values.push((k, 2.0 * kappa - 2.0 * ll));
                fits.push((k, params, ll));
            }
            Err(e) => warnings.push(format!("k = {k} dropped: {e}")),
        }
    }
    let chosen_k = values
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|v| v.0)
        .ok_or_else(|| OwlError::FitFailed("no component count produced a fit".into()))?;
    Ok(MixtureSelection {
        chosen_k,
        values,
        fits,
        warnings,
    })
}

const EM_ROUNDS: usize = 500;
const EM_TOL: f64 = 1e-10;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalties() {
        assert_eq!(Penalty::Aic.kappa(2, 3, 100), 8.0);
        assert!((Penalty::Bic.kappa(2, 3, 100) - 4.0 * 100f64.ln()).abs() < 1e-12);
    }
}
