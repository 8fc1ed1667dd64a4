//! Weighted hard EM for Gaussian and Bernoulli-product mixtures.

use rand::Rng;

use crate::density::{component_log_densities, observation_logliks};
use crate::error::{OwlError, Result};
use crate::types::{
    BernoulliComponent, CovarianceKind, Dataset, Family, GaussianComponent, Mixture, ModelParams, ModelSpec,
    WeightVector,
};

use super::gaussian::{fit_bernoulli_component, fit_gaussian_component, P_CLIP};
use super::{FitDiagnostics, WeightedFit};

enum Components {
    Gaussian(Vec<GaussianComponent>, CovarianceKind),
    Bernoulli(Vec<BernoulliComponent>),
}

impl Components {
    fn from_params(spec: &ModelSpec, params: &ModelParams) -> Result<Self> {
        match (spec.family, params) {
            (Family::GaussianMixture(kind), ModelParams::GaussianMixture(m)) => {
                Ok(Self::Gaussian(m.components.clone(), kind))
            }
            (Family::BernoulliProductMixture, ModelParams::BernoulliMixture(m)) => {
                Ok(Self::Bernoulli(m.components.clone()))
            }
            _ => Err(OwlError::InvalidParams(
                "hard EM needs mixture parameters matching the model".into(),
            )),
        }
    }

    fn into_params(self, pi: Vec<f64>, z: Vec<usize>) -> ModelParams {
        match self {
            Self::Gaussian(c, _) => ModelParams::GaussianMixture(Mixture {
                weights: pi,
                components: c,
                assignments: Some(z),
            }),
            Self::Bernoulli(c) => ModelParams::BernoulliMixture(Mixture {
                weights: pi,
                components: c,
                assignments: Some(z),
            }),
        }
    }
}

/// Mixing weights equal to the weighted share of each component's members.
fn mixing_weights(z: &[usize], w: &[f64], k: usize) -> Vec<f64> {
    let mut pi = vec![0.0; k];
    for (&zi, &wi) in z.iter().zip(w) {
        pi[zi] += wi;
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    pi
}

/// `argmax_k log p_{φ_k}(x_i)`, ties to the lowest `k`.
fn assign(spec: &ModelSpec, params: &ModelParams, data: &Dataset) -> Result<(Vec<usize>, Vec<f64>)> {
    let dens = component_log_densities(spec, &strip(params), data)?;
    Ok(dens
        .iter()
        .map(|row| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            (best, row[best])
        })
        .unzip())
}

/// Same parameters with uniform mixing weights and no assignments, so that
/// component densities can be evaluated even when some `π_k` is zero.
fn strip(params: &ModelParams) -> ModelParams {
    match params {
        ModelParams::GaussianMixture(m) => ModelParams::GaussianMixture(Mixture {
            weights: vec![1.0 / m.k() as f64; m.k()],
            components: m.components.clone(),
            assignments: None,
        }),
        ModelParams::BernoulliMixture(m) => ModelParams::BernoulliMixture(Mixture {
            weights: vec![1.0 / m.k() as f64; m.k()],
            components: m.components.clone(),
            assignments: None,
        }),
        other => other.clone(),
    }
}

/// `Σ w_i log p_{φ_{z_i}}(x_i)`.
fn complete_loglik(spec: &ModelSpec, params: &ModelParams, data: &Dataset, w: &[f64]) -> Result<f64> {
    let ll = observation_logliks(spec, params, data)?;
    Ok(ll.iter().zip(w).map(|(l, wi)| wi * l).sum())
}

/// Alternates component refits on the current assignments with reassignment of
/// every point to its most likely component, until the assignments repeat or
/// `max_rounds` is reached.
///
/// A component left without positively weighted members is reseeded at the
/// positively weighted point that the current model fits worst (covariance
/// from the pooled data) and reported in the diagnostics.
pub fn wmle_mixture_hard_em(
    data: &Dataset,
    w: &WeightVector,
    spec: &ModelSpec,
    init: &ModelParams,
    max_rounds: usize,
) -> Result<WeightedFit> {
    crate::error::check_len(data.n(), w.len(), "weights")?;
    spec.validate()?;
    if !spec.family.is_mixture() {
        return Err(OwlError::InvalidParams("hard EM needs a mixture family".into()));
    }
    if spec.family == Family::BernoulliProductMixture && !data.is_binary() {
        return Err(OwlError::Data("Bernoulli data must be binary".into()));
    }
    let k = spec.k;
    let wn = w.as_slice();
    let mut comps = Components::from_params(spec, init)?;
    let mut diagnostics = FitDiagnostics::default();

    let mut z = match init.assignments() {
        Some(z) if z.len() == data.n() && z.iter().all(|&c| c < k) => z.to_vec(),
        _ => assign(spec, init, data)?.0,
    };
    let init_params = comps_clone(&comps).into_params(mixing_weights(&z, wn, k), z.clone());
    let init_score = complete_loglik(spec, &init_params, data, wn)?;

    let mut rounds = 0;
    let mut stable = false;
    while rounds < max_rounds.max(1) {
        rounds += 1;
        refit_components(data, wn, &z, k, &mut comps, &mut diagnostics)?;
        let params = comps_clone(&comps).into_params(vec![1.0 / k as f64; k], z.clone());
        let (z_new, _) = assign(spec, &params, data)?;
        if z_new == z {
            stable = true;
            break;
        }
        z = z_new;
    }
    diagnostics.rounds = rounds;
    diagnostics.converged = stable;
    if !stable {
        diagnostics
            .warnings
            .push(format!("assignments still changing after {rounds} rounds"));
    }
    let pi = mixing_weights(&z, wn, k);
    let params = comps.into_params(pi, z);
    let score = complete_loglik(spec, &params, data, wn)?;
    if score < init_score {
        diagnostics
            .warnings
            .push("hard EM did not improve on its starting point; keeping the start".into());
        return Ok(WeightedFit {
            params: init_params,
            diagnostics,
        });
    }
    Ok(WeightedFit { params, diagnostics })
}

/// Attaches hard assignments (`argmax_k log p_{φ_k}(x_i)`) to mixture
/// parameters that lack them; other parameters are returned unchanged.
pub fn with_assignments(spec: &ModelSpec, params: &ModelParams, data: &Dataset) -> Result<ModelParams> {
    if !spec.family.is_mixture() || params.assignments().is_some_and(|z| z.len() == data.n()) {
        return Ok(params.clone());
    }
    let (z, _) = assign(spec, params, data)?;
    Ok(match params {
        ModelParams::GaussianMixture(m) => ModelParams::GaussianMixture(Mixture {
            assignments: Some(z),
            ..m.clone()
        }),
        ModelParams::BernoulliMixture(m) => ModelParams::BernoulliMixture(Mixture {
            assignments: Some(z),
            ..m.clone()
        }),
        other => other.clone(),
    })
}

fn comps_clone(c: &Components) -> Components {
    match c {
        Components::Gaussian(v, kind) => Components::Gaussian(v.clone(), *kind),
        Components::Bernoulli(v) => Components::Bernoulli(v.clone()),
    }
}

fn refit_components(
    data: &Dataset,
    w: &[f64],
    z: &[usize],
    k: usize,
    comps: &mut Components,
    diagnostics: &mut FitDiagnostics,
) -> Result<()> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in z.iter().enumerate() {
        if w[i] > 0.0 {
            members[c].push(i);
        }
    }
    let mut taken: Vec<usize> = Vec::new();
    for c in 0..k {
        if !members[c].is_empty() {
            match comps {
                Components::Gaussian(v, kind) => {
                    let (g, floored) = fit_gaussian_component(data, w, *kind, Some(&members[c]))?;
                    diagnostics.covariance_floored |= floored;
                    v[c] = g;
                }
                Components::Bernoulli(v) => {
                    v[c] = fit_bernoulli_component(data, w, Some(&members[c]))?;
                }
            }
            continue;
        }
        let i = worst_fit_point(data, w, comps, &taken)?;
        taken.push(i);
        match comps {
            Components::Gaussian(v, kind) => {
                let (pooled, _) = fit_gaussian_component(data, w, *kind, None)?;
                v[c] = GaussianComponent {
                    mean: data.row(i).to_vec(),
                    covariance: pooled.covariance,
                };
            }
            Components::Bernoulli(v) => {
                v[c] = BernoulliComponent {
                    probs: data.row(i).iter().map(|x| x.clamp(P_CLIP, 1.0 - P_CLIP)).collect(),
                };
            }
        }
        if !diagnostics.reseeded_components.contains(&c) {
            diagnostics.reseeded_components.push(c);
        }
        diagnostics
            .warnings
            .push(format!("component {c} lost all members and was reseeded"));
    }
    Ok(())
}

/// Positively weighted point with the lowest best-component log-density.
fn worst_fit_point(data: &Dataset, w: &[f64], comps: &Components, taken: &[usize]) -> Result<usize> {
    let (spec, params) = match comps {
        Components::Gaussian(v, kind) => (
            ModelSpec::gaussian_mixture(*kind, v.len()),
            ModelParams::GaussianMixture(Mixture {
                weights: vec![1.0 / v.len() as f64; v.len()],
                components: v.clone(),
                assignments: None,
            }),
        ),
        Components::Bernoulli(v) => (
            ModelSpec::bernoulli_mixture(v.len()),
            ModelParams::BernoulliMixture(Mixture {
                weights: vec![1.0 / v.len() as f64; v.len()],
                components: v.clone(),
                assignments: None,
            }),
        ),
    };
    let (_, best) = assign(&spec, &params, data)?;
    (0..data.n())
        .filter(|&i| w[i] > 0.0 && !taken.contains(&i))
        .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
        .ok_or_else(|| OwlError::FitFailed("no point available to reseed an empty component".into()))
}

/// k-means++ seeding (weighted by `w`) followed by one nearest-center
/// assignment and a component fit per cluster.
pub fn initial_mixture<R: Rng + ?Sized>(
    spec: &ModelSpec,
    data: &Dataset,
    w: &WeightVector,
    rng: &mut R,
) -> Result<ModelParams> {
    crate::error::check_len(data.n(), w.len(), "weights")?;
    spec.validate()?;
    let k = spec.k;
    let wn = w.as_slice();
    let centers = kmeans_pp(data, wn, k, rng)?;
    let z: Vec<usize> = (0..data.n())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(data.row(i), data.row(*center));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect();

    let mut comps = match spec.family {
        Family::GaussianMixture(kind) => {
            let (pooled, _) = fit_gaussian_component(data, wn, kind, None)?;
            Components::Gaussian(
                centers
                    .iter()
                    .map(|&c| GaussianComponent {
                        mean: data.row(c).to_vec(),
                        covariance: pooled.covariance.clone(),
                    })
                    .collect(),
                kind,
            )
        }
        Family::BernoulliProductMixture => {
            if !data.is_binary() {
                return Err(OwlError::Data("Bernoulli data must be binary".into()));
            }
            Components::Bernoulli(
                centers
                    .iter()
                    .map(|&c| BernoulliComponent {
                        probs: data.row(c).iter().map(|x| x.clamp(P_CLIP, 1.0 - P_CLIP)).collect(),
                    })
                    .collect(),
            )
        }
        f => return Err(OwlError::InvalidParams(format!("{f:?} is not a mixture family"))),
    };
    let mut diag = FitDiagnostics::default();
    refit_components(data, wn, &z, k, &mut comps, &mut diag)?;
    let pi = mixing_weights(&z, wn, k);
    Ok(comps.into_params(pi, z))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<R: Rng + ?Sized>(data: &Dataset, w: &[f64], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = data.n();
    let positive = w.iter().filter(|&&v| v > 0.0).count();
    if positive < k {
        return Err(OwlError::FitFailed(format!(
            "{positive} positively weighted points cannot seed {k} components"
        )));
    }
    let mut centers = vec![sample_index(w, rng)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), data.row(centers[0]))).collect();
    while centers.len() < k {
        let scores: Vec<f64> = (0..n)
            .map(|i| if centers.contains(&i) { 0.0 } else { w[i] * d2[i] })
            .collect();
        let next = if scores.iter().sum::<f64>() > 0.0 {
            sample_index(&scores, rng)
        } else {
            // All remaining mass sits on existing centers: pick any unused point.
            let free: Vec<usize> = (0..n).filter(|i| !centers.contains(i) && w[*i] > 0.0).collect();
            free[rng.random_range(0..free.len())]
        };
        centers.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(data.row(i), data.row(next)));
        }
    }
    Ok(centers)
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > 0.0 {
            last = i;
            if u < v {
                return i;
            }
            u -= v;
        }
    }
    last
}

/// Standard (soft) EM for the unweighted mixture likelihood, started from
/// `init`. Stops when the log-likelihood gains less than `tol · max(1, |ℓ|)`
/// or after `max_rounds`. Returns the parameters (without assignments) and
/// `Σ_i log Σ_k π_k p_{φ_k}(x_i)`.
pub fn soft_em_mixture(
    data: &Dataset,
    spec: &ModelSpec,
    init: &ModelParams,
    max_rounds: usize,
    tol: f64,
) -> Result<(ModelParams, f64)> {
    spec.validate()?;
    let mut comps = Components::from_params(spec, init)?;
    let mut pi = match init {
        ModelParams::GaussianMixture(m) => m.weights.clone(),
        ModelParams::BernoulliMixture(m) => m.weights.clone(),
        _ => unreachable!("checked by from_params"),
    };
    let k = pi.len();
    let n = data.n();
    let mut params = comps_clone(&comps).into_params(pi.clone(), Vec::new());
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..max_rounds {
        let dens = component_log_densities(spec, &strip(&params), data)?;
        let mut resp = vec![vec![0.0; n]; k];
        let mut ll = 0.0;
        for (i, row) in dens.iter().enumerate() {
            let terms: Vec<f64> = row.iter().zip(&pi).map(|(d, p)| d + p.ln()).collect();
            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
            ll += lse;
            for c in 0..k {
                resp[c][i] = (terms[c] - lse).exp();
            }
        }
        if ll - prev <= tol * ll.abs().max(1.0) {
            break;
        }
        prev = ll;
        for c in 0..k {
            let mass: f64 = resp[c].iter().sum();
            pi[c] = mass / n as f64;
            if mass <= 1e-10 {
                continue;
            }
            match &mut comps {
                Components::Gaussian(v, kind) => v[c] = fit_gaussian_component(data, &resp[c], *kind, None)?.0,
                Components::Bernoulli(v) => v[c] = fit_bernoulli_component(data, &resp[c], None)?,
            }
        }
        params = comps_clone(&comps).into_params(pi.clone(), Vec::new());
    }
    let params = match params {
        ModelParams::GaussianMixture(mut m) => {
            m.assignments = None;
            ModelParams::GaussianMixture(m)
        }
        ModelParams::BernoulliMixture(mut m) => {
            m.assignments = None;
            ModelParams::BernoulliMixture(m)
        }
        other => other,
    };
    let ll = crate::density::log_likelihoods(spec, &params, data)?.iter().sum();
    Ok((params, ll))
}
