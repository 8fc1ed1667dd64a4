use crate::error::{OwlError, Result};
use crate::linalg::floor_covariance;
use crate::types::{
    BernoulliComponent, Covariance, CovarianceKind, Dataset, GaussianComponent, Mixture, ModelParams, WeightVector,
};

use super::{FitDiagnostics, WeightedFit};

/// Bernoulli probabilities are kept inside `[P_CLIP, 1 − P_CLIP]`.
pub const P_CLIP: f64 = 1e-6;

/// Weighted mean and full covariance.
pub fn wmle_gaussian(data: &Dataset, w: &WeightVector) -> Result<WeightedFit> {
    crate::error::check_len(data.n(), w.len(), "weights")?;
    let (component, floored) = fit_gaussian_component(data, w.as_slice(), CovarianceKind::Full, None)?;
    let mut diagnostics = FitDiagnostics::default();
    if floored {
        diagnostics.covariance_floored = true;
        diagnostics
            .warnings
            .push("covariance eigenvalues floored at 1e-10".into());
    }
    Ok(WeightedFit {
        params: ModelParams::Gaussian(component),
        diagnostics,
    })
}

/// Weighted mean of the rows.
pub(crate) fn weighted_mean(data: &Dataset, w: &[f64], idx: Option<&[usize]>) -> Vec<f64> {
    let d = data.d();
    let mut mean = vec![0.0; d];
    let mut total = 0.0;
    let mut add = |i: usize| {
        let wi = w[i];
        if wi > 0.0 {
            total += wi;
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += wi * x;
            }
        }
    };
    match idx {
        Some(ix) => ix.iter().for_each(|&i| add(i)),
        None => (0..data.n()).for_each(&mut add),
    }
    if total > 0.0 {
        mean.iter_mut().for_each(|m| *m /= total);
    }
    mean
}

/// Weighted Gaussian fit over the rows in `idx` (all rows when `None`).
///
/// Returns the component and whether the covariance had to be floored.
pub(crate) fn fit_gaussian_component(
    data: &Dataset,
    w: &[f64],
    kind: CovarianceKind,
    idx: Option<&[usize]>,
) -> Result<(GaussianComponent, bool)> {
    let all: Vec<usize>;
    let rows: &[usize] = match idx {
        Some(ix) => ix,
        None => {
            all = (0..data.n()).collect();
            &all
        }
    };
    let total: f64 = rows.iter().map(|&i| w[i].max(0.0)).sum();
    if !(total > 0.0) {
        return Err(OwlError::FitFailed("no positive weight to fit a Gaussian".into()));
    }
    let d = data.d();
    let mean = weighted_mean(data, w, Some(rows));
    let mut scatter = vec![vec![0.0; d]; d];
    for &i in rows {
        let wi = w[i] / total;
        if wi <= 0.0 {
            continue;
        }
        let x = data.row(i);
        for a in 0..d {
            let da = x[a] - mean[a];
            match kind {
                CovarianceKind::Full => {
                    for b in a..d {
                        scatter[a][b] += wi * da * (x[b] - mean[b]);
                    }
                }
                _ => scatter[a][a] += wi * da * da,
            }
        }
    }
    let covariance = match kind {
        CovarianceKind::Spherical => Covariance::Spherical((0..d).map(|a| scatter[a][a]).sum::<f64>() / d as f64),
        CovarianceKind::Diagonal => Covariance::Diagonal((0..d).map(|a| scatter[a][a]).collect()),
        CovarianceKind::Full => {
            for a in 0..d {
                for b in 0..a {
                    scatter[a][b] = scatter[b][a];
                }
            }
            Covariance::Full(scatter)
        }
    };
    let (covariance, floored) = floor_covariance(covariance);
    Ok((GaussianComponent { mean, covariance }, floored))
}

/// Weighted per-coordinate success probabilities, clipped away from 0 and 1.
pub fn wmle_bernoulli_product(data: &Dataset, w: &WeightVector) -> Result<WeightedFit> {
    crate::error::check_len(data.n(), w.len(), "weights")?;
    if !data.is_binary() {
        return Err(OwlError::Data("Bernoulli data must be binary".into()));
    }
    let probs = fit_bernoulli_component(data, w.as_slice(), None)?;
    Ok(WeightedFit {
        params: ModelParams::BernoulliMixture(Mixture {
            weights: vec![1.0],
            components: vec![probs],
            assignments: None,
        }),
        diagnostics: FitDiagnostics::default(),
    })
}

pub(crate) fn fit_bernoulli_component(data: &Dataset, w: &[f64], idx: Option<&[usize]>) -> Result<BernoulliComponent> {
    let total: f64 = match idx {
        Some(ix) => ix.iter().map(|&i| w[i].max(0.0)).sum(),
        None => w.iter().map(|v| v.max(0.0)).sum(),
    };
    if !(total > 0.0) {
        return Err(OwlError::FitFailed(
            "no positive weight to fit Bernoulli probabilities".into(),
        ));
    }
    let probs = weighted_mean(data, w, idx)
        .into_iter()
        .map(|p| p.clamp(P_CLIP, 1.0 - P_CLIP))
        .collect();
    Ok(BernoulliComponent { probs })
}
