//! Log-density evaluation for every supported family.

use crate::error::{OwlError, Result};
use crate::linalg::{log_sum_exp, softplus, MvnEval};
use crate::types::{BernoulliComponent, Dataset, Family, GaussianComponent, Mixture, ModelParams, ModelSpec};

/// Value returned in place of log-densities that underflow.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn floored(v: f64) -> f64 {
    // `f64::max` also maps NaN to the floor.
    v.max(LOG_DENSITY_FLOOR)
}

/// Prepared evaluator for one parameter value; cheap to call per observation.
#[derive(Debug, Clone)]
pub struct DensityEval {
    d: usize,
    kind: EvalKind,
}

#[derive(Debug, Clone)]
enum EvalKind {
    Gaussian(MvnEval),
    Linear {
        intercept: f64,
        coef: Vec<f64>,
        sigma: f64,
    },
    Logistic {
        intercept: f64,
        coef: Vec<f64>,
    },
    Bernoulli {
        log_pi: Vec<f64>,
        /// Per component: `(ln λ_j, ln(1 − λ_j))`.
        tables: Vec<Vec<(f64, f64)>>,
    },
    GaussianMixture {
        log_pi: Vec<f64>,
        comps: Vec<MvnEval>,
    },
}

impl DensityEval {
    pub fn new(spec: &ModelSpec, params: &ModelParams, d: usize) -> Result<Self> {
        spec.validate()?;
        let kind = match (spec.family, params) {
            (Family::MultivariateNormal, ModelParams::Gaussian(g)) => {
                check_dim(g.mean.len(), d)?;
                EvalKind::Gaussian(MvnEval::new(g)?)
            }
            (Family::LinearRegression, ModelParams::LinearRegression(p)) => {
                check_dim(p.coef.len(), d)?;
                if !(p.sigma > 0.0) || !p.sigma.is_finite() {
                    return Err(OwlError::InvalidParams("sigma must be positive".into()));
                }
                check_finite(p.intercept, &p.coef)?;
                EvalKind::Linear {
                    intercept: p.intercept,
                    coef: p.coef.clone(),
                    sigma: p.sigma,
                }
            }
            (Family::LogisticRegression, ModelParams::LogisticRegression(p)) => {
                check_dim(p.coef.len(), d)?;
                check_finite(p.intercept, &p.coef)?;
                EvalKind::Logistic {
                    intercept: p.intercept,
                    coef: p.coef.clone(),
                }
            }
            (Family::BernoulliProductMixture, ModelParams::BernoulliMixture(m)) => {
                let log_pi = mixture_log_weights(m, spec.k)?;
                let tables = m
                    .components
                    .iter()
                    .map(|c| bernoulli_table(c, d))
                    .collect::<Result<_>>()?;
                EvalKind::Bernoulli { log_pi, tables }
            }
            (Family::GaussianMixture(kind), ModelParams::GaussianMixture(m)) => {
                let log_pi = mixture_log_weights(m, spec.k)?;
                let comps = m
                    .components
                    .iter()
                    .map(|c| {
                        check_dim(c.mean.len(), d)?;
                        if c.covariance.kind() != kind {
                            return Err(OwlError::InvalidParams(format!(
                                "component covariance is {:?}, model expects {kind:?}",
                                c.covariance.kind()
                            )));
                        }
                        MvnEval::new(c)
                    })
                    .collect::<Result<_>>()?;
                EvalKind::GaussianMixture { log_pi, comps }
            }
            (family, _) => {
                return Err(OwlError::InvalidParams(format!(
                    "parameters do not match model family {family:?}"
                )))
            }
        };
        Ok(Self { d, kind })
    }

    /// Number of mixture components (1 for non-mixtures).
    pub fn k(&self) -> usize {
        match &self.kind {
            EvalKind::Bernoulli { log_pi, .. } | EvalKind::GaussianMixture { log_pi, .. } => log_pi.len(),
            _ => 1,
        }
    }

    fn check_point(&self, x: &[f64], y: Option<f64>) -> Result<()> {
        check_dim(x.len(), self.d)?;
        let regression = matches!(self.kind, EvalKind::Linear { .. } | EvalKind::Logistic { .. });
        match (regression, y) {
            (true, None) => Err(OwlError::InvalidInput(
                "regression families need a response value".into(),
            )),
            (false, Some(_)) => Err(OwlError::InvalidInput(
                "a response value was given to an unconditional family".into(),
            )),
            (true, Some(v)) if matches!(self.kind, EvalKind::Logistic { .. }) && v != 0.0 && v != 1.0 => {
                Err(OwlError::Data(format!("logistic response {v} is not 0 or 1")))
            }
            _ => {
                if matches!(self.kind, EvalKind::Bernoulli { .. }) && x.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(OwlError::Data("Bernoulli data must be binary".into()));
                }
                Ok(())
            }
        }
    }

    /// Unfloored log-density of component `k` (ignores mixing weights).
    fn component_raw(&self, k: usize, x: &[f64], y: Option<f64>) -> f64 {
        match &self.kind {
            EvalKind::Gaussian(g) => g.log_pdf(x),
            EvalKind::Linear { intercept, coef, sigma } => {
                let r = y.unwrap_or(0.0) - intercept - dot(coef, x);
                -0.5 * LN_2PI - sigma.ln() - 0.5 * (r / sigma).powi(2)
            }
            EvalKind::Logistic { intercept, coef } => {
                let eta = intercept + dot(coef, x);
                y.unwrap_or(0.0) * eta - softplus(eta)
            }
            EvalKind::Bernoulli { tables, .. } => tables[k]
                .iter()
                .zip(x)
                .map(|(&(l1, l0), &v)| if v == 1.0 { l1 } else { l0 })
                .sum(),
            EvalKind::GaussianMixture { comps, .. } => comps[k].log_pdf(x),
        }
    }

    /// Floored log-density of component `k` without its mixing weight.
    pub fn component(&self, k: usize, x: &[f64], y: Option<f64>) -> f64 {
        floored(self.component_raw(k, x, y))
    }

    /// Floored log-density of the full model at `(x, y)`.
    pub fn eval(&self, x: &[f64], y: Option<f64>) -> Result<f64> {
        self.check_point(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    fn eval_unchecked(&self, x: &[f64], y: Option<f64>) -> f64 {
        match &self.kind {
            EvalKind::Bernoulli { log_pi, .. } | EvalKind::GaussianMixture { log_pi, .. } => {
                if log_pi.len() == 1 {
                    return floored(self.component_raw(0, x, y));
                }
                let terms: Vec<f64> = log_pi
                    .iter()
                    .enumerate()
                    .map(|(k, lp)| lp + self.component_raw(k, x, y))
                    .collect();
                floored(log_sum_exp(&terms))
            }
            _ => floored(self.component_raw(0, x, y)),
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        check_dim(data.d(), self.d)?;
        let y = data.response();
        for i in 0..data.n() {
            self.check_point(data.row(i), y.map(|y| y[i]))?;
        }
        Ok(())
    }
}

/// Log-density (or conditional log-likelihood for regression families) of one point.
pub fn log_density(spec: &ModelSpec, params: &ModelParams, x: &[f64], y: Option<f64>) -> Result<f64> {
    DensityEval::new(spec, params, x.len())?.eval(x, y)
}

/// Floored model log-density of every row of `data`.
pub fn log_likelihoods(spec: &ModelSpec, params: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    let eval = DensityEval::new(spec, params, data.d())?;
    eval.check_data(data)?;
    let y = data.response();
    Ok((0..data.n())
        .map(|i| eval.eval_unchecked(data.row(i), y.map(|y| y[i])))
        .collect())
}

/// Floored per-component log-densities, `out[i][k]`, without mixing weights.
pub fn component_log_densities(spec: &ModelSpec, params: &ModelParams, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let eval = DensityEval::new(spec, params, data.d())?;
    eval.check_data(data)?;
    let y = data.response();
    Ok((0..data.n())
        .map(|i| {
            (0..eval.k())
                .map(|k| eval.component(k, data.row(i), y.map(|y| y[i])))
                .collect()
        })
        .collect())
}

/// Per-observation log-likelihood used by the re-weighting step.
///
/// Mixtures carrying hard assignments are treated as models on the augmented
/// parameter `(φ, z)`: observation `i` contributes `log p_{φ_{z_i}}(x_i)`.
/// Everything else uses the model log-density.
pub fn observation_logliks(spec: &ModelSpec, params: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    match params.assignments() {
        Some(z) => {
            if z.len() != data.n() {
                return Err(OwlError::Dimension {
                    expected: data.n(),
                    got: z.len(),
                    context: "mixture assignments",
                });
            }
            let eval = DensityEval::new(spec, params, data.d())?;
            eval.check_data(data)?;
            if let Some(&bad) = z.iter().find(|&&k| k >= eval.k()) {
                return Err(OwlError::InvalidParams(format!(
                    "assignment {bad} exceeds component count"
                )));
            }
            Ok(z.iter()
                .enumerate()
                .map(|(i, &k)| eval.component(k, data.row(i), None))
                .collect())
        }
        None => log_likelihoods(spec, params, data),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(OwlError::Dimension {
            expected,
            got,
            context: "parameter/data dimension",
        });
    }
    Ok(())
}

fn check_finite(intercept: f64, coef: &[f64]) -> Result<()> {
    if !intercept.is_finite() || coef.iter().any(|v| !v.is_finite()) {
        return Err(OwlError::InvalidParams("non-finite regression coefficients".into()));
    }
    Ok(())
}

fn mixture_log_weights<C>(m: &Mixture<C>, k: usize) -> Result<Vec<f64>> {
    if m.components.len() != k || m.weights.len() != k {
        return Err(OwlError::InvalidParams(format!(
            "mixture has {} components and {} weights, model expects {k}",
            m.components.len(),
            m.weights.len()
        )));
    }
    if m.weights.iter().any(|&p| !(p >= 0.0)) || (m.weights.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(OwlError::InvalidParams(
            "mixing weights must be nonnegative and sum to 1".into(),
        ));
    }
    Ok(m.weights.iter().map(|p| p.ln()).collect())
}

fn bernoulli_table(c: &BernoulliComponent, d: usize) -> Result<Vec<(f64, f64)>> {
    check_dim(c.probs.len(), d)?;
    if c.probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(OwlError::InvalidParams(
            "Bernoulli probabilities must lie in [0, 1]".into(),
        ));
    }
    Ok(c.probs.iter().map(|&p| (p.ln(), (-p).ln_1p())).collect())
}

/// Convenience constructor used by tests and examples.
pub fn gaussian_1d(mean: f64, var: f64) -> GaussianComponent {
    GaussianComponent {
        mean: vec![mean],
        covariance: crate::types::Covariance::Spherical(var),
    }
}
