//! Corruption simulations and the outlier-stratified bootstrap.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::log_likelihoods;
use crate::engine::{owl_fit, tune_epsilon, OwlConfig};
use crate::error::{OwlError, Result};
use crate::linalg::sigmoid;
use crate::models::{wmle, wmle_linear_regression, WmleOptions};
use crate::rng::stream_rng;
use crate::types::{
    BernoulliComponent, Covariance, CovarianceKind, Dataset, GaussianComponent, LinearParams, LogisticParams, Mixture,
    ModelParams, ModelSpec, WeightVector,
};

/// Which observations get corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// The points with the highest likelihood under the MLE of the clean data.
    MaxLikelihood,
    Random,
}

/// How a selected observation is corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scheme {
    /// Every coordinate redrawn uniformly from `[lo, hi]`.
    UniformBox { lo: f64, hi: f64 },
    /// Response set to `±multiplier · max|y|`, with the sign of the
    /// least-squares residual.
    ResponseExtreme { multiplier: f64 },
    /// A random `coord_fraction` of the coordinates set to `±value`.
    CoordinateSpike { value: f64, coord_fraction: f64 },
    /// Each zero coordinate flipped to one with probability `prob`.
    BitFlipZeros { prob: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub fraction: f64,
    pub selector: Selector,
    pub scheme: Scheme,
    pub seed: u64,
}

impl CorruptionPlan {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fraction) {
            return Err(OwlError::InvalidParams("corruption fraction must lie in [0, 1)".into()));
        }
        let ok = match self.scheme {
            Scheme::UniformBox { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Scheme::ResponseExtreme { multiplier } => multiplier.is_finite(),
            Scheme::CoordinateSpike { value, coord_fraction } => {
                value.is_finite() && coord_fraction > 0.0 && coord_fraction <= 1.0
            }
            Scheme::BitFlipZeros { prob } => (0.0..=1.0).contains(&prob),
        };
        if !ok {
            return Err(OwlError::InvalidParams(format!(
                "invalid corruption scheme {:?}",
                self.scheme
            )));
        }
        Ok(())
    }

    /// `⌈fraction · n⌉`.
    pub fn count(&self, n: usize) -> usize {
        ((self.fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Corrupts `⌈fraction · n⌉` rows of `data`. Returns the new data and the
/// sorted indices of the corrupted rows.
pub fn corrupt(data: &Dataset, plan: &CorruptionPlan, spec: &ModelSpec) -> Result<(Dataset, Vec<usize>)> {
    plan.validate()?;
    let n = data.n();
    let d = data.d();
    match plan.scheme {
        Scheme::ResponseExtreme { .. } if data.response().is_none() => {
            return Err(OwlError::Data("response corruption needs a response column".into()))
        }
        Scheme::BitFlipZeros { .. } if !data.is_binary() => {
            return Err(OwlError::Data("bit flips need binary data".into()))
        }
        _ => {}
    }
    let count = plan.count(n);
    if count == 0 {
        return Ok((data.clone(), Vec::new()));
    }
    let mut rng = stream_rng(plan.seed, 0);
    let mut idx: Vec<usize> = match plan.selector {
        Selector::Random => sample(&mut rng, n, count).into_vec(),
        Selector::MaxLikelihood => {
            let opts = WmleOptions {
                seed: plan.seed,
                ..WmleOptions::default()
            };
            let fit = wmle(spec, data, &WeightVector::uniform(n), None, opts)?;
            let ll = log_likelihoods(spec, &fit.params, data)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| ll[b].total_cmp(&ll[a]).then(a.cmp(&b)));
            order.truncate(count);
            order
        }
    };
    idx.sort_unstable();

    let mut points = data.points().to_vec();
    let mut response = data.response().map(<[f64]>::to_vec);
    match plan.scheme {
        Scheme::UniformBox { lo, hi } => {
            for &i in &idx {
                for v in &mut points[i * d..(i + 1) * d] {
                    *v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                }
            }
        }
        Scheme::ResponseExtreme { multiplier } => {
            let y = response.as_mut().expect("checked above");
            let v = y.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let signs = residual_signs(data)?;
            for &i in &idx {
                y[i] = multiplier * v * signs[i];
            }
        }
        Scheme::CoordinateSpike { value, coord_fraction } => {
            let m = ((coord_fraction * d as f64) - 1e-9).ceil().max(1.0) as usize;
            for &i in &idx {
                for j in sample(&mut rng, d, m.min(d)) {
                    points[i * d + j] = if rng.random::<bool>() { value } else { -value };
                }
            }
        }
        Scheme::BitFlipZeros { prob } => {
            for &i in &idx {
                for v in &mut points[i * d..(i + 1) * d] {
                    if *v == 0.0 && rng.random::<f64>() < prob {
                        *v = 1.0;
                    }
                }
            }
        }
    }
    Ok((Dataset::new(points, d, response)?, idx))
}

/// Signs of the least-squares residuals (`+1` for zero residuals).
fn residual_signs(data: &Dataset) -> Result<Vec<f64>> {
    let y = data.response().expect("caller checks for a response");
    let fitted: Vec<f64> = match wmle_linear_regression(data, &WeightVector::uniform(data.n()), 0.0) {
        Ok(fit) => match fit.params {
            ModelParams::LinearRegression(lp) => data
                .rows()
                .map(|x| lp.intercept + x.iter().zip(&lp.coef).map(|(a, b)| a * b).sum::<f64>())
                .collect(),
            _ => unreachable!("linear fit returns linear parameters"),
        },
        Err(_) => {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            vec![mean; y.len()]
        }
    };
    Ok(y.iter()
        .zip(fitted)
        .map(|(yi, f)| if yi - f >= 0.0 { 1.0 } else { -1.0 })
        .collect())
}

/// Simulation settings with known ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "id")]
pub enum Scenario {
    /// Spherical normal with mean uniform on `[−10, 10]^d`; corrupted rows
    /// redrawn from the same box. Metric: `‖μ̂ − μ‖² / d`.
    GaussianMean { n: usize, d: usize },
    /// Standard normal covariates, coefficients `N(0, 4)`, zero intercept,
    /// noise sd ¼. Metric: test MSE of the mean response.
    LinearRegression { n: usize, d: usize },
    /// Same design with Bernoulli labels; covariates of corrupted rows are
    /// spiked. Metric: test accuracy against `1{⟨β, x⟩ ≥ 0}`.
    LogisticRegression { n: usize, d: usize },
    /// `k` spherical components, means `N(0, 4)`, sd ½, equal weights;
    /// half of a corrupted row's coordinates set to ±5. Metric: mean squared
    /// distance between matched means.
    GaussianMixture { n: usize, d: usize, k: usize },
    /// `k` Bernoulli products with `Beta(0.1, 0.1)` probabilities; corrupted
    /// rows have zeros flipped with probability ½. Metric: mean absolute
    /// difference between matched probability vectors.
    BernoulliMixture { n: usize, d: usize, k: usize },
}

/// Generated data with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub truth: ModelParams,
}

impl Scenario {
    pub const IDS: [&'static str; 5] = [
        "gaussian_mean",
        "linear_regression",
        "logistic_regression",
        "gaussian_mixture",
        "bernoulli_mixture",
    ];

    /// Default-sized scenario for an id in [`Scenario::IDS`].
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "gaussian_mean" => Scenario::GaussianMean { n: 200, d: 5 },
            "linear_regression" => Scenario::LinearRegression { n: 1000, d: 10 },
            "logistic_regression" => Scenario::LogisticRegression { n: 1000, d: 10 },
            "gaussian_mixture" => Scenario::GaussianMixture { n: 1000, d: 10, k: 3 },
            "bernoulli_mixture" => Scenario::BernoulliMixture { n: 1000, d: 100, k: 3 },
            other => {
                return Err(OwlError::InvalidInput(format!(
                    "unknown scenario {other:?}; expected one of {:?}",
                    Self::IDS
                )))
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Scenario::GaussianMean { .. } => "gaussian_mean",
            Scenario::LinearRegression { .. } => "linear_regression",
            Scenario::LogisticRegression { .. } => "logistic_regression",
            Scenario::GaussianMixture { .. } => "gaussian_mixture",
            Scenario::BernoulliMixture { .. } => "bernoulli_mixture",
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match *self {
            Scenario::GaussianMean { .. } => ModelSpec::gaussian(),
            Scenario::LinearRegression { .. } => ModelSpec::linear_regression(),
            Scenario::LogisticRegression { .. } => ModelSpec::logistic_regression(0.0),
            Scenario::GaussianMixture { k, .. } => ModelSpec::gaussian_mixture(CovarianceKind::Spherical, k),
            Scenario::BernoulliMixture { k, .. } => ModelSpec::bernoulli_mixture(k),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            Scenario::GaussianMean { .. } => Scheme::UniformBox { lo: -10.0, hi: 10.0 },
            Scenario::LinearRegression { .. } => Scheme::ResponseExtreme { multiplier: 3.0 },
            Scenario::LogisticRegression { .. } | Scenario::GaussianMixture { .. } => Scheme::CoordinateSpike {
                value: 5.0,
                coord_fraction: 0.5,
            },
            Scenario::BernoulliMixture { .. } => Scheme::BitFlipZeros { prob: 0.5 },
        }
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            Scenario::GaussianMean { .. } => "mean_mse",
            Scenario::LinearRegression { .. } => "test_mse",
            Scenario::LogisticRegression { .. } => "test_accuracy",
            Scenario::GaussianMixture { .. } => "mean_sq_distance",
            Scenario::BernoulliMixture { .. } => "mean_abs_difference",
        }
    }

    /// Ground truth and samples drawn from `seed`.
    pub fn generate(&self, seed: u64) -> Result<ScenarioData> {
        let mut rng = stream_rng(seed, 0);
        let normal = |rng: &mut rand_chacha::ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
        match *self {
            Scenario::GaussianMean { n, d } => {
                let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..=10.0)).collect();
                let pts: Vec<f64> = (0..n * d).map(|i| mean[i % d] + normal(&mut rng)).collect();
                Ok(ScenarioData {
                    train: Dataset::new(pts, d, None)?,
                    test: None,
                    truth: ModelParams::Gaussian(GaussianComponent {
                        mean,
                        covariance: Covariance::Spherical(1.0),
                    }),
                })
            }
            Scenario::LinearRegression { n, d } | Scenario::LogisticRegression { n, d } => {
                let coef: Vec<f64> = (0..d).map(|_| 2.0 * normal(&mut rng)).collect();
                let linear = matches!(self, Scenario::LinearRegression { .. });
                let draw = |m: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Dataset> {
                    let pts: Vec<f64> = (0..m * d).map(|_| normal(rng)).collect();
                    let y: Vec<f64> = pts
                        .chunks_exact(d)
                        .map(|x| {
                            let eta: f64 = x.iter().zip(&coef).map(|(a, b)| a * b).sum();
                            if linear {
                                eta + 0.25 * normal(rng)
                            } else {
                                f64::from(rng.random::<f64>() < sigmoid(eta))
                            }
                        })
                        .collect();
                    Dataset::new(pts, d, Some(y))
                };
                let train = draw(n, &mut rng)?;
                let test = draw(1000, &mut rng)?;
                let truth = if linear {
                    ModelParams::LinearRegression(LinearParams {
                        intercept: 0.0,
                        coef,
                        sigma: 0.25,
                    })
                } else {
                    ModelParams::LogisticRegression(LogisticParams {
                        intercept: 0.0,
                        coef,
                        converged: true,
                    })
                };
                Ok(ScenarioData {
                    train,
                    test: Some(test),
                    truth,
                })
            }
            Scenario::GaussianMixture { n, d, k } => {
                let means: Vec<Vec<f64>> = (0..k)
                    .map(|_| (0..d).map(|_| 2.0 * normal(&mut rng)).collect())
                    .collect();
                let mut pts = Vec::with_capacity(n * d);
                for _ in 0..n {
                    let c = rng.random_range(0..k);
                    pts.extend(means[c].iter().map(|m| m + 0.5 * normal(&mut rng)));
                }
                Ok(ScenarioData {
                    train: Dataset::new(pts, d, None)?,
                    test: None,
                    truth: ModelParams::GaussianMixture(Mixture {
                        weights: vec![1.0 / k as f64; k],
                        components: means
                            .into_iter()
                            .map(|mean| GaussianComponent {
                                mean,
                                covariance: Covariance::Spherical(0.25),
                            })
                            .collect(),
                        assignments: None,
                    }),
                })
            }
            Scenario::BernoulliMixture { n, d, k } => {
                let beta = Beta::new(0.1, 0.1).expect("valid shape");
                let probs: Vec<Vec<f64>> = (0..k)
                    .map(|_| (0..d).map(|_| beta.sample(&mut rng)).collect())
                    .collect();
                let mut pts = Vec::with_capacity(n * d);
                for _ in 0..n {
                    let c = rng.random_range(0..k);
                    pts.extend(probs[c].iter().map(|&p| f64::from(rng.random::<f64>() < p)));
                }
                Ok(ScenarioData {
                    train: Dataset::new(pts, d, None)?,
                    test: None,
                    truth: ModelParams::BernoulliMixture(Mixture {
                        weights: vec![1.0 / k as f64; k],
                        components: probs.into_iter().map(|probs| BernoulliComponent { probs }).collect(),
                        assignments: None,
                    }),
                })
            }
        }
    }

    /// Scenario metric of fitted parameters against the ground truth.
    pub fn metric(&self, data: &ScenarioData, params: &ModelParams) -> Result<f64> {
        let mismatch = || OwlError::InvalidParams("parameters do not match the scenario".into());
        match (self, &data.truth, params) {
            (Scenario::GaussianMean { d, .. }, ModelParams::Gaussian(t), ModelParams::Gaussian(f)) => {
                Ok(sq_dist(&t.mean, &f.mean) / *d as f64)
            }
            (Scenario::LinearRegression { .. }, ModelParams::LinearRegression(t), ModelParams::LinearRegression(f)) => {
                let test = data.test.as_ref().ok_or_else(mismatch)?;
                Ok(test
                    .rows()
                    .map(|x| {
                        let a = t.intercept + dot(&t.coef, x);
                        let b = f.intercept + dot(&f.coef, x);
                        (a - b) * (a - b)
                    })
                    .sum::<f64>()
                    / test.n() as f64)
            }
            (
                Scenario::LogisticRegression { .. },
                ModelParams::LogisticRegression(t),
                ModelParams::LogisticRegression(f),
            ) => {
                let test = data.test.as_ref().ok_or_else(mismatch)?;
                let hits = test
                    .rows()
                    .filter(|x| (dot(&t.coef, x) >= 0.0) == (f.intercept + dot(&f.coef, x) >= 0.0))
                    .count();
                Ok(hits as f64 / test.n() as f64)
            }
            (Scenario::GaussianMixture { .. }, ModelParams::GaussianMixture(t), ModelParams::GaussianMixture(f)) => {
                let a: Vec<&[f64]> = t.components.iter().map(|c| c.mean.as_slice()).collect();
                let b: Vec<&[f64]> = f.components.iter().map(|c| c.mean.as_slice()).collect();
                matched_cost(&a, &b, sq_dist)
            }
            (
                Scenario::BernoulliMixture { d, .. },
                ModelParams::BernoulliMixture(t),
                ModelParams::BernoulliMixture(f),
            ) => {
                let a: Vec<&[f64]> = t.components.iter().map(|c| c.probs.as_slice()).collect();
                let b: Vec<&[f64]> = f.components.iter().map(|c| c.probs.as_slice()).collect();
                let d = *d as f64;
                matched_cost(&a, &b, |x, y| {
                    x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / d
                })
            }
            _ => Err(mismatch()),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean cost under the best one-to-one matching of components.
fn matched_cost(truth: &[&[f64]], fit: &[&[f64]], cost: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64> {
    let k = truth.len();
    if fit.len() != k {
        return Err(OwlError::InvalidParams("component counts differ".into()));
    }
    if k > 8 {
        return Err(OwlError::InvalidParams(
            "component matching supports at most 8 components".into(),
        ));
    }
    let c: Vec<Vec<f64>> = truth.iter().map(|t| fit.iter().map(|f| cost(t, f)).collect()).collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
        best = best.min(total);
    });
    Ok(best / k as f64)
}

fn permute(p: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// OWL with the radius chosen by [`tune_epsilon`].
    Owl,
    /// OWL with the radius set to the true corruption fraction.
    OwlKnownEpsilon,
    Mle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Owl => "owl",
            Method::OwlKnownEpsilon => "owl_eps_known",
            Method::Mle => "mle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub owl: OwlConfig,
    /// Radii searched by [`Method::Owl`].
    pub tune_grid: Vec<f64>,
    pub selector: Selector,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            owl: OwlConfig::default(),
            tune_grid: (0..=12).map(|i| 0.025 * i as f64).collect(),
            selector: Selector::MaxLikelihood,
        }
    }
}

/// One cell of a corruption sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub fraction: f64,
    pub method: String,
    pub seed: u64,
    /// Radius used by the fit (0 for the MLE).
    pub epsilon: f64,
    pub metric_name: String,
    pub metric: f64,
    pub okl: f64,
}

/// Runs every `(fraction, seed, method)` cell; rows are ordered by fraction,
/// then seed, then the order of `methods`. The MLE is the OWL fit at radius
/// zero, so both share starting points.
pub fn run_corruption_sweep(
    scenario: &Scenario,
    fractions: &[f64],
    methods: &[Method],
    seeds: &[u64],
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    let spec = scenario.spec();
    let cells: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    let rows: Vec<Result<Vec<SweepRow>>> = cells
        .par_iter()
        .map(|&(fraction, seed)| {
            let data = scenario.generate(seed)?;
            let plan = CorruptionPlan {
                fraction,
                selector: cfg.selector,
                scheme: scenario.scheme(),
                seed,
            };
            let (train, _) = corrupt(&data.train, &plan, &spec)?;
            let owl = OwlConfig {
                seed,
                ..cfg.owl.clone()
            };
            methods
                .iter()
                .map(|&method| {
                    let epsilon = match method {
                        Method::Mle => 0.0,
                        Method::OwlKnownEpsilon => fraction,
                        Method::Owl => tune_epsilon(&spec, &train, &cfg.tune_grid, &owl)?.chosen,
                    };
                    let fit = owl_fit(&spec, &train, &owl.clone().with_epsilon(epsilon), None)?;
                    Ok(SweepRow {
                        scenario: scenario.id().into(),
                        fraction,
                        method: method.name().into(),
                        seed,
                        epsilon,
                        metric_name: scenario.metric_name().into(),
                        metric: scenario.metric(&data, &fit.params)?,
                        okl: fit.okl.value,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(cells.len() * methods.len());
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Percentile bands from an outlier-stratified bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBands {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    /// Flattened parameters of every replicate.
    pub replicates: Vec<Vec<f64>>,
    /// Rows drawn for every replicate.
    pub samples: Vec<Vec<usize>>,
    /// Indices with `n·w < 1` (down-weighted) and the rest.
    pub outliers: Vec<usize>,
    pub inliers: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Bootstrap in which down-weighted observations (`n·w_i < 1`) and the rest
/// are resampled separately, keeping both stratum sizes in every replicate.
/// An empty stratum falls back to the ordinary bootstrap.
pub fn os_bootstrap<F>(
    data: &Dataset,
    weights: &WeightVector,
    fit: F,
    m: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapBands>
where
    F: Fn(&Dataset) -> Result<ModelParams> + Sync,
{
    crate::error::check_len(data.n(), weights.len(), "weights")?;
    if m == 0 {
        return Err(OwlError::InvalidInput("need at least one replicate".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(OwlError::InvalidInput("level must lie in (0, 1)".into()));
    }
    let n = data.n();
    let scaled = weights.scaled();
    let (outliers, inliers): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0 - 1e-9);
    let mut warnings = Vec::new();
    let strata: Vec<&[usize]> = if outliers.is_empty() || inliers.is_empty() {
        warnings.push("one stratum is empty; using the ordinary bootstrap".into());
        Vec::new()
    } else {
        vec![&outliers, &inliers]
    };
    let all: Vec<usize> = (0..n).collect();
    let strata: Vec<&[usize]> = if strata.is_empty() { vec![&all] } else { strata };

    let reps: Vec<Result<(Vec<usize>, Vec<(String, f64)>)>> = (0..m)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut idx = Vec::with_capacity(n);
            for s in &strata {
                idx.extend((0..s.len()).map(|_| s[rng.random_range(0..s.len())]));
            }
            let params = fit(&data.subset(&idx)?)?;
            Ok((idx, params.flatten()))
        })
        .collect();
    let mut names: Option<Vec<String>> = None;
    let mut replicates = Vec::with_capacity(m);
    let mut samples = Vec::with_capacity(m);
    for r in reps {
        let (idx, flat) = r?;
        let (nm, vals): (Vec<String>, Vec<f64>) = flat.into_iter().unzip();
        match &names {
            None => names = Some(nm),
            Some(prev) if *prev != nm => {
                return Err(OwlError::FitFailed(
                    "replicate fits returned different parameter sets".into(),
                ))
            }
            _ => {}
        }
        replicates.push(vals);
        samples.push(idx);
    }
    let names = names.unwrap_or_default();
    let lo_q = (1.0 - level) / 2.0;
    let hi_q = 1.0 - lo_q;
    let mut lower = Vec::with_capacity(names.len());
    let mut upper = Vec::with_capacity(names.len());
    for j in 0..names.len() {
        let mut col: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
        col.sort_by(f64::total_cmp);
        lower.push(quantile(&col, lo_q));
        upper.push(quantile(&col, hi_q));
    }
    Ok(BootstrapBands {
        names,
        lower,
        upper,
        level,
        replicates,
        samples,
        outliers,
        inliers,
        warnings,
    })
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
