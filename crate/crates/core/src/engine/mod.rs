//! The OWL loop, OKL evaluation, radius tuning and mixture model selection.

mod select;
mod tune;

pub use select::{mixture_selection, owl_selection_criterion, MixtureSelection, Penalty, SelectionResult};
pub use tune::{curvature_selection, log_spaced_grid, tune_epsilon, uniform_grid, EpsilonSearchResult};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{okl_objective, AdmmConfig, AdmmSolver, KernelOperator};
use crate::density::observation_logliks;
use crate::error::{OwlError, Result};
use crate::models::{initial_mixture, weighted_loglik, with_assignments, wmle, WmleOptions};
use crate::rng::stream_rng;
use crate::types::{Dataset, FitTrace, KernelSpec, ModelParams, ModelSpec, OklResult, TerminationReason, WeightVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwlConfig {
    /// TV radius of the re-weighting ball.
    pub epsilon: f64,
    pub max_owl_iters: usize,
    pub kernel: KernelSpec,
    /// Number of starting points tried when no initial value is supplied.
    pub restarts: usize,
    /// Relative OKL change below which the loop stops.
    pub rel_tol: f64,
    pub seed: u64,
    /// Round cap for the hard-EM θ-step of mixtures.
    pub em_rounds: usize,
    pub admm: AdmmConfig,
}

impl Default for OwlConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_owl_iters: 100,
            kernel: KernelSpec::Indicator,
            restarts: 10,
            rel_tol: 1e-6,
            seed: 0,
            em_rounds: 100,
            admm: AdmmConfig::default(),
        }
    }
}

impl OwlConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(OwlError::InvalidParams(format!(
                "epsilon {} must lie in [0, 1]",
                self.epsilon
            )));
        }
        if self.max_owl_iters == 0 || self.restarts == 0 {
            return Err(OwlError::InvalidParams(
                "max_owl_iters and restarts must be at least 1".into(),
            ));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(OwlError::InvalidParams("rel_tol must be >= 0".into()));
        }
        self.kernel.validate()?;
        self.admm.validate()
    }
}

/// Result of an OWL run.
#[derive(Debug, Clone, PartialEq)]
pub struct OwlFit {
    pub params: ModelParams,
    /// Output of the last re-weighting step.
    pub weights: WeightVector,
    pub trace: FitTrace,
    /// Final I-projection, including its solver diagnostics.
    pub okl: OklResult,
    /// Index of the starting point that produced this fit.
    pub restart: usize,
    /// Final OKL of every starting point (`None` when that start failed).
    pub restart_okl: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Re-weighting variant used by the loop.
enum WStep<'a> {
    Plain(Vec<f64>),
    Kernel(&'a KernelOperator),
}

impl WStep<'_> {
    fn solve(&self, solver: &mut AdmmSolver, logp: &[f64], epsilon: f64) -> Result<OklResult> {
        match self {
            WStep::Plain(counts) => solver.solve(logp, counts, epsilon),
            WStep::Kernel(op) => solver.solve_kernelized(logp, op, epsilon),
        }
    }

    /// Objective of a previous solution under new log-likelihoods.
    fn reevaluate(&self, prev: &OklResult, logp: &[f64]) -> f64 {
        match self {
            WStep::Plain(counts) => {
                let ratio: Vec<f64> = counts.iter().zip(logp).map(|(c, l)| c.ln() - l).collect();
                okl_objective(prev.weights.as_slice(), &ratio)
            }
            WStep::Kernel(op) => {
                let v = prev.kernel_mixture.as_deref().expect("kernel solves keep v");
                let av = op.matrix() * DVector::from_column_slice(v);
                let ratio: Vec<f64> = op.row_sums().iter().zip(logp).map(|(s, l)| s.ln() - l).collect();
                okl_objective(av.as_slice(), &ratio)
            }
        }
    }
}

/// Fits `spec` by alternating the re-weighting step and the weighted MLE.
///
/// Without `init`, `cfg.restarts` starting points are tried (the unweighted
/// MLE first, then perturbed and reseeded starts) and the run with the
/// smallest final OKL is kept. Regression families are fitted with the
/// conditional re-weighting of [`owl_fit_conditional`].
pub fn owl_fit(spec: &ModelSpec, data: &Dataset, cfg: &OwlConfig, init: Option<&ModelParams>) -> Result<OwlFit> {
    if spec.family.is_regression() {
        return owl_fit_conditional(spec, data, cfg, init);
    }
    run(spec, data, cfg, init)
}

/// OWL for non-identically distributed observations: each observation is
/// re-weighted against its own likelihood factor `q_θ(y_i | x_i)`.
pub fn owl_fit_conditional(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &OwlConfig,
    init: Option<&ModelParams>,
) -> Result<OwlFit> {
    if !spec.family.is_regression() {
        return Err(OwlError::InvalidParams(
            "conditional fitting needs a regression family".into(),
        ));
    }
    if data.response().is_none() {
        return Err(OwlError::Data("regression data needs a response column".into()));
    }
    if cfg.kernel != KernelSpec::Indicator {
        return Err(OwlError::InvalidParams(
            "conditional fitting supports only the indicator kernel".into(),
        ));
    }
    run(spec, data, cfg, init)
}

fn run(spec: &ModelSpec, data: &Dataset, cfg: &OwlConfig, init: Option<&ModelParams>) -> Result<OwlFit> {
    spec.validate()?;
    cfg.validate()?;
    let op = match cfg.kernel {
        KernelSpec::Indicator => None,
        KernelSpec::Gaussian { .. } => Some(KernelOperator::new(data, &cfg.kernel)?),
    };
    let wstep = match &op {
        Some(op) => WStep::Kernel(op),
        None if spec.family.is_regression() => WStep::Plain(vec![1.0; data.n()]),
        None => WStep::Plain(data.counts().iter().map(|&c| f64::from(c)).collect()),
    };

    let starts: Vec<Result<ModelParams>> = match init {
        Some(p) => vec![Ok(p.clone())],
        None => starting_points(spec, data, cfg),
    };
    let runs: Vec<Result<OwlFit>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, start)| {
            let mut fit = single_run(spec, data, cfg, &wstep, &start?)?;
            fit.restart = r;
            Ok(fit)
        })
        .collect();

    let restart_okl: Vec<Option<f64>> = runs
        .iter()
        .map(|r| r.as_ref().ok().map(|f| f.okl.value).filter(|v| v.is_finite()))
        .collect();
    let mut warnings = Vec::new();
    let mut best: Option<OwlFit> = None;
    let mut last_err = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(fit) if fit.okl.value.is_finite() => {
                if best.as_ref().is_none_or(|b| fit.okl.value < b.okl.value) {
                    best = Some(fit);
                }
            }
            Ok(_) => warnings.push(format!("start {r} ended with a non-finite OKL")),
            Err(e) => {
                warnings.push(format!("start {r} failed: {e}"));
                last_err = Some(e);
            }
        }
    }
    let mut best = best.ok_or_else(|| {
        OwlError::FitFailed(match last_err {
            Some(e) => format!("no starting point produced a finite OKL; last error: {e}"),
            None => "no starting point produced a finite OKL".into(),
        })
    })?;
    for w in &warnings {
        log::warn!("{w}");
    }
    best.restart_okl = restart_okl;
    warnings.append(&mut best.warnings);
    best.warnings = warnings;
    Ok(best)
}

fn single_run(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &OwlConfig,
    wstep: &WStep<'_>,
    start: &ModelParams,
) -> Result<OwlFit> {
    let mut solver = AdmmSolver::new(cfg.admm.clone())?;
    let opts = WmleOptions {
        em_rounds: cfg.em_rounds,
        seed: cfg.seed,
    };
    let mut theta = with_assignments(spec, start, data)?;
    let mut logp = observation_logliks(spec, &theta, data)?;
    let mut okl = wstep.solve(&mut solver, &logp, cfg.epsilon)?;
    let mut trace = FitTrace {
        okl_per_iter: vec![okl.value],
        theta_per_iter: vec![theta.clone()],
        terminated_reason: TerminationReason::MaxIter,
    };
    let mut warnings = Vec::new();

    for _ in 1..cfg.max_owl_iters {
        let fit = wmle(spec, data, &okl.weights, Some(&theta), opts)?;
        warnings.extend(fit.diagnostics.warnings);
        let w = okl.weights.as_slice();
        let old = weighted_loglik(spec, &theta, data, w)?;
        let new = weighted_loglik(spec, &fit.params, data, w)?;
        if !(new >= old) {
            trace.terminated_reason = TerminationReason::Stalled;
            break;
        }
        let new_logp = observation_logliks(spec, &fit.params, data)?;
        let mut next = wstep.solve(&mut solver, &new_logp, cfg.epsilon)?;
        // The previous weights stay feasible, so the new θ never scores worse
        // than they do; an inexact solve must not undo that.
        let carried = wstep.reevaluate(&okl, &new_logp);
        if carried < next.value {
            next = OklResult {
                value: carried,
                ..okl.clone()
            };
        }
        let prev = okl.value;
        theta = fit.params;
        logp = new_logp;
        okl = next;
        trace.okl_per_iter.push(okl.value);
        trace.theta_per_iter.push(theta.clone());
        if (prev - okl.value).abs() <= cfg.rel_tol * prev.abs().max(1e-8) {
            trace.terminated_reason = TerminationReason::Converged;
            break;
        }
    }
    debug_assert_eq!(logp.len(), data.n());
    if !okl.converged {
        warnings.push(format!(
            "re-weighting solve stopped at {} iterations without reaching tolerance",
            okl.iterations
        ));
    }
    Ok(OwlFit {
        params: theta,
        weights: okl.weights.clone(),
        trace,
        okl,
        restart: 0,
        restart_okl: Vec::new(),
        warnings,
    })
}

/// Starting points: the unweighted MLE, then alternately the MLE with
/// location parameters jittered by half a data standard deviation and (for
/// mixtures) a fresh k-means++ seeding refined by unweighted hard EM.
fn starting_points(spec: &ModelSpec, data: &Dataset, cfg: &OwlConfig) -> Vec<Result<ModelParams>> {
    let uniform = WeightVector::uniform(data.n());
    let fit_from = |stream: u64| -> Result<ModelParams> {
        let opts = WmleOptions {
            em_rounds: cfg.em_rounds,
            seed: cfg.seed,
        };
        if spec.family.is_mixture() {
            let mut rng = stream_rng(cfg.seed, stream);
            let init = initial_mixture(spec, data, &uniform, &mut rng)?;
            Ok(wmle(spec, data, &uniform, Some(&init), opts)?.params)
        } else {
            Ok(wmle(spec, data, &uniform, None, opts)?.params)
        }
    };
    let mle = fit_from(0);
    let mut out = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let start = match &mle {
            Err(e) => Err(e.clone()),
            Ok(p) if r == 0 => Ok(p.clone()),
            Ok(p) if r % 2 == 1 || !spec.family.is_mixture() => {
                let mut rng = stream_rng(cfg.seed, 1000 + r as u64);
                Ok(jitter(p, data, &mut rng))
            }
            Ok(_) => fit_from(r as u64),
        };
        out.push(start);
    }
    out
}

/// Perturbs location parameters by `N(0, (σ/2)²)` per coordinate, where `σ`
/// is the data (or response) standard deviation. Mixture assignments are
/// dropped so that the loop recomputes them.
fn jitter<R: Rng + ?Sized>(params: &ModelParams, data: &Dataset, rng: &mut R) -> ModelParams {
    let sd = data.column_std();
    let mut noise = |scale: f64| 0.5 * scale * rng.sample::<f64, _>(StandardNormal);
    let mut p = params.clone();
    match &mut p {
        ModelParams::Gaussian(g) => {
            for (m, s) in g.mean.iter_mut().zip(&sd) {
                *m += noise(*s);
            }
        }
        ModelParams::GaussianMixture(m) => {
            for c in &mut m.components {
                for (mu, s) in c.mean.iter_mut().zip(&sd) {
                    *mu += noise(*s);
                }
            }
            m.assignments = None;
        }
        ModelParams::BernoulliMixture(m) => {
            for c in &mut m.components {
                for pj in &mut c.probs {
                    *pj = (*pj + noise(0.5)).clamp(0.05, 0.95);
                }
            }
            m.assignments = None;
        }
        ModelParams::LinearRegression(lp) => {
            let ys = response_std(data);
            lp.intercept += noise(ys);
            for (b, s) in lp.coef.iter_mut().zip(&sd) {
                *b += noise(ys / s.max(1e-12));
            }
        }
        ModelParams::LogisticRegression(lp) => {
            lp.intercept += noise(1.0);
            for (b, s) in lp.coef.iter_mut().zip(&sd) {
                *b += noise(1.0 / s.max(1e-12));
            }
        }
    }
    p
}

fn response_std(data: &Dataset) -> f64 {
    let y = data.response().unwrap_or(&[]);
    if y.len() < 2 {
        return 1.0;
    }
    let m = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64).sqrt()
}

/// OKL of fixed parameters: the I-projection of the empirical distribution
/// (or its kernel smoothing) onto the TV ball, scored against `p_θ`.
pub fn okl_estimate(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    epsilon: f64,
    kernel: &KernelSpec,
) -> Result<OklResult> {
    okl_estimate_with(spec, params, data, epsilon, kernel, &AdmmConfig::default())
}

/// [`okl_estimate`] with an explicit solver configuration.
pub fn okl_estimate_with(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    epsilon: f64,
    kernel: &KernelSpec,
    admm: &AdmmConfig,
) -> Result<OklResult> {
    spec.validate()?;
    kernel.validate()?;
    let logp = observation_logliks(spec, params, data)?;
    let mut solver = AdmmSolver::new(admm.clone())?;
    match kernel {
        KernelSpec::Indicator => {
            let counts: Vec<f64> = if spec.family.is_regression() {
                vec![1.0; data.n()]
            } else {
                data.counts().iter().map(|&c| f64::from(c)).collect()
            };
            solver.solve(&logp, &counts, epsilon)
        }
        KernelSpec::Gaussian { .. } => {
            let op = KernelOperator::new(data, kernel)?;
            solver.solve_kernelized(&logp, &op, epsilon)
        }
    }
}

/// Average distance from each point to its `k`-th nearest neighbor, for each
/// requested `k`. Values of `k` above `n − 1` are clipped (with a warning).
pub fn kernel_bandwidth_grid(data: &Dataset, ks: &[usize]) -> Result<(Vec<(usize, f64)>, Vec<String>)> {
    let n = data.n();
    if n < 2 {
        return Err(OwlError::Data(
            "nearest-neighbor distances need at least two points".into(),
        ));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(OwlError::InvalidInput("neighbor counts must be positive".into()));
    }
    let mut warnings = Vec::new();
    let mut clipped: Vec<usize> = Vec::new();
    for &k in ks {
        let kk = k.min(n - 1);
        if kk != k {
            warnings.push(format!("k = {k} clipped to {kk} (only {n} points)"));
        }
        if !clipped.contains(&kk) {
            clipped.push(kk);
        }
    }
    let sorted: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.row(i);
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    xi.iter()
                        .zip(data.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            d
        })
        .collect();
    let out = clipped
        .into_iter()
        .map(|k| (k, sorted.iter().map(|d| d[k - 1]).sum::<f64>() / n as f64))
        .collect();
    Ok((out, warnings))
}

/// Fits one Gaussian-kernel OWL model per bandwidth and keeps the one with the
/// smallest final OKL. Returns the chosen bandwidth and its fit.
pub fn select_bandwidth(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &OwlConfig,
    bandwidths: &[f64],
) -> Result<(f64, OwlFit)> {
    let fits: Vec<(f64, Result<OwlFit>)> = bandwidths
        .par_iter()
        .map(|&h| {
            let c = OwlConfig {
                kernel: KernelSpec::Gaussian { bandwidth: h },
                ..cfg.clone()
            };
            (h, owl_fit(spec, data, &c, None))
        })
        .collect();
    let mut best: Option<(f64, OwlFit)> = None;
    for (h, fit) in fits {
        match fit {
            Ok(f) => {
                if best.as_ref().is_none_or(|(_, b)| f.okl.value < b.okl.value) {
                    best = Some((h, f));
                }
            }
            Err(e) => log::warn!("bandwidth {h} failed: {e}"),
        }
    }
    best.ok_or_else(|| OwlError::FitFailed("no bandwidth produced a fit".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::wmle_gaussian;

    #[test]
    fn zero_radius_returns_the_mle() {
        let data = Dataset::from_column(&[0.1, 0.5, -0.3, 2.0, 1.1]).unwrap();
        let spec = ModelSpec::gaussian();
        let mle = wmle_gaussian(&data, &WeightVector::uniform(5)).unwrap().params;
        let cfg = OwlConfig::default().with_epsilon(0.0);
        let fit = owl_fit(&spec, &data, &cfg, Some(&mle)).unwrap();
        assert_eq!(fit.params, mle);
        assert_eq!(fit.trace.terminated_reason, TerminationReason::Converged);
    }

    #[test]
    fn planted_outliers_are_down_weighted() {
        use rand_distr::{Distribution, Normal};
        let mut rng = stream_rng(11, 0);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut xs: Vec<f64> = (0..18).map(|_| nd.sample(&mut rng)).collect();
        let clean_mean = xs.iter().sum::<f64>() / 18.0;
        xs.extend([50.0, 50.0 + 1e-9]);
        let data = Dataset::from_column(&xs).unwrap();
        let cfg = OwlConfig {
            restarts: 3,
            ..OwlConfig::default().with_epsilon(0.1)
        };
        let fit = owl_fit(&ModelSpec::gaussian(), &data, &cfg, None).unwrap();
        let w = fit.weights.as_slice();
        assert!(w[18] < 1.0 / 100.0 && w[19] < 1.0 / 100.0, "{w:?}");
        let ModelParams::Gaussian(g) = &fit.params else {
            panic!()
        };
        assert!((g.mean[0] - clean_mean).abs() < 0.5);
        assert!(fit.trace.max_increase() <= 1e-7);
    }

    #[test]
    fn bandwidth_grid_on_a_line() {
        let data = Dataset::from_column(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let (g, warn) = kernel_bandwidth_grid(&data, &[1, 5]).unwrap();
        assert_eq!(g[0], (1, 1.0));
        assert_eq!(g[1].0, 3);
        assert_eq!(warn.len(), 1);
    }
}
