//! Independent checks: a grid-search OKL on small finite spaces, a Monte-Carlo
//! estimate of the coarsened likelihood, and the moment-matching condition of
//! weighted exponential-family fits.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OwlError, Result};
use crate::linalg::sigmoid;
use crate::rng::stream_rng;
use crate::types::{Dataset, Family, ModelParams, ModelSpec, WeightVector};

/// Largest support the grid search accepts.
pub const MAX_BRUTEFORCE_ATOMS: usize = 5;

/// Replicates per Monte-Carlo block; each block has its own random stream.
const MC_BLOCK: usize = 4096;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(OwlError::InvalidInput(format!("{what} must be a nonnegative vector")));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(OwlError::InvalidInput(format!("{what} must sum to one")));
    }
    Ok(())
}

/// `Σ q log(q/p)` with `0 log 0 = 0`; infinite when `q` charges a zero of `p`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| match (qi > 0.0, pi > 0.0) {
            (false, _) => 0.0,
            (true, true) => qi * (qi / pi).ln(),
            (true, false) => f64::INFINITY,
        })
        .sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Minimum of `KL(q | p_θ)` over lattice distributions `q = p̂ + k·resolution`
/// (integer offsets `k` summing to zero) with `½‖q − p̂‖₁ ≤ ε`.
///
/// The lattice is anchored at `p̂`, so `p̂` itself is always a candidate and
/// the search is never empty. Partial offsets that already leave the ball
/// are pruned.
pub fn okl_bruteforce(p_hat: &[f64], p_theta: &[f64], epsilon: f64, resolution: f64) -> Result<f64> {
    check_distribution(p_hat, "p_hat")?;
    check_distribution(p_theta, "p_theta")?;
    check_len(p_hat.len(), p_theta.len(), "p_theta")?;
    let m = p_hat.len();
    if m > MAX_BRUTEFORCE_ATOMS {
        return Err(OwlError::InvalidInput(format!(
            "grid search supports at most {MAX_BRUTEFORCE_ATOMS} atoms, got {m}"
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(OwlError::InvalidInput("epsilon must be >= 0".into()));
    }
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(OwlError::InvalidInput("resolution must lie in (0, 0.5]".into()));
    }
    let steps = (1.0 / resolution).round() as i64;
    if ((steps as f64) * resolution - 1.0).abs() > 1e-9 {
        return Err(OwlError::InvalidInput("1 / resolution must be an integer".into()));
    }
    let unit = 1.0 / steps as f64;
    // Offsets are integers in grid units, so the L1 budget check is exact.
    let target: Vec<f64> = p_hat.iter().map(|p| p * steps as f64).collect();
    let budget = (2.0 * epsilon * steps as f64 + 1e-7).floor().min(2.0 * steps as f64) as i64;
    let lows: Vec<i64> = target.iter().map(|&t| ((-t - 1e-9).ceil() as i64).max(-budget)).collect();
    let highs: Vec<i64> = target
        .iter()
        .map(|&t| ((steps as f64 - t + 1e-9).floor() as i64).min(budget))
        .collect();
    let terms: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            (lows[j]..=highs[j])
                .map(|k| kl_divergence(&[((target[j] + k as f64) * unit).max(0.0)], &[p_theta[j]]))
                .collect()
        })
        .collect();

    struct Search<'a> {
        m: usize,
        lows: &'a [i64],
        highs: &'a [i64],
        terms: &'a [Vec<f64>],
        budget: i64,
        best: f64,
    }
    impl Search<'_> {
        fn go(&mut self, j: usize, sum: i64, l1: i64, value: f64) {
            if j == self.m - 1 {
                let k = -sum;
                if k >= self.lows[j] && k <= self.highs[j] && l1 + k.abs() <= self.budget {
                    let v = value + self.terms[j][(k - self.lows[j]) as usize];
                    if v < self.best {
                        self.best = v;
                    }
                }
                return;
            }
            for k in self.lows[j]..=self.highs[j] {
                let l1k = l1 + k.abs();
                if l1k > self.budget {
                    continue;
                }
                self.go(j + 1, sum + k, l1k, value + self.terms[j][(k - self.lows[j]) as usize]);
            }
        }
    }
    let mut s = Search {
        m,
        lows: &lows,
        highs: &highs,
        terms: &terms,
        budget,
        best: f64::INFINITY,
    };
    s.go(0, 0, 0, 0.0);
    Ok(s.best)
}

/// Monte-Carlo estimate of `(1/n) log P_θ(TV(empirical(Z_{1:n}), empirical(x_{1:n})) ≤ ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Delta-method standard error of `estimate`; infinite when there are no hits.
    pub std_error: f64,
    pub hits: u64,
    pub reps: u64,
    /// No replicate landed in the ball; `estimate` is `−∞`.
    pub no_hits: bool,
}

/// Draws `reps` synthetic data sets of size `n = x_data.len()` from `p_theta`
/// (a distribution over atoms `0..m`) and counts how often their empirical
/// distribution lies within TV `ε` of the observed one.
pub fn coarsened_likelihood_mc(
    p_theta: &[f64],
    x_data: &[usize],
    epsilon: f64,
    reps: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_distribution(p_theta, "p_theta")?;
    let m = p_theta.len();
    let n = x_data.len();
    if n == 0 || reps == 0 {
        return Err(OwlError::InvalidInput(
            "need at least one observation and one replicate".into(),
        ));
    }
    if let Some(&bad) = x_data.iter().find(|&&x| x >= m) {
        return Err(OwlError::InvalidInput(format!(
            "atom {bad} outside a support of size {m}"
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(OwlError::InvalidInput("epsilon must be >= 0".into()));
    }
    if epsilon >= 1.0 {
        return Ok(McEstimate {
            estimate: 0.0,
            std_error: 0.0,
            hits: reps,
            reps,
            no_hits: false,
        });
    }
    let mut observed = vec![0u64; m];
    for &x in x_data {
        observed[x] += 1;
    }
    // ½ Σ |c_j − o_j| / n ≤ ε  ⇔  Σ |c_j − o_j| ≤ 2εn, compared in counts.
    let budget = 2.0 * epsilon * n as f64 + 1e-9;
    let blocks = reps.div_ceil(MC_BLOCK as u64);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b);
            let size = (reps - b * MC_BLOCK as u64).min(MC_BLOCK as u64);
            let mut counts = vec![0u64; m];
            let mut hits = 0;
            for _ in 0..size {
                sample_multinomial(n as u64, p_theta, &mut counts, &mut rng);
                let l1: u64 = counts.iter().zip(&observed).map(|(c, o)| c.abs_diff(*o)).sum();
                if l1 as f64 <= budget {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let frac = hits as f64 / reps as f64;
    if hits == 0 {
        return Ok(McEstimate {
            estimate: f64::NEG_INFINITY,
            std_error: f64::INFINITY,
            hits,
            reps,
            no_hits: true,
        });
    }
    Ok(McEstimate {
        estimate: frac.ln() / n as f64,
        std_error: ((1.0 - frac) / (frac * reps as f64)).sqrt() / n as f64,
        hits,
        reps,
        no_hits: false,
    })
}

/// Multinomial counts by sequential conditional binomials.
fn sample_multinomial<R: rand::Rng>(n: u64, p: &[f64], out: &mut [u64], rng: &mut R) {
    let mut left = n;
    let mut mass = 1.0;
    let last = p.len() - 1;
    for (j, &pj) in p.iter().enumerate() {
        if j == last || left == 0 {
            out[j] = if j == last { left } else { 0 };
            left -= out[j];
            continue;
        }
        let q = (pj / mass).clamp(0.0, 1.0);
        let c = Binomial::new(left, q)
            .expect("probability clamped to [0, 1]")
            .sample(rng);
        out[j] = c;
        left -= c;
        mass -= pj;
    }
}

/// `‖∇A(θ) − Σ w_i T(x_i)‖₂`: how far a fitted exponential-family model is
/// from matching the weighted sufficient statistics.
///
/// Supported: multivariate normal (`T = (x, x xᵀ)`), a single Bernoulli
/// product (`T = x`), linear regression (weighted normal equations plus the
/// residual-variance equation) and logistic regression (score equations,
/// including the ridge term).
pub fn check_gradient_condition(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &Dataset,
    w: &WeightVector,
) -> Result<f64> {
    check_len(data.n(), w.len(), "weights")?;
    let w = w.as_slice();
    let d = data.d();
    let mut sq = 0.0;
    match (spec.family, params) {
        (Family::MultivariateNormal, ModelParams::Gaussian(g)) => {
            let cov = g.covariance.to_dense(d);
            for a in 0..d {
                let first: f64 = data.rows().zip(w).map(|(x, wi)| wi * x[a]).sum();
                sq += (g.mean[a] - first).powi(2);
                for b in 0..d {
                    let second: f64 = data.rows().zip(w).map(|(x, wi)| wi * x[a] * x[b]).sum();
                    sq += (cov[a][b] + g.mean[a] * g.mean[b] - second).powi(2);
                }
            }
        }
        (Family::BernoulliProductMixture, ModelParams::BernoulliMixture(m)) if m.k() == 1 => {
            for j in 0..d {
                let first: f64 = data.rows().zip(w).map(|(x, wi)| wi * x[j]).sum();
                sq += (m.components[0].probs[j] - first).powi(2);
            }
        }
        (Family::LinearRegression, ModelParams::LinearRegression(lp)) => {
            let y = data
                .response()
                .ok_or_else(|| OwlError::Data("missing response".into()))?;
            let resid: Vec<f64> = data
                .rows()
                .zip(y)
                .map(|(x, yi)| yi - lp.intercept - dot(&lp.coef, x))
                .collect();
            let s0: f64 = resid.iter().zip(w).map(|(r, wi)| wi * r).sum();
            sq += s0 * s0;
            for j in 0..d {
                let sj: f64 = data.rows().zip(&resid).zip(w).map(|((x, r), wi)| wi * x[j] * r).sum();
                sq += sj * sj;
            }
            let var: f64 = resid.iter().zip(w).map(|(r, wi)| wi * r * r).sum();
            sq += (lp.sigma * lp.sigma - var).powi(2);
        }
        (Family::LogisticRegression, ModelParams::LogisticRegression(lp)) => {
            let y = data
                .response()
                .ok_or_else(|| OwlError::Data("missing response".into()))?;
            let resid: Vec<f64> = data
                .rows()
                .zip(y)
                .map(|(x, yi)| yi - sigmoid(lp.intercept + dot(&lp.coef, x)))
                .collect();
            let s0: f64 = resid.iter().zip(w).map(|(r, wi)| wi * r).sum();
            sq += s0 * s0;
            for j in 0..d {
                let sj: f64 = data.rows().zip(&resid).zip(w).map(|((x, r), wi)| wi * x[j] * r).sum();
                sq += (sj - spec.ridge * lp.coef[j]).powi(2);
            }
        }
        _ => {
            return Err(OwlError::InvalidParams(
                "gradient condition is defined for normal, single Bernoulli, linear and logistic models".into(),
            ))
        }
    }
    Ok(sq.sqrt())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
