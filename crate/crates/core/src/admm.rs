//! Consensus ADMM for the re-weighting step.
//!
//! The w-step minimizes `Σ w_i log(w_i n_i / p_θ(x_i))` over the probability
//! simplex intersected with the TV ball `½‖w − o‖₁ ≤ ε`. The objective is split
//! into three convex terms, each handled by its own proximal operator and tied
//! together by a consensus variable. Internally the iterates live on the scale
//! `u = n·w`, where the uniform vector is all ones, so tolerances do not depend
//! on `n`.
//!
//! The entropy term is only finite for `u ≥ 0`, so the simplex indicator can be
//! replaced by the indicator of the hyperplane `Σ u = n` without changing the
//! problem. Keeping the nonnegativity clip in the second block makes
//! down-weighted points hover between a clipped zero and a tiny positive prox
//! value, and the iterates crawl; the hyperplane version converges in a small
//! fraction of the iterations.
//!
//! The kernelized variant parameterizes `w = A v` with a row-normalized kernel
//! matrix and solves the consensus update with one cached SVD of `A`.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{OwlError, Result};
use crate::prox::{project_l1_ball_into, project_simplex_into, prox_entropy_into};
use crate::types::{Dataset, KernelSpec, OklResult, WeightVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Initial penalties for the entropy, simplex and ball terms.
    pub lambda_init: [f64; 3],
    pub adaptive: bool,
    pub adapt_ratio: f64,
    pub adapt_factor: f64,
    /// Penalties stay fixed after this many iterations.
    pub adapt_freeze: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            primal_tol: 1e-7,
            dual_tol: 1e-7,
            lambda_init: [1.0; 3],
            adaptive: true,
            adapt_ratio: 10.0,
            adapt_factor: 2.0,
            adapt_freeze: 1000,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iters == 0 {
            return Err(OwlError::InvalidParams("max_iters must be at least 1".into()));
        }
        if !pos(self.primal_tol) || !pos(self.dual_tol) {
            return Err(OwlError::InvalidParams("ADMM tolerances must be positive".into()));
        }
        if !self.lambda_init.iter().all(|&l| pos(l)) {
            return Err(OwlError::InvalidParams("ADMM penalties must be positive".into()));
        }
        if !(self.adapt_ratio > 1.0) || !(self.adapt_factor > 1.0) {
            return Err(OwlError::InvalidParams(
                "adapt_ratio and adapt_factor must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// Row-normalized kernel matrix with its cached SVD.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    a: DMatrix<f64>,
    row_sums: Vec<f64>,
    sigma: Vec<f64>,
    /// Right singular vectors as columns.
    v: DMatrix<f64>,
}

impl KernelOperator {
    /// Kernel matrix over the rows of `data`.
    pub fn new(data: &Dataset, kernel: &KernelSpec) -> Result<Self> {
        kernel.validate()?;
        let n = data.n();
        let k = match *kernel {
            KernelSpec::Indicator => DMatrix::from_fn(n, n, |i, j| {
                let same = data
                    .row(i)
                    .iter()
                    .zip(data.row(j))
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if same {
                    1.0
                } else {
                    0.0
                }
            }),
            KernelSpec::Gaussian { bandwidth } => {
                let d = data.d() as f64;
                let h2 = bandwidth * bandwidth;
                let norm = (2.0 * std::f64::consts::PI * h2).powf(-0.5 * d);
                DMatrix::from_fn(n, n, |i, j| {
                    let sq: f64 = data
                        .row(i)
                        .iter()
                        .zip(data.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    norm * (-0.5 * sq / h2).exp()
                })
            }
        };
        Self::from_kernel_matrix(k)
    }

    /// Operator from a raw nonnegative kernel matrix.
    pub fn from_kernel_matrix(k: DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n {
            return Err(OwlError::InvalidInput(
                "kernel matrix must be square and nonempty".into(),
            ));
        }
        if k.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(OwlError::InvalidInput(
                "kernel entries must be finite and nonnegative".into(),
            ));
        }
        let row_sums: Vec<f64> = (0..n).map(|i| k.row(i).sum()).collect();
        if let Some(i) = row_sums.iter().position(|&s| !(s > 0.0)) {
            return Err(OwlError::InvalidInput(format!("kernel row {i} sums to zero")));
        }
        let a = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / row_sums[i]);
        let svd = SVD::try_new(a.clone(), false, true, f64::EPSILON, 0).ok_or_else(|| OwlError::IllConditioned {
            condition: f64::INFINITY,
            detail: "SVD of the kernel matrix did not converge".into(),
        })?;
        let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        let v_t = svd.v_t.ok_or_else(|| OwlError::IllConditioned {
            condition: f64::INFINITY,
            detail: "SVD returned no right singular vectors".into(),
        })?;
        if sigma.iter().chain(v_t.iter()).any(|v| !v.is_finite()) {
            return Err(OwlError::IllConditioned {
                condition: condition_of(&sigma),
                detail: "SVD of the kernel matrix produced non-finite values".into(),
            });
        }
        let mut op = Self {
            a,
            row_sums,
            sigma,
            v: v_t.transpose(),
        };
        op.sort_descending();
        Ok(op)
    }

    fn sort_descending(&mut self) {
        let n = self.sigma.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| self.sigma[j].total_cmp(&self.sigma[i]));
        if idx.iter().enumerate().all(|(k, &i)| k == i) {
            return;
        }
        self.sigma = idx.iter().map(|&i| self.sigma[i]).collect();
        self.v = DMatrix::from_fn(n, n, |r, c| self.v[(r, idx[c])]);
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Row sums `s_i` of the raw kernel matrix.
    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Singular values of `A`, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// `σ_max / σ_min` of `A` (infinite when `A` is singular).
    pub fn condition_number(&self) -> f64 {
        condition_of(&self.sigma)
    }
}

fn condition_of(sigma: &[f64]) -> f64 {
    let max = sigma.iter().copied().fold(0.0, f64::max);
    let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProblemKind {
    Plain,
    Kernel,
}

#[derive(Debug, Clone)]
struct WarmState {
    kind: ProblemKind,
    z: Vec<f64>,
    y: [Vec<f64>; 3],
    lambda: [f64; 3],
    log_guess: Vec<f64>,
}

/// Stateful solver; consecutive solves of same-size problems start from the
/// previous iterates.
#[derive(Debug, Clone, Default)]
pub struct AdmmSolver {
    cfg: AdmmConfig,
    warm: Option<WarmState>,
}

impl AdmmSolver {
    pub fn new(cfg: AdmmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, warm: None })
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.cfg
    }

    /// Forgets the warm-start state.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn take_warm(&mut self, kind: ProblemKind, n: usize) -> WarmState {
        match self.warm.take() {
            Some(w) if w.kind == kind && w.z.len() == n => w,
            _ => WarmState {
                kind,
                z: vec![1.0; n],
                y: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
                lambda: self.cfg.lambda_init,
                log_guess: vec![f64::NAN; n],
            },
        }
    }

    /// Unkernelized I-projection with multiplicities `counts`.
    pub fn solve(&mut self, logp: &[f64], counts: &[f64], epsilon: f64) -> Result<OklResult> {
        let n = logp.len();
        check_inputs(logp, epsilon)?;
        if counts.len() != n {
            return Err(OwlError::Dimension {
                expected: n,
                got: counts.len(),
                context: "counts",
            });
        }
        if counts.iter().any(|&c| !(c >= 1.0) || !c.is_finite()) {
            return Err(OwlError::InvalidInput("counts must be finite and at least 1".into()));
        }
        let ln_n = (n as f64).ln();
        // Entropy coefficients on the u = n·w scale.
        let c: Vec<f64> = logp.iter().zip(counts).map(|(lp, m)| m.ln() - lp - ln_n).collect();
        let log_ratio: Vec<f64> = logp.iter().zip(counts).map(|(lp, m)| m.ln() - lp).collect();

        if epsilon == 0.0 || n == 1 {
            let w = vec![1.0 / n as f64; n];
            return Ok(OklResult {
                value: okl_objective(&w, &log_ratio),
                weights: WeightVector::new(w, epsilon)?,
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                converged: true,
                kernel_mixture: None,
            });
        }

        let mut st = self.take_warm(ProblemKind::Plain, n);
        let use_ball = !ball_is_vacuous(epsilon, n);
        let radius = 2.0 * epsilon * n as f64;
        let ones = vec![1.0; n];
        let nf = n as f64;
        let sqrt_n = nf.sqrt();

        let mut w = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut arg = vec![0.0; n];
        let mut z_prev = vec![0.0; n];
        let mut scratch = Vec::with_capacity(n);
        let active: &[usize] = if use_ball { &[0, 1, 2] } else { &[0, 1] };

        let mut iterations = 0;
        let mut converged = false;
        let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
        for iter in 1..=self.cfg.max_iters {
            iterations = iter;
            for &b in active {
                let lam = st.lambda[b];
                for ((a, z), y) in arg.iter_mut().zip(&st.z).zip(&st.y[b]) {
                    *a = z + lam * y;
                }
                match b {
                    0 => prox_entropy_into(&arg, lam, &c, &mut w[0], &mut st.log_guess),
                    1 => project_mass_into(&arg, nf, &mut w[1]),
                    _ => project_l1_ball_into(&arg, &ones, radius, &mut w[2], &mut scratch),
                }
            }

            z_prev.copy_from_slice(&st.z);
            let inv_sum: f64 = active.iter().map(|&b| 1.0 / st.lambda[b]).sum();
            for i in 0..n {
                let mut acc = 0.0;
                for &b in active {
                    acc += w[b][i] / st.lambda[b] - st.y[b][i];
                }
                st.z[i] = acc / inv_sum;
            }

            let dz = dist(&st.z, &z_prev);
            let mut r = [0.0; 3];
            let mut s = [0.0; 3];
            for &b in active {
                let lam = st.lambda[b];
                let mut rr = 0.0;
                for ((y, z), wb) in st.y[b].iter_mut().zip(&st.z).zip(&w[b]) {
                    let diff = z - wb;
                    *y += diff / lam;
                    rr += diff * diff;
                }
                r[b] = rr.sqrt();
                s[b] = dz / lam;
            }
            r_norm = active.iter().map(|&b| r[b]).fold(0.0, f64::max) / sqrt_n;
            s_norm = active.iter().map(|&b| s[b]).fold(0.0, f64::max) / sqrt_n;
            if r_norm < self.cfg.primal_tol && s_norm < self.cfg.dual_tol {
                converged = true;
                break;
            }
            if self.cfg.adaptive && iter <= self.cfg.adapt_freeze {
                adapt(&mut st.lambda, &r, &s, active, &self.cfg);
            }
        }

        // The entropy block is strictly positive; normalize it and shrink toward
        // uniform if the remaining residual left it outside the ball.
        let mut out: Vec<f64> = w[0].iter().map(|u| u / nf).collect();
        renormalize(&mut out);
        shrink_into_ball(&mut out, epsilon);
        self.warm = Some(st);
        Ok(OklResult {
            value: okl_objective(&out, &log_ratio),
            weights: WeightVector::new(out, epsilon)?,
            iterations,
            primal_residual: r_norm,
            dual_residual: s_norm,
            converged,
            kernel_mixture: None,
        })
    }

    /// Kernelized I-projection: minimize over `v ∈ Δ_n` with `w = A v`.
    pub fn solve_kernelized(&mut self, logp: &[f64], op: &KernelOperator, epsilon: f64) -> Result<OklResult> {
        let n = logp.len();
        check_inputs(logp, epsilon)?;
        if op.n() != n {
            return Err(OwlError::Dimension {
                expected: n,
                got: op.n(),
                context: "kernel operator size",
            });
        }
        let nf = n as f64;
        let ln_n = nf.ln();
        let log_ratio: Vec<f64> = logp.iter().zip(op.row_sums()).map(|(lp, s)| s.ln() - lp).collect();
        let c: Vec<f64> = log_ratio.iter().map(|r| r - ln_n).collect();
        let a = op.matrix();

        if epsilon == 0.0 {
            let v = vec![1.0 / nf; n];
            let av = a * DVector::from_column_slice(&v);
            return self.finish_kernel(op, v, av.as_slice(), &log_ratio, epsilon, 0, 0.0, 0.0, true);
        }

        let mut st = self.take_warm(ProblemKind::Kernel, n);
        let use_ball = !ball_is_vacuous(epsilon, n);
        let radius = 2.0 * epsilon * nf;
        let ones = vec![1.0; n];
        let sqrt_n = nf.sqrt();
        let at = a.transpose();
        let vt = op.v.transpose();

        let mut z = DVector::from_column_slice(&st.z);
        let mut az = a * &z;
        let mut w = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut arg = vec![0.0; n];
        let mut scratch = Vec::with_capacity(n);
        let active: &[usize] = if use_ball { &[0, 1, 2] } else { &[0, 1] };
        // Blocks 0 and 2 constrain A z, block 1 constrains z itself.
        let through_a = |b: usize| b != 1;

        let mut iterations = 0;
        let mut converged = false;
        let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
        for iter in 1..=self.cfg.max_iters {
            iterations = iter;
            for &b in active {
                let lam = st.lambda[b];
                let base = if through_a(b) { az.as_slice() } else { z.as_slice() };
                for ((x, m), y) in arg.iter_mut().zip(base).zip(&st.y[b]) {
                    *x = m + lam * y;
                }
                match b {
                    0 => prox_entropy_into(&arg, lam, &c, &mut w[0], &mut st.log_guess),
                    1 => project_simplex_into(&arg, nf, &mut w[1], &mut scratch),
                    _ => project_l1_ball_into(&arg, &ones, radius, &mut w[2], &mut scratch),
                }
            }

            let mut rhs_a = DVector::zeros(n);
            let mut rhs = DVector::zeros(n);
            let (mut beta_j, mut beta_jc) = (0.0, 0.0);
            for &b in active {
                let lam = st.lambda[b];
                let target = if through_a(b) { &mut rhs_a } else { &mut rhs };
                for i in 0..n {
                    target[i] += w[b][i] / lam - st.y[b][i];
                }
                if through_a(b) {
                    beta_j += 1.0 / lam;
                } else {
                    beta_jc += 1.0 / lam;
                }
            }
            rhs += &at * rhs_a;
            let mut coeff = &vt * rhs;
            for (k, s) in op.sigma.iter().enumerate() {
                coeff[k] /= beta_jc + beta_j * s * s;
            }
            let z_new = &op.v * coeff;
            let az_new = a * &z_new;
            let dz = (&z_new - &z).norm();
            let daz = (&az_new - &az).norm();
            z = z_new;
            az = az_new;

            let mut r = [0.0; 3];
            let mut s = [0.0; 3];
            for &b in active {
                let lam = st.lambda[b];
                let base = if through_a(b) { az.as_slice() } else { z.as_slice() };
                let mut rr = 0.0;
                for ((y, m), wb) in st.y[b].iter_mut().zip(base).zip(&w[b]) {
                    let diff = m - wb;
                    *y += diff / lam;
                    rr += diff * diff;
                }
                r[b] = rr.sqrt();
                s[b] = if through_a(b) { daz } else { dz } / lam;
            }
            r_norm = active.iter().map(|&b| r[b]).fold(0.0, f64::max) / sqrt_n;
            s_norm = active.iter().map(|&b| s[b]).fold(0.0, f64::max) / sqrt_n;
            if r_norm < self.cfg.primal_tol && s_norm < self.cfg.dual_tol {
                converged = true;
                break;
            }
            if self.cfg.adaptive && iter <= self.cfg.adapt_freeze {
                adapt(&mut st.lambda, &r, &s, active, &self.cfg);
            }
        }

        let mut v: Vec<f64> = w[1].iter().map(|u| u / nf).collect();
        renormalize(&mut v);
        st.z.copy_from_slice(z.as_slice());
        self.warm = Some(st);
        // A o = o, so shrinking v toward uniform shrinks A v by the same factor.
        let av = a * DVector::from_column_slice(&v);
        let tv = 0.5 * av.iter().map(|x| (x - 1.0 / nf).abs()).sum::<f64>();
        if tv > epsilon {
            let t = epsilon / tv;
            v.iter_mut().for_each(|x| *x = 1.0 / nf + t * (*x - 1.0 / nf));
        }
        let av = a * DVector::from_column_slice(&v);
        self.finish_kernel(
            op,
            v,
            av.as_slice(),
            &log_ratio,
            epsilon,
            iterations,
            r_norm,
            s_norm,
            converged,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_kernel(
        &self,
        _op: &KernelOperator,
        v: Vec<f64>,
        av: &[f64],
        log_ratio: &[f64],
        epsilon: f64,
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        converged: bool,
    ) -> Result<OklResult> {
        let value = okl_objective(av, log_ratio);
        // Av need not sum to one; the reported weights are its normalization,
        // pulled back into the ball if normalization pushed it out.
        let mut w = av.iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
        renormalize(&mut w);
        shrink_into_ball(&mut w, epsilon);
        Ok(OklResult {
            value,
            weights: WeightVector::new(w, epsilon)?,
            iterations,
            primal_residual,
            dual_residual,
            converged,
            kernel_mixture: Some(v),
        })
    }
}

fn check_inputs(logp: &[f64], epsilon: f64) -> Result<()> {
    if logp.is_empty() {
        return Err(OwlError::InvalidInput("no observations".into()));
    }
    if logp.iter().any(|v| !v.is_finite()) {
        return Err(OwlError::InvalidInput("log-likelihoods must be finite".into()));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(OwlError::InvalidInput(format!("epsilon {epsilon} must be >= 0")));
    }
    Ok(())
}

/// True when the TV ball of radius `epsilon` contains the whole simplex.
fn ball_is_vacuous(epsilon: f64, n: usize) -> bool {
    epsilon >= (n as f64 - 1.0) / n as f64
}

fn adapt(lambda: &mut [f64; 3], r: &[f64; 3], s: &[f64; 3], active: &[usize], cfg: &AdmmConfig) {
    for &b in active {
        if s[b] > cfg.adapt_ratio * r[b] {
            lambda[b] *= cfg.adapt_factor;
        } else if r[b] > cfg.adapt_ratio * s[b] {
            lambda[b] /= cfg.adapt_factor;
        }
        lambda[b] = lambda[b].clamp(1e-8, 1e8);
    }
}

/// Projection onto the hyperplane `Σ u = mass`.
fn project_mass_into(v: &[f64], mass: f64, out: &mut [f64]) {
    let shift = (v.iter().sum::<f64>() - mass) / v.len() as f64;
    for (o, x) in out.iter_mut().zip(v) {
        *o = x - shift;
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn renormalize(w: &mut [f64]) {
    let mass: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= mass);
}

/// Moves `w` toward uniform along the segment until `½‖w − o‖₁ ≤ ε`.
fn shrink_into_ball(w: &mut [f64], epsilon: f64) {
    let o = 1.0 / w.len() as f64;
    let tv = 0.5 * w.iter().map(|x| (x - o).abs()).sum::<f64>();
    if tv > epsilon {
        let t = epsilon / tv;
        w.iter_mut().for_each(|x| *x = o + t * (*x - o));
    }
}

/// `Σ w_i (log w_i + log_ratio_i)` with `0 · log 0 = 0`.
pub fn okl_objective(w: &[f64], log_ratio: &[f64]) -> f64 {
    w.iter()
        .zip(log_ratio)
        .filter(|(&x, _)| x > 0.0)
        .map(|(&x, r)| x * (x.ln() + r))
        .sum()
}

/// One-shot unkernelized I-projection (Eq. with multiplicities `counts`).
pub fn i_projection(logp: &[f64], counts: &[u32], epsilon: f64, cfg: &AdmmConfig) -> Result<OklResult> {
    let counts: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
    AdmmSolver::new(cfg.clone())?.solve(logp, &counts, epsilon)
}

/// One-shot kernelized I-projection.
pub fn i_projection_kernelized(
    logp: &[f64],
    kernel: &KernelOperator,
    epsilon: f64,
    cfg: &AdmmConfig,
) -> Result<OklResult> {
    AdmmSolver::new(cfg.clone())?.solve_kernelized(logp, kernel, epsilon)
}

/// Re-weighting of non-identically distributed observations, each with its
/// own likelihood factor `loglik_i`.
pub fn i_projection_conditional(loglik: &[f64], epsilon: f64, cfg: &AdmmConfig) -> Result<OklResult> {
    AdmmSolver::new(cfg.clone())?.solve(loglik, &vec![1.0; loglik.len()], epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn distinct(n: usize) -> Vec<u32> {
        vec![1; n]
    }

    #[test]
    fn zero_radius_pins_uniform() {
        let logp = [-1.0, -2.0, -0.5];
        let r = i_projection(&logp, &distinct(3), 0.0, &AdmmConfig::default()).unwrap();
        assert_eq!(r.weights.as_slice(), &[1.0 / 3.0; 3]);
        let expected: f64 = logp.iter().map(|lp| (1.0 / 3.0) * ((1.0f64 / 3.0).ln() - lp)).sum();
        assert_abs_diff_eq!(r.value, expected, epsilon = 1e-14);
    }

    #[test]
    fn interior_optimum_is_softmax() {
        let logp = [0.9f64.ln(), 0.1f64.ln()];
        let r = i_projection(&logp, &distinct(2), 0.4, &AdmmConfig::default()).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.weights.as_slice()[0], 0.9, epsilon = 1e-6);
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn boundary_optimum_on_two_points() {
        let logp = [0.9f64.ln(), 0.1f64.ln()];
        let r = i_projection(&logp, &distinct(2), 0.1, &AdmmConfig::default()).unwrap();
        assert_abs_diff_eq!(r.weights.as_slice()[0], 0.6, epsilon = 1e-6);
        let oracle = (0..=100_000)
            .map(|k| 0.4 + 0.2 * k as f64 / 100_000.0)
            .map(|w| w * (w / 0.9).ln() + (1.0 - w) * ((1.0 - w) / 0.1).ln())
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(r.value, oracle, epsilon = 1e-8);
    }

    #[test]
    fn equal_likelihoods_stay_uniform() {
        let r = i_projection_conditional(&[-1.3; 5], 0.3, &AdmmConfig::default()).unwrap();
        for w in r.weights.as_slice() {
            assert_abs_diff_eq!(*w, 0.2, epsilon = 1e-7);
        }
    }

    #[test]
    fn warm_start_reuses_state() {
        let mut solver = AdmmSolver::new(AdmmConfig::default()).unwrap();
        let logp: Vec<f64> = (0..50).map(|i| -0.1 * i as f64).collect();
        let cold = solver.solve(&logp, &[1.0; 50], 0.1).unwrap();
        let warm = solver.solve(&logp, &[1.0; 50], 0.1).unwrap();
        assert!(warm.iterations < cold.iterations);
        assert_abs_diff_eq!(warm.value, cold.value, epsilon = 1e-6);
    }

    #[test]
    fn indicator_kernel_reduces_to_plain() {
        let data = Dataset::from_column(&[0.0, 1.0, 2.5, 4.0]).unwrap();
        let op = KernelOperator::new(&data, &KernelSpec::Indicator).unwrap();
        let logp = [-0.5, -1.5, -3.0, -0.2];
        let cfg = AdmmConfig::default();
        let k = i_projection_kernelized(&logp, &op, 0.2, &cfg).unwrap();
        let p = i_projection(&logp, &distinct(4), 0.2, &cfg).unwrap();
        assert_abs_diff_eq!(k.value, p.value, epsilon = 1e-6);
    }

    #[test]
    fn kernel_operator_is_row_stochastic() {
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.3, 2.0]], None).unwrap();
        let op = KernelOperator::new(&data, &KernelSpec::Gaussian { bandwidth: 1.0 }).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(op.matrix().row(i).sum(), 1.0, epsilon = 1e-14);
        }
        let s = op.singular_values();
        assert!(s.windows(2).all(|p| p[0] >= p[1]));
        assert!(op.condition_number() >= 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = AdmmConfig::default();
        assert!(i_projection(&[f64::NEG_INFINITY], &[1], 0.1, &cfg).is_err());
        assert!(i_projection(&[-1.0], &[1], -0.1, &cfg).is_err());
        assert!(i_projection(&[-1.0, -2.0], &[1], 0.1, &cfg).is_err());
        assert!(AdmmSolver::new(AdmmConfig { max_iters: 0, ..cfg }).is_err());
    }
}
