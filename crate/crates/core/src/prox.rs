//! Euclidean projections and the entropy proximal operator.

use crate::error::{OwlError, Result};

/// Coefficients of the separable entropy term `Σ z_i (log z_i + log_a_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxKlCoeffs {
    pub log_a: Vec<f64>,
}

impl ProxKlCoeffs {
    pub fn from_log(log_a: Vec<f64>) -> Result<Self> {
        if log_a.iter().any(|v| !v.is_finite()) {
            return Err(OwlError::InvalidInput("entropy coefficients must be finite".into()));
        }
        Ok(Self { log_a })
    }

    /// `a_i > 0` given directly.
    pub fn from_linear(a: &[f64]) -> Result<Self> {
        if a.iter().any(|&v| !(v > 0.0)) {
            return Err(OwlError::InvalidInput("entropy coefficients must be positive".into()));
        }
        Self::from_log(a.iter().map(|v| v.ln()).collect())
    }
}

/// Euclidean projection onto `{w ≥ 0, Σ w = mass}`.
pub fn project_simplex(v: &[f64], mass: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(OwlError::InvalidInput("cannot project an empty vector".into()));
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(OwlError::InvalidInput("simplex mass must be positive".into()));
    }
    check_finite(v)?;
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_into(v, mass, &mut out, &mut scratch);
    Ok(out)
}

/// Euclidean projection onto `{w : ‖w − center‖₁ ≤ radius}`.
pub fn project_l1_ball(v: &[f64], center: &[f64], radius: f64) -> Result<Vec<f64>> {
    if v.len() != center.len() {
        return Err(OwlError::Dimension {
            expected: v.len(),
            got: center.len(),
            context: "ball center",
        });
    }
    if !(radius >= 0.0) {
        return Err(OwlError::InvalidInput(format!("negative radius {radius}")));
    }
    check_finite(v)?;
    check_finite(center)?;
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    project_l1_ball_into(v, center, radius, &mut out, &mut scratch);
    Ok(out)
}

/// Coordinatewise minimizer of `z (log z + log a) + (z − x)² / (2λ)`.
///
/// The stationarity condition `λ(log(z a) + 1) + z − x = 0` is solved as
/// `z = λ ω(t)` with `t = x/λ − 1 − log a − log λ`, where `ω` is the Wright
/// omega function evaluated in log scale.
pub fn prox_entropy(x: &[f64], lambda: f64, coeffs: &ProxKlCoeffs) -> Result<Vec<f64>> {
    if x.len() != coeffs.log_a.len() {
        return Err(OwlError::Dimension {
            expected: coeffs.log_a.len(),
            got: x.len(),
            context: "prox input",
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(OwlError::InvalidInput("prox parameter must be positive".into()));
    }
    check_finite(x)?;
    if coeffs.log_a.iter().any(|v| !v.is_finite()) {
        return Err(OwlError::InvalidInput("entropy coefficients must be finite".into()));
    }
    let mut out = vec![0.0; x.len()];
    let mut guess = vec![f64::NAN; x.len()];
    prox_entropy_into(x, lambda, &coeffs.log_a, &mut out, &mut guess);
    Ok(out)
}

/// Wright omega `ω(t)`, the solution of `ω + ln ω = t`.
pub fn wright_omega(t: f64) -> f64 {
    log_wright_omega(t, f64::NAN).exp()
}

/// `ln ω(t)`: the root `v` of `e^v + v = t`, by Newton's method.
///
/// `e^v + v − t` is increasing and convex, so Newton converges from any start;
/// after the first step the iterates approach the root from above. A finite
/// `guess` (for example the previous solution) replaces the asymptotic start.
pub fn log_wright_omega(t: f64, guess: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return f64::INFINITY;
    }
    if t < -745.0 {
        // ω(t) = e^{t − ω} ≈ e^t to machine precision here.
        return t;
    }
    // The root satisfies v < t; a guess outside that range (or one that would
    // overflow `exp`) is discarded.
    let mut v = if guess.is_finite() && guess < t && guess < 700.0 {
        guess
    } else if t > 1.0 {
        (t - t.ln()).ln()
    } else {
        t
    };
    for _ in 0..100 {
        let ev = v.exp();
        let g = ev + v - t;
        let step = g / (ev + 1.0);
        v -= step;
        if step.abs() <= 1e-15 * v.abs().max(1.0) {
            break;
        }
    }
    v
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(OwlError::InvalidInput("input contains non-finite values".into()));
    }
    Ok(())
}

/// Threshold `τ` with `Σ max(v_i − τ, 0) = mass`; `scratch` is reused storage.
fn simplex_threshold(v: &[f64], mass: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = scratch[0] - mass;
    for (j, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - mass) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    tau
}

pub(crate) fn project_simplex_into(v: &[f64], mass: f64, out: &mut [f64], scratch: &mut Vec<f64>) {
    let tau = simplex_threshold(v, mass, scratch);
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(0.0);
    }
}

pub(crate) fn project_l1_ball_into(v: &[f64], center: &[f64], radius: f64, out: &mut [f64], scratch: &mut Vec<f64>) {
    let dist: f64 = v.iter().zip(center).map(|(a, c)| (a - c).abs()).sum();
    if dist <= radius {
        out.copy_from_slice(v);
        return;
    }
    if radius == 0.0 {
        out.copy_from_slice(center);
        return;
    }
    // Project |v − c| onto the simplex of mass `radius`, then restore signs.
    for ((o, a), c) in out.iter_mut().zip(v).zip(center) {
        *o = (a - c).abs();
    }
    let tau = simplex_threshold(out, radius, scratch);
    for ((o, a), c) in out.iter_mut().zip(v).zip(center) {
        let mag = (*o - tau).max(0.0);
        *o = c + mag.copysign(a - c);
    }
}

/// In-place entropy prox; `guess` carries `ln z_i` between calls.
pub(crate) fn prox_entropy_into(x: &[f64], lambda: f64, log_a: &[f64], out: &mut [f64], guess: &mut [f64]) {
    let ln_lambda = lambda.ln();
    for i in 0..x.len() {
        let t = x[i] / lambda - 1.0 - log_a[i] - ln_lambda;
        let v = log_wright_omega(t, guess[i] - ln_lambda);
        guess[i] = v + ln_lambda;
        out[i] = lambda * v.exp();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simplex_examples() {
        let p = project_simplex(&[0.2, 0.3, 0.5], 1.0).unwrap();
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let p = project_simplex(&[0.6, 0.6, 0.6], 1.0).unwrap();
        for a in p {
            assert_abs_diff_eq!(a, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(project_simplex(&[1.5, -0.5, 0.0], 1.0).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(project_simplex(&[], 1.0).is_err());
    }

    #[test]
    fn l1_ball_examples() {
        let c = [1.0 / 3.0; 3];
        let v = [0.38, 0.3, 1.0 / 3.0 - 0.0133];
        assert_eq!(project_l1_ball(&v, &c, 0.2).unwrap(), v.to_vec());
        assert_eq!(project_l1_ball(&[5.0, -1.0, 2.0], &c, 0.0).unwrap(), c.to_vec());
        let p = project_l1_ball(&[1.0, 0.0, 0.0], &c, 0.2).unwrap();
        assert_abs_diff_eq!(p[0], 0.5333333333333333, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 1.0 / 3.0, epsilon = 1e-12);
        assert!(project_l1_ball(&[0.0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn prox_examples() {
        let c = ProxKlCoeffs::from_linear(&[(-1.0f64).exp()]).unwrap();
        assert_abs_diff_eq!(prox_entropy(&[1.0], 1.0, &c).unwrap()[0], 1.0, epsilon = 1e-14);

        let one = ProxKlCoeffs::from_linear(&[1.0]).unwrap();
        assert_abs_diff_eq!(prox_entropy(&[0.7], 1e-8, &one).unwrap()[0], 0.7, epsilon = 1e-5);

        // 2(log z + 1) + z = 0 by bisection.
        let (mut lo, mut hi) = (1e-12f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * (mid.ln() + 1.0) + mid > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_abs_diff_eq!(
            prox_entropy(&[0.0], 2.0, &one).unwrap()[0],
            0.5 * (lo + hi),
            epsilon = 1e-12
        );
    }

    #[test]
    fn wright_omega_identities() {
        assert_abs_diff_eq!(wright_omega(1.0), 1.0, epsilon = 1e-15);
        for t in [-800.0, -50.0, -3.0, -0.2, 0.0, 0.5, 2.0, 40.0, 1e6, 1e200] {
            let w = wright_omega(t);
            if w > 0.0 {
                let r = (w + w.ln() - t).abs();
                assert!(r <= 1e-12 * t.abs().max(1.0), "t={t} residual {r}");
            }
        }
    }

    #[test]
    fn prox_rejects_bad_input() {
        let c = ProxKlCoeffs::from_linear(&[1.0]).unwrap();
        assert!(prox_entropy(&[1.0], 0.0, &c).is_err());
        assert!(prox_entropy(&[f64::NAN], 1.0, &c).is_err());
        assert!(ProxKlCoeffs::from_log(vec![f64::INFINITY]).is_err());
        assert!(ProxKlCoeffs::from_linear(&[0.0]).is_err());
    }
}
