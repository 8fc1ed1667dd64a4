//! Choosing the TV radius from the shape of the minimal-OKL curve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{owl_fit, OwlConfig};
use crate::error::{OwlError, Result};
use crate::types::{Dataset, ModelSpec};

/// Minimal OKL over a grid of radii, its smoothed version and curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSearchResult {
    /// Radii that produced a fit, increasing.
    pub grid: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Curvature `f''/(1 + f'²)^{3/2}` of the smoothed curve; zero at the
    /// two end points, where no central difference exists.
    pub curvature: Vec<f64>,
    pub chosen: f64,
    /// The smoothed curve has no detectable bend; `chosen` is then the
    /// smallest interior radius.
    pub no_kink: bool,
    /// Radii whose fit failed.
    pub dropped: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `m` points spaced evenly in `log10` between `lo` and `hi`.
pub fn log_spaced_grid(lo: f64, hi: f64, m: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || m < 2 {
        return Err(OwlError::InvalidInput(
            "log-spaced grid needs 0 < lo < hi and at least two points".into(),
        ));
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..m)
        .map(|i| match i {
            0 => lo,
            _ if i == m - 1 => hi,
            _ => 10f64.powf(a + (b - a) * i as f64 / (m - 1) as f64),
        })
        .collect())
}

/// `start, start + step, …` up to and including `stop` (within a tenth of a
/// step, so that decimal steps land on the end point).
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(OwlError::InvalidInput(
            "uniform grid needs step > 0 and stop >= start".into(),
        ));
    }
    let m = ((stop - start) / step + 0.1).floor() as usize + 1;
    Ok((0..m).map(|i| start + step * i as f64).collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 5 {
        return Err(OwlError::InvalidInput(format!(
            "radius grid needs at least 5 points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(OwlError::InvalidInput("radius grid must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(OwlError::InvalidInput("radius grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Fits the model at every radius of `grid`, smooths the minimal OKL values
/// with a centered three-point moving average, and selects the radius of
/// largest curvature (ties toward the smaller radius).
pub fn tune_epsilon(spec: &ModelSpec, data: &Dataset, grid: &[f64], cfg: &OwlConfig) -> Result<EpsilonSearchResult> {
    check_grid(grid)?;
    let fits: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&e| owl_fit(spec, data, &cfg.clone().with_epsilon(e), None).map(|f| f.okl.value))
        .collect();
    let mut kept = Vec::new();
    let mut g_hat = Vec::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    for (&e, fit) in grid.iter().zip(fits) {
        match fit {
            Ok(v) => {
                kept.push(e);
                g_hat.push(v);
            }
            Err(err) => {
                warnings.push(format!("radius {e} dropped: {err}"));
                dropped.push(e);
            }
        }
    }
    if kept.len() < 5 {
        return Err(OwlError::FitFailed(format!(
            "only {} radii produced a fit; at least 5 are needed",
            kept.len()
        )));
    }
    let mut out = curvature_selection(&kept, &g_hat)?;
    out.dropped = dropped;
    out.warnings = warnings;
    Ok(out)
}

/// Smoothing, curvature and selection on a precomputed curve.
pub fn curvature_selection(grid: &[f64], g_hat: &[f64]) -> Result<EpsilonSearchResult> {
    check_grid(grid)?;
    crate::error::check_len(grid.len(), g_hat.len(), "curve values")?;
    let smoothed = moving_average(g_hat);
    let curvature = curvature(grid, &smoothed);
    let m = grid.len();
    let scale = smoothed.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut best = 1;
    for i in 2..m - 1 {
        if curvature[i] > curvature[best] {
            best = i;
        }
    }
    let no_kink = curvature[1..m - 1].iter().all(|c| c.abs() <= 1e-8 * scale);
    if no_kink {
        best = 1;
    }
    Ok(EpsilonSearchResult {
        grid: grid.to_vec(),
        g_hat: g_hat.to_vec(),
        smoothed,
        curvature,
        chosen: grid[best],
        no_kink,
        dropped: Vec::new(),
        warnings: Vec::new(),
    })
}

/// Centered window of three; the end points, which have no centered window,
/// are kept as they are.
fn moving_average(f: &[f64]) -> Vec<f64> {
    let m = f.len();
    (0..m)
        .map(|i| {
            if i == 0 || i == m - 1 {
                f[i]
            } else {
                (f[i - 1] + f[i] + f[i + 1]) / 3.0
            }
        })
        .collect()
}

/// Three-point finite differences on a possibly uneven grid.
fn curvature(x: &[f64], f: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut k = vec![0.0; m];
    for i in 1..m - 1 {
        let h1 = x[i] - x[i - 1];
        let h2 = x[i + 1] - x[i];
        let denom = h1 * h2 * (h1 + h2);
        let d1 = (h1 * h1 * f[i + 1] - h2 * h2 * f[i - 1] + (h2 * h2 - h1 * h1) * f[i]) / denom;
        let d2 = 2.0 * (h1 * f[i + 1] - (h1 + h2) * f[i] + h2 * f[i - 1]) / denom;
        k[i] = d2 / (1.0 + d1 * d1).powf(1.5);
    }
    k
}
