//! Implementations of the subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use owl_core::bench::{os_bootstrap, run_corruption_sweep, Method, Scenario, Selector, SweepConfig};
use owl_core::verify::{coarsened_likelihood_mc, okl_bruteforce, MAX_BRUTEFORCE_ATOMS};
use owl_core::{
    kernel_bandwidth_grid, log_spaced_grid, owl_fit, select_bandwidth, tune_epsilon, CovarianceKind, Dataset,
    EpsilonSearchResult, KernelSpec, ModelSpec, OwlConfig, OwlFit, VERSION,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io::{parse_grid, read_dataset, write_json, write_rows};
use crate::{
    BootstrapArgs, CovKind, DataArgs, FitArgs, KernelKind, MethodKind, ModelArgs, ModelKind, RunArgs, SelectorKind,
    SimulateArgs, TuneArgs, VerifyArgs,
};

/// Nearest-neighbor orders whose average distances are the automatic
/// bandwidth candidates.
const BANDWIDTH_KS: [usize; 4] = [5, 10, 25, 50];

/// n·w at or above this counts as an inlier; absorbs rounding of uniform weights.
const INLIER_THRESHOLD: f64 = 1.0 - 1e-9;

fn config_echo(command: &str, args: &impl Serialize, resolved: Value) -> Value {
    json!({
        "tool": "owl",
        "version": VERSION,
        "command": command,
        "args": args,
        "resolved": resolved,
    })
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn model_spec(m: &ModelArgs, has_response: bool) -> CliResult<ModelSpec> {
    let spec = match m.model {
        ModelKind::Gaussian => ModelSpec::gaussian(),
        ModelKind::Linear => ModelSpec::linear_regression(),
        ModelKind::Logistic => ModelSpec::logistic_regression(m.ridge),
        ModelKind::GaussianMixture => {
            let kind = match m.covariance {
                CovKind::Spherical => CovarianceKind::Spherical,
                CovKind::Diagonal => CovarianceKind::Diagonal,
                CovKind::Full => CovarianceKind::Full,
            };
            ModelSpec::gaussian_mixture(kind, m.k)
        }
        ModelKind::BernoulliMixture => ModelSpec::bernoulli_mixture(m.k),
    };
    if !spec.family.is_mixture() && m.k != 1 {
        return Err(CliError::Usage("--k applies to mixture models only".into()));
    }
    if spec.family.is_regression() != has_response {
        return Err(CliError::Usage(if has_response {
            "--response applies to regression models only".into()
        } else {
            "regression models need --response".into()
        }));
    }
    spec.validate()?;
    Ok(spec)
}

fn prepare(d: &DataArgs, m: &ModelArgs, r: &RunArgs) -> CliResult<(ModelSpec, Dataset, OwlConfig)> {
    let spec = model_spec(m, d.response.is_some())?;
    if r.kernel == KernelKind::Indicator && r.bandwidth.is_some() {
        return Err(CliError::Usage("--bandwidth needs --kernel gaussian".into()));
    }
    let data = read_dataset(&d.data, d.columns.as_deref(), d.response.as_deref())?;
    let cfg = OwlConfig {
        restarts: r.restarts,
        max_owl_iters: r.max_iters,
        seed: r.seed,
        ..OwlConfig::default()
    };
    cfg.validate()?;
    Ok((spec, data, cfg))
}

/// Sets the kernel of `cfg`. An automatic bandwidth is chosen by the final
/// OKL of fits at radius `epsilon`; the winning fit is returned with it.
fn resolve_kernel(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &mut OwlConfig,
    r: &RunArgs,
    epsilon: f64,
) -> CliResult<(Option<f64>, Option<OwlFit>)> {
    if r.kernel == KernelKind::Indicator {
        return Ok((None, None));
    }
    match r.bandwidth.as_deref().unwrap_or("auto") {
        "auto" => {
            let (grid, warnings) = kernel_bandwidth_grid(data, &BANDWIDTH_KS)?;
            warn_all(&warnings);
            let bws: Vec<f64> = grid.iter().map(|&(_, h)| h).filter(|&h| h > 0.0).collect();
            if bws.is_empty() {
                return Err(CliError::Data("all nearest-neighbor distances are zero".into()));
            }
            let (h, fit) = select_bandwidth(spec, data, &cfg.clone().with_epsilon(epsilon), &bws)?;
            cfg.kernel = KernelSpec::Gaussian { bandwidth: h };
            Ok((Some(h), Some(fit)))
        }
        s => {
            let h: f64 = s
                .parse()
                .map_err(|_| CliError::Usage(format!("bandwidth '{s}' is neither 'auto' nor a number")))?;
            cfg.kernel = KernelSpec::Gaussian { bandwidth: h };
            cfg.kernel.validate()?;
            Ok((Some(h), None))
        }
    }
}

fn radius_grid(grid: Option<&str>) -> CliResult<Vec<f64>> {
    match grid {
        Some(s) => parse_grid(s),
        None => Ok(log_spaced_grid(1e-4, 1e-1, 50)?),
    }
}

#[derive(Serialize)]
struct SearchRow {
    epsilon: f64,
    g_hat: f64,
    smoothed: f64,
    curvature: f64,
}

fn write_search(path: &Path, s: &EpsilonSearchResult, config: &Value) -> CliResult<()> {
    let rows: Vec<SearchRow> = (0..s.grid.len())
        .map(|i| SearchRow {
            epsilon: s.grid[i],
            g_hat: s.g_hat[i],
            smoothed: s.smoothed[i],
            curvature: s.curvature[i],
        })
        .collect();
    write_rows(path, &rows, config)
}

fn report_search(s: &EpsilonSearchResult) {
    warn_all(&s.warnings);
    if s.no_kink {
        eprintln!("warning: the OKL curve shows no bend; using the smallest interior radius");
    }
    println!("chosen epsilon: {}", s.chosen);
}

pub fn tune(a: &TuneArgs) -> CliResult<()> {
    let (spec, data, mut cfg) = prepare(&a.data, &a.model, &a.run)?;
    let grid = radius_grid(a.grid.as_deref())?;
    let reference = grid[grid.len() / 2];
    let (bandwidth, _) = resolve_kernel(&spec, &data, &mut cfg, &a.run, reference)?;
    let search = tune_epsilon(&spec, &data, &grid, &cfg)?;
    out_dir(&a.out)?;
    let config = config_echo(
        "tune",
        a,
        json!({"grid": grid, "bandwidth": bandwidth, "chosen": search.chosen, "no_kink": search.no_kink,
               "dropped": search.dropped}),
    );
    write_search(&a.out.join("epsilon_search.csv"), &search, &config)?;
    report_search(&search);
    Ok(())
}

#[derive(Serialize)]
struct WeightRow {
    index: usize,
    n_w: f64,
    inlier: bool,
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    okl: f64,
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let (spec, data, mut cfg) = prepare(&a.data, &a.model, &a.run)?;
    if a.grid.is_some() && !a.tune {
        return Err(CliError::Usage("--grid needs --tune".into()));
    }
    let mut resolved = serde_json::Map::new();
    let grid = if a.tune {
        Some(radius_grid(a.grid.as_deref())?)
    } else {
        None
    };
    let reference = match (&grid, a.epsilon) {
        (Some(g), _) => g[g.len() / 2],
        (None, Some(e)) => e,
        (None, None) => return Err(CliError::Usage("give --epsilon or --tune".into())),
    };
    cfg.clone().with_epsilon(reference).validate()?;
    let (bandwidth, prefit) = resolve_kernel(&spec, &data, &mut cfg, &a.run, reference)?;
    resolved.insert("bandwidth".into(), json!(bandwidth));

    let mut search = None;
    let epsilon = match &grid {
        Some(g) => {
            let s = tune_epsilon(&spec, &data, g, &cfg)?;
            report_search(&s);
            resolved.insert("grid".into(), json!(g));
            let chosen = s.chosen;
            search = Some(s);
            chosen
        }
        None => reference,
    };
    resolved.insert("epsilon".into(), json!(epsilon));
    cfg.epsilon = epsilon;
    let fit = match prefit {
        Some(f) if f.okl.weights.epsilon() == epsilon => f,
        _ => owl_fit(&spec, &data, &cfg, None)?,
    };
    warn_all(&fit.warnings);

    out_dir(&a.out)?;
    let config = config_echo("fit", a, Value::Object(resolved));
    write_json(
        &a.out.join("params.json"),
        &json!({
            "config": config,
            "epsilon": epsilon,
            "okl": fit.okl.value,
            "restart": fit.restart,
            "iterations": fit.trace.okl_per_iter.len(),
            "terminated_reason": fit.trace.terminated_reason,
            "warnings": fit.warnings,
            "params": fit.params,
        }),
    )?;
    let scaled = fit.weights.scaled();
    let rows: Vec<WeightRow> = scaled
        .iter()
        .enumerate()
        .map(|(index, &n_w)| WeightRow {
            index,
            n_w,
            inlier: n_w >= INLIER_THRESHOLD,
        })
        .collect();
    write_rows(&a.out.join("weights.csv"), &rows, &config)?;
    let trace: Vec<TraceRow> = fit
        .trace
        .okl_per_iter
        .iter()
        .enumerate()
        .map(|(iteration, &okl)| TraceRow { iteration, okl })
        .collect();
    write_rows(&a.out.join("trace.csv"), &trace, &config)?;
    if let Some(s) = &search {
        write_search(&a.out.join("epsilon_search.csv"), s, &config)?;
    }
    let outliers = rows.iter().filter(|r| !r.inlier).count();
    println!(
        "epsilon {epsilon}  okl {:.6}  down-weighted {outliers}/{}",
        fit.okl.value,
        data.n()
    );
    Ok(())
}

fn scenario(a: &SimulateArgs) -> CliResult<Scenario> {
    let mut s = Scenario::from_id(&a.scenario)?;
    match &mut s {
        Scenario::GaussianMean { n, d }
        | Scenario::LinearRegression { n, d }
        | Scenario::LogisticRegression { n, d } => {
            if a.k.is_some() {
                return Err(CliError::Usage(format!("--k does not apply to {}", a.scenario)));
            }
            *n = a.n.unwrap_or(*n);
            *d = a.d.unwrap_or(*d);
        }
        Scenario::GaussianMixture { n, d, k } | Scenario::BernoulliMixture { n, d, k } => {
            *n = a.n.unwrap_or(*n);
            *d = a.d.unwrap_or(*d);
            *k = a.k.unwrap_or(*k);
        }
    }
    Ok(s)
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let scen = scenario(a)?;
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let methods: Vec<Method> = a
        .methods
        .iter()
        .map(|m| match m {
            MethodKind::Owl => Method::Owl,
            MethodKind::OwlKnown => Method::OwlKnownEpsilon,
            MethodKind::Mle => Method::Mle,
        })
        .collect();
    let mut cfg = SweepConfig {
        owl: OwlConfig {
            restarts: a.restarts,
            seed: a.seed,
            ..OwlConfig::default()
        },
        selector: match a.selector {
            SelectorKind::MaxLikelihood => Selector::MaxLikelihood,
            SelectorKind::Random => Selector::Random,
        },
        ..SweepConfig::default()
    };
    if let Some(g) = &a.grid {
        cfg.tune_grid = parse_grid(g)?;
    }
    cfg.owl.validate()?;
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let rows = run_corruption_sweep(&scen, &a.fractions, &methods, &seeds, &cfg)?;

    out_dir(&a.out)?;
    let config = config_echo("simulate", a, json!({"scenario": scen, "sweep": cfg, "seeds": seeds}));
    write_rows(&a.out.join("sweep.csv"), &rows, &config)?;

    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        let fi = a.fractions.iter().position(|&f| f == r.fraction).unwrap_or(0);
        let mi = methods.iter().position(|m| m.name() == r.method).unwrap_or(0);
        cells.entry((fi, mi)).or_default().push(r.metric);
    }
    let mut summary = Vec::new();
    println!("fraction  method          median {}", scen.metric_name());
    for ((fi, mi), mut v) in cells {
        v.sort_by(f64::total_cmp);
        let med = owl_core::bench::quantile(&v, 0.5);
        println!("{:<8}  {:<14}  {med:.6}", a.fractions[fi], methods[mi].name());
        summary.push(
            json!({"fraction": a.fractions[fi], "method": methods[mi].name(), "median": med,
                            "seeds": v.len()}),
        );
    }
    write_json(
        &a.out.join("summary.json"),
        &json!({"config": config, "metric": scen.metric_name(), "cells": summary}),
    )
}

pub fn bootstrap(a: &BootstrapArgs) -> CliResult<()> {
    let (spec, data, mut cfg) = prepare(&a.data, &a.model, &a.run)?;
    cfg.epsilon = a.epsilon;
    cfg.validate()?;
    let (bandwidth, prefit) = resolve_kernel(&spec, &data, &mut cfg, &a.run, a.epsilon)?;
    let fit = match prefit {
        Some(f) => f,
        None => owl_fit(&spec, &data, &cfg, None)?,
    };
    warn_all(&fit.warnings);
    let bands = os_bootstrap(
        &data,
        &fit.weights,
        |d| owl_fit(&spec, d, &cfg, None).map(|f| f.params),
        a.replicates,
        a.level,
        a.run.seed,
    )?;
    warn_all(&bands.warnings);

    out_dir(&a.out)?;
    let config = config_echo("bootstrap", a, json!({"bandwidth": bandwidth}));
    let estimate: BTreeMap<String, f64> = fit.params.flatten().into_iter().collect();
    let mut w = crate::io::table_writer(&a.out.join("bands.csv"), Some(&config))?;
    let csv_err = |e: csv::Error| CliError::Data(format!("bands.csv: {e}"));
    w.write_record(["name", "estimate", "lower", "upper"])
        .map_err(csv_err)?;
    for (j, name) in bands.names.iter().enumerate() {
        let est = estimate.get(name).map_or(String::new(), |v| v.to_string());
        w.write_record([
            name.clone(),
            est,
            bands.lower[j].to_string(),
            bands.upper[j].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("bands.csv: {e}")))?;

    let mut w = crate::io::table_writer(&a.out.join("replicates.csv"), Some(&config))?;
    let csv_err = |e: csv::Error| CliError::Data(format!("replicates.csv: {e}"));
    let mut header = vec!["replicate".to_string()];
    header.extend(bands.names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (r, vals) in bands.replicates.iter().enumerate() {
        let mut rec = vec![r.to_string()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("replicates.csv: {e}")))?;

    write_json(
        &a.out.join("bootstrap.json"),
        &json!({"config": config, "level": bands.level, "replicates": bands.replicates.len(),
                "outliers": bands.outliers, "inliers": bands.inliers, "warnings": bands.warnings}),
    )?;
    println!(
        "{} replicates, {} down-weighted and {} regular observations; bands in bands.csv",
        bands.replicates.len(),
        bands.outliers.len(),
        bands.inliers.len()
    );
    Ok(())
}

/// Atom counts summing to `n` closest to `n·p` (largest remainders).
fn apportion(p: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = p.iter().map(|q| q * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &j in order.iter().take(short) {
        counts[j] += 1;
    }
    counts
}

fn probability_vector(name: &str, p: &[f64], m: usize) -> CliResult<()> {
    if p.len() != m {
        return Err(CliError::Usage(format!("{name} has {} entries, expected {m}", p.len())));
    }
    if p.iter().any(|&q| !(q >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CliError::Usage(format!("{name} must be nonnegative and sum to one")));
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> CliResult<()> {
    let m = a.support;
    if !(2..=MAX_BRUTEFORCE_ATOMS).contains(&m) {
        return Err(CliError::Usage(format!(
            "--support must lie in 2..={MAX_BRUTEFORCE_ATOMS}"
        )));
    }
    if a.n == 0 || a.reps == 0 {
        return Err(CliError::Usage("--n and --reps must be positive".into()));
    }
    let p_theta = match (&a.p_theta, m) {
        (Some(p), _) => p.clone(),
        (None, 2) => vec![0.7, 0.3],
        (None, _) => return Err(CliError::Usage("--p-theta is required when --support is not 2".into())),
    };
    probability_vector("--p-theta", &p_theta, m)?;
    let p_target = a.p_hat.clone().unwrap_or_else(|| vec![1.0 / m as f64; m]);
    probability_vector("--p-hat", &p_target, m)?;
    let counts = apportion(&p_target, a.n);
    let x_data: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(j, &c)| std::iter::repeat_n(j, c))
        .collect();
    let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / a.n as f64).collect();
    let resolution = a.resolution.unwrap_or(if m <= 3 { 1e-3 } else { 1e-2 });

    let mc = coarsened_likelihood_mc(&p_theta, &x_data, a.eps, a.reps, a.seed)?;
    let okl = okl_bruteforce(&p_hat, &p_theta, a.eps, resolution)?;
    let gap = (mc.estimate + okl).abs();
    println!("mc_estimate    {}", mc.estimate);
    println!("mc_std_error   {}", mc.std_error);
    println!("hits           {}/{}", mc.hits, mc.reps);
    println!("okl_bruteforce {okl}");
    println!("gap            {gap}");
    if mc.no_hits {
        eprintln!("warning: no replicate landed in the ball; increase --reps or --eps");
    }
    if let Some(path) = &a.out {
        let config = config_echo(
            "verify",
            a,
            json!({"p_theta": p_theta, "p_hat": p_hat, "resolution": resolution}),
        );
        write_json(
            path,
            &json!({"config": config, "mc": mc, "okl_bruteforce": okl, "gap": gap}),
        )?;
    }
    Ok(())
}
