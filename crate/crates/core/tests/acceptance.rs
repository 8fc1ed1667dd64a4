//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Failing criteria are reported,
//! not turned into a non-zero exit, so the rest of the suite still runs.

use std::time::{Duration, Instant};

use owl_core::bench::{corrupt, run_corruption_sweep, CorruptionPlan, Method, Scenario, Scheme, Selector, SweepConfig};
use owl_core::prox::{project_l1_ball, project_simplex, prox_entropy, ProxKlCoeffs};
use owl_core::verify::{coarsened_likelihood_mc, okl_bruteforce};
use owl_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StandardNormal};

/// Traces and weight vectors collected across criteria for 5 and 6.
#[derive(Default)]
struct Collected {
    traces: Vec<FitTrace>,
    weights: Vec<WeightVector>,
}

impl Collected {
    fn add(&mut self, fit: &OwlFit) {
        self.traces.push(fit.trace.clone());
        self.weights.push(fit.weights.clone());
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome, elapsed: Duration) {
    println!(
        "criterion {id:>2} [{}] {name}: {} ({:.1}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
}

fn sorted_means(p: &ModelParams) -> Vec<f64> {
    let ModelParams::GaussianMixture(m) = p else {
        panic!("mixture expected")
    };
    let mut mu: Vec<f64> = m.components.iter().map(|c| c.mean[0]).collect();
    mu.sort_by(f64::total_cmp);
    mu
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn figure_one(c: &mut Collected) -> Outcome {
    let spec = ModelSpec::gaussian_mixture(CovarianceKind::Spherical, 2);
    let nd = Normal::new(0.0, 0.25).unwrap();
    let (mut owl_ok, mut mle_fail) = (0, 0);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..1000)
            .map(|_| if rng.random::<bool>() { 2.5 } else { -2.5 } + nd.sample(&mut rng))
            .collect();
        let clean = Dataset::from_column(&xs).unwrap();
        let plan = CorruptionPlan {
            fraction: 0.05,
            selector: Selector::Random,
            scheme: Scheme::UniformBox { lo: -1.0, hi: 1.0 },
            seed,
        };
        let (data, _) = corrupt(&clean, &plan, &spec).unwrap();
        let cfg = OwlConfig {
            restarts: 3,
            seed,
            ..OwlConfig::default().with_epsilon(0.05)
        };
        let within = |mu: &[f64]| (mu[0] + 2.5).abs() <= 0.15 && (mu[1] - 2.5).abs() <= 0.15;
        let owl = owl_fit(&spec, &data, &cfg, None).unwrap();
        c.add(&owl);
        owl_ok += within(&sorted_means(&owl.params)) as usize;
        let mle = owl_fit(&spec, &data, &cfg.clone().with_epsilon(0.0), None).unwrap();
        c.add(&mle);
        mle_fail += !within(&sorted_means(&mle.params)) as usize;
    }
    Outcome {
        pass: owl_ok >= 45 && mle_fail >= 25,
        detail: format!("OWL within 0.15 in {owl_ok}/50 (need 45), MLE outside in {mle_fail}/50 (need 25)"),
    }
}

fn gaussian_sweep() -> Outcome {
    let scenario = Scenario::GaussianMean { n: 200, d: 5 };
    let cfg = SweepConfig {
        owl: OwlConfig {
            restarts: 3,
            ..OwlConfig::default()
        },
        selector: Selector::Random,
        ..SweepConfig::default()
    };
    let seeds: Vec<u64> = (0..20).collect();
    let rows = run_corruption_sweep(&scenario, &[0.2], &[Method::OwlKnownEpsilon, Method::Mle], &seeds, &cfg).unwrap();
    let mut owl: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == "owl_eps_known")
        .map(|r| r.metric)
        .collect();
    let mut mle: Vec<f64> = rows.iter().filter(|r| r.method == "mle").map(|r| r.metric).collect();
    let (mo, mm) = (median(&mut owl), median(&mut mle));
    Outcome {
        pass: mo <= 0.25 * mm,
        detail: format!(
            "median MSE OWL {mo:.4} vs MLE {mm:.4} (ratio {:.4}, need <= 0.25)",
            mo / mm
        ),
    }
}

fn oracle_equivalence(c: &mut Collected) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let n = 40;
    for _ in 0..100 {
        let m = rng.random_range(2..=4usize);
        let atoms: Vec<f64> = (0..n).map(|_| rng.random_range(0..m) as f64).collect();
        let mut p_hat = vec![0.0; m];
        for &a in &atoms {
            p_hat[a as usize] += 1.0 / n as f64;
        }
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p_theta: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let eps = rng.random_range(0..=150) as f64 * 1e-3;
        let data = Dataset::from_column(&atoms).unwrap();
        let logp: Vec<f64> = atoms.iter().map(|&a| p_theta[a as usize].ln()).collect();
        let res = i_projection(&logp, data.counts(), eps, &AdmmConfig::default()).unwrap();
        c.weights.push(res.weights.clone());
        let brute = okl_bruteforce(&p_hat, &p_theta, eps, 1e-3).unwrap();
        worst = worst.max((res.value - brute).abs());
    }
    Outcome {
        pass: worst <= 1e-3,
        detail: format!("max |ADMM − grid| = {worst:.2e} over 100 instances (need <= 1e-3)"),
    }
}

fn sanov() -> Outcome {
    let p_theta = [0.7, 0.3];
    let data = |n: usize| -> Vec<usize> { (0..n).map(|i| i % 2).collect() };
    let okl = okl_bruteforce(&[0.5, 0.5], &p_theta, 0.25, 1e-3).unwrap();
    let mc = coarsened_likelihood_mc(&p_theta, &data(50), 0.25, 200_000, 0).unwrap();
    let gap50 = (mc.estimate + okl).abs();
    let gap = |n: usize| {
        let mut g: Vec<f64> = (0..10u64)
            .map(|s| {
                (coarsened_likelihood_mc(&p_theta, &data(n), 0.25, 200_000, 100 + s)
                    .unwrap()
                    .estimate
                    + okl)
                    .abs()
            })
            .collect();
        median(&mut g)
    };
    let (g20, g100) = (gap(20), gap(100));
    Outcome {
        pass: gap50 <= 0.02 && g100 <= g20,
        detail: format!(
            "n=50: |MC + OKL| = {gap50:.4} (MC {:.4} ± {:.4}, OKL {okl:.4}; need <= 0.02); median gap n=20 {g20:.4}, n=100 {g100:.4}",
            mc.estimate, mc.std_error
        ),
    }
}

fn descent(c: &Collected) -> Outcome {
    let worst = c
        .traces
        .iter()
        .map(FitTrace::max_increase)
        .fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: worst <= 1e-7,
        detail: format!(
            "{} traces, largest single-step OKL increase {worst:.2e} (need <= 1e-7)",
            c.traces.len()
        ),
    }
}

fn feasibility(c: &Collected) -> Outcome {
    let mut mass = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    let mut negative = false;
    for w in &c.weights {
        mass = mass.max((w.as_slice().iter().sum::<f64>() - 1.0).abs());
        excess = excess.max(w.tv_from_uniform() - w.epsilon());
        negative |= w.as_slice().iter().any(|&v| v < 0.0);
    }
    Outcome {
        pass: mass <= 1e-9 && excess <= 1e-6 && !negative,
        detail: format!(
            "{} vectors, max |Σw − 1| = {mass:.2e}, max TV − ε = {excess:.2e}, negative entries: {negative}",
            c.weights.len()
        ),
    }
}

fn tuning(c: &mut Collected) -> Outcome {
    let scenario = Scenario::GaussianMean { n: 200, d: 5 };
    let spec = scenario.spec();
    let grid = uniform_grid(0.0, 0.3, 0.025).unwrap();
    let mut hits = 0;
    let mut chosen = Vec::new();
    for seed in 0..20u64 {
        let data = scenario.generate(1000 + seed).unwrap();
        let plan = CorruptionPlan {
            fraction: 0.1,
            selector: Selector::Random,
            scheme: scenario.scheme(),
            seed,
        };
        let (train, _) = corrupt(&data.train, &plan, &spec).unwrap();
        let cfg = OwlConfig {
            restarts: 10,
            seed,
            ..OwlConfig::default()
        };
        let r = tune_epsilon(&spec, &train, &grid, &cfg).unwrap();
        let fit = owl_fit(&spec, &train, &cfg.clone().with_epsilon(r.chosen), None).unwrap();
        c.add(&fit);
        hits += ((r.chosen - 0.1).abs() <= 0.025 + 1e-9) as usize;
        chosen.push(r.chosen);
    }
    Outcome {
        pass: hits >= 15,
        detail: format!("chosen within one step of 0.1 in {hits}/20 (need 15); chosen {chosen:.3?}"),
    }
}

fn prox_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut kkt = 0.0f64;
    let mut idem = 0.0f64;
    let mut expansive = 0.0f64;
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let gauss = |rng: &mut ChaCha8Rng, n: usize, s: f64| -> Vec<f64> {
        (0..n).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let v = gauss(&mut rng, n, scale);
        let u = gauss(&mut rng, n, scale);
        let mass = rng.random_range(0.1..5.0);

        // Simplex: w = max(v − τ, 0) for one τ, and Σ w = mass.
        let w = project_simplex(&v, mass).unwrap();
        let tau = v
            .iter()
            .zip(&w)
            .filter(|(_, &wi)| wi > 0.0)
            .map(|(vi, wi)| vi - wi)
            .sum::<f64>()
            / w.iter().filter(|&&wi| wi > 0.0).count() as f64;
        let r = v
            .iter()
            .zip(&w)
            .map(|(vi, wi)| (wi - (vi - tau).max(0.0)).abs())
            .fold((w.iter().sum::<f64>() - mass).abs(), f64::max);
        kkt = kkt.max(r / scale.max(1.0));
        idem = idem.max(dist(&project_simplex(&w, mass).unwrap(), &w));
        let wu = project_simplex(&u, mass).unwrap();
        expansive = expansive.max(dist(&w, &wu) - dist(&v, &u));

        // ℓ1 ball: interior points fixed; otherwise soft-thresholded offsets on the sphere.
        let center = gauss(&mut rng, n, scale);
        let radius = rng.random_range(0.0..2.0) * scale;
        let b = project_l1_ball(&v, &center, radius).unwrap();
        let off: Vec<f64> = b.iter().zip(&center).map(|(x, c)| x - c).collect();
        let l1: f64 = off.iter().map(|x| x.abs()).sum();
        let vl1: f64 = v.iter().zip(&center).map(|(x, c)| (x - c).abs()).sum();
        let r = if vl1 <= radius {
            dist(&b, &v)
        } else {
            let d: Vec<f64> = v.iter().zip(&center).map(|(x, c)| x - c).collect();
            let lam = d
                .iter()
                .zip(&off)
                .filter(|(_, o)| o.abs() > 0.0)
                .map(|(di, oi)| di.abs() - oi.abs())
                .fold(0.0, f64::max);
            d.iter()
                .zip(&off)
                .map(|(di, oi)| (oi - di.signum() * (di.abs() - lam).max(0.0)).abs())
                .fold((l1 - radius).abs(), f64::max)
        };
        kkt = kkt.max(r / scale.max(1.0));
        idem = idem.max(dist(&project_l1_ball(&b, &center, radius).unwrap(), &b));
        let bu = project_l1_ball(&u, &center, radius).unwrap();
        expansive = expansive.max(dist(&b, &bu) - dist(&v, &u));

        // Entropy prox stationarity.
        let lambda = 10f64.powf(rng.random_range(-3.0..2.0));
        let log_a = gauss(&mut rng, n, 2.0);
        let z = prox_entropy(&v, lambda, &ProxKlCoeffs::from_log(log_a.clone()).unwrap()).unwrap();
        // λ(ln z + ln a + 1) + z = v. The residual is mapped to the solution
        // scale through the slope λ/z + 1 of the left side, which keeps it
        // meaningful when z is tiny; an underflowed z must have an exact
        // root below the smallest positive double.
        for i in 0..n {
            let target = v[i] - lambda * (log_a[i] + 1.0);
            let r = if z[i] == 0.0 {
                let tiny = f64::from_bits(1);
                if lambda * tiny.ln() + tiny >= target {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                let s = lambda * z[i].ln() + z[i] - target;
                s.abs() * z[i] / (lambda + z[i])
            };
            kkt = kkt.max(r / (1.0 + v[i].abs()));
        }
    }
    Outcome {
        pass: kkt <= 1e-10 && idem <= 1e-12 && expansive <= 1e-12,
        detail: format!(
            "max KKT residual {kkt:.2e} (need <= 1e-10), idempotence {idem:.2e}, expansion {expansive:.2e}"
        ),
    }
}

fn kernel_reduction(c: &mut Collected) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(3..=40);
        let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::from_column(&xs).unwrap();
        let logp: Vec<f64> = (0..n).map(|_| -rng.random_range(0.0..4.0)).collect();
        let eps = rng.random_range(0.01..0.5);
        let op = KernelOperator::new(&data, &KernelSpec::Indicator).unwrap();
        let k = i_projection_kernelized(&logp, &op, eps, &AdmmConfig::default()).unwrap();
        let u = i_projection(&logp, data.counts(), eps, &AdmmConfig::default()).unwrap();
        c.weights.push(k.weights.clone());
        c.weights.push(u.weights.clone());
        worst = worst.max((k.value - u.value).abs());
    }
    Outcome {
        pass: worst <= 1e-5,
        detail: format!("max |kernelized − plain| = {worst:.2e} over 20 instances (need <= 1e-5)"),
    }
}

fn model_selection(c: &mut Collected) -> Outcome {
    let spec = ModelSpec::gaussian_mixture(CovarianceKind::Spherical, 1);
    let chi = ChiSquared::new(10.0).unwrap();
    let ks = [1, 2, 3, 4, 5];
    let (mut owl_two, mut bic_many) = (0, 0);
    let mut picks = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let xs: Vec<f64> = (0..500)
            .map(|_| {
                if rng.random::<f64>() < 0.25 {
                    rng.sample::<f64, _>(StandardNormal)
                } else {
                    5.0 + (chi.sample(&mut rng) - 10.0) / 20f64.sqrt()
                }
            })
            .collect();
        let data = Dataset::from_column(&xs).unwrap();
        let cfg = OwlConfig {
            restarts: 4,
            seed,
            ..OwlConfig::default()
        };
        let owl = owl_selection_criterion(&spec, &data, &ks, 0.05, Penalty::Bic, &cfg).unwrap();
        let plain = mixture_selection(&spec, &data, &ks, Penalty::Bic, 5, seed).unwrap();
        for (_, f) in &owl.fits {
            c.add(f);
        }
        owl_two += (owl.chosen_k == 2) as usize;
        bic_many += (plain.chosen_k > 2) as usize;
        picks.push((owl.chosen_k, plain.chosen_k));
    }
    Outcome {
        pass: owl_two >= 15 && bic_many >= 12,
        detail: format!(
            "OWL BIC picks k=2 in {owl_two}/20 (need 15), plain BIC picks k>2 in {bic_many}/20 (need 12); (owl, plain) {picks:?}"
        ),
    }
}

fn main() {
    // Harness flags such as `--nocapture` are accepted and ignored.
    let only: Option<Vec<usize>> = std::env::var("OWL_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let run = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut c = Collected::default();
    let mut passed = 0;
    let mut total = 0;
    let mut time = |id: usize, name: &str, limit: Option<f64>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        let el = t.elapsed();
        if let Some(lim) = limit {
            if el.as_secs_f64() > lim {
                o.pass = false;
                o.detail.push_str(&format!("; over the {lim:.0}s budget"));
            }
        }
        report(id, name, &o, el);
        total += 1;
        passed += o.pass as usize;
    };
    if run(1) {
        time(1, "two-Gaussian reconstruction", Some(300.0), &mut || {
            figure_one(&mut c)
        });
    }
    if run(2) {
        time(2, "Gaussian mean sweep", Some(120.0), &mut gaussian_sweep);
    }
    if run(3) {
        time(3, "grid-oracle equivalence", Some(60.0), &mut || {
            oracle_equivalence(&mut c)
        });
    }
    if run(4) {
        time(4, "coarsened likelihood vs OKL", Some(120.0), &mut sanov);
    }
    if run(7) {
        time(7, "radius tuning", None, &mut || tuning(&mut c));
    }
    if run(8) {
        time(8, "proximal and projection KKT", Some(10.0), &mut prox_kkt);
    }
    if run(9) {
        time(9, "indicator-kernel reduction", None, &mut || kernel_reduction(&mut c));
    }
    if run(10) {
        time(10, "weighted model selection", Some(600.0), &mut || {
            model_selection(&mut c)
        });
    }
    if run(5) {
        time(5, "OKL descent across all runs", None, &mut || descent(&c));
    }
    if run(6) {
        time(6, "weight feasibility across all runs", None, &mut || feasibility(&c));
    }
    println!("acceptance: {passed}/{total} criteria passed");
}
