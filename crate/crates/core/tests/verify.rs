use approx::assert_abs_diff_eq;
use owl_core::verify::*;
use owl_core::*;

#[test]
fn bruteforce_examples() {
    let p_hat = [0.5, 0.5];
    let p = [0.7, 0.3];
    let v = okl_bruteforce(&p_hat, &p, 0.0, 1e-3).unwrap();
    assert_abs_diff_eq!(v, kl_divergence(&p_hat, &p), epsilon = 1e-12);

    let tv = total_variation(&p_hat, &p);
    assert_abs_diff_eq!(okl_bruteforce(&p_hat, &p, tv, 1e-3).unwrap(), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(okl_bruteforce(&p_hat, &p, 0.9, 1e-3).unwrap(), 0.0, epsilon = 1e-12);

    let v = okl_bruteforce(&p_hat, &p, 0.1, 1e-3).unwrap();
    let direct = 0.6f64 * (0.6f64 / 0.7).ln() + 0.4 * (0.4f64 / 0.3).ln();
    assert_abs_diff_eq!(v, direct, epsilon = 1e-12);
}

#[test]
fn bruteforce_rejects_bad_inputs() {
    let u6 = [1.0 / 6.0; 6];
    assert!(okl_bruteforce(&u6, &u6, 0.1, 0.01).is_err());
    assert!(okl_bruteforce(&[0.5, 0.5], &[0.5, 0.5], 0.1, 0.3).is_err());
    assert!(okl_bruteforce(&[0.5, 0.6], &[0.5, 0.5], 0.1, 0.1).is_err());
    assert!(okl_bruteforce(&[0.5, 0.5], &[0.5, 0.5], -0.1, 0.1).is_err());
}

#[test]
fn monte_carlo_trivial_cases() {
    let r = coarsened_likelihood_mc(&[0.7, 0.3], &[0, 1, 1], 1.0, 100, 1).unwrap();
    assert_eq!((r.estimate, r.hits), (0.0, 100));

    let r = coarsened_likelihood_mc(&[1.0, 0.0], &[0; 20], 0.0, 1000, 2).unwrap();
    assert_eq!(r.estimate, 0.0);
    assert_eq!(r.hits, 1000);

    let r = coarsened_likelihood_mc(&[1.0, 0.0], &[1; 20], 0.1, 1000, 2).unwrap();
    assert!(r.no_hits);
    assert_eq!(r.estimate, f64::NEG_INFINITY);

    assert!(coarsened_likelihood_mc(&[0.5, 0.5], &[2], 0.1, 10, 0).is_err());
    assert!(coarsened_likelihood_mc(&[0.5, 0.5], &[], 0.1, 10, 0).is_err());
}

#[test]
fn monte_carlo_is_reproducible() {
    let data: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let a = coarsened_likelihood_mc(&[0.5, 0.3, 0.2], &data, 0.2, 20_000, 9).unwrap();
    let b = coarsened_likelihood_mc(&[0.5, 0.3, 0.2], &data, 0.2, 20_000, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.std_error > 0.0 && a.std_error < 0.01);
}

#[test]
fn monte_carlo_tracks_the_okl() {
    // Large deviations: (1/n) log P(TV ≤ ε) ≈ −OKL for moderate n.
    let data: Vec<usize> = (0..50).map(|i| i % 2).collect();
    let r = coarsened_likelihood_mc(&[0.7, 0.3], &data, 0.25, 100_000, 4).unwrap();
    let okl = okl_bruteforce(&[0.5, 0.5], &[0.7, 0.3], 0.25, 1e-3).unwrap();
    assert!((r.estimate + okl).abs() <= 0.03, "estimate {} okl {}", r.estimate, okl);
}

#[test]
fn gradient_condition_detects_a_shifted_logistic_fit() {
    let xs = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];
    let ys = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let data = Dataset::new(xs.to_vec(), 1, Some(ys.to_vec())).unwrap();
    let w = WeightVector::uniform(8);
    let spec = ModelSpec::logistic_regression(0.0);
    let fit = owl_core::models::wmle_logistic_regression(&data, &w, 0.0).unwrap();
    assert!(check_gradient_condition(&spec, &fit.params, &data, &w).unwrap() < 1e-6);
    let ModelParams::LogisticRegression(mut lp) = fit.params else {
        panic!()
    };
    lp.intercept += 0.5;
    let r = check_gradient_condition(&spec, &ModelParams::LogisticRegression(lp), &data, &w).unwrap();
    assert!(r > 1e-3);
}

#[test]
fn bruteforce_handles_off_lattice_frequencies() {
    // 1/6 is not a multiple of 1e-3; the empirical point must still be a candidate.
    let p_hat = [1.0 / 6.0, 5.0 / 6.0];
    let p = [0.95, 0.05];
    let v = okl_bruteforce(&p_hat, &p, 0.0, 1e-3).unwrap();
    assert_abs_diff_eq!(v, kl_divergence(&p_hat, &p), epsilon = 1e-12);
    let v = okl_bruteforce(&p_hat, &p, 0.05, 1e-3).unwrap();
    let direct = kl_divergence(&[1.0 / 6.0 + 0.05, 5.0 / 6.0 - 0.05], &p);
    assert_abs_diff_eq!(v, direct, epsilon = 1e-12);
}
