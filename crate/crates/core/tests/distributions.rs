use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rpolab::distributions::{
    effective_density_gaussian_uniform, gaussian_uniform_marginal_entropy, perturb_loc, std_normal_cdf, DistParams,
    Family, PerturbSpec,
};

/// Composite Simpson rule; `n` is rounded up to an even count.
fn simpson(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|k| f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

#[test]
fn normal_cdf_at_three_from_quadrature() {
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let phi3 = 0.5 + simpson(0.0, 3.0, 2000, pdf);
    assert!((phi3 - 0.998650).abs() < 5e-7, "{phi3}");
    assert!((std_normal_cdf(3.0) - phi3).abs() < 1e-12);

    let expected = (2.0 * phi3 - 1.0) / 6.0;
    assert!((expected - 0.166217).abs() < 5e-7);
    let got = effective_density_gaussian_uniform(0.4, 1.0, 3.0, 0.4);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn tiny_alpha_matches_gaussian_density() {
    for &(mu, sigma, a) in &[(0.0, 1.0, 0.0), (1.0, 0.5, 1.3), (-2.0, 2.0, 1.0)] {
        let g = Family::Gaussian.log_density(mu, sigma, a).exp();
        assert!((effective_density_gaussian_uniform(mu, sigma, 1e-8, a) - g).abs() < 1e-6);
    }
}

#[test]
fn marginal_entropy_exceeds_conditional() {
    for &(sigma, alpha) in &[(1.0, 0.5), (0.2, 0.5), (0.5, 3.0)] {
        let marginal = gaussian_uniform_marginal_entropy(sigma, alpha);
        assert!(marginal > Family::Gaussian.entropy(sigma), "σ={sigma} α={alpha}");
    }
    // Large α approaches the uniform entropy ln(2α).
    assert!((gaussian_uniform_marginal_entropy(0.01, 50.0) - 100f64.ln()).abs() < 1e-3);
}

#[test]
fn uniform_offsets_have_uniform_moments() {
    let spec = PerturbSpec::new(0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| spec.draw(&mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.005);
    assert!((var - 0.25 / 3.0).abs() < 0.005);
    assert!(draws.iter().all(|z| z.abs() <= 0.5));
}

#[test]
fn sample_moments_match_each_family() {
    // (family, mean, variance) for loc 1, scale 0.5.
    let euler = 0.577_215_664_901_532_9;
    let cases = [
        (Family::Gaussian, 1.0, 0.25),
        (Family::Laplace, 1.0, 2.0 * 0.25),
        (Family::Gumbel, 1.0 + 0.5 * euler, std::f64::consts::PI.powi(2) / 6.0 * 0.25),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 400_000;
    for (family, mean, var) in cases {
        let xs: Vec<f64> = (0..n).map(|_| family.sample(1.0, 0.5, &mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        // Four standard errors of each estimate.
        assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt(), "{family} mean {m}");
        assert!((v - var).abs() < 0.02 * var, "{family} variance {v}");
    }
}

fn family_strategy() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Gaussian), Just(Family::Laplace), Just(Family::Gumbel)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn log_prob_gradient_matches_finite_differences(
        family in family_strategy(),
        loc in -3.0f64..3.0,
        log_scale in -1.5f64..1.0,
        offset in -3.0f64..3.0,
    ) {
        let scale = log_scale.exp();
        let x = loc + offset * scale;
        // Stay clear of the Laplace kink.
        prop_assume!(family != Family::Laplace || offset.abs() > 1e-3);
        let (g_loc, g_scale) = family.log_density_grad(loc, scale, x);
        let h = 1e-6;
        let fd_loc = (family.log_density(loc + h, scale, x) - family.log_density(loc - h, scale, x)) / (2.0 * h);
        let fd_scale = (family.log_density(loc, scale + h, x) - family.log_density(loc, scale - h, x)) / (2.0 * h);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
        prop_assert!(rel(g_loc, fd_loc) < 1e-5, "{} loc {} vs {}", family, g_loc, fd_loc);
        prop_assert!(rel(g_scale, fd_scale) < 1e-5, "{} scale {} vs {}", family, g_scale, fd_scale);
    }

    #[test]
    fn perturbation_keeps_entropy_and_support(
        family in family_strategy(),
        loc in proptest::collection::vec(-5.0f64..5.0, 1..4),
        alpha in 0.0f64..4.0,
        seed in any::<u64>(),
    ) {
        let scale: Vec<f64> = loc.iter().map(|m| 0.1 + m.abs()).collect();
        let p = DistParams::new(family, loc.clone(), scale).unwrap();
        let q = perturb_loc(&p, PerturbSpec::new(alpha).unwrap(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(q.entropy(), p.entropy());
        prop_assert_eq!(q.scale(), p.scale());
        for (a, b) in q.loc().iter().zip(&loc) {
            prop_assert!((a - b).abs() <= alpha);
        }
    }

    #[test]
    fn closed_form_kl_is_nonnegative(
        family in prop_oneof![Just(Family::Gaussian), Just(Family::Laplace)],
        mp in -3.0f64..3.0, mq in -3.0f64..3.0,
        sp in 0.05f64..3.0, sq in 0.05f64..3.0,
    ) {
        prop_assert!(family.kl(mp, sp, mq, sq).unwrap() >= -1e-15);
    }
}
