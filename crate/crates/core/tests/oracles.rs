//! Independent routes to values the library computes another way.

use approx::assert_relative_eq;
use klslab::bounds::{recursion_sequences, time_constants};
use klslab::isoperimetry::{halfspace_isoperimetry, Marginal, DEFAULT_LEVELS};
use klslab::linalg::{self, random_psd, random_spd, random_symmetric};
use klslab::localization::{gamma_drift_terms, init_state, simulate_path, simulate_with_noise, LocalizationState, NoisePath, PathOptions};
use klslab::measures::{closed_form_gaussian_tilt, sample_atomic, tilt_atomic};
use klslab::rng::rng_from_seed;
use klslab::tensor::{check_moment_inequality, check_trace_inequality, MomentSource};
use klslab::{Density, Family, Matrix, TiltParams, Vector};
use rand::Rng;
use std::f64::consts::{E, PI};

/// Nodes and weights of the `m`-point Gauss–Hermite rule for `N(0, 1)` (Golub–Welsch).
fn gauss_hermite(m: usize) -> Vec<(f64, f64)> {
    let jacobi = Matrix::from_fn(m, m, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = jacobi.symmetric_eigen();
    (0..m).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect()
}

#[test]
fn hermite_rule_integrates_moments() {
    let rule = gauss_hermite(12);
    let moment = |p: i32| rule.iter().map(|(x, w)| w * x.powi(p)).sum::<f64>();
    assert_relative_eq!(moment(0), 1.0, epsilon = 1e-13);
    assert_relative_eq!(moment(2), 1.0, epsilon = 1e-12);
    assert_relative_eq!(moment(4), 3.0, epsilon = 1e-11);
    assert_relative_eq!(moment(6), 15.0, epsilon = 1e-10);
}

/// `E[Γ(step(√dt ξ))]` and `E[Γ(step(√dt ξ)) ξ]` by tensor-product cubature in `d = 2`.
fn one_step_moments(state: &LocalizationState, dt: f64, rule: &[(f64, f64)]) -> (f64, Vector) {
    let mut mean = 0.0;
    let mut cross = Vector::zeros(2);
    for &(x1, w1) in rule {
        for &(x2, w2) in rule {
            let xi = Vector::from_vec(vec![x1, x2]);
            let g = state.euler_step(&(&xi * dt.sqrt()), dt).unwrap().gamma();
            mean += w1 * w2 * g;
            cross += &xi * (w1 * w2 * g);
        }
    }
    (mean, cross)
}

#[test]
fn ito_drift_matches_cubature_of_one_step() {
    let cloud = sample_atomic(&Family::ProductExponential.isotropic(2), 60, 5).unwrap();
    let start = init_state(&cloud, 3).unwrap();
    let state = start.euler_step(&Vector::from_vec(vec![0.3, -0.2]), 0.4).unwrap();
    let dd = gamma_drift_terms(&state).unwrap();
    let rule = gauss_hermite(24);
    let g0 = state.gamma();
    let rate = |dt: f64| {
        let (m, cross) = one_step_moments(&state, dt, &rule);
        ((m - g0) / dt, cross / dt.sqrt())
    };
    let (d1, v1) = rate(1e-4);
    let (d2, v2) = rate(5e-5);
    // Richardson: the one-step mean carries an O(dt) bias.
    let delta = 2.0 * d2 - d1;
    let v = &v2 * 2.0 - &v1;
    assert_relative_eq!(delta, dd.delta, max_relative = 1e-3, epsilon = 1e-6);
    assert!((&v - &dd.v).norm() <= 1e-3 * (1.0 + dd.v.norm()), "{v} vs {}", dd.v);
}

#[test]
fn trace_inequality_matches_matrix_power_route() {
    let mut rng = rng_from_seed(11);
    for _ in 0..200 {
        let d = rng.random_range(1..=6);
        let g = random_psd(d, d, &mut rng);
        let f = random_symmetric(d, &mut rng);
        let delta = rng.random_range(0.0..=1.0);
        let r = check_trace_inequality(&g, &f, delta).unwrap();
        let lhs = (linalg::psd_pow(&g, delta) * &f * linalg::psd_pow(&g, 1.0 - delta) * &f).trace();
        let rhs = (&g * &f * &f).trace();
        assert_relative_eq!(r.lhs, lhs, epsilon = 1e-9 * (1.0 + lhs.abs()));
        assert_relative_eq!(r.rhs, rhs, epsilon = 1e-9 * (1.0 + rhs.abs()));
    }
}

#[test]
fn gaussian_tilt_matches_importance_weighted_cloud() {
    let mut rng = rng_from_seed(3);
    let a = random_spd(2, 0.5, 2.0, &mut rng);
    let g = Density::gaussian(Vector::from_vec(vec![0.3, -0.1]), a).unwrap();
    let tilt = TiltParams::new(Vector::from_vec(vec![0.4, 0.2]), random_spd(2, 0.2, 1.0, &mut rng)).unwrap();
    let exact = closed_form_gaussian_tilt(&g, &tilt).unwrap();
    let cloud = sample_atomic(&g, 200_000, 9).unwrap();
    let tilted = tilt_atomic(&cloud, &tilt).unwrap();
    assert!((tilted.mean() - exact.mean()).amax() < 0.02);
    assert!((tilted.covariance() - exact.covariance()).amax() < 0.03);
}

#[test]
fn gaussian_potential_decays_like_conjugate_update() {
    // For a Gaussian base, Q_t = I/(1+t) and Γ_t = d/(1+t)^q on every path.
    let cloud = sample_atomic(&Density::standard_gaussian(2), 20_000, 21).unwrap();
    let path = simulate_path(&cloud, 3, 0.5, 0.005, 4, &PathOptions::default()).unwrap();
    let expected = 2.0 / 1.5f64.powi(3);
    assert_relative_eq!(path.terminal().gamma(), expected, max_relative = 0.15);
    let cov = path.terminal().covariance();
    assert!((cov - Matrix::identity(2, 2) / 1.5).amax() < 0.1);
}

#[test]
fn step_halving_shows_first_order_strong_convergence() {
    // The noise on c is additive, so Euler–Maruyama converges with strong order 1.
    let cloud = sample_atomic(&Family::UniformBall.isotropic(2), 300, 8).unwrap();
    let start = init_state(&cloud, 3).unwrap();
    let opts = PathOptions::default();
    let (mut e2, mut e4) = (0.0, 0.0);
    let seeds = 24;
    for seed in 0..seeds {
        let fine = NoisePath::generate(2, 400, 1.0 / 400.0, seed);
        let g = |noise: &NoisePath| simulate_with_noise(&start, noise, &opts).unwrap().terminal().gamma();
        let reference = g(&fine);
        e2 += (g(&fine.coarsen(2).unwrap()) - reference).abs();
        e4 += (g(&fine.coarsen(4).unwrap()) - reference).abs();
    }
    e2 /= seeds as f64;
    e4 /= seeds as f64;
    // With error ∝ dt, coarsening by 4 vs 2 against the same reference gives a ratio near 3.
    assert!(e4 > 1.8 * e2, "e2 = {e2}, e4 = {e4}");
}

#[test]
fn exponential_absolute_moments() {
    let exp = Density::product_exponential(Vector::zeros(1), Vector::from_element(1, 1.0)).unwrap();
    // E|X-1| = 2/e and E|X-1|³ = 12/e - 2 for X ~ Exp(1).
    let r = check_moment_inequality(MomentSource::Density(&exp), 3.0, 1.0).unwrap();
    assert_relative_eq!(r.l_a, (12.0 / E - 2.0).powf(1.0 / 3.0), epsilon = 1e-9);
    assert_relative_eq!(r.l_b, 2.0 / E, epsilon = 1e-9);
    assert!(r.passed);
    // Central moments 1, 9, 265 give L2, L4, L6.
    let r = check_moment_inequality(MomentSource::Density(&exp), 6.0, 2.0).unwrap();
    assert_relative_eq!(r.l_a, 265f64.powf(1.0 / 6.0), epsilon = 1e-8);
    assert_relative_eq!(r.l_b, 1.0, epsilon = 1e-9);
    let r = check_moment_inequality(MomentSource::Density(&exp), 4.0, 2.0).unwrap();
    assert_relative_eq!(r.l_a, 9f64.powf(0.25), epsilon = 1e-9);
}

#[test]
fn uniform_absolute_moments() {
    let u = Density::uniform_box(Vector::from_element(1, -1.0), Vector::from_element(1, 1.0)).unwrap();
    for (a, b) in [(4.0, 2.0), (3.0, 1.0), (6.0, 2.0)] {
        let r = check_moment_inequality(MomentSource::Density(&u), a, b).unwrap();
        assert_relative_eq!(r.l_a, (1.0 / (a + 1.0)).powf(1.0 / a), epsilon = 1e-9);
        assert_relative_eq!(r.l_b, (1.0 / (b + 1.0)).powf(1.0 / b), epsilon = 1e-9);
    }
}

#[test]
fn ball_marginal_matches_sampling() {
    let ball = Family::UniformBall.isotropic(4);
    let u = Vector::from_vec(vec![0.5, 0.5, 0.5, 0.5]);
    let m = Marginal::of(&ball, &u, 0).unwrap();
    let mut rng = rng_from_seed(17);
    let n = 100_000;
    let below = (0..n).filter(|_| u.dot(&ball.sample(&mut rng)) <= 0.7).count() as f64 / n as f64;
    assert!((m.cdf(0.7) - below).abs() < 0.005, "{} vs {below}", m.cdf(0.7));
    // Isotropic: the marginal has unit variance.
    let var = klslab::quadrature::integrate(|x| x * x * m.pdf(x), -6.0, 6.0, 1e-12);
    assert_relative_eq!(var, 1.0, epsilon = 1e-8);
}

#[test]
fn box_halfspace_scan_is_at_most_axis_value() {
    // Uniform on [-√3, √3]^d: the axis cut at the median gives (1/(2√3)) / (1/2) = 1/√3.
    let b = Family::UniformBox.isotropic(2);
    let est = halfspace_isoperimetry(&b, 4, &DEFAULT_LEVELS, 5).unwrap();
    assert!(est.value <= 1.0 / 3f64.sqrt() + 1e-9);
    assert!(est.value > 0.4);
}

#[test]
fn gaussian_halfspace_value() {
    for d in 1..=3 {
        let est = halfspace_isoperimetry(&Density::standard_gaussian(d), 3, &DEFAULT_LEVELS, d as u64).unwrap();
        assert_relative_eq!(est.value, (2.0 / PI).sqrt(), max_relative = 1e-9);
    }
}

#[test]
fn recursion_first_steps_by_hand() {
    let r = recursion_sequences(3, 1.0).unwrap();
    assert_eq!(r.beta(1), 0.5);
    assert_eq!(r.beta(2), 31.0 / 64.0);
    let b2: f64 = 31.0 / 64.0;
    assert_relative_eq!(r.beta(3), b2 - b2 * b2 / 16.0, epsilon = 1e-16);
    // α₂ = 2·4/√(1/2) = 8√2.
    assert_relative_eq!(r.alpha(2), 8.0 * 2f64.sqrt(), max_relative = 1e-14);
    assert_relative_eq!(r.alpha(3), 2.0 * 8.0 * 2f64.sqrt() / b2.sqrt(), max_relative = 1e-14);
}

#[test]
fn time_constants_by_direct_formula() {
    let mut rng = rng_from_seed(2);
    for _ in 0..20 {
        let d: f64 = 10f64.powf(rng.random_range(0.5..8.0));
        let alpha = rng.random_range(1.0..10.0);
        let beta = rng.random_range(0.05..0.5);
        let tc = time_constants(d, alpha, beta).unwrap();
        let q = (1.0 / beta).ceil() + 1.0;
        assert_eq!(tc.q as f64, q);
        let t1 = 1.0 / (32768.0 * q * alpha * alpha * d.ln() * d.powf(2.0 * beta));
        assert_relative_eq!(tc.t1, t1, max_relative = 1e-14);
        assert!(tc.identity_residual.abs() < 1e-12);
    }
}
