use heston_adapt::besq::{sample_transition, HestonParams};
use heston_adapt::moments::{
    bridge_moments, coefficients, laplace_transform, laplace_transform_extended, solve_phi_closed,
    solve_phi_numeric, WeightParams, SERIES_THRESHOLD,
};
use heston_adapt::oracle::{
    bridge_integral_samples, coefficients_by_quadrature, laplace_from_samples, SampleStats,
};
use heston_adapt::samplers::RngStream;
use heston_adapt::validation::laplace_derivatives;
use proptest::prelude::*;

fn bench() -> HestonParams {
    HestonParams::benchmark()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn coefficients_continuous_across_series_switch() {
    let p = bench();
    let s2 = p.sigma_v * p.sigma_v;
    let tau_l = 0.7;
    let base = 1.0 + 4.0 * p.kappa * tau_l / s2;
    let tau_at = |eps: f64| eps * base * s2 / (4.0 * p.kappa);
    let lo = coefficients(&p, tau_l, tau_at(SERIES_THRESHOLD * (1.0 - 1e-12))).unwrap();
    let hi = coefficients(&p, tau_l, tau_at(SERIES_THRESHOLD * (1.0 + 1e-12))).unwrap();
    for (a, b) in [(lo.a1, hi.a1), (lo.b1, hi.b1), (lo.c1, hi.c1), (lo.a2, hi.a2), (lo.b2, hi.b2), (lo.c2, hi.c2)] {
        assert!(rel(a, b) < 1e-9, "{a} vs {b}");
    }
}

/// The coefficients approach the small-τ limits with `4/σ_V²` where the
/// first-order terms carry one power and the second-order terms two.
#[test]
fn small_tau_limits_scale_with_inverse_sigma_squared() {
    let p = bench();
    let s2 = p.sigma_v * p.sigma_v;
    let a0 = 4.0 / s2;
    for tau_l in [0.0, 1.0] {
        let tau = 1e-7;
        let b = 1.0 + 4.0 * p.kappa * tau_l / s2;
        let k = coefficients(&p, tau_l, tau).unwrap();
        let (t2, t4, b2, b4) = (tau * tau, tau.powi(4), b * b, b.powi(4));
        assert!(rel(k.a1 / t2, -a0 / b2) < 1e-4);
        assert!(rel(k.b1 / t2, 4.0 * a0 / (3.0 * b2)) < 1e-4);
        assert!(rel(k.c1 / t2, -2.0 * a0 / b2) < 1e-4);
        assert!(rel(k.a2 / t4, 5.0 * a0 * a0 / (6.0 * b4)) < 1e-4);
        assert!(rel(k.b2 / t4, 8.0 * a0 * a0 / (15.0 * b4)) < 1e-4);
        assert!(rel(k.c2 / t4, 4.0 * a0 * a0 / (3.0 * b4)) < 1e-4);
    }
}

#[test]
fn finite_differences_of_laplace_give_the_moments() {
    let p = bench();
    for (x, y, tau_l, tau) in [
        (0.010201, 0.02, 0.0, 0.5),
        (0.3, 0.8, 1.0, 0.2),
        (0.5, 0.0, 2.0, 1.5),
        (0.9, 0.05, 4.5, 0.01),
        (0.0, 0.0, 0.2, 2.0),
    ] {
        let m = bridge_moments(&p, x, y, tau_l, tau).unwrap();
        let (d1, d2) = laplace_derivatives(&p, x, y, tau_l, tau, m.m1).unwrap();
        assert!(rel(d1, m.m1) < 1e-5, "m1 at {x},{y},{tau_l},{tau}");
        assert!(rel(d2, m.m2) < 1e-4, "m2 at {x},{y},{tau_l},{tau}");
    }
}

#[test]
fn moments_and_laplace_match_bridge_monte_carlo() {
    let p = bench();
    for (k, (x, y, tau_l, tau)) in [(0.2, 0.6, 0.5, 0.3), (0.05, 0.0, 3.0, 1.0)].into_iter().enumerate() {
        let m = bridge_moments(&p, x, y, tau_l, tau).unwrap();
        let s = bridge_integral_samples(&p, x, y, tau_l, tau, 10, 20_000, 5, (k as u64) << 32).unwrap();
        let st = SampleStats::of(&s);
        assert!((st.mean - m.m1).abs() <= (3.0 * st.mean_stderr()).max(0.02 * m.m1));
        assert!((st.var - m.var).abs() <= (3.0 * st.var_stderr()).max(0.02 * m.var));
        for theta in [0.5, 5.0, 50.0] {
            let (est, se) = laplace_from_samples(&s, theta);
            let l = laplace_transform(&p, x, y, tau_l, tau, theta).unwrap();
            assert!((l - est).abs() <= 3.0 * se, "theta {theta}: {l} vs {est} ± {se}");
        }
    }
}

#[test]
fn closed_form_phi_matches_boundary_value_solve() {
    let p = bench();
    let mut rng = RngStream::new(17, 0);
    for _ in 0..5 {
        let theta = 20.0 * rng.uniform();
        let tau = 0.01 + 2.0 * rng.uniform();
        let tau_l = 5.0 * rng.uniform();
        let c = solve_phi_closed(&p, tau_l, tau, theta).unwrap();
        let n = solve_phi_numeric(&p, tau_l, tau, theta).unwrap();
        assert!(rel(c.phi1, n.phi1) < 1e-8);
        assert!((c.phi_prime0 - n.phi_prime0).abs() < 1e-8 * n.phi_prime0.abs().max(1e-3));
        assert!(rel(c.int_phi_inv_sq, n.int_phi_inv_sq) < 1e-8);
        // φ is decreasing from 1 and stays positive
        assert!(n.phi_prime0 <= 0.0 && n.phi1 > 0.0 && n.phi1 <= 1.0);
    }
    let flat = solve_phi_numeric(&p, 1.0, 0.5, 0.0).unwrap();
    assert_eq!((flat.phi1, flat.phi_prime0), (1.0, 0.0));
    assert!((flat.int_phi_inv_sq - 1.0).abs() < 1e-12);
}

#[test]
fn laplace_domain_and_shape() {
    let p = bench();
    assert_eq!(laplace_transform(&p, 0.1, 0.2, 0.0, 1.0, 0.0).unwrap(), 1.0);
    assert!(laplace_transform(&p, 0.1, 0.2, 0.0, 1.0, -1.0).is_err());
    assert!(laplace_transform_extended(&p, 0.1, 0.2, 0.0, 1.0, -1.0).unwrap() > 1.0);
    let mut prev = 1.0;
    for theta in [0.1, 1.0, 10.0, 100.0, 1e4, 1e6] {
        let l = laplace_transform(&p, 0.1, 0.2, 0.0, 1.0, theta).unwrap();
        assert!(l > 0.0 && l < prev);
        prev = l;
    }
}

/// `∫ V dt` and `∫ X w₀ dτ` over the same mapped grid differ only through
/// the quadrature, so the gap shrinks at least linearly with the step.
#[test]
fn integral_is_preserved_by_the_time_change() {
    let p = bench();
    let map = p.time_map();
    let w = WeightParams::new(&p, 0.0);
    let (t_l, t_r) = (0.25, 1.0);
    let fine = 1 << 12;
    let dt = (t_r - t_l) / fine as f64;
    let mut s = RngStream::new(3, 0);
    let mut xs = vec![map.x_of_v(t_l, p.v0)];
    for i in 0..fine {
        let t = t_l + i as f64 * dt;
        let next = sample_transition(&mut s, &p, xs[i], map.tau_increment(t, dt)).unwrap();
        xs.push(next);
    }
    let gap = |stride: usize| {
        let (mut in_t, mut in_tau) = (0.0, 0.0);
        for i in (0..fine).step_by(stride) {
            let (ta, tb) = (t_l + i as f64 * dt, t_l + (i + stride) as f64 * dt);
            let (xa, xb) = (xs[i], xs[i + stride]);
            in_t += 0.5 * (tb - ta) * (map.v_of_x(ta, xa) + map.v_of_x(tb, xb));
            let (ua, ub) = (map.tau_of_t(ta), map.tau_of_t(tb));
            in_tau += 0.5 * (ub - ua) * (xa * w.absolute(ua) + xb * w.absolute(ub));
        }
        (in_t - in_tau).abs()
    };
    let (coarse, finer) = (gap(16), gap(4));
    assert!(finer <= coarse / 3.5, "{coarse} -> {finer}");
    assert!(gap(1) < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn closed_coefficients_match_quadrature(tau_l in 0.0f64..5.0, tau in 1e-3f64..2.0) {
        let p = bench();
        let a = coefficients(&p, tau_l, tau).unwrap();
        let o = coefficients_by_quadrature(&p, tau_l, tau, 4000);
        for (x, y) in [(a.a1, o.a1), (a.a2, o.a2), (a.b1, o.b1), (a.b2, o.b2), (a.c1, o.c1), (a.c2, o.c2)] {
            prop_assert!(rel(x, y) < 1e-8, "{} vs {}", x, y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn variance_nonnegative(x in 0.0f64..1.0, y in 0.0f64..1.0, tau_l in 0.0f64..5.0, tau in 1e-6f64..2.0) {
        let m = bridge_moments(&bench(), x, y, tau_l, tau).unwrap();
        prop_assert!(m.var >= 0.0);
        prop_assert!(m.m2 >= m.m1 * m.m1 * (1.0 - 1e-12));
        prop_assert!(m.m1 > 0.0);
    }
}
