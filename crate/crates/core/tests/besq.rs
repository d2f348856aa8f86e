use heston_adapt::besq::{sample_bridge_midvalue, sample_transition, BridgeSegment, HestonParams};
use heston_adapt::oracle::SampleStats;
use heston_adapt::samplers::RngStream;
use proptest::prelude::*;

fn bench() -> HestonParams {
    HestonParams::benchmark()
}

#[test]
fn benchmark_dimension_and_order() {
    let p = bench();
    assert!((p.dimension() - 1.268368).abs() < 1e-6);
    assert!((p.order() + 0.365816).abs() < 1e-6);
}

#[test]
fn time_map_inverts_and_matches_variance_scaling() {
    let map = bench().time_map();
    for t in [0.0, 1e-6, 0.1, 1.0, 3.0] {
        assert!((map.t_of_tau(map.tau_of_t(t)) - t).abs() < 1e-13 * t.max(1.0));
        let v = 0.04;
        assert!((map.v_of_x(t, map.x_of_v(t, v)) - v).abs() < 1e-15);
    }
    let dt = 0.25;
    let direct = map.tau_of_t(1.0 + dt) - map.tau_of_t(1.0);
    assert!((map.tau_increment(1.0, dt) / direct - 1.0).abs() < 1e-13);
    // dτ/dt = σ_V²/4 · e^{κt}
    let p = bench();
    let h = 1e-6;
    let slope = (map.tau_of_t(0.5 + h) - map.tau_of_t(0.5 - h)) / (2.0 * h);
    let want = 0.25 * p.sigma_v * p.sigma_v * (p.kappa * 0.5).exp();
    assert!((slope / want - 1.0).abs() < 1e-8);
}

#[test]
fn transition_mean_and_variance() {
    let p = bench();
    let lambda = p.dimension();
    for (k, (x, dt)) in [(0.0, 0.2), (0.02, 1e-3), (0.4, 0.05), (1.0, 2.0)].into_iter().enumerate() {
        let mut s = RngStream::new(8, k as u64);
        let xs: Vec<f64> = (0..400_000).map(|_| sample_transition(&mut s, &p, x, dt).unwrap()).collect();
        let st = SampleStats::of(&xs);
        let mean = x + lambda * dt;
        let var = 4.0 * x * dt + 2.0 * lambda * dt * dt;
        assert!((st.mean - mean).abs() <= 3.0 * st.mean_stderr(), "x {x} dt {dt}");
        assert!((st.var - var).abs() <= 3.0 * st.var_stderr(), "x {x} dt {dt}");
    }
}

/// Drawing `X(τ₂)` forward and then the bridge at `τ₁` must reproduce the
/// one-step law of `X(τ₁)`, including at an off-centre interior time. This
/// pins the scale (not rate) reading of the bridge gamma variate.
#[test]
fn bridge_composes_with_transitions() {
    let p = bench();
    let lambda = p.dimension();
    for (k, (x0, t1, t2)) in [(0.05, 0.02, 0.04), (0.5, 0.01, 0.08), (0.0, 0.3, 0.4)].into_iter().enumerate() {
        let mut s = RngStream::new(9, k as u64);
        let mids: Vec<f64> = (0..300_000)
            .map(|_| {
                let y = sample_transition(&mut s, &p, x0, t2).unwrap();
                let seg = BridgeSegment::new(0.0, t2, x0, y, 0.0).unwrap();
                sample_bridge_midvalue(&mut s, &p, &seg, t1).unwrap()
            })
            .collect();
        let st = SampleStats::of(&mids);
        let mean = x0 + lambda * t1;
        let var = 4.0 * x0 * t1 + 2.0 * lambda * t1 * t1;
        assert!((st.mean - mean).abs() <= 3.0 * st.mean_stderr(), "case {k}: {} vs {mean}", st.mean);
        assert!((st.var - var).abs() <= 3.0 * st.var_stderr(), "case {k}: {} vs {var}", st.var);
    }
}

#[test]
fn invalid_segments_and_inputs() {
    let p = bench();
    let mut s = RngStream::new(0, 0);
    assert!(BridgeSegment::new(1.0, 1.0, 0.1, 0.1, 0.0).is_err());
    assert!(BridgeSegment::new(0.0, 1.0, -0.1, 0.1, 0.0).is_err());
    assert!(BridgeSegment::new(0.0, 1.0, 0.1, 0.1, -1.0).is_err());
    assert!(sample_transition(&mut s, &p, -1.0, 0.1).is_err());
    assert!(sample_transition(&mut s, &p, 1.0, 0.0).is_err());
    let seg = BridgeSegment::new(0.0, 1.0, 0.1, 0.1, 0.0).unwrap();
    assert!(sample_bridge_midvalue(&mut s, &p, &seg, 1.0).is_err());
    let mut bad = p;
    bad.rho = 1.5;
    assert!(bad.validate().is_err());
    bad = p;
    bad.kappa = 0.0;
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn draws_are_finite_and_nonnegative(
        x in 0.0f64..5.0,
        y in 0.0f64..5.0,
        dt in 1e-9f64..5.0,
        frac in 0.01f64..0.99,
        seed in 0u64..1000,
    ) {
        let p = bench();
        let mut s = RngStream::new(seed, 0);
        let next = sample_transition(&mut s, &p, x, dt).unwrap();
        prop_assert!(next >= 0.0 && next.is_finite());
        let seg = BridgeSegment::new(2.0, 2.0 + dt, x, y, 0.0).unwrap();
        let mid = sample_bridge_midvalue(&mut s, &p, &seg, 2.0 + frac * dt).unwrap();
        prop_assert!(mid >= 0.0 && mid.is_finite());
    }
}
