use heston_adapt::oracle::series_bessel_i;
use heston_adapt::specfun::{bessel_quotient, log_modified_bessel_i, BesselOrder};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

const NU_BENCH: f64 = -0.365815641;

fn order(nu: f64) -> BesselOrder {
    BesselOrder::new(nu).unwrap()
}

/// `I_ν(r)` by the term recurrence, summed until terms stop mattering.
fn series_by_recurrence(nu: f64, r: f64) -> f64 {
    let h2 = 0.25 * r * r;
    let mut term = (0.5 * r).powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    let mut k = 0.0;
    while k < h2.sqrt() + 5.0 || term > 1e-18 * sum {
        term *= h2 / ((k + 1.0) * (k + 1.0 + nu));
        sum += term;
        k += 1.0;
    }
    sum
}

#[test]
fn quotient_examples() {
    assert_eq!(bessel_quotient(order(NU_BENCH), 0.0).unwrap(), 0.0);
    let want = series_bessel_i(1.5, 1.0, 50) / series_bessel_i(0.5, 1.0, 50);
    let got = bessel_quotient(order(0.5), 1.0).unwrap();
    assert!((got / want - 1.0).abs() < 1e-12);
    let got = bessel_quotient(order(NU_BENCH), 1e6).unwrap();
    assert!((got - (1.0 - (NU_BENCH + 0.5) / 1e6)).abs() < 1e-9);
}

#[test]
fn log_i_examples() {
    assert_eq!(log_modified_bessel_i(order(0.0), 0.0).unwrap(), 0.0);
    let got = log_modified_bessel_i(order(0.5), 2.0).unwrap();
    assert!((got - series_bessel_i(0.5, 2.0, 50).ln()).abs() < 1e-13);
    // I_ν(r) ~ e^r / sqrt(2πr) (1 − (4ν² − 1)/(8r))
    let r = 700.0;
    let mu = 4.0 * NU_BENCH * NU_BENCH;
    let asym = r - 0.5 * (2.0 * std::f64::consts::PI * r).ln() + (1.0 - (mu - 1.0) / (8.0 * r)).ln();
    let got = log_modified_bessel_i(order(NU_BENCH), r).unwrap();
    assert!((got - asym).abs() < 1e-5, "{got} vs {asym}");
    assert!(log_modified_bessel_i(order(NU_BENCH), 1e8).unwrap().is_finite());
}

#[test]
fn quotient_matches_series_ratio_up_to_fifty() {
    for nu in [NU_BENCH, -0.9, 0.0, 0.5, 3.7] {
        let mut r = 1e-6;
        while r <= 50.0 {
            let want = series_by_recurrence(nu + 1.0, r) / series_by_recurrence(nu, r);
            let got = bessel_quotient(order(nu), r).unwrap();
            assert!((got / want - 1.0).abs() < 1e-10, "nu {nu} r {r}: {got} vs {want}");
            r *= 1.37;
        }
    }
}

#[test]
fn log_derivative_identity_at_twenty_points() {
    for k in 0..20 {
        let r = 0.02 * 1.9f64.powi(k);
        let nu = -0.95 + 0.3 * k as f64;
        let h = 1e-5 * r;
        let lo = log_modified_bessel_i(order(nu), r - h).unwrap();
        let hi = log_modified_bessel_i(order(nu), r + h).unwrap();
        let fd = (hi - lo) / (2.0 * h);
        let want = nu / r + bessel_quotient(order(nu), r).unwrap();
        assert!((fd / want - 1.0).abs() < 1e-8, "nu {nu} r {r}");
    }
}

#[test]
fn log_i_agrees_across_the_regime_switch() {
    for nu in [NU_BENCH, 0.0, 2.5] {
        for r in [5.0, 15.0, 19.9, 20.1, 30.0, 60.0] {
            let want = series_by_recurrence(nu, r).ln();
            let got = log_modified_bessel_i(order(nu), r).unwrap();
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "nu {nu} r {r}");
        }
    }
}

#[test]
fn quotient_tends_to_asymptote_from_above_when_nu_below_minus_half() {
    let nu = -0.8;
    let r = 1e4;
    let got = bessel_quotient(order(nu), r).unwrap();
    assert!(got > 1.0);
    assert!((got - (1.0 - (nu + 0.5) / r)).abs() < 1e-7);
}

#[test]
fn domain_errors() {
    assert!(BesselOrder::new(-1.0).is_err());
    assert!(BesselOrder::new(f64::NAN).is_err());
    assert!(bessel_quotient(order(0.0), -1e-3).is_err());
    assert!(log_modified_bessel_i(order(0.0), f64::INFINITY).is_err());
}

proptest! {
    #[test]
    fn quotient_in_unit_interval_and_increasing(nu in -0.5f64..8.0, r in 1e-6f64..1e8, bump in 1.001f64..2.0) {
        let q = bessel_quotient(order(nu), r).unwrap();
        let q2 = bessel_quotient(order(nu), r * bump).unwrap();
        prop_assert!(q > 0.0 && q < 1.0);
        prop_assert!(q2 >= q);
    }

    #[test]
    fn quotient_positive_and_finite_below_minus_half(nu in -0.999f64..-0.5, r in 1e-6f64..1e8) {
        let q = bessel_quotient(order(nu), r).unwrap();
        prop_assert!(q > 0.0 && q.is_finite());
        prop_assert!(q < 1.0 + 0.5 / r);
    }
}
