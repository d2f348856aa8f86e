//! Modified Bessel functions of the first kind, real order ν > −1.
//!
//! Two quantities are needed: the quotient `R_ν(r) = I_{ν+1}(r) / I_ν(r)`
//! (conditional bridge moments) and `log I_ν(r)` (Bessel pmf normalisation).
//!
//! ```text
//! R_ν(r)     = 1 / (2(ν+1)/r + 1 / (2(ν+2)/r + 1 / (...)))     moderate r
//! I_ν(r)    ~ e^r / sqrt(2πr) · Σ_k (−1)^k a_k(ν) / r^k         large r
//! a_k(ν)     = Π_{j=1..k} (4ν² − (2j−1)²) / (k! 8^k)
//! ```

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};

/// Above `ASYMPTOTIC_BASE + ν²` the Hankel expansion is used.
const ASYMPTOTIC_BASE: f64 = 20.0;
const CF_MAX_ITER: usize = 100_000;

/// Order of a modified Bessel function, restricted to ν > −1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if nu.is_finite() && nu > -1.0 {
            Ok(Self(nu))
        } else {
            Err(domain("bessel order", nu))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn check_arg(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(domain("bessel argument", r))
    }
}

/// `I_{ν+1}(r) / I_ν(r)`. Lies in `[0, 1)` for ν ≥ −1/2; for −1 < ν < −1/2
/// it creeps above 1 at large `r`, approaching `1 − (ν + 1/2)/r`.
pub fn bessel_quotient(nu: BesselOrder, r: f64) -> Result<f64> {
    check_arg(r)?;
    Ok(quotient(nu.0, r))
}

/// `log I_ν(r)`. At `r = 0` this is `0` for ν = 0, `-inf` for ν > 0 and `+inf` for ν < 0.
pub fn log_modified_bessel_i(nu: BesselOrder, r: f64) -> Result<f64> {
    check_arg(r)?;
    Ok(log_i(nu.0, r))
}

fn asymptotic_regime(nu: f64, r: f64) -> bool {
    r > ASYMPTOTIC_BASE + nu * nu
}

pub(crate) fn quotient(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if asymptotic_regime(nu, r) {
        hankel_sum(nu + 1.0, r) / hankel_sum(nu, r)
    } else {
        quotient_cf(nu, r)
    }
}

/// Modified Lentz evaluation of the continued fraction.
pub(crate) fn quotient_cf(nu: f64, r: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = 2.0 * (nu + 1.0) / r;
    let mut c = f;
    let mut d = 0.0;
    for k in 2..CF_MAX_ITER {
        let b = 2.0 * (nu + k as f64) / r;
        d += b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + 1.0 / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `Σ_k (−1)^k a_k(μ) / r^k`, truncated at the smallest term.
fn hankel_sum(mu: f64, r: f64) -> f64 {
    let four_mu2 = 4.0 * mu * mu;
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    for k in 1..80 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (four_mu2 - odd * odd) / (8.0 * k as f64 * r);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

pub(crate) fn log_i(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return if nu == 0.0 {
            0.0
        } else if nu > 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    if asymptotic_regime(nu, r) {
        r - 0.5 * (2.0 * std::f64::consts::PI * r).ln() + hankel_sum(nu, r).ln()
    } else {
        log_i_series(nu, r)
    }
}

/// Ascending series with running rescale so large terms never overflow.
fn log_i_series(nu: f64, r: f64) -> f64 {
    const RESCALE: f64 = 1e250;
    let q = 0.25 * r * r;
    let peak = q.sqrt();
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut log_scale = 0.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + nu));
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            log_scale += RESCALE.ln();
        }
        if k > peak && term < 1e-17 * sum {
            break;
        }
        k += 1.0;
    }
    nu * (0.5 * r).ln() - ln_gamma(nu + 1.0) + sum.ln() + log_scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NU_BENCH: f64 = -0.365815641;

    fn series_i(nu: f64, r: f64) -> f64 {
        crate::oracle::series_bessel_i(nu, r, 50)
    }

    #[test]
    fn quotient_at_zero_is_zero() {
        let nu = BesselOrder::new(NU_BENCH).unwrap();
        assert_eq!(bessel_quotient(nu, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn quotient_matches_series_ratio() {
        let nu = BesselOrder::new(0.5).unwrap();
        let expected = series_i(1.5, 1.0) / series_i(0.5, 1.0);
        let got = bessel_quotient(nu, 1.0).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-13, "{got} vs {expected}");
    }

    #[test]
    fn quotient_half_order_closed_form() {
        // I_{3/2}/I_{1/2} = coth r − 1/r
        for &r in &[0.3f64, 2.0, 17.0, 49.0, 80.0, 500.0] {
            let expected = 1.0 / r.tanh() - 1.0 / r;
            let got = quotient(0.5, r);
            assert!((got / expected - 1.0).abs() < 1e-13, "r={r}: {got} vs {expected}");
        }
    }

    #[test]
    fn quotient_large_argument_asymptote() {
        let r = 1e6;
        let got = quotient(NU_BENCH, r);
        let asym = 1.0 - (NU_BENCH + 0.5) / r;
        assert!((got - asym).abs() < 1e-9);
    }

    #[test]
    fn cf_agrees_with_series_on_moderate_range() {
        for &nu in &[NU_BENCH, 0.0, 0.5, 2.3] {
            let mut r = 1e-6;
            while r <= 20.0 {
                let expected = if r < 30.0 {
                    series_i(nu + 1.0, r) / series_i(nu, r)
                } else {
                    (log_i_series(nu + 1.0, r) - log_i_series(nu, r)).exp()
                };
                let got = quotient_cf(nu, r);
                assert!(
                    (got / expected - 1.0).abs() < 1e-10,
                    "nu={nu} r={r}: {got} vs {expected}"
                );
                r *= 1.7;
            }
        }
    }

    #[test]
    fn crossover_continuity() {
        for &nu in &[NU_BENCH, 0.0, 1.5, 4.0] {
            for &r in &[20.0, 25.0, 40.0, 120.0, 300.0] {
                let r = r + nu * nu;
                let cf = quotient_cf(nu, r);
                let hk = hankel_sum(nu + 1.0, r) / hankel_sum(nu, r);
                assert!((cf / hk - 1.0).abs() < 1e-13, "nu={nu} r={r}");
                let ser = log_i_series(nu, r);
                let asy = r - 0.5 * (2.0 * std::f64::consts::PI * r).ln() + hankel_sum(nu, r).ln();
                assert!((ser - asy).abs() < 1e-12 * ser.abs(), "nu={nu} r={r}");
            }
        }
    }

    #[test]
    fn log_i_values() {
        let nu0 = BesselOrder::new(0.0).unwrap();
        assert_eq!(log_modified_bessel_i(nu0, 0.0).unwrap(), 0.0);
        let half = BesselOrder::new(0.5).unwrap();
        let got = log_modified_bessel_i(half, 2.0).unwrap();
        assert!((got - series_i(0.5, 2.0).ln()).abs() < 1e-13);
        let nu = BesselOrder::new(NU_BENCH).unwrap();
        let big = log_modified_bessel_i(nu, 700.0).unwrap();
        let scale = 700.0 - 0.5 * (2.0 * std::f64::consts::PI * 700.0).ln();
        assert!(big.is_finite());
        assert!((big - scale).abs() < 1e-3);
        assert!(log_modified_bessel_i(nu, 1e8).unwrap().is_finite());
    }

    #[test]
    fn log_derivative_identity() {
        // d/dr log I_ν = ν/r + R_ν(r)
        let mut state = 11u64;
        for _ in 0..20 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            let r = 0.05 * (1e4f64 / 0.05).powf(u);
            let nu = -0.9 + 3.0 * u;
            let h = 1e-5 * r;
            let d = (log_i(nu, r + h) - log_i(nu, r - h)) / (2.0 * h);
            let expected = nu / r + quotient(nu, r);
            assert!((d / expected - 1.0).abs() < 1e-8, "nu={nu} r={r}: {d} vs {expected}");
        }
    }

    #[test]
    fn quotient_exceeds_one_below_minus_half() {
        let nu = -0.8;
        let r = 400.0;
        let expected = (log_i_series(nu + 1.0, r) - log_i_series(nu, r)).exp();
        let got = quotient(nu, r);
        assert!(got > 1.0);
        assert!((got / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(BesselOrder::new(-1.0).is_err());
        let nu = BesselOrder::new(0.2).unwrap();
        assert!(bessel_quotient(nu, -1.0).is_err());
        assert!(log_modified_bessel_i(nu, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn quotient_in_unit_interval_and_increasing(
            nu in -0.5f64..10.0,
            r in 1e-8f64..1e7,
            bump in 1.0001f64..3.0,
        ) {
            let lo = quotient(nu, r);
            let hi = quotient(nu, r * bump);
            prop_assert!(lo > 0.0 && lo <= 1.0);
            prop_assert!(hi >= lo);
        }
    }
}
