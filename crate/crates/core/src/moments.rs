//! Conditional moments of the weighted bridge integral.
//!
//! For a segment starting at BESQ time `τ_L` of length `τ`, with the bridge
//! pinned at `X(0) = x`, `X(τ) = y` on the local axis,
//!
//! ```text
//! J = ∫_0^τ X(u) w(u) du,        w(u) = a₁ / (b₁ + c₁ u)²
//! a₁ = 4/σ_V²,  b₁ = 1 + 4κτ_L/σ_V²,  c₁ = 4κ/σ_V²
//! ```
//!
//! equals the integrated CIR variance over the matching calendar interval.
//! With `b = b₁`, `c = c₁τ`, `A = 8τ²/σ_V²`, `ε = c/b`, `ℓ = ln(1 + ε)`:
//!
//! ```text
//! A1 = (A/b²) [ε − (1+ε)ℓ] / (ε²(1+ε))
//! B1 = (A/b²) [2(1+ε)²ℓ − 2ε − 3ε²] / (ε³(1+ε))
//! C1 = −(A/b²) / (1+ε)
//! A2 = (A/b²)² [(1+ε)²ℓ² + 6(1+ε)ℓ − 6ε − 4ε²] / (2ε⁴(1+ε)²)
//! B2 = (A/b²)² [2(1+ε)²ℓ² − 2(3+8ε+4ε²)ℓ + 6ε + 11ε²] / (ε⁵(1+ε))
//! C2 = (A/b²)² [2ε + ε² − 2(1+ε)ℓ] / (ε³(1+ε)²)
//! ```
//!
//! The numerators vanish to high order at ε = 0, so below
//! [`SERIES_THRESHOLD`] they are evaluated from precomputed power series.
//!
//! With `z = sqrt(xy)`, `ρ = (z/τ) R_ν(z/τ)` and `K = (B1+C1)x + (2A1+B1)y`,
//!
//! ```text
//! E[J]  = (A1+B1)(ν+1+ρ) − K/(2τ)
//! E[J²] = 2S + (A1²+B1²+2(A1+B1)²−2A2−2B2)ν + (A1+B1)²ν² + K²/(4τ²)
//!       + ((B2+C2−B1²)x − (3A1²+B1²+2A1B1−2A2−B2)y)/τ
//!       + (A1+B1)² z²/τ² + ((A1+B1)² + 2S)ρ − (K/τ)(A1+B1)(ν+1+ρ)
//! S     = A1² + B1² + A1B1 − A2 − B2
//! ```
//!
//! The Laplace transform `E[exp(−θJ)]` is expressed through the solution φ
//! of `φ'' = (θA/(b+cu)²) φ`, `φ(0) = 1`, `φ'(1) = 0`.

use std::sync::OnceLock;

use crate::besq::HestonParams;
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate64, log_mesh, rk4_mesh};
use crate::specfun::{log_i, quotient};

/// Below this value of `c/b` the coefficients come from power series.
pub const SERIES_THRESHOLD: f64 = 0.5;
const SERIES_TERMS: usize = 96;
/// Agreement required between the closed-form `ln ∫φ⁻²` and quadrature.
const CLOSED_FORM_TOLERANCE: f64 = 1e-8;
const NEGATIVE_VARIANCE_TOLERANCE: f64 = 1e-12;

/// Weight functions mapping the BESQ integral to integrated variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    /// `4/σ_V²`, numerator of both weights.
    pub a0: f64,
    /// `4κ/σ_V²`, slope of both weights.
    pub c: f64,
    /// `1 + 4κτ_L/σ_V²`, intercept of the segment-local weight.
    pub b1: f64,
    pub tau_l: f64,
}

impl WeightParams {
    pub fn new(params: &HestonParams, tau_l: f64) -> Self {
        let s2 = params.sigma_v * params.sigma_v;
        Self {
            a0: 4.0 / s2,
            c: 4.0 * params.kappa / s2,
            b1: 1.0 + 4.0 * params.kappa * tau_l / s2,
            tau_l,
        }
    }

    /// Weight on the absolute BESQ time axis.
    pub fn absolute(&self, u: f64) -> f64 {
        self.a0 / (1.0 + self.c * u).powi(2)
    }

    /// Weight on the segment-local axis `u ∈ [0, τ]`.
    pub fn local(&self, u: f64) -> f64 {
        self.a0 / (self.b1 + self.c * u).powi(2)
    }
}

/// Expansion coefficients of the bridge Laplace transform in θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCoefficients {
    /// `A = 8τ²/σ_V²`; the ODE coefficient is `θA`.
    pub scale: f64,
    /// `b = 1 + 4κτ_L/σ_V²`.
    pub base: f64,
    /// `c = 4κτ/σ_V²`.
    pub slope: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl MomentCoefficients {
    /// ODE coefficient `a = θA`.
    pub fn ode_coefficient(&self, theta: f64) -> f64 {
        theta * self.scale
    }
}

/// First two conditional moments of the weighted bridge integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeMoments {
    pub m1: f64,
    pub m2: f64,
    pub var: f64,
    /// Set when a slightly negative variance was rounded up to zero.
    pub clamped: bool,
}

/// Power series in ε of the five normalised numerators.
struct NumeratorSeries {
    a1: Vec<f64>,
    b1: Vec<f64>,
    a2: Vec<f64>,
    b2: Vec<f64>,
    c2: Vec<f64>,
}

fn series() -> &'static NumeratorSeries {
    static SERIES: OnceLock<NumeratorSeries> = OnceLock::new();
    SERIES.get_or_init(build_series)
}

fn build_series() -> NumeratorSeries {
    let n = SERIES_TERMS + 6;
    let mut log1p = vec![0.0; n];
    for (k, c) in log1p.iter_mut().enumerate().skip(1) {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        *c = sign / k as f64;
    }
    let mul = |p: &[f64], q: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (j, &qj) in q.iter().enumerate().take(n - i) {
                out[i + j] += pi * qj;
            }
        }
        out
    };
    let poly = |coeffs: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        out[..coeffs.len()].copy_from_slice(coeffs);
        out
    };
    let add = |terms: &[(f64, &Vec<f64>)]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (w, t) in terms {
            for (o, v) in out.iter_mut().zip(t.iter()) {
                *o += w * v;
            }
        }
        out
    };
    let log_sq = mul(&log1p, &log1p);
    let one_eps = poly(&[1.0, 1.0]);
    let one_eps_sq = poly(&[1.0, 2.0, 1.0]);
    let l1 = mul(&one_eps, &log1p);
    let l2 = mul(&one_eps_sq, &log1p);
    let q2 = mul(&one_eps_sq, &log_sq);
    let eps = poly(&[0.0, 1.0]);

    let a1 = add(&[(1.0, &eps), (-1.0, &l1)]);
    let b1 = add(&[(2.0, &l2), (1.0, &poly(&[0.0, -2.0, -3.0]))]);
    let a2 = add(&[(1.0, &q2), (6.0, &l1), (1.0, &poly(&[0.0, -6.0, -4.0]))]);
    let b2 = add(&[
        (2.0, &q2),
        (-2.0, &mul(&poly(&[3.0, 8.0, 4.0]), &log1p)),
        (1.0, &poly(&[0.0, 6.0, 11.0])),
    ]);
    let c2 = add(&[(1.0, &poly(&[0.0, 2.0, 1.0])), (-2.0, &l1)]);
    let shift = |v: Vec<f64>, order: usize| v[order..order + SERIES_TERMS].to_vec();
    NumeratorSeries {
        a1: shift(a1, 2),
        b1: shift(b1, 3),
        a2: shift(a2, 4),
        b2: shift(b2, 5),
        c2: shift(c2, 3),
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Normalised numerators `[ε−(1+ε)ℓ]/ε²`, `[...]/ε³`, ... in the order
/// (A1, B1, A2, B2, C2).
fn normalised_numerators(eps: f64) -> [f64; 5] {
    if eps < SERIES_THRESHOLD {
        let s = series();
        [
            horner(&s.a1, eps),
            horner(&s.b1, eps),
            horner(&s.a2, eps),
            horner(&s.b2, eps),
            horner(&s.c2, eps),
        ]
    } else {
        direct_numerators(eps)
    }
}

fn direct_numerators(eps: f64) -> [f64; 5] {
    let l = eps.ln_1p();
    let e1 = 1.0 + eps;
    let e2 = eps * eps;
    [
        (eps - e1 * l) / e2,
        (2.0 * e1 * e1 * l - 2.0 * eps - 3.0 * e2) / (e2 * eps),
        (e1 * e1 * l * l + 6.0 * e1 * l - 6.0 * eps - 4.0 * e2) / (e2 * e2),
        (2.0 * e1 * e1 * l * l - 2.0 * (3.0 + 8.0 * eps + 4.0 * e2) * l + 6.0 * eps + 11.0 * e2)
            / (e2 * e2 * eps),
        (2.0 * eps + e2 - 2.0 * e1 * l) / (e2 * eps),
    ]
}

fn check_segment(tau_l: f64, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(domain("tau", tau));
    }
    if !(tau_l >= 0.0 && tau_l.is_finite()) {
        return Err(domain("tau_l", tau_l));
    }
    Ok(())
}

/// Coefficients for the segment `[τ_L, τ_L + τ]`.
pub fn coefficients(params: &HestonParams, tau_l: f64, tau: f64) -> Result<MomentCoefficients> {
    check_segment(tau_l, tau)?;
    Ok(coefficients_unchecked(params, tau_l, tau))
}

pub(crate) fn coefficients_unchecked(
    params: &HestonParams,
    tau_l: f64,
    tau: f64,
) -> MomentCoefficients {
    let s2 = params.sigma_v * params.sigma_v;
    let scale = 8.0 * tau * tau / s2;
    let base = 1.0 + 4.0 * params.kappa * tau_l / s2;
    let slope = 4.0 * params.kappa * tau / s2;
    let eps = slope / base;
    let q1 = scale / (base * base);
    let q2 = q1 * q1;
    let e1 = 1.0 + eps;
    let [na1, nb1, na2, nb2, nc2] = normalised_numerators(eps);
    MomentCoefficients {
        scale,
        base,
        slope,
        a1: q1 * na1 / e1,
        b1: q1 * nb1 / e1,
        c1: -q1 / e1,
        a2: q2 * na2 / (2.0 * e1 * e1),
        b2: q2 * nb2 / e1,
        c2: q2 * nc2 / (e1 * e1),
    }
}

/// Conditional mean and variance of the weighted bridge integral over
/// `[τ_L, τ_L + τ]` with endpoint values `x`, `y`.
pub fn bridge_moments(
    params: &HestonParams,
    x: f64,
    y: f64,
    tau_l: f64,
    tau: f64,
) -> Result<BridgeMoments> {
    check_segment(tau_l, tau)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(domain("x", x));
    }
    if !(y >= 0.0 && y.is_finite()) {
        return Err(domain("y", y));
    }
    let k = coefficients_unchecked(params, tau_l, tau);
    moments_from(&k, params.order(), x, y, tau)
}

pub(crate) fn moments_from(
    k: &MomentCoefficients,
    nu: f64,
    x: f64,
    y: f64,
    tau: f64,
) -> Result<BridgeMoments> {
    let z = (x * y).sqrt();
    let arg = z / tau;
    let rho = if arg > 0.0 { arg * quotient(nu, arg) } else { 0.0 };
    let ab = k.a1 + k.b1;
    let kk = (k.b1 + k.c1) * x + (2.0 * k.a1 + k.b1) * y;
    let s = k.a1 * k.a1 + k.b1 * k.b1 + k.a1 * k.b1 - k.a2 - k.b2;
    let head = nu + 1.0 + rho;
    let m1 = ab * head - kk / (2.0 * tau);
    let m2 = 2.0 * s
        + (k.a1 * k.a1 + k.b1 * k.b1 + 2.0 * ab * ab - 2.0 * k.a2 - 2.0 * k.b2) * nu
        + ab * ab * nu * nu
        + kk * kk / (4.0 * tau * tau)
        + ((k.b2 + k.c2 - k.b1 * k.b1) * x
            - (3.0 * k.a1 * k.a1 + k.b1 * k.b1 + 2.0 * k.a1 * k.b1 - 2.0 * k.a2 - k.b2) * y)
            / tau
        + ab * ab * arg * arg
        + (ab * ab + 2.0 * s) * rho
        - (kk / tau) * ab * head;
    let raw = m2 - m1 * m1;
    if raw >= 0.0 {
        return Ok(BridgeMoments {
            m1,
            m2,
            var: raw,
            clamped: false,
        });
    }
    if raw < -NEGATIVE_VARIANCE_TOLERANCE * m2.abs() {
        return Err(Error::NegativeVariance { var: raw, m2 });
    }
    Ok(BridgeMoments {
        m1,
        m2,
        var: 0.0,
        clamped: true,
    })
}

/// `φ(1)`, `φ'(0)` and `∫₀¹ φ⁻²` for the boundary value problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSolution {
    pub phi1: f64,
    pub phi_prime0: f64,
    pub int_phi_inv_sq: f64,
}

/// The same quantities as logarithms, which keeps `log L` accurate when
/// θ is small and every term is close to its θ = 0 value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PhiLogs {
    pub ln_phi1: f64,
    pub phi_prime0: f64,
    pub ln_int: f64,
}

impl From<&PhiSolution> for PhiLogs {
    fn from(sol: &PhiSolution) -> Self {
        Self {
            ln_phi1: sol.phi1.ln(),
            phi_prime0: sol.phi_prime0,
            ln_int: sol.int_phi_inv_sq.ln(),
        }
    }
}

/// Closed form of φ, in terms of `s = (b+c)/b`, `r = sqrt(c²+4a)/c`,
/// `p = (r−1)/2`, `q = −(r+1)/2` and `D = p s^{−r} − q`:
///
/// ```text
/// φ(u)  = e ((b+cu)/b)^{−p} + (1−e) ((b+cu)/b)^{−q},   e = −q/D
/// φ'(0) = −(a/(bc)) (1 − s^{−r}) / D
/// φ(1)  = r s^{−p} / D
/// ∫φ⁻²  = b (s^r − 1) D / (c r²)
/// ```
///
/// `r − 1 = 4a / (c (sqrt(c²+4a) + c))` is formed directly so that nothing
/// cancels as `a → 0`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PhiClosedForm {
    b: f64,
    c: f64,
    p: f64,
    /// Weight of the decaying part of φ. The growing part's weight is
    /// `1 − mix`, but is kept as a log since it can be far below rounding.
    mix: f64,
    ln_abs_rest: f64,
    pub logs: PhiLogs,
    pub solution: PhiSolution,
}

impl PhiClosedForm {
    pub(crate) fn new(b: f64, c: f64, a: f64) -> Result<Self> {
        let disc = c * c + 4.0 * a;
        if !(disc > 0.0) {
            return Err(domain("laplace argument", a));
        }
        let r_minus_1 = 4.0 * a / (c * (disc.sqrt() + c));
        let r = 1.0 + r_minus_1;
        let p = 0.5 * r_minus_1;
        let q = -1.0 - p;
        let eps = c / b;
        let log_s = eps.ln_1p();
        let s_neg_r = (-r * log_s).exp();
        let d_minus_1 = p * (1.0 + s_neg_r);
        if !(d_minus_1 > -1.0) {
            return Err(domain("laplace argument", a));
        }
        let d = 1.0 + d_minus_1;
        // D = r + p (s^{−r} − 1), so ln(D/r) and ln(r/D) need no cancellation
        let decay = (-r * log_s).exp_m1();
        let ln_d_over_r = (p * decay / r).ln_1p();
        let ln_phi1 = -p * log_s - ln_d_over_r;
        // (s^r − 1)/(εr) − 1 = [(e^t − 1 − t) + r(ln(1+ε) − ε)] / (εr),  t = r ln s
        let excess = expm1_minus_x(r * log_s) + r * ln_1p_minus_x(eps);
        let t = r * log_s;
        let ln_int = if t > 1.0 {
            // 1 + excess/(εr) = (s^r − 1)/(εr), which overflows directly
            t + (-(-t).exp_m1()).ln() - (eps * r).ln() + ln_d_over_r
        } else {
            (excess / (eps * r)).ln_1p() + ln_d_over_r
        };
        let phi_prime0 = (a / (b * c)) * decay / d;
        Ok(Self {
            b,
            c,
            p,
            mix: -q / d,
            ln_abs_rest: p.abs().ln() - t - d.ln(),
            logs: PhiLogs {
                ln_phi1,
                phi_prime0,
                ln_int,
            },
            solution: PhiSolution {
                phi1: ln_phi1.exp(),
                phi_prime0,
                int_phi_inv_sq: ln_int.exp(),
            },
        })
    }

    #[cfg(test)]
    fn phi(&self, u: f64) -> f64 {
        let g = (self.c * u / self.b).ln_1p();
        self.ln_phi_at(g).exp()
    }

    /// `ln φ` at `v = ln(1 + cu/b)`.
    fn ln_phi_at(&self, v: f64) -> f64 {
        let growth = 1.0 + 2.0 * self.p;
        let tail = self.p.signum() * (self.ln_abs_rest + growth * v).exp();
        -self.p * v + (self.mix + tail).ln()
    }

    /// `ln ∫₀¹ φ⁻²` by composite Gauss–Legendre in `v = ln(1 + cu/b)`, with
    /// enough panels for the exponential growth of the integrand and the
    /// largest endpoint value factored out.
    pub(crate) fn quadrature_ln_inv_sq(&self) -> f64 {
        let span = (self.c / self.b).ln_1p();
        let ln_jac = (self.b / self.c).ln();
        let g = |v: f64| ln_jac + v - 2.0 * self.ln_phi_at(v);
        let shift = g(0.0).max(g(span));
        let growth = (1.0 + 2.0 * self.p).abs() * span;
        let panels = (growth / 8.0).ceil().clamp(1.0, 512.0) as usize;
        let width = span / panels as f64;
        let sum: f64 = (0..panels)
            .map(|i| {
                let lo = i as f64 * width;
                integrate64(lo, lo + width, |v| (g(v) - shift).exp())
            })
            .sum();
        shift + sum.ln()
    }
}

/// `E[exp(−θJ)]` for θ ≥ 0.
pub fn laplace_transform(
    params: &HestonParams,
    x: f64,
    y: f64,
    tau_l: f64,
    tau: f64,
    theta: f64,
) -> Result<f64> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(domain("theta", theta));
    }
    laplace_transform_extended(params, x, y, tau_l, tau, theta)
}

/// Like [`laplace_transform`] but also accepts negative θ as long as the
/// transform stays finite (`c² + 4θA > 0` and φ positive). Used for
/// central differences at θ = 0.
pub fn laplace_transform_extended(
    params: &HestonParams,
    x: f64,
    y: f64,
    tau_l: f64,
    tau: f64,
    theta: f64,
) -> Result<f64> {
    check_segment(tau_l, tau)?;
    if !(x >= 0.0 && y >= 0.0) {
        return Err(domain("endpoint", x.min(y)));
    }
    if theta == 0.0 {
        return Ok(1.0);
    }
    let k = coefficients_unchecked(params, tau_l, tau);
    let form = PhiClosedForm::new(k.base, k.slope, k.ode_coefficient(theta))?;
    let quad = form.quadrature_ln_inv_sq();
    if !((form.logs.ln_int - quad).abs() <= CLOSED_FORM_TOLERANCE) {
        return Err(Error::ClosedFormMismatch {
            closed: form.logs.ln_int,
            quadrature: quad,
        });
    }
    Ok(assemble_laplace(params.order(), x, y, tau, &form.logs).exp())
}

/// `e^t − 1 − t`.
fn expm1_minus_x(t: f64) -> f64 {
    if t.abs() > 0.5 {
        return t.exp_m1() - t;
    }
    let mut term = 0.5 * t * t;
    let mut sum = term;
    let mut n = 2.0;
    while term.abs() > 1e-17 * sum.abs() {
        n += 1.0;
        term *= t / n;
        sum += term;
    }
    sum
}

/// `ln(1 + x) − x`.
fn ln_1p_minus_x(x: f64) -> f64 {
    if x.abs() > 0.25 {
        return x.ln_1p() - x;
    }
    let mut power = x * x;
    let mut sum = -0.5 * power;
    let mut n = 2.0;
    loop {
        n += 1.0;
        power *= -x;
        let term = -power / n;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return sum;
        }
    }
}

/// `log E[exp(−θJ)]` from the φ quantities:
///
/// ```text
/// k = φ(1) ∫φ⁻²,   r₀ = sqrt(xy)/τ
/// log L = −ln k + ln I_ν(r₀/k) − ln I_ν(r₀)
///       + x/(2τ) (φ'(0) + 1 − 1/∫φ⁻²) + y/(2τ) (1 − 1/(φ(1)² ∫φ⁻²))
/// ```
///
/// The Bessel term is `−ν ln k + ∫_{r₀}^{r₀/k} R_ν` when `k` is near one,
/// integrated over the offset from `r₀` so the short interval keeps its length.
pub(crate) fn assemble_laplace(nu: f64, x: f64, y: f64, tau: f64, logs: &PhiLogs) -> f64 {
    let ln_k = logs.ln_phi1 + logs.ln_int;
    let r0 = (x * y).sqrt() / tau;
    let log_ratio = if r0 == 0.0 {
        -nu * ln_k
    } else if ln_k.abs() < 0.5 {
        let span = r0 * (-ln_k).exp_m1();
        -nu * ln_k + integrate64(0.0, span, |t| quotient(nu, r0 + t))
    } else {
        log_i(nu, r0 * (-ln_k).exp()) - log_i(nu, r0)
    };
    let x_term = x / (2.0 * tau) * (logs.phi_prime0 - (-logs.ln_int).exp_m1());
    let y_term = -y / (2.0 * tau) * (-(2.0 * logs.ln_phi1 + logs.ln_int)).exp_m1();
    -ln_k + log_ratio + x_term + y_term
}

/// Closed-form φ quantities for the segment, θ ≥ 0.
pub fn solve_phi_closed(
    params: &HestonParams,
    tau_l: f64,
    tau: f64,
    theta: f64,
) -> Result<PhiSolution> {
    check_segment(tau_l, tau)?;
    if !(theta >= 0.0) {
        return Err(domain("theta", theta));
    }
    let k = coefficients_unchecked(params, tau_l, tau);
    Ok(PhiClosedForm::new(k.base, k.slope, k.ode_coefficient(theta))?.solution)
}

/// Shooting solution of the boundary value problem by RK4 on a mesh
/// graded in `ln(b + cu)`. Used only to check the closed forms.
pub fn solve_phi_numeric(
    params: &HestonParams,
    tau_l: f64,
    tau: f64,
    theta: f64,
) -> Result<PhiSolution> {
    check_segment(tau_l, tau)?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(domain("theta", theta));
    }
    let k = coefficients_unchecked(params, tau_l, tau);
    let (a, b, c) = (k.ode_coefficient(theta), k.base, k.slope);
    let mesh = log_mesh(b, c, 4000);
    let rhs = |u: f64, y: &[f64; 3]| -> [f64; 3] {
        let m = a / (b + c * u).powi(2);
        [y[1], m * y[0], 1.0 / (y[0] * y[0])]
    };
    // linear in the initial slope: φ'(1) = g0 + slope·(g1 − g0)
    let g0 = rk4_mesh(&mesh, [1.0, 0.0, 0.0], rhs, |_, _| {})[1];
    let g1 = rk4_mesh(&mesh, [1.0, 1.0, 0.0], rhs, |_, _| {})[1];
    if !(g0.is_finite() && g1.is_finite()) || g1 == g0 {
        return Err(Error::NoConvergence("shooting sensitivity degenerate".into()));
    }
    let slope = -g0 / (g1 - g0);
    let mut positive = true;
    let end = rk4_mesh(&mesh, [1.0, slope, 0.0], rhs, |_, y| positive &= y[0] > 0.0);
    let scale = 1.0 + g0.abs().max(g1.abs());
    if !positive || !end.iter().all(|v| v.is_finite()) || end[1].abs() > 1e-9 * scale {
        return Err(Error::NoConvergence(format!(
            "boundary residual {} at theta {theta}",
            end[1]
        )));
    }
    Ok(PhiSolution {
        phi1: end[0],
        phi_prime0: slope,
        int_phi_inv_sq: end[2],
    })
}
