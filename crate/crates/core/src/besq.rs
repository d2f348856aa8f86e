//! Squared Bessel process layer.
//!
//! The variance process is a space-time changed squared Bessel process:
//!
//! ```text
//! V_t  = e^{−κt} X_{τ(t)}
//! τ(t) = σ_V² / (4κ) · (e^{κt} − 1),     t(u) = ln(1 + 4κu/σ_V²) / κ
//! dX   = λ du + 2 sqrt(X) dW,             λ = 4κθ/σ_V²,  ν = λ/2 − 1
//! ```
//!
//! Transition over Δτ from x:
//!
//! ```text
//! η ~ Poisson(x / (2Δτ)),   X ~ Gamma(shape ν + η + 1, scale 2Δτ)
//! ```
//!
//! Interior point of a bridge pinned at (τ_L, x_L), (τ_R, x_R), at τ_M:
//!
//! ```text
//! η₁ ~ Poisson([(Δ_R/Δ_L) x_L + (Δ_L/Δ_R) x_R] / (2Δ))
//! η₂ ~ Bessel(ν, sqrt(x_L x_R) / Δ)
//! X  ~ Gamma(shape ν + η₁ + 2η₂ + 1, scale 2 Δ_L Δ_R / Δ)
//! ```

use crate::error::{domain, Error, Result};
use crate::samplers::{sample_bessel, sample_gamma, sample_poisson, BesselDistParams, RngStream};
use crate::specfun::BesselOrder;

/// Heston model constants. `mu` is the drift used in the price update;
/// set it to `rate` for risk-neutral pricing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub sigma_v: f64,
    pub rho: f64,
    pub s0: f64,
    pub v0: f64,
    pub rate: f64,
}

impl HestonParams {
    /// The standard test case: S₀ = K = 100, V₀ = 0.010201, κ = 6.21,
    /// θ = 0.019, σ_V = 0.61, ρ = −0.7, r = 3.19%.
    pub fn benchmark() -> Self {
        Self {
            mu: 0.0319,
            kappa: 6.21,
            theta: 0.019,
            sigma_v: 0.61,
            rho: -0.7,
            s0: 100.0,
            v0: 0.010201,
            rate: 0.0319,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("sigma_v", self.sigma_v),
            ("s0", self.s0),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(domain(name, value));
            }
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(domain("rho", self.rho));
        }
        if !(self.v0 >= 0.0 && self.v0.is_finite()) {
            return Err(domain("v0", self.v0));
        }
        if !self.mu.is_finite() {
            return Err(domain("mu", self.mu));
        }
        if !self.rate.is_finite() {
            return Err(domain("rate", self.rate));
        }
        Ok(())
    }

    /// BESQ dimension λ = 4κθ/σ_V².
    pub fn dimension(&self) -> f64 {
        4.0 * self.kappa * self.theta / (self.sigma_v * self.sigma_v)
    }

    /// Bessel order ν = λ/2 − 1.
    pub fn order(&self) -> f64 {
        0.5 * self.dimension() - 1.0
    }

    pub fn bessel_order(&self) -> Result<BesselOrder> {
        BesselOrder::new(self.order())
    }

    pub fn time_map(&self) -> TimeMap {
        TimeMap {
            kappa: self.kappa,
            sigma_v: self.sigma_v,
        }
    }
}

/// Clock change between calendar time `t` and BESQ time `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMap {
    pub kappa: f64,
    pub sigma_v: f64,
}

impl TimeMap {
    /// σ_V² / (4κ), the BESQ time scale.
    pub fn scale(&self) -> f64 {
        self.sigma_v * self.sigma_v / (4.0 * self.kappa)
    }

    pub fn tau_of_t(&self, t: f64) -> f64 {
        self.scale() * (self.kappa * t).exp_m1()
    }

    pub fn t_of_tau(&self, u: f64) -> f64 {
        (u / self.scale()).ln_1p() / self.kappa
    }

    /// `τ(t + dt) − τ(t)` without cancellation.
    pub fn tau_increment(&self, t: f64, dt: f64) -> f64 {
        self.scale() * (self.kappa * t).exp() * (self.kappa * dt).exp_m1()
    }

    pub fn v_of_x(&self, t: f64, x: f64) -> f64 {
        (-self.kappa * t).exp() * x
    }

    pub fn x_of_v(&self, t: f64, v: f64) -> f64 {
        (self.kappa * t).exp() * v
    }
}

/// A bridge interval in BESQ time with pinned endpoint values and a
/// tolerance budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeSegment {
    pub tau_l: f64,
    pub tau_r: f64,
    pub x_l: f64,
    pub x_r: f64,
    pub delta: f64,
}

impl BridgeSegment {
    pub fn new(tau_l: f64, tau_r: f64, x_l: f64, x_r: f64, delta: f64) -> Result<Self> {
        if !(tau_l >= 0.0 && tau_l < tau_r && tau_r.is_finite()) {
            return Err(Error::Config(format!("segment [{tau_l}, {tau_r}] is empty or invalid")));
        }
        if !(x_l >= 0.0 && x_l.is_finite()) {
            return Err(domain("x_l", x_l));
        }
        if !(x_r >= 0.0 && x_r.is_finite()) {
            return Err(domain("x_r", x_r));
        }
        if !(delta >= 0.0) {
            return Err(domain("delta", delta));
        }
        Ok(Self {
            tau_l,
            tau_r,
            x_l,
            x_r,
            delta,
        })
    }

    pub fn length(&self) -> f64 {
        self.tau_r - self.tau_l
    }
}

/// Exact draw of `X(τ + Δτ)` given `X(τ) = x`.
pub fn sample_transition(
    stream: &mut RngStream,
    params: &HestonParams,
    x: f64,
    dtau: f64,
) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(domain("x", x));
    }
    if !(dtau > 0.0 && dtau.is_finite()) {
        return Err(domain("dtau", dtau));
    }
    let eta = sample_poisson(stream, x / (2.0 * dtau))?;
    sample_gamma(stream, params.order() + eta as f64 + 1.0, 2.0 * dtau)
}

/// Exact draw of the bridge at an interior time `tau_m`, given the pinned
/// endpoints of `seg`.
pub fn sample_bridge_midvalue(
    stream: &mut RngStream,
    params: &HestonParams,
    seg: &BridgeSegment,
    tau_m: f64,
) -> Result<f64> {
    bridge_draw(stream, params, seg.tau_l, seg.tau_r, seg.x_l, seg.x_r, tau_m)
}

/// Same as [`sample_bridge_midvalue`] but taking the interval lengths
/// directly, which keeps precision when `τ` is large and the interval is
/// tiny.
pub(crate) fn bridge_draw_lengths(
    stream: &mut RngStream,
    nu: f64,
    x_l: f64,
    x_r: f64,
    d_left: f64,
    d_right: f64,
) -> Result<f64> {
    if !(d_left > 0.0 && d_right > 0.0) {
        return Err(Error::Config(format!(
            "interior point must split the interval ({d_left}, {d_right})"
        )));
    }
    let d = d_left + d_right;
    let poisson_mean = ((d_right / d_left) * x_l + (d_left / d_right) * x_r) / (2.0 * d);
    let eta1 = sample_poisson(stream, poisson_mean)?;
    let bessel = BesselDistParams::new(BesselOrder::new(nu)?, (x_l * x_r).sqrt() / d)?;
    let eta2 = sample_bessel(stream, &bessel);
    let shape = nu + eta1 as f64 + 2.0 * eta2 as f64 + 1.0;
    sample_gamma(stream, shape, 2.0 * d_left * d_right / d)
}

fn bridge_draw(
    stream: &mut RngStream,
    params: &HestonParams,
    tau_l: f64,
    tau_r: f64,
    x_l: f64,
    x_r: f64,
    tau_m: f64,
) -> Result<f64> {
    if !(tau_l < tau_m && tau_m < tau_r) {
        return Err(Error::Config(format!(
            "interior time {tau_m} outside ({tau_l}, {tau_r})"
        )));
    }
    bridge_draw_lengths(stream, params.order(), x_l, x_r, tau_m - tau_l, tau_r - tau_m)
}
