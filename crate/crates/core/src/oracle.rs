//! Independent reference computations used by the tests and the `validate`
//! command. Nothing here is on the production path.

use rayon::prelude::*;

use statrs::function::gamma::gamma;

use crate::besq::{bridge_draw_lengths, sample_transition, HestonParams};
use crate::error::Result;
use crate::moments::{MomentCoefficients, WeightParams};
use crate::quadrature::{log_mesh, rk4_mesh};
use crate::samplers::RngStream;

/// Expansion coefficients from their defining integrals, by RK4:
///
/// ```text
/// M(u) = A/(b+cu)²
/// Δ'' = M,   Δ(0) = 0, Δ'(1) = 0        A1 = Δ(1),   C1 = Δ'(0),  B1 = −2∫Δ
/// Γ'' = 2MΔ, Γ(0) = 0, Γ'(1) = 0        A2 = Γ(1)/2, C2 = Γ'(0)/2, B2 = ∫(3Δ² − Γ)
/// ```
pub fn coefficients_by_quadrature(
    params: &HestonParams,
    tau_l: f64,
    tau: f64,
    steps: usize,
) -> MomentCoefficients {
    let s2 = params.sigma_v * params.sigma_v;
    let scale = 8.0 * tau * tau / s2;
    let base = 1.0 + 4.0 * params.kappa * tau_l / s2;
    let slope = 4.0 * params.kappa * tau / s2;
    let m = |u: f64| scale / (base + slope * u).powi(2);
    let mesh = log_mesh(base, slope, steps);

    // Δ'(1) − Δ'(0) = ∫M
    let total_m = rk4_mesh(&mesh, [0.0], |u, _| [m(u)], |_, _| {})[0];
    let d_prime0 = -total_m;
    // state: Δ, Δ', ∫Δ, ∫MΔ
    let first = rk4_mesh(
        &mesh,
        [0.0, d_prime0, 0.0, 0.0],
        |u, y| [y[1], m(u), y[0], m(u) * y[0]],
        |_, _| {},
    );
    let g_prime0 = -2.0 * first[3];
    // state: Δ, Δ', Γ, Γ', ∫(3Δ² − Γ)
    let second = rk4_mesh(
        &mesh,
        [0.0, d_prime0, 0.0, g_prime0, 0.0],
        |u, y| {
            [
                y[1],
                m(u),
                y[3],
                2.0 * m(u) * y[0],
                3.0 * y[0] * y[0] - y[2],
            ]
        },
        |_, _| {},
    );
    MomentCoefficients {
        scale,
        base,
        slope,
        a1: first[0],
        a2: 0.5 * second[2],
        b1: -2.0 * first[2],
        b2: second[4],
        c1: d_prime0,
        c2: 0.5 * g_prime0,
    }
}

/// Fills `values[1..n-1]` with an exact bridge draw, given the two end values
/// and strictly increasing BESQ times `taus` (length `2^k + 1`), by dyadic
/// midpoint refinement.
pub fn fill_bridge(stream: &mut RngStream, nu: f64, taus: &[f64], values: &mut [f64]) -> Result<()> {
    let n = taus.len() - 1;
    debug_assert!(n.is_power_of_two() && values.len() == taus.len());
    let mut stride = n;
    while stride > 1 {
        let half = stride / 2;
        let mut left = 0;
        while left < n {
            let right = left + stride;
            let mid = left + half;
            values[mid] = bridge_draw_lengths(
                stream,
                nu,
                values[left],
                values[right],
                taus[mid] - taus[left],
                taus[right] - taus[mid],
            )?;
            left = right;
        }
        stride = half;
    }
    Ok(())
}

/// Trapezoid sum of `f · g` on a grid.
pub fn trapezoid(grid: &[f64], f: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] * weight(g[0]) + v[1] * weight(g[1])))
        .sum()
}

/// Monte Carlo samples of `∫ X w₀ du` over the absolute interval
/// `[τ_L, τ_L + τ]` for a bridge pinned at `x`, `y`, each from a
/// `2^levels`-interval trapezoid sum. Sample `i` uses stream `first_stream + i`.
#[allow(clippy::too_many_arguments)]
pub fn bridge_integral_samples(
    params: &HestonParams,
    x: f64,
    y: f64,
    tau_l: f64,
    tau: f64,
    levels: u32,
    n_paths: usize,
    seed: u64,
    first_stream: u64,
) -> Result<Vec<f64>> {
    let n = 1usize << levels;
    let taus: Vec<f64> = (0..=n).map(|i| tau_l + tau * i as f64 / n as f64).collect();
    let weights = WeightParams::new(params, 0.0);
    let nu = params.order();
    (0..n_paths)
        .into_par_iter()
        .map_init(
            || vec![0.0; n + 1],
            |values, i| {
                let mut stream = RngStream::new(seed, first_stream + i as u64);
                values[0] = x;
                values[n] = y;
                fill_bridge(&mut stream, nu, &taus, values)?;
                Ok(trapezoid(&taus, values, |u| weights.absolute(u)))
            },
        )
        .collect()
}

/// Plain power series of `I_ν(r)` with `terms` terms and no rescaling.
pub fn series_bessel_i(nu: f64, r: f64, terms: usize) -> f64 {
    (0..terms)
        .map(|k| {
            let k = k as f64;
            (0.5 * r).powf(2.0 * k + nu) / (gamma(k + 1.0) * gamma(k + nu + 1.0))
        })
        .sum()
}

/// Bessel-distribution pmf by direct summation of the unnormalised terms
/// `t_{n+1} = t_n (z/2)² / ((n+1)(n+1+ν))`, cut once the terms are
/// negligible past the peak. Terms are rescaled as they grow so large `z`
/// does not overflow.
pub fn bessel_pmf_table(nu: f64, z: f64) -> Vec<f64> {
    let h2 = 0.25 * z * z;
    let mut terms = vec![1.0f64];
    let mut peak = 1.0f64;
    loop {
        let n = terms.len() as f64 - 1.0;
        let next = terms[terms.len() - 1] * h2 / ((n + 1.0) * (n + 1.0 + nu));
        terms.push(next);
        if next > 1e250 {
            terms.iter_mut().for_each(|t| *t *= 1e-250);
            peak *= 1e-250;
        }
        let next = terms[terms.len() - 1];
        peak = peak.max(next);
        if n + 1.0 > h2.sqrt() + 10.0 && next < 1e-18 * peak {
            break;
        }
    }
    let total: f64 = terms.iter().sum();
    terms.iter().map(|t| t / total).collect()
}

/// Monte Carlo samples of `∫₀ᵀ V dt` from exact forward transitions on a
/// uniform grid of `2^levels` steps and the trapezoid rule. Sample `i` uses
/// stream `first_stream + i`.
pub fn fine_integral_samples(
    params: &HestonParams,
    maturity: f64,
    levels: u32,
    n_paths: usize,
    seed: u64,
    first_stream: u64,
) -> Result<Vec<f64>> {
    let n = 1usize << levels;
    let dt = maturity / n as f64;
    let map = params.time_map();
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut stream = RngStream::new(seed, first_stream + i as u64);
            let mut x = params.v0;
            let mut v_prev = params.v0;
            let mut sum = 0.0;
            for k in 0..n {
                let t = k as f64 * dt;
                x = sample_transition(&mut stream, params, x, map.tau_increment(t, dt))?;
                let v = map.v_of_x(t + dt, x);
                sum += 0.5 * dt * (v_prev + v);
                v_prev = v;
            }
            Ok(sum)
        })
        .collect()
}

/// `E[∫₀ᵀ V dt] = θT + (V₀ − θ)(1 − e^{−κT})/κ`.
pub fn mean_integrated_variance(params: &HestonParams, maturity: f64) -> f64 {
    params.theta * maturity
        + (params.v0 - params.theta) * (-(-params.kappa * maturity).exp_m1()) / params.kappa
}

/// Sample mean, sample variance and fourth central moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub m4: f64,
}

impl SampleStats {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let (s2, s4) = xs.iter().fold((0.0, 0.0), |(a, b), &v| {
            let d = (v - mean) * (v - mean);
            (a + d, b + d * d)
        });
        Self {
            n,
            mean,
            var: s2 / (nf - 1.0),
            m4: s4 / nf,
        }
    }

    pub fn mean_stderr(&self) -> f64 {
        (self.var / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn var_stderr(&self) -> f64 {
        ((self.m4 - self.var * self.var).max(0.0) / self.n as f64).sqrt()
    }
}

/// Monte Carlo estimate of `E[exp(−θJ)]` and its standard error from
/// integral samples.
pub fn laplace_from_samples(samples: &[f64], theta: f64) -> (f64, f64) {
    let vals: Vec<f64> = samples.iter().map(|j| (-theta * j).exp()).collect();
    let s = SampleStats::of(&vals);
    (s.mean, s.mean_stderr())
}
