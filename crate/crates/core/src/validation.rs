//! Oracle checks behind the `validate` command.
//!
//! Each check compares a production value against an independent reference
//! and records the tolerance it was held to. Sample sizes are kept small
//! enough for a whole run to finish in well under a minute.

use std::fmt;
use std::io::Write;

use crate::adapt::{estimate_integral, AdaptConfig};
use crate::bench::csv_float;
use crate::besq::{sample_bridge_midvalue, sample_transition, BridgeSegment, HestonParams};
use crate::error::{Error, Result};
use crate::heston::{price_european_call, step_predictor_corrector, CallPricing, PathState, Scheme};
use crate::moments::{
    bridge_moments, coefficients, laplace_transform, laplace_transform_extended, solve_phi_closed,
    solve_phi_numeric,
};
use crate::oracle::{
    bessel_pmf_table, bridge_integral_samples, coefficients_by_quadrature, fine_integral_samples,
    laplace_from_samples, mean_integrated_variance, series_bessel_i, SampleStats,
};
use crate::samplers::{
    sample_bessel, sample_gamma, sample_normal, sample_poisson, BesselDistParams, RngStream,
};
use crate::specfun::{bessel_quotient, log_modified_bessel_i, BesselOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Specfun,
    Samplers,
    Besq,
    Moments,
    Adapt,
    Heston,
    All,
}

impl Suite {
    const EACH: [Suite; 6] = [
        Suite::Specfun,
        Suite::Samplers,
        Suite::Besq,
        Suite::Moments,
        Suite::Adapt,
        Suite::Heston,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Specfun => "specfun",
            Self::Samplers => "samplers",
            Self::Besq => "besq",
            Self::Moments => "moments",
            Self::Adapt => "adapt",
            Self::Heston => "heston",
            Self::All => "all",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::EACH
            .into_iter()
            .chain([Self::All])
            .find(|s| s.name() == name.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown suite {name:?}")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One comparison: `|value − reference| ≤ tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(suite: Suite, name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            value,
            reference,
            tolerance,
            passed: (value - reference).abs() <= tolerance,
        }
    }

    fn relative(suite: Suite, name: impl Into<String>, value: f64, reference: f64, rel: f64) -> Self {
        Self::new(suite, name, value, reference, rel * reference.abs())
    }

    /// `value ≤ bound`, reported with the bound as reference.
    fn at_most(suite: Suite, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            value,
            reference: bound,
            tolerance: 0.0,
            passed: value <= bound,
        }
    }

    fn mean(suite: Suite, name: impl Into<String>, stats: &SampleStats, reference: f64) -> Self {
        Self::new(suite, name, stats.mean, reference, 3.0 * stats.mean_stderr())
    }

    fn variance(suite: Suite, name: impl Into<String>, stats: &SampleStats, reference: f64) -> Self {
        Self::new(suite, name, stats.var, reference, 3.0 * stats.var_stderr())
    }
}

/// Runs one suite, or every suite for [`Suite::All`].
pub fn run_validation(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::All => {
            let mut all = Vec::new();
            for s in Suite::EACH {
                all.extend(run_validation(s, seed)?);
            }
            Ok(all)
        }
        Suite::Specfun => specfun_checks(),
        Suite::Samplers => sampler_checks(seed),
        Suite::Besq => besq_checks(seed),
        Suite::Moments => moment_checks(seed),
        Suite::Adapt => adapt_checks(seed),
        Suite::Heston => heston_checks(seed),
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

pub fn write_checks_csv<W: Write>(out: W, checks: &[Check]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["suite", "check", "value", "reference", "tolerance", "passed"])?;
    for c in checks {
        w.write_record([
            c.suite.to_string(),
            c.name.clone(),
            csv_float(c.value),
            csv_float(c.reference),
            csv_float(c.tolerance),
            c.passed.to_string(),
        ])?;
    }
    w.flush()
}

fn stats_of(n: usize, seed: u64, mut draw: impl FnMut(&mut RngStream) -> Result<f64>) -> Result<SampleStats> {
    let mut stream = RngStream::new(seed, 0);
    let xs = (0..n).map(|_| draw(&mut stream)).collect::<Result<Vec<_>>>()?;
    Ok(SampleStats::of(&xs))
}

fn specfun_checks() -> Result<Vec<Check>> {
    let s = Suite::Specfun;
    let bench = HestonParams::benchmark().bessel_order()?;
    let half = BesselOrder::new(0.5)?;
    let mut out = vec![
        Check::new(s, "quotient_at_zero", bessel_quotient(bench, 0.0)?, 0.0, 0.0),
        Check::relative(
            s,
            "quotient_vs_series_nu0.5_r1",
            bessel_quotient(half, 1.0)?,
            series_bessel_i(1.5, 1.0, 50) / series_bessel_i(0.5, 1.0, 50),
            1e-12,
        ),
        Check::new(
            s,
            "quotient_vs_asymptote_r1e6",
            bessel_quotient(bench, 1e6)?,
            1.0 - (bench.get() + 0.5) / 1e6,
            1e-9,
        ),
        Check::new(s, "log_i_nu0_r0", log_modified_bessel_i(BesselOrder::new(0.0)?, 0.0)?, 0.0, 0.0),
        Check::new(
            s,
            "log_i_vs_series_nu0.5_r2",
            log_modified_bessel_i(half, 2.0)?,
            series_bessel_i(0.5, 2.0, 50).ln(),
            1e-12,
        ),
        Check::new(
            s,
            "log_i_vs_asymptote_r700",
            log_modified_bessel_i(bench, 700.0)?,
            700.0 - 0.5 * (2.0 * std::f64::consts::PI * 700.0).ln(),
            1e-3,
        ),
    ];
    for &r in &[1e-6, 1e-3, 0.5, 5.0, 20.0, 45.0] {
        out.push(Check::relative(
            s,
            format!("quotient_vs_series_ratio_r{r}"),
            bessel_quotient(bench, r)?,
            series_bessel_i(bench.get() + 1.0, r, 80) / series_bessel_i(bench.get(), r, 80),
            1e-10,
        ));
    }
    for &r in &[0.1, 3.0, 60.0, 2e3, 5e5] {
        let h = 1e-5 * r;
        let d = (log_modified_bessel_i(bench, r + h)? - log_modified_bessel_i(bench, r - h)?) / (2.0 * h);
        out.push(Check::relative(
            s,
            format!("log_derivative_identity_r{r}"),
            d,
            bench.get() / r + bessel_quotient(bench, r)?,
            1e-8,
        ));
    }
    Ok(out)
}

fn sampler_checks(seed: u64) -> Result<Vec<Check>> {
    let s = Suite::Samplers;
    let n = 200_000;
    let mut out = Vec::new();
    let g = stats_of(n, seed, |r| sample_gamma(r, 2.0, 3.0))?;
    out.push(Check::mean(s, "gamma_mean_k2_s3", &g, 6.0));
    out.push(Check::variance(s, "gamma_var_k2_s3", &g, 18.0));
    let g = stats_of(n, seed + 1, |r| sample_gamma(r, 0.6342, 2.0))?;
    out.push(Check::mean(s, "gamma_mean_k0.6342_s2", &g, 1.2684));
    out.push(Check::variance(s, "gamma_var_k0.6342_s2", &g, 2.5368));
    let p = stats_of(n, seed + 2, |r| Ok(sample_poisson(r, 4.7)? as f64))?;
    out.push(Check::mean(s, "poisson_mean_4.7", &p, 4.7));
    out.push(Check::variance(s, "poisson_var_4.7", &p, 4.7));
    let p = stats_of(n, seed + 3, |r| Ok(sample_poisson(r, 1e5)? as f64))?;
    out.push(Check::mean(s, "poisson_mean_1e5", &p, 1e5));
    let z = stats_of(n, seed + 4, |r| Ok(sample_normal(r)))?;
    out.push(Check::mean(s, "normal_mean", &z, 0.0));
    out.push(Check::variance(s, "normal_var", &z, 1.0));
    let nu = HestonParams::benchmark().order();
    for (k, &(nu, zv)) in [(nu, 2.0), (1.5, 10.0), (nu, 70.0), (nu, 5e3)].iter().enumerate() {
        let params = BesselDistParams::new(BesselOrder::new(nu)?, zv)?;
        let pmf = bessel_pmf_table(nu, zv);
        let mean: f64 = pmf.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
        let var: f64 = pmf.iter().enumerate().map(|(i, p)| (i as f64 - mean).powi(2) * p).sum();
        let st = stats_of(n, seed + 10 + k as u64, |r| Ok(sample_bessel(r, &params) as f64))?;
        out.push(Check::mean(s, format!("bessel_mean_nu{nu:.4}_z{zv}"), &st, mean));
        out.push(Check::variance(s, format!("bessel_var_nu{nu:.4}_z{zv}"), &st, var));
        let normaliser: f64 = (0..pmf.len() as u64).map(|i| params.log_pmf(i).exp()).sum();
        // log p_n carries terms of size ~z, so rounding alone is ~z·ε
        let tol = 1e-12 + 8.0 * f64::EPSILON * zv;
        out.push(Check::new(s, format!("bessel_log_pmf_sums_to_one_z{zv}"), normaliser, 1.0, tol));
    }
    let mut a = RngStream::new(seed, 9);
    let mut b = RngStream::new(seed, 9);
    let same = (0..1000).all(|_| a.uniform().to_bits() == b.uniform().to_bits());
    out.push(Check::new(s, "stream_reproducible", f64::from(u8::from(same)), 1.0, 0.0));
    Ok(out)
}

fn besq_checks(seed: u64) -> Result<Vec<Check>> {
    let s = Suite::Besq;
    let p = HestonParams::benchmark();
    let lambda = p.dimension();
    let n = 200_000;
    let mut out = Vec::new();
    for (k, &(x, dt)) in [(0.0, 0.1), (0.01, 0.001), (0.5, 0.05), (1.0, 1.0), (0.02, 1e-5)].iter().enumerate() {
        let st = stats_of(n, seed + k as u64, |r| sample_transition(r, &p, x, dt))?;
        out.push(Check::mean(s, format!("transition_mean_x{x}_dt{dt}"), &st, x + lambda * dt));
        out.push(Check::variance(
            s,
            format!("transition_var_x{x}_dt{dt}"),
            &st,
            4.0 * x * dt + 2.0 * lambda * dt * dt,
        ));
    }
    // Two-step composition: bridge midpoints of transition pairs reproduce
    // the one-step law of the midpoint.
    let (x0, d) = (0.05, 0.02);
    let mut stream = RngStream::new(seed, 77);
    let mut mids = Vec::with_capacity(n);
    for _ in 0..n {
        let y = sample_transition(&mut stream, &p, x0, 2.0 * d)?;
        let seg = BridgeSegment::new(0.0, 2.0 * d, x0, y, 0.0)?;
        mids.push(sample_bridge_midvalue(&mut stream, &p, &seg, d)?);
    }
    let st = SampleStats::of(&mids);
    out.push(Check::mean(s, "bridge_composition_mean", &st, x0 + lambda * d));
    out.push(Check::variance(s, "bridge_composition_var", &st, 4.0 * x0 * d + 2.0 * lambda * d * d));
    let map = p.time_map();
    for &t in &[0.0, 0.3, 1.0, 4.0] {
        out.push(Check::new(s, format!("time_map_roundtrip_t{t}"), map.t_of_tau(map.tau_of_t(t)), t, 1e-13));
    }
    Ok(out)
}

/// Endpoints and segments used by the moment checks: `(x, y, τ_L, τ)`.
const MOMENT_CONFIGS: [(f64, f64, f64, f64); 4] = [
    (0.010201, 0.02, 0.0, 0.5),
    (0.3, 0.8, 1.0, 0.2),
    (0.5, 0.0, 2.0, 1.5),
    (0.0, 0.0, 0.5, 0.05),
];

fn moment_checks(seed: u64) -> Result<Vec<Check>> {
    let s = Suite::Moments;
    let p = HestonParams::benchmark();
    let mut out = Vec::new();
    for &(tau_l, tau) in &[(0.0, 1.0), (1.0, 0.3), (3.0, 2.0), (0.0, 1e-3)] {
        let a = coefficients(&p, tau_l, tau)?;
        let o = coefficients_by_quadrature(&p, tau_l, tau, 4000);
        for (name, got, want) in [
            ("a1", a.a1, o.a1),
            ("a2", a.a2, o.a2),
            ("b1", a.b1, o.b1),
            ("b2", a.b2, o.b2),
            ("c1", a.c1, o.c1),
            ("c2", a.c2, o.c2),
        ] {
            out.push(Check::relative(s, format!("{name}_vs_quadrature_tl{tau_l}_t{tau}"), got, want, 1e-8));
        }
    }
    for &(tau_l, tau, theta) in &[(0.0, 0.5, 1.0), (1.0, 0.3, 5.0), (0.5, 2.0, 0.5), (4.0, 0.01, 3.0)] {
        let c = solve_phi_closed(&p, tau_l, tau, theta)?;
        let n = solve_phi_numeric(&p, tau_l, tau, theta)?;
        let tag = format!("tl{tau_l}_t{tau}_th{theta}");
        out.push(Check::relative(s, format!("phi1_closed_vs_bvp_{tag}"), c.phi1, n.phi1, 1e-8));
        out.push(Check::new(s, format!("phi_prime0_closed_vs_bvp_{tag}"), c.phi_prime0, n.phi_prime0, 1e-8));
        out.push(Check::relative(
            s,
            format!("int_phi_inv_sq_closed_vs_bvp_{tag}"),
            c.int_phi_inv_sq,
            n.int_phi_inv_sq,
            1e-8,
        ));
    }
    for (k, &(x, y, tau_l, tau)) in MOMENT_CONFIGS.iter().enumerate() {
        let tag = format!("x{x}_y{y}_tl{tau_l}_t{tau}");
        let m = bridge_moments(&p, x, y, tau_l, tau)?;
        let (fd1, fd2) = laplace_derivatives(&p, x, y, tau_l, tau, m.m1)?;
        out.push(Check::relative(s, format!("fd_m1_{tag}"), fd1, m.m1, 1e-5));
        out.push(Check::relative(s, format!("fd_m2_{tag}"), fd2, m.m2, 1e-4));
        let samples = bridge_integral_samples(&p, x, y, tau_l, tau, 10, 20_000, seed, (k as u64) << 32)?;
        let st = SampleStats::of(&samples);
        out.push(Check::new(
            s,
            format!("mc_m1_{tag}"),
            st.mean,
            m.m1,
            (3.0 * st.mean_stderr()).max(0.02 * m.m1),
        ));
        out.push(Check::new(
            s,
            format!("mc_var_{tag}"),
            st.var,
            m.var,
            (3.0 * st.var_stderr()).max(0.02 * m.var),
        ));
        let theta = 1.0 / m.m1.max(1e-12);
        let (mc, se) = laplace_from_samples(&samples, theta);
        out.push(Check::new(
            s,
            format!("mc_laplace_{tag}"),
            laplace_transform(&p, x, y, tau_l, tau, theta)?,
            mc,
            3.0 * se + 1e-6,
        ));
    }
    let mut rng = RngStream::new(seed, 99);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let (x, y) = (rng.uniform(), rng.uniform());
        let tau = 1e-4 + 2.0 * rng.uniform();
        let tau_l = 5.0 * rng.uniform();
        let m = bridge_moments(&p, x, y, tau_l, tau)?;
        worst = worst.min(m.var).min(m.m2 - m.m1 * m.m1 + 1e-12 * m.m2);
    }
    out.push(Check::at_most(s, "variance_nonnegative_random_1000", -worst, 0.0));
    Ok(out)
}

/// Five-point central differences of `L(θ)` at 0 with a step sized to the
/// mean and kept inside the domain of the transform.
pub fn laplace_derivatives(
    params: &HestonParams,
    x: f64,
    y: f64,
    tau_l: f64,
    tau: f64,
    m1: f64,
) -> Result<(f64, f64)> {
    let k = coefficients(params, tau_l, tau)?;
    // φ stays positive while c² + 4θA > 0
    let limit = k.slope * k.slope / (4.0 * k.scale);
    let h = (1e-2 / m1.max(1e-300)).min(0.2 * limit);
    let l = |t: f64| laplace_transform_extended(params, x, y, tau_l, tau, t);
    let (p1, m1v, p2, m2v) = (l(h)?, l(-h)?, l(2.0 * h)?, l(-2.0 * h)?);
    let d1 = (8.0 * (p1 - m1v) - (p2 - m2v)) / (12.0 * h);
    let d2 = (16.0 * (p1 + m1v) - (p2 + m2v) - 30.0) / (12.0 * h * h);
    Ok((-d1, d2))
}

fn adapt_checks(seed: u64) -> Result<Vec<Check>> {
    let s = Suite::Adapt;
    let p = HestonParams::benchmark();
    let map = p.time_map();
    let delta0 = 1e-6;
    let runs = 2000;
    let mut out = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_identity: f64 = 0.0;
    let mut leaves = [0usize; 2];
    for i in 0..runs {
        let mut stream = RngStream::new(seed, i);
        let y = sample_transition(&mut stream, &p, p.v0, map.tau_of_t(1.0))?;
        for (j, reservoir) in [true, false].into_iter().enumerate() {
            let cfg = AdaptConfig { reservoir, ..AdaptConfig::with_tolerance(delta0) };
            let mut inner = RngStream::new(seed ^ 0x5eed, i);
            let est = estimate_integral(&mut inner, &p, &cfg, 0.0, 1.0, p.v0, y)?;
            worst_excess = worst_excess.max(est.variance_sum - delta0);
            if reservoir {
                let gap = est.variance_sum + est.reservoir_residual - delta0;
                worst_identity = worst_identity.max(gap.abs());
            }
            leaves[j] += est.leaf_count;
        }
    }
    out.push(Check::at_most(s, "variance_sum_minus_tolerance_max", worst_excess, 0.0));
    out.push(Check::new(s, "reservoir_accounting_max_gap", worst_identity, 0.0, 1e-12 * delta0));
    out.push(Check::at_most(
        s,
        "mean_leaves_reservoir_minus_plain",
        (leaves[0] as f64 - leaves[1] as f64) / runs as f64,
        0.0,
    ));
    let n = 20_000;
    let estimates = (0..n)
        .map(|i| {
            let mut stream = RngStream::new(seed + 1, i);
            let y = sample_transition(&mut stream, &p, p.v0, map.tau_of_t(1.0))?;
            Ok(estimate_integral(&mut stream, &p, &AdaptConfig::with_tolerance(1e-5), 0.0, 1.0, p.v0, y)?.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let st = SampleStats::of(&estimates);
    out.push(Check::mean(s, "estimate_mean_vs_analytic", &st, mean_integrated_variance(&p, 1.0)));
    let fine = SampleStats::of(&fine_integral_samples(&p, 1.0, 8, n as usize, seed + 2, 0)?);
    let se = (st.mean_stderr().powi(2) + fine.mean_stderr().powi(2)).sqrt();
    out.push(Check::new(s, "estimate_mean_vs_fine_grid", st.mean, fine.mean, 3.0 * se));
    Ok(out)
}

fn heston_checks(seed: u64) -> Result<Vec<Check>> {
    let s = Suite::Heston;
    let p = HestonParams::benchmark();
    let mut out = Vec::new();
    let run = CallPricing::new(100.0, 1.0, 4000, Scheme::Exact(AdaptConfig::with_tolerance(1e-6)), seed);
    let r = price_european_call(&p, &run)?;
    out.push(Check::new(s, "exact_price_vs_reference", r.price, crate::bench::REFERENCE_PRICE, 3.0 * r.stderr));
    let mut quiet = p;
    quiet.sigma_v = 0.0;
    let mut stream = RngStream::new(seed, 0);
    let mut state = PathState::initial(&quiet);
    for _ in 0..1000 {
        state = step_predictor_corrector(&mut stream, &quiet, &state, 1e-3);
    }
    out.push(Check::new(
        s,
        "pc_noiseless_variance_path",
        state.v,
        p.theta + (p.v0 - p.theta) * (-p.kappa).exp(),
        1e-4,
    ));
    // Martingale check: E[S_T e^{−rT}] = S₀ under the exact scheme.
    let forward = CallPricing::new(0.0, 1.0, 4000, Scheme::Exact(AdaptConfig::with_tolerance(1e-5)), seed + 1);
    let f = price_european_call(&p, &forward)?;
    out.push(Check::new(s, "discounted_spot_martingale", f.price, p.s0, 3.0 * f.stderr));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for s in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("nope").is_err());
    }

    #[test]
    fn specfun_suite_passes() {
        let checks = run_validation(Suite::Specfun, 1).unwrap();
        assert!(all_passed(&checks), "{checks:#?}");
    }
}
