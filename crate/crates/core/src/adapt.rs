//! Adaptive estimate of `∫V dt` over one step.
//!
//! The step is bisected until each piece's conditional variance of the
//! integral, given its endpoint values, fits its tolerance. Each accepted
//! piece contributes its conditional mean. Bisection points are sampled
//! exactly from the bridge, so the estimator is unbiased for every tolerance.
//!
//! Tolerance is split in half on every bisection. With the reservoir enabled,
//! whatever an accepted piece does not use is carried to the next piece:
//!
//! ```text
//! Δ = var(piece) − (δ + δ_R)
//! Δ < 0  →  accept, δ_R ← −Δ
//! Δ ≥ 0  →  bisect, children get δ/2 each; left child first
//! ```
//!
//! so `Σ var(accepted) + δ_R = δ₀` throughout.

use crate::besq::{bridge_draw_lengths, BridgeSegment, HestonParams};
use crate::error::{Error, Result};
use crate::moments::{coefficients_unchecked, moments_from};
use crate::samplers::RngStream;

/// Where bisection midpoints are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineSpace {
    /// Midpoint in calendar time.
    #[default]
    Time,
    /// Midpoint in BESQ time.
    BesqTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptConfig {
    /// Total tolerance on the conditional variance of the step integral.
    pub delta0: f64,
    pub max_depth: usize,
    pub refine_space: RefineSpace,
    /// Carry unused tolerance between pieces.
    pub reservoir: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            delta0: 1e-6,
            max_depth: 40,
            refine_space: RefineSpace::Time,
            reservoir: true,
        }
    }
}

impl AdaptConfig {
    pub fn with_tolerance(delta0: f64) -> Self {
        Self {
            delta0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.delta0)));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one adaptive integration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegralEstimate {
    pub value: f64,
    pub leaf_count: usize,
    pub variance_sum: f64,
    pub reservoir_residual: f64,
    /// Bisection points `(t, x)`, sorted by `t`.
    pub interior_points: Vec<(f64, f64)>,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    t_l: f64,
    t_r: f64,
    tau_l: f64,
    dtau: f64,
    x_l: f64,
    x_r: f64,
    delta: f64,
    depth: usize,
}

/// Adaptive estimate of `∫_{t_l}^{t_r} V dt` given `X(τ(t_l)) = x_l` and
/// `X(τ(t_r)) = x_r`.
pub fn estimate_integral(
    stream: &mut RngStream,
    params: &HestonParams,
    cfg: &AdaptConfig,
    t_l: f64,
    t_r: f64,
    x_l: f64,
    x_r: f64,
) -> Result<IntegralEstimate> {
    cfg.validate()?;
    if !(t_l >= 0.0 && t_l < t_r && t_r.is_finite()) {
        return Err(Error::Config(format!("empty step [{t_l}, {t_r}]")));
    }
    if !(x_l >= 0.0 && x_r >= 0.0 && x_l.is_finite() && x_r.is_finite()) {
        return Err(crate::error::domain("endpoint", x_l.min(x_r)));
    }
    let map = params.time_map();
    let nu = params.order();
    let mut out = IntegralEstimate::default();
    let mut reservoir = 0.0;
    let mut stack = vec![Piece {
        t_l,
        t_r,
        tau_l: map.tau_of_t(t_l),
        dtau: map.tau_increment(t_l, t_r - t_l),
        x_l,
        x_r,
        delta: cfg.delta0,
        depth: 0,
    }];
    while let Some(piece) = stack.pop() {
        let coef = coefficients_unchecked(params, piece.tau_l, piece.dtau);
        let mom = moments_from(&coef, nu, piece.x_l, piece.x_r, piece.dtau)?;
        let excess = mom.var - (piece.delta + reservoir);
        if excess < 0.0 {
            out.value += mom.m1;
            out.variance_sum += mom.var;
            out.leaf_count += 1;
            out.depth = out.depth.max(piece.depth);
            if cfg.reservoir {
                reservoir = -excess;
            }
            continue;
        }
        if piece.depth >= cfg.max_depth {
            out.reservoir_residual = reservoir;
            sort_points(&mut out.interior_points);
            return Err(Error::DepthExceeded {
                max_depth: cfg.max_depth,
                t_l: piece.t_l,
                t_r: piece.t_r,
                partial: Box::new(out),
            });
        }
        let (t_m, tau_m, d_left, d_right) = match cfg.refine_space {
            RefineSpace::Time => {
                let t_m = 0.5 * (piece.t_l + piece.t_r);
                let d_left = map.tau_increment(piece.t_l, t_m - piece.t_l);
                let d_right = map.tau_increment(t_m, piece.t_r - t_m);
                (t_m, map.tau_of_t(t_m), d_left, d_right)
            }
            RefineSpace::BesqTime => {
                let half = 0.5 * piece.dtau;
                let tau_m = piece.tau_l + half;
                (map.t_of_tau(tau_m), tau_m, half, half)
            }
        };
        let x_m = bridge_draw_lengths(stream, nu, piece.x_l, piece.x_r, d_left, d_right)?;
        out.interior_points.push((t_m, x_m));
        let child = |t_l, t_r, tau_l, dtau, x_l, x_r| Piece {
            t_l,
            t_r,
            tau_l,
            dtau,
            x_l,
            x_r,
            delta: 0.5 * piece.delta,
            depth: piece.depth + 1,
        };
        stack.push(child(t_m, piece.t_r, tau_m, d_right, x_m, piece.x_r));
        stack.push(child(piece.t_l, t_m, piece.tau_l, d_left, piece.x_l, x_m));
    }
    out.reservoir_residual = reservoir;
    sort_points(&mut out.interior_points);
    Ok(out)
}

fn sort_points(points: &mut [(f64, f64)]) {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
}

/// Conditional variance of the integrated variance over the segment.
pub fn segment_variance(params: &HestonParams, seg: &BridgeSegment) -> Result<f64> {
    let m = crate::moments::bridge_moments(params, seg.x_l, seg.x_r, seg.tau_l, seg.length())?;
    Ok(m.var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::bridge_moments;

    #[test]
    fn huge_tolerance_accepts_root() {
        let p = HestonParams::benchmark();
        let cfg = AdaptConfig::with_tolerance(1e6);
        let mut s = RngStream::new(1, 0);
        let est = estimate_integral(&mut s, &p, &cfg, 0.0, 1.0, 0.010201, 5.0).unwrap();
        let map = p.time_map();
        let m = bridge_moments(&p, 0.010201, 5.0, 0.0, map.tau_of_t(1.0)).unwrap();
        assert_eq!(est.leaf_count, 1);
        assert!(est.interior_points.is_empty());
        assert!((est.value / m.m1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leaf_count_matches_points() {
        let p = HestonParams::benchmark();
        let cfg = AdaptConfig::with_tolerance(1e-7);
        let mut s = RngStream::new(3, 0);
        let est = estimate_integral(&mut s, &p, &cfg, 0.0, 1.0, 0.010201, 3.0).unwrap();
        assert_eq!(est.leaf_count, est.interior_points.len() + 1);
        assert!(est.variance_sum <= cfg.delta0);
        assert!((est.variance_sum + est.reservoir_residual - cfg.delta0).abs() < 1e-12 * cfg.delta0);
        assert!(est.interior_points.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn depth_guard_reports_partial_state() {
        let p = HestonParams::benchmark();
        let cfg = AdaptConfig {
            delta0: 1e-12,
            max_depth: 2,
            ..AdaptConfig::default()
        };
        let mut s = RngStream::new(3, 0);
        match estimate_integral(&mut s, &p, &cfg, 0.0, 1.0, 0.010201, 3.0) {
            Err(Error::DepthExceeded { max_depth, partial, .. }) => {
                assert_eq!(max_depth, 2);
                assert!(partial.interior_points.len() >= 2);
            }
            other => panic!("expected depth error, got {other:?}"),
        }
    }

    #[test]
    fn zero_endpoints_positive_variance() {
        let p = HestonParams::benchmark();
        let seg = BridgeSegment::new(0.5, 0.9, 0.0, 0.0, 0.0).unwrap();
        assert!(segment_variance(&p, &seg).unwrap() > 0.0);
    }
}
