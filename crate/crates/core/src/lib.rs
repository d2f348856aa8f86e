//! Heston stochastic-volatility simulation with exact squared-Bessel
//! variance transitions and an adaptive estimate of the integrated variance.
//!
//! The variance path is simulated exactly on a coarse grid of reset dates.
//! Between dates, the integral of the variance is estimated by bisecting the
//! step and drawing bridge points exactly until each piece's conditional
//! variance fits a tolerance budget; unused budget is carried forward.
//!
//! | module | contents |
//! |---|---|
//! | [`specfun`] | Bessel function ratio and `log I_ν` |
//! | [`samplers`] | random streams; gamma, Poisson, normal, Bessel variates |
//! | [`besq`] | time change, transitions and bridge points |
//! | [`moments`] | conditional moments and Laplace transform of the bridge integral |
//! | [`adapt`] | the adaptive integral estimator |
//! | [`heston`] | path steps and European call pricing |
//! | [`bench`] | experiment drivers and CSV output |
//! | [`validation`] | oracle checks grouped by module |
//! | [`oracle`] | independent reference computations for testing |

// NaN must fail range checks, so `!(x > 0.0)` is intended throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod bench;
pub mod besq;
pub mod error;
pub mod heston;
pub mod moments;
pub mod oracle;
pub mod quadrature;
pub mod samplers;
pub mod specfun;
pub mod validation;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/time-change.md")]
    mod time_change {}
    #[doc = include_str!("../../../book/src/bessel.md")]
    mod bessel {}
    #[doc = include_str!("../../../book/src/bridge-moments.md")]
    mod bridge_moments {}
    #[doc = include_str!("../../../book/src/adaptive.md")]
    mod adaptive {}
    #[doc = include_str!("../../../book/src/pricing.md")]
    mod pricing {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
}
