//! Reproducible random variates.
//!
//! Every path owns an [`RngStream`]: a ChaCha8 generator keyed by `seed` and
//! positioned on substream `stream_id`. Path `i` of a run uses `stream_id = i`,
//! so results do not depend on how paths are scheduled across threads.
//!
//! Gamma, Poisson and normal variates come from `rand_distr`. The Bessel law
//!
//! ```text
//! p_n = (z/2)^{2n+ν} / (n! Γ(n+ν+1) I_ν(z)),      n = 0, 1, ...
//! p_{n+1} / p_n = (z/2)² / ((n+1)(n+1+ν))
//! ```
//!
//! is sampled here: by inversion when the mode is small, and by rejection
//! from a log-concave hat when it is large.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::specfun::{log_i, BesselOrder};

/// Modes above this use rejection instead of sequential inversion.
const INVERSION_MAX_MODE: u64 = 32;

/// A seeded random substream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`, safe to take the log of.
    pub fn uniform_pos(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Gamma variate with the given shape and scale.
pub fn sample_gamma(stream: &mut RngStream, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(domain("gamma shape", shape));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(domain("gamma scale", scale));
    }
    let dist = Gamma::new(shape, scale).map_err(|_| domain("gamma shape", shape))?;
    Ok(dist.sample(stream))
}

/// Poisson variate; mean zero gives zero.
pub fn sample_poisson(stream: &mut RngStream, mean: f64) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(domain("poisson mean", mean));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|_| domain("poisson mean", mean))?;
    Ok(dist.sample(stream) as u64)
}

pub fn sample_normal(stream: &mut RngStream) -> f64 {
    StandardNormal.sample(stream)
}

/// Parameters of the Bessel distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselDistParams {
    nu: BesselOrder,
    z: f64,
}

impl BesselDistParams {
    pub fn new(nu: BesselOrder, z: f64) -> Result<Self> {
        if z >= 0.0 && z.is_finite() {
            Ok(Self { nu, z })
        } else {
            Err(domain("bessel distribution argument", z))
        }
    }

    pub fn nu(&self) -> BesselOrder {
        self.nu
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Most probable value.
    pub fn mode(&self) -> u64 {
        let nu = self.nu.get();
        let h2 = 0.25 * self.z * self.z;
        // saturating truncation is the floor here
        let mut m = (((self.z * self.z + nu * nu).sqrt() - nu) / 2.0) as u64;
        // p_{m+1}/p_m < 1 <= p_m/p_{m-1}; repair any rounding in the closed form
        while h2 >= (m as f64 + 1.0) * (m as f64 + 1.0 + nu) {
            m += 1;
        }
        while m > 0 && h2 < (m as f64) * (m as f64 + nu) {
            m -= 1;
        }
        m
    }

    /// `log p_n`.
    pub fn log_pmf(&self, n: u64) -> f64 {
        let nu = self.nu.get();
        if self.z == 0.0 {
            return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let n = n as f64;
        (2.0 * n + nu) * (0.5 * self.z).ln()
            - ln_gamma(n + 1.0)
            - ln_gamma(n + nu + 1.0)
            - log_i(nu, self.z)
    }
}

/// Bessel-distributed integer.
pub fn sample_bessel(stream: &mut RngStream, params: &BesselDistParams) -> u64 {
    if params.z == 0.0 {
        return 0;
    }
    let mode = params.mode();
    if mode <= INVERSION_MAX_MODE {
        bessel_by_inversion(stream, params)
    } else {
        bessel_by_rejection(stream, params, mode)
    }
}

/// Inversion on unnormalised weights `w_0 = 1`, `w_{n+1} = w_n p_{n+1}/p_n`.
/// The first pass sums them until the tail is below rounding.
fn bessel_by_inversion(stream: &mut RngStream, params: &BesselDistParams) -> u64 {
    let nu = params.nu.get();
    let h = 0.5 * params.z;
    let h2 = h * h;
    let mut total = 1.0;
    let mut w = 1.0;
    let mut last = 0u64;
    loop {
        last += 1;
        let n = last as f64;
        w *= h2 / (n * (n + nu));
        total += w;
        if n > h && w < 1e-17 * total {
            break;
        }
    }
    let mut u = stream.uniform() * total;
    let mut w = 1.0;
    for n in 0..last {
        u -= w;
        if u < 0.0 {
            return n;
        }
        let n1 = n as f64 + 1.0;
        w *= h2 / (n1 * (n1 + nu));
    }
    last
}

/// `ln(1 + x)`; a short atanh series when `|x|` is small.
fn ln_1p_small(x: f64) -> f64 {
    if x.abs() > 0.05 {
        return x.ln_1p();
    }
    let w = x / (2.0 + x);
    let w2 = w * w;
    let series = 1.0
        + w2 * (1.0 / 3.0
            + w2 * (1.0 / 5.0
                + w2 * (1.0 / 7.0 + w2 * (1.0 / 9.0 + w2 * (1.0 / 11.0 + w2 / 13.0)))));
    2.0 * w * series
}

/// Decides `ln u <= bound` using `1 − 1/u <= ln u <= u − 1` where possible.
fn log_uniform_below(u: f64, bound: f64) -> bool {
    if u - 1.0 <= bound {
        true
    } else if 1.0 - 1.0 / u > bound {
        false
    } else {
        u.ln() <= bound
    }
}

fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
}

/// Hat for `g(k) = log(p_{m+k}/p_m)`: zero on `(−a, b)` and, by concavity of
/// `g`, the tangent lines through the discrete slopes at `b` and `−a` outside.
#[derive(Debug, Clone, Copy)]
struct LogConcaveHat {
    mode: u64,
    nu: f64,
    log_h2: f64,
    /// `ln(m+1)`, `ln(m+ν+1)` and their Stirling tails.
    log_base: [f64; 2],
    tail_base: [f64; 2],
    a: i64,
    b: i64,
    g_left: f64,
    g_right: f64,
    slope_left: f64,
    slope_right: f64,
    mass_mid: f64,
    mass_right: f64,
    mass_total: f64,
}

impl LogConcaveHat {
    fn new(params: &BesselDistParams, mode: u64) -> Self {
        let nu = params.nu.get();
        let m = mode as f64;
        let width = (0.5 * params.z.sqrt()).round().max(2.0) as i64;
        let mut hat = Self {
            mode,
            nu,
            log_h2: 2.0 * (0.5 * params.z).ln(),
            log_base: [(m + 1.0).ln(), (m + nu + 1.0).ln()],
            tail_base: [stirling_tail(m + 1.0), stirling_tail(m + nu + 1.0)],
            a: width.min(mode as i64),
            b: width,
            g_left: 0.0,
            g_right: 0.0,
            slope_left: 0.0,
            slope_right: 0.0,
            mass_mid: 0.0,
            mass_right: 0.0,
            mass_total: 0.0,
        };
        let (a, b) = (hat.a as f64, hat.b as f64);
        let h2 = 0.25 * params.z * params.z;
        // geometric ratios of the two tails
        let ratio_right = h2 / ((m + b) * (m + b + nu));
        let ratio_left = (m - a + 1.0) * (m - a + 1.0 + nu) / h2;
        hat.g_right = hat.log_rel(hat.b);
        hat.g_left = hat.log_rel(-hat.a);
        hat.slope_right = ln_1p_small(ratio_right - 1.0);
        hat.slope_left = ln_1p_small(ratio_left - 1.0);
        hat.mass_mid = (hat.a + hat.b - 1) as f64;
        hat.mass_right = hat.g_right.exp() / (1.0 - ratio_right);
        let mass_left = hat.g_left.exp() / (1.0 - ratio_left);
        hat.mass_total = hat.mass_mid + hat.mass_right + mass_left;
        hat
    }

    fn log_rel(&self, k: i64) -> f64 {
        let m = self.mode as f64;
        let n = (self.mode as i64 + k) as f64;
        k as f64 * self.log_h2
            - self.gamma_step(n + 1.0, m + 1.0, 0)
            - self.gamma_step(n + self.nu + 1.0, m + self.nu + 1.0, 1)
    }

    /// `ln Γ(x) − ln Γ(y)` for `y` one of the two base points.
    fn gamma_step(&self, x: f64, y: f64, which: usize) -> f64 {
        if x < 15.0 || y < 15.0 {
            return ln_gamma(x) - ln_gamma(y);
        }
        let d = x - y;
        (x - 0.5) * ln_1p_small(d / y) + d * (self.log_base[which] - 1.0) + stirling_tail(x)
            - self.tail_base[which]
    }

    /// Lower bound on `g` inside the core: the chord from the mode to the
    /// breakpoint on the same side.
    fn chord(&self, k: i64) -> f64 {
        if k >= 0 {
            k as f64 / self.b as f64 * self.g_right
        } else {
            -k as f64 / self.a as f64 * self.g_left
        }
    }

    fn log_hat(&self, k: i64) -> f64 {
        if k >= self.b {
            self.g_right + (k - self.b) as f64 * self.slope_right
        } else if k <= -self.a {
            self.g_left + (-self.a - k) as f64 * self.slope_left
        } else {
            0.0
        }
    }
}

/// Rejection from [`LogConcaveHat`]; about 1.3 trials per draw.
fn bessel_by_rejection(stream: &mut RngStream, params: &BesselDistParams, mode: u64) -> u64 {
    let hat = LogConcaveHat::new(params, mode);
    loop {
        let u = stream.uniform() * hat.mass_total;
        let core = u < hat.mass_mid;
        let k = if core {
            1 - hat.a + u as i64
        } else {
            let e = stream.uniform_pos().ln();
            if u < hat.mass_mid + hat.mass_right {
                hat.b + (e / hat.slope_right) as i64
            } else {
                -hat.a - (e / hat.slope_left) as i64
            }
        };
        let n = mode as i64 + k;
        if n < 0 {
            continue;
        }
        let u = stream.uniform_pos();
        if core && log_uniform_below(u, hat.chord(k)) {
            return n as u64;
        }
        if log_uniform_below(u, hat.log_rel(k) - hat.log_hat(k)) {
            return n as u64;
        }
    }
}
