//! Gauss–Legendre rules and a fixed-mesh RK4 integrator.

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

/// 64-point Gauss–Legendre approximation of `∫_a^b f`.
pub fn integrate64(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = rule64();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Classical RK4 for `y' = f(u, y)` over the given mesh; returns the state at
/// the last mesh point. `observe` sees every accepted state.
pub fn rk4_mesh<const N: usize>(
    mesh: &[f64],
    y0: [f64; N],
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    mut observe: impl FnMut(f64, &[f64; N]),
) -> [f64; N] {
    let mut y = y0;
    observe(mesh[0], &y);
    for pair in mesh.windows(2) {
        let (u, h) = (pair[0], pair[1] - pair[0]);
        let k1 = f(u, &y);
        let k2 = f(u + 0.5 * h, &axpy(&y, 0.5 * h, &k1));
        let k3 = f(u + 0.5 * h, &axpy(&y, 0.5 * h, &k2));
        let k4 = f(u + h, &axpy(&y, h, &k3));
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        observe(pair[1], &y);
    }
    y
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

/// Mesh on `[0, 1]` uniform in `ln(b + c u)`, which resolves the
/// `(b + c u)^{-2}` weights evenly.
pub fn log_mesh(b: f64, c: f64, steps: usize) -> Vec<f64> {
    let span = (c / b).ln_1p();
    (0..=steps)
        .map(|i| {
            if i == steps {
                1.0
            } else {
                (span * i as f64 / steps as f64).exp_m1() * b / c
            }
        })
        .collect()
}
