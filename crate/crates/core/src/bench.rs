//! Experiment drivers for the command-line tool.
//!
//! Every driver returns plain rows; [`csv_float`] and the `write_*` functions
//! turn them into CSV. Trial `j` of an experiment draws its paths from
//! streams `j·n_paths ..`, and every knob value reuses the same streams, so
//! differences between knob values are not blurred by independent noise.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::adapt::{estimate_integral, AdaptConfig, RefineSpace};
use crate::besq::{sample_transition, HestonParams};
use crate::error::{Error, Result};
use crate::heston::{price_european_call, CallPricing, Scheme};
use crate::samplers::RngStream;

/// Reference price of the benchmark call.
pub const REFERENCE_PRICE: f64 = 6.8061;

/// Floats in CSV output: 17 significant digits.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Exact scheme, refinement with the tolerance reservoir.
    Adapt,
    /// Exact scheme, refinement without the reservoir.
    AdaptPlain,
    PredictorCorrector,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Adapt => "adapt",
            Self::AdaptPlain => "adapt_plain",
            Self::PredictorCorrector => "predictor_corrector",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "adapt" | "exact" => Ok(Self::Adapt),
            "adapt_plain" | "plain" => Ok(Self::AdaptPlain),
            "predictor_corrector" | "pc" => Ok(Self::PredictorCorrector),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }

    fn uses_tolerance(self) -> bool {
        self != Self::PredictorCorrector
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One setting of the accuracy knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Knob {
    Tolerance(f64),
    Substeps(usize),
}

impl Knob {
    pub fn value(self) -> f64 {
        match self {
            Self::Tolerance(t) => t,
            Self::Substeps(n) => n as f64,
        }
    }
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tolerance(t) => f.write_str(&csv_float(*t)),
            Self::Substeps(n) => write!(f, "{n}"),
        }
    }
}

/// Tolerances `start, start/10, ...` down to `end`.
pub fn decade_ladder(start: f64, end: f64) -> Vec<f64> {
    ladder(start, end, 10.0)
}

/// Tolerances `start, start/2, ...` down to `end`.
pub fn halving_ladder(start: f64, end: f64) -> Vec<f64> {
    ladder(start, end, 2.0)
}

fn ladder(start: f64, end: f64, ratio: f64) -> Vec<f64> {
    let steps = ((start / end).ln() / ratio.ln() + 1e-9).floor().max(0.0) as i32;
    (0..=steps).map(|k| start / ratio.powi(k)).collect()
}

/// A benchmark run: one scheme over a list of knob values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub params: HestonParams,
    pub strike: f64,
    pub maturity: f64,
    pub scheme: SchemeKind,
    pub knobs: Vec<Knob>,
    pub n_paths: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub refine_space: RefineSpace,
    pub max_depth: usize,
    pub reference_price: f64,
}

impl ExperimentSpec {
    /// Benchmark call with the given scheme and knobs, one trial of one path.
    pub fn new(scheme: SchemeKind, knobs: Vec<Knob>) -> Self {
        Self {
            params: HestonParams::benchmark(),
            strike: 100.0,
            maturity: 1.0,
            scheme,
            knobs,
            n_paths: 1,
            n_trials: 1,
            seed: 0,
            refine_space: RefineSpace::Time,
            max_depth: AdaptConfig::default().max_depth,
            reference_price: REFERENCE_PRICE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.knobs.is_empty() {
            return Err(Error::Config("no knob values given".into()));
        }
        for knob in &self.knobs {
            match (*knob, self.scheme.uses_tolerance()) {
                (Knob::Tolerance(t), true) if t > 0.0 && t.is_finite() => {}
                (Knob::Substeps(n), false) if n > 0 => {}
                (Knob::Tolerance(_), false) => {
                    return Err(Error::Config(format!("{} takes substeps, not tolerances", self.scheme)))
                }
                (Knob::Substeps(_), true) => {
                    return Err(Error::Config(format!("{} takes tolerances, not substeps", self.scheme)))
                }
                (k, _) => return Err(Error::Config(format!("invalid knob {k}"))),
            }
        }
        if self.n_paths == 0 || self.n_trials == 0 {
            return Err(Error::Config("paths and trials must be positive".into()));
        }
        Ok(())
    }

    fn adapt_config(&self, tolerance: f64) -> AdaptConfig {
        AdaptConfig {
            delta0: tolerance,
            max_depth: self.max_depth,
            refine_space: self.refine_space,
            reservoir: self.scheme == SchemeKind::Adapt,
        }
    }

    fn pricing(&self, knob: Knob, trial: usize) -> CallPricing {
        let scheme = match knob {
            Knob::Tolerance(t) => Scheme::Exact(self.adapt_config(t)),
            Knob::Substeps(n) => Scheme::PredictorCorrector { substeps: n },
        };
        let mut run = CallPricing::new(self.strike, self.maturity, self.n_paths, scheme, self.seed);
        run.first_stream = (trial * self.n_paths) as u64;
        run
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub scheme: SchemeKind,
    pub knob: Knob,
    pub trial: usize,
    pub price: f64,
    pub stderr: f64,
    pub elapsed: Duration,
}

/// Mean over trials at one knob value.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSummary {
    pub scheme: SchemeKind,
    pub knob: Knob,
    pub n_trials: usize,
    pub mean_price: f64,
    pub bias: f64,
    /// Standard error of `bias`: spread of trial prices over `sqrt(n_trials)`,
    /// or the single trial's own error when there is one trial.
    pub bias_stderr: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub trials: Vec<TrialRow>,
    pub summaries: Vec<BiasSummary>,
}

/// Prices `n_trials` independent batches at every knob value.
pub fn run_bias_experiment(spec: &ExperimentSpec) -> Result<BiasReport> {
    spec.validate()?;
    let mut trials = Vec::new();
    let mut summaries = Vec::new();
    for &knob in &spec.knobs {
        let start = Instant::now();
        let mut rows = Vec::with_capacity(spec.n_trials);
        for trial in 0..spec.n_trials {
            let result = price_european_call(&spec.params, &spec.pricing(knob, trial))?;
            rows.push(TrialRow {
                scheme: spec.scheme,
                knob,
                trial,
                price: result.price,
                stderr: result.stderr,
                elapsed: result.elapsed,
            });
        }
        summaries.push(summarise(spec, knob, &rows, start.elapsed()));
        trials.extend(rows);
    }
    Ok(BiasReport { trials, summaries })
}

fn summarise(spec: &ExperimentSpec, knob: Knob, rows: &[TrialRow], elapsed: Duration) -> BiasSummary {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.price).sum::<f64>() / n;
    let bias_stderr = if rows.len() > 1 {
        let var = rows.iter().map(|r| (r.price - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        rows[0].stderr
    };
    BiasSummary {
        scheme: spec.scheme,
        knob,
        n_trials: rows.len(),
        mean_price: mean,
        bias: mean - spec.reference_price,
        bias_stderr,
        elapsed,
    }
}

pub fn write_bias_csv<W: Write>(out: W, report: &BiasReport) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "scheme", "knob", "trial", "price", "stderr", "bias", "bias_stderr"])?;
    for r in &report.trials {
        w.write_record([
            "trial".to_string(),
            r.scheme.to_string(),
            r.knob.to_string(),
            r.trial.to_string(),
            csv_float(r.price),
            csv_float(r.stderr),
            String::new(),
            String::new(),
        ])?;
    }
    for s in &report.summaries {
        w.write_record([
            "summary".to_string(),
            s.scheme.to_string(),
            s.knob.to_string(),
            String::new(),
            csv_float(s.mean_price),
            String::new(),
            csv_float(s.bias),
            csv_float(s.bias_stderr),
        ])?;
    }
    w.flush()
}

/// Accuracy against cost at one knob value.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub scheme: SchemeKind,
    pub knob: Knob,
    /// Wall-clock seconds per trial.
    pub mean_time_s: f64,
    pub bias: f64,
    pub bias_stderr: f64,
    /// `1/|relative bias|`, or `1/(relative stderr)` when noise-limited.
    pub accuracy: f64,
    /// The bias is smaller than its standard error.
    pub noise_limited: bool,
    /// First knob value whose bias is no longer resolvable; refining past it
    /// buys no visible accuracy.
    pub knee: bool,
}

pub fn run_accuracy_time(spec: &ExperimentSpec) -> Result<Vec<AccuracyRow>> {
    let report = run_bias_experiment(spec)?;
    let mut rows: Vec<AccuracyRow> = report
        .summaries
        .iter()
        .map(|s| {
            let noise_limited = s.bias.abs() < s.bias_stderr;
            let resolved = if noise_limited { s.bias_stderr } else { s.bias.abs() };
            AccuracyRow {
                scheme: s.scheme,
                knob: s.knob,
                mean_time_s: s.elapsed.as_secs_f64() / s.n_trials as f64,
                bias: s.bias,
                bias_stderr: s.bias_stderr,
                accuracy: spec.reference_price / resolved,
                noise_limited,
                knee: false,
            }
        })
        .collect();
    if let Some(row) = rows.iter_mut().find(|r| r.noise_limited) {
        row.knee = true;
    }
    Ok(rows)
}

/// Least-squares slope of `ln(accuracy)` against time over the first
/// `points` rows.
pub fn log_accuracy_slope(rows: &[AccuracyRow], points: usize) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .take(points)
        .map(|r| (r.mean_time_s, r.accuracy.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn write_accuracy_csv<W: Write>(out: W, rows: &[AccuracyRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme",
        "knob",
        "mean_time_s",
        "bias",
        "bias_stderr",
        "accuracy",
        "noise_limited",
        "knee",
    ])?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            r.knob.to_string(),
            csv_float(r.mean_time_s),
            csv_float(r.bias),
            csv_float(r.bias_stderr),
            csv_float(r.accuracy),
            r.noise_limited.to_string(),
            r.knee.to_string(),
        ])?;
    }
    w.flush()
}

/// Layout of the interval-count and unused-tolerance tables.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramLayout {
    /// Right edges of the endpoint-variance bands; larger values go to the
    /// last band.
    pub band_edges: Vec<f64>,
    pub bin_width: usize,
    /// Leaf counts past the last bin go to the last bin.
    pub n_bins: usize,
    /// Bins of the unused fraction of the tolerance on `[0, 1]`.
    pub unused_bins: usize,
}

impl Default for HistogramLayout {
    fn default() -> Self {
        Self {
            band_edges: vec![1e-6, 1e-4, 0.01, 0.04, 0.09, 0.16, 0.25, 0.36, 0.49, 0.64, 0.81, 1.0],
            bin_width: 8,
            n_bins: 11,
            unused_bins: 10,
        }
    }
}

impl HistogramLayout {
    fn band(&self, v: f64) -> usize {
        self.band_edges
            .iter()
            .position(|&e| v <= e)
            .unwrap_or(self.band_edges.len() - 1)
    }

    fn bin(&self, leaves: usize) -> usize {
        (leaves.max(1).div_ceil(self.bin_width) - 1).min(self.n_bins - 1)
    }

    fn unused_bin(&self, fraction: f64) -> usize {
        ((fraction * self.unused_bins as f64) as usize).min(self.unused_bins - 1)
    }
}

/// One simulated step over `[0, T]` from `V₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSample {
    pub v_end: f64,
    pub band: usize,
    pub leaf_count: usize,
    /// Share of the tolerance left unused, `1 − Σvar/δ₀`.
    pub unused_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalHistogram {
    pub layout: HistogramLayout,
    pub samples: Vec<IntervalSample>,
    /// `[band][bin]` counts of leaf counts.
    pub interval_counts: Vec<Vec<u64>>,
    /// `[band][bin]` counts of the unused fraction.
    pub unused_counts: Vec<Vec<u64>>,
}

impl IntervalHistogram {
    /// Per band: sample count, mean leaf count and its standard error.
    pub fn band_leaf_means(&self) -> Vec<(usize, f64, f64)> {
        (0..self.layout.band_edges.len())
            .map(|b| {
                let xs: Vec<f64> = self
                    .samples
                    .iter()
                    .filter(|s| s.band == b)
                    .map(|s| s.leaf_count as f64)
                    .collect();
                let n = xs.len();
                if n < 2 {
                    return (n, f64::NAN, f64::NAN);
                }
                let mean = xs.iter().sum::<f64>() / n as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (n, mean, (var / n as f64).sqrt())
            })
            .collect()
    }

    /// Sorted unused fractions in a band.
    pub fn unused_in_band(&self, band: usize) -> Vec<f64> {
        let mut xs: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.band == band)
            .map(|s| s.unused_fraction)
            .collect();
        xs.sort_by(f64::total_cmp);
        xs
    }
}

/// Empirical quantile of sorted data (nearest rank).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Simulates `n_paths` steps over `[0, T]` with the first tolerance of the
/// spec and tabulates leaf counts and unused tolerance by endpoint band.
pub fn run_interval_histogram(
    spec: &ExperimentSpec,
    layout: &HistogramLayout,
) -> Result<IntervalHistogram> {
    spec.validate()?;
    let tolerance = match spec.knobs[0] {
        Knob::Tolerance(t) => t,
        Knob::Substeps(_) => {
            return Err(Error::Config("interval histograms need the exact scheme".into()))
        }
    };
    let cfg = spec.adapt_config(tolerance);
    let params = &spec.params;
    let map = params.time_map();
    let t_end = spec.maturity;
    let samples: Vec<IntervalSample> = (0..spec.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut stream = RngStream::new(spec.seed, i as u64);
            let x_end = sample_transition(&mut stream, params, params.v0, map.tau_of_t(t_end))?;
            let est = estimate_integral(&mut stream, params, &cfg, 0.0, t_end, params.v0, x_end)?;
            let v_end = map.v_of_x(t_end, x_end);
            Ok(IntervalSample {
                v_end,
                band: layout.band(v_end),
                leaf_count: est.leaf_count,
                unused_fraction: (1.0 - est.variance_sum / tolerance).clamp(0.0, 1.0),
            })
        })
        .collect::<Result<_>>()?;
    let n_bands = layout.band_edges.len();
    let mut interval_counts = vec![vec![0; layout.n_bins]; n_bands];
    let mut unused_counts = vec![vec![0; layout.unused_bins]; n_bands];
    for s in &samples {
        interval_counts[s.band][layout.bin(s.leaf_count)] += 1;
        unused_counts[s.band][layout.unused_bin(s.unused_fraction)] += 1;
    }
    Ok(IntervalHistogram {
        layout: layout.clone(),
        samples,
        interval_counts,
        unused_counts,
    })
}

/// Both tables in long form: `table,band,bin_right,count`.
pub fn write_histogram_csv<W: Write>(out: W, hist: &IntervalHistogram) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["table", "band", "bin_right", "count"])?;
    let layout = &hist.layout;
    for (b, edge) in layout.band_edges.iter().enumerate() {
        for (k, count) in hist.interval_counts[b].iter().enumerate() {
            w.write_record([
                "intervals".to_string(),
                csv_float(*edge),
                ((k + 1) * layout.bin_width).to_string(),
                count.to_string(),
            ])?;
        }
    }
    for (b, edge) in layout.band_edges.iter().enumerate() {
        for (k, count) in hist.unused_counts[b].iter().enumerate() {
            w.write_record([
                "unused_tolerance".to_string(),
                csv_float(*edge),
                csv_float((k + 1) as f64 / layout.unused_bins as f64),
                count.to_string(),
            ])?;
        }
    }
    w.flush()
}

/// Writes through `write` into the file at `path`, reporting failures with
/// the path.
pub fn write_file<F>(path: &std::path::Path, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut buf = std::io::BufWriter::new(file);
    write(&mut buf).map_err(io)?;
    buf.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladders() {
        assert_eq!(decade_ladder(1e-3, 1e-6).len(), 4);
        let h = halving_ladder(1e-4, 1e-6);
        assert_eq!(h.len(), 7);
        assert!((h[6] - 1.5625e-6).abs() < 1e-18);
    }

    #[test]
    fn knob_must_match_scheme() {
        let spec = ExperimentSpec::new(SchemeKind::Adapt, vec![Knob::Substeps(8)]);
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec::new(SchemeKind::PredictorCorrector, vec![Knob::Tolerance(1e-3)]);
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec::new(SchemeKind::AdaptPlain, vec![Knob::Tolerance(-1.0)]);
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec::new(SchemeKind::PredictorCorrector, vec![Knob::Substeps(8)]);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn layout_matches_table() {
        let l = HistogramLayout::default();
        assert_eq!(l.band_edges.len(), 12);
        assert_eq!(l.n_bins, 11);
        assert_eq!(l.band_edges[2], 0.01);
        assert_eq!(l.band(1e-6), 0);
        assert_eq!(l.band(5e-6), 1);
        assert_eq!(l.band(0.05), 4);
        assert_eq!(l.band(7.0), 11);
        assert_eq!(l.bin(1), 0);
        assert_eq!(l.bin(8), 0);
        assert_eq!(l.bin(9), 1);
        assert_eq!(l.bin(88), 10);
        assert_eq!(l.bin(500), 10);
        assert_eq!(l.unused_bin(1.0), 9);
        assert_eq!(l.unused_bin(0.0), 0);
    }

    #[test]
    fn nearest_rank_quantile() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }

    #[test]
    fn csv_floats_have_17_digits() {
        assert_eq!(csv_float(0.375), "3.7500000000000000e-1");
        assert_eq!(csv_float(-1e-300), "-1.0000000000000000e-300");
    }
}
