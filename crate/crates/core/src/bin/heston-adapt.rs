//! Command-line front end: pricing, bias and accuracy benchmarks, interval
//! histograms and oracle validation. All output is CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use heston_adapt::adapt::{AdaptConfig, RefineSpace};
use heston_adapt::bench::{
    self, csv_float, decade_ladder, halving_ladder, ExperimentSpec, HistogramLayout, Knob,
    SchemeKind,
};
use heston_adapt::besq::HestonParams;
use heston_adapt::heston::{price_european_call, CallPricing, Scheme};
use heston_adapt::validation::{all_passed, run_validation, write_checks_csv, Suite};

#[derive(Parser, Debug)]
#[command(name = "heston-adapt", version, about = "Heston simulation with adaptive integrated variance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price the call once per tolerance or substep count.
    Price(Common),
    /// Trial prices and mean bias against the reference price.
    BenchBias(Common),
    /// Accuracy (inverse relative bias) against wall-clock time.
    BenchAccuracy(Common),
    /// Leaf-count and unused-tolerance histograms by endpoint variance band.
    HistIntervals(Common),
    /// Run oracle checks; exits nonzero if any fails.
    Validate(ValidateArgs),
    /// Same as `validate --suite moments`.
    ValidateMoments(Common),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SuiteArg {
    Specfun,
    Samplers,
    Besq,
    Moments,
    Adapt,
    Heston,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SchemeArg {
    Adapt,
    AdaptPlain,
    PredictorCorrector,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SpaceArg {
    Time,
    Besq,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LadderArg {
    /// 1e-3, 1e-4, 1e-5, 1e-6
    Decade,
    /// 1e-4 halved six times, down to 1.5625e-6
    Halving,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
struct Common {
    /// File of `key = value` lines using the long flag names; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    s0: f64,
    #[arg(long, default_value_t = 100.0)]
    strike: f64,
    #[arg(long, default_value_t = 0.010201)]
    v0: f64,
    #[arg(long, default_value_t = 6.21)]
    kappa: f64,
    #[arg(long, default_value_t = 0.019)]
    theta: f64,
    #[arg(long, default_value_t = 0.61)]
    sigma_v: f64,
    #[arg(long, default_value_t = -0.7, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 0.0319)]
    rate: f64,
    #[arg(long, default_value_t = 1.0)]
    maturity: f64,
    /// Drift of the price; defaults to the rate.
    #[arg(long)]
    mu: Option<f64>,
    /// Comma-separated tolerances for the exact schemes.
    #[arg(long, value_delimiter = ',')]
    tolerance: Vec<f64>,
    /// Tolerance ladder used when no tolerance is given.
    #[arg(long, value_enum, default_value_t = LadderArg::Decade)]
    ladder: LadderArg,
    /// Comma-separated substep counts for the predictor-corrector scheme.
    #[arg(long, value_delimiter = ',')]
    substeps: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Adapt)]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = SpaceArg::Time)]
    refine_space: SpaceArg,
    #[arg(long, default_value_t = AdaptConfig::default().max_depth)]
    max_depth: usize,
    /// Overrides the scheme's reservoir setting for the exact schemes.
    #[arg(long)]
    reservoir: Option<bool>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn params(&self) -> HestonParams {
        HestonParams {
            mu: self.mu.unwrap_or(self.rate),
            kappa: self.kappa,
            theta: self.theta,
            sigma_v: self.sigma_v,
            rho: self.rho,
            s0: self.s0,
            v0: self.v0,
            rate: self.rate,
        }
    }

    fn scheme(&self) -> SchemeKind {
        match (self.scheme, self.reservoir) {
            (SchemeArg::PredictorCorrector, _) => SchemeKind::PredictorCorrector,
            (_, Some(true)) => SchemeKind::Adapt,
            (_, Some(false)) => SchemeKind::AdaptPlain,
            (SchemeArg::Adapt, None) => SchemeKind::Adapt,
            (SchemeArg::AdaptPlain, None) => SchemeKind::AdaptPlain,
        }
    }

    fn knobs(&self, single_default: bool) -> Vec<Knob> {
        if self.scheme() == SchemeKind::PredictorCorrector {
            let steps = if self.substeps.is_empty() {
                if single_default { vec![64] } else { vec![8, 16, 32, 64] }
            } else {
                self.substeps.clone()
            };
            return steps.into_iter().map(Knob::Substeps).collect();
        }
        let tols = if !self.tolerance.is_empty() {
            self.tolerance.clone()
        } else if single_default {
            vec![AdaptConfig::default().delta0]
        } else {
            match self.ladder {
                LadderArg::Decade => decade_ladder(1e-3, 1e-6),
                LadderArg::Halving => halving_ladder(1e-4, 1.5e-6),
            }
        };
        tols.into_iter().map(Knob::Tolerance).collect()
    }

    fn spec(&self, single_default: bool) -> ExperimentSpec {
        ExperimentSpec {
            params: self.params(),
            strike: self.strike,
            maturity: self.maturity,
            scheme: self.scheme(),
            knobs: self.knobs(single_default),
            n_paths: self.paths,
            n_trials: self.trials,
            seed: self.seed,
            refine_space: match self.refine_space {
                SpaceArg::Time => RefineSpace::Time,
                SpaceArg::Besq => RefineSpace::BesqTime,
            },
            max_depth: self.max_depth,
            reference_price: bench::REFERENCE_PRICE,
        }
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Price(c)
        | Command::BenchBias(c)
        | Command::BenchAccuracy(c)
        | Command::HistIntervals(c)
        | Command::ValidateMoments(c) => c,
        Command::Validate(v) => &v.common,
    }
}

/// Reads `key = value` lines. Blank lines and `#` comments are skipped.
fn read_config(path: &PathBuf) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), n + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key == "config" {
            bail!("{}:{}: nested config files are not supported", path.display(), n + 1);
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Parses the command line; if it names a config file, reparses with the
/// file's entries placed before the flags so the flags override them.
fn parse() -> anyhow::Result<Cli> {
    let args: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&args);
    let Some(path) = common(&cli.command).config.clone() else {
        return Ok(cli);
    };
    let mut merged = args[..2].to_vec();
    for (key, value) in read_config(&path)? {
        merged.push(format!("--{key}={value}"));
    }
    merged.extend_from_slice(&args[2..]);
    Ok(Cli::try_parse_from(&merged)?)
}

fn emit(out: &Option<PathBuf>, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> anyhow::Result<()> {
    match out {
        Some(path) => bench::write_file(path, |w| write(w))?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).context("writing to standard output")?;
        }
    }
    Ok(())
}

fn price(c: &Common) -> anyhow::Result<()> {
    let spec = c.spec(true);
    spec.validate()?;
    let mut rows = Vec::new();
    for &knob in &spec.knobs {
        let scheme = match knob {
            Knob::Tolerance(t) => Scheme::Exact(AdaptConfig {
                delta0: t,
                max_depth: spec.max_depth,
                refine_space: spec.refine_space,
                reservoir: spec.scheme == SchemeKind::Adapt,
            }),
            Knob::Substeps(n) => Scheme::PredictorCorrector { substeps: n },
        };
        let run = CallPricing::new(spec.strike, spec.maturity, spec.n_paths, scheme, spec.seed);
        rows.push((knob, price_european_call(&spec.params, &run)?));
    }
    emit(&c.out, |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["scheme", "knob", "paths", "price", "stderr", "mean_leaf_count", "elapsed_s"])?;
        for (knob, r) in &rows {
            w.write_record([
                spec.scheme.to_string(),
                knob.to_string(),
                spec.n_paths.to_string(),
                csv_float(r.price),
                csv_float(r.stderr),
                csv_float(r.mean_leaf_count),
                csv_float(r.elapsed.as_secs_f64()),
            ])?;
        }
        w.flush()
    })
}

fn validate(suite: Suite, c: &Common) -> anyhow::Result<bool> {
    let checks = run_validation(suite, c.seed)?;
    emit(&c.out, |w| write_checks_csv(w, &checks))?;
    Ok(all_passed(&checks))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Price(c) => price(c)?,
        Command::BenchBias(c) => {
            let report = bench::run_bias_experiment(&c.spec(false))?;
            emit(&c.out, |w| bench::write_bias_csv(w, &report))?;
        }
        Command::BenchAccuracy(c) => {
            let rows = bench::run_accuracy_time(&c.spec(false))?;
            emit(&c.out, |w| bench::write_accuracy_csv(w, &rows))?;
        }
        Command::HistIntervals(c) => {
            let hist = bench::run_interval_histogram(&c.spec(true), &HistogramLayout::default())?;
            emit(&c.out, |w| bench::write_histogram_csv(w, &hist))?;
        }
        Command::Validate(v) => {
            let suite = Suite::parse(&format!("{:?}", v.suite))?;
            return validate(suite, &v.common);
        }
        Command::ValidateMoments(c) => return validate(Suite::Moments, c),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match parse().and_then(run) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
