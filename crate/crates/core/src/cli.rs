//! The `rot-infer` command line: `dist`, `ci`, `clt` and `selftest`.
//!
//! Result documents are JSON with a fixed key order and floats written with
//! 17 significant digits, so a run with a fixed seed is byte-reproducible
//! (apart from `wall_time_ms`, which `--no-timing` nulls out). Diagnostics go
//! to stderr.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 bad input or parameters,
//! 3 numerical failure such as Sinkhorn non-convergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::entropic::{eot_estimate, sinkhorn, EotTarget, SinkhornConfig, WeightedCloud};
use crate::error::{Error, Result};
use crate::inference::{
    bootstrap, clt_experiment, default_subsample_size, normal_ci, normal_quantile, subsample, AvgSliced,
    BootstrapResult, CltConfig, CltReport, CoverageMethod, DiscretePopulation, EntropicStat, GaussianPopulation,
    MaxSliced, PlainWp, PointMass, Population, ReferenceValue, ResampleConfig, SlicedW1Reference, SmoothStat,
    Statistic, UniformBox,
};
use crate::measures::{sample_sphere, Direction, Discrete1D, SampleMatrix, SeedPolicy};
use crate::ot1d::{dual_potentials_1d, wp_order_stats, wp_quantile};
use crate::ot_nd::exact_wp;
use crate::sliced::{
    avg_sliced_wp, max_sliced_wp, pairwise_sum, GaussianReference, RefineConfig, SlicedEstimate, TGridConfig,
    DEFAULT_DIRECTIONS,
};
use crate::smooth::{smooth_wp, truncate, truncation_bound, Ball1D, MollifierKernel, SmoothConfig};

#[derive(Debug, Parser)]
#[command(name = "rot-infer", version, about = "Regularized Wasserstein distances with inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "ROT_INFER_THREADS")]
    pub threads: Option<usize>,

    /// One line per stage on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance between two samples.
    Dist(RunArgs),
    /// Distance with a confidence interval.
    Ci(CiArgs),
    /// Monte Carlo CLT experiment with plots.
    Clt(CltArgs),
    /// Oracle-equivalence checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    SlicedAvg,
    SlicedMax,
    Smooth,
    Entropic,
    Plain,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::SlicedAvg => "sliced-avg",
            Kind::SlicedMax => "sliced-max",
            Kind::Smooth => "smooth",
            Kind::Entropic => "entropic",
            Kind::Plain => "plain",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Kernel bandwidth (smooth only, required there).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Entropic regularization (entropic only, default 1).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Number of Monte Carlo directions (sliced kinds).
    #[arg(long, default_value_t = DEFAULT_DIRECTIONS)]
    pub k: usize,
    /// Noise repetitions (smooth).
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report `wall_time_ms` as null.
    #[arg(long)]
    pub no_timing: bool,
    pub x: PathBuf,
    pub y: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiMethod {
    Bootstrap,
    Normal,
    Subsample,
}

impl CiMethod {
    fn as_str(self) -> &'static str {
        match self {
            CiMethod::Bootstrap => "bootstrap",
            CiMethod::Normal => "normal",
            CiMethod::Subsample => "subsample",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Resampling draws.
    #[arg(long, default_value_t = 500)]
    pub b: usize,
    /// Subsample size (default ⌈n^{2/3}⌉).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Interval type; sliced-max defaults to subsampling, the rest to bootstrap.
    #[arg(long, value_enum)]
    pub method: Option<CiMethod>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Entropic cost, 5-atom μ against a fixed 5-atom ν in the plane.
    EotDiscrete,
    /// Average-sliced W₂², uniform squares, two-sample, self-centered.
    SlicedUniform,
    /// Average-sliced W₁ from N(0, I) to N((1,0), I), one-sample.
    SlicedW1Gaussian,
    /// Plain W₂² between point masses (degenerate).
    PointMass,
}

#[derive(Debug, Clone, Args)]
pub struct CltArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Replications.
    #[arg(long, default_value_t = 300)]
    pub reps: usize,
    /// Bootstrap draws per replication for coverage; 0 uses normal intervals.
    #[arg(long, default_value_t = 0)]
    pub b: usize,
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the replicate CSV and the SVG plots.
    #[arg(long, default_value = "clt-out")]
    pub out_dir: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Validated parameters of a `dist` or `ci` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: Kind,
    pub p: f64,
    pub sigma: Option<f64>,
    pub eps: Option<f64>,
    pub k: usize,
    pub reps: usize,
    pub seed: SeedPolicy,
    pub seed_value: u64,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self> {
        if !(a.p >= 1.0) || !a.p.is_finite() {
            return Err(Error::param("p", format!("order must be ≥ 1, got {}", a.p)));
        }
        match (a.kind, a.sigma) {
            (Kind::Smooth, None) => return Err(Error::param("sigma", "required for --kind smooth")),
            (Kind::Smooth, Some(s)) if !(s > 0.0) || !s.is_finite() => {
                return Err(Error::param("sigma", format!("must be > 0, got {s}")))
            }
            (k, Some(_)) if k != Kind::Smooth => {
                return Err(Error::param("sigma", "only meaningful for --kind smooth"))
            }
            _ => {}
        }
        let eps = match (a.kind, a.eps) {
            (Kind::Entropic, e) => {
                let e = e.unwrap_or(1.0);
                if !(e > 0.0) || !e.is_finite() {
                    return Err(Error::param("eps", format!("must be > 0, got {e}")));
                }
                Some(e)
            }
            (_, Some(_)) => return Err(Error::param("eps", "only meaningful for --kind entropic")),
            (_, None) => None,
        };
        if a.k == 0 {
            return Err(Error::param("k", "need at least one direction"));
        }
        if a.reps == 0 {
            return Err(Error::param("reps", "need at least one repetition"));
        }
        Ok(Self {
            kind: a.kind,
            p: a.p,
            sigma: a.sigma,
            eps,
            k: a.k,
            reps: a.reps,
            seed: SeedPolicy::new(a.seed),
            seed_value: a.seed,
        })
    }

    fn directions(&self, d: usize) -> Result<Vec<Direction>> {
        sample_sphere(d, self.k, &self.seed.child(1))
    }

    fn smooth_parts(&self, d: usize) -> Result<(MollifierKernel, SmoothConfig)> {
        let kernel = MollifierKernel::new(self.sigma.expect("validated"), d)?;
        let config = SmoothConfig {
            p: self.p,
            reps: self.reps,
            seed: self.seed.child(2),
            coupling: Default::default(),
        };
        Ok((kernel, config))
    }

    fn sinkhorn_config(&self) -> SinkhornConfig {
        SinkhornConfig::with_eps(self.eps.unwrap_or(1.0))
    }

    /// The run's distance as a resamplable statistic.
    pub fn statistic(&self, d: usize) -> Result<Box<dyn Statistic>> {
        Ok(match self.kind {
            Kind::Plain => Box::new(PlainWp { p: self.p }),
            Kind::SlicedAvg => Box::new(AvgSliced::new(self.p, self.directions(d)?)),
            Kind::SlicedMax => Box::new(MaxSliced {
                p: self.p,
                directions: self.directions(d)?,
                refine: RefineConfig::default(),
            }),
            Kind::Smooth => {
                let (kernel, config) = self.smooth_parts(d)?;
                Box::new(SmoothStat { kernel, config })
            }
            Kind::Entropic => Box::new(EntropicStat {
                config: self.sinkhorn_config(),
                target: None,
            }),
        })
    }

    fn parameters(&self) -> Parameters {
        let uses_p = !matches!(self.kind, Kind::Entropic);
        let sliced = matches!(self.kind, Kind::SlicedAvg | Kind::SlicedMax);
        Parameters {
            p: uses_p.then_some(F17(self.p)),
            sigma: self.sigma.map(F17),
            eps: self.eps.map(F17),
            k: sliced.then_some(self.k),
            reps: (self.kind == Kind::Smooth).then_some(self.reps),
        }
    }
}

/// A float serialized with 17 significant digits; non-finite values become null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

/// `v` in scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn f17s(v: &[f64]) -> Vec<F17> {
    v.iter().copied().map(F17).collect()
}

#[derive(Debug, Serialize)]
struct Parameters {
    p: Option<F17>,
    sigma: Option<F17>,
    eps: Option<F17>,
    k: Option<usize>,
    reps: Option<usize>,
}

#[derive(Debug, Serialize)]
struct DirectionSummary {
    count: usize,
    min: F17,
    max: F17,
    mean: F17,
    argmax: Vec<F17>,
}

impl DirectionSummary {
    fn new(est: &SlicedEstimate) -> Self {
        let vals: Vec<f64> = est.values().collect();
        let (imax, max) = vals
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
        Self {
            count: vals.len(),
            min: F17(vals.iter().copied().fold(f64::INFINITY, f64::min)),
            max: F17(max),
            mean: F17(pairwise_sum(&vals) / vals.len() as f64),
            argmax: f17s(est.per_direction[imax].0.components()),
        }
    }
}

#[derive(Debug, Serialize)]
struct SmoothSummary {
    rep_values: Vec<F17>,
    rep_sd: F17,
    mc_error: F17,
}

#[derive(Debug, Serialize)]
struct EntropicSummary {
    iterations: usize,
    marginal_err: F17,
    v1: F17,
    v2: Option<F17>,
}

#[derive(Debug, Serialize)]
struct DistDocument {
    kind: &'static str,
    value: F17,
    value_pth_root: Option<F17>,
    per_direction: Option<DirectionSummary>,
    smooth: Option<SmoothSummary>,
    entropic: Option<EntropicSummary>,
    n_x: usize,
    n_y: usize,
    dim: usize,
    parameters: Parameters,
    seed: u64,
    wall_time_ms: Option<u64>,
}

#[derive(Debug, Serialize)]
struct CiDocument {
    kind: &'static str,
    value: F17,
    ci_lo: F17,
    ci_hi: F17,
    level: F17,
    method: &'static str,
    variance_estimate: F17,
    corrected_estimate: Option<F17>,
    b: Option<usize>,
    m: Option<usize>,
    n: usize,
    parameters: Parameters,
    seed: u64,
    wall_time_ms: Option<u64>,
}

#[derive(Debug, Serialize)]
struct CltDocument {
    experiment: &'static str,
    n: usize,
    reps: usize,
    ks_distance: F17,
    coverage: Option<F17>,
    coverage_method: &'static str,
    reference_value: Option<F17>,
    provenance: String,
    self_centered: bool,
    degenerate: bool,
    replicate_variance: F17,
    mean_plugin_variance: Option<F17>,
    level: F17,
    seed: u64,
    files: Vec<String>,
}

struct Log(bool);

impl Log {
    fn stage(&self, msg: impl AsRef<str>) {
        if self.0 {
            eprintln!("[rot-infer] {}", msg.as_ref());
        }
    }
}

fn load(x: &Path, y: &Path, log: &Log) -> Result<(SampleMatrix, SampleMatrix)> {
    let xs = SampleMatrix::read_csv(x)?;
    let ys = SampleMatrix::read_csv(y)?;
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch {
            expected: xs.dim(),
            got: ys.dim(),
        });
    }
    log.stage(format!("loaded {}×{} and {}×{}", xs.n(), xs.dim(), ys.n(), ys.dim()));
    Ok((xs, ys))
}

fn emit(doc: &impl Serialize, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn elapsed(start: Instant, disabled: bool) -> Option<u64> {
    (!disabled).then(|| start.elapsed().as_millis() as u64)
}

fn cmd_dist(a: &RunArgs, log: &Log, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let cfg = RunConfig::from_args(a)?;
    let (x, y) = load(&a.x, &a.y, log)?;
    let d = x.dim();
    let mut doc = DistDocument {
        kind: cfg.kind.as_str(),
        value: F17(f64::NAN),
        value_pth_root: None,
        per_direction: None,
        smooth: None,
        entropic: None,
        n_x: x.n(),
        n_y: y.n(),
        dim: d,
        parameters: cfg.parameters(),
        seed: cfg.seed_value,
        wall_time_ms: None,
    };
    let root = |v: f64| Some(F17(v.max(0.0).powf(1.0 / cfg.p)));
    log.stage(format!("computing {}", cfg.kind.as_str()));
    match cfg.kind {
        Kind::Plain => {
            let v = exact_wp(&x, &y, cfg.p)?;
            doc.value = F17(v);
            doc.value_pth_root = root(v);
        }
        Kind::SlicedAvg | Kind::SlicedMax => {
            let dirs = cfg.directions(d)?;
            let est = if cfg.kind == Kind::SlicedAvg {
                avg_sliced_wp(&x, &y, cfg.p, &dirs)?
            } else {
                max_sliced_wp(&x, &y, cfg.p, &dirs, &RefineConfig::default())?.0
            };
            doc.value = F17(est.value);
            doc.value_pth_root = root(est.value);
            doc.per_direction = Some(DirectionSummary::new(&est));
        }
        Kind::Smooth => {
            let (kernel, config) = cfg.smooth_parts(d)?;
            let est = smooth_wp(&x, &y, &kernel, &config)?;
            doc.value = F17(est.value);
            doc.smooth = Some(SmoothSummary {
                rep_values: f17s(&est.rep_values),
                rep_sd: F17(est.rep_sd),
                mc_error: F17(est.mc_error()),
            });
        }
        Kind::Entropic => {
            let est = eot_estimate(&x, EotTarget::Sample(&y), &cfg.sinkhorn_config())?;
            doc.value = F17(est.value);
            doc.entropic = Some(EntropicSummary {
                iterations: est.solution.iterations,
                marginal_err: F17(est.solution.marginal_err),
                v1: F17(est.variances.v1),
                v2: est.variances.v2.map(F17),
            });
        }
    }
    doc.wall_time_ms = elapsed(start, a.no_timing);
    emit(&doc, a.out.as_deref(), stdout)
}

fn cmd_ci(a: &CiArgs, log: &Log, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let cfg = RunConfig::from_args(&a.run)?;
    let (x, y) = load(&a.run.x, &a.run.y, log)?;
    let stat = cfg.statistic(x.dim())?;
    let method = a.method.unwrap_or(if cfg.kind == Kind::SlicedMax {
        CiMethod::Subsample
    } else {
        CiMethod::Bootstrap
    });
    if cfg.kind == Kind::SlicedMax && method == CiMethod::Bootstrap {
        eprintln!("warning: the naive bootstrap is not consistent for sliced-max; consider --method subsample");
    }
    let resample = ResampleConfig {
        b: a.b,
        level: a.level,
        seed: cfg.seed.child(3),
    };
    if method != CiMethod::Normal && a.b < 100 {
        return Err(Error::param("b", format!("need at least 100 draws for an interval, got {}", a.b)));
    }
    log.stage(format!("{} interval for {}", method.as_str(), cfg.kind.as_str()));
    let mut doc = CiDocument {
        kind: cfg.kind.as_str(),
        value: F17(f64::NAN),
        ci_lo: F17(f64::NAN),
        ci_hi: F17(f64::NAN),
        level: F17(a.level),
        method: method.as_str(),
        variance_estimate: F17(f64::NAN),
        corrected_estimate: None,
        b: None,
        m: None,
        n: x.n(),
        parameters: cfg.parameters(),
        seed: cfg.seed_value,
        wall_time_ms: None,
    };
    let fill = |doc: &mut CiDocument, r: &BootstrapResult| {
        doc.value = F17(r.estimate);
        doc.ci_lo = F17(r.ci.0);
        doc.ci_hi = F17(r.ci.1);
        doc.variance_estimate = F17(r.variance);
        doc.b = Some(r.replicates.len());
    };
    match method {
        CiMethod::Bootstrap => fill(&mut doc, &bootstrap(stat.as_ref(), &x, Some(&y), &resample)?),
        CiMethod::Subsample => {
            let m = a.m.unwrap_or_else(|| default_subsample_size(x.n().min(y.n())));
            let r = subsample(stat.as_ref(), &x, Some(&y), m, &resample)?;
            fill(&mut doc, &r);
            doc.m = Some(m);
            doc.corrected_estimate = Some(F17(r.corrected(0.5)));
        }
        CiMethod::Normal => {
            let (v, var) = stat.eval_with_variance(&x, Some(&y))?;
            let var = var.ok_or_else(|| {
                Error::param("method", format!("no plug-in variance for {}; use bootstrap", cfg.kind.as_str()))
            })?;
            let (lo, hi) = normal_ci(v, var, x.n(), a.level)?;
            doc.value = F17(v);
            doc.ci_lo = F17(lo);
            doc.ci_hi = F17(hi);
            doc.variance_estimate = F17(var);
        }
    }
    doc.wall_time_ms = elapsed(start, a.run.no_timing);
    emit(&doc, a.run.out.as_deref(), stdout)
}

/// The two 5-atom planar measures of the `eot-discrete` experiment.
pub fn eot_experiment_measures() -> (WeightedCloud, WeightedCloud) {
    let mu = SampleMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]]).expect("finite");
    let nu = SampleMatrix::from_rows(&[[0.2, 0.1], [1.2, 0.4], [0.4, 1.1], [0.9, 0.8], [1.5, 1.5]]).expect("finite");
    (
        WeightedCloud::new(mu, vec![0.1, 0.2, 0.3, 0.25, 0.15]).expect("unit mass"),
        WeightedCloud::new(nu, vec![0.3, 0.15, 0.2, 0.2, 0.15]).expect("unit mass"),
    )
}

/// High-precision reference `S(μ, ν)` at regularization `eps`.
pub fn eot_reference(mu: &WeightedCloud, nu: &WeightedCloud, eps: f64) -> Result<f64> {
    let cfg = SinkhornConfig {
        eps,
        max_iter: 1_000_000,
        tol: 1e-12,
    };
    let s = sinkhorn(mu, nu, &cfg)?;
    if !s.converged {
        return Err(Error::NotConverged {
            iterations: s.iterations,
            marginal_err: s.marginal_err,
        });
    }
    Ok(s.value)
}

fn cmd_clt(a: &CltArgs, log: &Log, stdout: &mut dyn Write) -> Result<()> {
    let seed = SeedPolicy::new(a.seed);
    let coverage = if a.b == 0 {
        CoverageMethod::Normal
    } else {
        CoverageMethod::Bootstrap { b: a.b }
    };
    let mut cfg = CltConfig {
        n: a.n,
        reps: a.reps,
        level: a.level,
        seed: seed.child(0),
        coverage,
        reference: None,
    };
    let name = a.experiment.to_possible_value().expect("no skipped variants").get_name().to_owned();
    log.stage(format!("running {name}: n = {}, {} replications", a.n, a.reps));
    let report: CltReport = match a.experiment {
        Experiment::EotDiscrete => {
            let (mu, nu) = eot_experiment_measures();
            cfg.reference = Some(ReferenceValue {
                value: eot_reference(&mu, &nu, a.eps)?,
                provenance: "Sinkhorn on the population atoms, L1 marginal tolerance 1e-12".into(),
            });
            let stat = EntropicStat {
                config: SinkhornConfig::with_eps(a.eps),
                target: Some(nu),
            };
            clt_experiment(&stat, &DiscretePopulation::new(mu), None, &cfg)?
        }
        Experiment::SlicedUniform => {
            cfg.coverage = CoverageMethod::None;
            let stat = AvgSliced::new(2.0, sample_sphere(2, a.k, &seed.child(1))?);
            let x = UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
            let y = UniformBox { lo: vec![1.0, 0.0], hi: vec![2.0, 1.0] };
            clt_experiment(&stat, &x, Some(&y as &dyn Population), &cfg)?
        }
        Experiment::SlicedW1Gaussian => {
            let dirs = sample_sphere(2, a.k, &seed.child(1))?;
            // projections are N(0,1) and N(θ₁,1), so each slice contributes |θ₁|
            let exact = pairwise_sum(&dirs.iter().map(|t| t.components()[0].abs()).collect::<Vec<_>>()) / dirs.len() as f64;
            cfg.reference = Some(ReferenceValue {
                value: exact,
                provenance: "closed form: mean of |θ₁| over the directions".into(),
            });
            let reference = GaussianReference { mean: vec![1.0, 0.0], sd: 1.0 };
            let stat = SlicedW1Reference {
                directions: dirs,
                reference: &reference,
                grid: TGridConfig::default(),
            };
            let pop = GaussianPopulation { mean: vec![0.0, 0.0], sd: 1.0 };
            clt_experiment(&stat, &pop, None, &cfg)?
        }
        Experiment::PointMass => {
            cfg.coverage = CoverageMethod::None;
            let pm = PointMass(vec![0.5, 0.5]);
            clt_experiment(&PlainWp { p: 2.0 }, &pm, Some(&pm as &dyn Population), &cfg)?
        }
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut files = Vec::new();
    let csv_path = a.out_dir.join("replicates.csv");
    fs::write(&csv_path, replicates_csv(&report))?;
    files.push(csv_path.display().to_string());
    if report.degenerate {
        log.stage("degenerate replicates: no plots");
    } else {
        for (file, svg) in [
            ("histogram.svg", histogram_svg(&report.standardized)),
            ("qq.svg", qq_svg(&report.standardized)),
        ] {
            let path = a.out_dir.join(file);
            fs::write(&path, svg)?;
            files.push(path.display().to_string());
        }
    }
    let doc = CltDocument {
        experiment: match a.experiment {
            Experiment::EotDiscrete => "eot-discrete",
            Experiment::SlicedUniform => "sliced-uniform",
            Experiment::SlicedW1Gaussian => "sliced-w1-gaussian",
            Experiment::PointMass => "point-mass",
        },
        n: a.n,
        reps: a.reps,
        ks_distance: F17(report.ks_distance),
        coverage: report.coverage.map(F17),
        coverage_method: match (cfg.coverage, report.coverage) {
            (_, None) => "none",
            (CoverageMethod::Normal, _) => "normal",
            (CoverageMethod::Bootstrap { .. }, _) => "bootstrap",
            (CoverageMethod::None, _) => "none",
        },
        reference_value: report.reference_value.map(F17),
        provenance: report.provenance.clone(),
        self_centered: report.self_centered,
        degenerate: report.degenerate,
        replicate_variance: F17(report.replicate_variance),
        mean_plugin_variance: report.mean_plugin_variance().map(F17),
        level: F17(a.level),
        seed: a.seed,
        files,
    };
    emit(&doc, a.out.as_deref(), stdout)
}

/// One row per replication: index, `√n T`, standardized value, plug-in variance.
pub fn replicates_csv(report: &CltReport) -> String {
    let mut s = String::from("replicate,scaled,standardized,plugin_variance\n");
    for (i, (sc, st)) in report.scaled.iter().zip(&report.standardized).enumerate() {
        let v = report.plugin_variances.as_ref().map_or(String::new(), |v| fmt17(v[i]));
        let _ = writeln!(s, "{i},{},{},{v}", fmt17(*sc), fmt17(*st));
    }
    s
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    )
}

fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Density histogram of `values` on `[-4, 4]` with the `N(0,1)` density overlaid.
pub fn histogram_svg(values: &[f64]) -> String {
    let bins = 32;
    let (lo, hi) = (-4.0, 4.0);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if (lo..hi).contains(&v) {
            counts[((v - lo) / width) as usize] += 1;
        }
    }
    let dens: Vec<f64> = counts.iter().map(|&c| c as f64 / (values.len() as f64 * width)).collect();
    let ymax = dens.iter().copied().fold(normal_pdf(0.0), f64::max) * 1.1;
    let sx = |t: f64| PAD + (t - lo) / (hi - lo) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - v / ymax * (H - 2.0 * PAD);
    let mut s = svg_open("standardized replicates");
    for (b, d) in dens.iter().enumerate() {
        let x0 = sx(lo + b as f64 * width);
        let _ = writeln!(
            s,
            "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#8aa8d0\" stroke=\"#44607f\"/>",
            sy(*d),
            sx(lo + width) - sx(lo),
            H - PAD - sy(*d)
        );
    }
    let pts: Vec<String> = (0..=200)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / 200.0;
            format!("{:.2},{:.2}", sx(t), sy(normal_pdf(t)))
        })
        .collect();
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#c03030\" stroke-width=\"2\"/>", pts.join(" "));
    for t in [-4, -2, 0, 2, 4] {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{t}</text>",
            sx(t as f64),
            H - PAD + 15.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Sorted `values` against normal quantiles at `(i − ½)/R`, with the diagonal.
pub fn qq_svg(values: &[f64]) -> String {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let r = v.len() as f64;
    let q: Vec<f64> = (0..v.len()).map(|i| normal_quantile((i as f64 + 0.5) / r)).collect();
    let lim = v
        .iter()
        .chain(&q)
        .fold(3.0f64, |m, t| if t.is_finite() { m.max(t.abs()) } else { m })
        .ceil();
    let sx = |t: f64| PAD + (t + lim) / (2.0 * lim) * (W - 2.0 * PAD);
    let sy = |t: f64| H - PAD - (t + lim) / (2.0 * lim) * (H - 2.0 * PAD);
    let mut s = svg_open("normal QQ plot");
    let _ = writeln!(
        s,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#c03030\"/>",
        sx(-lim),
        sy(-lim),
        sx(lim),
        sy(lim)
    );
    for (a, b) in q.iter().zip(&v) {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#44607f\"/>", sx(*a), sy(*b));
    }
    s.push_str("</svg>\n");
    s
}

/// One row of the selftest table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub passed: bool,
}

fn random_cloud(rng: &mut impl Rng, n: usize, d: usize) -> SampleMatrix {
    SampleMatrix::new((0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect(), n, d).expect("finite")
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Oracle-equivalence checks run by `selftest`.
pub fn selftest_checks() -> Result<Vec<CheckOutcome>> {
    let seed = SeedPolicy::new(2024);
    let mut out = Vec::new();

    let mut rng = seed.rng(0);
    let mut worst = 0.0f64;
    for t in 0..60 {
        let n = rng.random_range(1..=24);
        let p = [1.0, 2.0, 3.0][t % 3];
        let x = random_cloud(&mut rng, n, 1);
        let y = random_cloud(&mut rng, n, 1);
        let a = wp_order_stats(&sorted(x.as_slice().to_vec()), &sorted(y.as_slice().to_vec()), p)?;
        let b = exact_wp(&x, &y, p)?;
        worst = worst.max((a - b).abs() / (1.0 + a));
    }
    out.push(CheckOutcome { name: "order statistics vs assignment", cases: 60, worst, passed: worst < 1e-10 });

    let mut rng = seed.rng(1);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let n = rng.random_range(1..=24);
        let x = sorted(random_cloud(&mut rng, n, 1).as_slice().to_vec());
        let y = sorted(random_cloud(&mut rng, n, 1).as_slice().to_vec());
        let d = dual_potentials_1d(&x, &y, 2.0)?;
        worst = worst.max(d.max_violation(&x, &y)).max((d.dual_objective() - d.value).abs());
    }
    out.push(CheckOutcome { name: "1D dual feasibility and tightness", cases: 60, worst, passed: worst < 1e-9 });

    let mut rng = seed.rng(2);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let (n, m) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let mu = WeightedCloud::uniform(random_cloud(&mut rng, n, 2));
        let nu = WeightedCloud::uniform(random_cloud(&mut rng, m, 2));
        let s = sinkhorn(&mu, &nu, &SinkhornConfig::default())?;
        let primal = crate::entropic::eot_primal_value(&s.coupling, &mu, &nu, 1.0)?;
        worst = worst.max((primal - s.value).abs());
        if !s.converged {
            worst = f64::INFINITY;
        }
    }
    out.push(CheckOutcome { name: "Sinkhorn duality gap", cases: 30, worst, passed: worst < 1e-9 });

    let mut worst = f64::NEG_INFINITY;
    for t in 0..3 {
        let mut rng = seed.rng(3 + t);
        let x = random_cloud(&mut rng, 30, 2);
        let y = random_cloud(&mut rng, 30, 2);
        let kernel = MollifierKernel::new(0.5, 2)?;
        let config = SmoothConfig { p: 2.0, reps: 10, seed: seed.child(10 + t), coupling: Default::default() };
        let est = smooth_wp(&x, &y, &kernel, &config)?;
        let w = exact_wp(&x, &y, 2.0)?.sqrt();
        let slack = est.mc_error();
        worst = worst.max(est.value - w - slack).max(w - est.value - kernel.stability_gap(2.0) - slack);
    }
    out.push(CheckOutcome { name: "smooth stability sandwich", cases: 3, worst, passed: worst <= 0.0 });

    let mut rng = seed.rng(6);
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    while cases < 50 {
        let k = rng.random_range(2..10);
        let atoms: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = Discrete1D::uniform(atoms)?;
        let ball = Ball1D { center: rng.random_range(-1.0..1.0), radius: rng.random_range(0.2..1.5) };
        let Ok((t, mass)) = truncate(&m, ball) else { continue };
        let (lo, hi) = m.support();
        worst = worst.max(wp_quantile(&t, &m, 2.0)? - truncation_bound(2.0, mass, hi - lo)?);
        cases += 1;
    }
    out.push(CheckOutcome { name: "truncation bound", cases, worst, passed: worst <= 1e-12 });
    Ok(out)
}

fn cmd_selftest(stdout: &mut dyn Write) -> Result<bool> {
    let checks = selftest_checks()?;
    let mut s = format!("{:<36} {:>6} {:>12}  {}\n", "check", "cases", "worst", "status");
    for c in &checks {
        let _ = writeln!(
            s,
            "{:<36} {:>6} {:>12.3e}  {}",
            c.name,
            c.cases,
            c.worst,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    stdout.write_all(s.as_bytes())?;
    Ok(checks.iter().all(|c| c.passed))
}

/// Runs a parsed command, writing the result document to `stdout`. Returns
/// the process exit code on success.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    let log = Log(cli.verbose);
    let run = |stdout: &mut dyn Write| -> Result<i32> {
        match &cli.command {
            Command::Dist(a) => cmd_dist(a, &log, stdout).map(|_| 0),
            Command::Ci(a) => cmd_ci(a, &log, stdout).map(|_| 0),
            Command::Clt(a) => cmd_clt(a, &log, stdout).map(|_| 0),
            Command::Selftest => cmd_selftest(stdout).map(|ok| if ok { 0 } else { 1 }),
        }
    };
    match cli.threads {
        Some(0) => Err(Error::param("threads", "must be ≥ 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut buf = Vec::new();
            let code = pool.install(|| run(&mut buf));
            stdout.write_all(&buf)?;
            code
        }
        None => run(stdout),
    }
}

/// Parses `args`, runs the command and returns the exit code; errors are
/// reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
