//! Resampling inference and the Monte Carlo CLT harness.
//!
//! Every distance in the crate is wrapped as a [`Statistic`]; the bootstrap,
//! subsampling and [`clt_experiment`] work on that trait only. Replicates run
//! in parallel with one sub-seed each, so results depend only on the seed.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::entropic::{eot_estimate, EotTarget, SinkhornConfig, WeightedCloud};
use crate::error::{Error, Result};
use crate::measures::{Direction, SampleMatrix, SeedPolicy};
use crate::ot_nd::exact_wp;
use crate::sliced::{
    avg_sliced_wp, avg_sliced_w1_reference, max_sliced_wp, pairwise_sum, population_variance,
    sliced_wp_with_variance, variance_v1_sign, ProjectedCdf, Reference, RefineConfig, TGridConfig,
};
use crate::smooth::{smooth_wp, MollifierKernel, SmoothConfig};

/// Default number of bootstrap or subsample draws.
pub const DEFAULT_B: usize = 500;

/// Default number of CLT replications.
pub const DEFAULT_REPS: usize = 300;

/// A plug-in functional of one or two samples, centered and scaled by `√n`
/// by the resampling routines.
pub trait Statistic: Sync {
    fn name(&self) -> &str;

    fn eval(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<f64>;

    /// Value together with a plug-in estimate of the asymptotic variance of
    /// `√n (T_n − T)`, when one is available.
    fn eval_with_variance(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<(f64, Option<f64>)> {
        Ok((self.eval(x, y)?, None))
    }
}

fn need_y<'a>(name: &str, y: Option<&'a SampleMatrix>) -> Result<&'a SampleMatrix> {
    y.ok_or_else(|| Error::InvalidInput(format!("{name} needs a second sample")))
}

/// `W_p^p` by exact assignment.
#[derive(Debug, Clone)]
pub struct PlainWp {
    pub p: f64,
}

impl Statistic for PlainWp {
    fn name(&self) -> &str {
        "plain"
    }

    fn eval(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<f64> {
        exact_wp(x, need_y(self.name(), y)?, self.p)
    }
}

/// Average-sliced `W_p^p` over fixed directions.
#[derive(Debug, Clone)]
pub struct AvgSliced {
    pub p: f64,
    pub directions: Vec<Direction>,
    /// Grid for the `p = 1` variance.
    pub grid: TGridConfig,
}

impl AvgSliced {
    pub fn new(p: f64, directions: Vec<Direction>) -> Self {
        Self {
            p,
            directions,
            grid: TGridConfig::default(),
        }
    }
}

impl Statistic for AvgSliced {
    fn name(&self) -> &str {
        "sliced-avg"
    }

    fn eval(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<f64> {
        Ok(avg_sliced_wp(x, need_y(self.name(), y)?, self.p, &self.directions)?.value)
    }

    /// Two-sample variance `v² + w²`. For `p > 1` it needs equal sizes.
    fn eval_with_variance(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<(f64, Option<f64>)> {
        let y = need_y(self.name(), y)?;
        if self.p == 1.0 {
            let v = variance_v1_sign(x, Reference::Empirical(y), &self.directions, &self.grid)?;
            return Ok((self.eval(x, Some(y))?, Some(v.total())));
        }
        let (est, v) = sliced_wp_with_variance(x, y, self.p, &self.directions)?;
        Ok((est.value, Some(v.total())))
    }
}

/// Average-sliced `W₁` from a sample to a population with known projected CDFs.
pub struct SlicedW1Reference<'a> {
    pub directions: Vec<Direction>,
    pub reference: &'a dyn ProjectedCdf,
    pub grid: TGridConfig,
}

impl Statistic for SlicedW1Reference<'_> {
    fn name(&self) -> &str {
        "sliced-w1-reference"
    }

    fn eval(&self, x: &SampleMatrix, _y: Option<&SampleMatrix>) -> Result<f64> {
        Ok(avg_sliced_w1_reference(x, Reference::Analytic(self.reference), &self.directions, &self.grid)?.value)
    }

    fn eval_with_variance(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<(f64, Option<f64>)> {
        let v = variance_v1_sign(x, Reference::Analytic(self.reference), &self.directions, &self.grid)?;
        Ok((self.eval(x, y)?, Some(v.v2)))
    }
}

/// Max-sliced `W_p^p`. No variance: the limit is not Gaussian in general.
#[derive(Debug, Clone)]
pub struct MaxSliced {
    pub p: f64,
    pub directions: Vec<Direction>,
    pub refine: RefineConfig,
}

impl Statistic for MaxSliced {
    fn name(&self) -> &str {
        "sliced-max"
    }

    fn eval(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<f64> {
        Ok(max_sliced_wp(x, need_y(self.name(), y)?, self.p, &self.directions, &self.refine)?.0.value)
    }
}

/// Smooth `W_p` (reported as `W_p`, not its `p`-th power).
#[derive(Debug, Clone)]
pub struct SmoothStat {
    pub kernel: MollifierKernel,
    pub config: SmoothConfig,
}

impl Statistic for SmoothStat {
    fn name(&self) -> &str {
        "smooth"
    }

    fn eval(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<f64> {
        Ok(smooth_wp(x, need_y(self.name(), y)?, &self.kernel, &self.config)?.value)
    }
}

/// Entropic cost against a second sample, or against `target` when set.
#[derive(Debug, Clone)]
pub struct EntropicStat {
    pub config: SinkhornConfig,
    pub target: Option<WeightedCloud>,
}

impl Statistic for EntropicStat {
    fn name(&self) -> &str {
        "entropic"
    }

    fn eval(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<f64> {
        Ok(self.eval_with_variance(x, y)?.0)
    }

    fn eval_with_variance(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<(f64, Option<f64>)> {
        let target = match &self.target {
            Some(t) => EotTarget::Fixed(t),
            None => EotTarget::Sample(need_y(self.name(), y)?),
        };
        let e = eot_estimate(x, target, &self.config)?;
        Ok((e.value, Some(e.variances.total())))
    }
}

/// Which resampling scheme produced a [`BootstrapResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    Bootstrap,
    Subsample { m: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleConfig {
    pub b: usize,
    pub level: f64,
    pub seed: SeedPolicy,
}

impl ResampleConfig {
    pub fn new(b: usize, level: f64, seed: u64) -> Self {
        Self {
            b,
            level,
            seed: SeedPolicy::new(seed),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::param("b", format!("need at least 2 draws, got {}", self.b)));
        }
        check_level(self.level)
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("level", format!("must lie in (0, 1), got {level}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Statistic on the full data.
    pub estimate: f64,
    /// `√s (T* − T)` with `s = n` (bootstrap) or `s = m` (subsampling).
    pub replicates: Vec<f64>,
    pub ci: (f64, f64),
    /// Population variance of the replicates.
    pub variance: f64,
    pub level: f64,
    /// Size of the first sample.
    pub n: usize,
    pub method: ResampleMethod,
}

impl BootstrapResult {
    /// Empirical `alpha`-quantile of the replicates.
    pub fn k_alpha(&self, alpha: f64) -> f64 {
        let mut s = self.replicates.clone();
        s.sort_unstable_by(f64::total_cmp);
        quantile_sorted(&s, alpha)
    }

    /// Quantile-corrected estimate `T − k_α / √n`; `alpha = ½` removes the
    /// median bias.
    pub fn corrected(&self, alpha: f64) -> f64 {
        self.estimate - self.k_alpha(alpha) / (self.n as f64).sqrt()
    }
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn finish(
    estimate: f64,
    replicates: Vec<f64>,
    n: usize,
    level: f64,
    method: ResampleMethod,
) -> BootstrapResult {
    let mut sorted = replicates.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let rn = (n as f64).sqrt();
    let ci = (
        estimate - quantile_sorted(&sorted, 1.0 - alpha / 2.0) / rn,
        estimate - quantile_sorted(&sorted, alpha / 2.0) / rn,
    );
    BootstrapResult {
        estimate,
        variance: population_variance(&replicates),
        replicates,
        ci,
        level,
        n,
        method,
    }
}

/// Nonparametric bootstrap of `√n (T(X*, Y*) − T(X, Y))`. The two samples are
/// resampled independently. The interval is
/// `[T − q_{1−α/2}/√n, T − q_{α/2}/√n]`.
pub fn bootstrap(
    stat: &dyn Statistic,
    x: &SampleMatrix,
    y: Option<&SampleMatrix>,
    config: &ResampleConfig,
) -> Result<BootstrapResult> {
    config.validate()?;
    let t = stat.eval(x, y)?;
    let rn = (x.n() as f64).sqrt();
    let replicates = (0..config.b)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.seed.rng(r as u64);
            let xb = x.select(&draw_with_replacement(&mut rng, x.n()));
            let yb = y.map(|y| y.select(&draw_with_replacement(&mut rng, y.n())));
            Ok(rn * (stat.eval(&xb, yb.as_ref())? - t))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(finish(t, replicates, x.n(), config.level, ResampleMethod::Bootstrap))
}

fn draw_with_replacement(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `⌈n^{2/3}⌉`, capped at `n − 1`.
pub fn default_subsample_size(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0).ceil() as usize).min(n.saturating_sub(1)).max(1)
}

/// `m`-out-of-`n` subsampling without replacement; replicates are
/// `√m (T(sub) − T(full))`. Both samples are subsampled to size `m`.
pub fn subsample(
    stat: &dyn Statistic,
    x: &SampleMatrix,
    y: Option<&SampleMatrix>,
    m: usize,
    config: &ResampleConfig,
) -> Result<BootstrapResult> {
    config.validate()?;
    let smallest = y.map_or(x.n(), |y| y.n().min(x.n()));
    if m == 0 || m >= smallest {
        return Err(Error::param("m", format!("need 1 ≤ m < n = {smallest}, got {m}")));
    }
    let t = stat.eval(x, y)?;
    let rm = (m as f64).sqrt();
    let replicates = (0..config.b)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.seed.rng(r as u64);
            let xs = x.select(&index::sample(&mut rng, x.n(), m).into_vec());
            let ys = y.map(|y| y.select(&index::sample(&mut rng, y.n(), m).into_vec()));
            Ok(rm * (stat.eval(&xs, ys.as_ref())? - t))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(finish(t, replicates, x.n(), config.level, ResampleMethod::Subsample { m }))
}

/// `Φ⁻¹(q)`.
pub fn normal_quantile(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

/// `estimate ± z_{(1+level)/2} √(v2 / n)`.
pub fn normal_ci(estimate: f64, v2: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    if !(v2 >= 0.0) {
        return Err(Error::param("v2", format!("variance must be ≥ 0, got {v2}")));
    }
    if n == 0 {
        return Err(Error::param("n", "sample size must be ≥ 1"));
    }
    let half = normal_quantile(0.5 + level / 2.0) * (v2 / n as f64).sqrt();
    Ok((estimate - half, estimate + half))
}

/// Kolmogorov–Smirnov distance between the empirical law of `values` and
/// `N(0, 1)`.
pub fn ks_to_standard_normal(values: &[f64]) -> Result<f64> {
    if values.len() < 20 {
        return Err(Error::InvalidInput(format!("need at least 20 values, got {}", values.len())));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in KS input".into()));
    }
    let mut s = values.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let r = s.len() as f64;
    let n01 = Normal::standard();
    Ok(s.iter().enumerate().fold(0.0f64, |d, (i, &v)| {
        let f = n01.cdf(v);
        d.max((i as f64 + 1.0) / r - f).max(f - i as f64 / r)
    }))
}

/// A distribution the CLT harness can draw samples from.
pub trait Population: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleMatrix;
}

/// Finitely supported population.
#[derive(Debug, Clone)]
pub struct DiscretePopulation {
    cloud: WeightedCloud,
    cumulative: Vec<f64>,
}

impl DiscretePopulation {
    pub fn new(cloud: WeightedCloud) -> Self {
        let mut acc = 0.0;
        let cumulative = cloud
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cloud, cumulative }
    }

    pub fn cloud(&self) -> &WeightedCloud {
        &self.cloud
    }
}

impl Population for DiscretePopulation {
    fn dim(&self) -> usize {
        self.cloud.dim()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
        let last = self.cumulative.len() - 1;
        let idx: Vec<usize> = (0..n)
            .map(|_| {
                let u = rng.random::<f64>();
                self.cumulative.partition_point(|&c| c <= u).min(last)
            })
            .collect();
        self.cloud.points().select(&idx)
    }
}

/// Uniform law on the box `∏ [lo_k, hi_k]`.
#[derive(Debug, Clone)]
pub struct UniformBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Population for UniformBox {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
        let d = self.dim();
        let data = (0..n * d).map(|k| self.lo[k % d] + (self.hi[k % d] - self.lo[k % d]) * rng.random::<f64>()).collect();
        SampleMatrix::new(data, n, d).expect("finite box")
    }
}

/// `N(mean, sd² I)`.
#[derive(Debug, Clone)]
pub struct GaussianPopulation {
    pub mean: Vec<f64>,
    pub sd: f64,
}

impl Population for GaussianPopulation {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
        let d = self.dim();
        let data = (0..n * d)
            .map(|k| {
                let z: f64 = StandardNormal.sample(rng);
                self.mean[k % d] + self.sd * z
            })
            .collect();
        SampleMatrix::new(data, n, d).expect("finite parameters")
    }
}

/// Dirac mass at a point.
#[derive(Debug, Clone)]
pub struct PointMass(pub Vec<f64>);

impl Population for PointMass {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, n: usize, _rng: &mut ChaCha8Rng) -> SampleMatrix {
        let data = self.0.iter().copied().cycle().take(n * self.0.len()).collect();
        SampleMatrix::new(data, n, self.0.len()).expect("finite point")
    }
}

/// How the harness builds a confidence interval per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageMethod {
    None,
    /// `normal_ci` with the replication's own plug-in variance.
    Normal,
    /// Percentile bootstrap with `b` draws.
    Bootstrap { b: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceValue {
    pub value: f64,
    /// How the value was obtained.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltConfig {
    pub n: usize,
    pub reps: usize,
    pub level: f64,
    pub seed: SeedPolicy,
    pub coverage: CoverageMethod,
    /// Population value of the statistic; `None` selects self-centered mode.
    pub reference: Option<ReferenceValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    /// `√n (T_r − center) / √v̂_r`, one per replication.
    pub standardized: Vec<f64>,
    /// `√n T_r` for each replication.
    pub scaled: Vec<f64>,
    /// Plug-in variance of each replication, when the statistic has one.
    pub plugin_variances: Option<Vec<f64>>,
    pub ks_distance: f64,
    pub coverage: Option<f64>,
    pub reference_value: Option<f64>,
    pub provenance: String,
    /// Centered at the replicate mean instead of a reference value.
    pub self_centered: bool,
    /// No spread in the replicates; standardized values are all zero.
    pub degenerate: bool,
    /// Population variance of `scaled`.
    pub replicate_variance: f64,
}

impl CltReport {
    pub fn mean_plugin_variance(&self) -> Option<f64> {
        self.plugin_variances.as_ref().map(|v| pairwise_sum(v) / v.len() as f64)
    }
}

struct Replication {
    value: f64,
    variance: Option<f64>,
    covered: Option<bool>,
}

/// Monte Carlo check of a `√n` central limit theorem. Each replication draws
/// `n` points from `x_pop` (and `y_pop`), evaluates the statistic and its
/// plug-in variance, and optionally a confidence interval for the reference.
pub fn clt_experiment(
    stat: &dyn Statistic,
    x_pop: &dyn Population,
    y_pop: Option<&dyn Population>,
    config: &CltConfig,
) -> Result<CltReport> {
    check_level(config.level)?;
    if config.n == 0 {
        return Err(Error::param("n", "sample size must be ≥ 1"));
    }
    if config.reps < 20 {
        return Err(Error::param("reps", format!("need at least 20 replications, got {}", config.reps)));
    }
    let reference = config.reference.as_ref().map(|r| r.value);
    let data_seed = config.seed.child(0);
    let boot_seed = config.seed.child(1);
    let n = config.n;
    let reps = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = data_seed.rng(r as u64);
            let x = x_pop.sample(n, &mut rng);
            let y = y_pop.map(|p| p.sample(n, &mut rng));
            let (value, variance) = stat.eval_with_variance(&x, y.as_ref())?;
            let covered = match (config.coverage, reference) {
                (_, None) | (CoverageMethod::None, _) => None,
                (CoverageMethod::Normal, Some(t)) => {
                    let v = variance.ok_or_else(|| {
                        Error::InvalidInput(format!("{} has no plug-in variance for a normal interval", stat.name()))
                    })?;
                    let (lo, hi) = normal_ci(value, v, n, config.level)?;
                    Some(lo <= t && t <= hi)
                }
                (CoverageMethod::Bootstrap { b }, Some(t)) => {
                    let cfg = ResampleConfig {
                        b,
                        level: config.level,
                        seed: boot_seed.child(r as u64),
                    };
                    let (lo, hi) = bootstrap(stat, &x, y.as_ref(), &cfg)?.ci;
                    Some(lo <= t && t <= hi)
                }
            };
            Ok(Replication { value, variance, covered })
        })
        .collect::<Result<Vec<Replication>>>()?;

    let rn = (n as f64).sqrt();
    let scaled: Vec<f64> = reps.iter().map(|r| rn * r.value).collect();
    let values: Vec<f64> = reps.iter().map(|r| r.value).collect();
    let plugin: Option<Vec<f64>> = reps.iter().map(|r| r.variance).collect();
    let replicate_variance = population_variance(&scaled);
    let center = reference.unwrap_or_else(|| pairwise_sum(&values) / values.len() as f64);
    let spread = values.iter().any(|v| *v != values[0]);
    let degenerate = !spread || plugin.as_ref().is_some_and(|v| v.iter().all(|s| *s == 0.0));
    let standardized: Vec<f64> = if degenerate {
        vec![0.0; reps.len()]
    } else {
        let fallback = match &plugin {
            Some(v) => pairwise_sum(v) / v.len() as f64,
            None => replicate_variance,
        };
        reps.iter()
            .map(|r| {
                let v = r.variance.filter(|v| *v > 0.0).unwrap_or(fallback);
                rn * (r.value - center) / v.sqrt()
            })
            .collect()
    };
    let coverage = if reps.iter().all(|r| r.covered.is_some()) && !reps.is_empty() {
        Some(reps.iter().filter(|r| r.covered == Some(true)).count() as f64 / reps.len() as f64)
    } else {
        None
    };
    Ok(CltReport {
        ks_distance: ks_to_standard_normal(&standardized)?,
        standardized,
        scaled,
        plugin_variances: plugin,
        coverage,
        reference_value: reference,
        provenance: config
            .reference
            .as_ref()
            .map_or_else(|| "self-centered at the replicate mean".to_string(), |r| r.provenance.clone()),
        self_centered: reference.is_none(),
        degenerate,
        replicate_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sample_sphere;

    struct Mean;

    impl Statistic for Mean {
        fn name(&self) -> &str {
            "mean"
        }
        fn eval(&self, x: &SampleMatrix, _y: Option<&SampleMatrix>) -> Result<f64> {
            Ok(x.as_slice().iter().sum::<f64>() / x.n() as f64)
        }
        fn eval_with_variance(&self, x: &SampleMatrix, y: Option<&SampleMatrix>) -> Result<(f64, Option<f64>)> {
            Ok((self.eval(x, y)?, Some(population_variance(x.as_slice()))))
        }
    }

    fn normal_sample(n: usize, seed: u64) -> SampleMatrix {
        GaussianPopulation { mean: vec![0.0], sd: 1.0 }.sample(n, &mut SeedPolicy::new(seed).rng(0))
    }

    #[test]
    fn bootstrap_mean_variance() {
        let x = normal_sample(2000, 1);
        let sv = population_variance(x.as_slice());
        let b = bootstrap(&Mean, &x, None, &ResampleConfig::new(500, 0.95, 2)).unwrap();
        assert!((b.variance / sv - 1.0).abs() < 0.15, "{} vs {sv}", b.variance);
        let b = bootstrap(&Mean, &x, None, &ResampleConfig::new(5000, 0.95, 3)).unwrap();
        assert!((b.variance / sv - 1.0).abs() < 0.05, "{} vs {sv}", b.variance);
        assert!(b.ci.0 <= b.estimate && b.estimate <= b.ci.1);
    }

    #[test]
    fn bootstrap_degenerate_and_deterministic() {
        let x = SampleMatrix::from_rows(&[[1.0, 2.0]; 30]).unwrap();
        let y = SampleMatrix::from_rows(&[[0.0, 2.0]; 30]).unwrap();
        let stat = PlainWp { p: 2.0 };
        let b = bootstrap(&stat, &x, Some(&y), &ResampleConfig::new(100, 0.95, 1)).unwrap();
        assert!(b.replicates.iter().all(|r| *r == 0.0));
        assert_eq!(b.ci, (1.0, 1.0));
        let s = subsample(&stat, &x, Some(&y), 10, &ResampleConfig::new(100, 0.95, 1)).unwrap();
        assert!(s.replicates.iter().all(|r| *r == 0.0));

        let x = normal_sample(200, 4);
        let cfg = ResampleConfig::new(200, 0.9, 7);
        let a = bootstrap(&Mean, &x, None, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| bootstrap(&Mean, &x, None, &cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn percentile_ci_monotone_in_level() {
        let x = normal_sample(300, 5);
        let mut prev: Option<(f64, f64)> = None;
        for level in [0.5, 0.8, 0.9, 0.95, 0.99] {
            let ci = bootstrap(&Mean, &x, None, &ResampleConfig::new(400, level, 9)).unwrap().ci;
            if let Some(p) = prev {
                assert!(ci.0 <= p.0 && ci.1 >= p.1);
            }
            prev = Some(ci);
        }
    }

    #[test]
    fn subsample_near_full_is_tight() {
        let x = normal_sample(500, 6);
        let s = subsample(&Mean, &x, None, 499, &ResampleConfig::new(200, 0.95, 1)).unwrap();
        assert!(s.replicates.iter().all(|r| r.abs() < 0.2), "{:?}", s.k_alpha(1.0));
        assert!(subsample(&Mean, &x, None, 500, &ResampleConfig::new(200, 0.95, 1)).is_err());
        assert_eq!(default_subsample_size(1000), 100);
        assert_eq!(default_subsample_size(400), 55);
    }

    #[test]
    fn normal_ci_values() {
        let z = normal_quantile(0.975);
        assert!((z - 1.959963984540054).abs() < 1e-12);
        assert_eq!(normal_ci(3.0, 0.0, 10, 0.95).unwrap(), (3.0, 3.0));
        let (lo, hi) = normal_ci(0.0, 1.0, 100, 0.95).unwrap();
        assert!((hi - 0.1959963984540054).abs() < 1e-13 && (lo + hi).abs() < 1e-15);
        let w = |l| {
            let (a, b) = normal_ci(0.0, 2.0, 50, l).unwrap();
            b - a
        };
        assert!(w(0.5) < w(0.9) && w(0.9) < w(0.99));
        assert!(normal_ci(0.0, -1.0, 10, 0.9).is_err());
        assert!(normal_ci(0.0, 1.0, 10, 1.0).is_err());
    }

    #[test]
    fn ks_examples() {
        let r = 200;
        let q: Vec<f64> = (1..=r).map(|i| normal_quantile((i as f64 - 0.5) / r as f64)).collect();
        let k = ks_to_standard_normal(&q).unwrap();
        assert!(k <= 0.5 / r as f64 + 1e-9, "{k}");
        assert_eq!(ks_to_standard_normal(&[0.0; 25]).unwrap(), 0.5);
        assert!(ks_to_standard_normal(&[0.0; 19]).is_err());
        let z = normal_sample(10_000, 8);
        assert!(ks_to_standard_normal(z.as_slice()).unwrap() < 0.02);
    }

    #[test]
    fn discrete_population_frequencies() {
        let pts = SampleMatrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let pop = DiscretePopulation::new(WeightedCloud::new(pts, vec![0.2, 0.5, 0.3]).unwrap());
        let s = pop.sample(100_000, &mut SeedPolicy::new(1).rng(0));
        for (a, w) in [(0.0, 0.2), (1.0, 0.5), (2.0, 0.3)] {
            let f = s.as_slice().iter().filter(|v| **v == a).count() as f64 / 1e5;
            assert!((f - w).abs() < 0.01);
        }
    }

    #[test]
    fn clt_point_mass_is_degenerate() {
        let stat = PlainWp { p: 2.0 };
        let pm = PointMass(vec![1.0, 1.0]);
        let cfg = CltConfig {
            n: 10,
            reps: 30,
            level: 0.95,
            seed: SeedPolicy::new(1),
            coverage: CoverageMethod::None,
            reference: None,
        };
        let r = clt_experiment(&stat, &pm, Some(&pm), &cfg).unwrap();
        assert!(r.degenerate && r.self_centered);
        assert!(r.standardized.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn clt_sample_mean() {
        let pop = UniformBox { lo: vec![0.0], hi: vec![1.0] };
        let cfg = CltConfig {
            n: 200,
            reps: 300,
            level: 0.95,
            seed: SeedPolicy::new(2),
            coverage: CoverageMethod::Normal,
            reference: Some(ReferenceValue { value: 0.5, provenance: "exact".into() }),
        };
        let r = clt_experiment(&Mean, &pop, None, &cfg).unwrap();
        assert!(r.ks_distance < 0.1, "{}", r.ks_distance);
        let c = r.coverage.unwrap();
        assert!((0.9..=0.98).contains(&c), "{c}");
        assert!((r.mean_plugin_variance().unwrap() - 1.0 / 12.0).abs() < 0.01);
    }

    #[test]
    fn sliced_statistic_variance_path() {
        let mut rng = SeedPolicy::new(3).rng(0);
        let x = UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }.sample(50, &mut rng);
        let y = UniformBox { lo: vec![1.0, 0.0], hi: vec![2.0, 1.0] }.sample(50, &mut rng);
        let dirs = sample_sphere(2, 20, &SeedPolicy::new(4)).unwrap();
        let s = AvgSliced::new(2.0, dirs.clone());
        let (v, var) = s.eval_with_variance(&x, Some(&y)).unwrap();
        assert_eq!(v, s.eval(&x, Some(&y)).unwrap());
        assert!(var.unwrap() > 0.0);
        let s1 = AvgSliced::new(1.0, dirs);
        assert!(s1.eval_with_variance(&x, Some(&y)).unwrap().1.unwrap() > 0.0);
        assert!(s1.eval(&x, None).is_err());
    }
}
