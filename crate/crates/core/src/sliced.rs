//! Average- and max-sliced Wasserstein distances and plug-in estimators of
//! their asymptotic variances.
//!
//! The integral over the sphere is discretized by a caller-supplied set of
//! directions (usually [`crate::measures::sample_sphere`]). Per-direction work
//! runs in parallel; reductions are done in a fixed pairwise order so results do
//! not depend on the thread count.

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::measures::{projected_values, Direction, Discrete1D, SampleMatrix};
use crate::ot1d::{monotone_potentials, order_stats_unchecked, w1_cdf, wp_quantile};

/// Default number of Monte Carlo directions.
pub const DEFAULT_DIRECTIONS: usize = 500;

/// Default number of cells in the `t` grid of the `W₁` sign-integral.
pub const DEFAULT_T_STEPS: usize = 2000;

/// Sum with a fixed pairwise tree; deterministic for a given length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Population variance (divisor n).
pub fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&dev) / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicedEstimate {
    /// Sliced `W_p^p` (mean or max over directions).
    pub value: f64,
    pub per_direction: Vec<(Direction, f64)>,
    pub k: usize,
}

impl SlicedEstimate {
    fn average(per_direction: Vec<(Direction, f64)>) -> Self {
        let vals: Vec<f64> = per_direction.iter().map(|p| p.1).collect();
        let value = pairwise_sum(&vals) / vals.len() as f64;
        SlicedEstimate {
            value,
            k: per_direction.len(),
            per_direction,
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_direction.iter().map(|p| p.1)
    }
}

/// Directions whose value is within `tolerance` of the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgmaxSet {
    pub directions: Vec<Direction>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    /// One-sample term.
    pub v2: f64,
    /// Second term of the two-sample variance, when computed.
    pub w2: Option<f64>,
}

impl VarianceEstimate {
    /// `v2 + w2` (or `v2` alone).
    pub fn total(&self) -> f64 {
        self.v2 + self.w2.unwrap_or(0.0)
    }
}

fn check_inputs(x: &SampleMatrix, y: &SampleMatrix, directions: &[Direction]) -> Result<()> {
    if directions.is_empty() {
        return Err(Error::param("directions", "direction set is empty"));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if let Some(th) = directions.iter().find(|t| t.dim() != x.dim()) {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: th.dim(),
        });
    }
    Ok(())
}

fn sorted_projection(x: &SampleMatrix, theta: &Direction) -> Vec<f64> {
    let mut v: Vec<f64> = x.rows().map(|r| theta.dot(r)).collect();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// `W_p^p` of the projections onto one direction.
fn projected_wp(x: &SampleMatrix, y: &SampleMatrix, theta: &Direction, p: f64) -> f64 {
    let xs = sorted_projection(x, theta);
    let ys = sorted_projection(y, theta);
    if xs.len() == ys.len() {
        order_stats_unchecked(&xs, &ys, p)
    } else {
        let mu = Discrete1D::uniform(xs).expect("finite projections");
        let nu = Discrete1D::uniform(ys).expect("finite projections");
        wp_quantile(&mu, &nu, p).expect("p validated")
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::param("p", format!("order must be ≥ 1, got {p}")));
    }
    Ok(())
}

/// Average over `directions` of `W_p^p` between the projected samples.
/// Equal sample sizes use order statistics, otherwise the quantile formula.
pub fn avg_sliced_wp(
    x: &SampleMatrix,
    y: &SampleMatrix,
    p: f64,
    directions: &[Direction],
) -> Result<SlicedEstimate> {
    check_p(p)?;
    check_inputs(x, y, directions)?;
    let per: Vec<(Direction, f64)> = directions
        .par_iter()
        .map(|th| (th.clone(), projected_wp(x, y, th, p)))
        .collect();
    Ok(SlicedEstimate::average(per))
}

/// Same estimator as [`avg_sliced_wp`] with `p = 1`, evaluated through the
/// CDF representation `∫|F_μ − F_ν| dt` on each direction.
pub fn avg_sliced_w1(
    x: &SampleMatrix,
    y: &SampleMatrix,
    directions: &[Direction],
) -> Result<SlicedEstimate> {
    check_inputs(x, y, directions)?;
    let per: Vec<(Direction, f64)> = directions
        .par_iter()
        .map(|th| {
            let mu = Discrete1D::uniform(sorted_projection(x, th)).expect("finite");
            let nu = Discrete1D::uniform(sorted_projection(y, th)).expect("finite");
            (th.clone(), w1_cdf(&mu, &nu))
        })
        .collect();
    Ok(SlicedEstimate::average(per))
}

/// Local search around the best Monte Carlo direction.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    /// Initial coordinate perturbation.
    pub step: f64,
    /// Step below which the search stops.
    pub min_step: f64,
    /// A sweep improving the objective by less than this halves the step.
    pub tol: f64,
    pub max_evals: usize,
    /// Relative width of the argmax set: `δ = delta_rel · max(1, max value)`.
    pub delta_rel: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            min_step: 1e-7,
            tol: 1e-12,
            max_evals: 2000,
            delta_rel: 1e-6,
        }
    }
}

/// Max-sliced `W_p^p`: maximum over the Monte Carlo directions followed by a
/// greedy coordinate-wise refinement of the best one. Every evaluated
/// direction is kept in `per_direction`.
pub fn max_sliced_wp(
    x: &SampleMatrix,
    y: &SampleMatrix,
    p: f64,
    directions: &[Direction],
    refine: &RefineConfig,
) -> Result<(SlicedEstimate, ArgmaxSet)> {
    check_p(p)?;
    check_inputs(x, y, directions)?;
    let mut per: Vec<(Direction, f64)> = directions
        .par_iter()
        .map(|th| (th.clone(), projected_wp(x, y, th, p)))
        .collect();

    let (mut best_idx, mut best) = (0usize, f64::NEG_INFINITY);
    for (i, (_, v)) in per.iter().enumerate() {
        if *v > best {
            best = *v;
            best_idx = i;
        }
    }

    let d = x.dim();
    if d > 1 {
        let mut theta = per[best_idx].0.components().to_vec();
        let mut step = refine.step;
        let mut evals = 0usize;
        while step >= refine.min_step && evals < refine.max_evals {
            let before = best;
            for j in 0..d {
                for sign in [1.0, -1.0] {
                    let mut cand = theta.clone();
                    cand[j] += sign * step;
                    let Ok(dir) = Direction::normalized(cand) else {
                        continue;
                    };
                    let v = projected_wp(x, y, &dir, p);
                    evals += 1;
                    if v > best {
                        best = v;
                        theta = dir.components().to_vec();
                        per.push((dir, v));
                    }
                }
            }
            if best - before < refine.tol {
                step *= 0.5;
            }
        }
    }

    let tolerance = refine.delta_rel * best.max(1.0);
    let argmax = ArgmaxSet {
        directions: per
            .iter()
            .filter(|(_, v)| *v >= best - tolerance)
            .map(|(t, _)| t.clone())
            .collect(),
        tolerance,
    };
    let est = SlicedEstimate {
        value: best,
        k: per.len(),
        per_direction: per,
    };
    Ok((est, argmax))
}

/// Per-direction potentials mapped back to sample order.
struct DirectionPotentials {
    value: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
}

fn ranks_by_projection(x: &SampleMatrix, theta: &Direction) -> (Vec<f64>, Vec<usize>) {
    let vals: Vec<f64> = x.rows().map(|r| theta.dot(r)).collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let sorted = order.iter().map(|&i| vals[i]).collect();
    (sorted, order)
}

fn direction_potentials(
    x: &SampleMatrix,
    y: &SampleMatrix,
    theta: &Direction,
    p: f64,
) -> DirectionPotentials {
    let (xs, xo) = ranks_by_projection(x, theta);
    let (ys, yo) = ranks_by_projection(y, theta);
    let (phi_sorted, psi_sorted) = monotone_potentials(&xs, &ys, p);
    let mut phi = vec![0.0; xs.len()];
    let mut psi = vec![0.0; ys.len()];
    for (rank, &i) in xo.iter().enumerate() {
        phi[i] = phi_sorted[rank];
    }
    for (rank, &j) in yo.iter().enumerate() {
        psi[j] = psi_sorted[rank];
    }
    DirectionPotentials {
        value: order_stats_unchecked(&xs, &ys, p),
        phi,
        psi,
    }
}

fn average_columns(rows: &[Vec<f64>], len: usize) -> Vec<f64> {
    let k = rows.len() as f64;
    (0..len)
        .map(|i| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            pairwise_sum(&col) / k
        })
        .collect()
}

/// Average-sliced `W_p^p` together with its plug-in variance, sharing one
/// pass over the directions. Requires `p > 1` and equal sample sizes.
///
/// `v2` is the population variance over `i` of the direction-averaged
/// potential `A_i = k⁻¹ Σ_θ φ^θ(θᵀX_i)`; `w2` is the same for `ψ^θ` on `Y`.
pub fn sliced_wp_with_variance(
    x: &SampleMatrix,
    y: &SampleMatrix,
    p: f64,
    directions: &[Direction],
) -> Result<(SlicedEstimate, VarianceEstimate)> {
    if p == 1.0 {
        return Err(Error::param(
            "p",
            "potential-based variance needs p > 1; use variance_v1_sign for p = 1",
        ));
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::param("p", format!("order must be > 1, got {p}")));
    }
    check_inputs(x, y, directions)?;
    if x.n() != y.n() {
        return Err(Error::SizeMismatch {
            left: x.n(),
            right: y.n(),
        });
    }
    let per: Vec<DirectionPotentials> = directions
        .par_iter()
        .map(|th| direction_potentials(x, y, th, p))
        .collect();
    let phis: Vec<Vec<f64>> = per.iter().map(|d| d.phi.clone()).collect();
    let psis: Vec<Vec<f64>> = per.iter().map(|d| d.psi.clone()).collect();
    let a = average_columns(&phis, x.n());
    let b = average_columns(&psis, y.n());
    let est = SlicedEstimate::average(
        directions
            .iter()
            .cloned()
            .zip(per.iter().map(|d| d.value))
            .collect(),
    );
    Ok((
        est,
        VarianceEstimate {
            v2: population_variance(&a),
            w2: Some(population_variance(&b)),
        },
    ))
}

/// Plug-in estimate of `v_p²` (and `w_p²`) for the average-sliced `W_p^p`.
pub fn variance_vp(
    x: &SampleMatrix,
    y: &SampleMatrix,
    p: f64,
    directions: &[Direction],
) -> Result<VarianceEstimate> {
    Ok(sliced_wp_with_variance(x, y, p, directions)?.1)
}

/// Distribution function of a projected reference measure.
pub trait ProjectedCdf: Sync {
    fn cdf(&self, theta: &Direction, t: f64) -> f64;
    /// Interval outside of which the projected CDF is 0 or 1 to working precision.
    fn support(&self, theta: &Direction) -> (f64, f64);
}

/// Isotropic Gaussian `N(mean, sd² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianReference {
    pub mean: Vec<f64>,
    pub sd: f64,
}

impl ProjectedCdf for GaussianReference {
    fn cdf(&self, theta: &Direction, t: f64) -> f64 {
        let m = theta.dot(&self.mean);
        0.5 * erfc(-(t - m) / (self.sd * std::f64::consts::SQRT_2))
    }

    fn support(&self, theta: &Direction) -> (f64, f64) {
        let m = theta.dot(&self.mean);
        (m - 9.0 * self.sd, m + 9.0 * self.sd)
    }
}

/// Reference measure `ν` for the `W₁` sign-integral variance.
#[derive(Clone, Copy)]
pub enum Reference<'a> {
    /// Empirical measure of a second sample (two-sample setting).
    Empirical(&'a SampleMatrix),
    /// A population distribution with known projected CDFs.
    Analytic(&'a dyn ProjectedCdf),
}

/// Midpoint grid over the pooled projected support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TGridConfig {
    pub steps: usize,
}

impl Default for TGridConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_T_STEPS,
        }
    }
}

struct ProjectedSide {
    sorted: Vec<f64>,
    order: Vec<usize>,
}

impl ProjectedSide {
    fn new(x: &SampleMatrix, theta: &Direction) -> Self {
        let (sorted, order) = ranks_by_projection(x, theta);
        Self { sorted, order }
    }

    fn cdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }
}

struct Grid {
    lo: f64,
    h: f64,
    steps: usize,
}

impl Grid {
    fn new(mut lo: f64, mut hi: f64, steps: usize) -> Self {
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        Grid {
            lo,
            h: (hi - lo) / steps as f64,
            steps,
        }
    }

    #[inline]
    fn point(&self, g: usize) -> f64 {
        self.lo + (g as f64 + 0.5) * self.h
    }

    /// Index of the first grid point `≥ v`.
    fn first_at_or_above(&self, v: f64) -> usize {
        let g = ((v - self.lo) / self.h - 0.5).ceil();
        let mut g = g.clamp(0.0, self.steps as f64) as usize;
        while g > 0 && self.point(g - 1) >= v {
            g -= 1;
        }
        while g < self.steps && self.point(g) < v {
            g += 1;
        }
        g
    }
}

struct SignTerms {
    w1: f64,
    h_x: Vec<f64>,
    h_y: Option<Vec<f64>>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sign_terms(
    x: &SampleMatrix,
    reference: Reference<'_>,
    theta: &Direction,
    steps: usize,
) -> SignTerms {
    let xs = ProjectedSide::new(x, theta);
    let ys = match reference {
        Reference::Empirical(y) => Some(ProjectedSide::new(y, theta)),
        Reference::Analytic(_) => None,
    };
    let (mut lo, mut hi) = (xs.sorted[0], xs.sorted[xs.sorted.len() - 1]);
    match (&ys, reference) {
        (Some(s), _) => {
            lo = lo.min(s.sorted[0]);
            hi = hi.max(s.sorted[s.sorted.len() - 1]);
        }
        (None, Reference::Analytic(r)) => {
            let (a, b) = r.support(theta);
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (None, Reference::Empirical(_)) => unreachable!(),
    }
    let grid = Grid::new(lo, hi, steps);

    let mut s = vec![0.0; steps];
    let mut fx = vec![0.0; steps];
    let mut fy = vec![0.0; steps];
    let mut w1 = 0.0;
    for g in 0..steps {
        let t = grid.point(g);
        fx[g] = xs.cdf(t);
        fy[g] = match (&ys, reference) {
            (Some(side), _) => side.cdf(t),
            (None, Reference::Analytic(r)) => r.cdf(theta, t),
            _ => unreachable!(),
        };
        s[g] = sign(fx[g] - fy[g]);
        w1 += (fx[g] - fy[g]).abs() * grid.h;
    }
    // suffix[g] = h Σ_{g' ≥ g} s_{g'}
    let mut suffix = vec![0.0; steps + 1];
    for g in (0..steps).rev() {
        suffix[g] = suffix[g + 1] + grid.h * s[g];
    }
    let centre_x: f64 = (0..steps).map(|g| grid.h * s[g] * fx[g]).sum();
    let influence = |side: &ProjectedSide, centre: f64| {
        let mut out = vec![0.0; side.sorted.len()];
        for (rank, &i) in side.order.iter().enumerate() {
            out[i] = suffix[grid.first_at_or_above(side.sorted[rank])] - centre;
        }
        out
    };
    let h_x = influence(&xs, centre_x);
    let h_y = ys.as_ref().map(|side| {
        let centre_y: f64 = (0..steps).map(|g| grid.h * s[g] * fy[g]).sum();
        influence(side, centre_y)
    });
    SignTerms { w1, h_x, h_y }
}

fn run_sign_terms(
    x: &SampleMatrix,
    reference: Reference<'_>,
    directions: &[Direction],
    grid: &TGridConfig,
) -> Result<Vec<SignTerms>> {
    if grid.steps <= 1 {
        return Err(Error::param("t_grid", "grid needs at least two points"));
    }
    if directions.is_empty() {
        return Err(Error::param("directions", "direction set is empty"));
    }
    if let Reference::Empirical(y) = reference {
        check_inputs(x, y, directions)?;
    } else if let Some(th) = directions.iter().find(|t| t.dim() != x.dim()) {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: th.dim(),
        });
    }
    Ok(directions
        .par_iter()
        .map(|th| sign_terms(x, reference, th, grid.steps))
        .collect())
}

/// Plug-in `v₁²` for the average-sliced `W₁` from the sign-integral
/// influence function: for each sample,
/// `h_i = k⁻¹ Σ_θ Σ_t h · sign(F̂_μ − F_ν)(t;θ) · (1{θᵀX_i ≤ t} − F̂_μ(t;θ))`,
/// and `v2` is the population variance of `{h_i}`. With an empirical
/// reference the matching `w2` is computed from the second sample.
/// `sign(0) = 0`.
pub fn variance_v1_sign(
    x: &SampleMatrix,
    reference: Reference<'_>,
    directions: &[Direction],
    grid: &TGridConfig,
) -> Result<VarianceEstimate> {
    let terms = run_sign_terms(x, reference, directions, grid)?;
    let hx: Vec<Vec<f64>> = terms.iter().map(|t| t.h_x.clone()).collect();
    let v2 = population_variance(&average_columns(&hx, x.n()));
    let w2 = match reference {
        Reference::Empirical(y) => {
            let hy: Vec<Vec<f64>> = terms
                .iter()
                .map(|t| t.h_y.clone().expect("empirical reference"))
                .collect();
            Some(population_variance(&average_columns(&hy, y.n())))
        }
        Reference::Analytic(_) => None,
    };
    Ok(VarianceEstimate { v2, w2 })
}

/// Average-sliced `W₁` between `μ̂` and a reference, integrating
/// `|F̂_μ − F_ν|` on the midpoint grid used by [`variance_v1_sign`].
pub fn avg_sliced_w1_reference(
    x: &SampleMatrix,
    reference: Reference<'_>,
    directions: &[Direction],
    grid: &TGridConfig,
) -> Result<SlicedEstimate> {
    let terms = run_sign_terms(x, reference, directions, grid)?;
    Ok(SlicedEstimate::average(
        directions
            .iter()
            .cloned()
            .zip(terms.iter().map(|t| t.w1))
            .collect(),
    ))
}

/// Projected sample values, re-exported for callers assembling their own
/// per-direction statistics.
pub fn projections(x: &SampleMatrix, theta: &Direction) -> Result<Vec<f64>> {
    projected_values(x, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{sample_sphere, SeedPolicy};
    use rand::Rng;

    fn col(v: &[f64]) -> SampleMatrix {
        SampleMatrix::from_column(v).unwrap()
    }

    fn pm() -> Vec<Direction> {
        vec![
            Direction::new(vec![1.0]).unwrap(),
            Direction::new(vec![-1.0]).unwrap(),
        ]
    }

    fn cloud(n: usize, d: usize, seed: u64) -> SampleMatrix {
        let mut rng = SeedPolicy::new(seed).rng(0);
        let v: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
        SampleMatrix::new(v, n, d).unwrap()
    }

    #[test]
    fn avg_examples() {
        let x = cloud(20, 3, 1);
        let dirs = sample_sphere(3, 16, &SeedPolicy::new(2)).unwrap();
        assert_eq!(avg_sliced_wp(&x, &x, 2.0, &dirs).unwrap().value, 0.0);
        let e = avg_sliced_wp(&col(&[0.0]), &col(&[2.0]), 1.0, &pm()).unwrap();
        assert_eq!(e.value, 2.0);
        assert!(avg_sliced_wp(&x, &x, 2.0, &[]).is_err());
        assert!(avg_sliced_wp(&x, &col(&[1.0]), 2.0, &dirs).is_err());
    }

    #[test]
    fn avg_point_masses_in_plane() {
        // E_σ|θ₁| on the circle is 2/π
        let a = 1.7;
        let x = SampleMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let y = SampleMatrix::from_rows(&[[a, 0.0]]).unwrap();
        let dirs = sample_sphere(2, 200_000, &SeedPolicy::new(9)).unwrap();
        let e = avg_sliced_wp(&x, &y, 1.0, &dirs).unwrap();
        // quadrature of |cos t| over [0, 2π)
        let m = 100_000;
        let quad: f64 = (0..m)
            .map(|i| ((i as f64 + 0.5) * std::f64::consts::TAU / m as f64).cos().abs())
            .sum::<f64>()
            / m as f64;
        assert!((quad - 2.0 / std::f64::consts::PI).abs() < 1e-8);
        assert!((e.value - a * quad).abs() < 0.01, "{} vs {}", e.value, a * quad);
    }

    #[test]
    fn unequal_sizes_use_quantile_path() {
        let x = col(&[0.0, 1.0]);
        let y = col(&[2.0]);
        let e = avg_sliced_wp(&x, &y, 1.0, &pm()).unwrap();
        assert!((e.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn w1_cdf_path_agrees() {
        let x = cloud(30, 2, 3);
        let y = cloud(30, 2, 4).map(|v| v * 1.5 + 0.2);
        let dirs = sample_sphere(2, 50, &SeedPolicy::new(5)).unwrap();
        let a = avg_sliced_w1(&x, &y, &dirs).unwrap().value;
        let b = avg_sliced_wp(&x, &y, 1.0, &dirs).unwrap().value;
        assert!((a - b).abs() < 1e-9);
        assert_eq!(avg_sliced_w1(&x, &x, &dirs).unwrap().value, 0.0);
        assert_eq!(
            avg_sliced_w1(&col(&[0.0]), &col(&[2.0]), &pm()).unwrap().value,
            2.0
        );
    }

    #[test]
    fn max_examples() {
        let x = cloud(15, 2, 6);
        let dirs = sample_sphere(2, 20, &SeedPolicy::new(7)).unwrap();
        let (e, arg) = max_sliced_wp(&x, &x, 2.0, &dirs, &RefineConfig::default()).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(arg.directions.len(), e.per_direction.len());

        let a = SampleMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = SampleMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let (e, arg) = max_sliced_wp(&a, &b, 2.0, &dirs, &RefineConfig::default()).unwrap();
        assert!((e.value - 25.0).abs() < 1e-6, "{}", e.value);
        let th = &arg.directions[arg.directions.len() - 1];
        assert!((th.dot(&[0.6, 0.8]).abs() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn max_shifted_clouds_against_dense_grid() {
        let x = cloud(200, 2, 8);
        let y = x.map(|v| v).select(&(0..200).collect::<Vec<_>>());
        let rows: Vec<[f64; 2]> = y.rows().map(|r| [r[0] + 1.0, r[1]]).collect();
        let y = SampleMatrix::from_rows(&rows).unwrap();
        let grid: Vec<Direction> = (0..3600)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 3600.0;
                Direction::normalized(vec![t.cos(), t.sin()]).unwrap()
            })
            .collect();
        let oracle = grid
            .iter()
            .map(|th| projected_wp(&x, &y, th, 2.0))
            .fold(f64::NEG_INFINITY, f64::max);
        let dirs = sample_sphere(2, 50, &SeedPolicy::new(1)).unwrap();
        let (e, arg) = max_sliced_wp(&x, &y, 2.0, &dirs, &RefineConfig::default()).unwrap();
        assert!((oracle - 1.0).abs() < 1e-6);
        assert!(e.value >= oracle - 1e-6, "{} vs {}", e.value, oracle);
        assert!((e.value - 1.0).abs() < 1e-6);
        let th = arg.directions.last().unwrap();
        assert!(th.components()[0].abs() > 0.999);
    }

    #[test]
    fn max_dominates_average() {
        let x = cloud(40, 3, 10);
        let y = cloud(40, 3, 11).map(|v| v * 2.0);
        let dirs = sample_sphere(3, 30, &SeedPolicy::new(12)).unwrap();
        let avg = avg_sliced_wp(&x, &y, 2.0, &dirs).unwrap();
        let (mx, _) = max_sliced_wp(&x, &y, 2.0, &dirs, &RefineConfig::default()).unwrap();
        assert!(mx.value >= avg.value);
        for v in avg.values() {
            assert!(mx.value >= v);
        }
    }

    #[test]
    fn rotation_invariance() {
        let x = cloud(25, 2, 13);
        let y = cloud(25, 2, 14).map(|v| v + 0.3);
        let dirs = sample_sphere(2, 40, &SeedPolicy::new(15)).unwrap();
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let rot = |m: &SampleMatrix| {
            let rows: Vec<[f64; 2]> = m
                .rows()
                .map(|r| [c * r[0] - s * r[1], s * r[0] + c * r[1]])
                .collect();
            SampleMatrix::from_rows(&rows).unwrap()
        };
        let rdirs: Vec<Direction> = dirs
            .iter()
            .map(|t| {
                let r = t.components();
                Direction::normalized(vec![c * r[0] - s * r[1], s * r[0] + c * r[1]]).unwrap()
            })
            .collect();
        let a = avg_sliced_wp(&x, &y, 2.0, &dirs).unwrap().value;
        let b = avg_sliced_wp(&rot(&x), &rot(&y), 2.0, &rdirs).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn vp_hand_example() {
        let x = col(&[0.0, 1.0]);
        let y = col(&[5.0, 5.0]);
        let v = variance_vp(&x, &y, 2.0, &pm()).unwrap();
        assert!((v.v2 - 20.25).abs() < 1e-12, "{}", v.v2);
        assert!(matches!(
            variance_vp(&x, &y, 1.0, &pm()),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn vp_degenerate_and_shift_invariant() {
        let x = col(&[2.0, 2.0]);
        let y = col(&[0.0, 3.0]);
        assert_eq!(variance_vp(&x, &y, 2.0, &pm()).unwrap().v2, 0.0);

        // per-direction constant shifts of φ leave v2 unchanged
        let x = cloud(50, 2, 20);
        let y = cloud(50, 2, 21).map(|v| v + 0.5);
        let dirs = sample_sphere(2, 10, &SeedPolicy::new(22)).unwrap();
        let per: Vec<DirectionPotentials> = dirs
            .iter()
            .map(|th| direction_potentials(&x, &y, th, 2.0))
            .collect();
        let base: Vec<Vec<f64>> = per.iter().map(|d| d.phi.clone()).collect();
        let shifted: Vec<Vec<f64>> = per
            .iter()
            .enumerate()
            .map(|(k, d)| d.phi.iter().map(|v| v + 3.0 * k as f64 - 7.0).collect())
            .collect();
        let a = population_variance(&average_columns(&base, 50));
        let b = population_variance(&average_columns(&shifted, 50));
        assert!((a - b).abs() < 1e-10);
        assert!((variance_vp(&x, &y, 2.0, &dirs).unwrap().v2 - a).abs() < 1e-12);
    }

    #[test]
    fn v1_point_mass_is_zero() {
        let x = col(&[1.0, 1.0, 1.0]);
        let y = col(&[1.0, 1.0, 1.0]);
        let v = variance_v1_sign(&x, Reference::Empirical(&y), &pm(), &TGridConfig::default())
            .unwrap();
        assert_eq!(v.v2, 0.0);
        assert!(variance_v1_sign(&x, Reference::Empirical(&y), &pm(), &TGridConfig { steps: 1 })
            .is_err());
    }

    #[test]
    fn v1_matches_direct_summation() {
        // 3-atom μ̂ far right of ν: direct O(nG) evaluation of h_i
        let x = col(&[10.0, 10.5, 12.0]);
        let y = col(&[0.0, 0.2, 1.0]);
        let dirs = vec![Direction::new(vec![1.0]).unwrap()];
        let steps = 400;
        let v = variance_v1_sign(&x, Reference::Empirical(&y), &dirs, &TGridConfig { steps })
            .unwrap();

        let (lo, hi) = (0.0, 12.0);
        let h = (hi - lo) / steps as f64;
        let f = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
        let xs = [10.0, 10.5, 12.0];
        let ys = [0.0, 0.2, 1.0];
        let hi_vals: Vec<f64> = xs
            .iter()
            .map(|&xi| {
                (0..steps)
                    .map(|g| {
                        let t = lo + (g as f64 + 0.5) * h;
                        let s = sign(f(&xs, t) - f(&ys, t));
                        h * s * (if xi <= t { 1.0 } else { 0.0 } - f(&xs, t))
                    })
                    .sum::<f64>()
            })
            .collect();
        assert!((v.v2 - population_variance(&hi_vals)).abs() < 1e-10);
        // sign ≡ −1 where the CDFs differ: matches −(1{X ≤ t} − F̂) integrated, i.e. X_i − mean
        let classical: Vec<f64> = xs.iter().map(|&xi| xi - 32.5 / 3.0).collect();
        assert!((v.v2 - population_variance(&classical)).abs() < 0.05);
    }

    #[test]
    fn analytic_reference_grid_w1() {
        // N(0,1) sample vs N(1,1) reference in d=1: W₁ ≈ 1
        let mut rng = SeedPolicy::new(30).rng(0);
        let v: Vec<f64> = (0..4000)
            .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let x = col(&v);
        let r = GaussianReference {
            mean: vec![1.0],
            sd: 1.0,
        };
        let dirs = vec![Direction::new(vec![1.0]).unwrap()];
        let e = avg_sliced_w1_reference(&x, Reference::Analytic(&r), &dirs, &TGridConfig::default())
            .unwrap();
        assert!((e.value - 1.0).abs() < 0.08, "{}", e.value);
        // one-sample W₁ influence with sign ≡ +1 is −X_i: variance ≈ 1
        let var = variance_v1_sign(&x, Reference::Analytic(&r), &dirs, &TGridConfig::default())
            .unwrap();
        assert!((var.v2 - 1.0).abs() < 0.1, "{}", var.v2);
        assert!(var.w2.is_none());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let x = cloud(100, 3, 40);
        let y = cloud(100, 3, 41).map(|v| v * 1.2);
        let dirs = sample_sphere(3, 64, &SeedPolicy::new(42)).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sliced_wp_with_variance(&x, &y, 2.0, &dirs).unwrap())
        };
        let (a, va) = run(1);
        let (b, vb) = run(3);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(va.v2.to_bits(), vb.v2.to_bits());
    }
}
