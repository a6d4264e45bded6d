//! Smooth `W_p` with a compactly supported mollifier kernel.
//!
//! The kernel is `χ_σ(x) = σ^{-d} χ(x/σ)` with
//! `χ(x) = C_χ⁻¹ exp(−1/(1 − ‖x‖²))` on the open unit ball. Smooth `W_p`
//! between two empirical measures is estimated by perturbing every point with
//! an independent kernel draw and solving the resulting assignment problem.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::measures::{Discrete1D, SampleMatrix, SeedPolicy};
use crate::ot_nd::{exact_wp, exact_wp_with_plan};
use crate::sliced::pairwise_sum;

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Unnormalized radial profile `exp(−1/(1 − r²))`, zero for `r ≥ 1`.
#[inline]
fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// `∫₀¹ r^k exp(−1/(1 − r²)) dr`.
fn radial_integral(k: f64, tol: f64) -> f64 {
    integrate(&|r: f64| if r > 0.0 { r.powf(k) } else if k == 0.0 { 1.0 } else { 0.0 } * bump(r), 0.0, 1.0, tol)
}

/// Surface area of the unit sphere `𝕊^{d−1}`; equals 2 for `d = 1`.
fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// The mollifier `χ_σ` in dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierKernel {
    sigma: f64,
    d: usize,
    /// `C_χ = ∫ exp(−1/(1−‖x‖²)) dx` over the unit ball.
    normalizer: f64,
    /// `∫₀¹ r^{d−1} exp(−1/(1−r²)) dr`, cached for moments.
    radial_base: f64,
}

impl MollifierKernel {
    pub fn new(sigma: f64, d: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", format!("bandwidth must be > 0, got {sigma}")));
        }
        if d == 0 {
            return Err(Error::param("d", "dimension must be ≥ 1"));
        }
        let tol = if d == 1 { 1e-12 } else { 1e-10 };
        let radial_base = radial_integral(d as f64 - 1.0, tol);
        Ok(Self {
            sigma,
            d,
            normalizer: sphere_area(d) * radial_base,
            radial_base,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `C_χ` for the unit-bandwidth kernel.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Density `χ_σ(x)`; exactly zero for `‖x‖ ≥ σ`.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt() / self.sigma;
        bump(r) / (self.normalizer * self.sigma.powi(self.d as i32))
    }

    /// Largest value of the density (attained at the origin).
    pub fn max_pdf(&self) -> f64 {
        (-1.0f64).exp() / (self.normalizer * self.sigma.powi(self.d as i32))
    }

    /// `E‖Z‖^p` for `Z ~ η₁` (unit bandwidth), by radial quadrature.
    pub fn unit_moment(&self, p: f64) -> f64 {
        radial_integral(self.d as f64 - 1.0 + p, 1e-12) / self.radial_base
    }

    /// `2σ (E_{η₁}‖Z‖^p)^{1/p}`: the gap in the stability sandwich.
    pub fn stability_gap(&self, p: f64) -> f64 {
        2.0 * self.sigma * self.unit_moment(p).powf(1.0 / p)
    }

    /// One draw by rejection from the uniform law on `B(0, σ)`, written to `out`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.d;
        loop {
            if d == 1 {
                out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            } else {
                let mut norm2 = 0.0;
                while norm2 < 1e-300 {
                    norm2 = 0.0;
                    for o in out.iter_mut() {
                        *o = StandardNormal.sample(rng);
                        norm2 += *o * *o;
                    }
                }
                let norm = norm2.sqrt();
                out.iter_mut().for_each(|o| *o /= norm);
            }
            let r = rng.random::<f64>().powf(1.0 / d as f64);
            // accept with probability pdf / max pdf
            let accept = (1.0 - 1.0 / (1.0 - r * r)).exp();
            if r < 1.0 && rng.random::<f64>() < accept {
                out.iter_mut().for_each(|o| *o *= r * self.sigma);
                return;
            }
        }
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<f64> {
        let mut buf = vec![0.0; m * self.d];
        for chunk in buf.chunks_exact_mut(self.d) {
            self.draw(rng, chunk);
        }
        buf
    }
}

/// `m` i.i.d. draws from `η_σ`.
pub fn sample_kernel(kernel: &MollifierKernel, m: usize, seed: &SeedPolicy) -> Result<SampleMatrix> {
    if m == 0 {
        return Err(Error::param("m", "count must be ≥ 1"));
    }
    let mut rng = seed.rng(0);
    SampleMatrix::new(kernel.noise(&mut rng, m), m, kernel.dim())
}

/// How kernel noise is paired between the two clouds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseCoupling {
    /// Each point of `X` and `Y` gets its own independent draw.
    Independent,
    /// The noise added to `x_i` is also added to `y_{π(i)}`, where `π` is the
    /// optimal matching of the unsmoothed clouds.
    #[default]
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConfig {
    pub p: f64,
    pub reps: usize,
    pub seed: SeedPolicy,
    pub coupling: NoiseCoupling,
}

impl SmoothConfig {
    pub fn new(p: f64, reps: usize, seed: u64) -> Self {
        Self {
            p,
            reps,
            seed: SeedPolicy::new(seed),
            coupling: NoiseCoupling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothEstimate {
    /// Mean over repetitions of `W_p` (not `W_p^p`).
    pub value: f64,
    /// `W_p` for each noise repetition.
    pub rep_values: Vec<f64>,
    /// Sample standard deviation of `rep_values` (0 when `reps = 1`).
    pub rep_sd: f64,
}

impl SmoothEstimate {
    /// `3 · sd / √r`.
    pub fn mc_error(&self) -> f64 {
        3.0 * self.rep_sd / (self.rep_values.len() as f64).sqrt()
    }
}

/// Estimates `W_p^{(σ)}(μ̂, ν̂)` by kernel-noise injection and exact assignment,
/// averaging `W_p` over `config.reps` noise draws.
pub fn smooth_wp(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kernel: &MollifierKernel,
    config: &SmoothConfig,
) -> Result<SmoothEstimate> {
    let p = config.p;
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::param("p", format!("order must be ≥ 1, got {p}")));
    }
    if config.reps == 0 {
        return Err(Error::param("reps", "need at least one noise repetition"));
    }
    if x.dim() != kernel.dim() || y.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: if x.dim() != kernel.dim() { x.dim() } else { y.dim() },
        });
    }
    if x.n() != y.n() {
        return Err(Error::SizeMismatch {
            left: x.n(),
            right: y.n(),
        });
    }
    let plan = match config.coupling {
        NoiseCoupling::Shared => Some(exact_wp_with_plan(x, y, p)?.perm),
        NoiseCoupling::Independent => None,
    };
    let (n, d) = (x.n(), x.dim());
    let rep_values = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.seed.rng(r as u64);
            let xi = kernel.noise(&mut rng, n);
            let zeta = match &plan {
                Some(perm) => {
                    let mut z = vec![0.0; n * d];
                    for (i, &j) in perm.iter().enumerate() {
                        z[j * d..(j + 1) * d].copy_from_slice(&xi[i * d..(i + 1) * d]);
                    }
                    z
                }
                None => kernel.noise(&mut rng, n),
            };
            let v = exact_wp(&x.perturbed(&xi), &y.perturbed(&zeta), p)?;
            Ok(v.powf(1.0 / p))
        })
        .collect::<Result<Vec<f64>>>()?;
    let r = rep_values.len() as f64;
    let value = pairwise_sum(&rep_values) / r;
    let rep_sd = if rep_values.len() > 1 {
        let dev: Vec<f64> = rep_values.iter().map(|v| (v - value).powi(2)).collect();
        (pairwise_sum(&dev) / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SmoothEstimate {
        value,
        rep_values,
        rep_sd,
    })
}

/// Closed interval `[center − radius, center + radius]` on the line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball1D {
    pub center: f64,
    pub radius: f64,
}

impl Ball1D {
    pub fn contains(&self, t: f64) -> bool {
        (t - self.center).abs() <= self.radius
    }
}

/// Conditional measure `μ(· | A)` and the mass `μ(A)`.
pub fn truncate(m: &Discrete1D, ball: Ball1D) -> Result<(Discrete1D, f64)> {
    let (atoms, weights): (Vec<f64>, Vec<f64>) = m
        .atoms()
        .iter()
        .zip(m.weights())
        .filter(|(a, _)| ball.contains(**a))
        .map(|(a, w)| (*a, *w))
        .unzip();
    let mass: f64 = weights.iter().sum();
    if atoms.is_empty() || !(mass > 0.0) {
        return Err(Error::InvalidInput("truncation set has zero mass".into()));
    }
    let mut weights: Vec<f64> = weights.iter().map(|w| w / mass).collect();
    // absorb the rounding residue so the result passes the unit-mass check
    let residue = 1.0 - weights.iter().sum::<f64>();
    let last = weights.len() - 1;
    weights[last] += residue;
    Ok((Discrete1D::new(atoms, weights)?, mass.min(1.0)))
}

/// Rows of `x` inside the closed ball `B(center, radius)` and their fraction.
pub fn truncate_samples(x: &SampleMatrix, center: &[f64], radius: f64) -> Result<(SampleMatrix, f64)> {
    if center.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: center.len(),
        });
    }
    let keep: Vec<usize> = (0..x.n())
        .filter(|&i| {
            let r2: f64 = x.row(i).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            r2 <= radius * radius
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput("truncation set has zero mass".into()));
    }
    let mass = keep.len() as f64 / x.n() as f64;
    Ok((x.select(&keep), mass))
}

/// Upper bound `(1/μ(A) − 1) · diam^p` on `W_p^p(μ|_A, μ)` for compactly
/// supported `μ`.
pub fn truncation_bound(p: f64, mass: f64, diam: f64) -> Result<f64> {
    if !(mass > 0.0) || mass > 1.0 {
        return Err(Error::param("mass", format!("must lie in (0, 1], got {mass}")));
    }
    if !(diam >= 0.0) {
        return Err(Error::param("diam", format!("must be ≥ 0, got {diam}")));
    }
    if !(p >= 1.0) {
        return Err(Error::param("p", format!("order must be ≥ 1, got {p}")));
    }
    Ok((1.0 / mass - 1.0) * diam.powf(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot1d::wp_quantile;
    use rand::Rng;

    #[test]
    fn normalizer_d1() {
        let k = MollifierKernel::new(1.0, 1).unwrap();
        // independent check: composite midpoint rule on [-1, 1]
        let m = 2_000_000;
        let h = 2.0 / m as f64;
        let mid: f64 = (0..m).map(|i| bump((-1.0 + (i as f64 + 0.5) * h).abs()) * h).sum();
        assert!((k.normalizer() - mid).abs() < 1e-9);
        assert!((k.normalizer() - 0.4440).abs() < 1e-4);
        assert!((k.pdf(&[0.0]) - (-1.0f64).exp() / mid).abs() < 1e-8);
    }

    #[test]
    fn pdf_support_and_symmetry() {
        let k = MollifierKernel::new(0.7, 3).unwrap();
        assert_eq!(k.pdf(&[0.7, 0.0, 0.0]), 0.0);
        assert_eq!(k.pdf(&[0.0, 0.0, -0.9]), 0.0);
        let mut rng = SeedPolicy::new(1).rng(0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            assert_eq!(k.pdf(&x), k.pdf(&neg));
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for d in 1..=4 {
            let k = MollifierKernel::new(1.0, d).unwrap();
            // radial integration of the normalized density
            let total = sphere_area(d)
                * integrate(
                    &|r| r.powi(d as i32 - 1) * k.pdf(&{
                        let mut v = vec![0.0; d];
                        v[0] = r;
                        v
                    }),
                    0.0,
                    1.0,
                    1e-12,
                );
            assert!((total - 1.0).abs() < 1e-6, "d={d}: {total}");
        }
        // d = 2 Cartesian check on a grid
        let k = MollifierKernel::new(0.5, 2).unwrap();
        let m = 1000;
        let h = 1.0 / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = -0.5 + (i as f64 + 0.5) * h;
                let y = -0.5 + (j as f64 + 0.5) * h;
                s += k.pdf(&[x, y]) * h * h;
            }
        }
        assert!((s - 1.0).abs() < 1e-4, "{s}");
    }

    #[test]
    fn samples_inside_support_with_right_moments() {
        let k = MollifierKernel::new(1.0, 1).unwrap();
        let m = 1_000_000;
        let s = sample_kernel(&k, m, &SeedPolicy::new(3)).unwrap();
        assert!(s.as_slice().iter().all(|v| v.abs() < 1.0));
        let mean = s.as_slice().iter().sum::<f64>() / m as f64;
        let m2 = s.as_slice().iter().map(|v| v * v).sum::<f64>() / m as f64;
        let sd = m2.sqrt();
        assert!(mean.abs() < 3.0 * sd / (m as f64).sqrt(), "mean {mean}");
        // midpoint-rule oracle for ∫ t² χ(t) dt
        let g = 2_000_000;
        let h = 2.0 / g as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..g {
            let t = -1.0 + (i as f64 + 0.5) * h;
            num += t * t * bump(t.abs());
            den += bump(t.abs());
        }
        let oracle = num / den;
        assert!((k.unit_moment(2.0) - oracle).abs() < 1e-9, "{oracle}");
        assert!((m2 / oracle - 1.0).abs() < 0.01, "{m2} vs {oracle}");

        let k = MollifierKernel::new(0.3, 3).unwrap();
        let s = sample_kernel(&k, 5000, &SeedPolicy::new(4)).unwrap();
        assert!(s.rows().all(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.3));
    }

    fn cloud(n: usize, seed: u64, shift: f64) -> SampleMatrix {
        let mut rng = SeedPolicy::new(seed).rng(0);
        let v: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>() + shift).collect();
        SampleMatrix::new(v, n, 2).unwrap()
    }

    #[test]
    fn smooth_identical_clouds_shared_noise() {
        let x = cloud(30, 1, 0.0);
        let k = MollifierKernel::new(0.5, 2).unwrap();
        let cfg = SmoothConfig::new(2.0, 1, 9);
        let e = smooth_wp(&x, &x, &k, &cfg).unwrap();
        assert!(e.value < 1e-12, "{}", e.value);
    }

    #[test]
    fn smooth_tends_to_exact_as_sigma_vanishes() {
        let x = cloud(40, 2, 0.0);
        let y = cloud(40, 3, 0.4);
        let k = MollifierKernel::new(1e-6, 2).unwrap();
        let e = smooth_wp(&x, &y, &k, &SmoothConfig::new(2.0, 3, 5)).unwrap();
        let w = exact_wp(&x, &y, 2.0).unwrap().sqrt();
        assert!((e.value - w).abs() < 1e-5);
    }

    #[test]
    fn sandwich_on_fixed_instance() {
        let x = cloud(100, 4, 0.0);
        let y = cloud(100, 5, 0.3);
        let w = exact_wp(&x, &y, 2.0).unwrap().sqrt();
        for coupling in [NoiseCoupling::Shared, NoiseCoupling::Independent] {
            let k = MollifierKernel::new(0.5, 2).unwrap();
            let mut cfg = SmoothConfig::new(2.0, 20, 6);
            cfg.coupling = coupling;
            let e = smooth_wp(&x, &y, &k, &cfg).unwrap();
            let eps = e.mc_error();
            assert!(w <= e.value + k.stability_gap(2.0) + eps);
            if coupling == NoiseCoupling::Shared {
                assert!(e.value <= w + eps, "{} vs {w}", e.value);
            }
        }
    }

    #[test]
    fn smooth_symmetric_and_deterministic() {
        let x = cloud(20, 7, 0.0);
        let y = cloud(20, 8, 1.0);
        let k = MollifierKernel::new(0.25, 2).unwrap();
        let mut cfg = SmoothConfig::new(1.0, 4, 11);
        cfg.coupling = NoiseCoupling::Independent;
        let a = smooth_wp(&x, &y, &k, &cfg).unwrap();
        let b = smooth_wp(&x, &y, &k, &cfg).unwrap();
        assert_eq!(a, b);
        // swapping the clouds swaps which side gets which draw; same law
        let c = smooth_wp(&y, &x, &k, &cfg).unwrap();
        assert!((a.value - c.value).abs() < 0.05);
    }

    #[test]
    fn shared_noise_triangle_inequality() {
        // a fixed noise realization added to all three clouds
        let k = MollifierKernel::new(0.3, 2).unwrap();
        let noise = sample_kernel(&k, 25, &SeedPolicy::new(12)).unwrap();
        let clouds: Vec<SampleMatrix> = (0..3)
            .map(|s| cloud(25, 20 + s, s as f64 * 0.2).perturbed(noise.as_slice()))
            .collect();
        let w = |a: &SampleMatrix, b: &SampleMatrix| exact_wp(a, b, 2.0).unwrap().sqrt();
        assert!(w(&clouds[0], &clouds[2]) <= w(&clouds[0], &clouds[1]) + w(&clouds[1], &clouds[2]) + 1e-12);
    }

    #[test]
    fn truncation_examples() {
        let m = Discrete1D::uniform(vec![0.0, 1.0, 2.0]).unwrap();
        let (t, mass) = truncate(&m, Ball1D { center: 1.0, radius: 5.0 }).unwrap();
        assert_eq!(t, m);
        assert_eq!(mass, 1.0);
        let (t, mass) = truncate(&m, Ball1D { center: 0.5, radius: 0.5 }).unwrap();
        assert_eq!(t.atoms(), &[0.0, 1.0]);
        assert!((t.weights()[0] - 0.5).abs() < 1e-15);
        assert!((mass - 2.0 / 3.0).abs() < 1e-15);
        assert!(truncate(&m, Ball1D { center: 10.0, radius: 1.0 }).is_err());
    }

    #[test]
    fn truncation_bound_examples() {
        assert_eq!(truncation_bound(2.0, 1.0, 3.0).unwrap(), 0.0);
        assert_eq!(truncation_bound(2.0, 0.5, 1.0).unwrap(), 1.0);
        assert!(truncation_bound(2.0, 0.0, 1.0).is_err());
        assert!(truncation_bound(2.0, 0.3, 1.0).unwrap() > truncation_bound(2.0, 0.6, 1.0).unwrap());
        assert!(truncation_bound(2.0, 0.3, 2.0).unwrap() > truncation_bound(2.0, 0.3, 1.0).unwrap());
    }

    #[test]
    fn truncation_bound_holds_on_random_measures() {
        let mut rng = SeedPolicy::new(77).rng(0);
        for _ in 0..50 {
            let k = rng.random_range(2..12);
            let atoms: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let r = 1.0 - w.iter().sum::<f64>();
            w[0] += r;
            let m = Discrete1D::from_unsorted(atoms, w).unwrap();
            let ball = Ball1D { center: rng.random_range(-1.0..1.0), radius: rng.random_range(0.5..2.0) };
            let Ok((t, mass)) = truncate(&m, ball) else { continue };
            let s: f64 = t.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            let (lo, hi) = m.support();
            let gap = wp_quantile(&t, &m, 2.0).unwrap();
            assert!(gap <= truncation_bound(2.0, mass, hi - lo).unwrap() + 1e-12);
        }
    }

    #[test]
    fn truncate_cloud() {
        let x = SampleMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 3.0]]).unwrap();
        let (t, mass) = truncate_samples(&x, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(t.n(), 2);
        assert!((mass - 2.0 / 3.0).abs() < 1e-15);
    }
}
