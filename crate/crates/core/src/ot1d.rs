//! Exact optimal transport on the real line.
//!
//! All transport values are returned as `W_p^p`; take the p-th root at the
//! reporting layer.

use crate::error::{Error, Result};
use crate::measures::Discrete1D;

#[inline]
pub(crate) fn pow_p(a: f64, p: f64) -> f64 {
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        a.powf(p)
    }
}

/// `|x − y|^p`.
#[inline]
pub fn cost_1d(x: f64, y: f64, p: f64) -> f64 {
    pow_p((x - y).abs(), p)
}

fn check_order(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::param("p", format!("order must be ≥ 1, got {p}")));
    }
    Ok(())
}

fn check_sorted(name: &'static str, v: &[f64]) -> Result<()> {
    if v.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param(name, "samples must be sorted nondecreasing"));
    }
    Ok(())
}

/// `∫₀¹ |F_μ⁻¹(τ) − F_ν⁻¹(τ)|^p dτ`, integrated exactly over the merged grid
/// of both cumulative-weight sequences.
pub fn wp_quantile(mu: &Discrete1D, nu: &Discrete1D, p: f64) -> Result<f64> {
    check_order(p)?;
    let a = mu.cumulative_weights();
    let b = nu.cumulative_weights();
    let (xs, ys) = (mu.atoms(), nu.atoms());
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next = a[i].min(b[j]);
        if next > prev {
            total += cost_1d(xs[i], ys[j], p) * (next - prev);
            prev = next;
        }
        if a[i] <= next {
            i += 1;
        }
        if b[j] <= next {
            j += 1;
        }
    }
    Ok(total)
}

/// `∫ |F_μ(t) − F_ν(t)| dt`, exact on the merged atom grid.
pub fn w1_cdf(mu: &Discrete1D, nu: &Discrete1D) -> f64 {
    let (xs, ys) = (mu.atoms(), nu.atoms());
    let (wx, wy) = (mu.weights(), nu.weights());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut fx, mut fy) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    let mut t = xs[0].min(ys[0]);
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (fx - fy).abs() * (next - t);
        t = next;
        while i < xs.len() && xs[i] <= t {
            fx += wx[i];
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            fy += wy[j];
            j += 1;
        }
    }
    total
}

/// `(1/n) Σ |x_(i) − y_(i)|^p` for sorted equal-size samples.
pub fn wp_order_stats(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    check_order(p)?;
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    check_sorted("x", x)?;
    check_sorted("y", y)?;
    Ok(order_stats_unchecked(x, y, p))
}

#[inline]
pub(crate) fn order_stats_unchecked(x: &[f64], y: &[f64], p: f64) -> f64 {
    let s: f64 = x.iter().zip(y).map(|(a, b)| cost_1d(*a, *b, p)).sum();
    s / x.len() as f64
}

/// `min_i |x_i − y|^p − φ_i`, the c-transform restricted to the atoms of `source`.
pub fn c_transform(phi: &[f64], source: &Discrete1D, y: f64, p: f64) -> Result<f64> {
    if phi.len() != source.len() {
        return Err(Error::SizeMismatch {
            left: phi.len(),
            right: source.len(),
        });
    }
    Ok(source
        .atoms()
        .iter()
        .zip(phi)
        .map(|(&x, &f)| cost_1d(x, y, p) - f)
        .fold(f64::INFINITY, f64::min))
}

/// Kantorovich potentials on the atoms of two equal-size uniform measures.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials1D {
    /// One value per sorted source atom; `phi[0] == 0`.
    pub phi: Vec<f64>,
    /// One value per sorted target atom.
    pub psi: Vec<f64>,
    /// `W_p^p`.
    pub value: f64,
    pub p: f64,
}

impl DualPotentials1D {
    /// Largest `φ_i + ψ_j − |x_i − y_j|^p` over all pairs.
    pub fn max_violation(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (xi, fi) in x.iter().zip(&self.phi) {
            for (yj, gj) in y.iter().zip(&self.psi) {
                worst = worst.max(fi + gj - cost_1d(*xi, *yj, self.p));
            }
        }
        worst
    }

    /// `mean(φ) + mean(ψ)`.
    pub fn dual_objective(&self) -> f64 {
        let n = self.phi.len() as f64;
        self.phi.iter().sum::<f64>() / n + self.psi.iter().sum::<f64>() / n
    }
}

/// Potentials along the monotone coupling, without the O(n²) feasibility check.
pub(crate) fn monotone_potentials(x: &[f64], y: &[f64], p: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut phi = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    let mut cur = 0.0;
    for i in 0..n {
        phi.push(cur);
        let g = cost_1d(x[i], y[i], p) - cur;
        psi.push(g);
        if i + 1 < n {
            cur = cost_1d(x[i + 1], y[i], p) - g;
        }
    }
    (phi, psi)
}

/// Dual potentials for sorted equal-size samples and `p > 1`, built by the
/// chain recursion `ψ_i = c(x_i, y_i) − φ_i`, `φ_{i+1} = c(x_{i+1}, y_i) − ψ_i`
/// with `φ_1 = 0`. The result is checked for feasibility on every pair.
pub fn dual_potentials_1d(x: &[f64], y: &[f64], p: f64) -> Result<DualPotentials1D> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::param(
            "p",
            format!("dual recursion needs p > 1, got {p}"),
        ));
    }
    let value = wp_order_stats(x, y, p)?;
    let (phi, psi) = monotone_potentials(x, y, p);
    let out = DualPotentials1D { phi, psi, value, p };

    let scale = x
        .iter()
        .chain(y)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * (1.0 + pow_p(2.0 * scale, p));
    let worst = out.max_violation(x, y);
    if worst > tol {
        return Err(Error::Infeasible(format!(
            "φ_i + ψ_j exceeds the cost by {worst:.3e} (tolerance {tol:.1e})"
        )));
    }
    Ok(out)
}
