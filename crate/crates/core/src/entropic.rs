//! Entropic optimal transport with quadratic cost `c(x, y) = ‖x − y‖²/2`.
//!
//! The solver works at `ε = 1` in the log domain. Other regularization levels
//! are handled by rescaling the atoms by `ε^{-1/2}` and multiplying the value
//! and potentials by `ε`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::measures::SampleMatrix;
use crate::sliced::{pairwise_sum, population_variance};

/// Tolerance on the total mass of a weight vector.
const MASS_TOL: f64 = 1e-9;

/// Finitely supported measure on `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCloud {
    points: SampleMatrix,
    weights: Vec<f64>,
}

impl WeightedCloud {
    /// Weights must be nonnegative and sum to one.
    pub fn new(points: SampleMatrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.n() {
            return Err(Error::SizeMismatch {
                left: points.n(),
                right: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and ≥ 0".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: SampleMatrix) -> Self {
        let n = points.n();
        Self {
            points,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Empirical measure of `x` with repeated rows merged into one atom.
    /// Atoms appear in order of first occurrence; the second value maps each
    /// sample to its atom.
    pub fn from_samples(x: &SampleMatrix) -> (Self, Vec<usize>) {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut first_rows = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut atom_of = Vec::with_capacity(x.n());
        for (i, row) in x.rows().enumerate() {
            // +0.0 and -0.0 are the same point
            let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
            let next = first_rows.len();
            let a = *index.entry(key).or_insert(next);
            if a == next {
                first_rows.push(i);
                counts.push(0);
            }
            counts[a] += 1;
            atom_of.push(a);
        }
        let n = x.n() as f64;
        let cloud = Self {
            points: x.select(&first_rows),
            weights: counts.iter().map(|&c| c as f64 / n).collect(),
        };
        (cloud, atom_of)
    }

    pub fn points(&self) -> &SampleMatrix {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self.points.map(|v| v * factor),
            weights: self.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornConfig {
    pub eps: f64,
    pub max_iter: usize,
    /// Stop once the L1 marginal violation drops below this (scaled down by
    /// `1 + span(φ)` on the ε = 1 scale).
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            eps: 1.0,
            max_iter: 100_000,
            tol: 1e-9,
        }
    }
}

impl SinkhornConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::param("eps", format!("must be > 0, got {}", self.eps)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", format!("must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Output of [`sinkhorn`]. Potentials are anchored so that `phi[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornSolution {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Row-major `n × m` plan; entries below `1e-300` are reported as 0.
    pub coupling: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Dual objective, on the scale of the requested `ε`.
    pub value: f64,
    /// L1 violation of both marginals.
    pub marginal_err: f64,
    pub iterations: usize,
    pub converged: bool,
    pub eps: f64,
}

impl SinkhornSolution {
    pub fn plan(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }
}

fn half_sq_cost(mu: &WeightedCloud, nu: &WeightedCloud) -> Vec<f64> {
    let mut c = Vec::with_capacity(mu.len() * nu.len());
    for x in mu.points.rows() {
        for y in nu.points.rows() {
            c.push(0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
    }
    c
}

/// `log Σ exp(terms)`, stable, `−∞` for an empty or all `−∞` input.
fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn check_pair(mu: &WeightedCloud, nu: &WeightedCloud) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    Ok(())
}

/// Log-domain Sinkhorn at `ε = 1`.
fn solve_unit(mu: &WeightedCloud, nu: &WeightedCloud, max_iter: usize, tol: f64) -> Result<SinkhornSolution> {
    let (n, m) = (mu.len(), nu.len());
    let cost = half_sq_cost(mu, nu);
    let log_w: Vec<f64> = mu.weights.iter().map(|w| w.ln()).collect();
    let log_v: Vec<f64> = nu.weights.iter().map(|v| v.ln()).collect();
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // φ-update; the change in φ measures the current row violation
        let mut err = 0.0;
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            let new = -log_sum_exp((0..m).map(|j| log_v[j] + psi[j] - row[j]));
            err += mu.weights[i] * ((phi[i] - new).exp() - 1.0).abs();
            phi[i] = new;
        }
        if !err.is_finite() {
            return Err(Error::Numerical("non-finite potentials in Sinkhorn".into()));
        }
        // the duality gap is at most err · span(φ) / 2, so the tolerance is
        // tightened by the span to keep the gap below tol as well
        let span = phi.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - phi.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if err * (1.0 + span) < tol && iterations > 0 {
            converged = true;
        }
        for (j, p) in psi.iter_mut().enumerate() {
            *p = -log_sum_exp((0..n).map(|i| log_w[i] + phi[i] - cost[i * m + j]));
        }
        iterations += 1;
        if converged {
            break;
        }
    }
    let shift = phi[0];
    phi.iter_mut().for_each(|v| *v -= shift);
    psi.iter_mut().for_each(|v| *v += shift);

    let mut coupling = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let v = (log_w[i] + log_v[j] + phi[i] + psi[j] - cost[i * m + j]).exp();
            coupling[i * m + j] = if v < 1e-300 { 0.0 } else { v };
        }
    }
    let marginal_err = marginal_violation(&coupling, mu.weights(), nu.weights());
    let converged = converged || marginal_err < tol;
    let wphi: Vec<f64> = phi.iter().zip(&mu.weights).map(|(a, b)| a * b).collect();
    let vpsi: Vec<f64> = psi.iter().zip(&nu.weights).map(|(a, b)| a * b).collect();
    let value = pairwise_sum(&wphi) + pairwise_sum(&vpsi) - pairwise_sum(&coupling) + 1.0;
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite entropic value".into()));
    }
    Ok(SinkhornSolution {
        phi,
        psi,
        coupling,
        rows: n,
        cols: m,
        value,
        marginal_err,
        iterations,
        converged,
        eps: 1.0,
    })
}

/// L1 distance of the row and column sums of `coupling` to `w` and `v`.
pub fn marginal_violation(coupling: &[f64], w: &[f64], v: &[f64]) -> f64 {
    let m = v.len();
    let rows: f64 = w
        .iter()
        .enumerate()
        .map(|(i, wi)| (coupling[i * m..(i + 1) * m].iter().sum::<f64>() - wi).abs())
        .sum();
    let cols: f64 = v
        .iter()
        .enumerate()
        .map(|(j, vj)| ((0..w.len()).map(|i| coupling[i * m + j]).sum::<f64>() - vj).abs())
        .sum();
    rows + cols
}

/// Entropic OT between two weighted clouds at `config.eps`.
///
/// Does not fail on non-convergence: the returned solution has
/// `converged = false` and the caller decides.
pub fn sinkhorn(mu: &WeightedCloud, nu: &WeightedCloud, config: &SinkhornConfig) -> Result<SinkhornSolution> {
    config.validate()?;
    check_pair(mu, nu)?;
    if config.eps == 1.0 {
        return solve_unit(mu, nu, config.max_iter, config.tol);
    }
    let f = config.eps.powf(-0.5);
    let mut sol = solve_unit(&mu.scaled(f), &nu.scaled(f), config.max_iter, config.tol)?;
    sol.value *= config.eps;
    sol.phi.iter_mut().for_each(|v| *v *= config.eps);
    sol.psi.iter_mut().for_each(|v| *v *= config.eps);
    sol.eps = config.eps;
    Ok(sol)
}

/// [`sinkhorn`] at regularization `eps` with default tolerances.
pub fn eot_with_eps(mu: &WeightedCloud, nu: &WeightedCloud, eps: f64) -> Result<SinkhornSolution> {
    sinkhorn(mu, nu, &SinkhornConfig::with_eps(eps))
}

/// `Σ c_ij π_ij + ε Σ π_ij log(π_ij / (w_i v_j))` with `0 log 0 = 0`.
pub fn eot_primal_value(coupling: &[f64], mu: &WeightedCloud, nu: &WeightedCloud, eps: f64) -> Result<f64> {
    check_pair(mu, nu)?;
    let (n, m) = (mu.len(), nu.len());
    if coupling.len() != n * m {
        return Err(Error::SizeMismatch {
            left: n * m,
            right: coupling.len(),
        });
    }
    if coupling.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidInput("coupling entries must be finite and ≥ 0".into()));
    }
    let viol = marginal_violation(coupling, mu.weights(), nu.weights());
    if viol > 1e-6 {
        return Err(Error::InvalidInput(format!("coupling marginals off by {viol:e} in L1")));
    }
    let cost = half_sq_cost(mu, nu);
    let mut terms = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let p = coupling[i * m + j];
            if p == 0.0 {
                continue;
            }
            let base = mu.weights[i] * nu.weights[j];
            if base == 0.0 {
                return Err(Error::InvalidInput("coupling charges a null cell; KL is infinite".into()));
            }
            terms.push(cost[i * m + j] * p + eps * p * (p / base).ln());
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Plug-in variances `Var_μ̂(φ)` and `Var_ν̂(ψ)` evaluated at the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EotVariances {
    pub v1: f64,
    pub v2: Option<f64>,
}

impl EotVariances {
    pub fn total(&self) -> f64 {
        self.v1 + self.v2.unwrap_or(0.0)
    }
}

/// Population variances of the potentials at each sample's atom.
pub fn eot_variances(sol: &SinkhornSolution, x_atoms: &[usize], y_atoms: Option<&[usize]>) -> Result<EotVariances> {
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            marginal_err: sol.marginal_err,
        });
    }
    let gather = |pot: &[f64], idx: &[usize]| -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::InvalidInput("no samples for variance".into()));
        }
        let vals = idx
            .iter()
            .map(|&a| pot.get(a).copied().ok_or_else(|| Error::InvalidInput(format!("atom index {a} out of range"))))
            .collect::<Result<Vec<f64>>>()?;
        Ok(population_variance(&vals))
    };
    Ok(EotVariances {
        v1: gather(&sol.phi, x_atoms)?,
        v2: y_atoms.map(|y| gather(&sol.psi, y)).transpose()?,
    })
}

/// Second argument of [`eot_estimate`].
#[derive(Debug, Clone, Copy)]
pub enum EotTarget<'a> {
    /// Two-sample: the target is another empirical measure.
    Sample(&'a SampleMatrix),
    /// One-sample: the target is a known measure.
    Fixed(&'a WeightedCloud),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EotEstimate {
    pub value: f64,
    pub solution: SinkhornSolution,
    pub variances: EotVariances,
    pub source: WeightedCloud,
    pub target: WeightedCloud,
}

/// Plug-in entropic cost with its variance estimate. Fails with
/// [`Error::NotConverged`] if Sinkhorn does not reach `config.tol`.
pub fn eot_estimate(x: &SampleMatrix, target: EotTarget<'_>, config: &SinkhornConfig) -> Result<EotEstimate> {
    let (source, x_atoms) = WeightedCloud::from_samples(x);
    let (target, y_atoms) = match target {
        EotTarget::Sample(y) => {
            let (c, idx) = WeightedCloud::from_samples(y);
            (c, Some(idx))
        }
        EotTarget::Fixed(c) => (c.clone(), None),
    };
    let solution = sinkhorn(&source, &target, config)?;
    let variances = eot_variances(&solution, &x_atoms, y_atoms.as_deref())?;
    Ok(EotEstimate {
        value: solution.value,
        solution,
        variances,
        source,
        target,
    })
}
