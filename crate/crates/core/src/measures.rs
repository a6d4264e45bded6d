//! Samples, discrete measures on the line, projections and seeding.
//!
//! Every empirical measure in this crate is uniform-weight: a [`SampleMatrix`]
//! with `n` rows stands for `n⁻¹ Σ δ_{X_i}`. Projecting onto a direction gives a
//! [`Discrete1D`] whose atoms are the sorted projected values; ties are kept as
//! separate atoms so the i-th atom is always the i-th order statistic.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`Discrete1D`] and on `‖θ‖ = 1`.
pub const WEIGHT_TOL: f64 = 1e-12;

/// An `n × d` matrix of finite observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl SampleMatrix {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "sample matrix needs n ≥ 1 and d ≥ 1, got {n}×{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {n}×{d} matrix, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("no rows".into()))?;
        let d = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), d)
    }

    /// A one-dimensional sample from a slice of values.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), values.len(), 1)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows picked by index, with repetition allowed (bootstrap resamples).
    pub fn select(&self, indices: &[usize]) -> SampleMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        SampleMatrix {
            data,
            n: indices.len(),
            d: self.d,
        }
    }

    /// Applies `f` to every entry. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SampleMatrix {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced non-finite entry");
        SampleMatrix {
            data,
            n: self.n,
            d: self.d,
        }
    }

    /// Adds `offsets` (same shape) entrywise.
    pub fn perturbed(&self, offsets: &[f64]) -> SampleMatrix {
        assert_eq!(offsets.len(), self.data.len());
        let data = self
            .data
            .iter()
            .zip(offsets)
            .map(|(a, b)| a + b)
            .collect();
        SampleMatrix {
            data,
            n: self.n,
            d: self.d,
        }
    }

    /// Reads the CSV sample format: one observation per row, comma separated,
    /// with an optional single header row detected by a non-numeric first token.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::parse_csv(file)
    }

    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(None)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let first_numeric = record.get(0).map(|f| f.parse::<f64>().is_ok());
            if line == 0 && first_numeric == Some(false) {
                continue;
            }
            let row = record
                .iter()
                .enumerate()
                .map(|(col, f)| {
                    f.parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!(
                            "line {}: column {} is not a number: {f:?}",
                            line + 1,
                            col + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

/// Sorted atomic probability measure on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete1D {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

impl Discrete1D {
    /// Validates sortedness, positivity and unit mass (within [`WEIGHT_TOL`]).
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("discrete measure has no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::SizeMismatch {
                left: atoms.len(),
                right: weights.len(),
            });
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite atom".into()));
        }
        if atoms.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("atoms must be sorted nondecreasing".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be strictly positive".into()));
        }
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1 (tolerance {WEIGHT_TOL:e})"
            )));
        }
        Ok(Self { atoms, weights })
    }

    /// Sorts `(atom, weight)` pairs, then validates.
    pub fn from_unsorted(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::SizeMismatch {
                left: atoms.len(),
                right: weights.len(),
            });
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (a, w) = pairs.into_iter().unzip();
        Self::new(a, w)
    }

    /// Uniform-weight empirical measure of `values` (sorted internally).
    pub fn uniform(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("discrete measure has no atoms".into()));
        }
        if values.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite atom".into()));
        }
        values.sort_by(f64::total_cmp);
        let w = 1.0 / values.len() as f64;
        let weights = vec![w; values.len()];
        Ok(Self {
            atoms: values,
            weights,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Running sums of the weights; the last entry is forced to exactly 1.
    pub fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    }

    pub fn cdf(&self, t: f64) -> f64 {
        empirical_cdf(self, t)
    }

    pub fn quantile(&self, tau: f64) -> Result<f64> {
        quantile(self, tau)
    }

    /// Smallest and largest atom.
    pub fn support(&self) -> (f64, f64) {
        (self.atoms[0], self.atoms[self.atoms.len() - 1])
    }
}

/// A point on the unit sphere `𝕊^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Accepts components whose Euclidean norm is 1 within [`WEIGHT_TOL`].
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("direction has no components".into()));
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= WEIGHT_TOL) {
            return Err(Error::InvalidInput(format!(
                "direction norm is {norm}, expected 1"
            )));
        }
        Ok(Self(components))
    }

    /// Rescales a nonzero vector to unit length.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
        }
        v.iter_mut().for_each(|c| *c /= norm);
        Ok(Self(v))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// Deterministic seeding: every task derives its own stream from
/// `(master_seed, task_index)`, independent of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedPolicy {
    pub const fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn sub_seed(&self, task_index: u64) -> u64 {
        splitmix64(splitmix64(self.master_seed) ^ splitmix64(task_index ^ 0xD1B5_4A32_D192_ED03))
    }

    /// Random stream for one task.
    pub fn rng(&self, task_index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.sub_seed(task_index))
    }

    /// A nested policy, for tasks that spawn their own subtasks.
    pub fn child(&self, task_index: u64) -> SeedPolicy {
        SeedPolicy::new(self.sub_seed(task_index))
    }
}

fn check_dim(samples: &SampleMatrix, theta: &Direction) -> Result<()> {
    if theta.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: theta.dim(),
        });
    }
    Ok(())
}

/// `θᵀX_i` for every row, in row order.
pub fn projected_values(samples: &SampleMatrix, theta: &Direction) -> Result<Vec<f64>> {
    check_dim(samples, theta)?;
    Ok(samples.rows().map(|r| theta.dot(r)).collect())
}

/// Empirical measure of the projected sample; duplicates stay separate atoms.
pub fn project(samples: &SampleMatrix, theta: &Direction) -> Result<Discrete1D> {
    Discrete1D::uniform(projected_values(samples, theta)?)
}

/// Right-continuous distribution function: total weight of atoms `≤ t`.
pub fn empirical_cdf(m: &Discrete1D, t: f64) -> f64 {
    let k = m.atoms.partition_point(|&a| a <= t);
    if k == m.len() {
        1.0
    } else {
        // same summation order as `cumulative_weights`, so cdf and quantile agree exactly
        m.weights[..k].iter().fold(0.0, |acc, w| acc + w)
    }
}

/// `inf { t : F(t) ≥ τ }` for `τ ∈ (0, 1]`.
pub fn quantile(m: &Discrete1D, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::param("tau", format!("{tau} is outside (0, 1]")));
    }
    let cum = m.cumulative_weights();
    let k = cum.partition_point(|&c| c < tau);
    Ok(m.atoms[k.min(m.len() - 1)])
}

/// `k` directions drawn uniformly on `𝕊^{d-1}`. For `d = 1` the sphere is
/// `{+1, −1}` and the output alternates between the two points.
pub fn sample_sphere(d: usize, k: usize, seed: &SeedPolicy) -> Result<Vec<Direction>> {
    if d == 0 {
        return Err(Error::param("d", "dimension must be ≥ 1"));
    }
    if k == 0 {
        return Err(Error::param("k", "direction count must be ≥ 1"));
    }
    if d == 1 {
        return Ok((0..k)
            .map(|j| Direction(vec![if j % 2 == 0 { 1.0 } else { -1.0 }]))
            .collect());
    }
    (0..k)
        .map(|j| {
            let mut rng = seed.rng(j as u64);
            loop {
                let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm2: f64 = v.iter().map(|c| c * c).sum();
                if norm2 > 1e-300 {
                    return Direction::normalized(v);
                }
            }
        })
        .collect()
}
