//! Exact `W_p` between equal-size point clouds via a linear assignment solver.

use crate::error::{Error, Result};
use crate::measures::SampleMatrix;
use crate::ot1d::pow_p;

/// Square matrix of nonnegative finite costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Vec<f64>,
    n: usize,
}

impl CostMatrix {
    pub fn new(entries: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows != cols {
            return Err(Error::InvalidInput(format!(
                "cost matrix must be square, got {rows}×{cols}"
            )));
        }
        if rows == 0 || entries.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(
                "cost entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { entries, n: rows })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::InvalidInput("ragged cost matrix".into()));
            }
            entries.extend_from_slice(r.as_ref());
        }
        Self::new(entries, rows.len(), cols)
    }

    /// `‖x_i − y_j‖^p` for all pairs.
    pub fn from_clouds(x: &SampleMatrix, y: &SampleMatrix, p: f64) -> Result<Self> {
        check_shapes(x, y)?;
        let n = x.n();
        let mut entries = Vec::with_capacity(n * n);
        for xi in x.rows() {
            for yj in y.rows() {
                let sq: f64 = xi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
                entries.push(if p == 2.0 { sq } else { pow_p(sq.sqrt(), p) });
            }
        }
        Ok(Self { entries, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

fn check_shapes(x: &SampleMatrix, y: &SampleMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if x.n() != y.n() {
        return Err(Error::SizeMismatch {
            left: x.n(),
            right: y.n(),
        });
    }
    Ok(())
}

/// Optimal assignment: `perm[i]` is the column matched to row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost perfect matching by shortest augmenting paths with row/column
/// potentials, O(n³). Among equally short paths the lowest column index wins,
/// so the returned permutation is deterministic.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let n = cost.n;
    // 1-based columns; column 0 is the virtual source of each augmentation
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost.entries[(i0 - 1) * n..i0 * n];
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Assignment { perm, cost: total }
}

/// `W_p^p` between the uniform empirical measures of two equal-size clouds.
pub fn exact_wp(x: &SampleMatrix, y: &SampleMatrix, p: f64) -> Result<f64> {
    Ok(exact_wp_with_plan(x, y, p)?.cost)
}

/// Like [`exact_wp`], also returning the optimal matching. `cost` is `W_p^p`.
pub fn exact_wp_with_plan(x: &SampleMatrix, y: &SampleMatrix, p: f64) -> Result<Assignment> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::param("p", format!("order must be ≥ 1, got {p}")));
    }
    let cost = CostMatrix::from_clouds(x, y, p)?;
    let mut a = hungarian(&cost);
    a.cost /= x.n() as f64;
    Ok(a)
}
