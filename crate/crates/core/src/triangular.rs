//! Upper triangular matrices: the Jacobian shape of every triangular map.
//!
//! Inversion is by back-substitution. [`UpperTriangularMatrix::check_inverse_bounds`]
//! verifies the entrywise inverse bounds that control how far the inverse of
//! a triangular map can move when its Jacobian has superdiagonal entries
//! bounded by `L` and diagonal entries bounded below by `1/M`:
//!
//! ```text
//! |A^{-1}_{jj}| <= M,        |A^{-1}_{ij}| <= M^2 L (M L + 1)^{j-i-1}   (i < j)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots smaller than this are treated as zero.
pub const SINGULAR_PIVOT: f64 = 1e-300;

/// Relative slack used when comparing an inverse entry against its bound.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperTriangularMatrix {
    dim: usize,
    /// Row-major, `dim * dim`.
    entries: Vec<f64>,
}

impl UpperTriangularMatrix {
    /// Builds from row-major entries; rejects nonzero entries below the diagonal.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i}, {j}) below the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn is_invertible(&self) -> bool {
        (0..self.dim).all(|i| self.get(i, i).abs() >= SINGULAR_PIVOT)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (i..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                entries[i * d + j] = (i..=j).map(|k| self.get(i, k) * other.get(k, j)).sum();
            }
        }
        Self { dim: d, entries }
    }

    /// Inverse by column-wise back-substitution.
    pub fn invert(&self) -> Result<Self> {
        let d = self.dim;
        for i in 0..d {
            let a = self.get(i, i);
            if a.abs() < SINGULAR_PIVOT || !a.is_finite() {
                return Err(Error::SingularMatrix { index: i, value: a });
            }
        }
        let mut inv = vec![0.0; d * d];
        for j in 0..d {
            inv[j * d + j] = 1.0 / self.get(j, j);
            for i in (0..j).rev() {
                let s: f64 = (i + 1..=j).map(|k| self.get(i, k) * inv[k * d + j]).sum();
                inv[i * d + j] = -s / self.get(i, i);
            }
        }
        Ok(Self {
            dim: d,
            entries: inv,
        })
    }

    /// Largest superdiagonal magnitude and smallest diagonal magnitude.
    pub fn hypothesis_constants(&self) -> (f64, f64) {
        let d = self.dim;
        let mut max_off = 0.0f64;
        let mut min_diag = f64::INFINITY;
        for i in 0..d {
            min_diag = min_diag.min(self.get(i, i).abs());
            for j in i + 1..d {
                max_off = max_off.max(self.get(i, j).abs());
            }
        }
        (max_off, min_diag)
    }

    /// Checks the entrywise inverse bounds for constants `l` and `m`.
    ///
    /// Fails with [`Error::HypothesisViolation`] when the matrix does not have
    /// superdiagonal entries bounded by `l` and diagonal entries bounded below
    /// by `1/m`, so a `false` return always means a bound was exceeded.
    pub fn check_inverse_bounds(&self, l: f64, m: f64) -> Result<bool> {
        if !(l > 0.0 && m > 0.0) {
            return Err(Error::HypothesisViolation(format!(
                "L = {l} and M = {m} must be positive"
            )));
        }
        let (max_off, min_diag) = self.hypothesis_constants();
        if max_off > l * (1.0 + BOUND_SLACK) {
            return Err(Error::HypothesisViolation(format!(
                "superdiagonal magnitude {max_off} exceeds L = {l}"
            )));
        }
        if min_diag * m < 1.0 - BOUND_SLACK {
            return Err(Error::HypothesisViolation(format!(
                "diagonal magnitude {min_diag} is below 1/M = {}",
                1.0 / m
            )));
        }
        let inv = self.invert()?;
        let d = self.dim;
        for i in 0..d {
            if inv.get(i, i).abs() > m * (1.0 + BOUND_SLACK) {
                return Ok(false);
            }
            for j in i + 1..d {
                let bound = m * m * l * (m * l + 1.0).powi((j - i - 1) as i32);
                if inv.get(i, j).abs() > bound * (1.0 + BOUND_SLACK) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
