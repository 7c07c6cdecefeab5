//! Dense matrices over a prime field with exact rank, null-space, and solve
//! primitives.
//!
//! Elimination uses deterministic "first nonzero" partial pivoting in column
//! order, so identical inputs always produce identical outputs. Dimensions in
//! this crate stay desk-scale (a few hundred at most), so plain dense
//! row-major storage is all that is needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::field::Fq;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinalgError {
    #[error("matrix is singular (rank {rank} < {dim})")]
    SingularMatrix { rank: usize, dim: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Row-major dense matrix over `F_q`; all entries kept reduced in `[0, q)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    q: u64,
    data: Vec<u64>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize, q: u64) -> FieldMatrix {
        let _ = Fq::new(q);
        FieldMatrix {
            rows,
            cols,
            q,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize, q: u64) -> FieldMatrix {
        let mut m = FieldMatrix::zeros(n, n, q);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds from signed integer rows, reducing each entry mod `q`; negative
    /// values like `-1` become `q - 1`.
    pub fn from_signed_rows(q: u64, rows: &[Vec<i64>]) -> FieldMatrix {
        let f = Fq::new(q);
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            data.extend(row.iter().map(|&v| f.reduce_signed(v)));
        }
        FieldMatrix {
            rows: n_rows,
            cols: n_cols,
            q,
            data,
        }
    }

    /// Uniform i.i.d. entries; deterministic for a fixed seed.
    pub fn random(rows: usize, cols: usize, q: u64, seed: u64) -> FieldMatrix {
        let _ = Fq::new(q);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(0..q)).collect();
        FieldMatrix {
            rows,
            cols,
            q,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn field(&self) -> Fq {
        Fq::new(self.q)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        debug_assert!(v < self.q);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn from_rows(q: u64, rows: Vec<Vec<u64>>) -> FieldMatrix {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            assert!(row.iter().all(|&v| v < q), "entry not reduced");
            data.extend(row);
        }
        FieldMatrix {
            rows: n_rows,
            cols: n_cols,
            q,
            data,
        }
    }

    /// Builds a matrix from column vectors.
    pub fn from_cols(q: u64, cols: &[Vec<u64>]) -> FieldMatrix {
        let n_cols = cols.len();
        let n_rows = cols.first().map_or(0, Vec::len);
        let mut m = FieldMatrix::zeros(n_rows, n_cols, q);
        for (c, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), n_rows, "ragged columns");
            for (r, &v) in col.iter().enumerate() {
                assert!(v < q);
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn transpose(&self) -> FieldMatrix {
        let mut t = FieldMatrix::zeros(self.cols, self.rows, self.q);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn matmul(&self, other: &FieldMatrix) -> FieldMatrix {
        assert_eq!(self.q, other.q, "modulus mismatch");
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let f = self.field();
        let mut out = FieldMatrix::zeros(self.rows, other.cols, self.q);
        for r in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(r, i);
                if a == 0 {
                    continue;
                }
                for c in 0..other.cols {
                    let acc = f.add(out.get(r, c), f.mul(a, other.get(i, c)));
                    out.set(r, c, acc);
                }
            }
        }
        out
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &FieldMatrix) -> FieldMatrix {
        assert_eq!(self.q, other.q);
        assert_eq!(self.cols, other.cols, "column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        FieldMatrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            q: self.q,
            data,
        }
    }

    /// Places `self` and `other` side by side.
    pub fn hstack(&self, other: &FieldMatrix) -> FieldMatrix {
        assert_eq!(self.q, other.q);
        assert_eq!(self.rows, other.rows, "row mismatch");
        let mut out = FieldMatrix::zeros(self.rows, self.cols + other.cols, self.q);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c));
            }
            for c in 0..other.cols {
                out.set(r, self.cols + c, other.get(r, c));
            }
        }
        out
    }

    pub fn select_columns(&self, sel: &[usize]) -> FieldMatrix {
        let mut out = FieldMatrix::zeros(self.rows, sel.len(), self.q);
        for r in 0..self.rows {
            for (c, &s) in sel.iter().enumerate() {
                out.set(r, c, self.get(r, s));
            }
        }
        out
    }

    /// In-place Gauss-Jordan elimination restricted to the first
    /// `pivot_cols` columns. Returns the pivot column indices, in order.
    fn eliminate(&mut self, pivot_cols: usize) -> Vec<usize> {
        let f = self.field();
        let mut pivots = Vec::new();
        let mut pivot_row = 0;
        for col in 0..pivot_cols {
            let Some(src) = (pivot_row..self.rows).find(|&r| self.get(r, col) != 0) else {
                continue;
            };
            if src != pivot_row {
                for c in 0..self.cols {
                    let tmp = self.get(src, c);
                    self.set(src, c, self.get(pivot_row, c));
                    self.set(pivot_row, c, tmp);
                }
            }
            let inv = f.inv(self.get(pivot_row, col));
            for c in 0..self.cols {
                self.set(pivot_row, c, f.mul(inv, self.get(pivot_row, c)));
            }
            for r in 0..self.rows {
                if r == pivot_row {
                    continue;
                }
                let factor = self.get(r, col);
                if factor == 0 {
                    continue;
                }
                for c in 0..self.cols {
                    let v = f.sub(self.get(r, c), f.mul(factor, self.get(pivot_row, c)));
                    self.set(r, c, v);
                }
            }
            pivots.push(col);
            pivot_row += 1;
            if pivot_row == self.rows {
                break;
            }
        }
        pivots
    }

    /// Reduced row echelon form together with the pivot column indices.
    pub fn rref(&self) -> (FieldMatrix, Vec<usize>) {
        let mut m = self.clone();
        let pivots = m.eliminate(self.cols);
        (m, pivots)
    }

    /// Exact rank over `F_q`. An empty matrix has rank 0.
    pub fn rank(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        self.clone().eliminate(self.cols).len()
    }

    /// A `(rows - rank) x rows` matrix whose rows form a basis of the left
    /// null space `{x : x * self = 0}`.
    ///
    /// Found by eliminating `[self | I]`: the identity tracks the row
    /// operations, and the tracker rows whose `self`-part vanished span the
    /// left null space.
    pub fn left_null_basis(&self) -> FieldMatrix {
        let mut aug = self.hstack(&FieldMatrix::identity(self.rows, self.q));
        let pivots = aug.eliminate(self.cols);
        let rank = pivots.len();
        let mut out = FieldMatrix::zeros(self.rows - rank, self.rows, self.q);
        for r in rank..self.rows {
            for c in 0..self.rows {
                out.set(r - rank, c, aug.get(r, self.cols + c));
            }
        }
        out
    }

    /// Solves `self * x = b` for square full-rank `self`.
    pub fn solve_square(&self, b: &FieldMatrix) -> Result<FieldMatrix, LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "coefficient matrix is {}x{}, expected square",
                self.rows, self.cols
            )));
        }
        if b.rows != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs has {} rows, expected {}",
                b.rows, self.rows
            )));
        }
        let mut aug = self.hstack(b);
        let pivots = aug.eliminate(self.cols);
        if pivots.len() < self.rows {
            return Err(LinalgError::SingularMatrix {
                rank: pivots.len(),
                dim: self.rows,
            });
        }
        let mut x = FieldMatrix::zeros(self.rows, b.cols, self.q);
        for r in 0..self.rows {
            for c in 0..b.cols {
                x.set(r, c, aug.get(r, self.cols + c));
            }
        }
        Ok(x)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}
