//! Block-diagonal matrices and the small dense helpers the estimators share.
//!
//! Every network operator in the model (W, M, S(λ), R(ρ), J) is block-diagonal
//! over groups, so products and solves are carried out one block at a time.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};

/// Relative pivot size below which an LU factor is treated as singular.
const PIVOT_TOL: f64 = 1e-13;

/// Square block-diagonal matrix stored as its diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonal {
    blocks: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
}

impl BlockDiagonal {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if let Some((index, b)) = blocks.iter().enumerate().find(|(_, b)| !b.is_square()) {
            return Err(Error::NonSquareBlock {
                index,
                rows: b.nrows(),
                cols: b.ncols(),
            });
        }
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        offsets.push(0);
        for b in &blocks {
            offsets.push(offsets.last().unwrap() + b.nrows());
        }
        Ok(Self { blocks, offsets })
    }

    pub fn identity(sizes: &[usize]) -> Self {
        Self::from_square_blocks(sizes.iter().map(|&m| DMatrix::identity(m, m)).collect())
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self::from_square_blocks(sizes.iter().map(|&m| DMatrix::zeros(m, m)).collect())
    }

    // Caller guarantees squareness.
    fn from_square_blocks(blocks: Vec<DMatrix<f64>>) -> Self {
        Self::new(blocks).expect("blocks are square by construction")
    }

    pub fn order(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, r: usize) -> &DMatrix<f64> {
        &self.blocks[r]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    /// Row/column range of block `r` inside the full matrix.
    pub fn range(&self, r: usize) -> Range<usize> {
        self.offsets[r]..self.offsets[r + 1]
    }

    pub fn same_structure(&self, other: &BlockDiagonal) -> bool {
        self.offsets == other.offsets
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut out = DMatrix::zeros(n, n);
        for (r, b) in self.blocks.iter().enumerate() {
            let o = self.offsets[r];
            out.view_mut((o, o), (b.nrows(), b.ncols())).copy_from(b);
        }
        out
    }

    pub fn map_blocks<F>(&self, f: F) -> BlockDiagonal
    where
        F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    {
        Self::from_square_blocks(self.blocks.iter().map(f).collect())
    }

    pub fn transpose(&self) -> BlockDiagonal {
        self.map_blocks(|b| b.transpose())
    }

    /// I − scale·A.
    pub fn identity_minus_scaled(&self, scale: f64) -> BlockDiagonal {
        self.map_blocks(|b| {
            let mut out = b * -scale;
            for i in 0..out.nrows() {
                out[(i, i)] += 1.0;
            }
            out
        })
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.order(), "vector length must match matrix order");
        let mut out = DVector::zeros(v.len());
        for (r, b) in self.blocks.iter().enumerate() {
            let rg = self.range(r);
            let seg = b * v.rows(rg.start, rg.len());
            out.rows_mut(rg.start, rg.len()).copy_from(&seg);
        }
        out
    }

    pub fn tr_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.order(), "vector length must match matrix order");
        let mut out = DVector::zeros(v.len());
        for (r, b) in self.blocks.iter().enumerate() {
            let rg = self.range(r);
            let seg = b.tr_mul(&v.rows(rg.start, rg.len()));
            out.rows_mut(rg.start, rg.len()).copy_from(&seg);
        }
        out
    }

    pub fn mul_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.order(), "row count must match matrix order");
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (r, b) in self.blocks.iter().enumerate() {
            let rg = self.range(r);
            let seg = b * m.rows(rg.start, rg.len());
            out.rows_mut(rg.start, rg.len()).copy_from(&seg);
        }
        out
    }

    /// Product of two block-diagonal matrices with identical structure.
    pub fn mul(&self, other: &BlockDiagonal) -> Result<BlockDiagonal> {
        if !self.same_structure(other) {
            return Err(Error::DimensionMismatch(
                "block-diagonal factors have different group structure".into(),
            ));
        }
        Ok(Self::from_square_blocks(
            self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect(),
        ))
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// Maximum absolute row sum (the induced ∞-norm).
    pub fn row_sum_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.row_iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.blocks.iter().map(max_asymmetry).fold(0.0, f64::max)
    }

    /// Factorize every block; fails naming `factor` when any block is singular.
    pub fn lu(&self, factor: &'static str) -> Result<BlockLu> {
        let mut lus = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let lu = b.clone().lu();
            if lu_is_singular(&lu) {
                return Err(Error::SingularFactor { factor });
            }
            lus.push(lu);
        }
        Ok(BlockLu {
            lus,
            offsets: self.offsets.clone(),
        })
    }
}

fn lu_is_singular(lu: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> bool {
    let u = lu.u();
    let scale = u.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if u.nrows() == 0 {
        return false;
    }
    scale == 0.0 || u.diagonal().iter().any(|d| d.abs() <= PIVOT_TOL * scale)
}

/// LU factors of every block of a block-diagonal matrix.
#[derive(Debug, Clone)]
pub struct BlockLu {
    lus: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    offsets: Vec<usize>,
}

impl BlockLu {
    pub fn order(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn solve_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.order(), "vector length must match matrix order");
        let mut out = DVector::zeros(v.len());
        for (r, lu) in self.lus.iter().enumerate() {
            let (s, e) = (self.offsets[r], self.offsets[r + 1]);
            let seg = lu
                .solve(&v.rows(s, e - s).into_owned())
                .expect("factor checked non-singular");
            out.rows_mut(s, e - s).copy_from(&seg);
        }
        out
    }

    pub fn solve_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (j, col) in m.column_iter().enumerate() {
            out.set_column(j, &self.solve_vec(&col.into_owned()));
        }
        out
    }
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Moore-Penrose inverse of a symmetric matrix with a relative eigenvalue cutoff.
pub fn symmetric_pinv(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    if top == 0.0 {
        return out;
    }
    for (k, &val) in eig.eigenvalues.iter().enumerate() {
        if val.abs() > rel_cutoff * top {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / val;
        }
    }
    out
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Ratio of extreme eigenvalues of A′A, i.e. of the nonzero spectrum of AA′.
pub fn gram_condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => (hi / lo).powi(2),
        (Some(_), Some(_)) => f64::INFINITY,
        _ => f64::NAN,
    }
}

/// Condition number of a symmetric positive semidefinite matrix.
pub fn spd_condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen();
    let hi = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lo = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve the symmetric positive definite system `a x = b`.
///
/// Rejects systems whose condition number exceeds `max_condition`.
pub fn solve_spd(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    what: &'static str,
    max_condition: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let condition = spd_condition_number(a);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::IllConditioned { what, condition });
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or(Error::IllConditioned { what, condition })?;
    Ok((chol.solve(b), condition))
}

/// Sample standard deviation (divisor n − 1).
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
