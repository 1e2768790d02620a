//! Grouped sociomatrices: assembly, row normalization and the simulation generator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::BlockDiagonal;

/// Block-diagonal interaction matrices `W` and `M` sharing one group structure.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedNetwork {
    w: BlockDiagonal,
    m: BlockDiagonal,
    m_row_normalized: bool,
}

impl GroupedNetwork {
    /// Pairs `w` with an explicit `m`. Diagonals must be zero.
    pub fn new(w: BlockDiagonal, m: BlockDiagonal, m_row_normalized: bool) -> Result<Self> {
        if !w.same_structure(&m) {
            return Err(Error::DimensionMismatch(
                "W and M must share the same group sizes".into(),
            ));
        }
        for (name, mat) in [("W", &w), ("M", &m)] {
            for (r, b) in mat.blocks().iter().enumerate() {
                if let Some(i) = (0..b.nrows()).find(|&i| b[(i, i)] != 0.0) {
                    let row = mat.range(r).start + i;
                    return Err(Error::InvalidArgument(format!(
                        "{name} has a self-link at node {row}"
                    )));
                }
            }
        }
        if m_row_normalized {
            for b in m.blocks() {
                for row in b.row_iter() {
                    let s: f64 = row.iter().sum();
                    if s != 0.0 && (s - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidArgument(format!(
                            "M is declared row-normalized but has a row summing to {s}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            w,
            m,
            m_row_normalized,
        })
    }

    /// Uses the row normalization of `w` as `M`.
    pub fn with_row_normalized_m(w: BlockDiagonal) -> Result<Self> {
        let m = row_normalize_blocks(&w)?;
        Self::new(w, m, true)
    }

    pub fn w(&self) -> &BlockDiagonal {
        &self.w
    }

    pub fn m(&self) -> &BlockDiagonal {
        &self.m
    }

    pub fn m_row_normalized(&self) -> bool {
        self.m_row_normalized
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.w.sizes()
    }

    pub fn group_count(&self) -> usize {
        self.w.block_count()
    }

    pub fn n(&self) -> usize {
        self.w.order()
    }

    /// Group index of every node.
    pub fn membership(&self) -> Vec<usize> {
        self.group_sizes()
            .iter()
            .enumerate()
            .flat_map(|(r, &m)| std::iter::repeat_n(r, m))
            .collect()
    }

    /// n × r̄ matrix of group dummies.
    pub fn group_dummies(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n(), self.group_count());
        for r in 0..self.group_count() {
            for i in self.w.range(r) {
                d[(i, r)] = 1.0;
            }
        }
        d
    }

    pub fn nonzero_count(&self) -> usize {
        self.w
            .blocks()
            .iter()
            .map(|b| b.iter().filter(|x| **x != 0.0).count())
            .sum()
    }
}

/// Places square blocks along the diagonal.
pub fn build_block_diagonal(blocks: Vec<DMatrix<f64>>) -> Result<BlockDiagonal> {
    BlockDiagonal::new(blocks)
}

/// Scales every row with positive sum to sum one. Zero rows stay zero.
pub fn row_normalize(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return Err(Error::NonSquareBlock {
            index: 0,
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    let mut out = w.clone();
    for i in 0..w.nrows() {
        let mut s = 0.0;
        for j in 0..w.ncols() {
            let v = w[(i, j)];
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeWeight {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            s += v;
        }
        if s > 0.0 {
            out.row_mut(i).scale_mut(1.0 / s);
        }
    }
    Ok(out)
}

pub fn row_normalize_blocks(w: &BlockDiagonal) -> Result<BlockDiagonal> {
    let mut blocks = Vec::with_capacity(w.block_count());
    for (r, b) in w.blocks().iter().enumerate() {
        let nb = row_normalize(b).map_err(|e| match e {
            Error::NegativeWeight { row, col, value } => Error::NegativeWeight {
                row: row + w.range(r).start,
                col: col + w.range(r).start,
                value,
            },
            other => other,
        })?;
        blocks.push(nb);
    }
    BlockDiagonal::new(blocks)
}

/// Draws the simulation network from `rng`.
///
/// Groups are filled in index order and rows in order within a group. Row `i`
/// draws `k` uniformly from `0..=max_links` and links to the next `k` members,
/// wrapping around inside the group. `M` is the row normalization of `W`.
pub fn sample_mc_network<R: Rng + ?Sized>(
    group_count: usize,
    group_size: usize,
    max_links: usize,
    rng: &mut R,
) -> Result<GroupedNetwork> {
    if group_count == 0 || group_size == 0 {
        return Err(Error::InvalidArgument(
            "group count and group size must be positive".into(),
        ));
    }
    if max_links >= group_size {
        return Err(Error::InvalidArgument(format!(
            "max_links {max_links} must be below the group size {group_size}"
        )));
    }
    let mut blocks = Vec::with_capacity(group_count);
    for _ in 0..group_count {
        let mut b = DMatrix::zeros(group_size, group_size);
        for i in 0..group_size {
            let k = rng.random_range(0..=max_links);
            for s in 1..=k {
                b[(i, (i + s) % group_size)] = 1.0;
            }
        }
        blocks.push(b);
    }
    GroupedNetwork::with_row_normalized_m(BlockDiagonal::new(blocks)?)
}

/// Seeded variant of [`sample_mc_network`] using `ChaCha8Rng::seed_from_u64(seed)`.
pub fn generate_mc_network(
    group_count: usize,
    group_size: usize,
    max_links: usize,
    seed: u64,
) -> Result<GroupedNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_mc_network(group_count, group_size, max_links, &mut rng)
}

/// Complete graph on `n` nodes without self-links.
pub fn complete_graph(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}
