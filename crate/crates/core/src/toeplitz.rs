//! Symmetric block-Toeplitz matrices.
//!
//! A matrix of size `n*w` is determined by `w` lag blocks `C(0), ..., C(w-1)`,
//! each `n x n`: block `(r, c)` equals `C(r-c)` below the diagonal and
//! `C(c-r)^T` above it, with `C(0)` symmetric.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// One set of matrix cells forced to share a value.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryGroup {
    /// Block lag `d`.
    pub lag: usize,
    /// Row inside the lag block.
    pub row: usize,
    /// Column inside the lag block.
    pub col: usize,
    /// Every dense cell holding this value, both symmetric copies included.
    pub cells: Vec<(usize, usize)>,
}

/// Entry groups of the symmetric block-Toeplitz set for block size `n` and `w` lags.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockToeplitzIndex {
    n: usize,
    w: usize,
    groups: Vec<EntryGroup>,
}

impl BlockToeplitzIndex {
    pub fn new(n: usize, w: usize) -> Self {
        assert!(n >= 1 && w >= 1, "block size and lag count must be positive");
        let mut groups = Vec::with_capacity(Self::group_count_for(n, w));
        for i in 0..n {
            for j in i..n {
                let mut cells = Vec::with_capacity(2 * w);
                for b in 0..w {
                    cells.push((b * n + i, b * n + j));
                    if i != j {
                        cells.push((b * n + j, b * n + i));
                    }
                }
                groups.push(EntryGroup {
                    lag: 0,
                    row: i,
                    col: j,
                    cells,
                });
            }
        }
        for lag in 1..w {
            for i in 0..n {
                for j in 0..n {
                    let mut cells = Vec::with_capacity(2 * (w - lag));
                    for b in 0..w - lag {
                        let (r, c) = ((b + lag) * n + i, b * n + j);
                        cells.push((r, c));
                        cells.push((c, r));
                    }
                    groups.push(EntryGroup {
                        lag,
                        row: i,
                        col: j,
                        cells,
                    });
                }
            }
        }
        Self { n, w, groups }
    }

    /// `n(n+1)/2 + (w-1)n^2`, the number of free parameters.
    pub fn group_count_for(n: usize, w: usize) -> usize {
        n * (n + 1) / 2 + (w - 1) * n * n
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn dim(&self) -> usize {
        self.n * self.w
    }

    pub fn groups(&self) -> &[EntryGroup] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Assembles lag blocks from one value per group, in group order.
    pub fn assemble(&self, values: &[f64]) -> ToeplitzMatrix {
        debug_assert_eq!(values.len(), self.groups.len());
        let mut blocks = vec![DMatrix::zeros(self.n, self.n); self.w];
        for (g, &v) in self.groups.iter().zip(values) {
            blocks[g.lag][(g.row, g.col)] = v;
            if g.lag == 0 {
                blocks[0][(g.col, g.row)] = v;
            }
        }
        ToeplitzMatrix {
            n: self.n,
            w: self.w,
            blocks,
        }
    }

    fn check_square(&self, m: &DMatrix<f64>) -> Result<()> {
        let d = self.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if m.nrows() != d { m.nrows() } else { m.ncols() },
            });
        }
        Ok(())
    }
}

/// Symmetric block-Toeplitz matrix stored as its `w` lag blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzMatrix {
    n: usize,
    w: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl ToeplitzMatrix {
    /// Builds from lag blocks. `blocks[0]` must be symmetric.
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let w = blocks.len();
        if w == 0 {
            return Err(Error::ShapeMismatch("at least one lag block required".into()));
        }
        let n = blocks[0].nrows();
        for b in &blocks {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: if b.nrows() != n { b.nrows() } else { b.ncols() },
                });
            }
        }
        if blocks[0] != blocks[0].transpose() {
            return Err(Error::ShapeMismatch("lag-0 block is not symmetric".into()));
        }
        Ok(Self { n, w, blocks })
    }

    pub fn identity(n: usize, w: usize) -> Self {
        let mut blocks = vec![DMatrix::zeros(n, n); w];
        blocks[0] = DMatrix::identity(n, n);
        Self { n, w, blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn dim(&self) -> usize {
        self.n * self.w
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Value of dense cell `(r, c)`.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (br, bc) = (r / self.n, c / self.n);
        let (i, j) = (r % self.n, c % self.n);
        if br >= bc {
            self.blocks[br - bc][(i, j)]
        } else {
            self.blocks[bc - br][(j, i)]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| self.get(r, c))
    }
}

/// Closed-form minimizer over the block-Toeplitz set of
/// `-<dual, gamma> + (1/(2 rho)) ||theta - gamma||_F^2`.
///
/// Each group takes the value `sum(theta + rho * dual) / |group|`.
pub fn project_average(
    theta: &DMatrix<f64>,
    dual: &DMatrix<f64>,
    rho: f64,
    idx: &BlockToeplitzIndex,
) -> Result<ToeplitzMatrix> {
    idx.check_square(theta)?;
    idx.check_square(dual)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    let values: Vec<f64> = idx
        .groups
        .par_iter()
        .map(|g| {
            let sum: f64 = g
                .cells
                .iter()
                .map(|&(r, c)| theta[(r, c)] + rho * dual[(r, c)])
                .sum();
            sum / g.cells.len() as f64
        })
        .collect();
    Ok(idx.assemble(&values))
}

/// True when `m` is symmetric and constant on every group, both within `tol`.
pub fn is_block_toeplitz(m: &DMatrix<f64>, idx: &BlockToeplitzIndex, tol: f64) -> Result<bool> {
    idx.check_square(m)?;
    let d = idx.dim();
    for r in 0..d {
        for c in r + 1..d {
            if (m[(r, c)] - m[(c, r)]).abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(idx.groups.iter().all(|g| {
        let first = m[g.cells[0]];
        g.cells.iter().all(|&cell| (m[cell] - first).abs() <= tol)
    }))
}
