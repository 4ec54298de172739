//! Compressed block matrices and their canonical form.
//!
//! A block matrix on partition `(n_1, …, n_K)` is fully described by `K`
//! diagonal values `d_i` and a `K×K` grid `b_ij`: diagonal block `[i,i]`
//! has `d_i` on its diagonal and `b_ii` elsewhere, off-diagonal block
//! `[i,j]` is the constant `b_ij`. With the rotation `Q` of
//! [`Rotation`](crate::Rotation) every such matrix factors as
//! `B = Q D Q'` where `D = diag(A, λ_1 I_{n_1-1}, …, λ_K I_{n_K-1})` and
//!
//! ```text
//! a_ij = b_ij √(n_i n_j)          (i ≠ j)
//! a_ii = d_i + (n_i - 1) b_ii
//! λ_i  = d_i - b_ii
//! ```
//!
//! [`CanonicalForm`] holds `(A, λ)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::partition::BlockPartition;

/// Default tolerance for structural checks (max-abs).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Default tolerance for comparing a reconstruction with its source (max-abs).
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

/// An `n×n` block matrix stored as its `K` diagonal values and `K×K`
/// block values.
///
/// `b_ii` of a block of size one never appears in the expansion; it is
/// stored as `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockMatrixRepr", into = "BlockMatrixRepr")]
pub struct BlockMatrix {
    partition: BlockPartition,
    diag: Vec<f64>,
    blocks: DMatrix<f64>,
}

impl BlockMatrix {
    pub fn new(partition: BlockPartition, diag: Vec<f64>, mut blocks: DMatrix<f64>) -> Result<Self> {
        let k = partition.num_blocks();
        if diag.len() != k {
            return Err(dim_mismatch(format!("{k} diagonal values"), diag.len()));
        }
        if blocks.shape() != (k, k) {
            return Err(dim_mismatch(
                format!("{k}x{k} block values"),
                format!("{}x{}", blocks.nrows(), blocks.ncols()),
            ));
        }
        for i in 0..k {
            if partition.size(i) == 1 {
                blocks[(i, i)] = 0.0;
            }
        }
        Ok(Self {
            partition,
            diag,
            blocks,
        })
    }

    /// The `n×n` identity on `partition`.
    pub fn identity(partition: BlockPartition) -> Self {
        let k = partition.num_blocks();
        Self {
            partition,
            diag: vec![1.0; k],
            blocks: DMatrix::zeros(k, k),
        }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Diagonal values `d_i`.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Block values `b_ij`.
    pub fn blocks(&self) -> &DMatrix<f64> {
        &self.blocks
    }

    /// Whether `b_ij == b_ji` for every pair of blocks.
    pub fn is_symmetric(&self) -> bool {
        self.blocks == self.blocks.transpose()
    }

    /// Dense `n×n` expansion.
    pub fn expand(&self) -> DMatrix<f64> {
        let p = &self.partition;
        let n = p.dim();
        let k = p.num_blocks();
        let mut out = DMatrix::zeros(n, n);
        for bj in 0..k {
            for c in p.range(bj) {
                for bi in 0..k {
                    let v = self.blocks[(bi, bj)];
                    for r in p.range(bi) {
                        out[(r, c)] = v;
                    }
                }
                out[(c, c)] = self.diag[bj];
            }
        }
        out
    }

    /// Rotate into canonical form. `O(K²)`.
    pub fn canonicalize(&self) -> CanonicalForm {
        let p = &self.partition;
        let k = p.num_blocks();
        let mut a = DMatrix::zeros(k, k);
        for j in 0..k {
            for i in 0..k {
                a[(i, j)] = if i == j {
                    self.diag[i] + (p.size(i) as f64 - 1.0) * self.blocks[(i, i)]
                } else {
                    self.blocks[(i, j)] * ((p.size(i) * p.size(j)) as f64).sqrt()
                };
            }
        }
        let lambdas = (0..k).map(|i| self.diag[i] - self.blocks[(i, i)]).collect();
        CanonicalForm {
            partition: p.clone(),
            a,
            lambdas,
        }
    }

    /// Recover the block matrix from a dense `n×n` matrix.
    ///
    /// Diagonal entries, within-block off-diagonal entries and the entries
    /// of each off-diagonal block are averaged separately (left to right,
    /// column-major); any entry further than `tol` from its group's value
    /// is a [`Error::StructureViolation`]. A group whose entries are all
    /// identical is taken verbatim, so `compress(expand(B), 0)` is exact.
    pub fn compress(m: &DMatrix<f64>, partition: &BlockPartition, tol: f64) -> Result<Self> {
        let n = partition.dim();
        if m.shape() != (n, n) {
            return Err(dim_mismatch(
                format!("{n}x{n} matrix"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let k = partition.num_blocks();
        let mut diag = vec![0.0; k];
        let mut blocks = DMatrix::zeros(k, k);
        let mut worst = (0.0f64, 0usize, 0usize);
        for bj in 0..k {
            for bi in 0..k {
                let rows = partition.range(bi);
                let cols = partition.range(bj);
                if bi == bj {
                    let d = fit_constant(cols.clone().map(|c| m[(c, c)]));
                    diag[bi] = d.value;
                    note(&mut worst, d.deviation, bi, bj);
                    if partition.size(bi) > 1 {
                        let off = fit_constant(cols.clone().flat_map(|c| {
                            rows.clone().filter(move |&r| r != c).map(move |r| m[(r, c)])
                        }));
                        blocks[(bi, bj)] = off.value;
                        note(&mut worst, off.deviation, bi, bj);
                    }
                } else {
                    let fit = fit_constant(
                        cols.clone()
                            .flat_map(|c| rows.clone().map(move |r| m[(r, c)])),
                    );
                    blocks[(bi, bj)] = fit.value;
                    note(&mut worst, fit.deviation, bi, bj);
                }
            }
        }
        // NaN deviations fail this comparison too.
        if !(worst.0 <= tol) {
            return Err(Error::StructureViolation {
                row_block: worst.1,
                col_block: worst.2,
                deviation: worst.0,
                tol,
            });
        }
        Self::new(partition.clone(), diag, blocks)
    }

    /// `B'`, a block matrix on the same partition.
    pub fn transpose(&self) -> Self {
        Self {
            partition: self.partition.clone(),
            diag: self.diag.clone(),
            blocks: self.blocks.transpose(),
        }
    }
}

fn note(worst: &mut (f64, usize, usize), deviation: f64, bi: usize, bj: usize) {
    if !worst.0.is_nan() && !(deviation <= worst.0) {
        *worst = (deviation, bi, bj);
    }
}

struct ConstantFit {
    value: f64,
    deviation: f64,
}

fn fit_constant<I: Iterator<Item = f64> + Clone>(values: I) -> ConstantFit {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return ConstantFit {
            value: 0.0,
            deviation: 0.0,
        };
    };
    if !first.is_nan() && it.all(|v| v == first) {
        return ConstantFit {
            value: first,
            deviation: 0.0,
        };
    }
    let (sum, count) = values.clone().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    let mean = sum / count as f64;
    let deviation = values.fold(0.0f64, |acc, v| {
        let d = (v - mean).abs();
        if d.is_nan() || d > acc {
            d
        } else {
            acc
        }
    });
    ConstantFit {
        value: mean,
        deviation,
    }
}

/// Find the contiguous block partition of a dense matrix.
///
/// Indices are merged greedily from left to right: index `j` joins the
/// current block when its diagonal entry, its entries inside the block and
/// its row and column outside the block all agree (within `tol`) with the
/// block's first index. Blocks with identical parameters that happen to be
/// adjacent are merged, which yields an equally valid, coarser partition.
/// `O(n²)`.
pub fn infer_partition(m: &DMatrix<f64>, tol: f64) -> Result<BlockPartition> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(dim_mismatch(
            "non-empty square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let close = |x: f64, y: f64| (x - y).abs() <= tol;
    let mut sizes = Vec::new();
    let mut start = 0;
    for j in 1..=n {
        let joins = j < n && {
            let within = m[(start, start + 1)];
            close(m[(j, j)], m[(start, start)])
                && (start..j).all(|t| close(m[(j, t)], within) && close(m[(t, j)], within))
                && (0..n)
                    .filter(|&c| c < start || c > j)
                    .all(|c| close(m[(j, c)], m[(start, c)]) && close(m[(c, j)], m[(c, start)]))
        };
        if !joins {
            sizes.push(j - start);
            start = j;
        }
    }
    BlockPartition::new(sizes)
}

/// The pair `(A, λ)` with `B = Q diag(A, λ_1 I, …, λ_K I) Q'`.
///
/// For a block of size one `λ_k` has multiplicity zero and carries no
/// information; it is pinned to `a_kk` so that canonical forms compare
/// equal whenever they describe the same matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    partition: BlockPartition,
    a: DMatrix<f64>,
    lambdas: Vec<f64>,
}

impl CanonicalForm {
    pub fn new(partition: BlockPartition, a: DMatrix<f64>, mut lambdas: Vec<f64>) -> Result<Self> {
        let k = partition.num_blocks();
        if a.shape() != (k, k) {
            return Err(dim_mismatch(
                format!("{k}x{k} core matrix"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if lambdas.len() != k {
            return Err(dim_mismatch(format!("{k} lambdas"), lambdas.len()));
        }
        for i in 0..k {
            if partition.size(i) == 1 {
                lambdas[i] = a[(i, i)];
            }
        }
        Ok(Self {
            partition,
            a,
            lambdas,
        })
    }

    /// Canonical form of the identity: `(I_K, 1)`.
    pub fn identity(partition: BlockPartition) -> Self {
        let k = partition.num_blocks();
        Self {
            partition,
            a: DMatrix::identity(k, k),
            lambdas: vec![1.0; k],
        }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// The `K×K` core matrix `A`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Within-block eigenvalues `λ_k`, each with multiplicity `n_k - 1`.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Back to `(d, b)`. `O(K²)`.
    pub fn decanonicalize(&self) -> BlockMatrix {
        let p = &self.partition;
        let k = p.num_blocks();
        let mut blocks = DMatrix::zeros(k, k);
        let mut diag = vec![0.0; k];
        for j in 0..k {
            for i in 0..k {
                if i != j {
                    blocks[(i, j)] = self.a[(i, j)] / ((p.size(i) * p.size(j)) as f64).sqrt();
                }
            }
            let nj = p.size(j);
            if nj == 1 {
                diag[j] = self.a[(j, j)];
            } else {
                let b = (self.a[(j, j)] - self.lambdas[j]) / nj as f64;
                blocks[(j, j)] = b;
                diag[j] = self.lambdas[j] + b;
            }
        }
        BlockMatrix {
            partition: p.clone(),
            diag,
            blocks,
        }
    }

    /// Dense `n×n` matrix `D = diag(A, λ_1 I_{n_1-1}, …, λ_K I_{n_K-1})`.
    pub fn expand_d(&self) -> DMatrix<f64> {
        let p = &self.partition;
        let k = p.num_blocks();
        let mut d = DMatrix::zeros(p.dim(), p.dim());
        d.view_mut((0, 0), (k, k)).copy_from(&self.a);
        for b in 0..k {
            let start = p.contrast_offset(b);
            for i in 0..p.size(b) - 1 {
                d[(start + i, start + i)] = self.lambdas[b];
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let k = self.a.nrows();
        let mut worst = 0.0f64;
        for j in 0..k {
            for i in 0..j {
                worst = worst.max((self.a[(i, j)] - self.a[(j, i)]).abs());
            }
        }
        worst
    }
}

/// A rectangular block matrix embedded into a square one by appending
/// zero blocks.
///
/// With row blocks `n_1..n_{K1}` and column blocks `n_1..n_{K2}`, the
/// square matrix lives on the longer of the two partitions. Its canonical
/// form `(A, λ)` then gives the original as `B = Q D Q̃'`, where `Q̃`
/// consists of the leading `rows()`/`cols()` rows of `Q` for the shorter
/// side (see [`PaddedBlockMatrix::original_shape`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBlockMatrix {
    square: BlockMatrix,
    row_blocks: usize,
    col_blocks: usize,
}

impl PaddedBlockMatrix {
    /// The zero-padded square block matrix.
    pub fn square(&self) -> &BlockMatrix {
        &self.square
    }

    /// `(K1, K2)`: row and column block counts of the original.
    pub fn block_shape(&self) -> (usize, usize) {
        (self.row_blocks, self.col_blocks)
    }

    /// `(rows, cols)` of the original dense matrix.
    pub fn original_shape(&self) -> (usize, usize) {
        let p = self.square.partition();
        (p.offset(self.row_blocks), p.offset(self.col_blocks))
    }

    /// Dense expansion of the original rectangular matrix.
    pub fn expand_original(&self) -> DMatrix<f64> {
        let (r, c) = self.original_shape();
        self.square.expand().view((0, 0), (r, c)).into_owned()
    }
}

/// Embed a `K1×K2` grid of block values into a square block matrix.
///
/// `diag` holds `d_i` for the `min(K1, K2)` diagonal blocks. The two
/// partitions must agree on their common leading blocks; blocks beyond
/// the shorter partition are filled with zeros (`d = b = 0`).
pub fn pad_rectangular(
    values: &DMatrix<f64>,
    diag: &[f64],
    row_partition: &BlockPartition,
    col_partition: &BlockPartition,
) -> Result<PaddedBlockMatrix> {
    let k1 = row_partition.num_blocks();
    let k2 = col_partition.num_blocks();
    if values.shape() != (k1, k2) {
        return Err(dim_mismatch(
            format!("{k1}x{k2} block values"),
            format!("{}x{}", values.nrows(), values.ncols()),
        ));
    }
    let common = k1.min(k2);
    if row_partition.sizes()[..common] != col_partition.sizes()[..common] {
        return Err(Error::InvalidPartition(
            "row and column partitions must share their leading block sizes".into(),
        ));
    }
    if diag.len() != common {
        return Err(dim_mismatch(format!("{common} diagonal values"), diag.len()));
    }
    let partition = if k1 >= k2 {
        row_partition.clone()
    } else {
        col_partition.clone()
    };
    let k = k1.max(k2);
    let mut blocks = DMatrix::zeros(k, k);
    blocks.view_mut((0, 0), (k1, k2)).copy_from(values);
    let mut full_diag = vec![0.0; k];
    full_diag[..common].copy_from_slice(diag);
    Ok(PaddedBlockMatrix {
        square: BlockMatrix::new(partition, full_diag, blocks)?,
        row_blocks: k1,
        col_blocks: k2,
    })
}

/// JSON wire form: `{"sizes": [...], "d": [...], "b": [[...], ...]}` with
/// `b` given row by row. A missing `d` means unit diagonal.
#[derive(Serialize, Deserialize)]
struct BlockMatrixRepr {
    sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl TryFrom<BlockMatrixRepr> for BlockMatrix {
    type Error = Error;

    fn try_from(r: BlockMatrixRepr) -> Result<Self> {
        let partition = BlockPartition::new(r.sizes)?;
        let k = partition.num_blocks();
        if r.b.len() != k || r.b.iter().any(|row| row.len() != k) {
            return Err(dim_mismatch(format!("{k}x{k} \"b\" grid"), "ragged or wrong size"));
        }
        let blocks = DMatrix::from_fn(k, k, |i, j| r.b[i][j]);
        let diag = r.d.unwrap_or_else(|| vec![1.0; k]);
        BlockMatrix::new(partition, diag, blocks)
    }
}

impl From<BlockMatrix> for BlockMatrixRepr {
    fn from(m: BlockMatrix) -> Self {
        let k = m.partition.num_blocks();
        Self {
            sizes: m.partition.sizes().to_vec(),
            d: Some(m.diag),
            b: (0..k)
                .map(|i| (0..k).map(|j| m.blocks[(i, j)]).collect())
                .collect(),
        }
    }
}
