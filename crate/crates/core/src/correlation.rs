//! Block correlation matrices.
//!
//! A block correlation matrix is a symmetric block matrix with unit
//! diagonal, within-block correlations `ρ_kk` and between-block
//! correlations `ρ_ij`. Its canonical form has `a_ii = 1 + (n_i - 1)ρ_ii`,
//! `a_ij = ρ_ij √(n_i n_j)` and `λ_i = 1 - ρ_ii`, so `C` is a nonsingular
//! correlation matrix exactly when `A` is positive definite and
//! `|ρ_ii| < 1`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::block::{BlockMatrix, CanonicalForm};
use crate::error::{dim_mismatch, Error, Result};
use crate::functions::mlog;
use crate::partition::BlockPartition;

/// Excess over `|ρ| = 1` that is clamped rather than rejected.
const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCorrelation {
    partition: BlockPartition,
    rho: DMatrix<f64>,
}

impl BlockCorrelation {
    /// Build from the `K×K` matrix of block correlations.
    ///
    /// `rho` must be symmetric and within `[-1, 1]` up to `1e-12`
    /// (small excesses are clamped and asymmetries averaged). The
    /// within-block entry of a size-one block is meaningless and stored as
    /// `0`. Positive definiteness is *not* checked here; see
    /// [`is_valid_correlation`].
    pub fn new(partition: BlockPartition, rho: DMatrix<f64>) -> Result<Self> {
        let k = partition.num_blocks();
        if rho.shape() != (k, k) {
            return Err(dim_mismatch(
                format!("{k}x{k} correlations"),
                format!("{}x{}", rho.nrows(), rho.ncols()),
            ));
        }
        let mut sym = rho.clone();
        for j in 0..k {
            for i in 0..k {
                let (x, y) = (rho[(i, j)], rho[(j, i)]);
                if !x.is_finite() {
                    return Err(Error::InvalidCorrelation(format!("entry ({i},{j}) is {x}")));
                }
                if (x - y).abs() > CLAMP_TOL {
                    return Err(Error::InvalidCorrelation(format!(
                        "not symmetric at ({i},{j}): {x} vs {y}"
                    )));
                }
                let v = 0.5 * (x + y);
                if v.abs() > 1.0 + CLAMP_TOL {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i},{j}) = {v} outside [-1, 1]"
                    )));
                }
                sym[(i, j)] = v.clamp(-1.0, 1.0);
            }
            if partition.size(j) == 1 {
                sym[(j, j)] = 0.0;
            }
        }
        Ok(Self {
            partition,
            rho: sym,
        })
    }

    /// Read a block matrix with unit diagonal (within `tol`) as a
    /// correlation matrix.
    pub fn from_block_matrix(b: &BlockMatrix, tol: f64) -> Result<Self> {
        if let Some((k, d)) = b.diag().iter().enumerate().find(|(_, d)| (*d - 1.0).abs() > tol) {
            return Err(Error::InvalidCorrelation(format!(
                "diagonal value of block {k} is {d}, not 1"
            )));
        }
        Self::new(b.partition().clone(), b.blocks().clone())
    }

    /// Canonical form of a correlation matrix given only `(A, λ)`: the block
    /// correlations are read off `A` (`ρ_ii = (a_ii - 1)/(n_i - 1)`), so `λ`
    /// is implied and not needed.
    pub fn from_core(partition: BlockPartition, a: &DMatrix<f64>) -> Result<Self> {
        let k = partition.num_blocks();
        if a.shape() != (k, k) {
            return Err(dim_mismatch(
                format!("{k}x{k} core matrix"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let rho = DMatrix::from_fn(k, k, |i, j| {
            if i != j {
                a[(i, j)] / ((partition.size(i) * partition.size(j)) as f64).sqrt()
            } else if partition.size(i) > 1 {
                (a[(i, i)] - 1.0) / (partition.size(i) as f64 - 1.0)
            } else {
                0.0
            }
        });
        Self::new(partition, rho)
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// The symmetric `K×K` matrix of block correlations.
    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn to_block_matrix(&self) -> BlockMatrix {
        BlockMatrix::new(
            self.partition.clone(),
            vec![1.0; self.partition.num_blocks()],
            self.rho.clone(),
        )
        .expect("shapes were checked on construction")
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        self.to_block_matrix().canonicalize()
    }

    /// Dense `n×n` correlation matrix.
    pub fn expand(&self) -> DMatrix<f64> {
        self.to_block_matrix().expand()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityStatus {
    /// Positive definite.
    Valid,
    /// Positive semidefinite but singular, within tolerance.
    SemidefiniteBoundary,
    /// Has a negative eigenvalue.
    Invalid,
}

/// A block whose within-block correlation sits at `|ρ_kk| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffendingBlock {
    pub block: usize,
    pub rho: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validity {
    pub status: ValidityStatus,
    /// Smallest eigenvalue of `A`.
    pub min_eig_a: f64,
    /// Smallest `λ_k` over blocks with `n_k ≥ 2`, if any.
    pub min_lambda: Option<f64>,
    /// Band around zero treated as the boundary.
    pub tolerance: f64,
    /// Blocks with `|ρ_kk| ≥ 1 - tolerance`.
    pub offending_blocks: Vec<OffendingBlock>,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        self.status == ValidityStatus::Valid
    }
}

/// Classify a block correlation matrix as positive definite, on the
/// semidefinite boundary, or invalid.
///
/// The boundary band is `1e-12·max(1, ‖A‖_max)` around zero for the
/// eigenvalues of `A` and around one for `|ρ_kk|`. Both diagnostics are
/// always reported.
pub fn is_valid_correlation(c: &BlockCorrelation) -> Validity {
    let cf = c.canonical_form();
    let p = c.partition();
    let tolerance = 1e-12 * cf.a().amax().max(1.0);
    let min_eig_a = SymmetricEigen::new(cf.a().clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let min_lambda = (0..p.num_blocks())
        .filter(|&k| p.size(k) > 1)
        .map(|k| cf.lambdas()[k])
        .reduce(f64::min);
    let offending_blocks: Vec<_> = (0..p.num_blocks())
        .filter(|&k| p.size(k) > 1 && c.rho()[(k, k)].abs() >= 1.0 - tolerance)
        .map(|k| OffendingBlock {
            block: k,
            rho: c.rho()[(k, k)],
            lambda: cf.lambdas()[k],
        })
        .collect();
    let status = if min_eig_a < -tolerance {
        ValidityStatus::Invalid
    } else if min_eig_a <= tolerance || !offending_blocks.is_empty() {
        ValidityStatus::SemidefiniteBoundary
    } else {
        ValidityStatus::Valid
    };
    Validity {
        status,
        min_eig_a,
        min_lambda,
        tolerance,
        offending_blocks,
    }
}

/// Unconstrained coordinates of a block correlation matrix: the distinct
/// off-diagonal values of `log C`.
///
/// With `Ã = log A`, every entry of block `(i,j)`, `i ≠ j`, of `log C`
/// equals `ã_ij/√(n_i n_j)`, and the off-diagonal entries of diagonal
/// block `k` equal `(ã_kk - log(1 - ρ_kk))/n_k`. Collected in the
/// symmetric matrix `Λ_n⁻¹ [log A - log Λ_{1-ρ}] Λ_n⁻¹` with
/// `Λ_n = diag(√n_k)` and `Λ_{1-ρ} = diag(1 - ρ_kk)`; `gamma` is its lower
/// triangle, row by row. For a size-one block the diagonal entry is the
/// corresponding diagonal entry of `log C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationParam {
    #[serde(rename = "sizes")]
    partition: BlockPartition,
    gamma: Vec<f64>,
}

impl CorrelationParam {
    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// `K(K+1)/2` values: `(0,0), (1,0), (1,1), (2,0), …`.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// The symmetric `K×K` matrix of unique elements.
    pub fn unique_elements(&self) -> DMatrix<f64> {
        let k = self.partition.num_blocks();
        let mut u = DMatrix::zeros(k, k);
        let mut it = self.gamma.iter();
        for i in 0..k {
            for j in 0..=i {
                let v = *it.next().expect("gamma has K(K+1)/2 entries");
                u[(i, j)] = v;
                u[(j, i)] = v;
            }
        }
        u
    }

    /// Largest deviation between the unique elements and the
    /// corresponding off-diagonal entries of a dense `log C`.
    pub fn check_unique_elements(&self, log_c: &DMatrix<f64>) -> Result<f64> {
        let p = &self.partition;
        let n = p.dim();
        if log_c.shape() != (n, n) {
            return Err(dim_mismatch(
                format!("{n}x{n} matrix"),
                format!("{}x{}", log_c.nrows(), log_c.ncols()),
            ));
        }
        let u = self.unique_elements();
        let mut worst = 0.0f64;
        for c in 0..n {
            let bj = p.block_of(c).expect("index within n");
            for r in 0..n {
                if r == c {
                    continue;
                }
                let bi = p.block_of(r).expect("index within n");
                worst = worst.max((log_c[(r, c)] - u[(bi, bj)]).abs());
            }
        }
        Ok(worst)
    }
}

/// Map a valid block correlation matrix to its log-parametrization.
/// Fails with [`Error::NotRealLoggable`] when `C` is not positive definite.
pub fn to_param(c: &BlockCorrelation) -> Result<CorrelationParam> {
    let p = c.partition();
    let log_cf = mlog(&c.canonical_form())?;
    let k = p.num_blocks();
    let mut gamma = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in 0..=i {
            let mut v = log_cf.a()[(i, j)];
            if i == j {
                v -= (1.0 - c.rho()[(i, i)]).ln();
            }
            gamma.push(v / ((p.size(i) * p.size(j)) as f64).sqrt());
        }
    }
    Ok(CorrelationParam {
        partition: p.clone(),
        gamma,
    })
}
