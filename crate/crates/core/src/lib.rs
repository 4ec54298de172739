//! Structured linear algebra and Gaussian estimation for block matrices.
//!
//! A block matrix on a partition `(n_1, …, n_K)` of `n` is constant on each
//! off-diagonal block and has a common diagonal and a common off-diagonal
//! value inside each diagonal block. Every such matrix is `Q D Q'` for a
//! fixed orthonormal `Q` and `D = diag(A, λ_1 I, …, λ_K I)` with a `K×K`
//! core `A`, which turns `O(n³)` operations into `O(K³)` ones.
//!
//! ```
//! use blockcanon::{BlockMatrix, BlockPartition, inverse};
//! use nalgebra::DMatrix;
//!
//! let p = BlockPartition::new(vec![3, 2]).unwrap();
//! let b = BlockMatrix::new(p, vec![1.0, 1.0], DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.3])).unwrap();
//! let inv = inverse(&b.canonicalize()).unwrap().decanonicalize();
//! let eye = b.expand() * inv.expand();
//! assert!((eye - DMatrix::identity(5, 5)).amax() < 1e-12);
//! ```

mod block;
mod correlation;
mod error;
mod expm;
mod functions;
pub mod io;
mod mle;
mod partition;
mod rotation;
pub mod simulate;

#[cfg(test)]
mod testutil;

pub use block::{
    infer_partition, pad_rectangular, BlockMatrix, CanonicalForm, PaddedBlockMatrix, RECONSTRUCTION_TOL,
    STRUCTURAL_TOL,
};
pub use correlation::{
    is_valid_correlation, to_param, BlockCorrelation, CorrelationParam, OffendingBlock, Validity, ValidityStatus,
};
pub use error::{Error, Result, SingularPart};
pub use expm::expm;
pub use functions::{
    determinant, eigenvalues, inverse, kron_fast_path, kronecker_expand, log_determinant, mexp, mlog, power,
    symmetric_eigenvalues, LogDeterminant, MatrixFunction, SYMMETRY_TOL,
};
pub use mle::{
    mle_block_correlation, mle_block_covariance, neg2_loglik, neg2_loglik_canonical, rotate_sample, sample_score,
    score, BlockCovariance, CorrelationFit, CovarianceFit, RotatedSample, ScoreVector,
};
pub use partition::BlockPartition;
pub use rotation::Rotation;
