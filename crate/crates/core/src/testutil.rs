use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{BlockMatrix, BlockPartition};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dense(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_block_matrix(rng: &mut impl Rng, sizes: &[usize], symmetric: bool) -> BlockMatrix {
    let k = sizes.len();
    let mut b = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    if symmetric {
        b = (&b + b.transpose()) * 0.5;
    }
    let d = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    BlockMatrix::new(BlockPartition::new(sizes.to_vec()).unwrap(), d, b).unwrap()
}

/// A symmetric positive definite block covariance: `A = GG' + I/2`,
/// `λ_k ∈ (0.3, 2)`.
pub fn random_covariance(rng: &mut impl Rng, sizes: &[usize]) -> crate::BlockCovariance {
    let k = sizes.len();
    let g = random_dense(rng, k, k);
    let a = &g * g.transpose() + DMatrix::identity(k, k) * 0.5;
    let a = (&a + a.transpose()) * 0.5;
    let lambdas = (0..k).map(|_| rng.random_range(0.3..2.0)).collect();
    let partition = BlockPartition::new(sizes.to_vec()).unwrap();
    let cf = crate::CanonicalForm::new(partition, a, lambdas).unwrap();
    crate::BlockCovariance::from_canonical(&cf).unwrap()
}
