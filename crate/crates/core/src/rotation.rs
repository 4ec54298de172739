//! The orthonormal rotation `Q` determined by a block partition.
//!
//! Columns `0..K` of `Q` are the normalised block indicators
//! `v_{n_k} = (1/√n_k, …)`; the remaining `n - K` columns are, block by
//! block, an orthonormal complement `v_{n_k⊥}`. The complement used here is
//! the Helmert basis: the `j`-th contrast of a block with entries
//! `x_1..x_m` is
//!
//! ```text
//! (x_1 + … + x_j - j·x_{j+1}) / √(j(j+1)),    j = 1..m-1
//! ```
//!
//! Both directions are applied with running sums in `O(n)` per column;
//! `Q` is never formed. Any other orthonormal complement yields the same
//! within-block sums of squares `y_k'y_k`, but different individual
//! contrasts, so downstream code should only rely on the former.

use nalgebra::DMatrix;

use crate::error::{dim_mismatch, Result};
use crate::partition::BlockPartition;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rotation {
    partition: BlockPartition,
}

impl Rotation {
    pub fn new(partition: BlockPartition) -> Self {
        Self { partition }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// `Q'x` for a single vector of length `n`.
    ///
    /// `out[k]` is `(1/√n_k) Σ_{i∈k} x_i`; block `k`'s contrasts follow at
    /// [`BlockPartition::contrast_offset`].
    pub fn rotate_slice(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.partition;
        assert_eq!(x.len(), p.dim(), "input length must equal n");
        assert_eq!(out.len(), p.dim(), "output length must equal n");
        for k in 0..p.num_blocks() {
            let block = &x[p.range(k)];
            let contrasts = &mut out[p.contrast_offset(k)..p.contrast_offset(k) + block.len() - 1];
            let mut prefix = 0.0;
            for (j, c) in contrasts.iter_mut().enumerate() {
                let j1 = (j + 1) as f64;
                prefix += block[j];
                *c = (prefix - j1 * block[j + 1]) / (j1 * (j1 + 1.0)).sqrt();
            }
            prefix += block[block.len() - 1];
            out[k] = prefix / (block.len() as f64).sqrt();
        }
    }

    /// `Qy` for a single vector of length `n`; inverse of [`Self::rotate_slice`].
    pub fn rotate_back_slice(&self, y: &[f64], out: &mut [f64]) {
        let p = &self.partition;
        assert_eq!(y.len(), p.dim(), "input length must equal n");
        assert_eq!(out.len(), p.dim(), "output length must equal n");
        for k in 0..p.num_blocks() {
            let m = p.size(k);
            let mean = y[k] / (m as f64).sqrt();
            let contrasts = &y[p.contrast_offset(k)..p.contrast_offset(k) + m - 1];
            let block = &mut out[p.range(k)];
            // x_i = mean - c_{i-1}(i-1)/√((i-1)i) + Σ_{j≥i} c_j/√(j(j+1)),  1-based i
            let mut suffix = 0.0;
            for i in (0..m).rev() {
                let mut v = mean + suffix;
                if i > 0 {
                    let j = i as f64;
                    let norm = (j * (j + 1.0)).sqrt();
                    v -= contrasts[i - 1] * j / norm;
                    suffix += contrasts[i - 1] / norm;
                }
                block[i] = v;
            }
        }
    }

    /// `Q'X` for an `n×m` matrix, column by column. `O(n·m)`.
    pub fn rotate(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.apply(x, Self::rotate_slice)
    }

    /// `QY` for an `n×m` matrix. `O(n·m)`.
    pub fn rotate_back(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.apply(y, Self::rotate_back_slice)
    }

    fn apply(&self, x: &DMatrix<f64>, f: fn(&Self, &[f64], &mut [f64])) -> Result<DMatrix<f64>> {
        let n = self.partition.dim();
        if x.nrows() != n {
            return Err(dim_mismatch(format!("{n} rows"), x.nrows()));
        }
        let mut out = DMatrix::zeros(n, x.ncols());
        for (src, dst) in x
            .as_slice()
            .chunks_exact(n)
            .zip(out.as_mut_slice().chunks_exact_mut(n))
        {
            f(self, src, dst);
        }
        Ok(out)
    }

    /// Dense `Q`. Only for inspection and tests; `O(n²)` memory.
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.partition.dim();
        let mut q = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let mut col = vec![0.0; n];
            self.rotate_back_slice(&e, &mut col);
            q.set_column(c, &nalgebra::DVector::from_vec(col));
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_dense, rng};
    use blockcanon_oracle::{materialize_q, max_abs_diff, Complement};

    fn rotation(sizes: &[usize]) -> Rotation {
        Rotation::new(BlockPartition::new(sizes.to_vec()).unwrap())
    }

    #[test]
    fn ones_rotate_to_scaled_mean() {
        let r = rotation(&[4]);
        let y = r.rotate(&DMatrix::from_element(4, 1, 1.0)).unwrap();
        assert_eq!(y[(0, 0)], 2.0);
        for i in 1..4 {
            assert!(y[(i, 0)].abs() < 1e-15);
        }
    }

    #[test]
    fn unit_vector_mean_coordinate() {
        let r = rotation(&[2, 2]);
        let mut e = DMatrix::zeros(4, 1);
        e[(0, 0)] = 1.0;
        let y = r.rotate(&e).unwrap();
        assert!((y[(0, 0)] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(y[(1, 0)], 0.0);
    }

    #[test]
    fn back_rotation_of_first_axis() {
        let r = rotation(&[4]);
        let mut e = DMatrix::zeros(4, 1);
        e[(0, 0)] = 1.0;
        assert_eq!(r.rotate_back(&e).unwrap(), DMatrix::from_element(4, 1, 0.5));
    }

    #[test]
    fn matches_dense_q() {
        let mut rng = rng(10);
        for sizes in [vec![3, 4], vec![2, 3], vec![1, 5, 1, 2], vec![7]] {
            let r = rotation(&sizes);
            let q = materialize_q(&sizes, Complement::Helmert);
            let n = q.nrows();
            let x = random_dense(&mut rng, n, 3);
            assert!(max_abs_diff(&r.rotate(&x).unwrap(), &(q.transpose() * &x)) < 1e-13);
            assert!(max_abs_diff(&r.rotate_back(&x).unwrap(), &(&q * &x)) < 1e-13);
            assert!(max_abs_diff(&r.materialize(), &q) < 1e-15);
        }
    }

    #[test]
    fn round_trip() {
        let mut rng = rng(11);
        let r = rotation(&[5, 1, 8, 2]);
        let x = random_dense(&mut rng, 16, 4);
        let back = r.rotate_back(&r.rotate(&x).unwrap()).unwrap();
        assert!(max_abs_diff(&back, &x) <= 1e-12);
    }

    #[test]
    fn materialized_q_is_orthonormal() {
        for sizes in [vec![1], vec![1, 1, 1], vec![3, 9, 2], vec![16, 16, 16, 16]] {
            let q = rotation(&sizes).materialize();
            let n = q.nrows();
            assert!(max_abs_diff(&(q.transpose() * &q), &DMatrix::identity(n, n)) <= 1e-12);
            assert!(max_abs_diff(&(&q * q.transpose()), &DMatrix::identity(n, n)) <= 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_row_count() {
        assert!(rotation(&[2, 2]).rotate(&DMatrix::zeros(3, 1)).is_err());
    }
}
