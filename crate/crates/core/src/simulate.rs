//! Draws from `N(0, Σ)` for a block covariance given in canonical form.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::block::CanonicalForm;
use crate::error::{dim_mismatch, Error, Result, SingularPart};
use crate::rotation::Rotation;

/// `n_obs` independent draws, one per row (`N×n`).
///
/// Each observation is generated in rotated coordinates (`y_0 = Lz` with
/// `LL' = A`, `y_k = √λ_k z`) and rotated back, so the cost is
/// `O(K³ + N(K² + n))`. Standard normals are consumed observation by
/// observation, `n` at a time. `A` must be symmetric positive definite and
/// every `λ_k ≥ 0`.
pub fn sample_gaussian<R: Rng + ?Sized>(cf: &CanonicalForm, n_obs: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = cf.partition();
    let k = p.num_blocks();
    let n = p.dim();
    if n_obs == 0 {
        return Err(dim_mismatch("at least one observation", 0));
    }
    for (b, &l) in cf.lambdas().iter().enumerate() {
        if p.size(b) > 1 && !(l >= 0.0) {
            return Err(Error::Singular(SingularPart::Block(b)));
        }
    }
    let a = (cf.a() + cf.a().transpose()) * 0.5;
    let chol = a.cholesky().ok_or(Error::Singular(SingularPart::Core))?;
    let l = chol.l();
    let scales: Vec<f64> = (0..k).map(|b| cf.lambdas()[b].max(0.0).sqrt()).collect();
    let mut y = DMatrix::zeros(n, n_obs);
    for mut col in y.column_iter_mut() {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        col.rows_mut(0, k).copy_from(&(&l * z.rows(0, k)));
        for b in 0..k {
            let start = p.contrast_offset(b);
            for i in start..start + p.size(b) - 1 {
                col[i] = scales[b] * z[i];
            }
        }
    }
    Ok(Rotation::new(p.clone()).rotate_back(&y)?.transpose())
}
