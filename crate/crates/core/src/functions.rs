//! Matrix functions of block matrices, evaluated on the canonical form.
//!
//! Since `B = Q D Q'` with `Q` orthonormal, `f(B) = Q f(D) Q'` and
//! `f(D) = diag(f(A), f(λ_1) I, …, f(λ_K) I)`. Every function below
//! therefore costs one `K×K` dense operation plus `K` scalar evaluations,
//! and its result is again a block matrix on the same partition.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::block::CanonicalForm;
use crate::error::{Error, Result, SingularPart};
use crate::expm::expm;

/// Tolerated asymmetry of `A` (relative to `max(1, ‖A‖_max)`) for the
/// functions that need a symmetric core.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `det B` as sign and log-magnitude, safe against overflow when the
/// multiplicities `n_k - 1` are large.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDeterminant {
    /// `-1`, `0` or `1`.
    pub sign: f64,
    /// `ln |det B|`; `-∞` when singular.
    pub ln_abs: f64,
}

impl LogDeterminant {
    pub fn value(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }
}

/// `det B = det(A) Π_k λ_k^{n_k - 1}` in sign/log form. `O(K³)`.
pub fn log_determinant(cf: &CanonicalForm) -> LogDeterminant {
    let p = cf.partition();
    let lu = cf.a().clone().lu();
    let mut sign: f64 = lu.p().determinant();
    let mut ln_abs = 0.0;
    let u = lu.u();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        sign *= d.signum();
        ln_abs += d.abs().ln();
    }
    for (k, &lambda) in cf.lambdas().iter().enumerate() {
        let mult = p.size(k) - 1;
        if mult == 0 {
            continue;
        }
        if mult % 2 == 1 {
            sign *= lambda.signum();
        }
        ln_abs += mult as f64 * lambda.abs().ln();
    }
    if ln_abs == f64::NEG_INFINITY || sign.is_nan() {
        return LogDeterminant {
            sign: 0.0,
            ln_abs: f64::NEG_INFINITY,
        };
    }
    LogDeterminant { sign, ln_abs }
}

/// `det B`; `0` for singular input.
pub fn determinant(cf: &CanonicalForm) -> f64 {
    log_determinant(cf).value()
}

/// All `n` eigenvalues of `B` (possibly complex): those of `A` followed by
/// each `λ_k` repeated `n_k - 1` times.
pub fn eigenvalues(cf: &CanonicalForm) -> Vec<Complex<f64>> {
    let mut out: Vec<Complex<f64>> = cf.a().complex_eigenvalues().iter().copied().collect();
    push_lambdas(cf, |l| out.push(Complex::new(l, 0.0)));
    out
}

/// Eigenvalues of a symmetric `B`, ascending.
pub fn symmetric_eigenvalues(cf: &CanonicalForm) -> Result<Vec<f64>> {
    let a = symmetric_core(cf).map_err(Error::NotSymmetric)?;
    let mut out: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    push_lambdas(cf, |l| out.push(l));
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn push_lambdas(cf: &CanonicalForm, mut push: impl FnMut(f64)) {
    for (k, &l) in cf.lambdas().iter().enumerate() {
        for _ in 1..cf.partition().size(k) {
            push(l);
        }
    }
}

/// `(A + A')/2`, or the asymmetry when it exceeds [`SYMMETRY_TOL`].
fn symmetric_core(cf: &CanonicalForm) -> std::result::Result<DMatrix<f64>, f64> {
    let scale = cf.a().amax().max(1.0);
    let asym = cf.asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(asym);
    }
    Ok((cf.a() + cf.a().transpose()) * 0.5)
}

fn with_core(cf: &CanonicalForm, a: DMatrix<f64>, lambdas: Vec<f64>) -> CanonicalForm {
    CanonicalForm::new(cf.partition().clone(), a, lambdas)
        .expect("shape is preserved by matrix functions")
}

/// `B⁻¹ = Q diag(A⁻¹, 1/λ_1 I, …) Q'`.
///
/// Fails with [`Error::Singular`] when `A` is singular (pivot below
/// `K·ε·‖A‖_max`) or some `λ_k = 0` with `n_k ≥ 2`.
pub fn inverse(cf: &CanonicalForm) -> Result<CanonicalForm> {
    let p = cf.partition();
    for (k, &l) in cf.lambdas().iter().enumerate() {
        if p.size(k) > 1 && l == 0.0 {
            return Err(Error::Singular(SingularPart::Block(k)));
        }
    }
    let k = p.num_blocks();
    let lu = cf.a().clone().lu();
    let threshold = k as f64 * f64::EPSILON * cf.a().amax();
    if (0..k).any(|i| lu.u()[(i, i)].abs() <= threshold) {
        return Err(Error::Singular(SingularPart::Core));
    }
    let a_inv = lu.try_inverse().ok_or(Error::Singular(SingularPart::Core))?;
    Ok(with_core(cf, a_inv, cf.lambdas().iter().map(|l| 1.0 / l).collect()))
}

/// `B^q`. Negative powers go through [`inverse`].
pub fn power(cf: &CanonicalForm, q: i32) -> Result<CanonicalForm> {
    let base = if q < 0 { inverse(cf)? } else { cf.clone() };
    let e = q.unsigned_abs();
    let k = cf.partition().num_blocks();
    let mut result = DMatrix::<f64>::identity(k, k);
    let mut sq = base.a().clone();
    let mut bits = e;
    while bits > 0 {
        if bits & 1 == 1 {
            result = &result * &sq;
        }
        bits >>= 1;
        if bits > 0 {
            sq = &sq * &sq;
        }
    }
    let lambdas = base.lambdas().iter().map(|l| l.powi(e as i32)).collect();
    Ok(with_core(cf, result, lambdas))
}

/// `exp B` via a Padé approximant of `exp A` and scalar `e^{λ_k}`.
pub fn mexp(cf: &CanonicalForm) -> CanonicalForm {
    with_core(cf, expm(cf.a()), cf.lambdas().iter().map(|l| l.exp()).collect())
}

/// Real principal logarithm `log B`.
///
/// Requires `A` symmetric (asymmetry up to [`SYMMETRY_TOL`] is averaged
/// away) and positive definite, and every `λ_k > 0` for blocks with
/// `n_k ≥ 2`; anything else has no real logarithm here and fails with
/// [`Error::NotRealLoggable`].
pub fn mlog(cf: &CanonicalForm) -> Result<CanonicalForm> {
    let p = cf.partition();
    for (k, &l) in cf.lambdas().iter().enumerate() {
        if p.size(k) > 1 && !(l > 0.0) {
            return Err(Error::NotRealLoggable(format!(
                "block {k} has lambda = {l} <= 0"
            )));
        }
    }
    let a = symmetric_core(cf).map_err(|asym| {
        Error::NotRealLoggable(format!("core matrix is not symmetric (asymmetry {asym:e})"))
    })?;
    let eig = SymmetricEigen::new(a);
    if let Some(min) = eig.eigenvalues.iter().copied().find(|&v| !(v > 0.0)) {
        return Err(Error::NotRealLoggable(format!(
            "core matrix is not positive definite (eigenvalue {min:e})"
        )));
    }
    let logs = eig.eigenvalues.map(f64::ln);
    let v = &eig.eigenvectors;
    let log_a = v * DMatrix::from_diagonal(&logs) * v.transpose();
    let log_a = (&log_a + log_a.transpose()) * 0.5;
    Ok(with_core(cf, log_a, cf.lambdas().iter().map(|l| l.ln()).collect()))
}

/// A block-structure-preserving matrix function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFunction {
    Inverse,
    Exp,
    Log,
    Power(i32),
}

impl MatrixFunction {
    /// Evaluate on a canonical form.
    pub fn apply(self, cf: &CanonicalForm) -> Result<CanonicalForm> {
        match self {
            MatrixFunction::Inverse => inverse(cf),
            MatrixFunction::Exp => Ok(mexp(cf)),
            MatrixFunction::Log => mlog(cf),
            MatrixFunction::Power(q) => power(cf, q),
        }
    }
}

/// Equal block sizes: `B = A ⊗ P + Λ ⊗ P⊥` with `P = 11'/m`, hence
/// `h(B) = h(A) ⊗ P + h(Λ) ⊗ P⊥`.
///
/// The canonical result is the same as the general path (the formulas
/// coincide); use [`kronecker_expand`] to build the dense matrix
/// directly from the Kronecker form. Fails with [`Error::UnequalBlocks`]
/// when block sizes differ.
pub fn kron_fast_path(cf: &CanonicalForm, f: MatrixFunction) -> Result<CanonicalForm> {
    cf.partition().common_size().ok_or(Error::UnequalBlocks)?;
    f.apply(cf)
}

/// Dense `A ⊗ P + Λ ⊗ (I_m - P)` for a canonical form with equal block
/// size `m`.
pub fn kronecker_expand(cf: &CanonicalForm) -> Result<DMatrix<f64>> {
    let m = cf.partition().common_size().ok_or(Error::UnequalBlocks)?;
    let inv_m = 1.0 / m as f64;
    let p = DMatrix::from_element(m, m, inv_m);
    let p_perp = DMatrix::<f64>::identity(m, m) - &p;
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(cf.lambdas()));
    Ok(cf.a().kronecker(&p) + lambda.kronecker(&p_perp))
}
