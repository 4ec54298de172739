//! Dense reference kernels.
//!
//! Every routine here works on the full `n×n` matrix with a textbook
//! algorithm: partial-pivot LU for determinants, Gauss-Jordan elimination
//! for inverses, cyclic Jacobi rotations for symmetric eigenproblems, a
//! scaled Taylor series for the exponential. Nothing exploits block
//! structure. The crate exists so tests and benchmarks have ground truth
//! that shares no code with the structured fast paths in `blockcanon`.
//!
//! `nalgebra::DMatrix` is used purely as a container (and for plain
//! matrix products).

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
}

pub type Result<T> = std::result::Result<T, OracleError>;

fn ensure_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(OracleError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn ensure_symmetric(m: &DMatrix<f64>) -> Result<usize> {
    let n = ensure_square(m)?;
    let scale = max_abs(m).max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-10 * scale {
        return Err(OracleError::NotSymmetric(worst));
    }
    Ok(n)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// `max |a_ij - b_ij|`. Panics on shape mismatch.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_rows(r: usize, c: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, data)
}

/// Determinant by LU factorisation with partial pivoting.
pub fn det(m: &DMatrix<f64>) -> Result<f64> {
    let n = ensure_square(m)?;
    let mut a = to_rows(m);
    let mut det = 1.0;
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if a[i * n + k].abs() > a[p * n + k].abs() {
                p = i;
            }
        }
        if a[p * n + k] == 0.0 {
            return Ok(0.0);
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            det = -det;
        }
        let pivot = a[k * n + k];
        det *= pivot;
        for i in k + 1..n {
            let f = a[i * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    Ok(det)
}

/// Inverse by in-place Gauss-Jordan elimination with partial pivoting.
pub fn inv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_square(m)?;
    let scale = max_abs(m);
    if n == 0 {
        return Ok(m.clone());
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(OracleError::Singular);
    }
    let mut a = to_rows(m);
    let mut swaps = Vec::with_capacity(n);
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if a[i * n + k].abs() > a[p * n + k].abs() {
                p = i;
            }
        }
        if a[p * n + k].abs() <= 1e-14 * scale {
            return Err(OracleError::Singular);
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
        }
        swaps.push(p);

        let inv_pivot = 1.0 / a[k * n + k];
        a[k * n + k] = 1.0;
        for x in &mut a[k * n..(k + 1) * n] {
            *x *= inv_pivot;
        }
        let pivot_row = a[k * n..(k + 1) * n].to_vec();
        for (i, row) in a.chunks_exact_mut(n).enumerate() {
            if i == k {
                continue;
            }
            let f = row[k];
            if f == 0.0 {
                continue;
            }
            row[k] = 0.0;
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                *x -= f * p;
            }
        }
    }
    for k in (0..n).rev() {
        let p = swaps[k];
        if p != k {
            for row in a.chunks_exact_mut(n) {
                row.swap(k, p);
            }
        }
    }
    Ok(from_rows(n, n, &a))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns.
pub fn eig_sym(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = ensure_symmetric(m)?;
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= 1e-15 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok((values, vectors))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by Taylor series after scaling by `2^-s`, followed
/// by `s` squarings.
pub fn exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_square(m)?;
    let norm = one_norm(m);
    let mut s = 0u32;
    while norm / 2f64.powi(s as i32) > 0.5 {
        s += 1;
    }
    let scaled = m / 2f64.powi(s as i32);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..60 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if max_abs(&term) <= 1e-18 * max_abs(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Principal logarithm of a symmetric positive definite matrix via its
/// eigendecomposition.
pub fn log_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = eig_sym(m)?;
    if values.iter().any(|&v| v <= 0.0) {
        return Err(OracleError::NotSpd);
    }
    let logs = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|v| v.ln()),
    ));
    Ok(&vectors * logs * vectors.transpose())
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_symmetric(m)?;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(OracleError::NotSpd);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Gaussian `-2 log L` summed over the rows of `observations` (`N×n`), for
/// a mean-zero normal with covariance `sigma`:
/// `N n log 2π + N log det Σ + Σ_s x_s' Σ⁻¹ x_s`.
pub fn neg2_loglik(sigma: &DMatrix<f64>, observations: &DMatrix<f64>) -> Result<f64> {
    let n = ensure_square(sigma)?;
    assert_eq!(observations.ncols(), n, "observation width must match sigma");
    let l = cholesky(sigma)?;
    let logdet: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let mut quad = 0.0;
    let mut z = vec![0.0; n];
    for s in 0..observations.nrows() {
        // forward substitution L z = x
        for i in 0..n {
            let mut acc = observations[(s, i)];
            for k in 0..i {
                acc -= l[(i, k)] * z[k];
            }
            z[i] = acc / l[(i, i)];
        }
        quad += z.iter().map(|v| v * v).sum::<f64>();
    }
    let big_n = observations.nrows() as f64;
    Ok(big_n * n as f64 * (2.0 * std::f64::consts::PI).ln() + big_n * logdet + quad)
}

/// Orthonormal complement of the mean vector used when materialising `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complement {
    /// Helmert contrasts: column `j` is `(1,…,1,-j,0,…)/√(j(j+1))`.
    Helmert,
    /// Columns `2..m` of the Householder reflector mapping `e_1` to the mean vector.
    Householder,
}

fn complement_columns(m: usize, kind: Complement) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(m, m.saturating_sub(1));
    match kind {
        Complement::Helmert => {
            for j in 1..m {
                let norm = ((j * (j + 1)) as f64).sqrt();
                for i in 0..j {
                    out[(i, j - 1)] = 1.0 / norm;
                }
                out[(j, j - 1)] = -(j as f64) / norm;
            }
        }
        Complement::Householder => {
            if m > 1 {
                let v = 1.0 / (m as f64).sqrt();
                let mut w = vec![-v; m];
                w[0] += 1.0;
                let ww: f64 = w.iter().map(|x| x * x).sum();
                for j in 1..m {
                    for i in 0..m {
                        let e = if i == j { 1.0 } else { 0.0 };
                        out[(i, j - 1)] = e - 2.0 * w[i] * w[j] / ww;
                    }
                }
            }
        }
    }
    out
}

/// Explicit rotation matrix `Q` for block sizes `sizes`: the first `K`
/// columns are the normalised block indicator vectors, followed by each
/// block's orthonormal complement in block order.
pub fn materialize_q(sizes: &[usize], complement: Complement) -> DMatrix<f64> {
    let n: usize = sizes.iter().sum();
    let k = sizes.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut row = 0;
    let mut col = k;
    for (b, &m) in sizes.iter().enumerate() {
        let v = 1.0 / (m as f64).sqrt();
        for i in 0..m {
            q[(row + i, b)] = v;
        }
        let comp = complement_columns(m, complement);
        for c in 0..m.saturating_sub(1) {
            for i in 0..m {
                q[(row + i, col + c)] = comp[(i, c)];
            }
        }
        row += m;
        col += m.saturating_sub(1);
    }
    q
}
