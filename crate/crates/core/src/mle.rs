//! Gaussian likelihood, closed-form estimators and scores for block
//! covariance and block correlation models.
//!
//! For `x ~ N(0, Σ)` with `Σ = Q D Q'` the rotated vector `y = Q'x` splits
//! into the block-mean coordinates `y_0` (length `K`, covariance `A`) and
//! the within-block contrasts `y_k` (length `n_k - 1`, covariance
//! `λ_k I`), all mutually independent. Per observation
//!
//! ```text
//! -2ℓ = n log 2π + log det A + y_0'A⁻¹y_0 + Σ_k [(n_k - 1) log λ_k + y_k'y_k/λ_k]
//! ```
//!
//! so a sample enters only through `S_0 = N⁻¹ Σ y_0 y_0'` and
//! `q_k = N⁻¹ Σ y_k'y_k`.
//!
//! The model has no mean parameter. Demeaning the data beforehand is a
//! common preprocessing step but it is outside this likelihood.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::Serialize;

use crate::block::{BlockMatrix, CanonicalForm};
use crate::correlation::{is_valid_correlation, BlockCorrelation, Validity};
use crate::error::{dim_mismatch, Error, Result, SingularPart};
use crate::partition::BlockPartition;
use crate::rotation::Rotation;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Sufficient statistics of a rotated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedSample {
    partition: BlockPartition,
    n_obs: usize,
    s0: DMatrix<f64>,
    q: Vec<f64>,
    rotated: Option<DMatrix<f64>>,
}

/// Rotate the rows of an `N×n` data matrix and accumulate `S_0` and `q`.
///
/// Observations are reduced in index order, so the result does not depend
/// on anything but the input. With `keep_rotated` the rotated data are
/// retained (`n×N`, one observation per column) for per-observation
/// scores. `O(nN + K²N)`.
pub fn rotate_sample(x: &DMatrix<f64>, partition: &BlockPartition, keep_rotated: bool) -> Result<RotatedSample> {
    let n = partition.dim();
    if x.ncols() != n {
        return Err(dim_mismatch(format!("{n} columns"), x.ncols()));
    }
    if x.nrows() == 0 {
        return Err(dim_mismatch("at least one observation", 0));
    }
    let n_obs = x.nrows();
    let y = Rotation::new(partition.clone()).rotate(&x.transpose())?;
    let k = partition.num_blocks();
    let inv_n = 1.0 / n_obs as f64;
    let y0 = y.rows(0, k);
    let mut s0 = (&y0 * y0.transpose()) * inv_n;
    for j in 0..k {
        for i in 0..j {
            let v = 0.5 * (s0[(i, j)] + s0[(j, i)]);
            s0[(i, j)] = v;
            s0[(j, i)] = v;
        }
    }
    let q = (0..k)
        .map(|b| {
            let rows = y.rows(partition.contrast_offset(b), partition.size(b) - 1);
            rows.norm_squared() * inv_n
        })
        .collect();
    Ok(RotatedSample {
        partition: partition.clone(),
        n_obs,
        s0,
        q,
        rotated: keep_rotated.then_some(y),
    })
}

impl RotatedSample {
    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Number of observations `N`.
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// `S_0 = N⁻¹ Σ_s y_{0s} y_{0s}'`.
    pub fn s0(&self) -> &DMatrix<f64> {
        &self.s0
    }

    /// `q_k = N⁻¹ Σ_s y_{ks}'y_{ks}`; zero for blocks of size one, which have
    /// no contrasts.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// The rotated observation `s` (length `n`), if the data were kept.
    pub fn observation(&self, s: usize) -> Option<&[f64]> {
        let y = self.rotated.as_ref()?;
        (s < self.n_obs).then(|| {
            let n = y.nrows();
            &y.as_slice()[s * n..(s + 1) * n]
        })
    }
}

/// A symmetric block covariance matrix: block variances `σ_k²` on the
/// diagonal, within-block covariances `σ_kk` and between-block covariances
/// `σ_ij`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BlockCovariance {
    matrix: BlockMatrix,
}

impl BlockCovariance {
    /// Fails with [`Error::NotSymmetric`] unless `b_ij == b_ji` exactly.
    pub fn new(matrix: BlockMatrix) -> Result<Self> {
        if !matrix.is_symmetric() {
            let b = matrix.blocks();
            return Err(Error::NotSymmetric((b - b.transpose()).amax()));
        }
        Ok(Self { matrix })
    }

    /// Build from block variances, within-block covariances and the
    /// between-block covariances (the diagonal of `between` is ignored).
    pub fn from_params(
        partition: BlockPartition,
        sigma2: Vec<f64>,
        within: &[f64],
        between: &DMatrix<f64>,
    ) -> Result<Self> {
        let k = partition.num_blocks();
        if within.len() != k {
            return Err(dim_mismatch(format!("{k} within-block covariances"), within.len()));
        }
        let mut blocks = between.clone();
        if blocks.shape() == (k, k) {
            for (i, &w) in within.iter().enumerate() {
                blocks[(i, i)] = w;
            }
        }
        Self::new(BlockMatrix::new(partition, sigma2, blocks)?)
    }

    /// The covariance with canonical form `cf`. `A` must be symmetric.
    pub fn from_canonical(cf: &CanonicalForm) -> Result<Self> {
        Self::new(cf.decanonicalize())
    }

    pub fn partition(&self) -> &BlockPartition {
        self.matrix.partition()
    }

    pub fn matrix(&self) -> &BlockMatrix {
        &self.matrix
    }

    /// `σ_k²`.
    pub fn sigma2(&self) -> &[f64] {
        self.matrix.diag()
    }

    /// `σ_kk`; zero for blocks of size one.
    pub fn sigma_within(&self) -> Vec<f64> {
        self.matrix.blocks().diagonal().iter().copied().collect()
    }

    /// `σ_ij` for `i ≠ j`.
    pub fn sigma_between(&self, i: usize, j: usize) -> f64 {
        self.matrix.blocks()[(i, j)]
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        self.matrix.canonicalize()
    }

    /// Dense `n×n` covariance.
    pub fn expand(&self) -> DMatrix<f64> {
        self.matrix.expand()
    }
}

fn check_partition(expected: &BlockPartition, found: &BlockPartition) -> Result<()> {
    if expected != found {
        return Err(dim_mismatch(format!("partition {:?}", expected.sizes()), format!("{:?}", found.sizes())));
    }
    Ok(())
}

fn core_cholesky(cf: &CanonicalForm) -> Result<Cholesky<f64, Dyn>> {
    let p = cf.partition();
    for (k, &l) in cf.lambdas().iter().enumerate() {
        if p.size(k) > 1 && !(l > 0.0) {
            return Err(Error::Singular(SingularPart::Block(k)));
        }
    }
    cf.a().clone().cholesky().ok_or(Error::Singular(SingularPart::Core))
}

/// Average `-2ℓ` per observation of a Gaussian model given in canonical
/// form. Equals the dense Gaussian `-2ℓ` with covariance
/// `cf.decanonicalize().expand()`.
///
/// Fails with [`Error::Singular`] unless `A` is positive definite and every
/// `λ_k > 0` (`n_k ≥ 2`).
pub fn neg2_loglik_canonical(cf: &CanonicalForm, sample: &RotatedSample) -> Result<f64> {
    let p = sample.partition();
    check_partition(p, cf.partition())?;
    let chol = core_cholesky(cf)?;
    let log_det_a = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = chol.solve(sample.s0()).trace();
    let within: f64 = (0..p.num_blocks())
        .filter(|&k| p.size(k) > 1)
        .map(|k| {
            let l = cf.lambdas()[k];
            (p.size(k) as f64 - 1.0) * l.ln() + sample.q()[k] / l
        })
        .sum();
    Ok(p.dim() as f64 * LN_2PI + log_det_a + trace + within)
}

/// Average `-2ℓ` per observation under `N(0, Σ)`.
pub fn neg2_loglik(sigma: &BlockCovariance, sample: &RotatedSample) -> Result<f64> {
    neg2_loglik_canonical(&sigma.canonical_form(), sample)
}

/// Output of [`mle_block_covariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFit {
    pub covariance: BlockCovariance,
    pub canonical: CanonicalForm,
    /// `Â` is not numerically positive definite or some `λ̂_k = 0`, so the
    /// estimate cannot be inverted.
    pub degenerate: bool,
}

/// Closed-form maximum likelihood estimate of a block covariance matrix:
/// `Â = S_0` and `λ̂_k = q_k/(n_k - 1)`.
///
/// Blocks of size one have no `λ̂`; their variance is `σ̂_k² = â_kk`.
pub fn mle_block_covariance(sample: &RotatedSample) -> Result<CovarianceFit> {
    let p = sample.partition();
    let lambdas = (0..p.num_blocks())
        .map(|k| match p.size(k) {
            1 => 0.0,
            m => sample.q()[k] / (m as f64 - 1.0),
        })
        .collect();
    let canonical = CanonicalForm::new(p.clone(), sample.s0().clone(), lambdas)?;
    let degenerate = match core_cholesky(&canonical) {
        Err(_) => true,
        Ok(chol) => {
            let floor = p.num_blocks() as f64 * f64::EPSILON * sample.s0().amax();
            chol.l_dirty().diagonal().iter().any(|v| v * v <= floor)
        }
    };
    Ok(CovarianceFit {
        covariance: BlockCovariance::from_canonical(&canonical)?,
        canonical,
        degenerate,
    })
}

/// Output of [`mle_block_correlation`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationFit {
    /// `σ̂_i² = N⁻¹ Σ_s X_{is}²`, one per column.
    pub variances: Vec<f64>,
    #[serde(rename = "rho", serialize_with = "serialize_rho")]
    pub correlation: BlockCorrelation,
    /// `Ã = N⁻¹ Σ_s ỹ_{0s} ỹ_{0s}'` of the standardized data.
    #[serde(serialize_with = "serialize_matrix")]
    pub a_tilde: DMatrix<f64>,
    /// `λ̃_k = (n_k - ã_kk)/(n_k - 1)`; absent for blocks of size one.
    pub lambda_tilde: Vec<Option<f64>>,
    /// The unconstrained estimate `q̃_k/(n_k - 1)` from the within-block
    /// contrasts of the standardized data; absent for blocks of size one.
    pub lambda_contrast: Vec<Option<f64>>,
    pub validity: Validity,
    /// The estimate is not a positive definite correlation matrix.
    pub invalid_estimate: bool,
    #[serde(skip)]
    standardized: RotatedSample,
}

fn serialize_rho<S: serde::Serializer>(c: &BlockCorrelation, s: S) -> std::result::Result<S::Ok, S::Error> {
    serialize_matrix(c.rho(), s)
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        seq.serialize_element(&row.iter().copied().collect::<Vec<_>>())?;
    }
    seq.end()
}

impl CorrelationFit {
    /// Largest `|λ̃_k - q̃_k/(n_k - 1)|`.
    ///
    /// For standardized data `q̃_k = n_k - ã_kk` holds identically, so this
    /// is zero up to rounding.
    pub fn lambda_discrepancy(&self) -> f64 {
        self.lambda_tilde
            .iter()
            .zip(&self.lambda_contrast)
            .filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
            .fold(0.0, f64::max)
    }

    /// Sufficient statistics of the standardized data.
    pub fn standardized_sample(&self) -> &RotatedSample {
        &self.standardized
    }

    /// Average `-2ℓ` per observation of the data under
    /// `N(0, S Ĉ S)`, `S = diag(σ̂)`.
    ///
    /// Fails with [`Error::Singular`] when the estimate is not positive
    /// definite.
    pub fn neg2_loglik(&self) -> Result<f64> {
        let log_scale: f64 = self.variances.iter().map(|v| v.ln()).sum();
        Ok(neg2_loglik_canonical(&self.correlation.canonical_form(), &self.standardized)? + log_scale)
    }
}

/// Block correlation estimate: standardize each column by its root mean
/// square, then `ρ̂_ij = ã_ij/√(n_i n_j)` and `ρ̂_ii = (ã_ii - 1)/(n_i - 1)`.
///
/// With unit variances imposed, `λ̃_k = 1 - ρ̂_kk` is implied by `Ã`. The
/// estimate is returned even if it is not positive definite; check
/// `invalid_estimate`.
pub fn mle_block_correlation(x: &DMatrix<f64>, partition: &BlockPartition) -> Result<CorrelationFit> {
    let n = partition.dim();
    if x.ncols() != n {
        return Err(dim_mismatch(format!("{n} columns"), x.ncols()));
    }
    let n_obs = x.nrows() as f64;
    let variances: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / n_obs).collect();
    if let Some(column) = variances.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::ZeroVariance { column });
    }
    let mut scaled = x.clone();
    for (mut c, v) in scaled.column_iter_mut().zip(&variances) {
        c /= v.sqrt();
    }
    let standardized = rotate_sample(&scaled, partition, false)?;
    let a = standardized.s0().clone();
    let k = partition.num_blocks();
    let mut clamped = false;
    let rho = DMatrix::from_fn(k, k, |i, j| {
        let (ni, nj) = (partition.size(i) as f64, partition.size(j) as f64);
        let r = if i != j {
            a[(i, j)] / (ni * nj).sqrt()
        } else if ni > 1.0 {
            (a[(i, i)] - 1.0) / (ni - 1.0)
        } else {
            0.0
        };
        if r.abs() > 1.0 {
            clamped = true;
        }
        r.clamp(-1.0, 1.0)
    });
    let correlation = BlockCorrelation::new(partition.clone(), rho)?;
    let mut lambda_tilde = Vec::with_capacity(k);
    let mut lambda_contrast = Vec::with_capacity(k);
    for b in 0..k {
        let m = partition.size(b) as f64;
        if m > 1.0 {
            lambda_tilde.push(Some((m - a[(b, b)]) / (m - 1.0)));
            lambda_contrast.push(Some(standardized.q()[b] / (m - 1.0)));
        } else {
            lambda_tilde.push(None);
            lambda_contrast.push(None);
        }
    }
    let validity = is_valid_correlation(&correlation);
    Ok(CorrelationFit {
        variances,
        invalid_estimate: clamped || !validity.is_valid(),
        correlation,
        a_tilde: a,
        lambda_tilde,
        lambda_contrast,
        validity,
        standardized,
    })
}

/// Gradient of `-2ℓ` with respect to the block covariance parameters.
///
/// `d_a` is `M = ∂(-2ℓ)/∂A`; the remaining fields follow from
/// `a_kk = σ_k² + (n_k - 1)σ_kk`, `λ_k = σ_k² - σ_kk` and
/// `a_ij = √(n_i n_j) σ_ij`. `d_lambda` is the gradient in the alternative
/// parametrization `(A, λ)`; it is zero for blocks of size one, as is
/// `d_sigma_within`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    #[serde(serialize_with = "serialize_matrix")]
    pub d_a: DMatrix<f64>,
    pub d_sigma2: Vec<f64>,
    pub d_sigma_within: Vec<f64>,
    /// `∂/∂σ_ij` for `i < j`, row by row: `(0,1), (0,2), …, (1,2), …`.
    pub d_sigma_between: Vec<f64>,
    pub d_lambda: Vec<f64>,
}

impl ScoreVector {
    fn from_parts(partition: &BlockPartition, m: DMatrix<f64>, d_lambda: Vec<f64>) -> Self {
        let k = partition.num_blocks();
        let size = |i: usize| partition.size(i) as f64;
        let d_sigma2 = (0..k).map(|i| m[(i, i)] + d_lambda[i]).collect();
        let d_sigma_within = (0..k)
            .map(|i| (size(i) - 1.0) * m[(i, i)] - d_lambda[i])
            .collect();
        let mut d_sigma_between = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                d_sigma_between.push(2.0 * (size(i) * size(j)).sqrt() * m[(i, j)]);
            }
        }
        Self {
            d_a: m,
            d_sigma2,
            d_sigma_within,
            d_sigma_between,
            d_lambda,
        }
    }

    /// Largest absolute coordinate over `σ²`, `σ_kk` and `σ_ij`.
    pub fn max_abs(&self) -> f64 {
        self.d_sigma2
            .iter()
            .chain(&self.d_sigma_within)
            .chain(&self.d_sigma_between)
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Score of a single rotated observation `y = Q'x` (length `n`).
pub fn score(sigma: &BlockCovariance, y: &[f64]) -> Result<ScoreVector> {
    let p = sigma.partition();
    if y.len() != p.dim() {
        return Err(dim_mismatch(format!("observation of length {}", p.dim()), y.len()));
    }
    let cf = sigma.canonical_form();
    let chol = core_cholesky(&cf)?;
    let k = p.num_blocks();
    let a_inv = chol.inverse();
    let w = chol.solve(&nalgebra::DVector::from_column_slice(&y[..k]));
    let m = &a_inv - &w * w.transpose();
    let d_lambda = (0..k)
        .map(|b| {
            let nb = p.size(b);
            if nb == 1 {
                return 0.0;
            }
            let l = cf.lambdas()[b];
            let start = p.contrast_offset(b);
            let yy: f64 = y[start..start + nb - 1].iter().map(|v| v * v).sum();
            (nb as f64 - 1.0) / l - yy / (l * l)
        })
        .collect();
    Ok(ScoreVector::from_parts(p, m, d_lambda))
}

/// Score summed over all observations of a sample, from its sufficient
/// statistics: `M = N(A⁻¹ - A⁻¹S_0A⁻¹)` and
/// `∂/∂λ_k = N((n_k - 1)/λ_k - q_k/λ_k²)`.
pub fn sample_score(sigma: &BlockCovariance, sample: &RotatedSample) -> Result<ScoreVector> {
    let p = sample.partition();
    check_partition(p, sigma.partition())?;
    let cf = sigma.canonical_form();
    let chol = core_cholesky(&cf)?;
    let n_obs = sample.n_obs() as f64;
    let a_inv = chol.inverse();
    let m = (&a_inv - &a_inv * sample.s0() * &a_inv) * n_obs;
    let d_lambda = (0..p.num_blocks())
        .map(|b| {
            let nb = p.size(b);
            if nb == 1 {
                return 0.0;
            }
            let l = cf.lambdas()[b];
            n_obs * ((nb as f64 - 1.0) / l - sample.q()[b] / (l * l))
        })
        .collect();
    Ok(ScoreVector::from_parts(p, m, d_lambda))
}
