//! The subcommands as library functions: each takes parsed inputs and
//! returns its result, leaving file handling to the binary.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use blockcanon::{
    infer_partition, inverse, is_valid_correlation, log_determinant, mle_block_correlation, neg2_loglik,
    rotate_sample, simulate::sample_gaussian, BlockCorrelation, BlockCovariance, BlockMatrix, BlockPartition,
    CanonicalForm, CorrelationFit, Error, LogDeterminant, MatrixFunction, Validity, ValidityStatus,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{exit, CliError, CliResult};
use crate::groups::{GroupMap, Grouping};
use crate::panel::Panel;
use crate::report::{mark_selected, ModelReport, Weighting};

fn data_for(panel: &Panel, groups: &Grouping, demean: bool) -> DMatrix<f64> {
    if demean {
        panel.demeaned().permuted(groups.order())
    } else {
        panel.permuted(groups.order())
    }
}

fn fit_level(x: &DMatrix<f64>, groups: &Grouping, partition: &BlockPartition) -> CliResult<CorrelationFit> {
    mle_block_correlation(x, partition).map_err(|e| match e {
        Error::ZeroVariance { column } => CliError {
            code: exit::DEGENERATE,
            message: format!("asset {:?} has zero second moment", groups.sorted_ids()[column]),
        },
        e => e.into(),
    })
}

/// Block correlation estimate at one level of the group hierarchy.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub level: usize,
    pub n_assets: usize,
    pub n_obs: usize,
    pub demeaned: bool,
    pub num_blocks: usize,
    pub block_labels: Vec<String>,
    pub block_sizes: Vec<usize>,
    /// Asset ids in the order used by every matrix in the estimate.
    pub asset_order: Vec<String>,
    #[serde(flatten)]
    pub fit: CorrelationFit,
    pub lambda_discrepancy: f64,
    /// `-2ℓ/(nN)`; absent when the estimate is not positive definite.
    pub neg2_loglik: Option<f64>,
}

pub fn estimate(panel: &Panel, groups: &Grouping, level: usize, demean: bool) -> CliResult<Estimate> {
    let (partition, block_labels) = groups.partition(level)?;
    let x = data_for(panel, groups, demean);
    let fit = fit_level(&x, groups, &partition)?;
    Ok(Estimate {
        level,
        n_assets: panel.n_assets(),
        n_obs: panel.n_obs(),
        demeaned: demean,
        num_blocks: partition.num_blocks(),
        block_labels,
        block_sizes: partition.sizes().to_vec(),
        asset_order: groups.sorted_ids().to_vec(),
        lambda_discrepancy: fit.lambda_discrepancy(),
        neg2_loglik: fit.neg2_loglik().ok().map(|v| v / panel.n_assets() as f64),
        fit,
    })
}

/// The implied `n×n` correlation matrix as CSV, with asset ids as the
/// header and first column.
pub fn write_heatmap<W: Write>(est: &Estimate, writer: W) -> CliResult<()> {
    let dense = est.fit.correlation.expand();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("asset").chain(est.asset_order.iter().map(String::as_str)))?;
    for (id, row) in est.asset_order.iter().zip(dense.row_iter()) {
        w.write_record(std::iter::once(id.clone()).chain(row.iter().map(|v| v.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SelectOptions {
    pub levels: Vec<usize>,
    /// Row labels; defaults to `level ℓ`.
    pub names: Option<Vec<String>>,
    pub demean: bool,
    pub weighting: Weighting,
}

/// Fit every level and report likelihood, information criteria and
/// correlation summaries, marking the smallest BIC.
pub fn select(panel: &Panel, groups: &Grouping, opts: &SelectOptions) -> CliResult<Vec<ModelReport>> {
    if opts.levels.len() < 2 {
        return Err(CliError::input("model selection needs at least two levels"));
    }
    if let Some(names) = &opts.names {
        if names.len() != opts.levels.len() {
            return Err(CliError::input(format!(
                "{} names given for {} levels",
                names.len(),
                opts.levels.len()
            )));
        }
    }
    let x = data_for(panel, groups, opts.demean);
    let mut reports = Vec::with_capacity(opts.levels.len());
    for (i, &level) in opts.levels.iter().enumerate() {
        let (partition, _) = groups.partition(level)?;
        let fit = fit_level(&x, groups, &partition)?;
        let label = match &opts.names {
            Some(names) => names[i].clone(),
            None => format!("level {level}"),
        };
        reports.push(ModelReport::new(
            label,
            level,
            &fit.correlation,
            panel.n_obs(),
            fit.neg2_loglik().ok(),
            fit.invalid_estimate,
            opts.weighting,
        ));
    }
    mark_selected(&mut reports);
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformOp {
    Inverse,
    Log,
    Exp,
    Power(i32),
    Det,
}

impl FromStr for TransformOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inv" => Ok(Self::Inverse),
            "log" => Ok(Self::Log),
            "exp" => Ok(Self::Exp),
            "det" => Ok(Self::Det),
            _ => match s.strip_prefix("pow:") {
                Some(q) => q.parse().map(Self::Power).map_err(|_| format!("bad exponent in {s:?}")),
                None => Err(format!("unknown operation {s:?}; expected inv, log, exp, pow:q or det")),
            },
        }
    }
}

/// A matrix read for `transform`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixInput {
    Block(BlockMatrix),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformOutput {
    Block(BlockMatrix),
    Dense(DMatrix<f64>),
    Det(LogDeterminant),
}

/// Apply `op` through the canonical form. A dense input is compressed
/// onto `sizes` if given, otherwise onto the partition inferred with
/// `tol`; the output has the same kind as the input.
pub fn transform(input: &MatrixInput, op: TransformOp, sizes: Option<Vec<usize>>, tol: f64) -> CliResult<TransformOutput> {
    let block = match input {
        MatrixInput::Block(b) => {
            if let Some(s) = sizes {
                if s != b.partition().sizes() {
                    return Err(CliError::input("--sizes disagrees with the block file"));
                }
            }
            b.clone()
        }
        MatrixInput::Dense(m) => {
            if m.nrows() != m.ncols() {
                return Err(CliError::input(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
            }
            let partition = match sizes {
                Some(s) => BlockPartition::new(s)?,
                None => infer_partition(m, tol)?,
            };
            BlockMatrix::compress(m, &partition, tol)?
        }
    };
    let cf = block.canonicalize();
    let f = match op {
        TransformOp::Det => return Ok(TransformOutput::Det(log_determinant(&cf))),
        TransformOp::Inverse => MatrixFunction::Inverse,
        TransformOp::Log => MatrixFunction::Log,
        TransformOp::Exp => MatrixFunction::Exp,
        TransformOp::Power(q) => MatrixFunction::Power(q),
    };
    let result = f.apply(&cf)?.decanonicalize();
    Ok(match input {
        MatrixInput::Block(_) => TransformOutput::Block(result),
        MatrixInput::Dense(_) => TransformOutput::Dense(result.expand()),
    })
}

/// Validity of a block correlation matrix and the exit code it maps to:
/// `0` valid, `1` on the semidefinite boundary, `4` invalid.
pub fn validate(b: &BlockMatrix, tol: f64) -> CliResult<(Validity, u8)> {
    let c = BlockCorrelation::from_block_matrix(b, tol)?;
    let v = is_valid_correlation(&c);
    let code = match v.status {
        ValidityStatus::Valid => exit::OK,
        ValidityStatus::SemidefiniteBoundary => exit::BOUNDARY,
        ValidityStatus::Invalid => exit::VIOLATION,
    };
    Ok((v, code))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOp {
    Det,
    Inv,
    Loglik,
}

impl FromStr for BenchOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "det" => Ok(Self::Det),
            "inv" => Ok(Self::Inv),
            "loglik" => Ok(Self::Loglik),
            _ => Err(format!("unknown benchmark {s:?}; expected det, inv or loglik")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    /// Observations used by the likelihood benchmark.
    pub obs: usize,
    pub seed: u64,
    pub ops: Vec<BenchOp>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub operation: BenchOp,
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    pub canonical_seconds: f64,
    pub dense_seconds: f64,
    pub speedup: f64,
}

/// A random symmetric positive definite block matrix with `A = GG'/K + I`
/// and `λ_k ∈ [0.5, 1.5)`.
pub fn random_spd_block<R: Rng>(partition: BlockPartition, rng: &mut R) -> BlockMatrix {
    let k = partition.num_blocks();
    let g = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let a = &g * g.transpose() / k as f64 + DMatrix::identity(k, k);
    let a = (&a + a.transpose()) * 0.5;
    let lambdas = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    CanonicalForm::new(partition, a, lambdas)
        .expect("shapes match the partition")
        .decanonicalize()
}

fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let m = times.len() / 2;
    if times.len() % 2 == 1 {
        times[m]
    } else {
        0.5 * (times[m - 1] + times[m])
    }
}

/// Median wall time of the canonical path (compressed input to
/// compressed output) against the dense reference implementation.
pub fn bench(opts: &BenchOptions) -> CliResult<Vec<BenchRow>> {
    if opts.k == 0 || opts.n < opts.k || opts.reps == 0 || opts.obs == 0 {
        return Err(CliError::input("bench needs n >= K >= 1, reps >= 1 and obs >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let partition = BlockPartition::even(opts.n, opts.k)?;
    let b = random_spd_block(partition.clone(), &mut rng);
    let dense = b.expand();
    let x = sample_gaussian(&b.canonicalize(), opts.obs, &mut rng)?;
    let mut rows = Vec::new();
    for &op in &opts.ops {
        let (canonical, dense_time) = match op {
            BenchOp::Det => (
                median_seconds(opts.reps, || {
                    std::hint::black_box(log_determinant(&b.canonicalize()));
                }),
                median_seconds(opts.reps, || {
                    std::hint::black_box(blockcanon_oracle::det(&dense).ok());
                }),
            ),
            BenchOp::Inv => (
                median_seconds(opts.reps, || {
                    std::hint::black_box(inverse(&b.canonicalize()).map(|c| c.decanonicalize()).ok());
                }),
                median_seconds(opts.reps, || {
                    std::hint::black_box(blockcanon_oracle::inv(&dense).ok());
                }),
            ),
            BenchOp::Loglik => {
                let sigma = BlockCovariance::new(b.clone())?;
                (
                    median_seconds(opts.reps, || {
                        let s = rotate_sample(&x, &partition, false).expect("shapes match");
                        std::hint::black_box(neg2_loglik(&sigma, &s).ok());
                    }),
                    median_seconds(opts.reps, || {
                        std::hint::black_box(blockcanon_oracle::neg2_loglik(&dense, &x).ok());
                    }),
                )
            }
        };
        rows.push(BenchRow {
            operation: op,
            n: opts.n,
            k: opts.k,
            reps: opts.reps,
            canonical_seconds: canonical,
            dense_seconds: dense_time,
            speedup: dense_time / canonical,
        });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub n_obs: usize,
    pub seed: u64,
    /// One group label per block; defaults to the zero-padded block number.
    pub block_labels: Option<Vec<String>>,
}

/// Draw a panel from `N(0, B)` and the group map of its blocks.
///
/// Asset ids (`A001`, …) and default labels are zero-padded so that
/// sorting by label keeps the block order.
pub fn simulate(b: &BlockMatrix, opts: &SimulateOptions) -> CliResult<(Panel, GroupMap)> {
    let p = b.partition();
    if !b.is_symmetric() {
        return Err(Error::NotSymmetric((b.blocks() - b.blocks().transpose()).amax()).into());
    }
    let labels = match &opts.block_labels {
        Some(l) if l.len() != p.num_blocks() => {
            return Err(CliError::input(format!(
                "{} block labels given for {} blocks",
                l.len(),
                p.num_blocks()
            )))
        }
        Some(l) => l.clone(),
        None => {
            let w = p.num_blocks().to_string().len();
            (1..=p.num_blocks()).map(|k| format!("{k:0w$}")).collect()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x = sample_gaussian(&b.canonicalize(), opts.n_obs, &mut rng)?;
    let wa = p.dim().to_string().len();
    let wt = opts.n_obs.to_string().len();
    let asset_ids: Vec<String> = (1..=p.dim()).map(|i| format!("A{i:0wa$}")).collect();
    let dates = (1..=opts.n_obs).map(|t| format!("t{t:0wt$}")).collect();
    let map = GroupMap::from_pairs(
        asset_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), labels[p.block_of(i).expect("index below n")].clone())),
    );
    Ok((Panel { asset_ids, dates, x }, map))
}
