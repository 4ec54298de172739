use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blockcanon::io::{read_matrix_file, write_matrix_file, BINARY_MAGIC};
use blockcanon::{BlockMatrix, STRUCTURAL_TOL};
use blockcanon_cli::commands::{
    self, BenchOp, BenchOptions, MatrixInput, SelectOptions, SimulateOptions, TransformOp, TransformOutput,
};
use blockcanon_cli::groups::{GroupMap, Grouping};
use blockcanon_cli::panel::Panel;
use blockcanon_cli::report::{write_csv, Weighting};
use blockcanon_cli::{exit, CliError, CliResult};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blockcanon", version, about = "Block correlation estimation and structured matrix functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the block correlation matrix at one level of the group labels.
    Estimate {
        /// Returns CSV: a date column followed by one column per asset.
        #[arg(long)]
        returns: PathBuf,
        /// Group map CSV with header `asset_id,label`.
        #[arg(long)]
        groups: PathBuf,
        /// Number of leading label components defining the blocks (0 = one block).
        #[arg(long)]
        level: usize,
        /// Subtract column means first.
        #[arg(long)]
        demean: bool,
        /// Also write the implied n×n correlation matrix as CSV.
        #[arg(long)]
        emit_heatmap: Option<PathBuf>,
        /// JSON output file (default: stdout).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare nested block structures by likelihood and BIC.
    Select {
        #[arg(long)]
        returns: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        /// Levels to compare, e.g. `0,1,2`.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        /// Row labels, one per level.
        #[arg(long, value_delimiter = ',')]
        names: Option<Vec<String>>,
        #[arg(long)]
        demean: bool,
        /// Summary statistics over distinct coefficients instead of cells.
        #[arg(long)]
        unweighted: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Apply a matrix function to a block matrix file.
    Transform {
        /// Block JSON (`.json`), or a dense matrix as headerless CSV or binary.
        #[arg(long)]
        input: PathBuf,
        /// inv, log, exp, pow:q or det.
        #[arg(long)]
        op: TransformOp,
        /// Block sizes of a dense input, e.g. `3,2`; inferred if omitted.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Tolerance for recognising block structure in a dense input.
        #[arg(long, default_value_t = STRUCTURAL_TOL)]
        tol: f64,
        /// Format of the determinant report.
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check that a block correlation matrix is positive definite.
    Validate {
        /// Block JSON with unit diagonal.
        #[arg(long)]
        input: PathBuf,
        /// Allowed deviation of the diagonal from one.
        #[arg(long, default_value_t = STRUCTURAL_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Time canonical against dense linear algebra.
    Bench {
        #[arg(long)]
        n: usize,
        #[arg(long = "K", alias = "k")]
        k: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 20)]
        obs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "det,inv,loglik")]
        ops: Vec<BenchOp>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Draw a synthetic returns panel from a block covariance or correlation matrix.
    Simulate {
        /// Block JSON of the covariance.
        #[arg(long)]
        spec: PathBuf,
        /// Number of observations.
        #[arg(long)]
        obs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// One group label per block.
        #[arg(long, value_delimiter = ',')]
        block_labels: Option<Vec<String>>,
        /// Returns CSV output.
        #[arg(long, short)]
        output: PathBuf,
        /// Group map CSV output.
        #[arg(long)]
        groups_output: Option<PathBuf>,
    },
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_block_json(path: &Path) -> CliResult<BlockMatrix> {
    Ok(serde_json::from_reader(open(path)?)?)
}

fn load(returns: &Path, groups: &Path) -> CliResult<(Panel, Grouping)> {
    let panel = Panel::read(open(returns)?)?;
    let map = GroupMap::read(open(groups)?)?;
    let grouping = Grouping::new(&panel.asset_ids, &map)?;
    Ok((panel, grouping))
}

fn is_binary(path: &Path) -> CliResult<bool> {
    use std::io::Read;
    let mut head = Vec::with_capacity(BINARY_MAGIC.len());
    open(path)?.take(BINARY_MAGIC.len() as u64).read_to_end(&mut head)?;
    Ok(head == BINARY_MAGIC)
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Estimate {
            returns,
            groups,
            level,
            demean,
            emit_heatmap,
            output,
        } => {
            let (panel, grouping) = load(&returns, &groups)?;
            let est = commands::estimate(&panel, &grouping, level, demean)?;
            if est.fit.invalid_estimate {
                eprintln!("warning: the estimate is not a positive definite correlation matrix");
            }
            if let Some(path) = emit_heatmap {
                commands::write_heatmap(&est, BufWriter::new(File::create(path)?))?;
            }
            let mut w = sink(output.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &est)?;
            writeln!(w)?;
            Ok(exit::OK)
        }
        Command::Select {
            returns,
            groups,
            levels,
            names,
            demean,
            unweighted,
            format,
            output,
        } => {
            let (panel, grouping) = load(&returns, &groups)?;
            let opts = SelectOptions {
                levels,
                names,
                demean,
                weighting: if unweighted { Weighting::Unweighted } else { Weighting::Cells },
            };
            let reports = commands::select(&panel, &grouping, &opts)?;
            let mut w = sink(output.as_deref())?;
            match format {
                Format::Csv => write_csv(&reports, &mut w)?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &reports)?;
                    writeln!(w)?;
                }
            }
            Ok(exit::OK)
        }
        Command::Transform {
            input,
            op,
            sizes,
            tol,
            format,
            output,
        } => {
            let json = input.extension().is_some_and(|e| e == "json");
            let matrix = if json {
                MatrixInput::Block(read_block_json(&input)?)
            } else {
                MatrixInput::Dense(read_matrix_file(&input)?)
            };
            match commands::transform(&matrix, op, sizes, tol)? {
                TransformOutput::Det(d) => {
                    let mut w = sink(output.as_deref())?;
                    match format {
                        Format::Csv => writeln!(w, "sign,log_abs,value\n{},{},{}", d.sign, d.ln_abs, d.value())?,
                        Format::Json => writeln!(
                            w,
                            "{}",
                            serde_json::json!({"sign": d.sign, "log_abs": d.ln_abs, "value": d.value()})
                        )?,
                    }
                }
                TransformOutput::Block(b) => {
                    let mut w = sink(output.as_deref())?;
                    serde_json::to_writer_pretty(&mut w, &b)?;
                    writeln!(w)?;
                }
                TransformOutput::Dense(m) => {
                    let binary = is_binary(&input)?;
                    match output {
                        Some(path) => write_matrix_file(&m, path, binary)?,
                        None if binary => blockcanon::io::write_matrix_binary(&m, io::stdout().lock())?,
                        None => blockcanon::io::write_matrix_csv(&m, io::stdout().lock())?,
                    }
                }
            }
            Ok(exit::OK)
        }
        Command::Validate { input, tol, format } => {
            let (v, code) = commands::validate(&read_block_json(&input)?, tol)?;
            let mut out = io::stdout().lock();
            match format {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?,
                Format::Csv => {
                    let status = serde_json::to_value(v.status)?;
                    let min_lambda = v.min_lambda.map(|l| l.to_string()).unwrap_or_default();
                    let offending: Vec<String> = v.offending_blocks.iter().map(|b| b.block.to_string()).collect();
                    writeln!(out, "status,min_eig_a,min_lambda,tolerance,offending_blocks")?;
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        status.as_str().unwrap_or_default(),
                        v.min_eig_a,
                        min_lambda,
                        v.tolerance,
                        offending.join(";")
                    )?;
                }
            }
            Ok(code)
        }
        Command::Bench {
            n,
            k,
            reps,
            obs,
            seed,
            ops,
            output,
        } => {
            let rows = commands::bench(&BenchOptions { n, k, reps, obs, seed, ops })?;
            commands::write_bench_csv(&rows, sink(output.as_deref())?)?;
            Ok(exit::OK)
        }
        Command::Simulate {
            spec,
            obs,
            seed,
            block_labels,
            output,
            groups_output,
        } => {
            let b = read_block_json(&spec)?;
            let opts = SimulateOptions {
                n_obs: obs,
                seed,
                block_labels,
            };
            let (panel, map) = commands::simulate(&b, &opts)?;
            panel.write(BufWriter::new(File::create(output)?))?;
            if let Some(path) = groups_output {
                std::fs::write(path, map.to_csv(&panel.asset_ids)?)?;
            }
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
