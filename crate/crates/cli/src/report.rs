//! Model-selection reports.

use std::io::Write;

use blockcanon::BlockCorrelation;
use serde::Serialize;

use crate::error::CliResult;

/// How block correlations are weighted in summary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Each coefficient counts once per off-diagonal cell of the `n×n`
    /// matrix it fills: `n_i n_j` times for `ρ_ij` (both orders) and
    /// `n_i(n_i - 1)` times for `ρ_ii`. The mean is then the average
    /// pairwise correlation.
    #[default]
    Cells,
    /// Each distinct coefficient counts once.
    Unweighted,
}

/// Distribution of the off-diagonal correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub max: f64,
}

/// Summary statistics of a block correlation matrix, or `None` when it has
/// no off-diagonal cells (`n = 1`).
pub fn summarize(c: &BlockCorrelation, weighting: Weighting) -> Option<CorrelationSummary> {
    let p = c.partition();
    let k = p.num_blocks();
    let mut cells: Vec<(f64, u64)> = Vec::new();
    for i in 0..k {
        let ni = p.size(i) as u64;
        for j in i..k {
            let nj = p.size(j) as u64;
            let count = if i == j { ni * (ni - 1) } else { 2 * ni * nj };
            if count > 0 {
                let w = match weighting {
                    Weighting::Cells => count,
                    Weighting::Unweighted => 1,
                };
                cells.push((c.rho()[(i, j)], w));
            }
        }
    }
    weighted_summary(cells)
}

fn weighted_summary(mut cells: Vec<(f64, u64)>) -> Option<CorrelationSummary> {
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: u64 = cells.iter().map(|c| c.1).sum();
    if total == 0 {
        return None;
    }
    let (min, max) = (cells[0].0, cells[cells.len() - 1].0);
    let w = total as f64;
    let (mean, var) = if min == max {
        (min, 0.0)
    } else {
        let mean = cells.iter().map(|(v, c)| v * *c as f64).sum::<f64>() / w;
        let var = cells.iter().map(|(v, c)| (v - mean).powi(2) * *c as f64).sum::<f64>() / w;
        (mean, var)
    };
    Some(CorrelationSummary {
        mean,
        std: var.sqrt(),
        min,
        q10: quantile(&cells, total, 0.1),
        q50: quantile(&cells, total, 0.5),
        q90: quantile(&cells, total, 0.9),
        max,
    })
}

/// Linear-interpolation quantile of the list in which each value is
/// repeated `count` times: position `h = (W - 1)p`, interpolating between
/// the order statistics at `⌊h⌋` and `⌊h⌋ + 1` (0-based).
fn quantile(sorted: &[(f64, u64)], total: u64, p: f64) -> f64 {
    let h = (total - 1) as f64 * p;
    let lo = h.floor() as u64;
    let frac = h - lo as f64;
    let at = |idx: u64| {
        let mut seen = 0;
        for &(v, c) in sorted {
            seen += c;
            if idx < seen {
                return v;
            }
        }
        sorted[sorted.len() - 1].0
    };
    let a = at(lo);
    if frac == 0.0 {
        a
    } else {
        a + frac * (at(lo + 1) - a)
    }
}

/// One fitted block structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub label: String,
    pub level: usize,
    pub num_blocks: usize,
    /// `K(K+1)/2` unique correlations.
    pub unique_correlations: usize,
    /// `n + K(K+1)/2`: variances plus unique correlations.
    pub parameters: usize,
    /// `-2ℓ/(nN)`; absent when the estimate is not positive definite.
    pub neg2_loglik: Option<f64>,
    /// `(−2ℓ + p log(nN))/(nN)`.
    pub bic: Option<f64>,
    /// `(−2ℓ + 2p)/(nN)`.
    pub aic: Option<f64>,
    pub summary: Option<CorrelationSummary>,
    pub invalid_estimate: bool,
    /// Smallest BIC among the reported models.
    pub selected: bool,
}

impl ModelReport {
    /// `neg2_loglik_avg` is the average `-2ℓ` per observation.
    pub fn new(
        label: String,
        level: usize,
        correlation: &BlockCorrelation,
        n_obs: usize,
        neg2_loglik_avg: Option<f64>,
        invalid_estimate: bool,
        weighting: Weighting,
    ) -> Self {
        let n = correlation.partition().dim();
        let k = correlation.partition().num_blocks();
        let unique = k * (k + 1) / 2;
        let p = n + unique;
        let cells = (n * n_obs) as f64;
        let total = neg2_loglik_avg.map(|v| v * n_obs as f64);
        Self {
            label,
            level,
            num_blocks: k,
            unique_correlations: unique,
            parameters: p,
            neg2_loglik: total.map(|t| t / cells),
            bic: total.map(|t| (t + p as f64 * cells.ln()) / cells),
            aic: total.map(|t| (t + 2.0 * p as f64) / cells),
            summary: summarize(correlation, weighting),
            invalid_estimate,
            selected: false,
        }
    }
}

/// Flag the report with the smallest BIC (the first one on ties).
pub fn mark_selected(reports: &mut [ModelReport]) {
    let best = reports
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Some((i, r.bic?)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    for (i, r) in reports.iter_mut().enumerate() {
        r.selected = Some(i) == best;
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "Block structure",
    "Mean",
    "Std.",
    "Min",
    "Q10%",
    "Q50%",
    "Q90%",
    "Max",
    "−2ℓ/(nN)",
    "BIC/(nN)",
    "K",
    "K(K+1)/2",
];

/// The reports as a table; the selected row's label gets a trailing ` *`.
/// Missing values are written as empty cells.
pub fn write_csv<W: Write>(reports: &[ModelReport], writer: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let s = r.summary;
        let label = if r.selected { format!("{} *", r.label) } else { r.label.clone() };
        w.write_record([
            label,
            fmt(s.map(|s| s.mean)),
            fmt(s.map(|s| s.std)),
            fmt(s.map(|s| s.min)),
            fmt(s.map(|s| s.q10)),
            fmt(s.map(|s| s.q50)),
            fmt(s.map(|s| s.q90)),
            fmt(s.map(|s| s.max)),
            fmt(r.neg2_loglik),
            fmt(r.bic),
            r.num_blocks.to_string(),
            r.unique_correlations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
