//! Supercomplier quantiles of a covariate.
//!
//! The raw per-row supercomplier weight can be negative, which makes the
//! sample check-function objective non-convex. Averaging the weight within
//! cells of the conditioning set (the covariate alone, or the outcome and
//! the covariate) yields the conditional supercomplier probability, which is
//! nonnegative in population. Negative cell estimates are sampling noise and
//! are clipped to zero, preserving convexity of the weighted objective; the
//! minimizer is then an ordinary weighted quantile.

use super::{compute_weights, IdentificationError};
use crate::data::ObservationTable;
use serde::Serialize;

/// Default number of equal-frequency bins used to discretize a continuous
/// conditioning covariate.
pub const DEFAULT_QUANTILE_BINS: usize = 20;

/// Conditioning set used when averaging the supercomplier weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Cells are values (or bins) of the covariate alone.
    XOnly,
    /// Cells are (outcome, covariate) pairs.
    OutcomeAndX,
}

/// Diagnostics for one conditioning cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellWeight {
    pub label: String,
    pub count: usize,
    /// Average supercomplier weight before clipping.
    pub pi_mean: f64,
    /// Weight actually used (clipped at zero).
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantileEstimate {
    pub covariate: String,
    pub theta: f64,
    pub value: f64,
    pub conditioning: Conditioning,
    pub cells: Vec<CellWeight>,
    pub clipped_cells: usize,
}

/// Estimates the `theta`-quantile of a covariate among supercompliers.
///
/// The covariate is used as-is when it takes at most `bins` distinct values
/// and is otherwise cut into `bins` equal-frequency bins for conditioning
/// (the quantile itself is still computed over the raw values).
pub fn supercomplier_quantile(
    table: &ObservationTable,
    covariate: &str,
    theta: f64,
    conditioning: Conditioning,
    bins: usize,
) -> Result<QuantileEstimate, IdentificationError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(IdentificationError::Inconsistent(format!(
            "quantile level must be in (0,1), got {theta}"
        )));
    }
    if !table.y_binary() {
        return Err(IdentificationError::NonBinaryOutcome {
            operation: "supercomplier_quantile".into(),
        });
    }
    let x = table
        .covariate(covariate)
        .ok_or_else(|| IdentificationError::UnknownCovariate(covariate.to_string()))?;

    let weights = compute_weights(table, None)?;
    let (x_cells, cell_names) = discretize(x, bins.max(1));
    let n_x_cells = cell_names.len();

    // Dense cell index; with outcome conditioning each covariate cell splits
    // in two.
    let cell_of = |i: usize| -> usize {
        match conditioning {
            Conditioning::XOnly => x_cells[i] as usize,
            Conditioning::OutcomeAndX => {
                x_cells[i] as usize * 2 + (table.y()[i] as usize).min(1)
            }
        }
    };
    let n_cells = match conditioning {
        Conditioning::XOnly => n_x_cells,
        Conditioning::OutcomeAndX => n_x_cells * 2,
    };

    let mut sums = vec![0.0f64; n_cells];
    let mut counts = vec![0usize; n_cells];
    for i in 0..table.n() {
        let c = cell_of(i);
        sums[c] += weights.pi[i];
        counts[c] += 1;
    }

    let mut cell_weight = vec![0.0f64; n_cells];
    let mut cells = Vec::new();
    let mut clipped_cells = 0usize;
    for c in 0..n_cells {
        if counts[c] == 0 {
            continue;
        }
        let pi_mean = sums[c] / counts[c] as f64;
        let weight = if pi_mean < 0.0 {
            clipped_cells += 1;
            0.0
        } else {
            pi_mean
        };
        cell_weight[c] = weight;
        let label = match conditioning {
            Conditioning::XOnly => cell_names[c].clone(),
            Conditioning::OutcomeAndX => {
                format!("y={}, {}", c % 2, cell_names[c / 2])
            }
        };
        cells.push(CellWeight { label, count: counts[c], pi_mean, weight });
    }

    let row_weights: Vec<f64> = (0..table.n()).map(|i| cell_weight[cell_of(i)]).collect();
    if row_weights.iter().sum::<f64>() <= 0.0 {
        return Err(IdentificationError::NoSupercomplierMass);
    }
    let value = weighted_quantile(x, &row_weights, theta);

    Ok(QuantileEstimate {
        covariate: covariate.to_string(),
        theta,
        value,
        conditioning,
        cells,
        clipped_cells,
    })
}

/// Cuts `x` into cells: distinct values when few enough, equal-frequency
/// bins otherwise. Returns per-row cell codes and cell labels.
pub(crate) fn discretize(x: &[f64], bins: usize) -> (Vec<u32>, Vec<String>) {
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() <= bins {
        let codes = x
            .iter()
            .map(|v| distinct.partition_point(|d| d < v) as u32)
            .collect();
        let names = distinct.iter().map(|v| format!("x={v}")).collect();
        return (codes, names);
    }

    // Equal-frequency break points; duplicates collapse when the data are
    // heavily tied.
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut breaks: Vec<f64> = (1..bins)
        .map(|j| sorted[(n * j / bins).min(n - 1)])
        .collect();
    breaks.dedup();
    let codes: Vec<u32> = x
        .iter()
        .map(|v| breaks.partition_point(|b| b <= v) as u32)
        .collect();
    let mut names = Vec::with_capacity(breaks.len() + 1);
    for (k, _) in std::iter::once(&f64::NEG_INFINITY).chain(breaks.iter()).enumerate() {
        let lo = if k == 0 { "min".to_string() } else { format!("{}", breaks[k - 1]) };
        let hi = if k == breaks.len() { "max".to_string() } else { format!("{}", breaks[k]) };
        names.push(format!("x in [{lo}, {hi})"));
    }
    (codes, names)
}

/// The smallest value whose cumulative weight reaches `theta` of the total;
/// the minimizer of the weighted check-function objective for nonnegative
/// weights.
pub(crate) fn weighted_quantile(values: &[f64], weights: &[f64], theta: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let total: f64 = weights.iter().sum();
    let target = theta * total;
    let tol = 1e-12 * total;
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= target - tol && weights[i] > 0.0 {
            return values[i];
        }
    }
    values[*order.last().unwrap()]
}
