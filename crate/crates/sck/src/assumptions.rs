//! Tests of the identifying assumptions.
//!
//! The three sharp inequalities (nonnegative `cn`, `ca`, and supercomplier
//! shares) are tested jointly by stacking three copies of the data, one
//! inequality per stack, and estimating every stack's slope in one clustered
//! regression. The joint statistic is the minimum slope; its null
//! distribution is simulated as the minimum of a zero-mean multivariate
//! normal with the estimated covariance, taking the least-favorable point
//! where every inequality binds at once (which makes the test conservative
//! in the interior). Outcome monotonicity alone is a one-sided test of the
//! reduced form, optionally sharpened by testing it within covariate cells.

use crate::data::ObservationTable;
use crate::dgp::Inequality;
use crate::regression::{normal_cdf, stacked_regression, RegressionError, Stack};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Simulation draws below this are too coarse for tail quantiles.
pub const MIN_DRAWS: usize = 1000;
pub const DEFAULT_DRAWS: usize = 100_000;
pub const DEFAULT_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TestError {
    #[error("test requires a binary outcome")]
    NonBinaryOutcome,
    #[error("insufficient simulation draws: {0} (need at least {MIN_DRAWS})")]
    InsufficientDraws(usize),
    #[error("cell `{0}` contains a single instrument arm")]
    SingleArmCell(String),
    #[error("cell assignment has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("invalid level {0}; must lie in (0,1)")]
    InvalidLevel(f64),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// One inequality's slope estimate and robust standard error.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityStatistic {
    pub inequality: Inequality,
    pub estimate: f64,
    pub se: f64,
}

/// Outcome of a min-statistic test.
#[derive(Debug, Clone, Serialize)]
pub struct SharpTestResult {
    /// One label per stack: inequality names or cell names.
    pub labels: Vec<String>,
    pub theta: Vec<f64>,
    pub se: Vec<f64>,
    #[serde(skip)]
    pub vcov: DMatrix<f64>,
    pub theta_min: f64,
    /// Simulated `level`-quantile of the null min distribution.
    pub critical_value: f64,
    /// Batch-based Monte Carlo standard error of the critical value.
    pub critical_value_mc_se: f64,
    /// Simulated with a `1/(draws+1)` continuity correction.
    pub p_value: f64,
    pub reject: bool,
    pub level: f64,
    pub draws: usize,
    pub seed: u64,
}

/// Per-row responses whose arm contrasts are the three inequality slacks.
fn inequality_responses(table: &ObservationTable) -> [Vec<f64>; 3] {
    let n = table.n();
    let mut r1 = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    let mut r3 = Vec::with_capacity(n);
    for i in 0..n {
        let d = table.d()[i] as f64;
        let y = table.y()[i];
        r1.push((1.0 - y) * d);
        r2.push(y * (1.0 - d));
        r3.push(y);
    }
    [r1, r2, r3]
}

const INEQUALITIES: [Inequality; 3] = [
    Inequality::CnNonnegative,
    Inequality::CaNonnegative,
    Inequality::OutcomeMonotonicity,
];

/// Estimates the left-hand side of each sharp inequality by its
/// difference-of-means regression (arms reversed for the `ca` contrast).
pub fn inequality_statistics(
    table: &ObservationTable,
) -> Result<[InequalityStatistic; 3], TestError> {
    if !table.y_binary() {
        return Err(TestError::NonBinaryOutcome);
    }
    let responses = inequality_responses(table);
    let flips = [false, true, false];
    let mut out = Vec::with_capacity(3);
    for ((response, flip), inequality) in responses.iter().zip(flips).zip(INEQUALITIES) {
        let fit = diff_fit(table, response, flip)?;
        out.push(InequalityStatistic { inequality, estimate: fit.0, se: fit.1 });
    }
    Ok(out.try_into().expect("three statistics"))
}

fn diff_fit(
    table: &ObservationTable,
    response: &[f64],
    flip: bool,
) -> Result<(f64, f64), TestError> {
    use crate::regression::{ols, SeMode};
    use nalgebra::DVector;
    let n = table.n();
    let mut design = DMatrix::zeros(n, 2);
    for (i, &z) in table.z().iter().enumerate() {
        design[(i, 0)] = if flip { (1 - z) as f64 } else { z as f64 };
        design[(i, 1)] = 1.0;
    }
    let fit = ols(&design, &DVector::from_row_slice(response), SeMode::Robust)?;
    Ok((fit.beta[0], fit.se(0)))
}

/// Joint sharp test of the identifying assumptions via the stacked
/// min-statistic.
pub fn joint_sharp_test(
    table: &ObservationTable,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<SharpTestResult, TestError> {
    if !table.y_binary() {
        return Err(TestError::NonBinaryOutcome);
    }
    let responses = inequality_responses(table);
    let n = table.n();
    let ids: Vec<u64> = (0..n as u64).collect();
    let z: Vec<f64> = table.z().iter().map(|&v| v as f64).collect();
    let one_minus_z: Vec<f64> = z.iter().map(|v| 1.0 - v).collect();
    let regressors = [&z, &one_minus_z, &z];
    let stacks = responses
        .iter()
        .zip(regressors)
        .zip(INEQUALITIES)
        .map(|((response, regressor), inequality)| Stack {
            label: inequality_label(inequality).to_string(),
            response: response.clone(),
            regressor: regressor.clone(),
            ids: ids.clone(),
        })
        .collect();
    min_statistic_test(stacks, level, draws, seed)
}

fn inequality_label(i: Inequality) -> &'static str {
    match i {
        Inequality::CnNonnegative => "cn",
        Inequality::CaNonnegative => "ca",
        Inequality::OutcomeMonotonicity => "outcome_monotonicity",
    }
}

/// One-sided test of a nonnegative reduced form (outcome monotonicity under
/// the maintained assignment and take-up assumptions).
#[derive(Debug, Clone, Serialize)]
pub struct OmTest {
    pub estimate: f64,
    pub se: f64,
    /// `Pr(N(0,1) <= t)`: small when the contrast is significantly
    /// negative.
    pub p_one_sided: f64,
    pub reject: bool,
    pub level: f64,
}

pub fn om_test(table: &ObservationTable, level: f64) -> Result<OmTest, TestError> {
    check_level(level)?;
    let (estimate, se) = diff_fit(table, table.y(), false)?;
    let t = if se > 0.0 { estimate / se } else if estimate == 0.0 { 0.0 } else { f64::INFINITY * estimate.signum() };
    let p_one_sided = normal_cdf(t);
    Ok(OmTest { estimate, se, p_one_sided, reject: p_one_sided < level, level })
}

/// Covariate-sharpened outcome-monotonicity test: one stack per cell, each
/// testing the within-cell reduced form, combined through the same
/// min-statistic machinery. The outcome may be non-binary. Cells are
/// caller-chosen; which cells to examine materially affects power, so none
/// are picked silently.
pub fn om_test_conditional(
    table: &ObservationTable,
    cells: &[String],
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<SharpTestResult, TestError> {
    if cells.len() != table.n() {
        return Err(TestError::LengthMismatch { got: cells.len(), expected: table.n() });
    }
    let mut labels: Vec<&String> = cells.iter().collect();
    labels.sort();
    labels.dedup();

    let mut stacks = Vec::with_capacity(labels.len());
    for label in labels {
        let rows: Vec<usize> = (0..table.n()).filter(|&i| &cells[i] == label).collect();
        let z_cell: Vec<f64> = rows.iter().map(|&i| table.z()[i] as f64).collect();
        if !z_cell.contains(&0.0) || !z_cell.contains(&1.0) {
            return Err(TestError::SingleArmCell(label.clone()));
        }
        stacks.push(Stack {
            label: label.clone(),
            response: rows.iter().map(|&i| table.y()[i]).collect(),
            regressor: z_cell,
            ids: rows.iter().map(|&i| i as u64).collect(),
        });
    }
    min_statistic_test(stacks, level, draws, seed)
}

fn check_level(level: f64) -> Result<(), TestError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(TestError::InvalidLevel(level))
    }
}

/// Stacked estimation plus simulated least-favorable min-statistic
/// inference; shared by the joint sharp test and the conditional
/// outcome-monotonicity test.
fn min_statistic_test(
    stacks: Vec<Stack>,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<SharpTestResult, TestError> {
    check_level(level)?;
    if draws < MIN_DRAWS {
        return Err(TestError::InsufficientDraws(draws));
    }
    let labels: Vec<String> = stacks.iter().map(|s| s.label.clone()).collect();
    let fit = stacked_regression(stacks)?;
    let theta = fit.thetas();
    let se: Vec<f64> = (0..theta.len()).map(|s| fit.theta_se(s)).collect();
    let vcov = fit.theta_vcov();
    let theta_min = theta.iter().copied().fold(f64::INFINITY, f64::min);

    let mins = simulate_null_mins(&vcov, draws, seed);
    let mut sorted = mins.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let critical_value = empirical_quantile(&sorted, level);
    let below = sorted.partition_point(|&m| m <= theta_min);
    let p_value = (below + 1) as f64 / (draws + 1) as f64;

    // Batch the draw stream to get a Monte Carlo error on the quantile.
    let batches = 20.min(draws / 100).max(2);
    let batch_size = draws / batches;
    let mut batch_q = Vec::with_capacity(batches);
    for b in 0..batches {
        let mut chunk: Vec<f64> = mins[b * batch_size..(b + 1) * batch_size].to_vec();
        chunk.sort_unstable_by(f64::total_cmp);
        batch_q.push(empirical_quantile(&chunk, level));
    }
    let mean_q = batch_q.iter().sum::<f64>() / batches as f64;
    let var_q = batch_q.iter().map(|q| (q - mean_q).powi(2)).sum::<f64>()
        / (batches as f64 - 1.0);
    let critical_value_mc_se = (var_q / batches as f64).sqrt();

    Ok(SharpTestResult {
        labels,
        theta: theta.clone(),
        se,
        vcov,
        theta_min,
        critical_value,
        critical_value_mc_se,
        p_value,
        reject: theta_min < critical_value,
        level,
        draws,
        seed,
    })
}

/// Lower empirical quantile of a sorted sample.
fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let idx = ((level * n as f64).ceil() as usize).max(1) - 1;
    sorted[idx.min(n - 1)]
}

/// Minimum of a zero-mean normal vector with the given covariance, one value
/// per draw. Draw `j` uses stream `j` of a counter-based generator, so the
/// result is independent of batching and thread count.
fn simulate_null_mins(vcov: &DMatrix<f64>, draws: usize, seed: u64) -> Vec<f64> {
    let k = vcov.nrows();
    let eigen = nalgebra::SymmetricEigen::new(vcov.clone());
    let scales = eigen.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut factor = eigen.eigenvectors;
    for c in 0..k {
        factor.column_mut(c).scale_mut(scales[c]);
    }

    (0..draws)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let eps: Vec<f64> =
                (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut min = f64::INFINITY;
            for i in 0..k {
                let mut v = 0.0;
                for (c, &e) in eps.iter().enumerate() {
                    v += factor[(i, c)] * e;
                }
                min = min.min(v);
            }
            min
        })
        .collect()
}
