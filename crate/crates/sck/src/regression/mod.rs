//! Least-squares machinery shared by every estimator: OLS and just-identified
//! two-stage least squares with heteroskedasticity-robust (HC1) or
//! cluster-robust sandwich covariance, stacked multi-equation systems, and
//! Anderson-Rubin interval inversion.
//!
//! Systems are solved through Householder QR, never the normal equations;
//! stacked designs full of block dummies are exactly the kind of matrix that
//! squaring would degrade.

mod ar;
mod stacked;

pub use ar::{anderson_rubin_ci, ArGrid, ArScan};
pub use stacked::{stacked_iv_system, stacked_regression, IvBlock, Stack, StackedEstimates};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("design matrix is rank deficient; collinear column(s): {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("too few observations: n = {n} with {k} coefficients")]
    TooFewObservations { n: usize, k: usize },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: String, got: usize, expected: usize },
    #[error("weak/zero first stage: instrument explains none of the endogenous variation (first-stage F = {f_stat:.4e})")]
    WeakFirstStage { f_stat: f64 },
    #[error("empty evaluation grid")]
    EmptyGrid,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("in stack `{label}`: {source}")]
    InStack { label: String, source: Box<RegressionError> },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl RegressionError {
    fn in_stack(label: &str) -> impl FnOnce(RegressionError) -> RegressionError + '_ {
        move |e| RegressionError::InStack { label: label.to_string(), source: Box::new(e) }
    }
}

/// Relative singular-value cutoff for rank decisions. Binary designs are
/// well scaled, so a tight tolerance is safe.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// How standard errors are computed.
#[derive(Debug, Clone)]
pub enum SeMode {
    /// Heteroskedasticity-robust sandwich with the HC1 `n/(n-k)` correction.
    Robust,
    /// Cluster-robust sandwich with the `G/(G-1) * (n-1)/(n-k)` correction.
    Cluster(Vec<u64>),
}

/// A fitted coefficient vector with its sandwich covariance.
#[derive(Debug, Clone)]
pub struct CoefficientEstimates {
    pub beta: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub n: usize,
    pub names: Vec<String>,
    /// Robust F statistic of the excluded instrument (2SLS only).
    pub first_stage_f: Option<f64>,
}

impl CoefficientEstimates {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.len() == 0
    }

    pub fn se(&self, i: usize) -> f64 {
        self.vcov[(i, i)].max(0.0).sqrt()
    }

    pub fn t(&self, i: usize) -> f64 {
        self.beta[i] / self.se(i)
    }

    /// Position of a coefficient by name.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Ordinary least squares of `response` on `design`.
///
/// The design must have full column rank; collinear columns are detected up
/// front and named in the error. The solve goes through Householder QR.
pub fn ols(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    se_mode: SeMode,
) -> Result<CoefficientEstimates, RegressionError> {
    let names: Vec<String> = (0..design.ncols()).map(|j| format!("x{j}")).collect();
    ols_named(design, response, se_mode, &names)
}

/// [`ols`] with caller-supplied column names for diagnostics.
pub fn ols_named(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    se_mode: SeMode,
    names: &[String],
) -> Result<CoefficientEstimates, RegressionError> {
    let (n, k) = (design.nrows(), design.ncols());
    if response.len() != n {
        return Err(RegressionError::LengthMismatch {
            what: "response".into(),
            got: response.len(),
            expected: n,
        });
    }
    if let SeMode::Cluster(ids) = &se_mode {
        if ids.len() != n {
            return Err(RegressionError::LengthMismatch {
                what: "cluster ids".into(),
                got: ids.len(),
                expected: n,
            });
        }
    }
    if n <= k {
        return Err(RegressionError::TooFewObservations { n, k });
    }
    check_rank(design, names)?;

    let (beta, bread) = qr_solve_with_bread(design, response)?;
    let residuals = response - design * &beta;
    let meat = match &se_mode {
        SeMode::Robust => robust_meat(design, &residuals),
        SeMode::Cluster(ids) => cluster_meat(design, &residuals, ids),
    };
    let correction = match &se_mode {
        SeMode::Robust => n as f64 / (n - k) as f64,
        SeMode::Cluster(ids) => {
            let g = count_distinct(ids);
            if g < 2 {
                return Err(RegressionError::InvalidArgument(
                    "cluster-robust errors need at least two clusters".into(),
                ));
            }
            (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - k) as f64)
        }
    };
    let vcov = symmetrize(&bread * meat * &bread * correction);
    Ok(CoefficientEstimates { beta, vcov, n, names: names.to_vec(), first_stage_f: None })
}

/// Just-identified two-stage least squares: one endogenous regressor, one
/// excluded instrument, an always-included intercept, and optional exogenous
/// controls.
///
/// The coefficient vector is ordered `[endogenous, const, exog...]`. With no
/// controls the endogenous coefficient equals the ratio of the reduced-form
/// and first-stage slopes exactly.
pub fn tsls(
    response: &DVector<f64>,
    endogenous: &DVector<f64>,
    instrument: &DVector<f64>,
    exog: Option<&DMatrix<f64>>,
) -> Result<CoefficientEstimates, RegressionError> {
    let n = response.len();
    for (what, len) in [("endogenous", endogenous.len()), ("instrument", instrument.len())] {
        if len != n {
            return Err(RegressionError::LengthMismatch {
                what: what.into(),
                got: len,
                expected: n,
            });
        }
    }
    if let Some(w) = exog {
        if w.nrows() != n {
            return Err(RegressionError::LengthMismatch {
                what: "exog".into(),
                got: w.nrows(),
                expected: n,
            });
        }
    }
    let k_exog = exog.map_or(0, |w| w.ncols());
    let k = 2 + k_exog;
    if n <= k {
        return Err(RegressionError::TooFewObservations { n, k });
    }

    // Instrument matrix [z, 1, exog] must itself be full rank.
    let zmat = assemble(&[instrument], exog, n);
    let mut names: Vec<String> = vec!["instrument".into(), "const".into()];
    names.extend((0..k_exog).map(|j| format!("w{j}")));
    check_rank(&zmat, &names)?;

    // First stage: endogenous on the instruments.
    let (gamma, _) = qr_solve_with_bread(&zmat, endogenous)?;
    let fitted = &zmat * &gamma;
    let first_stage = ols_named(&zmat, endogenous, SeMode::Robust, &names)?;
    let f_stat = {
        let t = first_stage.t(0);
        if t.is_finite() {
            t * t
        } else {
            0.0
        }
    };

    // Numerically zero first stage: the residualized instrument carries no
    // endogenous variation.
    let resid_instr = residualize(instrument, exog, n)?;
    let resid_endog = residualize(endogenous, exog, n)?;
    let denom = resid_instr.norm() * resid_endog.norm();
    let cos = if denom > 0.0 { resid_instr.dot(&resid_endog).abs() / denom } else { 0.0 };
    if !cos.is_finite() || cos < RANK_TOLERANCE {
        return Err(RegressionError::WeakFirstStage { f_stat });
    }

    // Second stage on the projected endogenous regressor.
    let xhat = assemble(&[&fitted], exog, n);
    let (beta, bread) = qr_solve_with_bread(&xhat, response)?;
    let xreal = assemble(&[endogenous], exog, n);
    let residuals = response - &xreal * &beta;
    let meat = robust_meat(&xhat, &residuals);
    let correction = n as f64 / (n - k) as f64;
    let vcov = symmetrize(&bread * meat * &bread * correction);

    let mut out_names: Vec<String> = vec!["endogenous".into(), "const".into()];
    out_names.extend((0..k_exog).map(|j| format!("w{j}")));
    Ok(CoefficientEstimates {
        beta,
        vcov,
        n,
        names: out_names,
        first_stage_f: Some(f_stat),
    })
}

/// Builds `[cols..., 1, exog]` as a dense design.
fn assemble(cols: &[&DVector<f64>], exog: Option<&DMatrix<f64>>, n: usize) -> DMatrix<f64> {
    let k_exog = exog.map_or(0, |w| w.ncols());
    let k = cols.len() + 1 + k_exog;
    let mut m = DMatrix::zeros(n, k);
    for (j, col) in cols.iter().enumerate() {
        m.set_column(j, col);
    }
    m.set_column(cols.len(), &DVector::from_element(n, 1.0));
    if let Some(w) = exog {
        for j in 0..k_exog {
            m.set_column(cols.len() + 1 + j, &w.column(j).into_owned());
        }
    }
    m
}

/// Residual of `v` after projecting out the intercept and `exog`.
fn residualize(
    v: &DVector<f64>,
    exog: Option<&DMatrix<f64>>,
    n: usize,
) -> Result<DVector<f64>, RegressionError> {
    let base = assemble(&[], exog, n);
    let (coef, _) = qr_solve_with_bread(&base, v)?;
    Ok(v - base * coef)
}

/// Least-squares solve via Householder QR, also returning
/// `(X'X)^{-1} = R^{-1} R^{-T}` for sandwich construction.
fn qr_solve_with_bread(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), RegressionError> {
    let k = design.ncols();
    let qr = design.clone().qr();
    let r = qr.r();
    let mut qty = response.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, k).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| RegressionError::Numerical("singular R factor in QR solve".into()))?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| RegressionError::Numerical("singular R factor in QR solve".into()))?;
    let bread = &rinv * rinv.transpose();
    Ok((beta, bread))
}

/// Modified Gram-Schmidt rank screen. Columns whose residual norm falls
/// below `RANK_TOLERANCE` times their original norm are reported as
/// collinear with their predecessors.
fn check_rank(design: &DMatrix<f64>, names: &[String]) -> Result<(), RegressionError> {
    let (n, k) = (design.nrows(), design.ncols());
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut collinear = Vec::new();
    for j in 0..k {
        let col = design.column(j).into_owned();
        let scale = col.norm();
        let mut v = col;
        // Two orthogonalization passes keep the screen reliable when columns
        // are nearly dependent.
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if scale == 0.0 || norm <= RANK_TOLERANCE * scale {
            collinear.push(names.get(j).cloned().unwrap_or_else(|| format!("x{j}")));
        } else {
            basis.push(v / norm);
        }
        if basis.len() == n {
            // Remaining columns cannot add rank.
            for j2 in (j + 1)..k {
                collinear.push(names.get(j2).cloned().unwrap_or_else(|| format!("x{j2}")));
            }
            break;
        }
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(RegressionError::RankDeficient { columns: collinear })
    }
}

fn robust_meat(design: &DMatrix<f64>, residuals: &DVector<f64>) -> DMatrix<f64> {
    let (n, k) = (design.nrows(), design.ncols());
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let u2 = residuals[i] * residuals[i];
        for p in 0..k {
            let xp = design[(i, p)];
            for q in p..k {
                meat[(p, q)] += u2 * xp * design[(i, q)];
            }
        }
    }
    mirror_upper(&mut meat);
    meat
}

/// Maps cluster ids to dense indices ordered by id, so that accumulation
/// order (and hence floating-point rounding) is reproducible.
pub(crate) fn dense_cluster_index(ids: &[u64]) -> (Vec<usize>, usize) {
    let mut unique: Vec<u64> = ids.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let index = ids.iter().map(|id| unique.partition_point(|u| u < id)).collect();
    (index, unique.len())
}

fn cluster_meat(design: &DMatrix<f64>, residuals: &DVector<f64>, ids: &[u64]) -> DMatrix<f64> {
    let k = design.ncols();
    let (index, n_clusters) = dense_cluster_index(ids);
    let mut sums = vec![0.0f64; n_clusters * k];
    for (i, &g) in index.iter().enumerate() {
        let u = residuals[i];
        for p in 0..k {
            sums[g * k + p] += u * design[(i, p)];
        }
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in sums.chunks_exact(k) {
        for p in 0..k {
            for q in p..k {
                meat[(p, q)] += s[p] * s[q];
            }
        }
    }
    mirror_upper(&mut meat);
    meat
}

fn mirror_upper(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for p in 0..k {
        for q in (p + 1)..k {
            m[(q, p)] = m[(p, q)];
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    (m + mt) * 0.5
}

fn count_distinct(ids: &[u64]) -> usize {
    let mut seen: Vec<u64> = ids.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Two-sided normal critical value for a given coverage level.
pub(crate) fn normal_critical(level: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.inverse_cdf(0.5 + level / 2.0)
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn two_col(x: &[f64], ones_first: bool) -> DMatrix<f64> {
        let n = x.len();
        let mut m = DMatrix::zeros(n, 2);
        for i in 0..n {
            if ones_first {
                m[(i, 0)] = 1.0;
                m[(i, 1)] = x[i];
            } else {
                m[(i, 0)] = x[i];
                m[(i, 1)] = 1.0;
            }
        }
        m
    }

    #[test]
    fn intercept_only_ols_is_the_mean() {
        let design = DMatrix::from_element(3, 1, 1.0);
        let fit = ols(&design, &dv(&[1.0, 2.0, 3.0]), SeMode::Robust).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn binary_regressor_ols_is_the_difference_of_means() {
        // mean(y | z=1) = 0.75, mean(y | z=0) = 0.25
        let z = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        let fit = ols(&two_col(&z, true), &dv(&y), SeMode::Robust).unwrap();
        assert!((fit.beta[1] - 0.5).abs() < 1e-14);
        assert!((fit.beta[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_reports_rank_deficiency() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let n = x.len();
        let mut design = DMatrix::zeros(n, 3);
        for i in 0..n {
            design[(i, 0)] = 1.0;
            design[(i, 1)] = x[i];
            design[(i, 2)] = x[i];
        }
        let names = vec!["const".to_string(), "x".to_string(), "x_copy".to_string()];
        let err = ols_named(&design, &dv(&[1.0, 2.0, 3.0, 4.0]), SeMode::Robust, &names)
            .unwrap_err();
        match err {
            RegressionError::RankDeficient { columns } => {
                assert_eq!(columns, vec!["x_copy".to_string()])
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn too_few_observations_errors() {
        let design = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            ols(&design, &dv(&[1.0, 2.0]), SeMode::Robust),
            Err(RegressionError::TooFewObservations { .. })
        ));
    }

    #[test]
    fn residuals_are_orthogonal_to_the_design() {
        let n = 200;
        let mut design = DMatrix::zeros(n, 3);
        let mut y = DVector::zeros(n);
        let mut state = 88172645463325252u64;
        let mut unif = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..n {
            design[(i, 0)] = 1.0;
            design[(i, 1)] = unif();
            design[(i, 2)] = unif();
            y[i] = unif();
        }
        let fit = ols(&design, &y, SeMode::Robust).unwrap();
        let resid = &y - &design * &fit.beta;
        let score = design.transpose() * resid;
        let scale = y.norm() * (n as f64).sqrt();
        assert!(score.amax() < 1e-10 * scale, "score = {score}");
    }

    #[test]
    fn singleton_clusters_match_the_robust_sandwich_exactly() {
        let z = [0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let y = [0.2, 0.4, 1.4, 0.8, 0.3, 1.7, 0.5, 0.1];
        let design = two_col(&z, true);
        let robust = ols(&design, &dv(&y), SeMode::Robust).unwrap();
        let ids: Vec<u64> = (0..8).collect();
        let cluster = ols(&design, &dv(&y), SeMode::Cluster(ids)).unwrap();
        let diff = (&robust.vcov - &cluster.vcov).amax();
        assert!(diff < 1e-14 * robust.vcov.amax());
    }

    #[test]
    fn identity_regression_has_unit_coefficient() {
        let z = dv(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let y = dv(&[0.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let fit = tsls(&y, &y, &z, None).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn just_identified_tsls_equals_the_wald_ratio() {
        let z = [0u8, 0, 0, 0, 1, 1, 1, 1];
        let e = [0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let r = [0.5, 2.0, 1.0, 0.0, 3.0, 2.5, 1.0, 2.0];
        let zf: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        let arm = |vals: &[f64], arm: u8| -> f64 {
            let picked: Vec<f64> = vals
                .iter()
                .zip(&z)
                .filter(|(_, &zi)| zi == arm)
                .map(|(&v, _)| v)
                .collect();
            picked.iter().sum::<f64>() / picked.len() as f64
        };
        let wald = (arm(&r, 1) - arm(&r, 0)) / (arm(&e, 1) - arm(&e, 0));
        let fit = tsls(&dv(&r), &dv(&e), &dv(&zf), None).unwrap();
        assert!((fit.beta[0] - wald).abs() < 1e-12 * wald.abs().max(1.0));
        assert!(fit.first_stage_f.unwrap() > 0.0);
    }

    #[test]
    fn uncorrelated_instrument_is_a_weak_first_stage_error() {
        let z = dv(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let e = dv(&[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]); // same mean in both arms
        let y = dv(&[0.3, 0.9, 0.2, 0.8, 0.4, 0.6]);
        match tsls(&y, &e, &z, None) {
            Err(RegressionError::WeakFirstStage { f_stat }) => assert!(f_stat < 1e-6),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn tsls_with_exogenous_controls_runs() {
        let n = 40;
        let mut z = DVector::zeros(n);
        let mut e = DVector::zeros(n);
        let mut y = DVector::zeros(n);
        let mut w = DMatrix::zeros(n, 1);
        for i in 0..n {
            let zi = (i % 2) as f64;
            let wi = (i % 4 >= 2) as i32 as f64;
            z[i] = zi;
            w[(i, 0)] = wi;
            e[i] = if zi == 1.0 && i % 3 != 0 { 1.0 } else { 0.0 };
            y[i] = 0.5 * e[i] + 0.2 * wi + ((i * 7 % 5) as f64) / 10.0;
        }
        let fit = tsls(&y, &e, &z, Some(&w)).unwrap();
        assert_eq!(fit.len(), 3);
        assert!(fit.se(0) > 0.0);
    }
}
