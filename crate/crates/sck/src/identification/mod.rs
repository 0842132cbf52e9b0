//! Identification of latent-group shares and characteristics.
//!
//! With a randomly assigned binary instrument, binary take-up, and a binary
//! outcome that take-up cannot harm, the instrument-arm contrast of the
//! outcome identifies the share of supercompliers (units pushed into take-up
//! whose outcome improves because of it), and ratios of arm contrasts
//! identify their covariate averages. The same template covers compliers
//! (replace the outcome by take-up), the `ca` group (product `(1-D)Y`), and
//! the `cn` group (product `D(1-Y)`).
//!
//! Every ratio here is a just-identified IV regression, so each estimate
//! ships with a sandwich standard error. With the assignment share estimated
//! from the sample, several finite-sample identities hold exactly; they are
//! asserted throughout the test suite:
//!
//! * `mean(kappa)` equals the sample first stage and `mean(pi)` the sample
//!   reduced form;
//! * the `ca`, `cn`, and supercomplier share estimates add up to the sample
//!   first stage;
//! * the weight-based (plug-in) characteristics estimator equals
//!   `mean(pi * h) / reduced form`.

mod cdf;
mod quantile;
mod stratified;
mod summary;

pub use cdf::{characteristics_cdf, CdfEstimate};
pub(crate) use quantile::discretize;
pub use quantile::{supercomplier_quantile, Conditioning, QuantileEstimate, DEFAULT_QUANTILE_BINS};
pub use stratified::{stratified_characteristics, StratifiedEstimate, StratumDecomposition};
pub use summary::{
    summarize_groups, CharacteristicsRow, GroupContrast, GroupShares, GroupSummary, TargetMean,
};

use crate::data::ObservationTable;
use crate::regression::{self, tsls, RegressionError, SeMode};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

/// Default coverage used for reported confidence intervals.
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Error)]
pub enum IdentificationError {
    #[error("operation `{operation}` requires a binary outcome; load the data without the non-binary flag or choose a binary target")]
    NonBinaryOutcome { operation: String },
    #[error("zero reduced form (or first stage): {target} share unidentified in sample")]
    ZeroDenominator { target: String },
    #[error("assignment probability must lie strictly inside (0,1), got {0}")]
    DegenerateTau(f64),
    #[error("covariate vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("no supercomplier mass detected: every conditional weight was clipped to zero")]
    NoSupercomplierMass,
    #[error("stratum `{label}` contains a single instrument arm")]
    SingleArmStratum { label: String },
    #[error("target `{target}` is not supported by `{operation}`")]
    InvalidTarget { operation: String, target: String },
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("empty evaluation grid")]
    EmptyGrid,
    #[error("table has no stratum column")]
    NoStrata,
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Which latent population an estimate describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Population,
    Complier,
    Supercomplier,
    Ca,
    Cn,
}

impl Target {
    pub const LATENT: [Target; 4] =
        [Target::Complier, Target::Supercomplier, Target::Ca, Target::Cn];

    pub fn name(self) -> &'static str {
        match self {
            Target::Population => "population",
            Target::Complier => "complier",
            Target::Supercomplier => "supercomplier",
            Target::Ca => "ca",
            Target::Cn => "cn",
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A ratio estimand: point estimate, sandwich standard error, confidence
/// interval, and the numerator/denominator arm contrasts behind it.
#[derive(Debug, Clone, Serialize)]
pub struct WaldEstimate {
    pub label: String,
    pub value: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub numerator: f64,
    pub denominator: f64,
}

impl WaldEstimate {
    fn new(label: String, value: f64, se: f64, numerator: f64, denominator: f64) -> Self {
        let crit = regression::normal_critical(DEFAULT_LEVEL);
        WaldEstimate { label, value, se, ci: (value - crit * se, value + crit * se), numerator, denominator }
    }

    /// Confidence interval at an arbitrary coverage level.
    pub fn ci_at(&self, level: f64) -> (f64, f64) {
        let crit = regression::normal_critical(level);
        (self.value - crit * self.se, self.value + crit * self.se)
    }
}

/// Per-row weights that locate compliers (`kappa`) and supercompliers
/// (`pi`).
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub kappa: Vec<f64>,
    pub kappa0: Vec<f64>,
    pub kappa1: Vec<f64>,
    pub pi: Vec<f64>,
    /// Assignment probability the weights were built with.
    pub tau: f64,
}

/// Computes the complier and supercomplier weights for every row.
///
/// With `tau` omitted, the known design probability from the table is used
/// if present, otherwise the sample share of `z = 1`. The row identity
/// `pi = kappa - (kappa0 * y + kappa1 * (1 - y))` holds exactly by
/// construction.
pub fn compute_weights(
    table: &ObservationTable,
    tau: Option<f64>,
) -> Result<WeightSet, IdentificationError> {
    let tau = tau.or(table.tau_known()).unwrap_or_else(|| table.sample_tau());
    if !(tau > 0.0 && tau < 1.0) {
        return Err(IdentificationError::DegenerateTau(tau));
    }
    let n = table.n();
    let mut kappa = Vec::with_capacity(n);
    let mut kappa0 = Vec::with_capacity(n);
    let mut kappa1 = Vec::with_capacity(n);
    let mut pi = Vec::with_capacity(n);
    for i in 0..n {
        let z = table.z()[i] as f64;
        let d = table.d()[i] as f64;
        let y = table.y()[i];
        let treated_term = d * (1.0 - z) / (1.0 - tau);
        let control_term = (1.0 - d) * z / tau;
        let k = 1.0 - treated_term - control_term;
        let k0 = (1.0 - d) * (1.0 - z) / (1.0 - tau) - control_term;
        let k1 = d * z / tau - treated_term;
        kappa.push(k);
        kappa0.push(k0);
        kappa1.push(k1);
        pi.push(k - (k0 * y + k1 * (1.0 - y)));
    }
    Ok(WeightSet { kappa, kappa0, kappa1, pi, tau })
}

/// `(mean over z = 1, mean over z = 0)` of `values`.
pub(crate) fn arm_means(values: &[f64], z: &[u8]) -> (f64, f64) {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0f64, 0usize, 0.0f64, 0usize);
    for (&v, &zi) in values.iter().zip(z) {
        if zi == 1 {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
            n0 += 1;
        }
    }
    (s1 / n1 as f64, s0 / n0 as f64)
}

/// Robust difference-of-means regression of `response` on the instrument
/// (or on `1 - z` when `flip` is set). Returns the slope fit.
fn diff_of_means(
    table: &ObservationTable,
    response: &[f64],
    flip: bool,
) -> Result<regression::CoefficientEstimates, IdentificationError> {
    let n = table.n();
    let mut design = DMatrix::zeros(n, 2);
    for (i, &z) in table.z().iter().enumerate() {
        let zi = if flip { 1 - z } else { z } as f64;
        design[(i, 0)] = zi;
        design[(i, 1)] = 1.0;
    }
    Ok(regression::ols(&design, &DVector::from_row_slice(response), SeMode::Robust)?)
}

/// The supercomplier population share: the instrument-arm difference in
/// mean outcome, with a robust standard error.
///
/// With a non-binary outcome the same contrast identifies the share scaled
/// by the supercomplier average treatment effect; the label says so.
pub fn supercomplier_share(table: &ObservationTable) -> Result<WaldEstimate, IdentificationError> {
    let fit = diff_of_means(table, table.y(), false)?;
    let label = if table.y_binary() {
        "supercomplier share".to_string()
    } else {
        "supercomplier share x ATE (non-binary outcome)".to_string()
    };
    Ok(WaldEstimate::new(label, fit.beta[0], fit.se(0), fit.beta[0], 1.0))
}

/// The complier population share: the sample first stage.
pub fn complier_share(table: &ObservationTable) -> Result<WaldEstimate, IdentificationError> {
    let d: Vec<f64> = table.d().iter().map(|&v| v as f64).collect();
    let fit = diff_of_means(table, &d, false)?;
    Ok(WaldEstimate::new("complier share".into(), fit.beta[0], fit.se(0), fit.beta[0], 1.0))
}

/// Shares of the two other complier groups: `ca` (outcome already 1 without
/// take-up) from the contrast of `(1-D)Y` with the arms reversed, and `cn`
/// (outcome stays 0 despite take-up) from the contrast of `D(1-Y)`.
///
/// In-sample, `ca + cn + supercomplier` equals the first stage exactly.
pub fn other_group_shares(
    table: &ObservationTable,
) -> Result<(WaldEstimate, WaldEstimate), IdentificationError> {
    require_binary(table, "other_group_shares")?;
    let ca_resp: Vec<f64> = table
        .d()
        .iter()
        .zip(table.y())
        .map(|(&d, &y)| (1 - d) as f64 * y)
        .collect();
    let cn_resp: Vec<f64> = table
        .d()
        .iter()
        .zip(table.y())
        .map(|(&d, &y)| d as f64 * (1.0 - y))
        .collect();
    let ca_fit = diff_of_means(table, &ca_resp, true)?;
    let cn_fit = diff_of_means(table, &cn_resp, false)?;
    Ok((
        WaldEstimate::new("ca share".into(), ca_fit.beta[0], ca_fit.se(0), ca_fit.beta[0], 1.0),
        WaldEstimate::new("cn share".into(), cn_fit.beta[0], cn_fit.se(0), cn_fit.beta[0], 1.0),
    ))
}

fn require_binary(table: &ObservationTable, operation: &str) -> Result<(), IdentificationError> {
    if table.y_binary() {
        Ok(())
    } else {
        Err(IdentificationError::NonBinaryOutcome { operation: operation.to_string() })
    }
}

fn check_h(table: &ObservationTable, h: &[f64]) -> Result<(), IdentificationError> {
    if h.len() != table.n() {
        Err(IdentificationError::LengthMismatch { got: h.len(), expected: table.n() })
    } else {
        Ok(())
    }
}

/// Response and endogenous products defining each target's ratio.
fn target_products(table: &ObservationTable, h: &[f64], target: Target) -> (Vec<f64>, Vec<f64>) {
    let n = table.n();
    let mut response = Vec::with_capacity(n);
    let mut endog = Vec::with_capacity(n);
    for i in 0..n {
        let d = table.d()[i] as f64;
        let y = table.y()[i];
        let e = match target {
            Target::Supercomplier => y,
            Target::Complier => d,
            Target::Ca => (1.0 - d) * y,
            Target::Cn => d * (1.0 - y),
            Target::Population => 1.0,
        };
        endog.push(e);
        response.push(h[i] * e);
    }
    (response, endog)
}

fn map_weak(target: Target) -> impl FnOnce(RegressionError) -> IdentificationError {
    move |e| match e {
        RegressionError::WeakFirstStage { .. } => {
            IdentificationError::ZeroDenominator { target: target.name().to_string() }
        }
        other => IdentificationError::Regression(other),
    }
}

/// Mean of `h(X)` for a latent group via the ratio of instrument-arm
/// contrasts, estimated as a just-identified IV regression of the product
/// response on the group's product indicator, instrumented by assignment.
///
/// The population target is the plain sample mean. With a non-binary
/// outcome the supercomplier target identifies a treatment-effect-weighted
/// mean and is labeled accordingly; the `ca`/`cn` targets require a binary
/// outcome.
pub fn characteristics_wald(
    table: &ObservationTable,
    h: &[f64],
    target: Target,
) -> Result<WaldEstimate, IdentificationError> {
    check_h(table, h)?;
    if matches!(target, Target::Ca | Target::Cn) {
        require_binary(table, "characteristics_wald (ca/cn target)")?;
    }
    if target == Target::Population {
        let design = DMatrix::from_element(table.n(), 1, 1.0);
        let fit = regression::ols(&design, &DVector::from_row_slice(h), SeMode::Robust)?;
        return Ok(WaldEstimate::new(
            "population mean".into(),
            fit.beta[0],
            fit.se(0),
            fit.beta[0],
            1.0,
        ));
    }
    let (response, endog) = target_products(table, h, target);
    let z: Vec<f64> = table.z().iter().map(|&v| v as f64).collect();
    let fit = tsls(
        &DVector::from_vec(response.clone()),
        &DVector::from_vec(endog.clone()),
        &DVector::from_vec(z),
        None,
    )
    .map_err(map_weak(target))?;
    let (r1, r0) = arm_means(&response, table.z());
    let (e1, e0) = arm_means(&endog, table.z());
    let label = match (target, table.y_binary()) {
        (Target::Supercomplier, false) => "TE-weighted supercomplier mean".to_string(),
        (t, _) => format!("{t} mean"),
    };
    Ok(WaldEstimate::new(label, fit.beta[0], fit.se(0), r1 - r0, e1 - e0))
}

/// The weight-based (plug-in) characteristics estimator, implemented as the
/// same IV regression after shifting the outcome (or take-up) by the sample
/// control share: the ratio is then `mean(pi * h) / reduced form` exactly.
///
/// Inference treats the estimated assignment share as known.
pub fn characteristics_plugin(
    table: &ObservationTable,
    h: &[f64],
    target: Target,
) -> Result<WaldEstimate, IdentificationError> {
    check_h(table, h)?;
    if !matches!(target, Target::Supercomplier | Target::Complier) {
        return Err(IdentificationError::InvalidTarget {
            operation: "characteristics_plugin".into(),
            target: target.name().into(),
        });
    }
    let shift = 1.0 - table.sample_tau();
    let n = table.n();
    let mut response = Vec::with_capacity(n);
    let mut endog = Vec::with_capacity(n);
    for i in 0..n {
        let base = match target {
            Target::Supercomplier => table.y()[i],
            _ => table.d()[i] as f64,
        };
        let shifted = base - shift;
        endog.push(shifted);
        response.push(h[i] * shifted);
    }
    let z: Vec<f64> = table.z().iter().map(|&v| v as f64).collect();
    let fit = tsls(
        &DVector::from_vec(response.clone()),
        &DVector::from_vec(endog.clone()),
        &DVector::from_vec(z),
        None,
    )
    .map_err(map_weak(target))?;
    let (r1, r0) = arm_means(&response, table.z());
    let (e1, e0) = arm_means(&endog, table.z());
    Ok(WaldEstimate::new(
        format!("{target} mean (plug-in)"),
        fit.beta[0],
        fit.se(0),
        r1 - r0,
        e1 - e0,
    ))
}

/// Side-by-side check that the share-and-mean assembly estimator of
/// complier characteristics and the IV-regression estimator coincide.
#[derive(Debug, Clone, Serialize)]
pub struct FinkNotoReport {
    /// Assembled from take-up shares and conditional means.
    pub chi_assembled: f64,
    /// Endogenous coefficient of the IV regression of `h(X) D` on `D`.
    pub chi_iv: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub first_stage: f64,
}

/// Computes both complier-characteristics estimators and reports their gap.
/// They are algebraically identical whenever the sample first stage is
/// nonzero, so this doubles as a self-test of the IV path.
pub fn fink_noto_equivalence_check(
    table: &ObservationTable,
    h: &[f64],
) -> Result<FinkNotoReport, IdentificationError> {
    check_h(table, h)?;
    let d: Vec<f64> = table.d().iter().map(|&v| v as f64).collect();
    let (d1, d0) = arm_means(&d, table.z());
    let s_at = d0;
    let s_c = d1 - d0;
    if s_c == 0.0 {
        return Err(IdentificationError::ZeroDenominator { target: "complier".into() });
    }

    // Conditional means of h among takers in each arm; an empty taker cell
    // contributes zero mass because its share multiplier is zero.
    let taker_mean = |arm: u8| -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for i in 0..table.n() {
            if table.z()[i] == arm && table.d()[i] == 1 {
                s += h[i];
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    };
    let mu_t = taker_mean(1);
    let mu_at = taker_mean(0);
    let chi_assembled = ((s_at + s_c) * mu_t - s_at * mu_at) / s_c;

    let chi_iv = characteristics_wald(table, h, Target::Complier)?.value;
    let abs_diff = (chi_assembled - chi_iv).abs();
    let scale = chi_assembled.abs().max(chi_iv.abs()).max(1e-300);
    Ok(FinkNotoReport {
        chi_assembled,
        chi_iv,
        abs_diff,
        rel_diff: abs_diff / scale,
        first_stage: s_c,
    })
}

/// What the supercomplier characteristics ratio identifies when a share
/// `share_cf` of compliers is harmed by take-up: the supercomplier mean
/// plus `xi * (mean_cc - mean_cf)` with
/// `xi = share_cf / (share_cc - share_cf)`. The distortion grows linearly
/// in the harmed share.
pub fn bias_under_violation(
    share_cf: f64,
    share_cc: f64,
    mean_cc: f64,
    mean_cf: f64,
) -> Result<f64, IdentificationError> {
    for (name, s) in [("share_cf", share_cf), ("share_cc", share_cc)] {
        if !(0.0..=1.0).contains(&s) {
            return Err(IdentificationError::Inconsistent(format!(
                "{name} = {s} is not a probability"
            )));
        }
    }
    let reduced_form = share_cc - share_cf;
    if reduced_form == 0.0 {
        return Err(IdentificationError::ZeroDenominator { target: "supercomplier".into() });
    }
    let xi = share_cf / reduced_form;
    Ok(mean_cc + xi * (mean_cc - mean_cf))
}
