//! Supercomplier characteristics under stratified assignment.
//!
//! When assignment is random only within strata, the IV regression gains
//! stratum fixed effects. With the per-stratum assignment share estimated by
//! the stratum mean of `z`, the fixed-effects coefficient equals an explicit
//! nonnegative weighted average across strata: each stratum enters with
//! weight `rf_s * tau_s * (1 - tau_s)` (times its sample share), where
//! `rf_s` is its conditional reduced form. Both routes are computed and
//! must agree; a stratum with a zero conditional reduced form contributes
//! zero weight and is flagged.

use super::{arm_means, IdentificationError, WaldEstimate};
use crate::data::ObservationTable;
use crate::regression::tsls;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Relative agreement required between the fixed-effects coefficient and
/// the explicit decomposition.
const DECOMPOSITION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct StratumDecomposition {
    pub label: String,
    pub n: usize,
    /// Within-stratum share assigned to treatment.
    pub tau: f64,
    /// Within-stratum arm contrast of the outcome.
    pub reduced_form: f64,
    /// Within-stratum arm contrast of `h(X) * Y`.
    pub numerator: f64,
    /// `reduced_form * tau * (1 - tau)`.
    pub omega: f64,
    /// Within-stratum supercomplier mean; absent when the conditional
    /// reduced form is zero.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StratifiedEstimate {
    /// IV regression of `h(X) Y` on `Y` instrumented by `Z`, with stratum
    /// fixed effects.
    pub fixed_effects: WaldEstimate,
    /// The explicit omega-weighted average of within-stratum means.
    pub decomposition_value: f64,
    pub strata: Vec<StratumDecomposition>,
    pub warnings: Vec<String>,
}

/// Estimates the supercomplier mean of `h` in a stratified experiment,
/// both by fixed-effects IV and by the explicit per-stratum decomposition,
/// verifying that the two agree.
pub fn stratified_characteristics(
    table: &ObservationTable,
    h: &[f64],
) -> Result<StratifiedEstimate, IdentificationError> {
    super::check_h(table, h)?;
    let codes = table.stratum_codes().ok_or(IdentificationError::NoStrata)?;
    let labels = table.stratum_labels();
    let n = table.n();
    let n_strata = labels.len();

    let response: Vec<f64> = h.iter().zip(table.y()).map(|(&h, &y)| h * y).collect();

    // Per-stratum pieces.
    let mut strata = Vec::with_capacity(n_strata);
    let mut warnings = Vec::new();
    let mut decomp_num = 0.0;
    let mut decomp_den = 0.0;
    for (code, label) in labels.iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| codes[i] as usize == code).collect();
        let n_s = rows.len();
        let z_s: Vec<u8> = rows.iter().map(|&i| table.z()[i]).collect();
        if !z_s.contains(&0) || !z_s.contains(&1) {
            return Err(IdentificationError::SingleArmStratum { label: label.clone() });
        }
        let y_s: Vec<f64> = rows.iter().map(|&i| table.y()[i]).collect();
        let r_s: Vec<f64> = rows.iter().map(|&i| response[i]).collect();
        let tau = z_s.iter().map(|&z| z as f64).sum::<f64>() / n_s as f64;
        let (y1, y0) = arm_means(&y_s, &z_s);
        let (r1, r0) = arm_means(&r_s, &z_s);
        let rf = y1 - y0;
        let numerator = r1 - r0;
        let omega = rf * tau * (1.0 - tau);
        let share = n_s as f64 / n as f64;
        decomp_num += share * tau * (1.0 - tau) * numerator;
        decomp_den += share * omega;
        let mean = if rf != 0.0 {
            Some(numerator / rf)
        } else {
            warnings.push(format!(
                "stratum `{label}` has a zero conditional reduced form; it enters with zero weight"
            ));
            None
        };
        strata.push(StratumDecomposition {
            label: label.clone(),
            n: n_s,
            tau,
            reduced_form: rf,
            numerator,
            omega,
            mean,
        });
    }
    if decomp_den == 0.0 {
        return Err(IdentificationError::ZeroDenominator { target: "supercomplier".into() });
    }
    let decomposition_value = decomp_num / decomp_den;

    // Fixed-effects IV route: one dummy per stratum beyond the first.
    let exog = if n_strata > 1 {
        let mut w = DMatrix::zeros(n, n_strata - 1);
        for (i, &c) in codes.iter().enumerate() {
            if c > 0 {
                w[(i, c as usize - 1)] = 1.0;
            }
        }
        Some(w)
    } else {
        None
    };
    let z: Vec<f64> = table.z().iter().map(|&v| v as f64).collect();
    let fit = tsls(
        &DVector::from_vec(response.clone()),
        &DVector::from_row_slice(table.y()),
        &DVector::from_vec(z),
        exog.as_ref(),
    )
    .map_err(super::map_weak(super::Target::Supercomplier))?;
    let label = if table.y_binary() {
        "supercomplier mean (stratum fixed effects)".to_string()
    } else {
        "TE-weighted supercomplier mean (stratum fixed effects)".to_string()
    };
    let fixed_effects = WaldEstimate::new(label, fit.beta[0], fit.se(0), decomp_num, decomp_den);

    let scale = fixed_effects.value.abs().max(decomposition_value.abs()).max(1.0);
    let gap = (fixed_effects.value - decomposition_value).abs() / scale;
    if gap > DECOMPOSITION_TOLERANCE {
        return Err(IdentificationError::Inconsistent(format!(
            "fixed-effects IV ({}) and omega decomposition ({decomposition_value}) disagree (relative gap {gap:.2e})",
            fixed_effects.value
        )));
    }

    Ok(StratifiedEstimate { fixed_effects, decomposition_value, strata, warnings })
}
