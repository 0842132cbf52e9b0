//! Joint estimation of group shares and characteristics for reporting.
//!
//! Per covariate, the population, complier, supercomplier, `ca`, and `cn`
//! means are estimated in a single stacked system clustered on the
//! observation id, so any difference between two reported means comes with a
//! standard error from their joint covariance and equals the difference of
//! the reported point estimates by construction.

use super::{
    arm_means, complier_share, other_group_shares, supercomplier_share, IdentificationError,
    Target, WaldEstimate,
};
use crate::data::ObservationTable;
use crate::regression::{stacked_iv_system, IvBlock};
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct GroupContrast {
    pub minuend: Target,
    pub subtrahend: Target,
    pub estimate: WaldEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetMean {
    pub target: Target,
    pub estimate: WaldEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicsRow {
    pub covariate: String,
    /// Means for each available target; unidentified targets are absent.
    pub means: Vec<TargetMean>,
    /// All pairwise contrasts among the available targets.
    pub contrasts: Vec<GroupContrast>,
}

impl CharacteristicsRow {
    pub fn mean(&self, target: Target) -> Option<&WaldEstimate> {
        self.means.iter().find(|m| m.target == target).map(|m| &m.estimate)
    }

    pub fn contrast(&self, minuend: Target, subtrahend: Target) -> Option<&WaldEstimate> {
        self.contrasts
            .iter()
            .find(|c| c.minuend == minuend && c.subtrahend == subtrahend)
            .map(|c| &c.estimate)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupShares {
    pub supercomplier: WaldEstimate,
    pub complier: WaldEstimate,
    pub ca: Option<WaldEstimate>,
    pub cn: Option<WaldEstimate>,
    /// `ca + cn + supercomplier - complier`, an exact in-sample identity
    /// (zero up to rounding) when all pieces are available.
    pub decomposition_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub shares: GroupShares,
    pub characteristics: Vec<CharacteristicsRow>,
    pub warnings: Vec<String>,
}

/// Estimates shares and per-covariate group means. With `use_strata` set,
/// the latent-group stacks gain stratum fixed effects.
pub fn summarize_groups(
    table: &ObservationTable,
    covariates: &[String],
    use_strata: bool,
) -> Result<GroupSummary, IdentificationError> {
    let mut warnings = Vec::new();

    let supercomplier = supercomplier_share(table)?;
    let complier = complier_share(table)?;
    let (ca, cn, gap) = if table.y_binary() {
        let (ca, cn) = other_group_shares(table)?;
        let gap = ca.value + cn.value + supercomplier.value - complier.value;
        (Some(ca), Some(cn), Some(gap))
    } else {
        warnings.push(
            "outcome is non-binary: ca/cn shares are not defined and the supercomplier \
             contrast estimates share x ATE"
                .to_string(),
        );
        (None, None, None)
    };

    let exog = if use_strata { stratum_dummies(table)? } else { None };
    if use_strata && exog.is_none() && table.stratum_labels().len() <= 1 {
        // Single stratum or no stratum column: the fixed-effects request is
        // a no-op.
        warnings.push("stratum fixed effects requested but at most one stratum present".into());
    }

    let mut characteristics = Vec::with_capacity(covariates.len());
    for name in covariates {
        let h = table
            .covariate(name)
            .ok_or_else(|| IdentificationError::UnknownCovariate(name.clone()))?;
        let row = characteristics_row(table, name, h, exog.as_ref(), &mut warnings)?;
        characteristics.push(row);
    }

    Ok(GroupSummary {
        shares: GroupShares { supercomplier, complier, ca, cn, decomposition_gap: gap },
        characteristics,
        warnings,
    })
}

fn stratum_dummies(table: &ObservationTable) -> Result<Option<DMatrix<f64>>, IdentificationError> {
    let Some(codes) = table.stratum_codes() else {
        return Ok(None);
    };
    let n_strata = table.stratum_labels().len();
    if n_strata <= 1 {
        return Ok(None);
    }
    let mut w = DMatrix::zeros(table.n(), n_strata - 1);
    for (i, &c) in codes.iter().enumerate() {
        if c > 0 {
            w[(i, c as usize - 1)] = 1.0;
        }
    }
    Ok(Some(w))
}

fn characteristics_row(
    table: &ObservationTable,
    name: &str,
    h: &[f64],
    exog: Option<&DMatrix<f64>>,
    warnings: &mut Vec<String>,
) -> Result<CharacteristicsRow, IdentificationError> {
    let n = table.n();
    let ids: Vec<u64> = (0..n as u64).collect();
    let z: Vec<f64> = table.z().iter().map(|&v| v as f64).collect();

    let mut targets = vec![Target::Population, Target::Complier, Target::Supercomplier];
    if table.y_binary() {
        targets.push(Target::Ca);
        targets.push(Target::Cn);
    }

    // Skip latent targets whose in-sample arm contrast is exactly zero; their
    // ratio is undefined and the stack would fail outright.
    let mut blocks = Vec::new();
    let mut kept = Vec::new();
    for &target in &targets {
        if target == Target::Population {
            blocks.push(IvBlock::mean(target.name(), h.to_vec(), ids.clone()));
            kept.push(target);
            continue;
        }
        let (response, endog) = super::target_products(table, h, target);
        let (e1, e0) = arm_means(&endog, table.z());
        if e1 - e0 == 0.0 {
            warnings.push(format!(
                "{target} means for `{name}` are unidentified in this sample (zero arm contrast)"
            ));
            continue;
        }
        let mut block = IvBlock::iv(target.name(), response, endog, z.clone(), ids.clone());
        if let Some(w) = exog {
            block = block.with_exog(w.clone());
        }
        blocks.push(block);
        kept.push(target);
    }

    let fit = stacked_iv_system(blocks)?;
    let vcov = fit.theta_vcov();

    let mut means = Vec::with_capacity(kept.len());
    for (s, &target) in kept.iter().enumerate() {
        let label = match (target, table.y_binary()) {
            (Target::Supercomplier, false) => {
                format!("TE-weighted supercomplier mean of {name}")
            }
            (t, _) => format!("{t} mean of {name}"),
        };
        means.push(TargetMean {
            target,
            estimate: WaldEstimate::new(label, fit.theta(s), fit.theta_se(s), fit.theta(s), 1.0),
        });
    }

    let mut contrasts = Vec::new();
    for a in 0..kept.len() {
        for b in 0..a {
            let value = fit.theta(a) - fit.theta(b);
            let var = vcov[(a, a)] + vcov[(b, b)] - 2.0 * vcov[(a, b)];
            let est = WaldEstimate::new(
                format!("{} - {} mean of {name}", kept[a], kept[b]),
                value,
                var.max(0.0).sqrt(),
                value,
                1.0,
            );
            contrasts.push(GroupContrast { minuend: kept[a], subtrahend: kept[b], estimate: est });
        }
    }

    Ok(CharacteristicsRow { covariate: name.to_string(), means, contrasts })
}
