//! Rationalizing an observed distribution.
//!
//! Three inequalities on the distribution of `(Y, D)` by instrument arm are
//! sharp for the identifying assumptions: they hold if and only if some
//! admissible process induces the observed distribution. Their left-hand
//! sides identify the `cn`, `ca`, and supercomplier shares. When they hold,
//! an explicit witness is constructed: the complier-group shares are the
//! inequality left-hand sides, the directly observable cells pin down `an`
//! and `na`, and the ambiguous `(Y=1,D=1|Z=0)` and `(Y=0,D=0|Z=1)` masses
//! are split half-and-half between `{aa, ac}` and `{nn, nc}` (the split is
//! not unique; any split induces the same observables).

use super::{DgpError, FlatDgp, StratificationDgp};
use serde::{Deserialize, Serialize};
use std::fmt;

/// One of the three sharp testable inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `Pr(Y=0, D=1 | Z=1) >= Pr(Y=0, D=1 | Z=0)`; its slack is the `cn`
    /// share.
    CnNonnegative,
    /// `Pr(Y=1, D=0 | Z=0) >= Pr(Y=1, D=0 | Z=1)`; its slack is the `ca`
    /// share.
    CaNonnegative,
    /// `Pr(Y=1 | Z=1) >= Pr(Y=1 | Z=0)`; outcome monotonicity, with the
    /// supercomplier share as slack.
    OutcomeMonotonicity,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Inequality::CnNonnegative => {
                "Pr(Y=0,D=1|Z=1) >= Pr(Y=0,D=1|Z=0) (cn share nonnegative)"
            }
            Inequality::CaNonnegative => {
                "Pr(Y=1,D=0|Z=0) >= Pr(Y=1,D=0|Z=1) (ca share nonnegative)"
            }
            Inequality::OutcomeMonotonicity => {
                "Pr(Y=1|Z=1) >= Pr(Y=1|Z=0) (outcome monotonicity)"
            }
        };
        f.write_str(s)
    }
}

/// The conditional distribution of `(Y, D)` given each instrument arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedDistribution {
    /// Indexed `[z][y][d]`; each arm sums to one.
    cells: [[[f64; 2]; 2]; 2],
}

impl ObservedDistribution {
    pub fn new(cells: [[[f64; 2]; 2]; 2]) -> Result<Self, DgpError> {
        for (z, arm) in cells.iter().enumerate() {
            let mut total = 0.0;
            for row in arm {
                for &p in row {
                    if !(0.0..=1.0 + 1e-12).contains(&p) {
                        return Err(DgpError::InvalidObserved(format!(
                            "cell probability {p} out of range in arm z={z}"
                        )));
                    }
                    total += p;
                }
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(DgpError::InvalidObserved(format!(
                    "arm z={z} sums to {total}, expected 1"
                )));
            }
        }
        Ok(ObservedDistribution { cells })
    }

    /// `Pr(Y=y, D=d | Z=z)`.
    pub fn cell(&self, z: u8, y: u8, d: u8) -> f64 {
        self.cells[z as usize][y as usize][d as usize]
    }

    /// `Pr(Y=y | Z=z)`.
    pub fn outcome_margin(&self, z: u8, y: u8) -> f64 {
        self.cell(z, y, 0) + self.cell(z, y, 1)
    }

    /// Left-hand sides of the three sharp inequalities, in
    /// `[cn, ca, outcome-monotonicity]` order.
    pub fn inequality_lhs(&self) -> [f64; 3] {
        [
            self.cell(1, 0, 1) - self.cell(0, 0, 1),
            self.cell(0, 1, 0) - self.cell(1, 1, 0),
            self.outcome_margin(1, 1) - self.outcome_margin(0, 1),
        ]
    }

    pub fn violated_inequalities(&self) -> Vec<Inequality> {
        let lhs = self.inequality_lhs();
        [
            Inequality::CnNonnegative,
            Inequality::CaNonnegative,
            Inequality::OutcomeMonotonicity,
        ]
        .into_iter()
        .zip(lhs)
        .filter(|&(_, v)| v < -super::MASS_TOLERANCE)
        .map(|(i, _)| i)
        .collect()
    }

    /// Largest absolute difference across the eight cells.
    pub fn max_abs_diff(&self, other: &ObservedDistribution) -> f64 {
        let mut worst = 0.0f64;
        for z in 0..2u8 {
            for y in 0..2u8 {
                for d in 0..2u8 {
                    worst = worst.max((self.cell(z, y, d) - other.cell(z, y, d)).abs());
                }
            }
        }
        worst
    }
}

/// Constructs a process satisfying the identifying assumptions that induces
/// the observed distribution exactly, or reports which sharp inequalities
/// the input violates.
pub fn rationalize(
    observed: &ObservedDistribution,
    tau: f64,
) -> Result<StratificationDgp, DgpError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(DgpError::InvalidTau(tau));
    }
    let violated = observed.violated_inequalities();
    if !violated.is_empty() {
        return Err(DgpError::InequalityViolated { violated });
    }

    // Tiny negative slack from floating-point cancellation is clamped away.
    let clamp = |v: f64| v.max(0.0);
    let [cn, ca, cc] = observed.inequality_lhs().map(clamp);
    let half_treated_success = 0.5 * observed.cell(0, 1, 1);
    let half_control_failure = 0.5 * observed.cell(1, 0, 0);
    let shares = [
        ("aa", half_treated_success),
        ("ac", half_treated_success),
        ("an", observed.cell(0, 0, 1)),
        ("na", observed.cell(1, 1, 0)),
        ("nn", half_control_failure),
        ("nc", half_control_failure),
        ("ca", ca),
        ("cn", cn),
        ("cc", cc),
    ];
    let dgp = StratificationDgp::flat(&[], FlatDgp::new(tau, &shares));
    dgp.validate()?;
    Ok(dgp)
}
