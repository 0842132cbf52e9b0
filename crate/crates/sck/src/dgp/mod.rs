//! Exact simulator over the sixteen-group stratification.
//!
//! A data-generating process is a set of group shares, an assignment
//! probability, and per-group finite-support laws for the covariates (and,
//! for non-binary outcomes, the potential-outcome pair). Everything about
//! such a process is a finite sum, so population values of every estimand
//! are computed exactly; sampled tables plus those analytic values are the
//! oracle against which the estimators are validated.
//!
//! Sampling gives each row its own counter-based RNG stream derived from a
//! single master seed, so a sample is reproducible and independent of how
//! rows are batched across threads.

mod rationalize;
mod truth;
mod variance_gap;

pub use rationalize::{rationalize, Inequality, ObservedDistribution};
pub use truth::{true_values, AnalyticTruth, CovariateTruth, StratumTruth};
pub use variance_gap::{variance_gap_example, variance_gap_simulated, VarianceGapSim};

use crate::data::{DataError, ObservationTable};
use crate::groups::{Group, ResponseType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Probability-mass tolerance for validation.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DgpError {
    #[error("invalid group shares: {0}")]
    InvalidShares(String),
    #[error("assignment probability must lie strictly inside (0,1), got {0}")]
    InvalidTau(f64),
    #[error("invalid covariate law for group `{group}`: {detail}")]
    InvalidLaw { group: String, detail: String },
    #[error("invalid process structure: {0}")]
    Structure(String),
    #[error("operation requires a binary-outcome process: {0}")]
    NonBinary(String),
    #[error("observed distribution is not rationalizable; violated: {}", violated.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InequalityViolated { violated: Vec<Inequality> },
    #[error("invalid observed distribution: {0}")]
    InvalidObserved(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Whether outcomes are the canonical 0/1 potentials or atom-specific reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    #[default]
    Binary,
    General,
}

/// One support point of a group's law: covariate values and, for general
/// outcomes, the potential-outcome pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atom {
    pub prob: f64,
    #[serde(default)]
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y1: Option<f64>,
}

/// Finite-support law attached to one group.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroupLaw {
    pub atoms: Vec<Atom>,
}

impl GroupLaw {
    /// Point mass at a covariate vector.
    pub fn point(x: Vec<f64>) -> Self {
        GroupLaw { atoms: vec![Atom { prob: 1.0, x, y0: None, y1: None }] }
    }

    /// Uniform over scalar covariate values.
    pub fn uniform(values: &[f64]) -> Self {
        let p = 1.0 / values.len() as f64;
        GroupLaw {
            atoms: values
                .iter()
                .map(|&v| Atom { prob: p, x: vec![v], y0: None, y1: None })
                .collect(),
        }
    }

    /// Weighted scalar covariate values.
    pub fn weighted(pairs: &[(f64, f64)]) -> Self {
        GroupLaw {
            atoms: pairs
                .iter()
                .map(|&(v, p)| Atom { prob: p, x: vec![v], y0: None, y1: None })
                .collect(),
        }
    }
}

/// An unstratified process: group shares, assignment probability, and
/// per-group laws (groups without a law use `default_law`, which itself
/// defaults to a point mass at zeros).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatDgp {
    pub tau: f64,
    pub shares: BTreeMap<Group, f64>,
    #[serde(default)]
    pub covariate_law: BTreeMap<Group, GroupLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_law: Option<GroupLaw>,
}

impl FlatDgp {
    pub fn new(tau: f64, shares: &[(&str, f64)]) -> Self {
        FlatDgp {
            tau,
            shares: shares.iter().map(|&(g, p)| (g.parse().unwrap(), p)).collect(),
            covariate_law: BTreeMap::new(),
            default_law: None,
        }
    }

    pub fn with_law(mut self, group: &str, law: GroupLaw) -> Self {
        self.covariate_law.insert(group.parse().unwrap(), law);
        self
    }

    pub fn with_default_law(mut self, law: GroupLaw) -> Self {
        self.default_law = Some(law);
        self
    }

    pub fn share(&self, group: Group) -> f64 {
        self.shares.get(&group).copied().unwrap_or(0.0)
    }
}

/// One stratum of a stratified process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stratum {
    pub label: String,
    pub prob: f64,
    pub dgp: FlatDgp,
}

/// A full process specification: either a single flat layer or a list of
/// strata, plus covariate names and the outcome kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratificationDgp {
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub outcome: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat: Option<FlatDgp>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strata: Vec<Stratum>,
}

impl StratificationDgp {
    pub fn flat(covariates: &[&str], dgp: FlatDgp) -> Self {
        StratificationDgp {
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            outcome: OutcomeKind::Binary,
            flat: Some(dgp),
            strata: Vec::new(),
        }
    }

    pub fn stratified(covariates: &[&str], strata: Vec<Stratum>) -> Self {
        StratificationDgp {
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            outcome: OutcomeKind::Binary,
            flat: None,
            strata,
        }
    }

    pub fn with_outcome(mut self, outcome: OutcomeKind) -> Self {
        self.outcome = outcome;
        self
    }

    pub fn is_stratified(&self) -> bool {
        !self.strata.is_empty()
    }

    /// No mass on any defier-type group.
    pub fn is_conforming(&self) -> bool {
        self.layers().all(|(_, _, flat)| {
            Group::all()
                .filter(|g| !g.admissible())
                .all(|g| flat.share(g) == 0.0)
        })
    }

    /// Iterates `(label, stratum probability, layer)`; a flat process is a
    /// single stratum of probability one.
    pub(crate) fn layers(&self) -> impl Iterator<Item = (String, f64, &FlatDgp)> {
        let flat = self.flat.iter().map(|f| (String::new(), 1.0, f));
        let strata = self.strata.iter().map(|s| (s.label.clone(), s.prob, &s.dgp));
        flat.chain(strata)
    }

    pub fn validate(&self) -> Result<(), DgpError> {
        match (self.flat.is_some(), self.strata.is_empty()) {
            (true, true) | (false, false) => {}
            _ => {
                return Err(DgpError::Structure(
                    "specify exactly one of `flat` or `strata`".into(),
                ))
            }
        }
        if self.is_stratified() {
            let total: f64 = self.strata.iter().map(|s| s.prob).sum();
            if (total - 1.0).abs() > MASS_TOLERANCE
                || self.strata.iter().any(|s| s.prob < 0.0)
            {
                return Err(DgpError::Structure(format!(
                    "stratum probabilities must be nonnegative and sum to 1, got {total}"
                )));
            }
        }
        for (_, _, flat) in self.layers() {
            self.validate_flat(flat)?;
        }
        Ok(())
    }

    fn validate_flat(&self, flat: &FlatDgp) -> Result<(), DgpError> {
        if !(flat.tau > 0.0 && flat.tau < 1.0) {
            return Err(DgpError::InvalidTau(flat.tau));
        }
        let total: f64 = flat.shares.values().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(DgpError::InvalidShares(format!("shares sum to {total}, expected 1")));
        }
        if let Some((g, &p)) = flat.shares.iter().find(|(_, &p)| p < 0.0) {
            return Err(DgpError::InvalidShares(format!("share of `{g}` is negative ({p})")));
        }
        let k = self.covariates.len();
        for (group, law) in flat
            .covariate_law
            .iter()
            .map(|(g, l)| (g.to_string(), l))
            .chain(flat.default_law.iter().map(|l| ("default".to_string(), l)))
        {
            if law.atoms.is_empty() {
                return Err(DgpError::InvalidLaw { group, detail: "no atoms".into() });
            }
            let mass: f64 = law.atoms.iter().map(|a| a.prob).sum();
            if (mass - 1.0).abs() > MASS_TOLERANCE || law.atoms.iter().any(|a| a.prob < 0.0) {
                return Err(DgpError::InvalidLaw {
                    group,
                    detail: format!("atom probabilities sum to {mass}, expected 1"),
                });
            }
            for atom in &law.atoms {
                if atom.x.len() != k {
                    return Err(DgpError::InvalidLaw {
                        group,
                        detail: format!(
                            "atom has {} covariate values, expected {k}",
                            atom.x.len()
                        ),
                    });
                }
            }
        }
        // General outcomes: every atom needs a potential pair respecting the
        // group's outcome type.
        if self.outcome == OutcomeKind::General {
            for group in Group::all() {
                if flat.share(group) == 0.0 {
                    continue;
                }
                let law = flat
                    .covariate_law
                    .get(&group)
                    .or(flat.default_law.as_ref())
                    .ok_or_else(|| DgpError::InvalidLaw {
                        group: group.to_string(),
                        detail: "general outcomes require an explicit law".into(),
                    })?;
                for atom in &law.atoms {
                    let (Some(y0), Some(y1)) = (atom.y0, atom.y1) else {
                        return Err(DgpError::InvalidLaw {
                            group: group.to_string(),
                            detail: "general outcomes require y0 and y1 on every atom".into(),
                        });
                    };
                    let ok = match group.outcome {
                        ResponseType::Complier => y1 > y0,
                        ResponseType::Defier => y1 < y0,
                        _ => y1 == y0,
                    };
                    if !ok {
                        return Err(DgpError::InvalidLaw {
                            group: group.to_string(),
                            detail: format!(
                                "atom potentials (y0={y0}, y1={y1}) contradict the group's outcome type"
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds a process that includes outcome-defying compliers (`cf`), used to
/// study violations of outcome monotonicity. Identical in kind to any other
/// process; the admissibility screen is intentionally not applied.
pub fn violation_dgp(
    tau: f64,
    share_cf: f64,
    share_cc: f64,
    other_shares: &[(&str, f64)],
    laws: &[(&str, GroupLaw)],
) -> Result<StratificationDgp, DgpError> {
    let mut flat = FlatDgp::new(tau, other_shares);
    flat.shares.insert(Group::CC, share_cc);
    flat.shares.insert(Group::CF, share_cf);
    for (g, law) in laws {
        flat = flat.with_law(g, law.clone());
    }
    let k = laws.first().map_or(0, |(_, l)| l.atoms[0].x.len());
    let names: Vec<String> = (0..k).map(|j| format!("x{}", j + 1)).collect();
    let dgp = StratificationDgp {
        covariates: names,
        outcome: OutcomeKind::Binary,
        flat: Some(flat),
        strata: Vec::new(),
    };
    dgp.validate()?;
    Ok(dgp)
}

struct CompiledAtom {
    cum: f64,
    x: Vec<f64>,
    y0: f64,
    y1: f64,
}

struct CompiledLayer {
    label: String,
    cum: f64,
    tau: f64,
    /// (cumulative share, group, atoms)
    groups: Vec<(f64, Group, Vec<CompiledAtom>)>,
}

fn compile(dgp: &StratificationDgp) -> Result<Vec<CompiledLayer>, DgpError> {
    dgp.validate()?;
    let mut layers = Vec::new();
    let mut stratum_cum = 0.0;
    for (label, prob, flat) in dgp.layers() {
        stratum_cum += prob;
        let mut groups = Vec::new();
        let mut cum = 0.0;
        for group in Group::all() {
            let share = flat.share(group);
            if share == 0.0 {
                continue;
            }
            cum += share;
            let fallback = GroupLaw::point(vec![0.0; dgp.covariates.len()]);
            let law = flat
                .covariate_law
                .get(&group)
                .or(flat.default_law.as_ref())
                .unwrap_or(&fallback);
            let potentials = group.potentials();
            let mut acum = 0.0;
            let atoms = law
                .atoms
                .iter()
                .map(|a| {
                    acum += a.prob;
                    CompiledAtom {
                        cum: acum,
                        x: a.x.clone(),
                        y0: match dgp.outcome {
                            OutcomeKind::Binary => potentials.y0 as f64,
                            OutcomeKind::General => a.y0.unwrap(),
                        },
                        y1: match dgp.outcome {
                            OutcomeKind::Binary => potentials.y1 as f64,
                            OutcomeKind::General => a.y1.unwrap(),
                        },
                    }
                })
                .collect();
            groups.push((cum, group, atoms));
        }
        layers.push(CompiledLayer { label, cum: stratum_cum, tau: flat.tau, groups });
    }
    Ok(layers)
}

/// Draws `n` rows from the process. Row `i` uses stream `i` of a
/// counter-based generator keyed by `seed`, so the result does not depend on
/// how work is scheduled.
pub fn sample(
    dgp: &StratificationDgp,
    n: usize,
    seed: u64,
) -> Result<ObservationTable, DgpError> {
    if n == 0 {
        return Err(DgpError::Structure("sample size must be positive".into()));
    }
    let layers = compile(dgp)?;
    let k = dgp.covariates.len();
    let stratified = dgp.is_stratified();

    struct Row {
        z: u8,
        d: u8,
        y: f64,
        x: Vec<f64>,
        layer: usize,
    }

    let rows: Vec<Row> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let u_layer: f64 = rng.random();
            let li = if layers.len() == 1 {
                0
            } else {
                layers.partition_point(|l| l.cum < u_layer).min(layers.len() - 1)
            };
            let layer = &layers[li];
            let u_group: f64 = rng.random();
            let target = u_group * layer.groups.last().map_or(1.0, |g| g.0);
            let gpos = layer.groups.partition_point(|g| g.0 < target);
            let (_, group, atoms) = &layer.groups[gpos.min(layer.groups.len() - 1)];
            let u_atom: f64 = rng.random();
            let apos = atoms.partition_point(|a| a.cum < u_atom * atoms.last().unwrap().cum);
            let atom = &atoms[apos.min(atoms.len() - 1)];
            let z = (rng.random::<f64>() < layer.tau) as u8;
            let p = group.potentials();
            let d = if z == 1 { p.d1 } else { p.d0 };
            let y = if d == 1 { atom.y1 } else { atom.y0 };
            Row { z, d, y, x: atom.x.clone(), layer: li }
        })
        .collect();

    let mut covariates = vec![Vec::with_capacity(n); k];
    let mut z = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut stratum = stratified.then(|| Vec::with_capacity(n));
    for row in rows {
        z.push(row.z);
        d.push(row.d);
        y.push(row.y);
        for (j, col) in covariates.iter_mut().enumerate() {
            col.push(row.x[j]);
        }
        if let Some(s) = &mut stratum {
            s.push(layers[row.layer].label.clone());
        }
    }

    Ok(ObservationTable::from_columns(
        z,
        d,
        y,
        dgp.outcome == OutcomeKind::Binary,
        dgp.covariates.clone(),
        covariates,
        stratum,
        None,
    )?)
}

/// The distribution of `(Y, D)` by instrument arm induced by a flat,
/// binary-outcome process.
pub fn induced_distribution(dgp: &StratificationDgp) -> Result<ObservedDistribution, DgpError> {
    dgp.validate()?;
    if dgp.is_stratified() {
        return Err(DgpError::Structure(
            "induced distribution is defined for flat processes only".into(),
        ));
    }
    if dgp.outcome != OutcomeKind::Binary {
        return Err(DgpError::NonBinary("induced distribution".into()));
    }
    let flat = dgp.flat.as_ref().unwrap();
    let mut cells = [[[0.0f64; 2]; 2]; 2];
    for group in Group::all() {
        let share = flat.share(group);
        if share == 0.0 {
            continue;
        }
        for z in 0..2u8 {
            let (d, y) = group.realize(z);
            cells[z as usize][y as usize][d as usize] += share;
        }
    }
    ObservedDistribution::new(cells)
}
