//! Exact population values of every estimand, computed as finite sums over
//! the group shares and their laws. No simulation is involved; these are the
//! reference values that sampled estimates must converge to.

use super::{DgpError, FlatDgp, ObservedDistribution, OutcomeKind, StratificationDgp};
use crate::groups::{Group, ResponseType};
use serde::Serialize;

/// Population truth for one covariate.
#[derive(Debug, Clone, Serialize)]
pub struct CovariateTruth {
    pub name: String,
    pub population: f64,
    pub complier: Option<f64>,
    pub supercomplier: Option<f64>,
    pub ca: Option<f64>,
    pub cn: Option<f64>,
    /// Treatment-effect-weighted supercomplier mean (what the ratio
    /// estimand identifies when the outcome is not binary).
    pub te_weighted: Option<f64>,
    /// Marginal law of the covariate among supercompliers (value, mass),
    /// sorted by value and normalized.
    pub cc_marginal: Vec<(f64, f64)>,
    /// Population support: (value, total mass, supercomplier mass).
    pub support: Vec<(f64, f64, f64)>,
}

impl CovariateTruth {
    /// Supercomplier c.d.f. at `x`.
    pub fn cc_cdf(&self, x: f64) -> f64 {
        self.cc_marginal.iter().filter(|&&(v, _)| v <= x).map(|&(_, p)| p).sum()
    }

    /// Smallest supercomplier support point whose c.d.f. reaches `theta`.
    pub fn cc_quantile(&self, theta: f64) -> Option<f64> {
        let mut cum = 0.0;
        for &(v, p) in &self.cc_marginal {
            cum += p;
            if cum >= theta - 1e-12 {
                return Some(v);
            }
        }
        self.cc_marginal.last().map(|&(v, _)| v)
    }

    /// `Pr(G = cc | X = value)` on the support.
    pub fn pr_cc_given_x(&self, value: f64) -> Option<f64> {
        self.support
            .iter()
            .find(|&&(v, _, _)| v == value)
            .map(|&(_, total, cc)| if total > 0.0 { cc / total } else { 0.0 })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StratumTruth {
    pub label: String,
    pub prob: f64,
    pub tau: f64,
    pub truth: AnalyticTruth,
    /// `reduced_form * tau * (1 - tau)`, the stratum's weight in the
    /// fixed-effects estimand.
    pub omega: f64,
}

/// Exact population values for a process.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticTruth {
    pub share_cc: f64,
    pub share_ca: f64,
    pub share_cn: f64,
    pub share_cf: f64,
    pub share_complier: f64,
    pub first_stage: f64,
    pub reduced_form: f64,
    /// `reduced_form / first_stage`; absent without compliers.
    pub late: Option<f64>,
    pub covariates: Vec<CovariateTruth>,
    /// Left-hand sides of the sharp inequalities in `[cn, ca, outcome]`
    /// order; binary flat processes only.
    pub inequality_lhs: Option<[f64; 3]>,
    /// Induced `(Y, D)` distribution by arm; binary flat processes only.
    #[serde(skip)]
    pub cells: Option<ObservedDistribution>,
    pub per_stratum: Vec<StratumTruth>,
    /// The omega-weighted supercomplier mean per covariate that the
    /// fixed-effects IV estimand targets; stratified processes only.
    pub omega_weighted_x: Option<Vec<f64>>,
}

/// Per-group moments of one layer.
struct GroupMoments {
    share: f64,
    mean_x: Vec<f64>,
    mean_te: f64,
    mean_x_te: Vec<f64>,
    /// (value, mass) per covariate, unnormalized by share.
    support: Vec<Vec<(f64, f64)>>,
}

fn layer_moments(dgp: &StratificationDgp, flat: &FlatDgp) -> Vec<(Group, GroupMoments)> {
    let k = dgp.covariates.len();
    Group::all()
        .map(|group| {
            let share = flat.share(group);
            let fallback = super::GroupLaw::point(vec![0.0; k]);
            let law = flat
                .covariate_law
                .get(&group)
                .or(flat.default_law.as_ref())
                .unwrap_or(&fallback);
            let potentials = group.potentials();
            let mut mean_x = vec![0.0; k];
            let mut mean_te = 0.0;
            let mut mean_x_te = vec![0.0; k];
            let mut support = vec![Vec::new(); k];
            for atom in &law.atoms {
                let (y0, y1) = match dgp.outcome {
                    OutcomeKind::Binary => (potentials.y0 as f64, potentials.y1 as f64),
                    OutcomeKind::General => (atom.y0.unwrap_or(0.0), atom.y1.unwrap_or(0.0)),
                };
                let te = y1 - y0;
                mean_te += atom.prob * te;
                for j in 0..k {
                    mean_x[j] += atom.prob * atom.x[j];
                    mean_x_te[j] += atom.prob * atom.x[j] * te;
                    support[j].push((atom.x[j], atom.prob));
                }
            }
            (group, GroupMoments { share, mean_x, mean_te, mean_x_te, support })
        })
        .collect()
}

fn merge_support(entries: &mut Vec<(f64, f64)>) {
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(entries.len());
    for &(v, p) in entries.iter() {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 += p,
            _ => merged.push((v, p)),
        }
    }
    *entries = merged;
}

fn flat_truth(dgp: &StratificationDgp, flat: &FlatDgp) -> AnalyticTruth {
    let k = dgp.covariates.len();
    let moments = layer_moments(dgp, flat);
    let get = |g: Group| moments.iter().find(|(gg, _)| *gg == g).map(|(_, m)| m).unwrap();

    let mut share_complier = 0.0;
    let mut first_stage = 0.0;
    let mut reduced_form = 0.0;
    for (group, m) in &moments {
        match group.treatment {
            ResponseType::Complier => {
                share_complier += m.share;
                first_stage += m.share;
                reduced_form += m.share * m.mean_te;
            }
            ResponseType::Defier => {
                first_stage -= m.share;
                reduced_form -= m.share * m.mean_te;
            }
            _ => {}
        }
    }
    let late = (first_stage != 0.0).then(|| reduced_form / first_stage);

    let cc = get(Group::CC);
    let ca = get(Group::CA);
    let cn = get(Group::CN);
    let cf = get(Group::CF);

    let mut covariates = Vec::with_capacity(k);
    for j in 0..k {
        let mut population = 0.0;
        let mut complier_num = 0.0;
        let mut support: Vec<(f64, f64, f64)> = Vec::new();
        for (group, m) in &moments {
            population += m.share * m.mean_x[j];
            if group.treatment == ResponseType::Complier {
                complier_num += m.share * m.mean_x[j];
            }
            for &(v, p) in &m.support[j] {
                let mass = m.share * p;
                let cc_mass = if *group == Group::CC { mass } else { 0.0 };
                support.push((v, mass, cc_mass));
            }
        }
        support.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64, f64)> = Vec::new();
        for (v, p, c) in support {
            match merged.last_mut() {
                Some(last) if last.0 == v => {
                    last.1 += p;
                    last.2 += c;
                }
                _ => merged.push((v, p, c)),
            }
        }

        let mut cc_marginal: Vec<(f64, f64)> = cc.support[j].clone();
        merge_support(&mut cc_marginal);

        let group_mean = |m: &GroupMoments| (m.share > 0.0).then(|| m.mean_x[j]);
        covariates.push(CovariateTruth {
            name: dgp.covariates[j].clone(),
            population,
            complier: (share_complier > 0.0).then(|| complier_num / share_complier),
            supercomplier: group_mean(cc),
            ca: group_mean(ca),
            cn: group_mean(cn),
            te_weighted: (cc.share > 0.0 && cc.mean_te != 0.0)
                .then(|| cc.mean_x_te[j] / cc.mean_te),
            cc_marginal,
            support: merged,
        });
    }

    let (inequality_lhs, cells) = if dgp.outcome == OutcomeKind::Binary {
        let single = StratificationDgp {
            covariates: vec![],
            outcome: OutcomeKind::Binary,
            flat: Some(FlatDgp {
                tau: flat.tau,
                shares: flat.shares.clone(),
                covariate_law: Default::default(),
                default_law: None,
            }),
            strata: vec![],
        };
        let cells = super::induced_distribution(&single).expect("validated layer");
        (Some(cells.inequality_lhs()), Some(cells))
    } else {
        (None, None)
    };

    AnalyticTruth {
        share_cc: cc.share,
        share_ca: ca.share,
        share_cn: cn.share,
        share_cf: cf.share,
        share_complier,
        first_stage,
        reduced_form,
        late,
        covariates,
        inequality_lhs,
        cells,
        per_stratum: Vec::new(),
        omega_weighted_x: None,
    }
}

/// Computes every population quantity of the process exactly.
pub fn true_values(dgp: &StratificationDgp) -> Result<AnalyticTruth, DgpError> {
    dgp.validate()?;
    if !dgp.is_stratified() {
        return Ok(flat_truth(dgp, dgp.flat.as_ref().unwrap()));
    }

    let per_stratum: Vec<StratumTruth> = dgp
        .strata
        .iter()
        .map(|s| {
            let truth = flat_truth(dgp, &s.dgp);
            let omega = truth.reduced_form * s.dgp.tau * (1.0 - s.dgp.tau);
            StratumTruth { label: s.label.clone(), prob: s.prob, tau: s.dgp.tau, truth, omega }
        })
        .collect();

    // Mixture aggregates: share-type quantities mix linearly; the reduced
    // form aggregate is the average of within-stratum contrasts.
    let mix = |f: &dyn Fn(&AnalyticTruth) -> f64| -> f64 {
        per_stratum.iter().map(|s| s.prob * f(&s.truth)).sum()
    };
    let share_cc = mix(&|t| t.share_cc);
    let share_ca = mix(&|t| t.share_ca);
    let share_cn = mix(&|t| t.share_cn);
    let share_cf = mix(&|t| t.share_cf);
    let share_complier = mix(&|t| t.share_complier);
    let first_stage = mix(&|t| t.first_stage);
    let reduced_form = mix(&|t| t.reduced_form);

    let k = dgp.covariates.len();
    let mut covariates = Vec::with_capacity(k);
    let mut omega_weighted_x = vec![0.0; k];
    let omega_total: f64 = per_stratum.iter().map(|s| s.prob * s.omega).sum();
    for j in 0..k {
        let mut population = 0.0;
        let mut cc_num = 0.0;
        let mut complier_num = 0.0;
        let mut ca_num = 0.0;
        let mut cn_num = 0.0;
        let mut te_num = 0.0;
        let mut te_den = 0.0;
        let mut cc_marginal: Vec<(f64, f64)> = Vec::new();
        let mut support: Vec<(f64, f64, f64)> = Vec::new();
        for s in &per_stratum {
            let c = &s.truth.covariates[j];
            population += s.prob * c.population;
            if let Some(m) = c.supercomplier {
                cc_num += s.prob * s.truth.share_cc * m;
                if s.omega != 0.0 && omega_total != 0.0 {
                    omega_weighted_x[j] += s.prob * s.omega * m / omega_total;
                }
            }
            if let Some(m) = c.complier {
                complier_num += s.prob * s.truth.share_complier * m;
            }
            if let Some(m) = c.ca {
                ca_num += s.prob * s.truth.share_ca * m;
            }
            if let Some(m) = c.cn {
                cn_num += s.prob * s.truth.share_cn * m;
            }
            if let Some(te) = c.te_weighted {
                // te_weighted is x-weighted by TE within cc; reweight by the
                // stratum's cc TE mass.
                let mass = s.truth.reduced_form.max(0.0);
                te_num += s.prob * mass * te;
                te_den += s.prob * mass;
            }
            for &(v, p) in &c.cc_marginal {
                cc_marginal.push((v, s.prob * s.truth.share_cc * p));
            }
            for &(v, p, cmass) in &c.support {
                support.push((v, s.prob * p, s.prob * cmass));
            }
        }
        merge_support(&mut cc_marginal);
        let total_cc: f64 = cc_marginal.iter().map(|&(_, p)| p).sum();
        if total_cc > 0.0 {
            for entry in &mut cc_marginal {
                entry.1 /= total_cc;
            }
        }
        support.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64, f64)> = Vec::new();
        for (v, p, c) in support {
            match merged.last_mut() {
                Some(last) if last.0 == v => {
                    last.1 += p;
                    last.2 += c;
                }
                _ => merged.push((v, p, c)),
            }
        }
        covariates.push(CovariateTruth {
            name: dgp.covariates[j].clone(),
            population,
            complier: (share_complier > 0.0).then(|| complier_num / share_complier),
            supercomplier: (share_cc > 0.0).then(|| cc_num / share_cc),
            ca: (share_ca > 0.0).then(|| ca_num / share_ca),
            cn: (share_cn > 0.0).then(|| cn_num / share_cn),
            te_weighted: (te_den > 0.0).then(|| te_num / te_den),
            cc_marginal,
            support: merged,
        });
    }

    Ok(AnalyticTruth {
        share_cc,
        share_ca,
        share_cn,
        share_cf,
        share_complier,
        first_stage,
        reduced_form,
        late: (first_stage != 0.0).then(|| reduced_form / first_stage),
        covariates,
        inequality_lhs: None,
        cells: None,
        per_stratum,
        omega_weighted_x: (omega_total != 0.0).then_some(omega_weighted_x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{tests::rationalization_example, Atom, FlatDgp, GroupLaw, Stratum};

    #[test]
    fn example_shares_give_known_aggregates() {
        let dgp = StratificationDgp::flat(
            &[],
            FlatDgp::new(
                0.5,
                &[("cc", 0.2), ("ca", 0.1), ("cn", 0.05), ("aa", 0.3), ("nn", 0.35)],
            ),
        );
        let t = true_values(&dgp).unwrap();
        assert!((t.first_stage - 0.35).abs() < 1e-15);
        assert!((t.reduced_form - 0.20).abs() < 1e-15);
        assert!((t.late.unwrap() - 0.20 / 0.35).abs() < 1e-15);
        assert!((t.share_complier - 0.35).abs() < 1e-15);
    }

    #[test]
    fn no_compliers_means_no_late() {
        let dgp = StratificationDgp::flat(
            &[],
            FlatDgp::new(0.5, &[("aa", 0.4), ("nn", 0.6)]),
        );
        let t = true_values(&dgp).unwrap();
        assert_eq!(t.first_stage, 0.0);
        assert!(t.late.is_none());
    }

    #[test]
    fn point_mass_covariate_truth() {
        let dgp = StratificationDgp::flat(
            &["x1"],
            FlatDgp::new(0.5, &[("cc", 0.2), ("nn", 0.8)])
                .with_law("cc", GroupLaw::point(vec![2.0]))
                .with_default_law(GroupLaw::point(vec![0.0])),
        );
        let t = true_values(&dgp).unwrap();
        let c = &t.covariates[0];
        assert_eq!(c.supercomplier.unwrap(), 2.0);
        assert!((c.population - 0.4).abs() < 1e-15);
        assert_eq!(c.pr_cc_given_x(2.0).unwrap(), 1.0);
        assert_eq!(c.pr_cc_given_x(0.0).unwrap(), 0.0);
    }

    #[test]
    fn conforming_process_ties_reduced_form_to_cc_share() {
        let t = true_values(&rationalization_example()).unwrap();
        assert!((t.reduced_form - t.share_cc).abs() < 1e-15);
        let lhs = t.inequality_lhs.unwrap();
        assert!((lhs[0] - 0.05).abs() < 1e-15);
        assert!((lhs[1] - 0.10).abs() < 1e-15);
        assert!((lhs[2] - 0.20).abs() < 1e-15);
    }

    #[test]
    fn cdf_and_quantiles_on_the_cc_marginal() {
        let t = true_values(&rationalization_example()).unwrap();
        let c = &t.covariates[0];
        assert!((c.cc_cdf(2.5) - 0.4).abs() < 1e-12);
        assert_eq!(c.cc_quantile(0.5).unwrap(), 3.0);
        assert_eq!(c.cc_quantile(0.95).unwrap(), 5.0);
    }

    #[test]
    fn general_outcome_scales_the_reduced_form_by_the_cc_effect() {
        let cc_law = GroupLaw {
            atoms: vec![
                Atom { prob: 0.5, x: vec![1.0], y0: Some(0.0), y1: Some(2.0) },
                Atom { prob: 0.5, x: vec![3.0], y0: Some(1.0), y1: Some(2.0) },
            ],
        };
        let nn_law = GroupLaw {
            atoms: vec![Atom { prob: 1.0, x: vec![0.0], y0: Some(0.5), y1: Some(0.5) }],
        };
        let dgp = StratificationDgp::flat(
            &["x1"],
            FlatDgp::new(0.5, &[("cc", 0.4), ("nn", 0.6)])
                .with_law("cc", cc_law)
                .with_law("nn", nn_law),
        )
        .with_outcome(OutcomeKind::General);
        let t = true_values(&dgp).unwrap();
        // E[TE | cc] = 1.5, so the contrast is 0.4 * 1.5.
        assert!((t.reduced_form - 0.6).abs() < 1e-15);
        // TE-weighted mean of x: (0.5*1*2 + 0.5*3*1) / 1.5.
        let c = &t.covariates[0];
        assert!((c.te_weighted.unwrap() - 2.5 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn stratified_truth_exposes_omega_weights() {
        let make = |cc: f64, tau: f64, x: f64| -> FlatDgp {
            FlatDgp::new(tau, &[("cc", cc), ("nn", 1.0 - cc)])
                .with_law("cc", GroupLaw::point(vec![x]))
                .with_default_law(GroupLaw::point(vec![0.0]))
        };
        let dgp = StratificationDgp::stratified(
            &["x1"],
            vec![
                Stratum { label: "s1".into(), prob: 0.3, dgp: make(0.10, 0.3, 1.0) },
                Stratum { label: "s2".into(), prob: 0.4, dgp: make(0.25, 0.5, 3.0) },
                Stratum { label: "s3".into(), prob: 0.3, dgp: make(0.40, 0.7, 5.0) },
            ],
        );
        let t = true_values(&dgp).unwrap();
        assert_eq!(t.per_stratum.len(), 3);
        let num = 0.3 * (0.10 * 0.3 * 0.7) * 1.0
            + 0.4 * (0.25 * 0.5 * 0.5) * 3.0
            + 0.3 * (0.40 * 0.7 * 0.3) * 5.0;
        let den = 0.3 * (0.10 * 0.3 * 0.7) + 0.4 * (0.25 * 0.5 * 0.5) + 0.3 * (0.40 * 0.7 * 0.3);
        let expected = num / den;
        let got = t.omega_weighted_x.as_ref().unwrap()[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        // Aggregate cc share mixes linearly.
        assert!((t.share_cc - (0.3 * 0.1 + 0.4 * 0.25 + 0.3 * 0.4)).abs() < 1e-15);
    }
}
