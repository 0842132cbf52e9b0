//! Analysis reports: a versioned JSON document plus a fixed-width text
//! rendering. Reports carry everything needed to reproduce them (input
//! hash, configuration echo, seed) and contain no timestamps, so identical
//! invocations produce identical bytes.

use crate::assumptions::{OmTest, SharpTestResult};
use crate::config::AnalysisConfig;
use crate::identification::{
    CdfEstimate, CharacteristicsRow, GroupShares, QuantileEstimate, StratifiedEstimate, Target,
    WaldEstimate,
};
use serde::Serialize;
use std::fmt::Write as _;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub schema_version: u32,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dgp_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<AnalysisConfig>,
}

impl ReportMetadata {
    pub fn new(command: &str) -> Self {
        ReportMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            input_sha256: None,
            dgp_sha256: None,
            seed: None,
            n: None,
            config: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StratifiedSection {
    pub covariate: String,
    pub estimate: StratifiedEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArSection {
    pub covariate: String,
    pub level: f64,
    pub intervals: Vec<(f64, f64)>,
    pub unbounded_below: bool,
    pub unbounded_above: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<SharpTestResult>,
    pub om: OmTest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub om_conditional: Option<SharpTestResult>,
}

/// One estimand's truth-versus-estimate record, possibly aggregated over
/// replications.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationRow {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_se: Option<f64>,
    /// Fraction of replications with `|estimate - truth| <= 4 se`; absent
    /// for estimands reported without a standard error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_4se: Option<f64>,
    /// Fraction of replications where the estimate equals the truth exactly
    /// (quantile-type estimands on discrete support).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSection {
    pub n: usize,
    pub reps: usize,
    pub rows: Vec<SimulationRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub metadata: ReportMetadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<GroupShares>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characteristics: Option<Vec<CharacteristicsRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified: Option<Vec<StratifiedSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anderson_rubin: Option<Vec<ArSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<TestSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<QuantileEstimate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cdf: Option<Vec<CdfEstimate2>>,
    pub warnings: Vec<String>,
}

/// Serializable view of a c.d.f. estimate.
#[derive(Debug, Clone, Serialize)]
pub struct CdfEstimate2 {
    pub covariate: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub ses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rearranged: Option<Vec<f64>>,
}

impl From<&CdfEstimate> for CdfEstimate2 {
    fn from(c: &CdfEstimate) -> Self {
        CdfEstimate2 {
            covariate: c.covariate.clone(),
            grid: c.grid.clone(),
            values: c.estimates.iter().map(|e| e.value).collect(),
            ses: c.estimates.iter().map(|e| e.se).collect(),
            rearranged: c.rearranged.clone(),
        }
    }
}

impl AnalysisReport {
    pub fn new(metadata: ReportMetadata) -> Self {
        AnalysisReport {
            metadata,
            shares: None,
            characteristics: None,
            stratified: None,
            anderson_rubin: None,
            test: None,
            simulation: None,
            quantiles: None,
            cdf: None,
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Fixed-width text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let md = &self.metadata;
        let _ = writeln!(out, "sck {} report (tool {})", md.command, md.tool_version);
        if let Some(h) = &md.input_sha256 {
            let _ = writeln!(out, "input sha256: {h}");
        }
        if let Some(h) = &md.dgp_sha256 {
            let _ = writeln!(out, "dgp sha256:   {h}");
        }
        if let Some(seed) = md.seed {
            let _ = writeln!(out, "seed: {seed}");
        }
        if let Some(n) = md.n {
            let _ = writeln!(out, "observations: {n}");
        }
        let _ = writeln!(out);

        if let Some(shares) = &self.shares {
            render_shares(&mut out, shares);
        }
        if let Some(rows) = &self.characteristics {
            render_characteristics(&mut out, rows);
        }
        if let Some(strats) = &self.stratified {
            render_stratified(&mut out, strats);
        }
        if let Some(ar) = &self.anderson_rubin {
            render_ar(&mut out, ar);
        }
        if let Some(test) = &self.test {
            render_test(&mut out, test);
        }
        if let Some(sim) = &self.simulation {
            render_simulation(&mut out, sim);
        }
        if let Some(quantiles) = &self.quantiles {
            render_quantiles(&mut out, quantiles);
        }
        if let Some(cdfs) = &self.cdf {
            render_cdf(&mut out, cdfs);
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(out, "warnings:");
            for w in &self.warnings {
                let _ = writeln!(out, "  - {w}");
            }
        }
        out
    }
}

fn fmt_est(e: &WaldEstimate) -> (String, String) {
    (format!("{:>12.4}", e.value), format!("{:>12}", format!("({:.4})", e.se)))
}

fn render_shares(out: &mut String, shares: &GroupShares) {
    let _ = writeln!(out, "latent group shares");
    let _ = writeln!(out, "{:-<58}", "");
    let mut row = |label: &str, est: &WaldEstimate| {
        let (v, s) = fmt_est(est);
        let _ = writeln!(out, "  {:<24}{v} {s}", label);
    };
    row("supercomplier (cc)", &shares.supercomplier);
    if let Some(ca) = &shares.ca {
        row("ca", ca);
    }
    if let Some(cn) = &shares.cn {
        row("cn", cn);
    }
    row("complier (first stage)", &shares.complier);
    if let Some(gap) = shares.decomposition_gap {
        let _ = writeln!(out, "  {:<24}{:>12.2e}", "decomposition gap", gap);
    }
    let _ = writeln!(out);
}

const TABLE_TARGETS: [Target; 5] =
    [Target::Population, Target::Complier, Target::Supercomplier, Target::Ca, Target::Cn];

fn render_characteristics(out: &mut String, rows: &[CharacteristicsRow]) {
    let _ = writeln!(out, "group mean characteristics");
    let _ = writeln!(out, "{:-<136}", "");
    let _ = write!(out, "  {:<16}", "covariate");
    for t in TABLE_TARGETS {
        let _ = write!(out, "{:>15}", t.name());
    }
    let _ = writeln!(out, "{:>15}{:>15}{:>15}", "comp-pop", "scomp-pop", "scomp-comp");
    for row in rows {
        let _ = write!(out, "  {:<16}", truncate(&row.covariate, 16));
        for t in TABLE_TARGETS {
            match row.mean(t) {
                Some(e) => {
                    let _ = write!(out, "{:>15.4}", e.value);
                }
                None => {
                    let _ = write!(out, "{:>15}", ".");
                }
            }
        }
        for (a, b) in [
            (Target::Complier, Target::Population),
            (Target::Supercomplier, Target::Population),
            (Target::Supercomplier, Target::Complier),
        ] {
            match row.contrast(a, b) {
                Some(e) => {
                    let _ = write!(out, "{:>15.4}", e.value);
                }
                None => {
                    let _ = write!(out, "{:>15}", ".");
                }
            }
        }
        let _ = writeln!(out);
        // Standard errors on the following line.
        let _ = write!(out, "  {:<16}", "");
        for t in TABLE_TARGETS {
            match row.mean(t) {
                Some(e) => {
                    let _ = write!(out, "{:>15}", format!("({:.4})", e.se));
                }
                None => {
                    let _ = write!(out, "{:>15}", "");
                }
            }
        }
        for (a, b) in [
            (Target::Complier, Target::Population),
            (Target::Supercomplier, Target::Population),
            (Target::Supercomplier, Target::Complier),
        ] {
            match row.contrast(a, b) {
                Some(e) => {
                    let _ = write!(out, "{:>15}", format!("({:.4})", e.se));
                }
                None => {
                    let _ = write!(out, "{:>15}", "");
                }
            }
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
}

fn render_stratified(out: &mut String, sections: &[StratifiedSection]) {
    let _ = writeln!(out, "stratified supercomplier means (fixed-effects IV)");
    let _ = writeln!(out, "{:-<72}", "");
    for s in sections {
        let est = &s.estimate;
        let _ = writeln!(
            out,
            "  {:<16}{:>12.4} {:>12}   decomposition {:>12.4}",
            truncate(&s.covariate, 16),
            est.fixed_effects.value,
            format!("({:.4})", est.fixed_effects.se),
            est.decomposition_value,
        );
        for st in &est.strata {
            let mean = st
                .mean
                .map(|m| format!("{m:>10.4}"))
                .unwrap_or_else(|| format!("{:>10}", "."));
            let _ = writeln!(
                out,
                "    stratum {:<12} n={:<7} tau={:<6.3} rf={:<8.4} omega={:<9.5} mean={mean}",
                truncate(&st.label, 12),
                st.n,
                st.tau,
                st.reduced_form,
                st.omega,
            );
        }
    }
    let _ = writeln!(out);
}

fn render_ar(out: &mut String, sections: &[ArSection]) {
    let _ = writeln!(out, "anderson-rubin confidence sets (supercomplier means)");
    let _ = writeln!(out, "{:-<72}", "");
    for s in sections {
        let mut set = s
            .intervals
            .iter()
            .map(|&(lo, hi)| format!("[{lo:.4}, {hi:.4}]"))
            .collect::<Vec<_>>()
            .join(" U ");
        if set.is_empty() {
            set = "(empty on grid)".to_string();
        }
        let mut flags = String::new();
        if s.unbounded_below {
            flags.push_str(" (open below)");
        }
        if s.unbounded_above {
            flags.push_str(" (open above)");
        }
        let _ = writeln!(
            out,
            "  {:<16}{:>4.0}%: {set}{flags}",
            truncate(&s.covariate, 16),
            s.level * 100.0
        );
    }
    let _ = writeln!(out);
}

fn render_sharp(out: &mut String, label: &str, t: &SharpTestResult) {
    let _ = writeln!(out, "{label}");
    let _ = writeln!(out, "{:-<72}", "");
    for ((name, theta), se) in t.labels.iter().zip(&t.theta).zip(&t.se) {
        let _ = writeln!(out, "  {:<28}{:>12.5} {:>12}", name, theta, format!("({se:.5})"));
    }
    let _ = writeln!(
        out,
        "  min statistic {:>10.5}   critical ({:.0}%) {:>10.5} (mc se {:.1e})",
        t.theta_min,
        t.level * 100.0,
        t.critical_value,
        t.critical_value_mc_se
    );
    let _ = writeln!(
        out,
        "  simulated p = {:.5} ({} draws, seed {})   {}",
        t.p_value,
        t.draws,
        t.seed,
        if t.reject { "REJECT" } else { "no rejection" }
    );
    let _ = writeln!(out);
}

fn render_test(out: &mut String, test: &TestSection) {
    if let Some(joint) = &test.joint {
        render_sharp(out, "joint sharp test of the identifying assumptions", joint);
    }
    let om = &test.om;
    let _ = writeln!(out, "outcome monotonicity (one-sided reduced form)");
    let _ = writeln!(out, "{:-<72}", "");
    let _ = writeln!(
        out,
        "  contrast {:>10.5} ({:.5})   one-sided p = {:.5}   {}",
        om.estimate,
        om.se,
        om.p_one_sided,
        if om.reject { "REJECT" } else { "no rejection" }
    );
    let _ = writeln!(out);
    if let Some(cond) = &test.om_conditional {
        render_sharp(out, "conditional outcome monotonicity (per-cell contrasts)", cond);
    }
}

fn render_simulation(out: &mut String, sim: &SimulationSection) {
    let _ = writeln!(out, "simulation: estimates vs analytic truth (n = {}, reps = {})", sim.n, sim.reps);
    let _ = writeln!(out, "{:-<86}", "");
    let _ = writeln!(
        out,
        "  {:<34}{:>12}{:>12}{:>12}{:>12}",
        "estimand", "truth", "mean est", "mean se", "cover(4se)"
    );
    for row in &sim.rows {
        let se = row
            .mean_se
            .map(|v| format!("{v:>12.5}"))
            .unwrap_or_else(|| format!("{:>12}", "."));
        let cover = row
            .coverage_4se
            .map(|v| format!("{v:>12.3}"))
            .or(row.exact_match.map(|v| format!("{:>11}*", format!("{v:.3}"))))
            .unwrap_or_else(|| format!("{:>12}", "."));
        let _ = writeln!(
            out,
            "  {:<34}{:>12.5}{:>12.5}{se}{cover}",
            truncate(&row.name, 34),
            row.truth,
            row.mean_estimate
        );
    }
    let _ = writeln!(out, "  (* exact-match rate for quantile-type estimands)");
    let _ = writeln!(out);
}

fn render_quantiles(out: &mut String, quantiles: &[QuantileEstimate]) {
    let _ = writeln!(out, "supercomplier quantiles");
    let _ = writeln!(out, "{:-<72}", "");
    for q in quantiles {
        let _ = writeln!(
            out,
            "  {:<16} theta={:<6} value={:<12} clipped cells: {}",
            truncate(&q.covariate, 16),
            q.theta,
            q.value,
            q.clipped_cells
        );
    }
    let _ = writeln!(out);
}

fn render_cdf(out: &mut String, cdfs: &[CdfEstimate2]) {
    let _ = writeln!(out, "supercomplier cdf");
    let _ = writeln!(out, "{:-<72}", "");
    for c in cdfs {
        let _ = writeln!(out, "  covariate {}", c.covariate);
        for (i, &g) in c.grid.iter().enumerate() {
            let rearr = c
                .rearranged
                .as_ref()
                .map(|r| format!("   monotone {:.4}", r[i]))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "    x <= {:<10} {:>9.4} ({:.4}){rearr}",
                g, c.values[i], c.ses[i]
            );
        }
    }
    let _ = writeln!(out);
}

fn truncate(s: &str, width: usize) -> String {
    if s.len() <= width {
        s.to_string()
    } else {
        format!("{}..", &s[..width.saturating_sub(2)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_renders_and_serializes() {
        let report = AnalysisReport::new(ReportMetadata::new("estimate"));
        let text = report.to_text();
        assert!(text.contains("sck estimate report"));
        let json = report.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["metadata"]["schema_version"], 1);
    }
}
