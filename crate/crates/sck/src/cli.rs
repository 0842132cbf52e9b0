//! Command-line front end.
//!
//! `estimate` builds the shares/characteristics report, `test` runs the
//! assumption tests, `simulate` validates the estimators against a process
//! specification, and `quantiles` estimates supercomplier quantiles and
//! c.d.f. points. Each run prints a text report and writes both text and
//! JSON files to the output directory (`--out`, then `SCK_OUT_DIR`, then
//! the working directory).
//!
//! Exit codes: 0 success; 1 assumptions rejected under `--strict`;
//! 2 configuration or usage error; 3 data validation error; 4 estimation or
//! testing error; 5 internal error.

use crate::assumptions::{self, joint_sharp_test, om_test, om_test_conditional};
use crate::config::AnalysisConfig;
use crate::data::{load_observations, load_raw_column, DataError, ObservationTable};
use crate::dgp::{self, sample, true_values, StratificationDgp};
use crate::identification::{
    characteristics_cdf, characteristics_wald, complier_share, discretize, other_group_shares,
    stratified_characteristics, summarize_groups, supercomplier_quantile, supercomplier_share,
    Conditioning, IdentificationError, Target, WaldEstimate, DEFAULT_QUANTILE_BINS,
};
use crate::regression::{anderson_rubin_ci, ArGrid};
use crate::report::{
    AnalysisReport, ArSection, CdfEstimate2, ReportMetadata, SimulationRow, SimulationSection,
    StratifiedSection, TestSection,
};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<IdentificationError> for CliError {
    fn from(e: IdentificationError) -> Self {
        match e {
            IdentificationError::Inconsistent(msg) => CliError::Internal(msg),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

impl From<assumptions::TestError> for CliError {
    fn from(e: assumptions::TestError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<dgp::DgpError> for CliError {
    fn from(e: dgp::DgpError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sck",
    version,
    about = "Supercomplier shares, characteristics, and assumption tests for binary-instrument experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CondArg {
    /// Condition the quantile weights on the covariate alone.
    X,
    /// Condition on the (outcome, covariate) pair.
    Yx,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate latent-group shares and mean characteristics.
    Estimate {
        /// CSV data file.
        #[arg(long)]
        data: PathBuf,
        /// TOML column-mapping configuration; defaults to columns named
        /// z, d, y.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stratum column, overriding the configuration.
        #[arg(long)]
        strata: Option<String>,
        /// Covariates to profile, overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        covariates: Vec<String>,
        /// Also invert Anderson-Rubin confidence sets for the
        /// supercomplier means.
        #[arg(long)]
        ar: bool,
        /// Confidence level for intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Output directory for report files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the joint sharp test and the outcome-monotonicity tests.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Column defining cells for the conditional outcome-monotonicity
        /// test.
        #[arg(long)]
        cells: Option<String>,
        /// Discretize a numeric cells column into this many equal-frequency
        /// bins.
        #[arg(long)]
        cell_bins: Option<usize>,
        /// Simulation draws for critical values.
        #[arg(long, default_value_t = assumptions::DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 12345)]
        seed: u64,
        /// Test size.
        #[arg(long, default_value_t = assumptions::DEFAULT_LEVEL)]
        level: f64,
        /// Exit with code 1 when any test rejects.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a specified process and compare estimates to analytic truth.
    Simulate {
        /// TOML process specification.
        #[arg(long)]
        dgp: PathBuf,
        /// Sample size per replication.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 12345)]
        seed: u64,
        /// Number of replications.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate supercomplier quantiles (and optionally c.d.f. points).
    Quantiles {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Covariate to profile.
        #[arg(long)]
        covariate: String,
        /// Quantile levels, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long, value_enum, default_value = "x")]
        conditioning: CondArg,
        /// Equal-frequency bins for a continuous conditioning covariate.
        #[arg(long, default_value_t = DEFAULT_QUANTILE_BINS)]
        bins: usize,
        /// Also estimate the supercomplier c.d.f. at these grid points.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        /// Include a monotone rearrangement of the c.d.f. series.
        #[arg(long)]
        monotone: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments from the environment, executes, prints the report, and
/// returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(strict_rejection) => {
            if strict_rejection {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a command from an explicit argument list (used by integration
/// tests). Returns the would-be process exit code.
pub fn run_from<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => match execute(cli) {
            Ok(true) => 1,
            Ok(false) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("{e}");
            2
        }
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Estimate { data, config, strata, covariates, ar, level, out } => {
            cmd_estimate(&data, config.as_deref(), strata, covariates, ar, level, out)?;
            Ok(false)
        }
        Command::Test { data, config, cells, cell_bins, draws, seed, level, strict, out } => {
            let rejected =
                cmd_test(&data, config.as_deref(), cells, cell_bins, draws, seed, level, out)?;
            Ok(strict && rejected)
        }
        Command::Simulate { dgp, n, seed, reps, out } => {
            cmd_simulate(&dgp, n, seed, reps, out)?;
            Ok(false)
        }
        Command::Quantiles {
            data,
            config,
            covariate,
            theta,
            conditioning,
            bins,
            grid,
            monotone,
            out,
        } => {
            cmd_quantiles(
                &data,
                config.as_deref(),
                covariate,
                theta,
                conditioning,
                bins,
                grid,
                monotone,
                out,
            )?;
            Ok(false)
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read `{}`: {e}", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_config(path: Option<&Path>) -> Result<AnalysisConfig, CliError> {
    match path {
        Some(p) => {
            let bytes = read_file(p)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Config(format!("`{}` is not UTF-8", p.display())))?;
            AnalysisConfig::parse(&text)
                .map_err(|e| CliError::Config(format!("in `{}`: {e}", p.display())))
        }
        None => Ok(AnalysisConfig::default_names()),
    }
}

fn load_table(
    data: &Path,
    config: &AnalysisConfig,
) -> Result<(ObservationTable, String), CliError> {
    let bytes = read_file(data)?;
    let hash = sha256_hex(&bytes);
    let table = load_observations(bytes.as_slice(), &config.mapping())?;
    Ok((table, hash))
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SCK_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn emit(report: &AnalysisReport, dir: PathBuf) -> Result<(), CliError> {
    let text = report.to_text();
    print!("{text}");
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("cannot create `{}`: {e}", dir.display())))?;
    let base = dir.join(format!("{}_report", report.metadata.command));
    let write = |path: PathBuf, content: &str| -> Result<(), CliError> {
        std::fs::write(&path, content)
            .map_err(|e| CliError::Config(format!("cannot write `{}`: {e}", path.display())))
    };
    write(base.with_extension("txt"), &text)?;
    write(base.with_extension("json"), &report.to_json())?;
    Ok(())
}

fn dedup_warnings(warnings: Vec<String>) -> Vec<String> {
    let mut seen = Vec::new();
    for w in warnings {
        if !seen.contains(&w) {
            seen.push(w);
        }
    }
    seen
}

/// Reduced-form strength warning threshold, the first-stage-F analog.
const WEAK_RF_F: f64 = 10.0;

fn rescale_ci(est: &mut WaldEstimate, level: f64) {
    est.ci = est.ci_at(level);
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    data: &Path,
    config_path: Option<&Path>,
    strata: Option<String>,
    covariate_override: Vec<String>,
    ar: bool,
    level: f64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if !(0.0 < level && level < 1.0) {
        return Err(CliError::Config(format!("confidence level must be in (0,1), got {level}")));
    }
    let mut config = load_config(config_path)?;
    if !covariate_override.is_empty() {
        config.columns.covariates = covariate_override;
    }
    if let Some(col) = strata {
        config.columns.stratum = Some(col);
    }
    let (table, hash) = load_table(data, &config)?;
    let covariates = config.columns.covariates.clone();

    let mut metadata = ReportMetadata::new("estimate");
    metadata.input_sha256 = Some(hash);
    metadata.n = Some(table.n());
    metadata.config = Some(config.clone());
    let mut report = AnalysisReport::new(metadata);
    let mut warnings = Vec::new();

    let use_strata = table.stratum_codes().is_some();
    let mut summary = summarize_groups(&table, &covariates, use_strata)?;
    warnings.append(&mut summary.warnings);

    let rf = &summary.shares.supercomplier;
    if rf.se > 0.0 {
        let f = (rf.value / rf.se).powi(2);
        if f < WEAK_RF_F {
            warnings.push(format!(
                "weak supercomplier reduced form: F = {f:.2} (below {WEAK_RF_F})"
            ));
        }
    }

    if use_strata && table.y_binary() {
        let mut sections = Vec::new();
        for name in &covariates {
            let h = table
                .covariate(name)
                .ok_or_else(|| IdentificationError::UnknownCovariate(name.clone()))?;
            let mut est = stratified_characteristics(&table, h)?;
            warnings.append(&mut est.warnings.clone());
            est.warnings.clear();
            sections.push(StratifiedSection { covariate: name.clone(), estimate: est });
        }
        report.stratified = Some(sections);
    }

    if ar {
        let mut sections = Vec::new();
        for name in &covariates {
            let h = table
                .covariate(name)
                .ok_or_else(|| IdentificationError::UnknownCovariate(name.clone()))?
                .to_vec();
            let point = characteristics_wald(&table, &h, Target::Supercomplier)?;
            let grid = ArGrid {
                center: point.value,
                half_width: (10.0 * point.se).max(1e-9),
                points: 401,
            };
            let y = table.y().to_vec();
            let transform = |c: f64| -> Vec<f64> {
                h.iter().zip(&y).map(|(&h, &y)| (h - c) * y).collect()
            };
            let scan = anderson_rubin_ci(&table, transform, level, grid, Some(point.value))
                .map_err(|e| CliError::Estimation(e.to_string()))?;
            warnings.extend(scan.warnings.clone());
            sections.push(ArSection {
                covariate: name.clone(),
                level,
                intervals: scan.intervals,
                unbounded_below: scan.unbounded_below,
                unbounded_above: scan.unbounded_above,
            });
        }
        report.anderson_rubin = Some(sections);
    }

    // Re-anchor confidence intervals on the requested level.
    let mut shares = summary.shares;
    rescale_ci(&mut shares.supercomplier, level);
    rescale_ci(&mut shares.complier, level);
    if let Some(ca) = &mut shares.ca {
        rescale_ci(ca, level);
    }
    if let Some(cn) = &mut shares.cn {
        rescale_ci(cn, level);
    }
    let mut characteristics = summary.characteristics;
    for row in &mut characteristics {
        for m in &mut row.means {
            rescale_ci(&mut m.estimate, level);
        }
        for c in &mut row.contrasts {
            rescale_ci(&mut c.estimate, level);
        }
    }

    report.shares = Some(shares);
    report.characteristics = Some(characteristics);
    report.warnings = dedup_warnings(warnings);
    emit(&report, out_dir(out))
}

#[allow(clippy::too_many_arguments)]
fn cmd_test(
    data: &Path,
    config_path: Option<&Path>,
    cells: Option<String>,
    cell_bins: Option<usize>,
    draws: usize,
    seed: u64,
    level: f64,
    out: Option<PathBuf>,
) -> Result<bool, CliError> {
    let config = load_config(config_path)?;
    let bytes = read_file(data)?;
    let hash = sha256_hex(&bytes);
    let table = load_observations(bytes.as_slice(), &config.mapping())?;

    let mut metadata = ReportMetadata::new("test");
    metadata.input_sha256 = Some(hash);
    metadata.n = Some(table.n());
    metadata.seed = Some(seed);
    metadata.config = Some(config);
    let mut report = AnalysisReport::new(metadata);
    let mut warnings = Vec::new();

    let joint = if table.y_binary() {
        Some(joint_sharp_test(&table, level, draws, seed)?)
    } else {
        warnings.push(
            "outcome is non-binary: the joint sharp test is skipped (cell-wise contrasts \
             remain available via --cells)"
                .to_string(),
        );
        None
    };
    let om = om_test(&table, level)?;

    let om_conditional = match cells {
        Some(column) => {
            let raw = load_raw_column(bytes.as_slice(), &column)?;
            let labels = match cell_bins {
                Some(bins) => {
                    let numeric: Result<Vec<f64>, _> =
                        raw.iter().map(|s| s.parse::<f64>()).collect();
                    let values = numeric.map_err(|_| {
                        CliError::Config(format!(
                            "--cell-bins requires numeric values in column `{column}`"
                        ))
                    })?;
                    let (codes, names) = discretize(&values, bins);
                    codes.iter().map(|&c| names[c as usize].clone()).collect()
                }
                None => raw,
            };
            Some(om_test_conditional(&table, &labels, level, draws, seed)?)
        }
        None => None,
    };

    let rejected = joint.as_ref().is_some_and(|j| j.reject)
        || om.reject
        || om_conditional.as_ref().is_some_and(|c| c.reject);

    report.test = Some(TestSection { joint, om, om_conditional });
    report.warnings = dedup_warnings(warnings);
    emit(&report, out_dir(out))?;
    Ok(rejected)
}

fn cmd_simulate(
    dgp_path: &Path,
    n: usize,
    seed: u64,
    reps: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if reps == 0 {
        return Err(CliError::Config("--reps must be positive".into()));
    }
    let bytes = read_file(dgp_path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("`{}` is not UTF-8", dgp_path.display())))?;
    let dgp: StratificationDgp = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("in `{}`: {e}", dgp_path.display())))?;
    dgp.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let truth = true_values(&dgp)?;

    struct RepOutcome {
        values: Vec<(String, f64, f64, Option<f64>, bool)>,
    }

    type RepValues = Vec<(String, f64, f64, Option<f64>, bool)>;
    fn push(values: &mut RepValues, name: &str, truth: f64, est: &WaldEstimate) {
        values.push((name.to_string(), truth, est.value, Some(est.se), false));
    }

    let estimand_rows = |table: &ObservationTable| -> Result<RepOutcome, CliError> {
        // (name, truth, estimate, se, exact-match estimand)
        let mut values = Vec::new();
        if !dgp.is_stratified() {
            push(&mut values, "share cc", truth.share_cc, &supercomplier_share(table)?);
            push(&mut values, "share complier", truth.share_complier, &complier_share(table)?);
            if table.y_binary() {
                let (ca, cn) = other_group_shares(table)?;
                push(&mut values, "share ca", truth.share_ca, &ca);
                push(&mut values, "share cn", truth.share_cn, &cn);
            }
            for ct in &truth.covariates {
                let h = table
                    .covariate(&ct.name)
                    .ok_or_else(|| CliError::Internal("covariate missing in sample".into()))?
                    .to_vec();
                let wald = |target: Target| characteristics_wald(table, &h, target);
                push(&mut values, &format!("population mean {}", ct.name), ct.population, &wald(Target::Population)?);
                if let Some(v) = ct.complier {
                    push(&mut values, &format!("complier mean {}", ct.name), v, &wald(Target::Complier)?);
                }
                let sc_truth = if table.y_binary() { ct.supercomplier } else { ct.te_weighted };
                if let Some(v) = sc_truth {
                    push(&mut values, &format!("supercomplier mean {}", ct.name), v, &wald(Target::Supercomplier)?);
                }
                if table.y_binary() {
                    if let Some(v) = ct.ca {
                        push(&mut values, &format!("ca mean {}", ct.name), v, &wald(Target::Ca)?);
                    }
                    if let Some(v) = ct.cn {
                        push(&mut values, &format!("cn mean {}", ct.name), v, &wald(Target::Cn)?);
                    }
                    if let Some(median) = ct.cc_quantile(0.5) {
                        let q = supercomplier_quantile(
                            table,
                            &ct.name,
                            0.5,
                            Conditioning::XOnly,
                            DEFAULT_QUANTILE_BINS,
                        )?;
                        values.push((
                            format!("supercomplier median {}", ct.name),
                            median,
                            q.value,
                            None,
                            true,
                        ));
                    }
                }
            }
        } else {
            let omega = truth
                .omega_weighted_x
                .as_ref()
                .ok_or_else(|| CliError::Estimation("process has no supercomplier mass".into()))?;
            for (ct, &target) in truth.covariates.iter().zip(omega) {
                let h = table
                    .covariate(&ct.name)
                    .ok_or_else(|| CliError::Internal("covariate missing in sample".into()))?;
                let est = stratified_characteristics(table, h)?;
                values.push((
                    format!("omega-weighted supercomplier mean {}", ct.name),
                    target,
                    est.fixed_effects.value,
                    Some(est.fixed_effects.se),
                    false,
                ));
            }
        }
        Ok(RepOutcome { values })
    };

    let outcomes: Result<Vec<RepOutcome>, CliError> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let table = sample(&dgp, n, seed.wrapping_add(r as u64))?;
            estimand_rows(&table)
        })
        .collect();
    let outcomes = outcomes?;

    let first = &outcomes[0].values;
    let mut rows = Vec::with_capacity(first.len());
    for (idx, (name, truth_v, _, _, exact)) in first.iter().enumerate() {
        let estimates: Vec<f64> = outcomes.iter().map(|o| o.values[idx].2).collect();
        let ses: Vec<Option<f64>> = outcomes.iter().map(|o| o.values[idx].3).collect();
        let mean_estimate = estimates.iter().sum::<f64>() / reps as f64;
        let mean_se = ses
            .iter()
            .all(|s| s.is_some())
            .then(|| ses.iter().map(|s| s.unwrap()).sum::<f64>() / reps as f64);
        let coverage = mean_se.map(|_| {
            outcomes
                .iter()
                .filter(|o| {
                    let (_, t, est, se, _) = &o.values[idx];
                    (est - t).abs() <= 4.0 * se.unwrap()
                })
                .count() as f64
                / reps as f64
        });
        let exact_match = exact.then(|| {
            estimates.iter().filter(|&&e| e == *truth_v).count() as f64 / reps as f64
        });
        rows.push(SimulationRow {
            name: name.clone(),
            truth: *truth_v,
            mean_estimate,
            mean_se,
            coverage_4se: coverage,
            exact_match,
        });
    }

    let mut metadata = ReportMetadata::new("simulate");
    metadata.dgp_sha256 = Some(sha256_hex(&bytes));
    metadata.seed = Some(seed);
    metadata.n = Some(n);
    let mut report = AnalysisReport::new(metadata);
    report.simulation = Some(SimulationSection { n, reps, rows });
    emit(&report, out_dir(out))
}

#[allow(clippy::too_many_arguments)]
fn cmd_quantiles(
    data: &Path,
    config_path: Option<&Path>,
    covariate: String,
    thetas: Vec<f64>,
    conditioning: CondArg,
    bins: usize,
    grid: Vec<f64>,
    monotone: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if !config.columns.covariates.contains(&covariate) {
        config.columns.covariates.push(covariate.clone());
    }
    let (table, hash) = load_table(data, &config)?;
    let conditioning = match conditioning {
        CondArg::X => Conditioning::XOnly,
        CondArg::Yx => Conditioning::OutcomeAndX,
    };

    let mut metadata = ReportMetadata::new("quantiles");
    metadata.input_sha256 = Some(hash);
    metadata.n = Some(table.n());
    metadata.config = Some(config);
    let mut report = AnalysisReport::new(metadata);
    let mut warnings = Vec::new();

    let mut estimates = Vec::with_capacity(thetas.len());
    for &theta in &thetas {
        let q = supercomplier_quantile(&table, &covariate, theta, conditioning, bins)?;
        if q.clipped_cells > 0 {
            warnings.push(format!(
                "{} conditional weight cell(s) for `{covariate}` were negative and clipped to zero",
                q.clipped_cells
            ));
        }
        estimates.push(q);
    }
    report.quantiles = Some(estimates);

    if !grid.is_empty() {
        let mut sorted = grid.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = characteristics_cdf(&table, &covariate, &sorted, monotone)?;
        report.cdf = Some(vec![CdfEstimate2::from(&cdf)]);
    }

    report.warnings = dedup_warnings(warnings);
    emit(&report, out_dir(out))
}
