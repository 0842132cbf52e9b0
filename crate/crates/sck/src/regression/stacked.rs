//! Stacked multi-equation estimation.
//!
//! Each stack is a small regression of its own (an intercept-only mean, an
//! OLS slope, or a just-identified IV), estimated jointly so that the
//! covariance matrix spans all stacks. Rows that share an observation id
//! across stacks are treated as one cluster, which is what makes cross-stack
//! inference (differences of coefficients, min statistics) valid.

use super::{
    check_rank, dense_cluster_index, mirror_upper, qr_solve_with_bread, residualize,
    CoefficientEstimates, RegressionError, RANK_TOLERANCE,
};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
enum BlockKind {
    /// Intercept only; the target coefficient is the mean of the response.
    Mean,
    /// Response on `[regressor, 1, exog]`; target is the slope.
    Ols { regressor: DVector<f64> },
    /// Just-identified IV of the response on `[endogenous, 1, exog]` with
    /// `[instrument, 1, exog]` as instruments; target is the endogenous
    /// coefficient.
    Iv { endogenous: DVector<f64>, instrument: DVector<f64> },
}

/// One equation in a stacked system.
#[derive(Debug, Clone)]
pub struct IvBlock {
    pub label: String,
    response: DVector<f64>,
    kind: BlockKind,
    exog: Option<DMatrix<f64>>,
    ids: Vec<u64>,
}

impl IvBlock {
    pub fn mean(label: &str, response: Vec<f64>, ids: Vec<u64>) -> Self {
        IvBlock {
            label: label.to_string(),
            response: DVector::from_vec(response),
            kind: BlockKind::Mean,
            exog: None,
            ids,
        }
    }

    pub fn ols(label: &str, response: Vec<f64>, regressor: Vec<f64>, ids: Vec<u64>) -> Self {
        IvBlock {
            label: label.to_string(),
            response: DVector::from_vec(response),
            kind: BlockKind::Ols { regressor: DVector::from_vec(regressor) },
            exog: None,
            ids,
        }
    }

    pub fn iv(
        label: &str,
        response: Vec<f64>,
        endogenous: Vec<f64>,
        instrument: Vec<f64>,
        ids: Vec<u64>,
    ) -> Self {
        IvBlock {
            label: label.to_string(),
            response: DVector::from_vec(response),
            kind: BlockKind::Iv {
                endogenous: DVector::from_vec(endogenous),
                instrument: DVector::from_vec(instrument),
            },
            exog: None,
            ids,
        }
    }

    pub fn with_exog(mut self, exog: DMatrix<f64>) -> Self {
        self.exog = Some(exog);
        self
    }

    fn validate(&self) -> Result<(), RegressionError> {
        let n = self.response.len();
        let check = |what: &str, len: usize| -> Result<(), RegressionError> {
            if len != n {
                Err(RegressionError::LengthMismatch { what: what.into(), got: len, expected: n })
            } else {
                Ok(())
            }
        };
        check("ids", self.ids.len())?;
        match &self.kind {
            BlockKind::Mean => {}
            BlockKind::Ols { regressor } => check("regressor", regressor.len())?,
            BlockKind::Iv { endogenous, instrument } => {
                check("endogenous", endogenous.len())?;
                check("instrument", instrument.len())?;
            }
        }
        if let Some(w) = &self.exog {
            check("exog", w.nrows())?;
        }
        Ok(())
    }
}

struct SolvedBlock {
    beta: DVector<f64>,
    bread: DMatrix<f64>,
    /// Design used in the bread and score sums (the projected endogenous
    /// column for IV blocks).
    fit_design: DMatrix<f64>,
    residuals: DVector<f64>,
    names: Vec<String>,
}

/// Result of a stacked fit. Coefficients are ordered target-first: the first
/// `n_stacks` entries are the per-stack target coefficients, followed by the
/// per-stack intercepts and controls.
#[derive(Debug, Clone)]
pub struct StackedEstimates {
    pub estimates: CoefficientEstimates,
    pub n_stacks: usize,
}

impl StackedEstimates {
    /// Target coefficient of stack `s`.
    pub fn theta(&self, s: usize) -> f64 {
        self.estimates.beta[s]
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n_stacks).map(|s| self.theta(s)).collect()
    }

    pub fn theta_se(&self, s: usize) -> f64 {
        self.estimates.se(s)
    }

    /// Joint covariance of the target coefficients.
    pub fn theta_vcov(&self) -> DMatrix<f64> {
        self.estimates.vcov.view((0, 0), (self.n_stacks, self.n_stacks)).into_owned()
    }
}

/// One stack of the plain OLS flavor: a response, a single slope regressor,
/// and the observation id of every row.
#[derive(Debug, Clone)]
pub struct Stack {
    pub label: String,
    pub response: Vec<f64>,
    pub regressor: Vec<f64>,
    pub ids: Vec<u64>,
}

/// Jointly estimates one OLS equation per stack (each with its own
/// intercept), clustering on the observation id shared across stacks.
pub fn stacked_regression(stacks: Vec<Stack>) -> Result<StackedEstimates, RegressionError> {
    let blocks = stacks
        .into_iter()
        .map(|s| IvBlock::ols(&s.label, s.response, s.regressor, s.ids))
        .collect();
    stacked_iv_system(blocks)
}

/// Jointly estimates an arbitrary mix of mean, OLS, and IV stacks with a
/// cluster-robust covariance across all of them.
pub fn stacked_iv_system(blocks: Vec<IvBlock>) -> Result<StackedEstimates, RegressionError> {
    if blocks.is_empty() {
        return Err(RegressionError::InvalidArgument("no stacks provided".into()));
    }
    let n_stacks = blocks.len();

    let mut solved = Vec::with_capacity(n_stacks);
    for block in &blocks {
        block.validate().map_err(RegressionError::in_stack(&block.label))?;
        let s = solve_block(block).map_err(RegressionError::in_stack(&block.label))?;
        solved.push(s);
    }

    let total_rows: usize = solved.iter().map(|s| s.residuals.len()).sum();
    let total_cols: usize = solved.iter().map(|s| s.beta.len()).sum();
    if total_rows <= total_cols {
        return Err(RegressionError::TooFewObservations { n: total_rows, k: total_cols });
    }
    let mut offsets = Vec::with_capacity(n_stacks);
    let mut acc = 0usize;
    for s in &solved {
        offsets.push(acc);
        acc += s.beta.len();
    }

    // Cluster score sums in the joint coordinate space, accumulated in
    // sorted-id order so results are bit-reproducible.
    let all_ids: Vec<u64> = blocks.iter().flat_map(|b| b.ids.iter().copied()).collect();
    let (index, n_clusters) = dense_cluster_index(&all_ids);
    if n_clusters < 2 {
        return Err(RegressionError::InvalidArgument(
            "cluster-robust errors need at least two clusters".into(),
        ));
    }
    let mut sums = vec![0.0f64; n_clusters * total_cols];
    let mut row_cursor = 0usize;
    for (s, block) in solved.iter().enumerate() {
        let off = offsets[s];
        let k = block.beta.len();
        for i in 0..block.residuals.len() {
            let g = index[row_cursor];
            row_cursor += 1;
            let u = block.residuals[i];
            for c in 0..k {
                sums[g * total_cols + off + c] += u * block.fit_design[(i, c)];
            }
        }
    }
    let mut meat = DMatrix::zeros(total_cols, total_cols);
    for score in sums.chunks_exact(total_cols) {
        for p in 0..total_cols {
            if score[p] == 0.0 {
                continue;
            }
            for q in p..total_cols {
                meat[(p, q)] += score[p] * score[q];
            }
        }
    }
    mirror_upper(&mut meat);

    let mut bread = DMatrix::zeros(total_cols, total_cols);
    for (s, block) in solved.iter().enumerate() {
        let off = offsets[s];
        let k = block.beta.len();
        bread.view_mut((off, off), (k, k)).copy_from(&block.bread);
    }
    let correction = (n_clusters as f64 / (n_clusters - 1) as f64)
        * ((total_rows - 1) as f64 / (total_rows - total_cols) as f64);
    let vcov = &bread * meat * &bread * correction;

    // Reorder coefficients target-first.
    let mut perm: Vec<usize> = offsets.clone();
    for (s, block) in solved.iter().enumerate() {
        perm.extend((1..block.beta.len()).map(|c| offsets[s] + c));
    }
    let beta_joint: Vec<f64> = solved.iter().flat_map(|s| s.beta.iter().copied()).collect();
    let names_joint: Vec<String> = solved.iter().flat_map(|s| s.names.clone()).collect();
    let beta = DVector::from_iterator(total_cols, perm.iter().map(|&p| beta_joint[p]));
    let names = perm.iter().map(|&p| names_joint[p].clone()).collect();
    let mut vcov_perm = DMatrix::zeros(total_cols, total_cols);
    for (a, &pa) in perm.iter().enumerate() {
        for (b, &pb) in perm.iter().enumerate() {
            vcov_perm[(a, b)] = 0.5 * (vcov[(pa, pb)] + vcov[(pb, pa)]);
        }
    }

    Ok(StackedEstimates {
        estimates: CoefficientEstimates {
            beta,
            vcov: vcov_perm,
            n: total_rows,
            names,
            first_stage_f: None,
        },
        n_stacks,
    })
}

fn solve_block(block: &IvBlock) -> Result<SolvedBlock, RegressionError> {
    let n = block.response.len();
    let label = &block.label;
    let k_exog = block.exog.as_ref().map_or(0, |w| w.ncols());
    let exog_names = |prefix: &mut Vec<String>| {
        prefix.extend((0..k_exog).map(|j| format!("w{j}[{label}]")));
    };

    let build = |lead: Option<&DVector<f64>>| -> DMatrix<f64> {
        let k = lead.is_some() as usize + 1 + k_exog;
        let mut m = DMatrix::zeros(n, k);
        let mut col = 0;
        if let Some(v) = lead {
            m.set_column(0, v);
            col = 1;
        }
        m.set_column(col, &DVector::from_element(n, 1.0));
        if let Some(w) = &block.exog {
            for j in 0..k_exog {
                m.set_column(col + 1 + j, &w.column(j).into_owned());
            }
        }
        m
    };

    match &block.kind {
        BlockKind::Mean => {
            // Column order [1, exog]: the intercept is the target, so it
            // stays first even with controls present.
            let design = build(None);
            let (beta, bread) = qr_solve_with_bread(&design, &block.response)?;
            let residuals = &block.response - &design * &beta;
            let mut names = vec![format!("theta[{label}]")];
            exog_names(&mut names);
            Ok(SolvedBlock { beta, bread, fit_design: design, residuals, names })
        }
        BlockKind::Ols { regressor } => {
            let design = build(Some(regressor));
            let mut names = vec![format!("theta[{label}]"), format!("const[{label}]")];
            exog_names(&mut names);
            check_rank(&design, &names)?;
            if n <= design.ncols() {
                return Err(RegressionError::TooFewObservations { n, k: design.ncols() });
            }
            let (beta, bread) = qr_solve_with_bread(&design, &block.response)?;
            let residuals = &block.response - &design * &beta;
            Ok(SolvedBlock { beta, bread, fit_design: design, residuals, names })
        }
        BlockKind::Iv { endogenous, instrument } => {
            let zmat = build(Some(instrument));
            let mut names = vec![format!("theta[{label}]"), format!("const[{label}]")];
            exog_names(&mut names);
            check_rank(&zmat, &names)?;
            if n <= zmat.ncols() {
                return Err(RegressionError::TooFewObservations { n, k: zmat.ncols() });
            }
            let (gamma, _) = qr_solve_with_bread(&zmat, endogenous)?;
            let fitted = &zmat * &gamma;

            let resid_instr = residualize(instrument, block.exog.as_ref(), n)?;
            let resid_endog = residualize(endogenous, block.exog.as_ref(), n)?;
            let denom = resid_instr.norm() * resid_endog.norm();
            let cos = if denom > 0.0 { resid_instr.dot(&resid_endog).abs() / denom } else { 0.0 };
            if !cos.is_finite() || cos < RANK_TOLERANCE {
                return Err(RegressionError::WeakFirstStage { f_stat: 0.0 });
            }

            let fit_design = build(Some(&fitted));
            let (beta, bread) = qr_solve_with_bread(&fit_design, &block.response)?;
            let xreal = build(Some(endogenous));
            let residuals = &block.response - &xreal * &beta;
            Ok(SolvedBlock { beta, bread, fit_design, residuals, names })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{ols, SeMode};

    fn toy() -> (Vec<f64>, Vec<f64>, Vec<u64>) {
        let z = vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let y = vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let ids = (0..8).collect();
        (y, z, ids)
    }

    #[test]
    fn single_stack_matches_ols_with_cluster_errors() {
        let (y, z, ids) = toy();
        let stacked = stacked_regression(vec![Stack {
            label: "only".into(),
            response: y.clone(),
            regressor: z.clone(),
            ids: ids.clone(),
        }])
        .unwrap();
        let mut design = DMatrix::zeros(8, 2);
        for i in 0..8 {
            design[(i, 0)] = z[i];
            design[(i, 1)] = 1.0;
        }
        let direct = ols(&design, &DVector::from_vec(y), SeMode::Cluster(ids)).unwrap();
        assert!((stacked.theta(0) - direct.beta[0]).abs() < 1e-13);
        assert!((stacked.theta_se(0) - direct.se(0)).abs() < 1e-13);
    }

    #[test]
    fn duplicated_stacks_are_perfectly_correlated() {
        let (y, z, ids) = toy();
        let stack = |label: &str| Stack {
            label: label.into(),
            response: y.clone(),
            regressor: z.clone(),
            ids: ids.clone(),
        };
        let fit = stacked_regression(vec![stack("a"), stack("b"), stack("c")]).unwrap();
        let thetas = fit.thetas();
        assert!((thetas[0] - thetas[1]).abs() < 1e-13);
        assert!((thetas[1] - thetas[2]).abs() < 1e-13);
        let v = fit.theta_vcov();
        for a in 0..3 {
            for b in 0..3 {
                let corr = v[(a, b)] / (v[(a, a)] * v[(b, b)]).sqrt();
                assert!((corr - 1.0).abs() < 1e-10, "corr[{a},{b}] = {corr}");
            }
        }
    }

    #[test]
    fn disjoint_stacks_have_block_diagonal_vcov() {
        let (y, z, _) = toy();
        let s1 = Stack {
            label: "first".into(),
            response: y.clone(),
            regressor: z.clone(),
            ids: (0..8).collect(),
        };
        let s2 = Stack {
            label: "second".into(),
            response: y.iter().map(|v| 1.0 - v).collect(),
            regressor: z.clone(),
            ids: (100..108).collect(),
        };
        let fit = stacked_regression(vec![s1, s2]).unwrap();
        let v = fit.theta_vcov();
        assert!(v[(0, 1)].abs() < 1e-14 * v[(0, 0)].max(v[(1, 1)]));
    }

    #[test]
    fn stack_estimates_equal_per_stack_differences_of_means() {
        // Responses built from (y, d); the stacked slope on z within each
        // stack must equal the plain difference of arm means.
        let z = vec![0u8, 0, 0, 1, 1, 1, 0, 1, 1, 0];
        let d = vec![0u8, 1, 0, 1, 1, 0, 0, 1, 0, 1];
        let y = vec![0u8, 1, 1, 1, 0, 1, 0, 1, 1, 0];
        let n = z.len();
        let ids: Vec<u64> = (0..n as u64).collect();
        let zf: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        let responses: [Vec<f64>; 3] = [
            z.iter().zip(&y).zip(&d).map(|((_, &y), &d)| (1 - y) as f64 * d as f64).collect(),
            z.iter().zip(&y).zip(&d).map(|((_, &y), &d)| y as f64 * (1 - d) as f64).collect(),
            y.iter().map(|&v| v as f64).collect(),
        ];
        let regressors: [Vec<f64>; 3] = [
            zf.clone(),
            zf.iter().map(|v| 1.0 - v).collect(),
            zf.clone(),
        ];
        let stacks = responses
            .iter()
            .zip(regressors.iter())
            .enumerate()
            .map(|(s, (r, g))| Stack {
                label: format!("{}", s + 1),
                response: r.clone(),
                regressor: g.clone(),
                ids: ids.clone(),
            })
            .collect();
        let fit = stacked_regression(stacks).unwrap();

        let diff_of_means = |resp: &[f64], flip: bool| {
            let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0, 0.0, 0);
            for (v, &zi) in resp.iter().zip(&z) {
                let arm = if flip { 1 - zi } else { zi };
                if arm == 1 {
                    s1 += v;
                    n1 += 1;
                } else {
                    s0 += v;
                    n0 += 1;
                }
            }
            s1 / n1 as f64 - s0 / n0 as f64
        };
        assert!((fit.theta(0) - diff_of_means(&responses[0], false)).abs() < 1e-13);
        assert!((fit.theta(1) - diff_of_means(&responses[1], true)).abs() < 1e-13);
        assert!((fit.theta(2) - diff_of_means(&responses[2], false)).abs() < 1e-13);
    }

    #[test]
    fn mismatched_lengths_error() {
        let err = stacked_regression(vec![Stack {
            label: "bad".into(),
            response: vec![1.0, 2.0, 3.0],
            regressor: vec![0.0, 1.0],
            ids: vec![0, 1, 2],
        }])
        .unwrap_err();
        assert!(err.to_string().contains("bad"));
    }

    #[test]
    fn mixed_mean_and_iv_stacks_fit() {
        let z = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let d = vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let h = vec![1.0, 3.0, 2.0, 5.0, 4.0, 2.0, 6.0, 1.0];
        let hd: Vec<f64> = h.iter().zip(&d).map(|(&h, &d)| h * d).collect();
        let ids: Vec<u64> = (0..8).collect();
        let fit = stacked_iv_system(vec![
            IvBlock::mean("population", h.clone(), ids.clone()),
            IvBlock::iv("complier", hd, d, z, ids),
        ])
        .unwrap();
        assert_eq!(fit.n_stacks, 2);
        let pop = h.iter().sum::<f64>() / 8.0;
        assert!((fit.theta(0) - pop).abs() < 1e-12);
        assert!(fit.theta_se(1) > 0.0);
    }
}
