//! Variance comparison of the two characteristics estimators' numerators.
//!
//! In the construction with `tau = 0.5`, binary `X` with `Pr(X=1) = 0.5`
//! independent of `Y` given `Z = 1`, and `Pr(Y=1 | Z=1) = mu_y`, the
//! treated-arm variance of the ratio-form numerator `XY` minus that of the
//! shifted-form numerator `X(Y - 1 + tau)` is `0.25 * mu_y - 0.0625`. The
//! sign flips at `mu_y = 0.25`: neither estimator dominates.

use super::DgpError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The analytic treated-arm variance difference
/// `var(XY | Z=1) - var(X(Y - 1 + tau) | Z=1)` for the binary independent
/// construction with `tau = 0.5`.
pub fn variance_gap_example(mu_y: f64) -> Result<f64, DgpError> {
    if !(0.0..=1.0).contains(&mu_y) {
        return Err(DgpError::InvalidObserved(format!(
            "mu_y must lie in [0,1], got {mu_y}"
        )));
    }
    Ok(0.25 * mu_y - 0.0625)
}

#[derive(Debug, Clone, Copy)]
pub struct VarianceGapSim {
    pub analytic: f64,
    pub simulated: f64,
    /// First-order (influence-function) Monte Carlo standard error of the
    /// simulated difference.
    pub mc_se: f64,
    pub n: usize,
}

/// Simulates the construction and estimates the variance difference by
/// sample variances, for verifying the analytic formula.
pub fn variance_gap_simulated(mu_y: f64, n: usize, seed: u64) -> Result<VarianceGapSim, DgpError> {
    let analytic = variance_gap_example(mu_y)?;
    if n < 2 {
        return Err(DgpError::Structure("need at least two draws".into()));
    }
    let tau = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let x = (rng.random::<f64>() < 0.5) as u8 as f64;
        let y = (rng.random::<f64>() < mu_y) as u8 as f64;
        a.push(x * y);
        b.push(x * (y - 1.0 + tau));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    let var = |v: &[f64], m: f64| v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    let simulated = var(&a, ma) - var(&b, mb);

    // Influence values of the difference of variances.
    let psi: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(&ai, &bi)| (ai - ma).powi(2) - (bi - mb).powi(2))
        .collect();
    let mp = mean(&psi);
    let vp = var(&psi, mp);
    Ok(VarianceGapSim { analytic, simulated, mc_se: (vp / n as f64).sqrt(), n })
}
