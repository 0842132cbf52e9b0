//! Anderson-Rubin interval inversion for ratio estimands.
//!
//! For a candidate value `c`, the caller-supplied transform builds the
//! per-row response (for a supercomplier mean of `h(X)` this is
//! `(h(X) - c) * Y`). The confidence set is every `c` whose robust t-test of
//! the instrument coefficient in the reduced-form regression fails to
//! reject. The set is located on an even grid and its boundaries are
//! sharpened by bisection; it need not be a single interval.

use super::{normal_critical, ols, RegressionError, SeMode};
use crate::data::ObservationTable;
use nalgebra::{DMatrix, DVector};

/// Grid on which the test is inverted.
#[derive(Debug, Clone, Copy)]
pub struct ArGrid {
    pub center: f64,
    pub half_width: f64,
    pub points: usize,
}

impl ArGrid {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Inverted confidence set.
#[derive(Debug, Clone)]
pub struct ArScan {
    /// Closed intervals of non-rejected candidate values, in increasing
    /// order.
    pub intervals: Vec<(f64, f64)>,
    /// The set extends past the lower grid edge.
    pub unbounded_below: bool,
    /// The set extends past the upper grid edge.
    pub unbounded_above: bool,
    pub level: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub warnings: Vec<String>,
}

impl ArScan {
    pub fn contains(&self, c: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= c && c <= hi)
    }
}

/// Inverts the robust reduced-form t-test over a grid of candidate values.
///
/// `transform(c)` must return the per-row response for candidate `c`.
/// `point_estimate`, when given, is only used to warn if the grid fails to
/// bracket it.
pub fn anderson_rubin_ci<F>(
    table: &ObservationTable,
    transform: F,
    level: f64,
    grid: ArGrid,
    point_estimate: Option<f64>,
) -> Result<ArScan, RegressionError>
where
    F: Fn(f64) -> Vec<f64>,
{
    if grid.points == 0 {
        return Err(RegressionError::EmptyGrid);
    }
    if !(0.0 < level && level < 1.0) {
        return Err(RegressionError::InvalidArgument(format!(
            "confidence level must be in (0,1), got {level}"
        )));
    }
    if !(grid.half_width > 0.0) || !grid.center.is_finite() {
        return Err(RegressionError::InvalidArgument("degenerate grid".into()));
    }

    let n = table.n();
    let mut design = DMatrix::zeros(n, 2);
    for (i, &z) in table.z().iter().enumerate() {
        design[(i, 0)] = z as f64;
        design[(i, 1)] = 1.0;
    }
    let crit = normal_critical(level);

    // |t(c)| - crit; nonpositive means c is not rejected.
    let statistic = |c: f64| -> Result<f64, RegressionError> {
        let response = transform(c);
        if response.len() != n {
            return Err(RegressionError::LengthMismatch {
                what: "transform output".into(),
                got: response.len(),
                expected: n,
            });
        }
        let fit = ols(&design, &DVector::from_vec(response), SeMode::Robust)?;
        let (slope, se) = (fit.beta[0], fit.se(0));
        let t = if se > 0.0 {
            (slope / se).abs()
        } else if slope == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(t - crit)
    };

    let m = grid.points;
    let at = |i: usize| -> f64 {
        if m == 1 {
            grid.center
        } else {
            grid.lo() + (grid.hi() - grid.lo()) * i as f64 / (m - 1) as f64
        }
    };
    let mut accepted = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    for i in 0..m {
        let c = at(i);
        let g = statistic(c)?;
        values.push(g);
        accepted.push(g <= 0.0);
    }

    let mut warnings = Vec::new();
    if let Some(pe) = point_estimate {
        if pe < grid.lo() || pe > grid.hi() {
            warnings.push(format!(
                "grid [{:.6}, {:.6}] does not bracket the point estimate {pe:.6}",
                grid.lo(),
                grid.hi()
            ));
        }
    }

    // Bisection between an accepted and a rejected neighbor.
    let width_tol = 1e-6 * 2.0 * grid.half_width;
    let refine = |mut lo: f64, mut hi: f64| -> Result<f64, RegressionError> {
        // Invariant: statistic changes sign between lo and hi.
        let mut g_lo = statistic(lo)?;
        while hi - lo > width_tol {
            let mid = 0.5 * (lo + hi);
            let g_mid = statistic(mid)?;
            if (g_mid <= 0.0) == (g_lo <= 0.0) {
                lo = mid;
                g_lo = g_mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };

    let mut intervals = Vec::new();
    let mut i = 0;
    while i < m {
        if !accepted[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        while i + 1 < m && accepted[i + 1] {
            i += 1;
        }
        let run_end = i;
        let lo = if run_start == 0 { at(0) } else { refine(at(run_start - 1), at(run_start))? };
        let hi = if run_end == m - 1 { at(m - 1) } else { refine(at(run_end), at(run_end + 1))? };
        intervals.push((lo, hi));
        i += 1;
    }

    if intervals.is_empty() {
        warnings.push("no candidate value on the grid is accepted".into());
    }

    Ok(ArScan {
        unbounded_below: *accepted.first().unwrap(),
        unbounded_above: *accepted.last().unwrap(),
        intervals,
        level,
        grid_lo: grid.lo(),
        grid_hi: grid.hi(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservationTable;

    fn table(z: Vec<u8>, y: Vec<f64>) -> ObservationTable {
        let n = z.len();
        ObservationTable::from_columns(
            z,
            vec![0; n],
            y,
            true,
            vec![],
            vec![],
            None,
            None,
        )
        .unwrap()
    }

    fn hx(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i % 7) as f64).collect()
    }

    #[test]
    fn wald_point_is_never_rejected() {
        let z: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i % 2 == 1) && (i % 3 != 0)) as u8 as f64).collect();
        let t = table(z.clone(), y.clone());
        let h = hx(40);
        let arm = |vals: &[f64], a: u8| {
            let v: Vec<f64> =
                vals.iter().zip(&z).filter(|(_, &zi)| zi == a).map(|(&v, _)| v).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let hy: Vec<f64> = h.iter().zip(&y).map(|(&h, &y)| h * y).collect();
        let wald = (arm(&hy, 1) - arm(&hy, 0)) / (arm(&y, 1) - arm(&y, 0));

        let transform = |c: f64| -> Vec<f64> {
            h.iter().zip(&y).map(|(&h, &y)| (h - c) * y).collect()
        };
        let grid = ArGrid { center: wald, half_width: 10.0, points: 101 };
        let scan = anderson_rubin_ci(&t, transform, 0.95, grid, Some(wald)).unwrap();
        assert!(scan.contains(wald), "AR set {:?} misses {wald}", scan.intervals);
    }

    #[test]
    fn zero_reduced_form_leaves_the_grid_unbounded() {
        // y identical in both arms: the slope is zero for every candidate.
        let z: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..20).map(|i| ((i / 2) % 2) as f64).collect();
        let t = table(z, y.clone());
        let h = hx(20);
        let hy_equal_arms = h.clone();
        let transform =
            move |c: f64| -> Vec<f64> { hy_equal_arms.iter().zip(&y).map(|(&h, &y)| (h - c) * y).collect() };
        let grid = ArGrid { center: 0.0, half_width: 5.0, points: 51 };
        let scan = anderson_rubin_ci(&t, transform, 0.95, grid, None).unwrap();
        assert!(scan.unbounded_below && scan.unbounded_above);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let z: Vec<u8> = vec![0, 1, 0, 1];
        let y = vec![0.0, 1.0, 0.0, 1.0];
        let t = table(z, y);
        let err = anderson_rubin_ci(
            &t,
            |_| vec![0.0; 4],
            0.95,
            ArGrid { center: 0.0, half_width: 1.0, points: 0 },
            None,
        )
        .unwrap_err();
        assert!(matches!(err, RegressionError::EmptyGrid));
    }

    #[test]
    fn non_bracketing_grid_warns() {
        let z: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
        let t = table(z, y.clone());
        let h = hx(30);
        let transform = |c: f64| -> Vec<f64> {
            h.iter().zip(&y).map(|(&h, &y)| (h - c) * y).collect()
        };
        let grid = ArGrid { center: 100.0, half_width: 1.0, points: 11 };
        let scan = anderson_rubin_ci(&t, transform, 0.95, grid, Some(3.0)).unwrap();
        assert!(!scan.warnings.is_empty());
    }
}
