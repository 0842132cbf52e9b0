//! Distribution of a covariate among supercompliers.
//!
//! Evaluating the characteristics ratio at the indicator `1[X <= x]` for a
//! grid of thresholds traces out the supercomplier c.d.f. of `X`. Pointwise
//! IV estimates need not be monotone in a finite sample, so the raw series
//! is reported as-is; a sorted (rearranged) companion can be requested.

use super::{characteristics_wald, IdentificationError, Target, WaldEstimate};
use crate::data::ObservationTable;

#[derive(Debug, Clone)]
pub struct CdfEstimate {
    pub covariate: String,
    pub grid: Vec<f64>,
    /// Raw pointwise estimates, one per grid value.
    pub estimates: Vec<WaldEstimate>,
    /// Monotone rearrangement of the raw point estimates, if requested.
    pub rearranged: Option<Vec<f64>>,
}

/// Estimates the supercomplier c.d.f. of a covariate on a sorted grid.
pub fn characteristics_cdf(
    table: &ObservationTable,
    covariate: &str,
    grid: &[f64],
    rearrange: bool,
) -> Result<CdfEstimate, IdentificationError> {
    if grid.is_empty() {
        return Err(IdentificationError::EmptyGrid);
    }
    let x = table
        .covariate(covariate)
        .ok_or_else(|| IdentificationError::UnknownCovariate(covariate.to_string()))?;

    let mut estimates = Vec::with_capacity(grid.len());
    for &threshold in grid {
        let h: Vec<f64> = x.iter().map(|&v| (v <= threshold) as u8 as f64).collect();
        let mut est = characteristics_wald(table, &h, Target::Supercomplier)?;
        est.label = format!("supercomplier cdf of {covariate} at {threshold}");
        estimates.push(est);
    }

    let rearranged = rearrange.then(|| {
        let mut values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values
    });

    Ok(CdfEstimate {
        covariate: covariate.to_string(),
        grid: grid.to_vec(),
        estimates,
        rearranged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservationTable;

    fn table(z: &[u8], d: &[u8], y: &[f64], x: &[f64]) -> ObservationTable {
        ObservationTable::from_columns(
            z.to_vec(),
            d.to_vec(),
            y.to_vec(),
            true,
            vec!["x".into()],
            vec![x.to_vec()],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn grid_outside_the_support_is_degenerate() {
        let z = [1u8, 1, 1, 0, 0, 0];
        let d = [1u8, 1, 0, 0, 0, 1];
        let y = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let x = [2.0, 3.0, 4.0, 2.5, 3.5, 4.5];
        let t = table(&z, &d, &y, &x);
        let cdf = characteristics_cdf(&t, "x", &[0.0, 10.0], false).unwrap();
        assert_eq!(cdf.estimates[0].value, 0.0);
        assert!((cdf.estimates[1].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_covariate_steps_from_zero_to_one() {
        let z = [1u8, 1, 1, 0, 0, 0];
        let d = [1u8, 0, 1, 0, 1, 0];
        let y = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let t = table(&z, &d, &y, &[3.0; 6]);
        let cdf = characteristics_cdf(&t, "x", &[2.0, 4.0], false).unwrap();
        assert_eq!(cdf.estimates[0].value, 0.0);
        assert!((cdf.estimates[1].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rearranged_series_is_monotone() {
        let z = [1u8, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let d = [1u8, 0, 1, 1, 0, 0, 1, 0, 1, 0];
        let y = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 1.5, 2.5, 3.5, 4.5, 5.5];
        let t = table(&z, &d, &y, &x);
        let cdf = characteristics_cdf(&t, "x", &[1.0, 2.0, 3.0, 4.0, 5.0], true).unwrap();
        let r = cdf.rearranged.unwrap();
        assert!(r.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn unknown_covariate_errors() {
        let z = [1u8, 0, 1, 0];
        let t = table(&z, &z, &[1.0, 0.0, 1.0, 0.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            characteristics_cdf(&t, "nope", &[1.0], false),
            Err(IdentificationError::UnknownCovariate(_))
        ));
    }
}
