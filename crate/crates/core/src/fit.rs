//! Log-log least-squares slopes for scaling studies.

use crate::error::{Error, Result};

/// Allowance on fitted exponents checked against a lower bound; the fit of
/// an exact power law with higher-order corrections lands within it.
pub const EXPONENT_SLACK: f64 = 0.1;

/// `exponent ≥ bound` up to [`EXPONENT_SLACK`].
pub fn meets_exponent(exponent: f64, bound: f64) -> bool {
    exponent >= bound - EXPONENT_SLACK
}

/// Slope of `ln y` against `ln x` by ordinary least squares. Needs at least
/// `min_points` pairs with positive `x` and `y`.
pub fn loglog_slope(points: &[(f64, f64)], min_points: usize) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let required = min_points.max(2);
    if usable.len() < required {
        return Err(Error::DegenerateFit {
            points: usable.len(),
            required,
        });
    }
    let k = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / k;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit { points: 1, required });
    }
    Ok(sxy / sxx)
}
