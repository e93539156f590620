//! Log2-log2 slope fitting for convergence-rate estimation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ordinary least squares fit of `log2(bias)` against `log2(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// The `(log2 k, log2 bias)` pairs actually used.
    pub points: Vec<(f64, f64)>,
}

/// The default leaf-parameter grid `{2^5, ..., 2^9}`; the last value can be
/// dropped for expensive models.
pub fn default_k_grid(drop_last: bool) -> Vec<usize> {
    let mut g = vec![32, 64, 128, 256, 512];
    if drop_last {
        g.pop();
    }
    g
}

pub fn fit_rate(table: &[(f64, f64)]) -> Result<RateFit> {
    if table.len() < 3 {
        return Err(Error::Parameter(format!("need >= 3 points, got {}", table.len())));
    }
    for &(k, bias) in table {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Parameter(format!("k = {k} is not a positive real")));
        }
        if !(bias > 0.0 && bias.is_finite()) {
            return Err(Error::Parameter(format!("non-positive bias {bias} at k = {k}")));
        }
    }
    let points: Vec<(f64, f64)> = table.iter().map(|&(k, b)| (k.log2(), b.log2())).collect();
    {
        let mut ks: Vec<f64> = points.iter().map(|p| p.0).collect();
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if ks.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("k values must be distinct".into()));
        }
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(RateFit { slope, intercept, r_squared, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_log_linear_data() {
        let c = 3.7;
        let table = vec![
            (32.0, c * 2f64.powi(-15)),
            (64.0, c * 2f64.powi(-18)),
            (128.0, c * 2f64.powi(-21)),
        ];
        let fit = fit_rate(&table).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_bias_has_zero_slope() {
        let table = vec![(32.0, 0.25), (64.0, 0.25), (128.0, 0.25), (256.0, 0.25)];
        let fit = fit_rate(&table).unwrap();
        assert!(fit.slope.abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_rate(&[(32.0, 1.0), (64.0, 0.5)]).is_err());
        let err = fit_rate(&[(32.0, 1.0), (64.0, 0.0), (128.0, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("64"), "error should name the offending k: {err}");
        assert!(fit_rate(&[(32.0, 1.0), (32.0, 0.5), (128.0, 1.0)]).is_err());
    }

    #[test]
    fn scale_equivariance_is_exact() {
        let table = vec![(32.0, 0.11), (64.0, 0.031), (128.0, 0.0048), (512.0, 0.0013)];
        let fit = fit_rate(&table).unwrap();
        let scaled: Vec<(f64, f64)> = table.iter().map(|&(k, b)| (k, 8.0 * b)).collect();
        let fit2 = fit_rate(&scaled).unwrap();
        assert_eq!(fit.slope, fit2.slope);
        assert!((fit2.intercept - fit.intercept - 3.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance() {
        let table = vec![(32.0, 0.11), (64.0, 0.031), (128.0, 0.0048)];
        let mut rev = table.clone();
        rev.reverse();
        assert_eq!(fit_rate(&table).unwrap().slope, fit_rate(&rev).unwrap().slope);
    }
}
