//! Moment combination across imputations: the overall mean is the average of the
//! per-imputation means; the overall variance is the average within-imputation
//! variance plus the between-imputation variance of the means.

use crate::error::{invalid, Result};

/// Combined `(mean, variance)` per component. The between-imputation term uses
/// divisor `K - 1` (zero when `K = 1`).
pub fn combine_moments(means: &[Vec<f64>], variances: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = means.len();
    if k == 0 || variances.len() != k {
        return invalid("combine_moments needs K >= 1 matching mean/variance vectors");
    }
    let d = means[0].len();
    if means.iter().chain(variances).any(|v| v.len() != d) {
        return invalid("all moment vectors must have the same dimension");
    }
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for i in 0..d {
        let col: Vec<f64> = means.iter().map(|m| m[i]).collect();
        mean[i] = crate::stats::mean(&col);
        let within = variances.iter().map(|v| v[i]).sum::<f64>() / k as f64;
        var[i] = within + crate::stats::sample_variance(&col);
    }
    Ok((mean, var))
}
