//! Single-parameter updates of the complete-data posterior.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::{ln_inverse_gamma_pdf, sample_inverse_gamma, std_normal};

use super::likelihood::{DriftStats, ResidualStats, VelocityStats};

/// Gaussian full conditional of `alpha` given a path and `sigma_v²`, as
/// `(mean, precision)`. Velocity increments regress on `-u_j dt W_j` with noise
/// variance `sigma_v² dt`; prior `N(0, prior_variance I)`.
pub fn alpha_conditional(stats: &VelocityStats, sigma_v_sq: f64, prior_variance: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = stats.gram.nrows();
    let mut precision = &stats.gram / sigma_v_sq;
    for i in 0..p {
        precision[(i, i)] += 1.0 / prior_variance;
    }
    let rhs = -(&stats.cross_dv + &stats.cross_v * sigma_v_sq.sqrt()) / sigma_v_sq;
    let chol = Cholesky::new(precision.clone()).ok_or_else(|| Error::Numerical("alpha posterior precision is not positive definite".into()))?;
    Ok((chol.solve(&rhs), precision))
}

/// Exact Gibbs draw of `alpha`.
pub fn update_alpha<R: Rng + ?Sized>(stats: &VelocityStats, sigma_v_sq: f64, prior_variance: f64, rng: &mut R) -> Result<DVector<f64>> {
    let (mean, precision) = alpha_conditional(stats, sigma_v_sq, prior_variance)?;
    let chol = Cholesky::new(precision).ok_or_else(|| Error::Numerical("alpha posterior precision is not positive definite".into()))?;
    // x = mean + L^{-T} z has covariance (L L^T)^{-1}
    let z = DVector::from_fn(mean.len(), |_, _| std_normal(rng));
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular alpha factor".into()))?;
    Ok(mean + offset)
}

/// Log of the `sigma_v²` target on the log scale (likelihood × IG prior × Jacobian).
pub fn log_sigma_v_target(stats: &VelocityStats, alpha: &DVector<f64>, sigma_v_sq: f64, a_v: f64, b_v: f64) -> f64 {
    stats.loglik(alpha, sigma_v_sq) + ln_inverse_gamma_pdf(sigma_v_sq, a_v, b_v) + sigma_v_sq.ln()
}

/// Random-walk Metropolis–Hastings step on `log sigma_v²`.
pub fn update_sigma_v_sq<R: Rng + ?Sized>(
    stats: &VelocityStats,
    alpha: &DVector<f64>,
    current: f64,
    proposal_scale: f64,
    a_v: f64,
    b_v: f64,
    rng: &mut R,
) -> (f64, bool) {
    let step = proposal_scale * std_normal(rng);
    let proposal = current * step.exp();
    if proposal == current {
        let _: f64 = rng.random();
        return (current, true);
    }
    let log_ratio = log_sigma_v_target(stats, alpha, proposal, a_v, b_v) - log_sigma_v_target(stats, alpha, current, a_v, b_v);
    let u: f64 = rng.random();
    if log_ratio.is_finite() && u.ln() < log_ratio || log_ratio == f64::INFINITY {
        (proposal, true)
    } else {
        (current, false)
    }
}

/// Posterior `IG(a_s + n, b_s + ½ sum ||s_i - mu_i||²)` for the circular error
/// variance (each observation contributes two coordinates).
pub fn sigma_s_posterior(res: &ResidualStats, a_s: f64, b_s: f64) -> (f64, f64) {
    (a_s + res.count as f64, b_s + 0.5 * res.sum_sq)
}

pub fn update_sigma_s_sq<R: Rng + ?Sized>(res: &ResidualStats, a_s: f64, b_s: f64, rng: &mut R) -> Result<f64> {
    let (shape, rate) = sigma_s_posterior(res, a_s, b_s);
    sample_inverse_gamma(shape, rate, rng)
}

/// `(mean, variance)` of the Gaussian full conditional of a constant drift `beta`
/// with prior `N(0, prior_variance)`.
pub fn beta_conditional(stats: &DriftStats, prior_variance: f64) -> (f64, f64) {
    let precision = 1.0 / prior_variance + stats.exposure;
    (stats.toward / precision, 1.0 / precision)
}

pub fn update_beta<R: Rng + ?Sized>(stats: &DriftStats, prior_variance: f64, rng: &mut R) -> f64 {
    let (mean, var) = beta_conditional(stats, prior_variance);
    mean + var.sqrt() * std_normal(rng)
}
