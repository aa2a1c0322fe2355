//! Gaussian-process AID with squared-exponential covariance
//! `C(t, s) = amplitude * exp(-(t - s)² / (2 range²))`, one GP per coordinate with
//! shared hyperparameters and a per-coordinate constant mean.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{LatentPath, Point, Telemetry, TrajectoryGrid};
use crate::optim::NelderMead;
use crate::parallel;
use crate::seed::{indexed_seed, rng_from_seed};
use crate::stats::{std_normal, LN_2PI};

use super::{AidModel, ImputationSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpAidParams {
    /// Length scale `phi` (hours).
    pub range: f64,
    /// Marginal variance (km²).
    pub amplitude: f64,
    /// Observation error variance (km²).
    pub obs_variance: f64,
    /// Constant mean per coordinate (km).
    pub mean: Point,
}

impl GpAidParams {
    pub fn validate(&self) -> Result<()> {
        if self.range > 0.0 && self.amplitude > 0.0 && self.obs_variance >= 0.0 && self.range.is_finite() && self.amplitude.is_finite() {
            Ok(())
        } else {
            invalid(format!("invalid GP AID parameters {self:?}"))
        }
    }

    pub fn covariance(&self, t: f64, s: f64) -> f64 {
        self.amplitude * correlation(t, s, self.range)
    }
}

#[inline]
pub fn correlation(t: f64, s: f64, range: f64) -> f64 {
    let d = (t - s) / range;
    (-0.5 * d * d).exp()
}

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

/// Cholesky factorization with escalating diagonal jitter (`scale * 1e-8` up to
/// `scale * 1e-4`). Returns the factor and the relative jitter that was needed.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let mut eps = JITTER_START;
    while eps <= JITTER_MAX * (1.0 + 1e-9) {
        let mut jittered = m.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += eps * scale;
        }
        if let Some(c) = Cholesky::new(jittered) {
            log::warn!("covariance factorization needed relative jitter {eps:e}");
            return Ok((c, eps));
        }
        eps *= 10.0;
    }
    Err(Error::Numerical("covariance is not positive definite even with maximal jitter".into()))
}

fn correlation_matrix(times: &[f64], range: f64) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| correlation(times[i], times[j], range))
}

/// Profile log-likelihood over the amplitude for centered data, given the range
/// and the noise-to-signal ratio. Returns `(loglik, amplitude_hat)`.
fn profile_log_likelihood(times: &[f64], centered: &[DVector<f64>; 2], range: f64, ratio: f64) -> Option<(f64, f64)> {
    let n = times.len();
    let mut a = correlation_matrix(times, range);
    for i in 0..n {
        a[(i, i)] += ratio;
    }
    let (chol, _) = cholesky_with_jitter(&a, 1.0).ok()?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad: f64 = centered.iter().map(|y| y.dot(&chol.solve(y))).sum();
    let amp = quad / (2 * n) as f64;
    if !(amp > 0.0) {
        return None;
    }
    let nf = n as f64;
    Some((-nf * LN_2PI - nf * amp.ln() - log_det - nf, amp))
}

fn full_log_likelihood(times: &[f64], centered: &[DVector<f64>; 2], range: f64, amplitude: f64, tau2: f64) -> Option<f64> {
    let n = times.len();
    let mut k = correlation_matrix(times, range) * amplitude;
    for i in 0..n {
        k[(i, i)] += tau2;
    }
    let (chol, _) = cholesky_with_jitter(&k, amplitude).ok()?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad: f64 = centered.iter().map(|y| y.dot(&chol.solve(y))).sum();
    Some(-(n as f64) * LN_2PI - log_det - 0.5 * quad)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpFitOptions {
    pub range_grid: usize,
    pub ratio_grid: usize,
    /// Hold `obs_variance` fixed (then only the range is searched, amplitude profiled).
    pub fixed_obs_variance: Option<f64>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            range_grid: 14,
            ratio_grid: 9,
            fixed_obs_variance: None,
        }
    }
}

/// Marginal-likelihood fit: log grid over (range, noise ratio), amplitude profiled
/// out, then Nelder–Mead refinement from the best grid cell.
pub fn fit_gp_aid(data: &Telemetry) -> Result<GpAidParams> {
    fit_gp_aid_with(data, &GpFitOptions::default())
}

pub fn fit_gp_aid_with(data: &Telemetry, opts: &GpFitOptions) -> Result<GpAidParams> {
    let n = data.len();
    if n < 4 {
        return invalid(format!("GP AID needs at least 4 observations, got {n}"));
    }
    let times = data.times();
    let mean = Point::new(crate::stats::mean(&data.coordinate(0)), crate::stats::mean(&data.coordinate(1)));
    let centered = [
        DVector::from_iterator(n, data.coordinate(0).into_iter().map(|v| v - mean.x)),
        DVector::from_iterator(n, data.coordinate(1).into_iter().map(|v| v - mean.y)),
    ];
    let span = times[n - 1] - times[0];
    let min_gap = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let lo_range = (min_gap.max(span * 1e-4)).ln();
    let hi_range = span.ln();

    if let Some(tau2) = opts.fixed_obs_variance {
        let var = centered.iter().map(|y| y.norm_squared()).sum::<f64>() / (2 * n) as f64;
        let lo_amp = (var.max(1e-12) * 1e-2).ln();
        let hi_amp = (var.max(1e-12) * 1e2).ln();
        let obj = |x: &[f64]| -> f64 {
            if x[0] < lo_range - 3.0 || x[0] > hi_range + 3.0 {
                return f64::INFINITY;
            }
            match full_log_likelihood(times, &centered, x[0].exp(), x[1].exp(), tau2) {
                Some(ll) => -ll,
                None => f64::INFINITY,
            }
        };
        let best = grid_then_refine(&obj, &[(lo_range, hi_range, opts.range_grid), (lo_amp, hi_amp, opts.ratio_grid)])?;
        return Ok(GpAidParams {
            range: best[0].exp(),
            amplitude: best[1].exp(),
            obs_variance: tau2,
            mean,
        });
    }

    let obj = |x: &[f64]| -> f64 {
        if x[0] < lo_range - 3.0 || x[0] > hi_range + 3.0 || x[1] < -30.0 || x[1] > 5.0 {
            return f64::INFINITY;
        }
        match profile_log_likelihood(times, &centered, x[0].exp(), x[1].exp()) {
            Some((ll, _)) => -ll,
            None => f64::INFINITY,
        }
    };
    let best = grid_then_refine(&obj, &[(lo_range, hi_range, opts.range_grid), ((1e-7f64).ln(), 0.0, opts.ratio_grid)])?;
    let (range, ratio) = (best[0].exp(), best[1].exp());
    let (_, amp) = profile_log_likelihood(times, &centered, range, ratio).ok_or_else(|| Error::Numerical("GP profile failed".into()))?;
    Ok(GpAidParams {
        range,
        amplitude: amp,
        obs_variance: ratio * amp,
        mean,
    })
}

fn grid_then_refine<F: Fn(&[f64]) -> f64 + Sync>(obj: &F, axes: &[(f64, f64, usize)]) -> Result<Vec<f64>> {
    let sizes: Vec<usize> = axes.iter().map(|a| a.2.max(2)).collect();
    let total: usize = sizes.iter().product();
    let point = |mut idx: usize| -> Vec<f64> {
        axes.iter()
            .zip(&sizes)
            .map(|(&(lo, hi, _), &s)| {
                let i = idx % s;
                idx /= s;
                lo + (hi - lo) * i as f64 / (s - 1) as f64
            })
            .collect()
    };
    let values = parallel::map_indexed(total, |i| obj(&point(i)));
    let best = (0..total)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .filter(|&i| values[i].is_finite())
        .ok_or_else(|| Error::Numerical("GP likelihood is not finite anywhere on the search grid".into()))?;
    let step = axes
        .iter()
        .zip(&sizes)
        .map(|(&(lo, hi, _), &s)| (hi - lo) / (s - 1) as f64)
        .fold(f64::INFINITY, f64::min);
    let nm = NelderMead {
        max_iter: 400,
        f_tol: 1e-9,
        x_tol: 1e-5,
        initial_step: 0.5 * step,
    };
    let refined = nm.minimize(|x| obj(x), &point(best));
    Ok(if refined.value <= values[best] { refined.x } else { point(best) })
}

/// Conditional mean (per coordinate) and covariance factor at the grid times.
pub struct GpConditional {
    pub mean: [DVector<f64>; 2],
    pub covariance: DMatrix<f64>,
}

pub fn gp_conditional(params: &GpAidParams, data: &Telemetry, grid: &TrajectoryGrid) -> Result<GpConditional> {
    params.validate()?;
    let obs_t = data.times();
    let n = obs_t.len();
    let gt = grid.times();
    let m = gt.len();
    let mut k_oo = DMatrix::from_fn(n, n, |i, j| params.covariance(obs_t[i], obs_t[j]));
    for i in 0..n {
        k_oo[(i, i)] += params.obs_variance;
    }
    let (chol, _) = cholesky_with_jitter(&k_oo, params.amplitude)?;
    let k_og = DMatrix::from_fn(n, m, |i, j| params.covariance(obs_t[i], gt[j]));
    let mut v = k_og.clone();
    chol.l().solve_lower_triangular_mut(&mut v);
    let mut cov = DMatrix::from_fn(m, m, |i, j| params.covariance(gt[i], gt[j]));
    cov -= v.transpose() * &v;
    let mean = [0, 1].map(|axis| {
        let centered = DVector::from_iterator(n, data.coordinate(axis).into_iter().map(|y| y - params.mean[axis]));
        let w = chol.solve(&centered);
        let mut mu = k_og.transpose() * w;
        mu.add_scalar_mut(params.mean[axis]);
        mu
    });
    Ok(GpConditional { mean, covariance: cov })
}

/// `k` draws from the GP conditional distribution on `grid`, plus its mean path.
pub fn draw_gp_paths(params: &GpAidParams, data: &Telemetry, grid: &TrajectoryGrid, k: usize, seed: u64) -> Result<ImputationSet> {
    if k == 0 {
        return invalid("K must be at least 1");
    }
    let cond = gp_conditional(params, data, grid)?;
    let (chol, _) = cholesky_with_jitter(&cond.covariance, params.amplitude)?;
    let l = chol.l();
    let m = grid.len();
    let to_path = |xs: &DVector<f64>, ys: &DVector<f64>| {
        LatentPath::new(grid.clone(), (0..m).map(|j| Point::new(xs[j], ys[j])).collect(), None)
    };
    let draws = parallel::try_map_indexed(k, |i| {
        let mut rng = rng_from_seed(indexed_seed(seed, i));
        let zx = DVector::from_fn(m, |_, _| std_normal(&mut rng));
        let zy = DVector::from_fn(m, |_, _| std_normal(&mut rng));
        to_path(&(&cond.mean[0] + &l * zx), &(&cond.mean[1] + &l * zy))
    })?;
    let mean = to_path(&cond.mean[0], &cond.mean[1])?;
    Ok(ImputationSet {
        grid: grid.clone(),
        draws,
        mean: Some(mean),
        model: AidModel::Gp(*params),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_formula() {
        let p = GpAidParams {
            range: 2.0,
            amplitude: 3.5,
            obs_variance: 0.0,
            mean: Point::zeros(),
        };
        assert_eq!(p.covariance(1.3, 1.3), 3.5);
        let lag = 2.0 * 2f64.sqrt();
        assert!((correlation(0.0, lag, 2.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((correlation(0.0, lag, 2.0) - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn jitter_rescues_dense_squared_exponential() {
        let times: Vec<f64> = (0..300).map(|i| i as f64 * 0.01).collect();
        let c = correlation_matrix(&times, 5.0);
        let (_, eps) = cholesky_with_jitter(&c, 1.0).unwrap();
        assert!(eps > 0.0 && eps <= JITTER_MAX);
    }
}
