//! Integrated Ornstein–Uhlenbeck AID: velocity is OU with rate `theta` and
//! diffusion `sigma`, position integrates velocity, observations add `N(0, tau2)`.
//! Coordinates are independent and share parameters.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{LatentPath, Point, Telemetry, TrajectoryGrid};
use crate::optim::NelderMead;
use crate::parallel;
use crate::seed::{indexed_seed, rng_from_seed, Rng as ChainRng};
use crate::stats::{std_normal, LN_2PI};

use super::{AidModel, ImputationSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuAidParams {
    /// Velocity mean-reversion rate (hour⁻¹).
    pub ou_autocorrelation: f64,
    /// Velocity diffusion scale; stationary velocity variance is `sigma² / (2 theta)`.
    pub ou_sigma: f64,
    /// Observation error variance (km²).
    pub obs_variance: f64,
    /// Mean of the initial position (km); velocity starts from its stationary law.
    pub initial_position: Point,
    /// Variance of the initial position per coordinate (km²).
    pub initial_position_variance: f64,
}

impl OuAidParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ou_autocorrelation > 0.0
            && self.ou_sigma > 0.0
            && self.obs_variance >= 0.0
            && self.initial_position_variance >= 0.0
            && self.ou_autocorrelation.is_finite()
            && self.ou_sigma.is_finite()
            && self.obs_variance.is_finite();
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid OU AID parameters {self:?}"))
        }
    }

    pub fn stationary_velocity_variance(&self) -> f64 {
        self.ou_sigma * self.ou_sigma / (2.0 * self.ou_autocorrelation)
    }

    fn initial_state(&self, axis: usize) -> (Vector2<f64>, Matrix2<f64>) {
        (
            Vector2::new(self.initial_position[axis], 0.0),
            Matrix2::new(self.initial_position_variance, 0.0, 0.0, self.stationary_velocity_variance()),
        )
    }
}

/// `x - 2(1 - e^{-x}) + (1 - e^{-2x})/2`, accurate for small `x`.
fn integrated_position_factor(x: f64) -> f64 {
    if x < 1e-2 {
        let x2 = x * x;
        x2 * x * (1.0 / 3.0 - x / 4.0 + 7.0 * x2 / 60.0 - x2 * x / 24.0)
    } else {
        x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1()
    }
}

/// Exact transition matrix and noise covariance over a step `dt`.
pub fn transition(theta: f64, sigma: f64, dt: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let x = theta * dt;
    let one_minus_e = -(-x).exp_m1();
    let one_minus_e2 = -(-2.0 * x).exp_m1();
    let s2 = sigma * sigma;
    let f = Matrix2::new(1.0, one_minus_e / theta, 0.0, 1.0 - one_minus_e);
    let q_vv = s2 / (2.0 * theta) * one_minus_e2;
    let q_xv = s2 / (2.0 * theta * theta) * one_minus_e * one_minus_e;
    let q_xx = s2 / (theta * theta * theta) * integrated_position_factor(x);
    (f, Matrix2::new(q_xx, q_xv, q_xv, q_vv))
}

/// Filtered moments for one coordinate.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub filtered_means: Vec<Vector2<f64>>,
    pub filtered_covs: Vec<Matrix2<f64>>,
    pub log_likelihood: f64,
}

/// Kalman filter over `times`, observing position where `obs[j]` is `Some`.
/// The initial state law applies at `times[0]`.
pub fn kalman_filter(params: &OuAidParams, axis: usize, times: &[f64], obs: &[Option<f64>]) -> FilterOutput {
    let (mut mean, mut cov) = params.initial_state(axis);
    let tau2 = params.obs_variance;
    let n = times.len();
    let mut filtered_means = Vec::with_capacity(n);
    let mut filtered_covs = Vec::with_capacity(n);
    let mut ll = 0.0;
    for j in 0..n {
        if j > 0 {
            let (f, q) = transition(params.ou_autocorrelation, params.ou_sigma, times[j] - times[j - 1]);
            mean = f * mean;
            cov = f * cov * f.transpose() + q;
            cov = symmetrize(cov);
        }
        if let Some(y) = obs[j] {
            let s = cov[(0, 0)] + tau2;
            let resid = y - mean[0];
            ll -= 0.5 * (LN_2PI + s.ln() + resid * resid / s);
            let (p00, p01, p11) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
            mean += Vector2::new(p00, p01) * (resid / s);
            // algebraically equal to P - P h h' P / s, without cancellation in the position entries
            let n00 = p00 * tau2 / s;
            let n01 = p01 * tau2 / s;
            let n11 = (p11 - p01 * p01 / s).max(0.0);
            cov = Matrix2::new(n00, n01, n01, n11);
        }
        filtered_means.push(mean);
        filtered_covs.push(cov);
    }
    FilterOutput {
        filtered_means,
        filtered_covs,
        log_likelihood: ll,
    }
}

fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)], off, off, m[(1, 1)])
}

/// Marginal log-likelihood of the telemetry under `params`, both coordinates.
pub fn ou_log_likelihood(params: &OuAidParams, data: &Telemetry) -> f64 {
    (0..2)
        .map(|axis| {
            let obs: Vec<Option<f64>> = data.locations().iter().map(|p| Some(p[axis])).collect();
            kalman_filter(params, axis, data.times(), &obs).log_likelihood
        })
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuFitOptions {
    /// Hold the observation variance at this value instead of estimating it.
    pub fixed_obs_variance: Option<f64>,
    pub restarts: usize,
    pub initial_position_variance: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for OuFitOptions {
    fn default() -> Self {
        Self {
            fixed_obs_variance: None,
            restarts: 5,
            initial_position_variance: 1e2,
            max_iter: 4000,
            seed: 0x5eed,
        }
    }
}

const LOG_BOUNDS: [(f64, f64); 3] = [(-13.8, 13.8), (-18.4, 18.4), (-27.6, 13.8)];

/// Maximum-likelihood fit by Nelder–Mead on log-parameters with random restarts.
pub fn fit_ou_aid(data: &Telemetry) -> Result<OuAidParams> {
    fit_ou_aid_with(data, &OuFitOptions::default())
}

pub fn fit_ou_aid_with(data: &Telemetry, opts: &OuFitOptions) -> Result<OuAidParams> {
    if data.len() < 4 {
        return invalid(format!("OU AID needs at least 4 observations, got {}", data.len()));
    }
    let times = data.times();
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted_gaps = gaps.clone();
    sorted_gaps.sort_by(|a, b| a.total_cmp(b));
    let typical_gap = sorted_gaps[sorted_gaps.len() / 2];
    let locs = data.locations();
    // per-coordinate displacement variance per unit time
    let diffusion = (locs
        .windows(2)
        .zip(&gaps)
        .map(|(w, dt)| (w[1] - w[0]).norm_squared() / (2.0 * dt))
        .sum::<f64>()
        / gaps.len() as f64)
        .max(1e-12);

    let theta0 = 1.0 / typical_gap;
    let base = [theta0.ln(), (theta0 * diffusion.sqrt()).ln(), (0.1 * diffusion * typical_gap).ln()];
    let fixed_tau2 = opts.fixed_obs_variance;
    let template = OuAidParams {
        ou_autocorrelation: 1.0,
        ou_sigma: 1.0,
        obs_variance: fixed_tau2.unwrap_or(0.0),
        initial_position: locs[0],
        initial_position_variance: opts.initial_position_variance,
    };
    let dims = if fixed_tau2.is_some() { 2 } else { 3 };
    let objective = |x: &[f64]| -> f64 {
        for (k, &v) in x.iter().enumerate() {
            if v < LOG_BOUNDS[k].0 || v > LOG_BOUNDS[k].1 {
                return f64::INFINITY;
            }
        }
        let mut p = template;
        p.ou_autocorrelation = x[0].exp();
        p.ou_sigma = x[1].exp();
        if dims == 3 {
            p.obs_variance = x[2].exp();
        }
        -ou_log_likelihood(&p, data)
    };

    let nm = NelderMead {
        max_iter: opts.max_iter,
        f_tol: 1e-10,
        x_tol: 1e-6,
        initial_step: 0.5,
    };
    let mut rng = ChainRng::seed_from_u64(opts.seed);
    let mut starts = vec![base[..dims].to_vec()];
    for _ in 0..opts.restarts {
        starts.push(base[..dims].iter().map(|b| b + 1.5 * std_normal(&mut rng)).collect());
    }
    let mut best: Option<crate::optim::Minimum> = None;
    for start in &starts {
        // polish each run with a restart from its own optimum
        let first = nm.minimize(objective, start);
        let run = nm.minimize(objective, &first.x);
        let run = crate::optim::Minimum {
            iterations: first.iterations + run.iterations,
            ..run
        };
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }
    let best = best.unwrap();
    let mut params = template;
    params.ou_autocorrelation = best.x[0].exp();
    params.ou_sigma = best.x[1].exp();
    if dims == 3 {
        params.obs_variance = best.x[2].exp();
    }
    if !best.converged || !best.value.is_finite() {
        return Err(Error::NonConvergence {
            iterations: best.iterations,
            best_params: vec![params.ou_autocorrelation, params.ou_sigma, params.obs_variance],
            best_value: -best.value,
        });
    }
    Ok(params)
}

/// Precomputed backward recursion for one coordinate:
/// `x_j | x_{j+1} ~ N(offset_j + gain_j x_{j+1}, chol_j chol_j')`.
struct BackwardPass {
    last_mean: Vector2<f64>,
    last_chol: Matrix2<f64>,
    offsets: Vec<Vector2<f64>>,
    gains: Vec<Matrix2<f64>>,
    chols: Vec<Matrix2<f64>>,
}

/// Lower-triangular factor of a 2×2 covariance, clamping rounding-level negatives.
fn psd_factor(c: &Matrix2<f64>) -> Matrix2<f64> {
    let c00 = c[(0, 0)].max(0.0);
    if c00 > 0.0 {
        let l00 = c00.sqrt();
        let l10 = c[(1, 0)] / l00;
        let d = (c[(1, 1)] - l10 * l10).max(0.0);
        Matrix2::new(l00, 0.0, l10, d.sqrt())
    } else {
        Matrix2::new(0.0, 0.0, 0.0, c[(1, 1)].max(0.0).sqrt())
    }
}

fn inverse2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det.abs() <= f64::MIN_POSITIVE || !det.is_finite() {
        return None;
    }
    Some(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

fn backward_pass(params: &OuAidParams, axis: usize, grid: &TrajectoryGrid, obs: &[Option<f64>]) -> Result<BackwardPass> {
    let times = grid.times();
    let filt = kalman_filter(params, axis, times, obs);
    let m = times.len();
    let mut offsets = vec![Vector2::zeros(); m - 1];
    let mut gains = vec![Matrix2::zeros(); m - 1];
    let mut chols = vec![Matrix2::zeros(); m - 1];
    for j in 0..m - 1 {
        let (f, q) = transition(params.ou_autocorrelation, params.ou_sigma, times[j + 1] - times[j]);
        let p = filt.filtered_covs[j];
        let pred = symmetrize(f * p * f.transpose() + q);
        let inv = inverse2(&pred).ok_or_else(|| Error::Numerical(format!("singular predictive covariance at grid index {}", j + 1)))?;
        let gain = p * f.transpose() * inv;
        let mj = filt.filtered_means[j];
        offsets[j] = mj - gain * (f * mj);
        let cond = symmetrize(p - gain * f * p);
        gains[j] = gain;
        chols[j] = psd_factor(&cond);
    }
    Ok(BackwardPass {
        last_mean: filt.filtered_means[m - 1],
        last_chol: psd_factor(&filt.filtered_covs[m - 1]),
        offsets,
        gains,
        chols,
    })
}

impl BackwardPass {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let m = out.len();
        let z = |rng: &mut R| Vector2::new(std_normal(rng), std_normal(rng));
        let mut x = self.last_mean + self.last_chol * z(rng);
        out[m - 1] = x[0];
        for j in (0..m - 1).rev() {
            x = self.offsets[j] + self.gains[j] * x + self.chols[j] * z(rng);
            out[j] = x[0];
        }
    }

    fn smoothed_mean(&self, out: &mut [f64]) {
        let m = out.len();
        let mut x = self.last_mean;
        out[m - 1] = x[0];
        for j in (0..m - 1).rev() {
            x = self.offsets[j] + self.gains[j] * x;
            out[j] = x[0];
        }
    }
}

fn grid_observations(data: &Telemetry, grid: &TrajectoryGrid) -> Result<[Vec<Option<f64>>; 2]> {
    let mut obs = [vec![None; grid.len()], vec![None; grid.len()]];
    for (t, p) in data.times().iter().zip(data.locations()) {
        let Some(j) = grid.index_of(*t) else {
            return invalid(format!("observation time {t} missing from imputation grid"));
        };
        obs[0][j] = Some(p.x);
        obs[1][j] = Some(p.y);
    }
    Ok(obs)
}

/// Smoothing mean of the position process on `grid`.
pub fn ou_smoothed_mean(params: &OuAidParams, data: &Telemetry, grid: &TrajectoryGrid) -> Result<LatentPath> {
    params.validate()?;
    let obs = grid_observations(data, grid)?;
    let m = grid.len();
    let mut coords = [vec![0.0; m], vec![0.0; m]];
    for axis in 0..2 {
        backward_pass(params, axis, grid, &obs[axis])?.smoothed_mean(&mut coords[axis]);
    }
    LatentPath::new(grid.clone(), (0..m).map(|j| Point::new(coords[0][j], coords[1][j])).collect(), None)
}

/// `k` forward-filter backward-sampler draws of the position process on `grid`.
pub fn draw_ou_paths(params: &OuAidParams, data: &Telemetry, grid: &TrajectoryGrid, k: usize, seed: u64) -> Result<ImputationSet> {
    params.validate()?;
    if k == 0 {
        return invalid("K must be at least 1");
    }
    let obs = grid_observations(data, grid)?;
    let passes = [backward_pass(params, 0, grid, &obs[0])?, backward_pass(params, 1, grid, &obs[1])?];
    let m = grid.len();
    let draws = parallel::try_map_indexed(k, |i| {
        let mut rng = rng_from_seed(indexed_seed(seed, i));
        let mut xs = vec![0.0; m];
        let mut ys = vec![0.0; m];
        passes[0].sample(&mut rng, &mut xs);
        passes[1].sample(&mut rng, &mut ys);
        LatentPath::new(grid.clone(), xs.into_iter().zip(ys).map(|(x, y)| Point::new(x, y)).collect(), None)
    })?;
    let mut mx = vec![0.0; m];
    let mut my = vec![0.0; m];
    passes[0].smoothed_mean(&mut mx);
    passes[1].smoothed_mean(&mut my);
    let mean = LatentPath::new(grid.clone(), mx.into_iter().zip(my).map(|(x, y)| Point::new(x, y)).collect(), None)?;
    Ok(ImputationSet {
        grid: grid.clone(),
        draws,
        mean: Some(mean),
        model: AidModel::Ou(*params),
        seed,
    })
}

/// Exact simulation of the integrated-OU model (both coordinates) at `times`.
pub fn simulate_integrated_ou(params: &OuAidParams, times: &[f64], seed: u64) -> Vec<(Point, Point)> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(times.len());
    let mut state = [Vector2::zeros(); 2];
    for axis in 0..2 {
        let (m0, p0) = params.initial_state(axis);
        state[axis] = m0 + psd_factor(&p0) * Vector2::new(std_normal(&mut rng), std_normal(&mut rng));
    }
    for (j, _) in times.iter().enumerate() {
        if j > 0 {
            let (f, q) = transition(params.ou_autocorrelation, params.ou_sigma, times[j] - times[j - 1]);
            let l = psd_factor(&q);
            for s in state.iter_mut() {
                *s = f * *s + l * Vector2::new(std_normal(&mut rng), std_normal(&mut rng));
            }
        }
        out.push((Point::new(state[0][0], state[1][0]), Point::new(state[0][1], state[1][1])));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_step_factor_matches_direct_formula() {
        for &x in &[1e-2f64, 2e-2, 0.5, 3.0] {
            let direct = x - 2.0 * (1.0 - (-x).exp()) + 0.5 * (1.0 - (-2.0 * x).exp());
            assert!((integrated_position_factor(x) - direct).abs() <= 1e-8 * direct);
        }
        let x: f64 = 0.00999;
        let series = integrated_position_factor(x);
        let direct = x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1();
        assert!((series - direct).abs() / direct < 1e-8);
    }

    #[test]
    fn transition_is_positive_definite() {
        for &dt in &[1e-6, 1e-3, 0.1, 10.0] {
            let (_, q) = transition(2.0, 1.5, dt);
            assert!(q[(0, 0)] > 0.0 && q[(1, 1)] > 0.0);
            assert!(q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(0, 1)] > 0.0, "dt {dt}");
        }
    }

    #[test]
    fn needs_four_observations() {
        let t = Telemetry::new(vec![0.0, 1.0, 2.0], vec![Point::zeros(); 3]).unwrap();
        assert!(matches!(fit_ou_aid(&t), Err(Error::Validation(_))));
    }
}
