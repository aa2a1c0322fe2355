//! Forward simulation of the movement models and of the telemetry observation process.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{LatentPath, Point, Telemetry, TrajectoryGrid};
use crate::potential::{unit_away, AttractorPotential, Potential, Strength};
use crate::seed::rng_from_seed;
use crate::stats::std_normal2;

/// Second-order (velocity) model driven by a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sde2Params {
    pub sigma_v: f64,
    pub potential: AttractorPotential,
    pub initial_position: Point,
    pub initial_velocity: Point,
    /// Deterministic limit `sigma_v -> 0`: both the friction and the noise vanish.
    #[serde(default)]
    pub zero_noise: bool,
}

/// First-order model with constant attraction `beta` toward `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sde1Params {
    pub beta: f64,
    pub center: Point,
    pub sigma0_sq: f64,
}

impl Sde1Params {
    pub const STUDY_SIGMA0_SQ: f64 = 1e2;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsParams {
    pub sigma_s_sq: f64,
    /// Noise-free observation (`sigma_s_sq -> 0`).
    #[serde(default)]
    pub exact: bool,
}

impl ObsParams {
    pub const LARGE_ERROR: f64 = 1e-2;
    pub const SMALL_ERROR: f64 = 1e-4;
}

/// Euler–Maruyama path of the velocity model:
/// `mu_{j+1} = mu_j + v_j dt`, `v_{j+1} = v_j - grad H(mu_j, t_j) dt - sigma_v v_j dt + sigma_v eps`.
pub fn simulate_sde2(params: &Sde2Params, grid: &TrajectoryGrid, seed: u64) -> Result<LatentPath> {
    if !params.zero_noise && !(params.sigma_v > 0.0 && params.sigma_v.is_finite()) {
        return invalid("sigma_v must be positive");
    }
    if let Strength::Grid(b) = &params.potential.beta {
        if b.len() != grid.len() {
            return invalid(format!("beta has {} values for a grid of {}", b.len(), grid.len()));
        }
    }
    let sigma_v = if params.zero_noise { 0.0 } else { params.sigma_v };
    let mut rng = rng_from_seed(seed);
    let m = grid.len();
    let mut mu = Vec::with_capacity(m);
    let mut v = Vec::with_capacity(m);
    mu.push(params.initial_position);
    v.push(params.initial_velocity);
    for j in 0..m - 1 {
        let dt = grid.dt(j + 1);
        let (mj, vj) = (mu[j], v[j]);
        let force = params.potential.gradient(&mj, j);
        let mut next_v = vj - force * dt - vj * (sigma_v * dt);
        if sigma_v > 0.0 {
            next_v += std_normal2(&mut rng) * (sigma_v * dt.sqrt());
        }
        mu.push(mj + vj * dt);
        v.push(next_v);
    }
    LatentPath::new(grid.clone(), mu, Some(v))
}

/// Exact transition sampling of the first-order model:
/// `mu_i | mu_{i-1} ~ N(mu_{i-1} + beta (c - mu_{i-1}) / ||c - mu_{i-1}|| dt, dt I)`,
/// `mu_1 ~ N(0, sigma0_sq I)`.
pub fn simulate_sde1(params: &Sde1Params, grid: &TrajectoryGrid, seed: u64) -> Result<LatentPath> {
    if !(params.sigma0_sq > 0.0 && params.sigma0_sq.is_finite()) {
        return invalid("sigma0_sq must be positive");
    }
    let mut rng = rng_from_seed(seed);
    let m = grid.len();
    let mut mu = Vec::with_capacity(m);
    mu.push(std_normal2(&mut rng) * params.sigma0_sq.sqrt());
    for i in 1..m {
        let dt = grid.dt(i);
        let prev = mu[i - 1];
        mu.push(sde1_mean_step(&prev, params.beta, &params.center, dt) + std_normal2(&mut rng) * dt.sqrt());
    }
    LatentPath::new(grid.clone(), mu, None)
}

/// Conditional mean of the first-order transition.
#[inline]
pub fn sde1_mean_step(prev: &Point, beta: f64, center: &Point, dt: f64) -> Point {
    prev - unit_away(prev, center) * (beta * dt)
}

/// Telemetry `s_i = mu(t_i) + eta_i`, `eta_i ~ N(0, sigma_s_sq I)`.
pub fn observe(path: &LatentPath, obs_times: &[f64], obs: &ObsParams, seed: u64) -> Result<Telemetry> {
    if !obs.exact && !(obs.sigma_s_sq > 0.0 && obs.sigma_s_sq.is_finite()) {
        return invalid("sigma_s_sq must be positive");
    }
    let mut rng = rng_from_seed(seed);
    let sd = if obs.exact { 0.0 } else { obs.sigma_s_sq.sqrt() };
    let mut locs = Vec::with_capacity(obs_times.len());
    for &t in obs_times {
        let Some(j) = path.grid.index_of(t) else {
            return invalid(format!("observation time {t} is not a grid time (merge grids first)"));
        };
        let noise = std_normal2(&mut rng) * sd;
        locs.push(path.positions[j] + noise);
    }
    Telemetry::new(obs_times.to_vec(), locs)
}
