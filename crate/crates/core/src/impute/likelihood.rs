//! Complete-data likelihoods of the two process models, both as direct sums over
//! the grid and through per-path sufficient statistics.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::grid::{LatentPath, Point, Telemetry};
use crate::potential::unit_away;
use crate::stats::LN_2PI;

/// Parameters of the velocity model: `beta = W alpha` and `sigma_v²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessParams {
    alpha: DVector<f64>,
    beta_grid: DVector<f64>,
    sigma_v_sq: f64,
}

impl ProcessParams {
    pub fn new(alpha: DVector<f64>, basis: &DMatrix<f64>, sigma_v_sq: f64) -> Result<Self> {
        if basis.ncols() != alpha.len() {
            return invalid("alpha length does not match the basis");
        }
        if !(sigma_v_sq > 0.0 && sigma_v_sq.is_finite()) {
            return invalid("sigma_v_sq must be positive");
        }
        Ok(Self {
            beta_grid: basis * &alpha,
            alpha,
            sigma_v_sq,
        })
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn beta_grid(&self) -> &DVector<f64> {
        &self.beta_grid
    }

    pub fn sigma_v_sq(&self) -> f64 {
        self.sigma_v_sq
    }
}

/// `sum_j log N(v_{j+1}; v_j - beta_j u_j dt - sigma_v v_j dt, sigma_v² dt I)` with
/// `u_j = (mu_j - c) / ||mu_j - c||`. Velocities are forward differences when the
/// path does not carry them.
pub fn complete_data_loglik(path: &LatentPath, params: &ProcessParams, center: &Point) -> Result<f64> {
    let m = path.len();
    if params.beta_grid.len() != m {
        return invalid("beta grid does not match the path");
    }
    let v = path.velocities_or_differences();
    let s2 = params.sigma_v_sq;
    let sv = s2.sqrt();
    let mut ll = 0.0;
    for j in 0..m - 1 {
        let dt = path.grid.dt(j + 1);
        let u = unit_away(&path.positions[j], center);
        let mean = v[j] - u * (params.beta_grid[j] * dt) - v[j] * (sv * dt);
        let var = s2 * dt;
        ll += -(LN_2PI + var.ln()) - (v[j + 1] - mean).norm_squared() / (2.0 * var);
    }
    Ok(ll)
}

/// `sum_i log N(mu_i; mu_{i-1} + beta (c - mu_{i-1}) / ||c - mu_{i-1}|| dt, dt I)`.
pub fn drift_loglik(path: &LatentPath, beta: f64, center: &Point) -> f64 {
    let mut ll = 0.0;
    for i in 1..path.len() {
        let dt = path.grid.dt(i);
        let mean = crate::simulate::sde1_mean_step(&path.positions[i - 1], beta, center, dt);
        ll += -(LN_2PI + dt.ln()) - (path.positions[i] - mean).norm_squared() / (2.0 * dt);
    }
    ll
}

/// Sufficient statistics of one path for the velocity model.
#[derive(Debug, Clone)]
pub struct VelocityStats {
    /// `sum dt |u|² W_j W_j'`
    pub gram: DMatrix<f64>,
    /// `sum (u_j . dv_j) W_j`
    pub cross_dv: DVector<f64>,
    /// `sum dt (u_j . v_j) W_j`
    pub cross_v: DVector<f64>,
    /// `sum |dv|² / dt`
    pub dv_dv: f64,
    /// `sum dv . v`
    pub dv_v: f64,
    /// `sum dt |v|²`
    pub v_v: f64,
    pub steps: usize,
    /// `sum ln(2 pi dt)`
    pub log_norm: f64,
}

impl VelocityStats {
    pub fn new(path: &LatentPath, basis: &DMatrix<f64>, center: &Point) -> Result<Self> {
        let m = path.len();
        if basis.nrows() != m {
            return invalid(format!("basis has {} rows for a path of {}", basis.nrows(), m));
        }
        let p = basis.ncols();
        let v = path.velocities_or_differences();
        let mut gram = DMatrix::zeros(p, p);
        let mut cross_dv = DVector::zeros(p);
        let mut cross_v = DVector::zeros(p);
        let (mut dv_dv, mut dv_v, mut v_v, mut log_norm) = (0.0, 0.0, 0.0, 0.0);
        let mut row = DVector::zeros(p);
        for j in 0..m - 1 {
            let dt = path.grid.dt(j + 1);
            let u = unit_away(&path.positions[j], center);
            let dv = v[j + 1] - v[j];
            row.copy_from(&basis.row(j).transpose());
            let u2 = u.norm_squared();
            if u2 > 0.0 {
                gram.ger(dt * u2, &row, &row, 1.0);
                cross_dv.axpy(u.dot(&dv), &row, 1.0);
                cross_v.axpy(dt * u.dot(&v[j]), &row, 1.0);
            }
            dv_dv += dv.norm_squared() / dt;
            dv_v += dv.dot(&v[j]);
            v_v += dt * v[j].norm_squared();
            log_norm += LN_2PI + dt.ln();
        }
        Ok(Self {
            gram,
            cross_dv,
            cross_v,
            dv_dv,
            dv_v,
            v_v,
            steps: m - 1,
            log_norm,
        })
    }

    /// Same value as [`complete_data_loglik`], in `O(p²)`.
    pub fn loglik(&self, alpha: &DVector<f64>, sigma_v_sq: f64) -> f64 {
        let sv = sigma_v_sq.sqrt();
        let quad = self.dv_dv
            + 2.0 * alpha.dot(&self.cross_dv)
            + (self.gram.clone() * alpha).dot(alpha)
            + 2.0 * sv * (self.dv_v + alpha.dot(&self.cross_v))
            + sigma_v_sq * self.v_v;
        -self.log_norm - self.steps as f64 * sigma_v_sq.ln() - quad / (2.0 * sigma_v_sq)
    }
}

/// Sufficient statistics of one path for the constant-drift model.
#[derive(Debug, Clone, Copy)]
pub struct DriftStats {
    /// `sum u_{i-1} . dmu_i` with `u` pointing toward the center
    pub toward: f64,
    /// `sum dt |u|²`
    pub exposure: f64,
    /// `sum |dmu|² / dt`
    pub step_sq: f64,
    pub log_norm: f64,
}

impl DriftStats {
    pub fn new(path: &LatentPath, center: &Point) -> Self {
        let (mut toward, mut exposure, mut step_sq, mut log_norm) = (0.0, 0.0, 0.0, 0.0);
        for i in 1..path.len() {
            let dt = path.grid.dt(i);
            let u = -unit_away(&path.positions[i - 1], center);
            let d = path.positions[i] - path.positions[i - 1];
            toward += u.dot(&d);
            exposure += dt * u.norm_squared();
            step_sq += d.norm_squared() / dt;
            log_norm += LN_2PI + dt.ln();
        }
        Self {
            toward,
            exposure,
            step_sq,
            log_norm,
        }
    }

    pub fn loglik(&self, beta: f64) -> f64 {
        -self.log_norm - 0.5 * (self.step_sq - 2.0 * beta * self.toward + beta * beta * self.exposure)
    }
}

/// Squared observation residuals `sum ||s_i - mu(t_i)||²` and the observation count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    pub sum_sq: f64,
    pub count: usize,
}

impl ResidualStats {
    pub fn new(path: &LatentPath, data: &Telemetry) -> Result<Self> {
        let mut sum_sq = 0.0;
        for (t, s) in data.times().iter().zip(data.locations()) {
            let Some(j) = path.grid.index_of(*t) else {
                return invalid(format!("observation time {t} missing from path grid"));
            };
            sum_sq += (s - path.positions[j]).norm_squared();
        }
        Ok(Self {
            sum_sq,
            count: data.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{basis_matrix, BasisSpec};
    use crate::grid::TrajectoryGrid;

    fn normal2_logpdf(x: Point, mean: Point, var: f64) -> f64 {
        let d = x - mean;
        -(2.0 * std::f64::consts::PI * var).ln() - d.norm_squared() / (2.0 * var)
    }

    #[test]
    fn three_point_path_matches_hand_density() {
        let grid = TrajectoryGrid::new(vec![0.0, 0.5, 1.25]).unwrap();
        let pos = vec![Point::new(1.0, 0.0), Point::new(1.2, 0.3), Point::new(1.1, 0.9)];
        let vel = vec![Point::new(0.4, 0.6), Point::new(-0.2, 0.8), Point::new(0.1, -0.3)];
        let path = LatentPath::new(grid.clone(), pos.clone(), Some(vel.clone())).unwrap();
        let w = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let params = ProcessParams::new(DVector::from_element(1, 0.7), &w, 0.64).unwrap();
        let center = Point::new(-1.0, 2.0);
        let sv = 0.8;
        let mut expect = 0.0;
        for (j, dt) in [(0usize, 0.5), (1, 0.75)] {
            let d = pos[j] - center;
            let u = d / d.norm();
            let mean = vel[j] - u * (0.7 * dt) - vel[j] * (sv * dt);
            expect += normal2_logpdf(vel[j + 1], mean, 0.64 * dt);
        }
        let got = complete_data_loglik(&path, &params, &center).unwrap();
        assert!((got - expect).abs() < 1e-10);
        let stats = VelocityStats::new(&path, &w, &center).unwrap();
        assert!((stats.loglik(params.alpha(), 0.64) - expect).abs() < 1e-10);
    }

    #[test]
    fn zero_force_constant_velocity_closed_form() {
        let grid = TrajectoryGrid::new(vec![0.0, 0.2, 0.5, 1.0]).unwrap();
        let v = Point::new(0.3, -0.4);
        let pos: Vec<Point> = grid.times().iter().map(|&t| v * t).collect();
        let path = LatentPath::new(grid.clone(), pos, Some(vec![v; 4])).unwrap();
        let w = DMatrix::from_element(4, 1, 1.0);
        let params = ProcessParams::new(DVector::zeros(1), &w, 1.0).unwrap();
        let got = complete_data_loglik(&path, &params, &Point::new(5.0, 5.0)).unwrap();
        // residual is -v dt, so each term is -ln(2 pi dt) - |v|² dt / 2
        let expect: f64 = grid.increments().iter().map(|dt| -(2.0 * std::f64::consts::PI * dt).ln() - v.norm_squared() * dt / 2.0).sum();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn larger_residuals_lower_likelihood() {
        let grid = TrajectoryGrid::build(0.0, 2.0, 9).unwrap();
        let pos: Vec<Point> = grid.times().iter().map(|&t| Point::new(t, t * t)).collect();
        let path = LatentPath::new(grid.clone(), pos.clone(), None).unwrap();
        let w = DMatrix::from_element(9, 1, 1.0);
        let params = ProcessParams::new(DVector::zeros(1), &w, 0.5).unwrap();
        let rough: Vec<Point> = pos.iter().enumerate().map(|(j, p)| p + Point::new(0.0, if j % 2 == 0 { 0.3 } else { -0.3 })).collect();
        let rough = LatentPath::new(grid, rough, None).unwrap();
        let c = Point::new(10.0, 0.0);
        assert!(complete_data_loglik(&path, &params, &c).unwrap() > complete_data_loglik(&rough, &params, &c).unwrap());
    }

    #[test]
    fn stats_agree_with_direct_sum_and_translation_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let grid = TrajectoryGrid::new((0..60).map(|i| i as f64 * 0.1 + 0.03 * (i % 3) as f64).collect()).unwrap();
        let pos: Vec<Point> = (0..60).map(|_| Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
        let path = LatentPath::new(grid.clone(), pos.clone(), None).unwrap();
        let w = basis_matrix(&BasisSpec::uniform(grid.start(), grid.end(), 3, 3, 1.0), &grid).unwrap();
        let alpha = DVector::from_fn(w.ncols(), |i, _| 0.3 * i as f64 - 0.5);
        let params = ProcessParams::new(alpha.clone(), &w, 0.37).unwrap();
        let c = Point::new(0.2, -0.1);
        let direct = complete_data_loglik(&path, &params, &c).unwrap();
        let stats = VelocityStats::new(&path, &w, &c).unwrap();
        assert!((stats.loglik(&alpha, 0.37) - direct).abs() < 1e-8 * direct.abs());

        let shift = Point::new(13.0, -7.5);
        let moved = LatentPath::new(grid.clone(), pos.iter().map(|p| p + shift).collect(), None).unwrap();
        let moved_ll = complete_data_loglik(&moved, &params, &(c + shift)).unwrap();
        assert!((moved_ll - direct).abs() < 1e-8 * direct.abs());

        let d_direct = drift_loglik(&path, 0.8, &c);
        assert!((DriftStats::new(&path, &c).loglik(0.8) - d_direct).abs() < 1e-9 * d_direct.abs());
    }
}
