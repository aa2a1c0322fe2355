#![allow(dead_code)]

use movimpute::grid::LatentPath;
use movimpute::potential::{AttractorPotential, Strength};
use movimpute::simulate::{simulate_sde2, Sde2Params};
use movimpute::{Point, TrajectoryGrid};

/// Normalized CDF of an unnormalized log density on an equally spaced grid
/// (trapezoid rule).
pub struct GridCdf {
    pub xs: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Self {
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let lp: Vec<f64> = xs.iter().map(|&x| log_density(x)).collect();
        let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d: Vec<f64> = lp.iter().map(|l| (l - top).exp()).collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * (d[i] + d[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[n - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { xs, cdf }
    }

    /// `sup |F_empirical - F_grid|` over the grid points.
    pub fn sup_distance(&self, draws: &[f64]) -> f64 {
        let mut sorted = draws.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        self.xs
            .iter()
            .zip(&self.cdf)
            .map(|(x, f)| {
                let below = sorted.partition_point(|d| d <= x) as f64;
                (below / n - f).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `sup |F_empirical - F|` against a closed-form CDF.
pub fn ks_distance(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Pearson statistic of observed counts against equal expected counts.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Upper 1% points of the chi-square distribution.
pub fn chi_square_crit_01(df: usize) -> f64 {
    match df {
        4 => 13.277,
        9 => 21.666,
        19 => 36.191,
        _ => panic!("no tabulated critical value for {df} degrees of freedom"),
    }
}

/// Velocity-model path with `beta` per grid point.
pub fn velocity_path(beta: Vec<f64>, grid: &TrajectoryGrid, sigma_v: f64, seed: u64) -> LatentPath {
    let params = Sde2Params {
        sigma_v,
        potential: AttractorPotential::new(Point::zeros(), Strength::Grid(beta)),
        initial_position: Point::new(3.0, 0.0),
        initial_velocity: Point::zeros(),
        zero_noise: false,
    };
    simulate_sde2(&params, grid, seed).unwrap()
}

/// Standard error of the mean of a correlated series by non-overlapping batch means.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> f64 {
    let len = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(len).take(batches).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    (movimpute::stats::sample_variance(&means) / batches as f64).sqrt()
}
