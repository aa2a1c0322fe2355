//! Time grids, latent paths and telemetry containers.
//!
//! Times are in hours and coordinates in km everywhere in the crate.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Point = Vector2<f64>;

/// Tolerance used to identify coincident time stamps when merging grids.
pub const TIME_TOL: f64 = 1e-12;

/// Strictly increasing sequence of time stamps `t_1..t_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TrajectoryGrid {
    times: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TrajectoryGrid {
    type Error = crate::Error;

    fn try_from(times: Vec<f64>) -> Result<Self> {
        Self::new(times)
    }
}

impl From<TrajectoryGrid> for Vec<f64> {
    fn from(g: TrajectoryGrid) -> Self {
        g.times
    }
}

impl TrajectoryGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return invalid(format!("grid needs at least 2 times, got {}", times.len()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return invalid("grid times must be finite");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("grid times must be strictly increasing");
        }
        Ok(Self { times })
    }

    /// Equally spaced grid of `m` points on `[start, end]`.
    pub fn build(start: f64, end: f64, m: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return invalid(format!("grid span [{start}, {end}] is degenerate"));
        }
        if m < 2 {
            return invalid("grid needs m >= 2");
        }
        let step = (end - start) / (m - 1) as f64;
        let mut times: Vec<f64> = (0..m).map(|j| start + step * j as f64).collect();
        times[m - 1] = end;
        Self::new(times)
    }

    /// Union of this grid with `obs_times`. Returns the merged grid and the index of
    /// each observation time in it.
    pub fn merge(&self, obs_times: &[f64]) -> Result<(TrajectoryGrid, Vec<usize>)> {
        let (lo, hi) = (self.start(), self.end());
        for &t in obs_times {
            if !t.is_finite() || t < lo - TIME_TOL || t > hi + TIME_TOL {
                return invalid(format!("observation time {t} outside grid span [{lo}, {hi}]"));
            }
        }
        let mut all: Vec<f64> = self.times.iter().chain(obs_times.iter()).copied().collect();
        all.sort_by(|a, b| a.total_cmp(b));
        let mut merged: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match merged.last() {
                Some(&last) if (t - last).abs() <= TIME_TOL => {}
                _ => merged.push(t),
            }
        }
        let grid = TrajectoryGrid::new(merged)?;
        let index = obs_times
            .iter()
            .map(|&t| grid.index_of(t).expect("merged grid contains every observation time"))
            .collect();
        Ok((grid, index))
    }

    /// Index of `t` in the grid, if present within [`TIME_TOL`].
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = self.times.partition_point(|&x| x < t - TIME_TOL);
        (pos < self.times.len() && (self.times[pos] - t).abs() <= TIME_TOL).then_some(pos)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `dt_{j+1} = t_{j+1} - t_j` for `j = 0..m-1` (0-based, length `m - 1`).
    pub fn increments(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Increment ending at index `j` (`j >= 1`).
    #[inline]
    pub fn dt(&self, j: usize) -> f64 {
        self.times[j] - self.times[j - 1]
    }
}

/// Positions (and optionally velocities) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub grid: TrajectoryGrid,
    pub positions: Vec<Point>,
    pub velocities: Option<Vec<Point>>,
}

impl LatentPath {
    pub fn new(grid: TrajectoryGrid, positions: Vec<Point>, velocities: Option<Vec<Point>>) -> Result<Self> {
        if positions.len() != grid.len() {
            return invalid(format!(
                "path has {} positions for a grid of {}",
                positions.len(),
                grid.len()
            ));
        }
        if positions.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return invalid("path positions must be finite");
        }
        if let Some(v) = &velocities {
            if v.len() != grid.len() {
                return invalid("velocity count must match grid");
            }
            if v.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
                return invalid("path velocities must be finite");
            }
        }
        Ok(Self {
            grid,
            positions,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Forward-difference velocities, last value replicated.
    pub fn with_finite_difference_velocities(&self) -> LatentPath {
        let m = self.positions.len();
        let mut v = Vec::with_capacity(m);
        for j in 0..m - 1 {
            v.push((self.positions[j + 1] - self.positions[j]) / self.grid.dt(j + 1));
        }
        v.push(v[m - 2]);
        LatentPath {
            grid: self.grid.clone(),
            positions: self.positions.clone(),
            velocities: Some(v),
        }
    }

    /// Velocities if stored, forward differences otherwise.
    pub fn velocities_or_differences(&self) -> std::borrow::Cow<'_, [Point]> {
        match &self.velocities {
            Some(v) => std::borrow::Cow::Borrowed(v.as_slice()),
            None => std::borrow::Cow::Owned(self.with_finite_difference_velocities().velocities.unwrap()),
        }
    }
}

/// `v(t_j) = (mu(t_{j+1}) - mu(t_j)) / dt_{j+1}`, last velocity copies the previous one.
pub fn velocities_from_path(path: &LatentPath) -> LatentPath {
    path.with_finite_difference_velocities()
}

/// Observed locations at irregular times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    times: Vec<f64>,
    locations: Vec<Point>,
}

impl Telemetry {
    pub fn new(times: Vec<f64>, locations: Vec<Point>) -> Result<Self> {
        if times.len() != locations.len() {
            return invalid("telemetry times and locations differ in length");
        }
        if times.len() < 2 {
            return invalid(format!("telemetry needs at least 2 observations, got {}", times.len()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return invalid("telemetry times must be finite");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("telemetry times must be strictly increasing");
        }
        if locations.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return invalid("telemetry coordinates must be finite");
        }
        Ok(Self { times, locations })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// One coordinate (0 = x, 1 = y) as a plain vector.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.locations.iter().map(|p| p[axis]).collect()
    }
}

/// Inverse-gamma shape/rate pairs for the two variance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub a_s: f64,
    pub b_s: f64,
    pub a_v: f64,
    pub b_v: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            a_s: 1e-3,
            b_s: 1e-4,
            a_v: 1e-3,
            b_v: 1e-4,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a_s, self.b_s, self.a_v, self.b_v];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            invalid("inverse-gamma hyperparameters must be strictly positive")
        }
    }
}
