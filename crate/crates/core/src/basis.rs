//! Clamped B-spline bases used to represent the time-varying attraction `beta(t) = W alpha`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{TrajectoryGrid, TIME_TOL};

/// Breakpoints (boundaries included), spline degree and the coefficient prior variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub knot_times: Vec<f64>,
    pub degree: usize,
    pub prior_variance: f64,
}

impl BasisSpec {
    /// Equally spaced breakpoints on `[start, end]` with `interior` interior knots.
    pub fn uniform(start: f64, end: f64, interior: usize, degree: usize, prior_variance: f64) -> Self {
        let pieces = interior + 1;
        let knot_times = (0..=pieces)
            .map(|i| start + (end - start) * i as f64 / pieces as f64)
            .collect();
        Self {
            knot_times,
            degree,
            prior_variance,
        }
    }

    /// Number of basis functions `p`.
    pub fn len(&self) -> usize {
        (self.knot_times.len() + self.degree).saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.knot_times.len() < 2 {
            return invalid("basis needs at least two breakpoints (p = 0 otherwise)");
        }
        if self.knot_times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("basis breakpoints must be strictly increasing");
        }
        if !(self.prior_variance.is_finite() && self.prior_variance > 0.0) {
            return invalid("basis prior variance must be positive");
        }
        Ok(())
    }

    fn extended_knots(&self) -> Vec<f64> {
        let d = self.degree;
        let first = self.knot_times[0];
        let last = *self.knot_times.last().unwrap();
        let mut k = vec![first; d];
        k.extend_from_slice(&self.knot_times);
        k.extend(std::iter::repeat_n(last, d));
        k
    }

    /// Values of all `p` basis functions at `t` (zero outside the knot span).
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let p = self.len();
        let mut row = vec![0.0; p];
        let first = self.knot_times[0];
        let last = *self.knot_times.last().unwrap();
        if t < first - TIME_TOL || t > last + TIME_TOL {
            return row;
        }
        let t = t.clamp(first, last);
        let d = self.degree;
        let knots = self.extended_knots();
        // span s with knots[s] <= t < knots[s + 1], restricted to non-degenerate spans
        let n_breaks = self.knot_times.len();
        let piece = match self.knot_times.partition_point(|&x| x <= t) {
            0 => 0,
            i if i >= n_breaks => n_breaks - 2,
            i => i - 1,
        };
        let span = piece + d;

        let mut basis = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        basis[0] = 1.0;
        for j in 1..=d {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { basis[r] / denom } else { 0.0 };
                basis[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            basis[j] = saved;
        }
        for (r, b) in basis.into_iter().enumerate() {
            row[span - d + r] = b;
        }
        row
    }
}

/// `W` with one row per grid time and one column per basis function.
pub fn basis_matrix(spec: &BasisSpec, grid: &TrajectoryGrid) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let first = spec.knot_times[0];
    let last = *spec.knot_times.last().unwrap();
    if first < grid.start() - TIME_TOL || last > grid.end() + TIME_TOL {
        return invalid(format!(
            "knots [{first}, {last}] fall outside grid span [{}, {}]",
            grid.start(),
            grid.end()
        ));
    }
    let p = spec.len();
    let mut w = DMatrix::zeros(grid.len(), p);
    for (j, &t) in grid.times().iter().enumerate() {
        for (c, v) in spec.evaluate(t).into_iter().enumerate() {
            w[(j, c)] = v;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_is_one_hot() {
        let grid = TrajectoryGrid::build(0.0, 1.0, 11).unwrap();
        let spec = BasisSpec::uniform(0.0, 1.0, 1, 0, 1.0);
        let w = basis_matrix(&spec, &grid).unwrap();
        assert_eq!(w.ncols(), 2);
        for j in 0..grid.len() {
            let row: Vec<f64> = w.row(j).iter().copied().collect();
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&x| x == 0.0).count(), 1);
            let expected = if grid.times()[j] < 0.5 { 0 } else { 1 };
            assert_eq!(row[expected], 1.0);
        }
    }

    #[test]
    fn cubic_partition_of_unity() {
        let grid = TrajectoryGrid::new((0..=237).map(|i| (i as f64 * 0.731).sqrt()).collect()).unwrap();
        let spec = BasisSpec::uniform(grid.start(), grid.end(), 7, 3, 1.0);
        let w = basis_matrix(&spec, &grid).unwrap();
        assert_eq!(w.ncols(), 11);
        for j in 0..grid.len() {
            assert!((w.row(j).sum() - 1.0).abs() < 1e-10, "row {j}");
            assert!(w.row(j).iter().all(|&x| x >= -1e-15));
        }
    }

    #[test]
    fn constant_is_representable() {
        let grid = TrajectoryGrid::build(0.0, 24.0, 97).unwrap();
        let spec = BasisSpec::uniform(0.0, 24.0, 5, 3, 1.0);
        let w = basis_matrix(&spec, &grid).unwrap();
        let target = nalgebra::DVector::from_element(grid.len(), 0.7);
        let svd = w.clone().svd(true, true);
        let alpha = svd.solve(&target, 1e-14).unwrap();
        let resid = (&w * alpha - target).norm();
        assert!(resid < 1e-10, "residual {resid}");
    }

    #[test]
    fn partial_knot_span_and_errors() {
        let grid = TrajectoryGrid::build(0.0, 10.0, 11).unwrap();
        let spec = BasisSpec::uniform(2.0, 8.0, 2, 3, 1.0);
        let w = basis_matrix(&spec, &grid).unwrap();
        for (j, &t) in grid.times().iter().enumerate() {
            let s = w.row(j).sum();
            if (2.0..=8.0).contains(&t) {
                assert!((s - 1.0).abs() < 1e-10);
            } else {
                assert_eq!(s, 0.0);
            }
        }
        let outside = BasisSpec::uniform(-1.0, 8.0, 2, 3, 1.0);
        assert!(basis_matrix(&outside, &grid).is_err());
        let empty = BasisSpec {
            knot_times: vec![1.0],
            degree: 0,
            prior_variance: 1.0,
        };
        assert!(basis_matrix(&empty, &grid).is_err());
    }
}
