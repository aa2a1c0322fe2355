//! Potential surfaces `H(mu, t)` and their spatial gradients.

use serde::{Deserialize, Serialize};

use crate::grid::Point;

/// Attraction strength, either per grid time or constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Grid(Vec<f64>),
    Scalar(f64),
}

impl Strength {
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        match self {
            Strength::Grid(b) => b[j],
            Strength::Scalar(b) => *b,
        }
    }
}

pub trait Potential {
    fn value(&self, mu: &Point, j: usize) -> f64;
    fn gradient(&self, mu: &Point, j: usize) -> Point;
}

/// `H(mu, t_j) = beta(t_j) * ||mu - c||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorPotential {
    pub center: Point,
    pub beta: Strength,
}

impl AttractorPotential {
    pub fn new(center: Point, beta: Strength) -> Self {
        Self { center, beta }
    }
}

/// Unit vector from `c` to `mu`; zero when they coincide.
#[inline]
pub fn unit_away(mu: &Point, center: &Point) -> Point {
    let d = mu - center;
    let r = d.norm();
    if r > 0.0 {
        d / r
    } else {
        Point::zeros()
    }
}

impl Potential for AttractorPotential {
    fn value(&self, mu: &Point, j: usize) -> f64 {
        self.beta.at(j) * (mu - self.center).norm()
    }

    fn gradient(&self, mu: &Point, j: usize) -> Point {
        unit_away(mu, &self.center) * self.beta.at(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn scalar(beta: f64) -> AttractorPotential {
        AttractorPotential::new(Point::zeros(), Strength::Scalar(beta))
    }

    #[test]
    fn value_examples() {
        assert_eq!(scalar(1.0).value(&Point::new(3.0, 4.0), 0), 5.0);
        assert_eq!(scalar(0.0).value(&Point::new(-7.0, 1.5), 0), 0.0);
        let p = AttractorPotential::new(Point::new(1.0, 2.0), Strength::Scalar(-2.0));
        assert_eq!(p.value(&Point::new(1.0, 2.0), 0), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let g = scalar(1.0).gradient(&Point::new(3.0, 4.0), 0);
        assert!((g - Point::new(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(scalar(0.0).gradient(&Point::new(3.0, 4.0), 0), Point::zeros());
        assert_eq!(scalar(5.0).gradient(&Point::zeros(), 0), Point::zeros());
    }

    #[test]
    fn gradient_norm_and_direction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let betas: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = AttractorPotential::new(Point::new(0.5, -1.0), Strength::Grid(betas.clone()));
        for j in 0..100 {
            let mu = Point::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let g = p.gradient(&mu, j);
            assert!((g.norm() - betas[j].abs()).abs() < 1e-12);
            if betas[j] > 0.0 {
                assert!((-g).dot(&(p.center - mu)) > 0.0);
            }
        }
    }
}
