use movimpute::potential::{AttractorPotential, Potential, Strength};
use movimpute::seed::rng_from_seed;
use movimpute::simulate::{observe, sde1_mean_step, simulate_sde1, simulate_sde2, ObsParams, Sde1Params, Sde2Params};
use movimpute::stats::{mean, sample_variance};
use movimpute::{Point, TrajectoryGrid};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn central_difference(pot: &AttractorPotential, mu: &Point, h: f64) -> Point {
    let dx = Point::new(h, 0.0);
    let dy = Point::new(0.0, h);
    Point::new(
        (pot.value(&(mu + dx), 0) - pot.value(&(mu - dx), 0)) / (2.0 * h),
        (pot.value(&(mu + dy), 0) - pot.value(&(mu - dy), 0)) / (2.0 * h),
    )
}

#[test]
fn gradient_matches_finite_differences_at_random_points() {
    let mut rng = rng_from_seed(11);
    for _ in 0..100 {
        let center = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let beta = rng.random_range(-2.0..2.0);
        let mut mu = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        if (mu - center).norm() < 1e-2 {
            mu += Point::new(0.5, 0.5);
        }
        let pot = AttractorPotential::new(center, Strength::Scalar(beta));
        let fd = central_difference(&pot, &mu, 1e-5);
        assert!((pot.gradient(&mu, 0) - fd).norm() < 1e-6, "mu {mu:?} c {center:?}");
    }
}

proptest! {
    #[test]
    fn gradient_norm_is_strength(beta in -3.0f64..3.0, x in -10.0f64..10.0, y in -10.0f64..10.0) {
        prop_assume!(x.hypot(y) > 1e-6);
        let pot = AttractorPotential::new(Point::zeros(), Strength::Grid(vec![beta]));
        let g = pot.gradient(&Point::new(x, y), 0);
        prop_assert!((g.norm() - beta.abs()).abs() < 1e-12);
        // positive strength pushes velocity toward the center
        prop_assert!(-g.dot(&Point::new(x, y)) * beta.signum() <= 1e-12);
    }
}

#[test]
fn free_velocity_reaches_stationary_variance() {
    let m = 100_001;
    let dt = 0.05;
    let grid = TrajectoryGrid::build(0.0, dt * (m - 1) as f64, m).unwrap();
    let sigma_v = 1.0;
    let params = Sde2Params {
        sigma_v,
        potential: AttractorPotential::new(Point::zeros(), Strength::Scalar(0.0)),
        initial_position: Point::zeros(),
        initial_velocity: Point::zeros(),
        zero_noise: false,
    };
    let path = simulate_sde2(&params, &grid, 7).unwrap();
    let v = path.velocities.unwrap();
    for axis in 0..2 {
        let xs: Vec<f64> = v[1000..].iter().map(|p| p[axis]).collect();
        let var = sample_variance(&xs);
        assert!((var / (sigma_v / 2.0) - 1.0).abs() < 0.10, "axis {axis} variance {var}");
    }
}

#[test]
fn drift_free_first_order_model_is_brownian() {
    let m = 50_001;
    let grid = TrajectoryGrid::build(0.0, 500.0, m).unwrap();
    let params = Sde1Params {
        beta: 0.0,
        center: Point::zeros(),
        sigma0_sq: 1.0,
    };
    let path = simulate_sde1(&params, &grid, 3).unwrap();
    let dt = grid.dt(1);
    let incs: Vec<f64> = path.positions.windows(2).flat_map(|w| [w[1].x - w[0].x, w[1].y - w[0].y]).collect();
    assert_eq!(incs.len(), 100_000);
    assert!((sample_variance(&incs) / dt - 1.0).abs() < 0.05);
}

/// Standardized transition residuals of the first-order model are iid N(0, 1).
#[test]
fn first_order_transitions_pass_kolmogorov_smirnov() {
    let grid = TrajectoryGrid::new((0..=2000).map(|i| (i as f64 * 0.37).sqrt() * 3.0).collect()).unwrap();
    let params = Sde1Params {
        beta: 1.3,
        center: Point::new(2.0, -1.0),
        sigma0_sq: 100.0,
    };
    let path = simulate_sde1(&params, &grid, 99).unwrap();
    let mut z = Vec::new();
    for i in 1..path.len() {
        let dt = grid.dt(i);
        let r = (path.positions[i] - sde1_mean_step(&path.positions[i - 1], params.beta, &params.center, dt)) / dt.sqrt();
        z.extend([r.x, r.y]);
    }
    z.sort_by(|a, b| a.total_cmp(b));
    let n = z.len() as f64;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let d = z
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal.cdf(*x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn observation_noise_variance() {
    let grid = TrajectoryGrid::build(0.0, 1.0, 10_000).unwrap();
    let params = Sde1Params {
        beta: 0.0,
        center: Point::zeros(),
        sigma0_sq: 1.0,
    };
    let path = simulate_sde1(&params, &grid, 1).unwrap();
    let sigma_s_sq = 0.04;
    let tel = observe(&path, grid.times(), &ObsParams { sigma_s_sq, exact: false }, 2).unwrap();
    let resid: Vec<f64> = tel.locations().iter().zip(&path.positions).map(|(s, m)| (s - m).x).collect();
    assert!(mean(&resid).abs() < 4.0 * (sigma_s_sq / 1e4).sqrt());
    assert!((sample_variance(&resid) / sigma_s_sq - 1.0).abs() < 0.05);
}
