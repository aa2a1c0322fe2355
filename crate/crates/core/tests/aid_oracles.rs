use movimpute::aid::gp::{draw_gp_paths, gp_conditional, GpAidParams};
use movimpute::aid::ou::{draw_ou_paths, fit_ou_aid, kalman_filter, ou_log_likelihood, ou_smoothed_mean, simulate_integrated_ou, OuAidParams};
use movimpute::stats::{mean, sample_variance, LN_2PI};
use movimpute::{Point, Telemetry, TrajectoryGrid};
use nalgebra::{DMatrix, DVector};

fn ou_params() -> OuAidParams {
    OuAidParams {
        ou_autocorrelation: 0.8,
        ou_sigma: 1.3,
        obs_variance: 0.05,
        initial_position: Point::new(1.0, -2.0),
        initial_position_variance: 2.0,
    }
}

/// Position covariance of integrated stationary OU velocity started at `t0`, by
/// integrating `sigma²/(2 theta) exp(-theta |u - w|)` over both time intervals.
fn integrated_ou_cov(p: &OuAidParams, t: f64, s: f64) -> f64 {
    let th = p.ou_autocorrelation;
    let c = p.ou_sigma * p.ou_sigma / (2.0 * th * th * th);
    p.initial_position_variance + c * (2.0 * th * t.min(s) - 1.0 + (-th * t).exp() + (-th * s).exp() - (-th * (t - s).abs()).exp())
}

fn dense_log_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = cov.clone().cholesky().unwrap();
    let r = y - mean;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n * LN_2PI + log_det + r.dot(&chol.solve(&r)))
}

#[test]
fn kalman_likelihood_equals_dense_gaussian() {
    let p = ou_params();
    let times = [0.3, 0.9, 1.0, 2.7, 4.1];
    let locs = [Point::new(1.2, -1.9), Point::new(1.9, -1.1), Point::new(2.0, -1.2), Point::new(3.5, 0.4), Point::new(2.2, 1.0)];
    let data = Telemetry::new(times.to_vec(), locs.to_vec()).unwrap();
    let n = times.len();
    let cov = DMatrix::from_fn(n, n, |i, j| integrated_ou_cov(&p, times[i] - times[0], times[j] - times[0]) + if i == j { p.obs_variance } else { 0.0 });
    let mut dense = 0.0;
    for axis in 0..2 {
        let y = DVector::from_iterator(n, locs.iter().map(|q| q[axis]));
        let m = DVector::from_element(n, p.initial_position[axis]);
        let d = dense_log_density(&y, &m, &cov);
        let obs: Vec<Option<f64>> = locs.iter().map(|q| Some(q[axis])).collect();
        let kf = kalman_filter(&p, axis, &times, &obs).log_likelihood;
        assert!((kf - d).abs() < 1e-8, "axis {axis}: {kf} vs {d}");
        dense += d;
    }
    assert!((ou_log_likelihood(&p, &data) - dense).abs() < 1e-8);
}

#[test]
fn stationary_velocity_variance_of_simulation() {
    let p = ou_params();
    let times = [0.0, 5.0];
    let vs: Vec<f64> = (0..4000u64)
        .flat_map(|seed| {
            let (_, v) = simulate_integrated_ou(&p, &times, seed)[1];
            [v.x, v.y]
        })
        .collect();
    let target = p.stationary_velocity_variance();
    let se = target * (2.0 / (vs.len() as f64 - 1.0)).sqrt();
    assert!((sample_variance(&vs) - target).abs() < 3.0 * se);
}

#[test]
fn smoother_mean_matches_average_of_draws() {
    let p = ou_params();
    let data = Telemetry::new(
        vec![0.0, 1.0, 2.5, 3.0, 5.0],
        vec![Point::new(1.0, -2.0), Point::new(2.1, -1.0), Point::new(2.4, 0.3), Point::new(2.2, 0.9), Point::new(0.8, 1.7)],
    )
    .unwrap();
    let (grid, _) = TrajectoryGrid::build(0.0, 5.0, 21).unwrap().merge(data.times()).unwrap();
    let k = 2000;
    let set = draw_ou_paths(&p, &data, &grid, k, 5).unwrap();
    let smooth = ou_smoothed_mean(&p, &data, &grid).unwrap();
    assert_eq!(set.mean.as_ref().unwrap(), &smooth);
    for j in 0..grid.len() {
        for axis in 0..2 {
            let xs: Vec<f64> = set.draws.iter().map(|d| d.positions[j][axis]).collect();
            let se = (sample_variance(&xs) / k as f64).sqrt();
            let diff = (mean(&xs) - smooth.positions[j][axis]).abs();
            assert!(diff < 3.0 * se, "grid point {j} axis {axis}: diff {diff} se {se}");
        }
    }
}

#[test]
fn noise_free_draws_pass_through_observations() {
    let p = OuAidParams { obs_variance: 0.0, ..ou_params() };
    let data = Telemetry::new(vec![0.0, 1.0, 2.0, 3.0], vec![Point::new(0.0, 0.0), Point::new(1.0, 0.5), Point::new(1.5, 1.5), Point::new(1.0, 2.5)]).unwrap();
    let (grid, idx) = TrajectoryGrid::build(0.0, 3.0, 13).unwrap().merge(data.times()).unwrap();
    let set = draw_ou_paths(&p, &data, &grid, 20, 1).unwrap();
    for d in &set.draws {
        for (i, &j) in idx.iter().enumerate() {
            assert!((d.positions[j] - data.locations()[i]).norm() < 1e-6);
        }
    }
}

#[test]
fn fitted_ou_parameters_are_self_consistent() {
    let truth = OuAidParams {
        ou_autocorrelation: 0.5,
        ou_sigma: 1.0,
        obs_variance: 0.04,
        initial_position: Point::zeros(),
        initial_position_variance: 1.0,
    };
    let times: Vec<f64> = (0..300).map(|i| i as f64 * 0.5).collect();
    let fits: Vec<OuAidParams> = (0..20u64)
        .map(|rep| {
            let sim = simulate_integrated_ou(&truth, &times, 100 + rep);
            let mut noise = movimpute::seed::rng_from_seed(900 + rep);
            let locs = sim.iter().map(|(x, _)| x + movimpute::stats::std_normal2(&mut noise) * truth.obs_variance.sqrt()).collect();
            fit_ou_aid(&Telemetry::new(times.clone(), locs).unwrap()).unwrap()
        })
        .collect();
    let checks: [(&str, fn(&OuAidParams) -> f64); 3] = [
        ("theta", |p| p.ou_autocorrelation),
        ("sigma", |p| p.ou_sigma),
        ("tau2", |p| p.obs_variance),
    ];
    for (name, get) in checks {
        let est: Vec<f64> = fits.iter().map(get).collect();
        let se = (sample_variance(&est) / est.len() as f64).sqrt();
        let gap = (mean(&est) - get(&truth)).abs();
        assert!(gap < 3.0 * se, "{name}: mean {} truth {} se {se}", mean(&est), get(&truth));
    }
}

fn gp_params() -> GpAidParams {
    GpAidParams {
        range: 1.5,
        amplitude: 4.0,
        obs_variance: 0.1,
        mean: Point::new(0.5, -0.5),
    }
}

#[test]
fn gp_draw_covariance_matches_conditional() {
    let p = gp_params();
    let data = Telemetry::new(vec![0.0, 1.0, 3.0, 4.0], vec![Point::new(0.0, 0.0), Point::new(1.0, 0.5), Point::new(2.0, 0.0), Point::new(1.0, -1.0)]).unwrap();
    let grid = TrajectoryGrid::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
    let (to, tg) = (data.times(), grid.times());
    let k = |a: f64, b: f64| p.amplitude * (-(a - b) * (a - b) / (2.0 * p.range * p.range)).exp();
    let koo = DMatrix::from_fn(4, 4, |i, j| k(to[i], to[j]) + if i == j { p.obs_variance } else { 0.0 });
    let kog = DMatrix::from_fn(4, 5, |i, j| k(to[i], tg[j]));
    let kgg = DMatrix::from_fn(5, 5, |i, j| k(tg[i], tg[j]));
    let analytic = &kgg - kog.transpose() * koo.try_inverse().unwrap() * &kog;

    let cond = gp_conditional(&p, &data, &grid).unwrap();
    assert!((&cond.covariance - &analytic).amax() < 1e-10);

    let n = 2000;
    let set = draw_gp_paths(&p, &data, &grid, n, 3).unwrap();
    for axis in 0..2 {
        let x = DMatrix::from_fn(n, 5, |r, j| set.draws[r].positions[j][axis] - cond.mean[axis][j]);
        let emp = x.transpose() * &x / n as f64;
        for i in 0..5 {
            for j in 0..5 {
                let se = ((analytic[(i, i)] * analytic[(j, j)] + analytic[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((emp[(i, j)] - analytic[(i, j)]).abs() < 3.0 * se, "axis {axis} entry ({i},{j})");
            }
        }
    }
}

#[test]
fn gp_draws_on_dense_grid_factorize() {
    let p = GpAidParams { obs_variance: 0.0, ..gp_params() };
    let data = Telemetry::new(vec![0.0, 2.0, 4.0, 6.0], vec![Point::new(0.0, 0.0), Point::new(1.0, 0.5), Point::new(2.0, 0.0), Point::new(1.0, -1.0)]).unwrap();
    let (grid, _) = TrajectoryGrid::build(0.0, 6.0, 400).unwrap().merge(data.times()).unwrap();
    let set = draw_gp_paths(&p, &data, &grid, 3, 8).unwrap();
    assert_eq!(set.k(), 3);
    assert!(set.draws.iter().all(|d| d.positions.iter().all(|q| q.x.is_finite() && q.y.is_finite())));
}
