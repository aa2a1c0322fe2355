mod common;

use std::collections::BTreeMap;

use movimpute::analysis::{default_prior_variance_grid, select_prior_variance, FitConfig};
use movimpute::chain::{ChainOutput, Method};
use movimpute::evaluate::{band_from_chain, band_from_draws, gelman_rubin, scalar_coverage, MIN_BAND_SAMPLES};
use movimpute::experiments::VelocityDesign;
use movimpute::seed::rng_from_seed;
use movimpute::simulate::{observe, simulate_sde2, ObsParams, Sde2Params};
use movimpute::potential::{AttractorPotential, Strength};
use movimpute::stats::std_normal;
use movimpute::{Error, TrajectoryGrid};
use nalgebra::DMatrix;

fn scalar_chain(beta: Vec<f64>) -> ChainOutput {
    let n = beta.len();
    ChainOutput {
        method: Method::Exact,
        iterations: n,
        burn_in: 0,
        alpha: Vec::new(),
        sigma_v_sq: Vec::new(),
        sigma_s_sq: Vec::new(),
        beta,
        selected: Vec::new(),
        deviance: Vec::new(),
        acceptance: BTreeMap::new(),
        metadata: serde_json::Value::Null,
    }
}

#[test]
fn gaussian_band_is_mean_plus_minus_1_96_sd() {
    let mut rng = rng_from_seed(1);
    let (mu, sd) = (2.0, 0.5);
    let draws = DMatrix::from_fn(100_000, 1, |_, _| mu + sd * std_normal(&mut rng));
    let band = band_from_draws(&draws, &[0.0], 0.95).unwrap();
    let (lo, hi) = (mu - 1.959964 * sd, mu + 1.959964 * sd);
    assert!((band.lower[0] / lo - 1.0).abs() < 0.05);
    assert!((band.upper[0] / hi - 1.0).abs() < 0.05);
}

#[test]
fn scalar_interval_covers_about_95_percent() {
    let mut rng = rng_from_seed(2);
    let reps = 2000;
    let hits = (0..reps)
        .filter(|_| {
            // posterior N(y, 1) after observing y ~ N(0, 1)
            let y = std_normal(&mut rng);
            let chain = scalar_chain((0..400).map(|_| y + std_normal(&mut rng)).collect());
            scalar_coverage(&chain, "beta", 0.0, 0.95).unwrap()
        })
        .count();
    let rate = hits as f64 / reps as f64;
    // the finite-sample interval itself is random, so allow for that on top of binomial noise
    assert!((rate - 0.95).abs() < 0.02, "coverage {rate}");
    assert!(scalar_coverage(&scalar_chain(vec![0.3; 10]), "beta", 0.3, 0.95).unwrap());
    assert!(!scalar_coverage(&scalar_chain(vec![0.3; 10]), "beta", 5.0, 0.95).unwrap());
}

#[test]
fn band_needs_enough_samples() {
    let mut chain = scalar_chain(vec![0.0; MIN_BAND_SAMPLES - 1]);
    chain.alpha = vec![vec![1.0]; MIN_BAND_SAMPLES - 1];
    let w = DMatrix::from_element(3, 1, 1.0);
    assert!(matches!(band_from_chain(&chain, &w, &[0.0, 1.0, 2.0], 0.95), Err(Error::Validation(_))));
}

/// AR(1) chains with a N(0, 1) stationary law.
#[test]
fn psrf_of_converged_chains_is_near_one() {
    let chains: Vec<ChainOutput> = (0..2u64)
        .map(|c| {
            let mut rng = rng_from_seed(10 + c);
            let rho: f64 = 0.5;
            let mut x = 0.0;
            scalar_chain(
                (0..10_000)
                    .map(|_| {
                        x = rho * x + (1.0 - rho * rho).sqrt() * std_normal(&mut rng);
                        x
                    })
                    .collect(),
            )
        })
        .collect();
    let r = gelman_rubin(&chains, "beta").unwrap();
    assert!(r < 1.1, "psrf {r}");
    let shifted = vec![chains[0].clone(), scalar_chain(chains[1].beta.iter().map(|b| b + 3.0).collect())];
    assert!(gelman_rubin(&shifted, "beta").unwrap() > 1.1);
}

#[test]
fn prior_variance_grid_spans_quarter_decades() {
    let g = default_prior_variance_grid();
    assert_eq!(g.len(), 29);
    assert!((g[0] - 1e-4).abs() < 1e-18 && (g[28] - 1e3).abs() < 1e-9);
    assert!(g.iter().any(|v| (v.log10() + 1.75).abs() < 1e-12));
}

#[test]
fn dic_has_interior_minimum_for_smooth_attraction() {
    let design = VelocityDesign::default();
    let obs_times: Vec<f64> = (0..=240).map(|i| design.duration * i as f64 / 240.0).collect();
    let (grid, _) = TrajectoryGrid::build(0.0, design.duration, 1000).unwrap().merge(&obs_times).unwrap();
    let beta: Vec<f64> = grid.times().iter().map(|&t| design.beta_at(t)).collect();
    let truth = simulate_sde2(
        &Sde2Params {
            sigma_v: design.sigma_v_sq.sqrt(),
            potential: AttractorPotential::new(design.center, Strength::Grid(beta)),
            initial_position: design.initial_position,
            initial_velocity: design.initial_velocity,
            zero_noise: false,
        },
        &grid,
        5,
    )
    .unwrap();
    let data = observe(&truth, &obs_times, &ObsParams { sigma_s_sq: 1e-4, exact: false }, 6).unwrap();
    let cfg = FitConfig {
        k: 8,
        grid_points: 500,
        iterations: 3000,
        interior_knots: 12,
        chains: 1,
        ..FitConfig::default()
    };
    let candidates: Vec<f64> = (-8..=6).step_by(2).map(|i| 10f64.powi(i)).collect();
    let (points, best) = select_prior_variance(&data, &cfg, &candidates, 7).unwrap();
    let dics: Vec<f64> = points.iter().map(|p| p.dic.dic).collect();
    assert!(best > 0 && best < candidates.len() - 1, "DIC path {dics:?}");
}
