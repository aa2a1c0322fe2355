//! Process-imputation MCMC: at every iteration one imputed path is chosen uniformly
//! at random and the model parameters are updated conditional on it. Pooled draws
//! approximate the posterior given the telemetry alone.

pub mod combine;
pub mod likelihood;
pub mod updates;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aid::ImputationSet;
use crate::basis::{basis_matrix, BasisSpec};
use crate::chain::{ChainOutput, Method};
use crate::error::{invalid, Result};
use crate::grid::{Point, PriorSpec, Telemetry};
use crate::parallel;
use crate::seed::{indexed_seed, rng_from_seed};

pub use combine::combine_moments;
pub use likelihood::{complete_data_loglik, drift_loglik, DriftStats, ProcessParams, ResidualStats, VelocityStats};
pub use updates::{
    alpha_conditional, beta_conditional, sigma_s_posterior, update_alpha, update_beta, update_sigma_s_sq, update_sigma_v_sq,
};

/// Prior variance of a constant attraction strength.
pub const BETA_PRIOR_VARIANCE: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessModel {
    /// Second-order model with time-varying attraction `beta(t) = W alpha`.
    Velocity { center: Point, basis: BasisSpec },
    /// First-order model with a constant attraction strength.
    Drift { center: Point, beta_prior_variance: f64 },
}

impl ProcessModel {
    pub fn center(&self) -> Point {
        match self {
            ProcessModel::Velocity { center, .. } | ProcessModel::Drift { center, .. } => *center,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    pub model: ProcessModel,
    pub priors: PriorSpec,
    pub iterations: usize,
    /// Defaults to half of `iterations`.
    pub burn_in: Option<usize>,
    /// Standard deviation of the random-walk step on `log sigma_v²`.
    pub proposal_scale: f64,
    pub initial_sigma_v_sq: f64,
}

impl ImputationConfig {
    pub fn new(model: ProcessModel, iterations: usize) -> Self {
        Self {
            model,
            priors: PriorSpec::default(),
            iterations,
            burn_in: None,
            proposal_scale: 0.2,
            initial_sigma_v_sq: 1.0,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 2)
    }

    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        if self.iterations < 2 {
            return invalid("at least 2 iterations are required");
        }
        if self.burn_in() >= self.iterations {
            return invalid("burn-in must be shorter than the chain");
        }
        if !(self.proposal_scale >= 0.0 && self.proposal_scale.is_finite()) {
            return invalid("proposal_scale must be finite and non-negative");
        }
        if !(self.initial_sigma_v_sq > 0.0 && self.initial_sigma_v_sq.is_finite()) {
            return invalid("initial_sigma_v_sq must be positive");
        }
        match &self.model {
            ProcessModel::Velocity { basis, .. } => basis.validate(),
            ProcessModel::Drift { beta_prior_variance, .. } if !(*beta_prior_variance > 0.0) => {
                invalid("beta prior variance must be positive")
            }
            ProcessModel::Drift { .. } => Ok(()),
        }
    }
}

enum PathStats {
    Velocity(Vec<VelocityStats>),
    Drift(Vec<DriftStats>),
}

/// Run one process-imputation chain.
pub fn run_process_imputation(set: &ImputationSet, data: &Telemetry, config: &ImputationConfig, seed: u64) -> Result<ChainOutput> {
    config.validate()?;
    if set.k() == 0 {
        return invalid("the imputation set is empty");
    }
    let center = config.model.center();
    let residuals = parallel::try_map_slice(&set.draws, |p| ResidualStats::new(p, data))?;
    let stats = match &config.model {
        ProcessModel::Velocity { basis, .. } => {
            let w = basis_matrix(basis, &set.grid)?;
            PathStats::Velocity(parallel::try_map_slice(&set.draws, |p| VelocityStats::new(p, &w, &center))?)
        }
        ProcessModel::Drift { .. } => PathStats::Drift(parallel::map_slice(&set.draws, |p| DriftStats::new(p, &center))),
    };
    let PriorSpec { a_s, b_s, a_v, b_v } = config.priors;
    let n = config.iterations;
    let k = set.k();
    let mut rng = rng_from_seed(seed);
    let mut out = ChainOutput {
        method: Method::Imputation,
        iterations: n,
        burn_in: config.burn_in(),
        alpha: Vec::new(),
        sigma_v_sq: Vec::new(),
        sigma_s_sq: Vec::with_capacity(n),
        beta: Vec::new(),
        selected: Vec::with_capacity(n),
        deviance: Vec::with_capacity(n),
        acceptance: BTreeMap::new(),
        metadata: serde_json::json!({
            "k": k,
            "aid": set.model.label(),
            "aid_seed": set.seed,
            "seed": seed,
            "model": config.model,
            "priors": config.priors,
            "proposal_scale": config.proposal_scale,
        }),
    };
    match (&stats, &config.model) {
        (PathStats::Velocity(vs), ProcessModel::Velocity { basis, .. }) => {
            let mut s2 = config.initial_sigma_v_sq;
            let mut accepted = 0usize;
            out.alpha.reserve(n);
            out.sigma_v_sq.reserve(n);
            for _ in 0..n {
                let sel = rng.random_range(0..k);
                let st = &vs[sel];
                let alpha = update_alpha(st, s2, basis.prior_variance, &mut rng)?;
                let (next, ok) = update_sigma_v_sq(st, &alpha, s2, config.proposal_scale, a_v, b_v, &mut rng);
                s2 = next;
                accepted += ok as usize;
                out.sigma_s_sq.push(update_sigma_s_sq(&residuals[sel], a_s, b_s, &mut rng)?);
                out.deviance.push(-2.0 * st.loglik(&alpha, s2));
                out.alpha.push(alpha.iter().copied().collect());
                out.sigma_v_sq.push(s2);
                out.selected.push(sel);
            }
            out.acceptance.insert("sigma_v_sq".into(), accepted as f64 / n as f64);
        }
        (PathStats::Drift(ds), ProcessModel::Drift { beta_prior_variance, .. }) => {
            out.beta.reserve(n);
            for _ in 0..n {
                let sel = rng.random_range(0..k);
                let beta = update_beta(&ds[sel], *beta_prior_variance, &mut rng);
                out.sigma_s_sq.push(update_sigma_s_sq(&residuals[sel], a_s, b_s, &mut rng)?);
                out.deviance.push(-2.0 * ds[sel].loglik(beta));
                out.beta.push(beta);
                out.selected.push(sel);
            }
        }
        _ => unreachable!("statistics are built from the configured model"),
    }
    Ok(out)
}

/// Independent chains with seeds derived from `seed`, run concurrently.
pub fn run_chains(set: &ImputationSet, data: &Telemetry, config: &ImputationConfig, chains: usize, seed: u64) -> Result<Vec<ChainOutput>> {
    if chains == 0 {
        return invalid("at least one chain is required");
    }
    parallel::try_map_indexed(chains, |c| run_process_imputation(set, data, config, indexed_seed(seed, c)))
}

/// Retained draws of `beta(t_j) = W_j alpha` as a `draws × m` matrix.
pub fn beta_draws(chain: &ChainOutput, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let retained = chain.retained(&chain.alpha);
    if retained.is_empty() {
        return invalid("chain carries no alpha samples");
    }
    if retained[0].len() != w.ncols() {
        return invalid("basis does not match the chain's alpha dimension");
    }
    let a = DMatrix::from_fn(w.ncols(), retained.len(), |i, s| retained[s][i]);
    Ok((w * a).transpose())
}
