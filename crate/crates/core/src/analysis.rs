//! Single-dataset workflow: fit an AID to telemetry, impute `K` paths on a dense
//! grid, run process-imputation chains for the time-varying attraction model and
//! summarise them. Also selects the basis prior variance by DIC.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::aid::{draw_gp_paths, draw_ou_paths, fit_gp_aid, ImputationSet};
use crate::basis::{basis_matrix, BasisSpec};
use crate::chain::ChainOutput;
use crate::error::{invalid, Result};
use crate::evaluate::{band_from_draws, equal_tailed_interval, gelman_rubin, imputation_dic, Dic, IntervalBand, MIN_BAND_SAMPLES};
use crate::experiments::replicate::fit_ou_lenient;
use crate::experiments::AidKind;
use crate::grid::{Point, PriorSpec, Telemetry, TrajectoryGrid};
use crate::impute::{beta_draws, run_chains, ImputationConfig, ProcessModel};
use crate::parallel;
use crate::seed::{derive_seed, indexed_seed};
use crate::stats::quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub aid: AidKind,
    pub k: usize,
    pub center: Point,
    pub priors: PriorSpec,
    pub interior_knots: usize,
    pub degree: usize,
    pub prior_variance: f64,
    /// Equally spaced points over the observation span, merged with the observation times.
    pub grid_points: usize,
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub proposal_scale: f64,
    pub initial_sigma_v_sq: f64,
    pub chains: usize,
    pub level: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            aid: AidKind::Ou,
            k: 128,
            center: Point::new(0.0, 0.0),
            priors: PriorSpec::default(),
            interior_knots: 8,
            degree: 3,
            prior_variance: 10f64.powf(-1.75),
            grid_points: 1000,
            iterations: 10_000,
            burn_in: None,
            proposal_scale: 0.2,
            initial_sigma_v_sq: 1.0,
            chains: 2,
            level: 0.95,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return invalid("K must be at least 1");
        }
        if self.chains == 0 {
            return invalid("at least one chain is required");
        }
        if self.grid_points < 2 {
            return invalid("the imputation grid needs at least 2 points");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return invalid("level must lie in (0, 1)");
        }
        self.imputation_config(0.0, 1.0).validate()
    }

    pub fn basis(&self, start: f64, end: f64) -> BasisSpec {
        BasisSpec::uniform(start, end, self.interior_knots, self.degree, self.prior_variance)
    }

    fn imputation_config(&self, start: f64, end: f64) -> ImputationConfig {
        ImputationConfig {
            model: ProcessModel::Velocity {
                center: self.center,
                basis: self.basis(start, end),
            },
            priors: self.priors,
            iterations: self.iterations,
            burn_in: self.burn_in,
            proposal_scale: self.proposal_scale,
            initial_sigma_v_sq: self.initial_sigma_v_sq,
        }
    }
}

/// Imputed paths ready for sampling.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub set: ImputationSet,
    pub config: ImputationConfig,
    pub w: DMatrix<f64>,
}

/// Fit the AID and draw `K` paths on the dense grid.
pub fn prepare(data: &Telemetry, cfg: &FitConfig, seed: u64) -> Result<Prepared> {
    cfg.validate()?;
    if data.len() < 4 {
        return invalid(format!("at least 4 observations are required, got {}", data.len()));
    }
    let times = data.times();
    let (start, end) = (times[0], times[times.len() - 1]);
    let (grid, _) = TrajectoryGrid::build(start, end, cfg.grid_points)?.merge(times)?;
    let draw_seed = derive_seed(seed, &["draws"]);
    let set = match cfg.aid {
        AidKind::Ou => draw_ou_paths(&fit_ou_lenient(data, "fit")?, data, &grid, cfg.k, draw_seed)?,
        AidKind::Gp => draw_gp_paths(&fit_gp_aid(data)?, data, &grid, cfg.k, draw_seed)?,
    };
    let config = cfg.imputation_config(start, end);
    let ProcessModel::Velocity { basis, .. } = &config.model else {
        unreachable!("the analysis always uses the velocity model")
    };
    let w = basis_matrix(basis, &grid)?;
    Ok(Prepared { set, config, w })
}

/// Posterior median and equal-tailed interval of one scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub parameter: String,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub prepared: Prepared,
    pub chains: Vec<ChainOutput>,
    pub band: IntervalBand,
    pub beta_median: Vec<f64>,
    pub summaries: Vec<ParamSummary>,
    pub psrf: BTreeMap<String, f64>,
    pub dic: Dic,
}

/// Pool retained draws of the same parameter across chains.
fn pooled(chains: &[ChainOutput], name: &str) -> Result<Vec<f64>> {
    let mut all = Vec::new();
    for c in chains {
        all.extend(c.parameter(name)?);
    }
    Ok(all)
}

pub fn fit(data: &Telemetry, cfg: &FitConfig, seed: u64) -> Result<FitResult> {
    let prepared = prepare(data, cfg, seed)?;
    let chains = run_chains(&prepared.set, data, &prepared.config, cfg.chains, derive_seed(seed, &["mcmc"]))?;
    let per_chain = chains.iter().map(|c| beta_draws(c, &prepared.w)).collect::<Result<Vec<_>>>()?;
    let rows: usize = per_chain.iter().map(|d| d.nrows()).sum();
    if rows < MIN_BAND_SAMPLES {
        return invalid(format!("a band needs at least {MIN_BAND_SAMPLES} retained samples"));
    }
    let m = prepared.w.nrows();
    let mut draws = DMatrix::zeros(rows, m);
    let mut offset = 0;
    for d in &per_chain {
        draws.rows_mut(offset, d.nrows()).copy_from(d);
        offset += d.nrows();
    }
    let band = band_from_draws(&draws, prepared.set.grid.times(), cfg.level)?;
    let beta_median = (0..m)
        .map(|j| quantile(&draws.column(j).iter().copied().collect::<Vec<_>>(), 0.5))
        .collect();

    let mut summaries = Vec::new();
    for name in ["sigma_s", "sigma_v", "sigma_s_sq", "sigma_v_sq"] {
        let v = pooled(&chains, name)?;
        let (lower, upper) = equal_tailed_interval(&v, cfg.level)?;
        summaries.push(ParamSummary {
            parameter: name.into(),
            median: quantile(&v, 0.5),
            lower,
            upper,
        });
    }
    let mut psrf = BTreeMap::new();
    if chains.len() >= 2 {
        let p = chains[0].alpha.first().map_or(0, Vec::len);
        let mut names: Vec<String> = vec!["sigma_v_sq".into(), "sigma_s_sq".into()];
        names.extend((0..p).map(|i| format!("alpha[{i}]")));
        for name in names {
            psrf.insert(name.clone(), gelman_rubin(&chains, &name)?);
        }
    }
    let dic = imputation_dic(&chains[0], &prepared.set, &prepared.config)?;
    Ok(FitResult {
        prepared,
        chains,
        band,
        beta_median,
        summaries,
        psrf,
        dic,
    })
}

/// `10^{i/4}` for `i = -16..=12`.
pub fn default_prior_variance_grid() -> Vec<f64> {
    (-16..=12).map(|i| 10f64.powf(i as f64 / 4.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    pub prior_variance: f64,
    pub dic: Dic,
}

/// DIC of one chain per candidate prior variance, all on the same imputed paths.
pub fn select_prior_variance(data: &Telemetry, cfg: &FitConfig, candidates: &[f64], seed: u64) -> Result<(Vec<TuningPoint>, usize)> {
    if candidates.is_empty() || candidates.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return invalid("candidate prior variances must be positive");
    }
    let prepared = prepare(data, cfg, seed)?;
    let chain_seed = derive_seed(seed, &["tuning"]);
    let points = parallel::try_map_indexed(candidates.len(), |i| {
        let mut config = prepared.config.clone();
        if let ProcessModel::Velocity { basis, .. } = &mut config.model {
            basis.prior_variance = candidates[i];
        }
        // same chain seed for every candidate keeps the comparison paired
        let chain = crate::impute::run_process_imputation(&prepared.set, data, &config, indexed_seed(chain_seed, 0))?;
        Ok::<_, crate::Error>(TuningPoint {
            prior_variance: candidates[i],
            dic: imputation_dic(&chain, &prepared.set, &config)?,
        })
    })?;
    let best = (0..points.len())
        .min_by(|&a, &b| points[a].dic.dic.total_cmp(&points[b].dic.dic))
        .expect("non-empty candidate list");
    Ok((points, best))
}
