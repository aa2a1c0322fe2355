//! Interval coverage, detection, convergence and model-comparison summaries.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aid::ImputationSet;
use crate::basis::basis_matrix;
use crate::chain::ChainOutput;
use crate::error::{invalid, Result};
use crate::impute::{beta_draws, DriftStats, ImputationConfig, ProcessModel, VelocityStats};
use crate::parallel;
use crate::stats::{mean, quantile_sorted, sample_variance};

/// Minimum retained draws for a pointwise band.
pub const MIN_BAND_SAMPLES: usize = 100;

/// Pointwise equal-tailed credible band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBand {
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// Equal-tailed interval of `samples` (type-7 quantiles).
pub fn equal_tailed_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return invalid("no samples for an interval");
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid("level must lie in (0, 1)");
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail)))
}

/// Band from a `draws × m` matrix of function values.
pub fn band_from_draws(draws: &DMatrix<f64>, times: &[f64], level: f64) -> Result<IntervalBand> {
    if draws.ncols() != times.len() {
        return invalid("draw matrix does not match the time grid");
    }
    let mut lower = Vec::with_capacity(times.len());
    let mut upper = Vec::with_capacity(times.len());
    for j in 0..draws.ncols() {
        let col: Vec<f64> = draws.column(j).iter().copied().collect();
        let (lo, hi) = equal_tailed_interval(&col, level)?;
        lower.push(lo);
        upper.push(hi);
    }
    Ok(IntervalBand {
        times: times.to_vec(),
        lower,
        upper,
        level,
    })
}

/// Band for `beta(t_j) = W_j alpha` from the retained chain draws.
pub fn band_from_chain(chain: &ChainOutput, w: &DMatrix<f64>, times: &[f64], level: f64) -> Result<IntervalBand> {
    if chain.retained_len() < MIN_BAND_SAMPLES {
        return invalid(format!("a band needs at least {MIN_BAND_SAMPLES} retained samples"));
    }
    band_from_draws(&beta_draws(chain, w)?, times, level)
}

/// Fraction of grid times where the band covers the truth, and where it covers the
/// truth while strictly excluding zero.
pub fn coverage_detection(band: &IntervalBand, truth: &[f64]) -> Result<(f64, f64)> {
    if truth.len() != band.lower.len() || truth.is_empty() {
        return invalid("truth and band lengths differ");
    }
    let (mut covered, mut detected) = (0usize, 0usize);
    for ((lo, hi), t) in band.lower.iter().zip(&band.upper).zip(truth) {
        if lo <= t && t <= hi {
            covered += 1;
            if *lo > 0.0 || *hi < 0.0 {
                detected += 1;
            }
        }
    }
    let m = truth.len() as f64;
    Ok((covered as f64 / m, detected as f64 / m))
}

pub fn scalar_coverage(chain: &ChainOutput, parameter: &str, truth: f64, level: f64) -> Result<bool> {
    let (lo, hi) = equal_tailed_interval(&chain.parameter(parameter)?, level)?;
    Ok(lo <= truth && truth <= hi)
}

/// Potential scale reduction factor over the retained draws of `parameter`.
/// Returns `+inf` (with a warning) when every chain is constant.
pub fn gelman_rubin(chains: &[ChainOutput], parameter: &str) -> Result<f64> {
    let draws = chains.iter().map(|c| c.parameter(parameter)).collect::<Result<Vec<_>>>()?;
    psrf(&draws)
}

/// PSRF of equal-length sample vectors.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return invalid("the Gelman-Rubin diagnostic needs at least 2 chains");
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return invalid("chains must have equal retained lengths of at least 2");
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| sample_variance(c)).sum::<f64>() / chains.len() as f64;
    let b = n as f64 * sample_variance(&means);
    if w == 0.0 {
        log::warn!("within-chain variance is zero; PSRF is undefined and reported as infinite");
        return Ok(f64::INFINITY);
    }
    let nf = n as f64;
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub mean_deviance: f64,
    pub effective_parameters: f64,
    pub dic: f64,
}

/// `DIC = mean(D) + p_D` with `p_D = mean(D) - D(theta_bar)`.
pub fn dic_from(deviances: &[f64], deviance_at_mean: f64) -> Result<Dic> {
    if deviances.is_empty() {
        return invalid("no deviance samples");
    }
    let dbar = mean(deviances);
    let pd = dbar - deviance_at_mean;
    Ok(Dic {
        mean_deviance: dbar,
        effective_parameters: pd,
        dic: dbar + pd,
    })
}

/// DIC of a process-imputation chain. The mean deviance averages over parameters
/// and selected paths jointly; the plug-in deviance is evaluated at the posterior
/// mean parameters and averaged over the `K` imputed paths.
pub fn imputation_dic(chain: &ChainOutput, set: &ImputationSet, config: &ImputationConfig) -> Result<Dic> {
    let deviances = chain.retained(&chain.deviance);
    let center = config.model.center();
    let plug_in = match &config.model {
        ProcessModel::Velocity { basis, .. } => {
            let alpha = chain.retained(&chain.alpha);
            if alpha.is_empty() {
                return invalid("chain carries no alpha samples");
            }
            let p = alpha[0].len();
            let alpha_bar = DVector::from_fn(p, |i, _| alpha.iter().map(|a| a[i]).sum::<f64>() / alpha.len() as f64);
            let s2_bar = mean(chain.retained(&chain.sigma_v_sq));
            let w = basis_matrix(basis, &set.grid)?;
            let ds = parallel::try_map_slice(&set.draws, |path| {
                VelocityStats::new(path, &w, &center).map(|s| -2.0 * s.loglik(&alpha_bar, s2_bar))
            })?;
            mean(&ds)
        }
        ProcessModel::Drift { .. } => {
            let beta_bar = mean(chain.retained(&chain.beta));
            mean(&parallel::map_slice(&set.draws, |path| -2.0 * DriftStats::new(path, &center).loglik(beta_bar)))
        }
    };
    dic_from(deviances, plug_in)
}

/// Per-replicate evaluation summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub coverage: Option<f64>,
    pub detection: Option<f64>,
    pub covered: BTreeMap<String, bool>,
    pub psrf: BTreeMap<String, f64>,
    pub dic: Option<f64>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if let (Some(c), Some(d)) = (self.coverage, self.detection) {
            if !(0.0..=1.0).contains(&c) || !(0.0..=1.0).contains(&d) || d > c {
                return invalid("coverage/detection must be proportions with detection <= coverage");
            }
        }
        Ok(())
    }
}
