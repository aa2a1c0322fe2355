//! Approximate imputation distributions: fitted path models that generate the
//! imputed latent paths.

pub mod gp;
pub mod ou;

use serde::{Deserialize, Serialize};

use crate::grid::{LatentPath, TrajectoryGrid};

pub use gp::{draw_gp_paths, fit_gp_aid, GpAidParams};
pub use ou::{draw_ou_paths, fit_ou_aid, OuAidParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "aid", rename_all = "snake_case")]
pub enum AidModel {
    Ou(OuAidParams),
    Gp(GpAidParams),
    /// Paths supplied directly (e.g. the true simulated path).
    Fixed,
}

impl AidModel {
    pub fn label(&self) -> &'static str {
        match self {
            AidModel::Ou(_) => "OU",
            AidModel::Gp(_) => "GP",
            AidModel::Fixed => "fixed",
        }
    }
}

/// `K` imputed paths sharing one grid.
#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub grid: TrajectoryGrid,
    pub draws: Vec<LatentPath>,
    /// Mean path of the AID, when the model provides one.
    pub mean: Option<LatentPath>,
    pub model: AidModel,
    pub seed: u64,
}

impl ImputationSet {
    /// Wrap fixed paths (all on the same grid).
    pub fn from_paths(draws: Vec<LatentPath>) -> crate::Result<Self> {
        let Some(first) = draws.first() else {
            return crate::error::invalid("an imputation set needs K >= 1 paths");
        };
        let grid = first.grid.clone();
        if draws.iter().any(|d| d.grid != grid) {
            return crate::error::invalid("all imputed paths must share one grid");
        }
        Ok(Self {
            grid,
            draws,
            mean: None,
            model: AidModel::Fixed,
            seed: 0,
        })
    }

    /// The single-path set holding the AID mean ("posterior mean only" regime).
    pub fn mean_only(&self) -> Option<ImputationSet> {
        self.mean.as_ref().map(|m| ImputationSet {
            grid: self.grid.clone(),
            draws: vec![m.clone()],
            mean: Some(m.clone()),
            model: self.model.clone(),
            seed: self.seed,
        })
    }

    pub fn k(&self) -> usize {
        self.draws.len()
    }
}
