use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{invalid, Result};
use crate::grid::Point;
use crate::simulate::ObsParams;

/// One measurement-error × observation-frequency setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub label: String,
    pub sigma_s_sq: f64,
    pub n_obs: usize,
}

impl Regime {
    /// `{large, small}` error × `{sparse, dense}` observation.
    pub fn standard() -> Vec<Regime> {
        let mut out = Vec::new();
        for (err, s2) in [("large", ObsParams::LARGE_ERROR), ("small", ObsParams::SMALL_ERROR)] {
            for (freq, n) in [("sparse", 100), ("dense", 500)] {
                out.push(Regime {
                    label: format!("{err}_{freq}"),
                    sigma_s_sq: s2,
                    n_obs: n,
                });
            }
        }
        out
    }
}

/// How the imputed paths of one analysis are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// A single path equal to the AID mean.
    Mean,
    Draws(usize),
}

impl Imputation {
    pub fn label(&self) -> String {
        match self {
            Imputation::Mean => "mean".into(),
            Imputation::Draws(k) => k.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AidKind {
    #[serde(rename = "OU")]
    Ou,
    #[serde(rename = "GP")]
    Gp,
}

impl AidKind {
    pub fn label(&self) -> &'static str {
        match self {
            AidKind::Ou => "OU",
            AidKind::Gp => "GP",
        }
    }
}

/// Truth and model settings for the velocity-model study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityDesign {
    pub duration: f64,
    pub grid_points: usize,
    pub sigma_v_sq: f64,
    pub center: Point,
    pub initial_position: Point,
    pub initial_velocity: Point,
    /// `beta(t) = level + amplitude sin(2 pi t / duration) + trend t / duration`.
    pub beta_level: f64,
    pub beta_amplitude: f64,
    pub beta_trend: f64,
    pub interior_knots: usize,
    pub degree: usize,
    pub alpha_prior_variance: f64,
}

impl VelocityDesign {
    pub fn beta_at(&self, t: f64) -> f64 {
        let x = t / self.duration;
        self.beta_level + self.beta_amplitude * (2.0 * std::f64::consts::PI * x).sin() + self.beta_trend * x
    }

    pub fn basis(&self) -> BasisSpec {
        BasisSpec::uniform(0.0, self.duration, self.interior_knots, self.degree, self.alpha_prior_variance)
    }
}

impl Default for VelocityDesign {
    fn default() -> Self {
        Self {
            duration: 48.0,
            grid_points: 1000,
            sigma_v_sq: 0.25,
            center: Point::new(0.0, 0.0),
            initial_position: Point::new(3.0, 0.0),
            initial_velocity: Point::new(0.0, 0.0),
            beta_level: 0.2,
            beta_amplitude: 0.4,
            beta_trend: 0.0,
            interior_knots: 6,
            degree: 3,
            alpha_prior_variance: 1.0,
        }
    }
}

/// Truth and model settings for the constant-attraction study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDesign {
    pub duration: f64,
    pub grid_points: usize,
    pub beta: f64,
    pub center: Point,
    /// Variance of the simulated starting position around the origin.
    pub initial_variance: f64,
    /// Prior variance of the starting position used by the exact sampler.
    pub sigma0_sq: f64,
    pub beta_prior_variance: f64,
    pub exact_iterations: usize,
}

impl Default for DriftDesign {
    fn default() -> Self {
        Self {
            duration: 10.0,
            grid_points: 500,
            beta: 0.7,
            center: Point::new(0.0, 0.0),
            initial_variance: 1e2,
            sigma0_sq: 1e2,
            beta_prior_variance: 1e5,
            exact_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Design {
    Velocity(VelocityDesign),
    Drift(DriftDesign),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: u8,
    pub regimes: Vec<Regime>,
    pub replicates: usize,
    pub imputations: Vec<Imputation>,
    pub aids: Vec<AidKind>,
    /// Also fit the model conditioned on the true path.
    pub true_path_baseline: bool,
    /// Also run the exact sampler (constant-attraction study only).
    pub exact: bool,
    pub iterations: usize,
    /// Multiplies grid sizes and iteration counts.
    pub scale: f64,
    pub level: f64,
    pub seed: u64,
    /// Fill the `runtime_s` column (makes `summary.csv` run-dependent).
    pub record_runtime: bool,
    pub design: Design,
}

impl StudyConfig {
    pub fn study1() -> Self {
        Self {
            study: 1,
            regimes: Regime::standard(),
            replicates: 24,
            imputations: vec![Imputation::Mean, Imputation::Draws(8), Imputation::Draws(32), Imputation::Draws(128)],
            aids: vec![AidKind::Ou, AidKind::Gp],
            true_path_baseline: true,
            exact: false,
            iterations: 10_000,
            scale: 1.0,
            level: 0.95,
            seed: 2018,
            record_runtime: false,
            design: Design::Velocity(VelocityDesign::default()),
        }
    }

    pub fn study2() -> Self {
        Self {
            study: 2,
            aids: vec![AidKind::Ou],
            exact: true,
            design: Design::Drift(DriftDesign::default()),
            ..Self::study1()
        }
    }

    pub fn for_study(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Self::study1()),
            2 => Ok(Self::study2()),
            other => invalid(format!("unknown study id {other} (expected 1 or 2)")),
        }
    }

    pub fn scaled(&self, n: usize, floor: usize) -> usize {
        ((n as f64 * self.scale).round() as usize).max(floor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return invalid("replicate count must be at least 1");
        }
        if self.regimes.is_empty() {
            return invalid("at least one regime is required");
        }
        for r in &self.regimes {
            if !(r.sigma_s_sq > 0.0 && r.sigma_s_sq.is_finite()) || r.n_obs < 4 {
                return invalid(format!("regime `{}` needs sigma_s_sq > 0 and at least 4 observations", r.label));
            }
            if r.label.is_empty() || r.label.contains(['/', '\\', ',']) {
                return invalid(format!("regime label `{}` is not usable as a directory name", r.label));
            }
        }
        let mut labels: Vec<&str> = self.regimes.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.regimes.len() {
            return invalid("regime labels must be unique");
        }
        if self.imputations.iter().any(|i| *i == Imputation::Draws(0)) {
            return invalid("K must be at least 1");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return invalid("scale must be positive");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return invalid("level must lie in (0, 1)");
        }
        if self.scaled(self.iterations, 200) < 200 {
            return invalid("too few iterations");
        }
        match (&self.design, self.study) {
            (Design::Velocity(d), 1) => {
                if !(d.duration > 0.0 && d.sigma_v_sq > 0.0 && d.alpha_prior_variance > 0.0) || d.grid_points < 2 {
                    return invalid("velocity design needs positive duration, sigma_v_sq, prior variance and >= 2 grid points");
                }
                if self.exact {
                    return invalid("the exact sampler is only available for the constant-attraction study");
                }
                Ok(())
            }
            (Design::Drift(d), 2) => {
                if !(d.duration > 0.0 && d.sigma0_sq > 0.0 && d.initial_variance > 0.0 && d.beta_prior_variance > 0.0) || d.grid_points < 2 {
                    return invalid("drift design needs positive duration, variances and >= 2 grid points");
                }
                Ok(())
            }
            _ => invalid("study id and design do not match"),
        }
    }
}
