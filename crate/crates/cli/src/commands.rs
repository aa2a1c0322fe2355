use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use movimpute::analysis::{default_prior_variance_grid, fit, select_prior_variance, FitConfig};
use movimpute::experiments::{
    group_summaries, run_study_with, simulate_dataset, Design, DriftDesign, Regime, RunOptions, StudyConfig, VelocityDesign,
};
use movimpute::io::{read_telemetry, write_atomic, write_json, write_path, write_telemetry};
use movimpute::{Error, Result};

use crate::{Cli, Command, FitArgs, ModelArg, SimulateArgs, StudyArgs, TuningArgs};

pub enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Inputs of `simulate`; the design matching `--model` is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub regime: Regime,
    pub sde1: DriftDesign,
    pub sde2: VelocityDesign,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            regime: Regime::standard().remove(0),
            sde1: DriftDesign::default(),
            sde2: VelocityDesign::default(),
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Fit(a) => fit_cmd(a, cli.seed),
        Command::Study(a) => study(a, cli.seed),
        Command::SelectTuning(a) => tuning(a, cli.seed),
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> std::result::Result<&'a T, Failure> {
    v.as_ref().ok_or_else(|| Failure::Usage(format!("the argument '--{flag}' is required")))
}

fn print_json<T: Serialize>(v: &T) -> Outcome {
    println!("{}", serde_json::to_string_pretty(v).map_err(Error::from)?);
    Ok(())
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("invalid configuration {}: {e}", path.display())))
}

fn simulate(a: &SimulateArgs, seed: Option<u64>) -> Outcome {
    if a.print_config {
        return print_json(&SimulateConfig::default());
    }
    let model = *required(&a.model, "model")?;
    let cfg: SimulateConfig = load_json(required(&a.config, "config")?)?;
    let out = required(&a.out, "out")?;
    let mut study = match model {
        ModelArg::Sde1 => StudyConfig {
            design: Design::Drift(cfg.sde1.clone()),
            ..StudyConfig::study2()
        },
        ModelArg::Sde2 => StudyConfig {
            design: Design::Velocity(cfg.sde2.clone()),
            ..StudyConfig::study1()
        },
    };
    study.regimes = vec![cfg.regime.clone()];
    study.seed = seed.unwrap_or(0);
    study.validate()?;
    let ds = simulate_dataset(&study, &cfg.regime, 0)?;
    write_path(&out.join("truth.csv"), &ds.truth)?;
    write_telemetry(&out.join("telemetry.csv"), &ds.data)?;
    let model_name = match model {
        ModelArg::Sde1 => "sde1",
        ModelArg::Sde2 => "sde2",
    };
    write_json(
        &out.join("params.json"),
        &serde_json::json!({ "model": model_name, "seed": study.seed, "config": cfg }),
    )?;
    Ok(())
}

fn fit_config(path: &Option<PathBuf>) -> Result<FitConfig> {
    match path {
        Some(p) => load_json(p),
        None => Ok(FitConfig::default()),
    }
}

fn fit_cmd(a: &FitArgs, seed: Option<u64>) -> Outcome {
    if a.print_config {
        return print_json(&FitConfig::default());
    }
    let data = read_telemetry(required(&a.data, "data")?)?;
    let out = required(&a.out, "out")?;
    let cfg = fit_config(&a.config)?;
    let seed = seed.unwrap_or(0);
    let res = fit(&data, &cfg, seed)?;
    write_json(&out.join("config.json"), &serde_json::json!({ "seed": seed, "fit": cfg }))?;
    for (i, chain) in res.chains.iter().enumerate() {
        chain.write(
            &out.join(format!("chain_{}.csv", i + 1)),
            &out.join(format!("chain_{}.json", i + 1)),
            serde_json::json!({ "priors": cfg.priors, "k": cfg.k }),
        )?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "lower", "median", "upper"]).map_err(Error::from)?;
    for j in 0..res.band.times.len() {
        w.write_record([
            format!("{:?}", res.band.times[j]),
            format!("{:.8e}", res.band.lower[j]),
            format!("{:.8e}", res.beta_median[j]),
            format!("{:.8e}", res.band.upper[j]),
        ])
        .map_err(Error::from)?;
    }
    write_atomic(&out.join("beta_band.csv"), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "median", "lower", "upper"]).map_err(Error::from)?;
    for s in &res.summaries {
        w.write_record([s.parameter.clone(), format!("{:.6e}", s.median), format!("{:.6e}", s.lower), format!("{:.6e}", s.upper)])
            .map_err(Error::from)?;
    }
    write_atomic(&out.join("posterior_summary.csv"), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    write_json(
        &out.join("diagnostics.json"),
        &serde_json::json!({
            "aid": res.prepared.set.model,
            "psrf": res.psrf,
            "dic": res.dic,
            "dic_construction": "mean deviance over (parameters, selected path); plug-in deviance at posterior-mean parameters averaged over the K paths",
            "acceptance": res.chains.iter().map(|c| c.acceptance.clone()).collect::<Vec<_>>(),
        }),
    )?;
    for s in &res.summaries {
        println!("{:<12} median {:.4} ({:.4}, {:.4})", s.parameter, s.median, s.lower, s.upper);
    }
    Ok(())
}

fn study(a: &StudyArgs, seed: Option<u64>) -> Outcome {
    let mut cfg = match (&a.config, a.id) {
        (Some(p), id) => {
            let cfg: StudyConfig = load_json(p)?;
            if id.is_some_and(|id| id != cfg.study) {
                return Err(Failure::Usage("--id does not match the study in --config".into()));
            }
            cfg
        }
        (None, Some(id)) => StudyConfig::for_study(id)?,
        (None, None) => return Err(Failure::Usage("the argument '--id' is required".into())),
    };
    if let Some(s) = a.scale {
        cfg.scale = s;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.record_runtime |= a.record_runtime;
    if a.print_config {
        return print_json(&cfg);
    }
    let out = required(&a.out, "out")?;
    let report = run_study_with(&cfg, out, &RunOptions { max_jobs: a.max_jobs })?;
    for g in group_summaries(&report.rows) {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<14} {:<6} {:<5} n={:<3} coverage {} detection {} sigma_s_sq {}",
            g.regime,
            g.aid,
            g.k,
            g.replicates,
            f(g.coverage_mean),
            f(g.detection_mean),
            f(g.sigma_s_sq_rate)
        );
    }
    if !report.failures.is_empty() {
        eprintln!("{} replicate job(s) failed; see manifest.json", report.failures.len());
    }
    if report.pending > 0 {
        eprintln!("{} job(s) pending; rerun to resume", report.pending);
    }
    Ok(())
}

fn tuning(a: &TuningArgs, seed: Option<u64>) -> Outcome {
    if a.print_config {
        return print_json(&serde_json::json!({ "fit": FitConfig::default(), "grid": default_prior_variance_grid() }));
    }
    let data = read_telemetry(required(&a.data, "data")?)?;
    let out = required(&a.out, "out")?;
    let cfg = fit_config(&a.config)?;
    let grid = a.grid.clone().unwrap_or_else(default_prior_variance_grid);
    let seed = seed.unwrap_or(0);
    let (points, best) = select_prior_variance(&data, &cfg, &grid, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["prior_variance", "log10_prior_variance", "mean_deviance", "effective_parameters", "dic"])
        .map_err(Error::from)?;
    for p in &points {
        w.write_record([
            format!("{:e}", p.prior_variance),
            format!("{:.4}", p.prior_variance.log10()),
            format!("{:.6}", p.dic.mean_deviance),
            format!("{:.6}", p.dic.effective_parameters),
            format!("{:.6}", p.dic.dic),
        ])
        .map_err(Error::from)?;
    }
    write_atomic(&out.join("dic.csv"), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    write_json(
        &out.join("selected.json"),
        &serde_json::json!({ "prior_variance": points[best].prior_variance, "dic": points[best].dic, "seed": seed }),
    )?;
    println!("selected prior variance {:e} (DIC {:.3})", points[best].prior_variance, points[best].dic.dic);
    Ok(())
}
