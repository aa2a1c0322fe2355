//! Replicated simulation studies: every (regime, replicate) job simulates a truth,
//! analyses it with each imputation scheme (and optionally the exact sampler), and
//! writes its result; the study tables are aggregated from those files.

pub mod config;
pub mod replicate;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json};
use crate::parallel;
use crate::stats::quantile;

pub use config::{AidKind, Design, DriftDesign, Imputation, Regime, StudyConfig, VelocityDesign};
pub use replicate::{job_id, run_replicate, simulate_dataset, ReplicateResult, Row, SimulatedDataset};

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "regime",
    "AID",
    "K",
    "replicate",
    "coverage_beta",
    "detection_beta",
    "covered_sigma_v_sq",
    "covered_sigma_s_sq",
    "covered_beta_scalar",
    "runtime_s",
];

/// Progress record kept in `manifest.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub completed: BTreeSet<String>,
    pub failed: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many pending jobs (used to emulate interruption).
    pub max_jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub out_dir: PathBuf,
    pub rows: Vec<Row>,
    pub failures: BTreeMap<String, String>,
    /// Jobs still missing (only when stopped early).
    pub pending: usize,
}

fn digest(config: &StudyConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.json")
}

fn result_path(out: &Path, job: &str) -> PathBuf {
    out.join("replicates").join(job).join("result.json")
}

fn read_manifest(out: &Path) -> Result<Option<Manifest>> {
    let path = manifest_path(out);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Validation(format!("checkpoint manifest {} is corrupted: {e}", path.display())))
}

fn read_result(out: &Path, job: &str) -> Option<ReplicateResult> {
    let text = std::fs::read_to_string(result_path(out, job)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Run a study into `out`, continuing from a checkpoint if one exists.
pub fn run_study(config: &StudyConfig, out: &Path) -> Result<StudyReport> {
    run_study_with(config, out, &RunOptions::default())
}

/// Continue an interrupted study; the checkpoint manifest must exist.
pub fn resume_study(config: &StudyConfig, out: &Path) -> Result<StudyReport> {
    if read_manifest(out)?.is_none() {
        return Err(Error::Validation(format!("no checkpoint manifest in {}", out.display())));
    }
    run_study(config, out)
}

pub fn run_study_with(config: &StudyConfig, out: &Path, opts: &RunOptions) -> Result<StudyReport> {
    config.validate()?;
    let config_digest = digest(config)?;
    let mut manifest = match read_manifest(out)? {
        Some(m) if m.config_digest != config_digest => {
            return Err(Error::Validation(format!(
                "{} holds a study with a different configuration",
                out.display()
            )))
        }
        Some(m) => m,
        None => Manifest {
            config_digest,
            ..Manifest::default()
        },
    };
    std::fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), config)?;

    let jobs: Vec<(usize, usize)> = (0..config.regimes.len())
        .flat_map(|r| (0..config.replicates).map(move |i| (r, i)))
        .collect();
    // a job counts as done only if its result file is readable
    manifest.completed.retain(|job| read_result(out, job).is_some());
    let mut pending: Vec<(usize, usize)> = jobs
        .iter()
        .copied()
        .filter(|&(r, i)| !manifest.completed.contains(&job_id(&config.regimes[r], i)))
        .collect();
    let remaining_after = opts.max_jobs.map_or(0, |m| pending.len().saturating_sub(m));
    if let Some(m) = opts.max_jobs {
        pending.truncate(m);
    }
    manifest.failed.retain(|job, _| !pending.iter().any(|&(r, i)| job_id(&config.regimes[r], i) == *job));
    write_json(&manifest_path(out), &manifest)?;

    let shared = Mutex::new(manifest);
    let outcomes = parallel::map_slice(&pending, |&(r, i)| {
        let regime = &config.regimes[r];
        let job = job_id(regime, i);
        let outcome = run_replicate(config, regime, i).and_then(|res| write_json(&result_path(out, &job), &res));
        let mut m = shared.lock().expect("manifest lock poisoned");
        match &outcome {
            Ok(()) => {
                m.completed.insert(job.clone());
            }
            Err(e) => {
                log::error!("{job} failed: {e}");
                m.failed.insert(job.clone(), e.to_string());
            }
        }
        write_json(&manifest_path(out), &*m)
    });
    outcomes.into_iter().collect::<Result<Vec<()>>>()?;
    let manifest = shared.into_inner().expect("manifest lock poisoned");

    let mut rows = Vec::new();
    for &(r, i) in &jobs {
        let job = job_id(&config.regimes[r], i);
        if manifest.completed.contains(&job) {
            match read_result(out, &job) {
                Some(res) => rows.extend(res.rows),
                None => return Err(Error::Validation(format!("result for {job} is unreadable"))),
            }
        }
    }
    write_atomic(&out.join("summary.csv"), &summary_csv(&rows, config.record_runtime)?)?;
    write_atomic(&out.join("quantiles.csv"), &quantiles_csv(&rows)?)?;
    if config.record_runtime {
        write_atomic(&out.join("timings.csv"), &timings_csv(&rows)?)?;
    }
    Ok(StudyReport {
        out_dir: out.to_path_buf(),
        rows,
        failures: manifest.failed,
        pending: remaining_after,
    })
}

fn opt_f(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn opt_b(x: Option<bool>) -> String {
    x.map(|v| if v { "1" } else { "0" }.to_string()).unwrap_or_default()
}

pub fn summary_csv(rows: &[Row], with_runtime: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.regime.clone(),
            r.aid.clone(),
            r.k.clone(),
            r.replicate.to_string(),
            opt_f(r.coverage_beta),
            opt_f(r.detection_beta),
            opt_b(r.covered_sigma_v_sq),
            opt_b(r.covered_sigma_s_sq),
            opt_b(r.covered_beta_scalar),
            if with_runtime { format!("{:.3}", r.runtime_s) } else { String::new() },
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn timings_csv(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["regime", "AID", "K", "replicate", "runtime_s"])?;
    for r in rows {
        w.write_record([r.regime.clone(), r.aid.clone(), r.k.clone(), r.replicate.to_string(), format!("{:.3}", r.runtime_s)])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Per (regime, AID, K) group summary across replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub regime: String,
    pub aid: String,
    pub k: String,
    pub replicates: usize,
    pub coverage_mean: Option<f64>,
    pub coverage_q125: Option<f64>,
    pub coverage_q875: Option<f64>,
    pub detection_mean: Option<f64>,
    pub detection_q125: Option<f64>,
    pub detection_q875: Option<f64>,
    pub sigma_v_sq_rate: Option<f64>,
    pub sigma_s_sq_rate: Option<f64>,
    pub beta_scalar_rate: Option<f64>,
}

/// Groups in first-appearance order.
pub fn group_summaries(rows: &[Row]) -> Vec<GroupSummary> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        let key = (r.regime.clone(), r.aid.clone(), r.k.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let vals = |rs: &[&Row], f: &dyn Fn(&Row) -> Option<f64>| -> Vec<f64> { rs.iter().filter_map(|r| f(r)).collect() };
    let mean = |v: &[f64]| (!v.is_empty()).then(|| crate::stats::mean(v));
    let q = |v: &[f64], p: f64| (!v.is_empty()).then(|| quantile(v, p));
    let rate = |v: Option<bool>| v.map(|b| b as u8 as f64);
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let cov = vals(rs, &|r| r.coverage_beta);
            let det = vals(rs, &|r| r.detection_beta);
            GroupSummary {
                replicates: rs.len(),
                coverage_mean: mean(&cov),
                coverage_q125: q(&cov, 0.125),
                coverage_q875: q(&cov, 0.875),
                detection_mean: mean(&det),
                detection_q125: q(&det, 0.125),
                detection_q875: q(&det, 0.875),
                sigma_v_sq_rate: mean(&vals(rs, &|r| rate(r.covered_sigma_v_sq))),
                sigma_s_sq_rate: mean(&vals(rs, &|r| rate(r.covered_sigma_s_sq))),
                beta_scalar_rate: mean(&vals(rs, &|r| rate(r.covered_beta_scalar))),
                regime: key.0,
                aid: key.1,
                k: key.2,
            }
        })
        .collect()
}

fn quantiles_csv(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "regime",
        "AID",
        "K",
        "replicates",
        "coverage_mean",
        "coverage_q12.5",
        "coverage_q87.5",
        "detection_mean",
        "detection_q12.5",
        "detection_q87.5",
        "sigma_v_sq_coverage_rate",
        "sigma_s_sq_coverage_rate",
        "beta_scalar_coverage_rate",
    ])?;
    for g in group_summaries(rows) {
        w.write_record([
            g.regime,
            g.aid,
            g.k,
            g.replicates.to_string(),
            opt_f(g.coverage_mean),
            opt_f(g.coverage_q125),
            opt_f(g.coverage_q875),
            opt_f(g.detection_mean),
            opt_f(g.detection_q125),
            opt_f(g.detection_q875),
            opt_f(g.sigma_v_sq_rate),
            opt_f(g.sigma_s_sq_rate),
            opt_f(g.beta_scalar_rate),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
