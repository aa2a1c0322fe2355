//! Stored MCMC output shared by the imputation and exact samplers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Imputation,
    Exact,
}

/// Every iteration's state; [`ChainOutput::retained`] drops the burn-in.
/// Parameter vectors that a model does not use are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub method: Method,
    pub iterations: usize,
    pub burn_in: usize,
    pub alpha: Vec<Vec<f64>>,
    pub sigma_v_sq: Vec<f64>,
    pub sigma_s_sq: Vec<f64>,
    pub beta: Vec<f64>,
    /// Index of the imputed path used at each iteration.
    pub selected: Vec<usize>,
    /// `-2 log L` of the process model at each iteration.
    pub deviance: Vec<f64>,
    pub acceptance: BTreeMap<String, f64>,
    pub metadata: serde_json::Value,
}

impl ChainOutput {
    pub fn retained_len(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub fn retained<'a, T>(&self, all: &'a [T]) -> &'a [T] {
        if all.is_empty() {
            all
        } else {
            &all[self.burn_in..]
        }
    }

    /// Retained draws of a named scalar: `sigma_v_sq`, `sigma_s_sq`, `beta`,
    /// `deviance` or `alpha[i]`.
    pub fn parameter(&self, name: &str) -> Result<Vec<f64>> {
        let values: Vec<f64> = match name {
            "sigma_v_sq" => self.retained(&self.sigma_v_sq).to_vec(),
            "sigma_s_sq" => self.retained(&self.sigma_s_sq).to_vec(),
            "beta" => self.retained(&self.beta).to_vec(),
            "deviance" => self.retained(&self.deviance).to_vec(),
            "sigma_v" => self.retained(&self.sigma_v_sq).iter().map(|v| v.sqrt()).collect(),
            "sigma_s" => self.retained(&self.sigma_s_sq).iter().map(|v| v.sqrt()).collect(),
            other => {
                let idx = other
                    .strip_prefix("alpha[")
                    .and_then(|s| s.strip_suffix(']'))
                    .and_then(|s| s.parse::<usize>().ok());
                match idx {
                    Some(i) if self.alpha.first().is_some_and(|a| i < a.len()) => {
                        self.retained(&self.alpha).iter().map(|a| a[i]).collect()
                    }
                    _ => return invalid(format!("unknown chain parameter `{other}`")),
                }
            }
        };
        if values.is_empty() {
            return invalid(format!("chain has no samples of `{name}`"));
        }
        Ok(values)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.iterations;
        let lens = [
            self.alpha.len(),
            self.sigma_v_sq.len(),
            self.sigma_s_sq.len(),
            self.beta.len(),
            self.selected.len(),
            self.deviance.len(),
        ];
        if lens.iter().any(|&l| l != 0 && l != n) {
            return invalid("chain sample counts are inconsistent");
        }
        if self.burn_in >= n {
            return invalid("burn-in must leave at least one retained sample");
        }
        if self.acceptance.values().any(|a| !(0.0..=1.0).contains(a)) {
            return invalid("acceptance rates must lie in [0, 1]");
        }
        Ok(())
    }

    /// One CSV row per retained iteration plus a JSON manifest next to it.
    pub fn write(&self, csv_path: &Path, manifest_path: &Path, manifest_extra: serde_json::Value) -> Result<()> {
        let p = self.alpha.first().map_or(0, Vec::len);
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let mut header = vec!["iteration".to_string(), "selected".into(), "sigma_s_sq".into(), "sigma_v_sq".into(), "beta".into(), "deviance".into()];
            header.extend((0..p).map(|i| format!("alpha_{}", i + 1)));
            w.write_record(&header)?;
            let opt = |v: &[f64], t: usize| v.get(t).map(|x| format!("{x:.10e}")).unwrap_or_default();
            for t in self.burn_in..self.iterations {
                let mut row = vec![
                    t.to_string(),
                    self.selected.get(t).map(|k| k.to_string()).unwrap_or_default(),
                    opt(&self.sigma_s_sq, t),
                    opt(&self.sigma_v_sq, t),
                    opt(&self.beta, t),
                    opt(&self.deviance, t),
                ];
                if let Some(a) = self.alpha.get(t) {
                    row.extend(a.iter().map(|x| format!("{x:.10e}")));
                }
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        write_atomic(csv_path, &buf)?;
        let manifest = serde_json::json!({
            "method": self.method,
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "acceptance": self.acceptance,
            "metadata": self.metadata,
            "extra": manifest_extra,
        });
        let mut out = Vec::new();
        serde_json::to_writer_pretty(&mut out, &manifest)?;
        out.write_all(b"\n")?;
        write_atomic(manifest_path, &out)
    }
}
