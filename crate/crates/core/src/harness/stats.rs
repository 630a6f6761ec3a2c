use serde::{Deserialize, Serialize};

use super::mode::Mode;
use super::TrialRecord;
use crate::error::{Error, Result};

/// Right-continuous empirical CDF: sorted `(value, rank / N)` pairs.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if let Some(bad) = samples.iter().find(|x| x.is_nan()) {
        return Err(Error::Numeric(format!("sample {bad} cannot be ordered")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect())
}

/// Generalized inverse of the empirical CDF: the smallest sample `x` with
/// `F(x) ≥ p`.
pub fn quantile(cdf: &[(f64, f64)], p: f64) -> f64 {
    let n = cdf.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    cdf[idx].0
}

/// Distribution summary of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub samples: usize,
    pub mean: f64,
    /// Standard error of the mean across per-user samples.
    pub mean_std_error: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    /// Root-mean-square Monte-Carlo error of the individual samples.
    pub mc_rms_error: f64,
    pub cdf: Vec<(f64, f64)>,
}

impl ModeSummary {
    /// Summary of a merged sample list with its per-sample Monte-Carlo errors.
    pub fn from_samples(mode: Mode, samples: &[f64], mc_errors: &[f64]) -> Result<Self> {
        let cdf = empirical_cdf(samples)?;
        let (mean, mean_std_error) = crate::performance::mean_and_sem(samples);
        let mc_rms_error = if mc_errors.is_empty() {
            0.0
        } else {
            (mc_errors.iter().map(|e| e * e).sum::<f64>() / mc_errors.len() as f64).sqrt()
        };
        Ok(Self {
            mode,
            samples: samples.len(),
            mean,
            mean_std_error,
            median: quantile(&cdf, 0.5),
            p5: quantile(&cdf, 0.05),
            p95: quantile(&cdf, 0.95),
            mc_rms_error,
            cdf,
        })
    }
}

/// Per-mode summaries over all records, in the records' mode order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub modes: Vec<ModeSummary>,
}

impl Summary {
    pub fn get(&self, mode: &Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| &m.mode == mode)
    }
}

/// Merges per-user samples of every mode across records.
/// Per-mode SE samples and their Monte-Carlo standard errors.
pub type ModeSamples = (Mode, Vec<f64>, Vec<f64>);

pub fn merged_samples(records: &[TrialRecord]) -> Result<Vec<ModeSamples>> {
    let first = records.first().ok_or(Error::Empty("records"))?;
    let modes: Vec<Mode> = first.results.iter().map(|r| r.mode).collect();
    let mut merged: Vec<(Mode, Vec<f64>, Vec<f64>)> = modes.iter().map(|&m| (m, Vec::new(), Vec::new())).collect();
    for rec in records {
        let these: Vec<Mode> = rec.results.iter().map(|r| r.mode).collect();
        if these != modes {
            return Err(Error::ModeMismatch(format!(
                "trial {} reports modes [{}], expected [{}]",
                rec.trial,
                join(&these),
                join(&modes)
            )));
        }
        for (slot, r) in merged.iter_mut().zip(&rec.results) {
            slot.1.extend_from_slice(&r.se);
            slot.2.extend_from_slice(&r.std_error);
        }
    }
    Ok(merged)
}

fn join(modes: &[Mode]) -> String {
    modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn aggregate(records: &[TrialRecord]) -> Result<Summary> {
    let modes = merged_samples(records)?
        .into_iter()
        .map(|(mode, se, err)| ModeSummary::from_samples(mode, &se, &err))
        .collect::<Result<_>>()?;
    Ok(Summary {
        trials: records.len(),
        modes,
    })
}
