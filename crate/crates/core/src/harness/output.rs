use std::io::Write;

use serde::Serialize;

use super::mode::Mode;
use super::stats::Summary;
use super::TrialRecord;
use crate::config::{AntennaKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::optimizer::{Objective, OptimizationResult};

pub const RESULTS_HEADER: [&str; 10] = [
    "trial",
    "user",
    "mode",
    "se",
    "se_std_error",
    "q",
    "distance_m",
    "distance_3d_m",
    "angle_deg",
    "beta",
];

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numeric(format!("csv output failed: {other:?}")),
    }
}

/// One row per (trial, mode, user). Floats use the shortest representation
/// that round-trips, so identical records give identical bytes.
pub fn write_results_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER).map_err(csv_error)?;
    for rec in records {
        for r in &rec.results {
            let q = r.mode.antenna().and_then(|a| rec.rank(a)).map(|q| q.to_string()).unwrap_or_default();
            for (u, (se, err)) in r.se.iter().zip(&r.std_error).enumerate() {
                let p = &rec.users[u];
                w.write_record([
                    rec.trial.to_string(),
                    u.to_string(),
                    r.mode.to_string(),
                    se.to_string(),
                    err.to_string(),
                    q.clone(),
                    p.distance_m.to_string(),
                    p.distance_3d_m.to_string(),
                    p.angle_deg.to_string(),
                    p.beta.to_string(),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Run-level facts echoed into the summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub seed: u64,
    pub runtime_s: f64,
    pub noise_power_w: f64,
    pub p_max_w: f64,
    pub prelog_icsi: f64,
    pub training_configs: usize,
    pub ranks: Vec<(AntennaKind, usize)>,
}

#[derive(Serialize)]
struct OptimizerAggregate {
    mode: Mode,
    runs: usize,
    mean_sweeps: f64,
    max_sweeps: usize,
    converged_fraction: f64,
    mean_initial: f64,
    mean_final: f64,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    config: &'a ExperimentConfig,
    run: &'a RunInfo,
    trials: usize,
    modes: &'a [super::stats::ModeSummary],
    optimizer: Vec<OptimizerAggregate>,
}

fn optimizer_aggregate(records: &[TrialRecord]) -> Vec<OptimizerAggregate> {
    let mut out: Vec<OptimizerAggregate> = Vec::new();
    for rec in records {
        for s in &rec.optimizer {
            let entry = match out.iter_mut().position(|a| a.mode == s.mode) {
                Some(i) => &mut out[i],
                None => {
                    out.push(OptimizerAggregate {
                        mode: s.mode,
                        runs: 0,
                        mean_sweeps: 0.0,
                        max_sweeps: 0,
                        converged_fraction: 0.0,
                        mean_initial: 0.0,
                        mean_final: 0.0,
                    });
                    out.last_mut().expect("just pushed")
                }
            };
            // accumulate sums, normalized below
            let n = s.runs as f64;
            entry.runs += s.runs;
            entry.mean_sweeps += s.mean_sweeps * n;
            entry.max_sweeps = entry.max_sweeps.max(s.max_sweeps);
            entry.converged_fraction += s.converged as f64;
            entry.mean_initial += s.mean_initial * n;
            entry.mean_final += s.mean_final * n;
        }
    }
    for a in &mut out {
        let n = a.runs.max(1) as f64;
        a.mean_sweeps /= n;
        a.converged_fraction /= n;
        a.mean_initial /= n;
        a.mean_final /= n;
    }
    out
}

pub fn write_summary_json<W: Write>(
    config: &ExperimentConfig,
    run: &RunInfo,
    summary: &Summary,
    records: &[TrialRecord],
    mut out: W,
) -> Result<()> {
    let doc = SummaryDocument {
        config,
        run,
        trials: summary.trials,
        modes: &summary.modes,
        optimizer: optimizer_aggregate(records),
    };
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Numeric(format!("summary serialization failed: {e}")))?;
    writeln!(out)?;
    Ok(())
}

/// Per-coordinate trace of coordinate-descent runs.
pub fn write_trace_csv<W: Write>(runs: &[(Objective, OptimizationResult)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["objective", "sweep", "element", "before", "after"]).map_err(csv_error)?;
    for (obj, res) in runs {
        for t in &res.trace {
            w.write_record([
                obj.name().to_string(),
                t.sweep.to_string(),
                t.element.to_string(),
                t.before.to_string(),
                t.after.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}
