//! CSV and JSON artifacts.
//!
//! Schemas:
//! - `trajectory.csv`: `run_id,agent_id,t,cum_regret`
//! - `summary.csv`: `t,mean_regret,ci_halfwidth,policy_label`
//! - `comparison.csv`: `axis_value,run_id,final_t,mean_agent_regret`
//! - `spreading.csv`: `steps,count`

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::{BudgetAudit, ExperimentConfig, Freeze, RunMetrics, Summary};

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("csv: {other:?}")),
    }
}

pub fn write_trajectories<W: Write>(out: W, runs: &[RunMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "agent_id", "t", "cum_regret"]).map_err(csv_error)?;
    for run in runs {
        for (agent, tr) in run.trajectories.iter().enumerate() {
            for (t, r) in run.checkpoints.iter().zip(tr) {
                w.write_record([
                    run.run_id.to_string(),
                    agent.to_string(),
                    t.to_string(),
                    r.to_string(),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, summaries: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mean_regret", "ci_halfwidth", "policy_label"]).map_err(csv_error)?;
    for s in summaries {
        for (t, p) in s.checkpoints.iter().zip(&s.points) {
            w.write_record([
                t.to_string(),
                p.mean.to_string(),
                p.ci_halfwidth.to_string(),
                s.label.clone(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per (axis value, run) with the agent-averaged regret at the horizon.
pub fn write_comparison<W: Write>(out: W, arms: &[(String, Vec<RunMetrics>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis_value", "run_id", "final_t", "mean_agent_regret"]).map_err(csv_error)?;
    for (value, runs) in arms {
        for run in runs {
            w.write_record([
                value.clone(),
                run.run_id.to_string(),
                run.horizon.to_string(),
                run.final_mean_regret().to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram<W: Write>(out: W, histogram: &[(u64, u64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["steps", "count"]).map_err(csv_error)?;
    for (steps, count) in histogram {
        w.write_record([steps.to_string(), count.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDigest {
    pub run_id: u64,
    pub freeze: Option<Freeze>,
    /// Logged recommendations after the freeze slot that were not the best arm.
    pub post_freeze_non_best: Option<u64>,
    pub final_sets_contain_best: bool,
    pub set_changes: u64,
    pub pull_counts: Vec<u64>,
    pub audit: BudgetAudit,
    pub final_mean_regret: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub runs: u64,
    pub frozen_runs: u64,
    pub audits_passed: u64,
    /// Bits per message: one arm id.
    pub message_bits: u32,
    pub per_run: Vec<RunDigest>,
}

pub fn metrics_report(config: &ExperimentConfig, runs: &[RunMetrics]) -> MetricsReport {
    let best = config.instance.best_arm();
    let per_run: Vec<RunDigest> = runs
        .iter()
        .map(|r| RunDigest {
            run_id: r.run_id,
            freeze: r.freeze,
            post_freeze_non_best: r
                .freeze
                .map(|f| r.recommendations_after(f.slot).filter(|p| p.recommended != best).count() as u64),
            final_sets_contain_best: r.final_sets.iter().all(|s| s.contains(&best)),
            set_changes: r.changes.len() as u64,
            pull_counts: r.pull_counts(),
            audit: r.audit.clone(),
            final_mean_regret: r.final_mean_regret(),
        })
        .collect();
    MetricsReport {
        protocol: config.protocol.to_string(),
        runs: runs.len() as u64,
        frozen_runs: per_run.iter().filter(|d| d.freeze.is_some()).count() as u64,
        audits_passed: per_run.iter().filter(|d| d.audit.passed).count() as u64,
        message_bits: message_bits(config.instance.k()),
        per_run,
    }
}

/// `ceil(log2 K)`, at least 1.
pub fn message_bits(k: usize) -> u32 {
    (usize::BITS - (k.max(2) - 1).leading_zeros()).max(1)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub master_seed: u64,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_vec(config).map_err(|e| Error::Input(format!("json: {e}")))?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest(config: &ExperimentConfig, command: &str, warnings: Vec<String>) -> Result<Manifest> {
    Ok(Manifest {
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        master_seed: config.seed,
        config_hash: config_hash(config)?,
        config: config.clone(),
        warnings,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Input(format!("json: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_csv_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::BanditInstance;
    use crate::sim::{aggregate, run_once};

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(BanditInstance::new(vec![0.9, 0.5, 0.2]).unwrap(), 2);
        c.horizon = 20;
        c.checkpoint_growth = 2.0;
        c.runs = 2;
        c
    }

    #[test]
    fn trajectory_rows() {
        let c = tiny();
        let runs: Vec<_> = (0..2).map(|r| run_once(&c, r).unwrap()).collect();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &runs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("run_id,agent_id,t,cum_regret"));
        // checkpoints 1, 2, 4, 8, 16, 20 for 2 runs x 2 agents
        assert_eq!(lines.count(), 24);
        assert!(text.contains("\n1,1,20,"));
    }

    #[test]
    fn summary_rows() {
        let c = tiny();
        let runs: Vec<_> = (0..2).map(|r| run_once(&c, r).unwrap()).collect();
        let s = aggregate(&runs, "lbl").unwrap();
        let mut buf = Vec::new();
        write_summary(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,mean_regret,ci_halfwidth,policy_label\n1,"));
        assert!(text.trim_end().ends_with(",lbl"));
    }

    #[test]
    fn bits_and_hash() {
        assert_eq!(message_bits(2), 1);
        assert_eq!(message_bits(3), 2);
        assert_eq!(message_bits(75), 7);
        assert_eq!(message_bits(128), 7);
        let c = tiny();
        let h = config_hash(&c).unwrap();
        assert_eq!(h.len(), 64);
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(config_hash(&d).unwrap(), h);
    }
}
