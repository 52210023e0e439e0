//! Subcommand implementations behind the `gosine` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::GraphSpec;
use crate::output::{
    manifest, metrics_report, write_comparison, write_csv_file, write_histogram, write_json,
    write_summary, write_trajectories,
};
use crate::rng::RandomnessPlan;
use crate::schedule::BudgetSpec;
use crate::sim::{aggregate, run_all, ExperimentConfig, Protocol, RunMetrics};
use crate::spreading::{default_step_cap, histogram, median, spreading_samples, MeanEstimate};
use crate::theory::{c_delta, upper_bound_curve};

/// What a finished command reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// True when every run completed and no hard check failed.
    pub ok: bool,
    pub notices: Vec<String>,
}

impl Outcome {
    fn ok() -> Self {
        Self {
            ok: true,
            notices: Vec::new(),
        }
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Run all configured runs and write the standard artifact set to `out`.
pub fn cmd_run(config: &ExperimentConfig, out: &Path, jobs: usize, warnings: Vec<String>) -> Result<Outcome> {
    let runs = run_all(config, jobs)?;
    write_run_artifacts(config, &runs, out, "run", warnings)
}

fn write_run_artifacts(
    config: &ExperimentConfig,
    runs: &[RunMetrics],
    out: &Path,
    command: &str,
    warnings: Vec<String>,
) -> Result<Outcome> {
    prepare_dir(out)?;
    let mut outcome = Outcome::ok();
    outcome.notices.extend(warnings.iter().cloned());
    write_csv_file(&out.join("trajectory.csv"), |buf| write_trajectories(buf, runs))?;
    if runs.len() >= 2 {
        let summary = aggregate(runs, &config.policy_label())?;
        write_csv_file(&out.join("summary.csv"), |buf| write_summary(buf, &[summary]))?;
    } else {
        outcome
            .notices
            .push("summary.csv skipped: confidence intervals need at least 2 runs".into());
    }
    let report = metrics_report(config, runs);
    if report.audits_passed < report.runs {
        outcome.ok = false;
        outcome.notices.push(format!(
            "budget audit failed in {} of {} runs",
            report.runs - report.audits_passed,
            report.runs
        ));
    }
    write_json(&out.join("metrics.json"), &report)?;
    write_json(&out.join("manifest.json"), &manifest(config, command, warnings)?)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Graph,
    Budget,
    Protocol,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph" => Ok(SweepAxis::Graph),
            "budget" => Ok(SweepAxis::Budget),
            "protocol" => Ok(SweepAxis::Protocol),
            _ => Err(Error::config("axis", format!("expected graph, budget or protocol, got `{s}`"))),
        }
    }
}

impl SweepAxis {
    fn name(&self) -> &'static str {
        match self {
            SweepAxis::Graph => "graph",
            SweepAxis::Budget => "budget",
            SweepAxis::Protocol => "protocol",
        }
    }

    fn apply(&self, base: &ExperimentConfig, value: &str) -> Result<(ExperimentConfig, Vec<String>)> {
        let mut c = base.clone();
        match self {
            SweepAxis::Graph => c.graph = GraphSpec::parse(value)?,
            SweepAxis::Budget => c.budget = BudgetSpec::parse(value)?,
            SweepAxis::Protocol => c.protocol = value.parse::<Protocol>()?,
        }
        let warnings = c.validate()?;
        Ok((c, warnings))
    }
}

/// Directory-safe form of an axis value.
pub fn slug(value: &str) -> String {
    value
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' { ch } else { '_' })
        .collect()
}

#[derive(Debug, Serialize)]
struct SweepRow {
    axis_value: String,
    runs: u64,
    mean_final_regret: f64,
    ci_halfwidth: f64,
}

/// One run set per axis value, all with the same master seed, plus
/// `comparison.csv` and `comparison_summary.csv` keyed by axis value.
pub fn cmd_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String], out: &Path, jobs: usize) -> Result<Outcome> {
    let mut outcome = Outcome::ok();
    if values.is_empty() {
        outcome.notices.push("sweep has no values; nothing to do".into());
        return Ok(outcome);
    }
    prepare_dir(out)?;
    let mut arms: Vec<(String, Vec<RunMetrics>)> = Vec::new();
    for value in values {
        let attempt = axis.apply(base, value).and_then(|(config, warnings)| {
            let runs = run_all(&config, jobs)?;
            let dir = out.join(format!("{}={}", axis.name(), slug(value)));
            let sub = write_run_artifacts(&config, &runs, &dir, "sweep", warnings)?;
            Ok((runs, sub))
        });
        match attempt {
            Ok((runs, sub)) => {
                outcome.ok &= sub.ok;
                outcome
                    .notices
                    .extend(sub.notices.into_iter().map(|n| format!("{value}: {n}")));
                arms.push((value.clone(), runs));
            }
            Err(e) => {
                outcome.ok = false;
                outcome.notices.push(format!("{value}: failed: {e}"));
            }
        }
    }
    write_csv_file(&out.join("comparison.csv"), |buf| write_comparison(buf, &arms))?;
    let mut w = csv::Writer::from_path(out.join("comparison_summary.csv"))
        .map_err(|e| Error::Input(format!("csv: {e}")))?;
    for (value, runs) in &arms {
        let finals: Vec<f64> = runs.iter().map(|r| r.final_mean_regret()).collect();
        let est = MeanEstimate::from_samples(&finals);
        w.serialize(SweepRow {
            axis_value: value.clone(),
            runs: runs.len() as u64,
            mean_final_regret: est.mean,
            ci_halfwidth: est.ci_halfwidth,
        })
        .map_err(|e| Error::Input(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadingSummary {
    pub graph: String,
    pub agents: usize,
    pub trials: u64,
    pub seed: u64,
    pub median: f64,
    pub mean: MeanEstimate,
    pub min: u64,
    pub max: u64,
}

/// Spreading-time histogram from node 0 plus a JSON summary.
pub fn cmd_spreading(graph: &GraphSpec, agents: usize, trials: u64, seed: u64, out: &Path) -> Result<SpreadingSummary> {
    if trials == 0 {
        return Err(Error::config("trials", "must be >= 1"));
    }
    let net = graph.build(agents)?;
    let samples = spreading_samples(&net, 0, &RandomnessPlan::new(seed), trials, default_step_cap(agents))?;
    let as_f64: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    let summary = SpreadingSummary {
        graph: graph.to_string(),
        agents,
        trials,
        seed,
        median: median(&samples),
        mean: MeanEstimate::from_samples(&as_f64),
        min: *samples.iter().min().unwrap(),
        max: *samples.iter().max().unwrap(),
    };
    prepare_dir(out)?;
    write_csv_file(&out.join("spreading.csv"), |buf| write_histogram(buf, &histogram(&samples)))?;
    write_json(&out.join("spreading.json"), &summary)?;
    Ok(summary)
}

/// Bound report on the configuration's checkpoint grid, written to `theory.json`.
pub fn cmd_theory(config: &ExperimentConfig, trials: u64, out: &Path) -> Result<PathBuf> {
    let report = upper_bound_curve(
        &config.instance,
        config.agents,
        &config.schedule()?,
        &config.graph.build(config.agents.max(2))?,
        config.alpha,
        &config.checkpoints(),
        trials,
        &RandomnessPlan::new(config.seed),
    )?;
    prepare_dir(out)?;
    let path = out.join("theory.json");
    write_json(&path, &report)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// Irreducibility of the gossip matrix and the budget growth conditions.
pub fn cmd_validate(config: &ExperimentConfig, out: Option<&Path>) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let mut push = |name: &str, status, detail: String| {
        checks.push(Check {
            name: name.into(),
            status,
            detail,
        })
    };
    if config.agents >= 2 {
        let net = config.network()?;
        let irreducible = net.is_irreducible();
        push(
            "irreducible gossip matrix",
            if irreducible { Status::Pass } else { Status::Fail },
            format!("{} on {} agents", config.graph, config.agents),
        );
    }
    push(
        "ucb parameter",
        if config.alpha > 3.0 { Status::Pass } else { Status::Warn },
        format!("alpha = {} (theorem requires α>3)", config.alpha),
    );
    let schedule = config.schedule()?;
    let kappa = (config.protocol == Protocol::GosineAsyncPoisson).then(|| c_delta(config.delta));
    let report = schedule.validate_assumptions(config.horizon.max(10), 64, kappa)?;
    let lg = &report.log_growth;
    push(
        "budget grows at least logarithmically",
        if lg.trending_to_zero { Status::Warn } else { Status::Pass },
        format!("B_t / ln t: min {:.3}, final {:.3}", lg.infimum, lg.final_ratio),
    );
    let cv = &report.convexity;
    push(
        "pull schedule convexity",
        if cv.passed { Status::Pass } else { Status::Warn },
        format!("{} violations in {} pairs", cv.violations.len(), cv.pairs_checked),
    );
    let series = &report.cubic_ratio_series;
    push(
        "sum A_2l / A_(l-1)^3 finite",
        if series.diverging {
            Status::Fail
        } else if series.converged {
            Status::Pass
        } else {
            Status::Warn
        },
        format!("partial sum {:.6} through l = {}", series.partial_sum, series.last_index),
    );
    if let Some(a3) = &report.a3_series {
        push(
            "poisson phase series finite",
            if a3.converged { Status::Pass } else { Status::Warn },
            format!("partial sum {:.6e} through x = {}", a3.partial_sum, a3.last_index),
        );
    }
    let out_report = ValidationReport { checks };
    if let Some(dir) = out {
        prepare_dir(dir)?;
        write_json(&dir.join("validate.json"), &out_report)?;
    }
    Ok(out_report)
}
