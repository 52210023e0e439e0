//! Slot-by-slot simulation of the GosInE protocols and the two baselines.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{init_sticky, init_sticky_random, ucb_argmax, AgentState, PhasePolicy};
use crate::bandit::{draw_reward, log_checkpoints, BanditInstance, RegretLedger};
use crate::error::{Error, Result};
use crate::network::{GossipNetwork, GraphSpec};
use crate::rng::{Purpose, RandomnessPlan, Stream};
use crate::schedule::{BudgetSpec, CommSchedule, DEFAULT_EPSILON};
use crate::spreading::MeanEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    GosineSync,
    GosineAsyncUniform,
    GosineAsyncPoisson,
    BaselineNocomm,
    BaselineFull,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::GosineSync,
        Protocol::GosineAsyncUniform,
        Protocol::GosineAsyncPoisson,
        Protocol::BaselineNocomm,
        Protocol::BaselineFull,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::GosineSync => "gosine-sync",
            Protocol::GosineAsyncUniform => "gosine-async-uniform",
            Protocol::GosineAsyncPoisson => "gosine-async-poisson",
            Protocol::BaselineNocomm => "baseline-nocomm",
            Protocol::BaselineFull => "baseline-full",
        }
    }

    pub fn is_gosine(&self) -> bool {
        matches!(
            self,
            Protocol::GosineSync | Protocol::GosineAsyncUniform | Protocol::GosineAsyncPoisson
        )
    }

    pub fn phase_policy(&self, delta: f64) -> Option<PhasePolicy> {
        match self {
            Protocol::GosineSync => Some(PhasePolicy::Synchronous),
            Protocol::GosineAsyncUniform => Some(PhasePolicy::AsyncUniform { delta }),
            Protocol::GosineAsyncPoisson => Some(PhasePolicy::AsyncPoisson { delta }),
            _ => None,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = Protocol::ALL.iter().map(|p| p.as_str()).collect();
                Error::config("protocol", format!("unknown protocol `{s}`, expected one of {names:?}"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: BanditInstance,
    /// How the instance was specified, echoed into manifests.
    pub instance_source: String,
    pub agents: usize,
    pub protocol: Protocol,
    pub graph: GraphSpec,
    pub budget: BudgetSpec,
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: Option<f64>,
    pub horizon: u64,
    pub runs: u64,
    pub seed: u64,
    pub checkpoint_growth: f64,
    /// Keep every agent's arm choice per slot (memory grows with `N * T`).
    #[serde(skip)]
    pub record_choices: bool,
}

impl ExperimentConfig {
    pub fn new(instance: BanditInstance, agents: usize) -> Self {
        Self {
            instance_source: "inline".into(),
            instance,
            agents,
            protocol: Protocol::GosineSync,
            graph: GraphSpec::Complete,
            budget: BudgetSpec::Polynomial { beta: 3.0 },
            epsilon: DEFAULT_EPSILON,
            alpha: 4.0,
            delta: 0.5,
            gamma: None,
            horizon: 10_000,
            runs: 1,
            seed: 0,
            checkpoint_growth: 1.1,
            record_choices: false,
        }
    }

    /// Check every field; returns warnings that do not block a run.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.agents == 0 {
            return Err(Error::config("agents", "must be >= 1"));
        }
        if self.protocol.is_gosine() && self.agents < 2 {
            return Err(Error::config("agents", "gossip protocols need at least 2 agents"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if self.alpha <= 3.0 {
            warnings.push(format!("theorem requires α>3 (alpha = {})", self.alpha));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be >= 1"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "must be >= 1"));
        }
        if !(self.checkpoint_growth > 1.0 && self.checkpoint_growth.is_finite()) {
            return Err(Error::config("checkpoint_growth", "must be > 1"));
        }
        if let Some(policy) = self.protocol.phase_policy(self.delta) {
            policy.validate()?;
        }
        if let Some(gamma) = self.gamma {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::config("gamma", format!("must lie in (0, 1), got {gamma}")));
            }
        }
        self.schedule()?;
        if self.protocol.is_gosine() {
            let net = self.network()?;
            if !net.is_irreducible() {
                return Err(Error::config("graph", "gossip matrix is not irreducible"));
            }
        }
        Ok(warnings)
    }

    pub fn schedule(&self) -> Result<CommSchedule> {
        CommSchedule::new(self.budget.clone(), self.epsilon)
    }

    pub fn network(&self) -> Result<GossipNetwork> {
        self.graph.build(self.agents)
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        log_checkpoints(self.horizon, self.checkpoint_growth)
    }

    /// Label used in summary files.
    pub fn policy_label(&self) -> String {
        match self.protocol {
            Protocol::BaselineNocomm | Protocol::BaselineFull => self.protocol.to_string(),
            p => format!("{p}/{}/{}", self.graph, self.budget),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRecord {
    pub agent: usize,
    pub slot: u64,
    pub target: usize,
    pub recommended: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub agent: usize,
    pub slot: u64,
    /// Phase whose playing set is `new`.
    pub phase: u64,
    pub old: Vec<usize>,
    pub new: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Freeze {
    pub phase: u64,
    pub slot: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditMode {
    /// Every path must respect the budget.
    Exact,
    /// Random phase lengths; only the mean is compared with the budget.
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetViolation {
    pub agent: usize,
    pub slot: u64,
    pub pulls: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub mode: AuditMode,
    /// False only for an exact audit with violations.
    pub passed: bool,
    pub violation_count: u64,
    /// First few violations.
    pub violations: Vec<BudgetViolation>,
    pub pulls_at_horizon: Vec<u64>,
    pub mean_pulls_at_horizon: f64,
    pub budget_at_horizon: u64,
}

impl BudgetAudit {
    /// `mean pulls / B_T - 1`.
    pub fn relative_error(&self) -> f64 {
        self.mean_pulls_at_horizon / self.budget_at_horizon as f64 - 1.0
    }
}

const REPORTED_VIOLATIONS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: u64,
    pub protocol: Protocol,
    pub horizon: u64,
    pub checkpoints: Vec<u64>,
    /// Cumulative regret per agent at each checkpoint.
    pub trajectories: Vec<Vec<f64>>,
    pub pulls: Vec<PullRecord>,
    pub changes: Vec<ChangeRecord>,
    pub initial_sets: Vec<Vec<usize>>,
    pub final_sets: Vec<Vec<usize>>,
    pub freeze: Option<Freeze>,
    pub audit: BudgetAudit,
    /// Arm played by each agent in each slot, if requested.
    #[serde(skip)]
    pub choices: Option<Vec<Vec<u32>>>,
}

impl RunMetrics {
    pub fn n_agents(&self) -> usize {
        self.trajectories.len()
    }

    /// Regret at checkpoint `c` averaged over agents.
    pub fn mean_agent_regret_at(&self, c: usize) -> f64 {
        self.trajectories.iter().map(|tr| tr[c]).sum::<f64>() / self.n_agents() as f64
    }

    pub fn final_mean_regret(&self) -> f64 {
        self.mean_agent_regret_at(self.checkpoints.len() - 1)
    }

    pub fn pull_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.n_agents()];
        for p in &self.pulls {
            counts[p.agent] += 1;
        }
        counts
    }

    /// Recommendations logged strictly after `slot`.
    pub fn recommendations_after(&self, slot: u64) -> impl Iterator<Item = &PullRecord> {
        self.pulls.iter().filter(move |p| p.slot > slot)
    }
}

struct Streams {
    reward: Vec<Vec<Stream>>,
    gossip: Vec<Stream>,
    phase: Vec<Stream>,
}

impl Streams {
    fn new(plan: &RandomnessPlan, run: u64, n: usize, k: usize) -> Self {
        let agent = |i: usize, p: Purpose| plan.stream(run, i as u64, p);
        Self {
            reward: (0..n)
                .map(|i| (0..k).map(|arm| agent(i, Purpose::Reward { arm })).collect())
                .collect(),
            gossip: (0..n).map(|i| agent(i, Purpose::GossipTarget)).collect(),
            phase: (0..n).map(|i| agent(i, Purpose::PhaseLength)).collect(),
        }
    }
}

fn choice_buffers(config: &ExperimentConfig) -> Option<Vec<Vec<u32>>> {
    config
        .record_choices
        .then(|| vec![Vec::with_capacity(config.horizon as usize); config.agents])
}

/// One run of a GosInE protocol.
pub fn run_gosine(config: &ExperimentConfig, run_id: u64) -> Result<RunMetrics> {
    config.validate()?;
    let policy = config
        .protocol
        .phase_policy(config.delta)
        .ok_or_else(|| Error::config("protocol", format!("{} is not a gossip protocol", config.protocol)))?;
    let mode = policy.recommend_mode();
    let inst = &config.instance;
    let (n, k) = (config.agents, inst.k());
    let schedule = config.schedule()?;
    let net = config.network()?;
    let plan = RandomnessPlan::new(config.seed);
    let mut streams = Streams::new(&plan, run_id, n, k);

    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let sets = match config.gamma {
            Some(gamma) => {
                let mut s = plan.stream(run_id, i as u64, Purpose::Init);
                init_sticky_random(k, n, gamma, &mut s)?
            }
            None => init_sticky(i, k, n),
        };
        agents.push(AgentState::new(i, k, sets));
    }
    let initial_sets = agents.iter().map(|a| a.playing().to_vec()).collect();
    let mut phase_end = Vec::with_capacity(n);
    for i in 0..n {
        phase_end.push(policy.draw_phase_length(&schedule, 0, &mut streams.phase[i])?);
    }

    let mut ledger = RegretLedger::new(n, config.checkpoints());
    let mut choices = choice_buffers(config);
    let mut pulls = Vec::new();
    let mut changes = Vec::new();
    let mut requests = Vec::with_capacity(n);
    for t in 1..=config.horizon {
        let alpha_log_t = config.alpha * (t as f64).ln();
        for (i, agent) in agents.iter_mut().enumerate() {
            let arm = agent.select_arm_with_log(alpha_log_t);
            let reward = draw_reward(inst, arm, &mut streams.reward[i][arm])?;
            agent.record_reward(arm, reward)?;
            ledger.record_pull(inst, i, arm, t)?;
            if let Some(c) = choices.as_mut() {
                c[i].push(arm as u32);
            }
        }
        // every request reads the targets' state before anyone updates
        requests.clear();
        for i in 0..n {
            if phase_end[i] == t {
                let target = net.sample_target(i, &mut streams.gossip[i]);
                requests.push((i, target, agents[target].recommend(mode)));
            }
        }
        for &(i, target, rec) in &requests {
            pulls.push(PullRecord {
                agent: i,
                slot: t,
                target,
                recommended: rec,
            });
            if let Some(change) = agents[i].apply_recommendation(rec)? {
                changes.push(ChangeRecord {
                    agent: i,
                    slot: t,
                    phase: change.phase + 1,
                    old: change.old,
                    new: change.new,
                });
            }
            phase_end[i] += policy.draw_phase_length(&schedule, agents[i].phase(), &mut streams.phase[i])?;
        }
    }

    let mut metrics = RunMetrics {
        run_id,
        protocol: config.protocol,
        horizon: config.horizon,
        checkpoints: ledger.checkpoints().to_vec(),
        trajectories: ledger.trajectories().to_vec(),
        pulls,
        changes,
        initial_sets,
        final_sets: agents.iter().map(|a| a.playing().to_vec()).collect(),
        freeze: None,
        audit: empty_audit(n),
        choices,
    };
    metrics.freeze = detect_freeze(&metrics, inst);
    metrics.audit = audit_budget(&metrics, &schedule, config.horizon);
    Ok(metrics)
}

fn empty_audit(n: usize) -> BudgetAudit {
    BudgetAudit {
        mode: AuditMode::Exact,
        passed: true,
        violation_count: 0,
        violations: Vec::new(),
        pulls_at_horizon: vec![0; n],
        mean_pulls_at_horizon: 0.0,
        budget_at_horizon: 0,
    }
}

fn baseline_metrics(
    config: &ExperimentConfig,
    run_id: u64,
    ledger: RegretLedger,
    choices: Option<Vec<Vec<u32>>>,
) -> Result<RunMetrics> {
    let all: Vec<usize> = (0..config.instance.k()).collect();
    let n = config.agents;
    let mut metrics = RunMetrics {
        run_id,
        protocol: config.protocol,
        horizon: config.horizon,
        checkpoints: ledger.checkpoints().to_vec(),
        trajectories: ledger.trajectories().to_vec(),
        pulls: Vec::new(),
        changes: Vec::new(),
        initial_sets: vec![all.clone(); n],
        final_sets: vec![all; n],
        freeze: None,
        audit: empty_audit(n),
        choices,
    };
    metrics.freeze = detect_freeze(&metrics, &config.instance);
    metrics.audit = audit_budget(&metrics, &config.schedule()?, config.horizon);
    Ok(metrics)
}

/// Every agent runs UCB-α over all arms on its own.
pub fn run_baseline_nocomm(config: &ExperimentConfig, run_id: u64) -> Result<RunMetrics> {
    config.validate()?;
    let inst = &config.instance;
    let (n, k) = (config.agents, inst.k());
    let plan = RandomnessPlan::new(config.seed);
    let mut streams = Streams::new(&plan, run_id, n, k);
    let arms: Vec<usize> = (0..k).collect();
    let mut counts = vec![vec![0u64; k]; n];
    let mut sums = vec![vec![0u64; k]; n];
    let mut ledger = RegretLedger::new(n, config.checkpoints());
    let mut choices = choice_buffers(config);
    for t in 1..=config.horizon {
        let alpha_log_t = config.alpha * (t as f64).ln();
        for i in 0..n {
            let arm = ucb_argmax(&arms, &counts[i], &sums[i], alpha_log_t);
            let reward = draw_reward(inst, arm, &mut streams.reward[i][arm])?;
            counts[i][arm] += 1;
            sums[i][arm] += u64::from(reward);
            ledger.record_pull(inst, i, arm, t)?;
            if let Some(c) = choices.as_mut() {
                c[i].push(arm as u32);
            }
        }
    }
    baseline_metrics(config, run_id, ledger, choices)
}

/// A leader runs UCB-α over all arms; all agents play its choice and the
/// leader absorbs all `N` rewards of the slot.
pub fn run_baseline_full(config: &ExperimentConfig, run_id: u64) -> Result<RunMetrics> {
    config.validate()?;
    let inst = &config.instance;
    let (n, k) = (config.agents, inst.k());
    let plan = RandomnessPlan::new(config.seed);
    let mut streams = Streams::new(&plan, run_id, n, k);
    let arms: Vec<usize> = (0..k).collect();
    let mut counts = vec![0u64; k];
    let mut sums = vec![0u64; k];
    let mut ledger = RegretLedger::new(n, config.checkpoints());
    let mut choices = choice_buffers(config);
    for t in 1..=config.horizon {
        let arm = ucb_argmax(&arms, &counts, &sums, config.alpha * (t as f64).ln());
        for i in 0..n {
            let reward = draw_reward(inst, arm, &mut streams.reward[i][arm])?;
            counts[arm] += 1;
            sums[arm] += u64::from(reward);
            ledger.record_pull(inst, i, arm, t)?;
            if let Some(c) = choices.as_mut() {
                c[i].push(arm as u32);
            }
        }
    }
    baseline_metrics(config, run_id, ledger, choices)
}

/// Run `run_id` of whatever protocol `config` names.
pub fn run_once(config: &ExperimentConfig, run_id: u64) -> Result<RunMetrics> {
    match config.protocol {
        Protocol::BaselineNocomm => run_baseline_nocomm(config, run_id),
        Protocol::BaselineFull => run_baseline_full(config, run_id),
        _ => run_gosine(config, run_id),
    }
}

/// All `config.runs` runs on a pool of `jobs` threads, ordered by run id.
pub fn run_all(config: &ExperimentConfig, jobs: usize) -> Result<Vec<RunMetrics>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|r| run_once(config, r))
            .collect()
    })
}

/// Earliest point after which no playing set changes and every set holds
/// the best arm. The phase is that of the last change (0 if none); `None`
/// when some final set lacks the best arm or the last change is not followed
/// by any logged boundary.
pub fn detect_freeze(metrics: &RunMetrics, instance: &BanditInstance) -> Option<Freeze> {
    let best = instance.best_arm();
    if !metrics.final_sets.iter().all(|s| s.contains(&best)) {
        return None;
    }
    let Some(last) = metrics
        .changes
        .iter()
        .max_by_key(|c| (c.slot, c.phase))
    else {
        return Some(Freeze { phase: 0, slot: 0 });
    };
    let last_boundary = metrics.pulls.iter().map(|p| p.slot).max().unwrap_or(0);
    (last_boundary > last.slot).then_some(Freeze {
        phase: last.phase,
        slot: last.slot,
    })
}

/// Check `#pulls up to t <= B_t` for every agent and every `t <= horizon`.
///
/// The count only rises at pull slots and `B_t` is nondecreasing, so testing
/// each pull slot covers every `t`.
pub fn audit_budget(metrics: &RunMetrics, schedule: &CommSchedule, horizon: u64) -> BudgetAudit {
    let n = metrics.n_agents();
    let mode = if metrics.protocol == Protocol::GosineAsyncPoisson {
        AuditMode::Statistical
    } else {
        AuditMode::Exact
    };
    let mut slots = vec![Vec::new(); n];
    for p in metrics.pulls.iter().filter(|p| p.slot <= horizon) {
        slots[p.agent].push(p.slot);
    }
    let mut violations = Vec::new();
    let mut violation_count = 0;
    for (agent, slots) in slots.iter_mut().enumerate() {
        slots.sort_unstable();
        for (idx, &slot) in slots.iter().enumerate() {
            let pulls = idx as u64 + 1;
            let budget = schedule.budget(slot);
            if pulls > budget {
                violation_count += 1;
                if violations.len() < REPORTED_VIOLATIONS {
                    violations.push(BudgetViolation {
                        agent,
                        slot,
                        pulls,
                        budget,
                    });
                }
            }
        }
    }
    let pulls_at_horizon: Vec<u64> = slots.iter().map(|s| s.len() as u64).collect();
    let mean_pulls_at_horizon = pulls_at_horizon.iter().sum::<u64>() as f64 / n.max(1) as f64;
    BudgetAudit {
        passed: mode == AuditMode::Statistical || violation_count == 0,
        mode,
        violation_count,
        violations,
        pulls_at_horizon,
        mean_pulls_at_horizon,
        budget_at_horizon: schedule.budget(horizon),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub checkpoints: Vec<u64>,
    /// Per checkpoint: mean over runs of the agent-averaged regret, with CI.
    pub points: Vec<MeanEstimate>,
}

impl Summary {
    pub fn final_point(&self) -> &MeanEstimate {
        self.points.last().expect("summaries have at least one checkpoint")
    }
}

pub fn aggregate(runs: &[RunMetrics], label: &str) -> Result<Summary> {
    if runs.len() < 2 {
        return Err(Error::Aggregation(format!(
            "confidence intervals need at least 2 runs, got {}",
            runs.len()
        )));
    }
    let checkpoints = runs[0].checkpoints.clone();
    if let Some(bad) = runs.iter().find(|r| r.checkpoints != checkpoints) {
        return Err(Error::Aggregation(format!(
            "run {} uses a different checkpoint grid",
            bad.run_id
        )));
    }
    let points = (0..checkpoints.len())
        .map(|c| {
            let values: Vec<f64> = runs.iter().map(|r| r.mean_agent_regret_at(c)).collect();
            MeanEstimate::from_samples(&values)
        })
        .collect();
    Ok(Summary {
        label: label.to_string(),
        checkpoints,
        points,
    })
}
