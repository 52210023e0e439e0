//! Standalone PULL rumor spreading on a gossip matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::GossipNetwork;
use crate::rng::{Purpose, RandomnessPlan, Stream};
use crate::schedule::CommSchedule;

/// Default step cap: `64 * N * log2(N + 1)`.
pub fn default_step_cap(n: usize) -> u64 {
    (64.0 * n as f64 * ((n + 1) as f64).log2()).ceil() as u64
}

/// Steps until every node knows the rumor that starts at `source`.
///
/// In each step every uninformed node calls a node drawn from its row and is
/// informed at the end of the step iff the callee was informed at its start.
pub fn simulate_pull_spreading(
    net: &GossipNetwork,
    source: usize,
    stream: &mut Stream,
    step_cap: u64,
) -> Result<u64> {
    let n = net.n_agents();
    if source >= n {
        return Err(Error::Input(format!("source {source} out of range for {n} nodes")));
    }
    let mut informed = vec![false; n];
    informed[source] = true;
    let mut remaining = n - 1;
    let mut newly = Vec::with_capacity(n);
    let mut steps = 0;
    while remaining > 0 {
        if steps >= step_cap {
            return Err(Error::SpreadingCapExceeded { cap: step_cap });
        }
        steps += 1;
        newly.clear();
        for node in 0..n {
            if !informed[node] && informed[net.sample_target(node, stream)] {
                newly.push(node);
            }
        }
        for &node in &newly {
            informed[node] = true;
        }
        remaining -= newly.len();
    }
    Ok(steps)
}

/// Spreading times of `trials` independent runs from `source`, one stream per trial.
pub fn spreading_samples(
    net: &GossipNetwork,
    source: usize,
    plan: &RandomnessPlan,
    trials: u64,
    step_cap: u64,
) -> Result<Vec<u64>> {
    (0..trials)
        .map(|trial| {
            let mut stream = plan.stream(0, source as u64, Purpose::Spreading { trial });
            simulate_pull_spreading(net, source, &mut stream, step_cap)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Normal-approximation 95% half-width.
    pub ci_halfwidth: f64,
    pub samples: u64,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci_halfwidth = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Self {
            mean,
            ci_halfwidth,
            samples: n as u64,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.ci_halfwidth
    }
}

/// Monte Carlo estimate of `E[A_{multiplier * tau_spr}]` with the rumor starting at node 0.
pub fn estimate_spreading_cost(
    net: &GossipNetwork,
    schedule: &CommSchedule,
    multiplier: u64,
    trials: u64,
    plan: &RandomnessPlan,
) -> Result<MeanEstimate> {
    if trials == 0 {
        return Err(Error::Input("spreading cost needs at least one trial".into()));
    }
    let cap = default_step_cap(net.n_agents());
    let costs = spreading_samples(net, 0, plan, trials, cap)?
        .into_iter()
        .map(|tau| schedule.time(multiplier * tau).map(|a| a as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanEstimate::from_samples(&costs))
}

/// Histogram of spreading times as `(steps, count)` pairs, ascending.
pub fn histogram(samples: &[u64]) -> Vec<(u64, u64)> {
    let mut counts = std::collections::BTreeMap::new();
    for &s in samples {
        *counts.entry(s).or_insert(0u64) += 1;
    }
    counts.into_iter().collect()
}

pub fn median(samples: &[u64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    }
}
