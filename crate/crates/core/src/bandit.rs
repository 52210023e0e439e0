//! Bernoulli arms and per-agent regret bookkeeping.
//!
//! Arms are indexed from 0. Means are stored in the order they arrive; the
//! index of the unique best arm is kept explicitly.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RandomnessPlan, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    arm_means: Vec<f64>,
    best_arm: usize,
    gaps: Vec<f64>,
}

impl BanditInstance {
    pub fn new(arm_means: Vec<f64>) -> Result<Self> {
        if arm_means.len() < 2 {
            return Err(Error::Input(format!(
                "a bandit instance needs at least 2 arms, got {}",
                arm_means.len()
            )));
        }
        if let Some((i, m)) = arm_means
            .iter()
            .enumerate()
            .find(|(_, m)| !(**m > 0.0 && **m < 1.0))
        {
            return Err(Error::Input(format!(
                "arm {i} has mean {m}, expected a value strictly inside (0, 1)"
            )));
        }
        let best = arm_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let maximizers: Vec<usize> = (0..arm_means.len())
            .filter(|&j| arm_means[j] == best)
            .collect();
        if maximizers.len() != 1 {
            return Err(Error::Input(format!(
                "best arm must be unique, arms {maximizers:?} share mean {best}"
            )));
        }
        let gaps = arm_means.iter().map(|m| best - m).collect();
        Ok(Self {
            arm_means,
            best_arm: maximizers[0],
            gaps,
        })
    }

    /// Synthetic instance: one arm at `best`, one at `second`, and the rest
    /// uniform on `(0, second]`, with arm positions shuffled.
    pub fn from_recipe(k: usize, best: f64, second: f64, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Input(format!("recipe needs k >= 2, got {k}")));
        }
        if !(0.0 < second && second < best && best < 1.0) {
            return Err(Error::Input(format!(
                "recipe needs 0 < second < best < 1, got best={best} second={second}"
            )));
        }
        let mut stream = RandomnessPlan::new(seed).stream(0, 0, Purpose::Instance);
        let mut means = Vec::with_capacity(k);
        means.push(best);
        means.push(second);
        for _ in 2..k {
            let u: f64 = stream.random();
            means.push(second * (1.0 - u));
        }
        means.shuffle(&mut stream);
        Self::new(means)
    }

    /// One mean per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_means(&text)
    }

    pub fn parse_means(text: &str) -> Result<Self> {
        let mut means = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim().trim_end_matches(',');
            if line.is_empty() {
                continue;
            }
            let value = line.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("`{line}` is not a number: {e}"),
            })?;
            means.push(value);
        }
        Self::new(means)
    }

    pub fn k(&self) -> usize {
        self.arm_means.len()
    }

    pub fn arm_means(&self) -> &[f64] {
        &self.arm_means
    }

    pub fn best_arm(&self) -> usize {
        self.best_arm
    }

    pub fn best_mean(&self) -> f64 {
        self.arm_means[self.best_arm]
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn gap(&self, arm: usize) -> f64 {
        self.gaps[arm]
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }

    /// Gaps of the suboptimal arms, smallest first.
    pub fn sorted_positive_gaps(&self) -> Vec<f64> {
        let mut gaps: Vec<f64> = (0..self.k())
            .filter(|&j| j != self.best_arm)
            .map(|j| self.gaps[j])
            .collect();
        gaps.sort_by(f64::total_cmp);
        gaps
    }
}

/// Draw a Bernoulli reward for `arm`. Consumes exactly one `f64` from `stream`.
pub fn draw_reward(instance: &BanditInstance, arm: usize, stream: &mut Stream) -> Result<u8> {
    let mean = *instance.arm_means.get(arm).ok_or_else(|| {
        Error::Input(format!("arm {arm} out of range for {} arms", instance.k()))
    })?;
    let u: f64 = stream.random();
    Ok(u8::from(u < mean))
}

/// Time slots `⌈growth^k⌉` for k = 0, 1, ... up to `horizon`, plus `horizon` itself.
pub fn log_checkpoints(horizon: u64, growth: f64) -> Vec<u64> {
    assert!(growth > 1.0, "checkpoint growth must exceed 1");
    let mut points = Vec::new();
    let mut k = 0i32;
    loop {
        let t = growth.powi(k).ceil();
        if t > horizon as f64 {
            break;
        }
        let t = t as u64;
        if points.last() != Some(&t) {
            points.push(t);
        }
        k += 1;
    }
    if points.last() != Some(&horizon) {
        points.push(horizon);
    }
    points
}

/// Cumulative regret of every agent, sampled on a shared checkpoint grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    checkpoints: Vec<u64>,
    cumulative: Vec<f64>,
    last_slot: Vec<u64>,
    cursor: Vec<usize>,
    trajectories: Vec<Vec<f64>>,
}

impl RegretLedger {
    pub fn new(n_agents: usize, checkpoints: Vec<u64>) -> Self {
        debug_assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
        Self {
            cumulative: vec![0.0; n_agents],
            last_slot: vec![0; n_agents],
            cursor: vec![0; n_agents],
            trajectories: vec![Vec::with_capacity(checkpoints.len()); n_agents],
            checkpoints,
        }
    }

    pub fn record_pull(
        &mut self,
        instance: &BanditInstance,
        agent: usize,
        arm: usize,
        t: u64,
    ) -> Result<()> {
        let last = self.last_slot[agent];
        if t <= last {
            return Err(Error::Sequencing { agent, slot: t, last });
        }
        let gap = *instance.gaps.get(arm).ok_or_else(|| {
            Error::Input(format!("arm {arm} out of range for {} arms", instance.k()))
        })?;
        self.last_slot[agent] = t;
        self.cumulative[agent] += gap;
        let cursor = &mut self.cursor[agent];
        while *cursor < self.checkpoints.len() && self.checkpoints[*cursor] < t {
            *cursor += 1;
        }
        if *cursor < self.checkpoints.len() && self.checkpoints[*cursor] == t {
            self.trajectories[agent].push(self.cumulative[agent]);
            *cursor += 1;
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.cumulative.len()
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    pub fn cumulative(&self, agent: usize) -> f64 {
        self.cumulative[agent]
    }

    /// Regret values at the checkpoints reached so far.
    pub fn trajectory(&self, agent: usize) -> &[f64] {
        &self.trajectories[agent]
    }

    pub fn trajectories(&self) -> &[Vec<f64>] {
        &self.trajectories
    }
}
