//! TOML experiment files and command-line overrides.
//!
//! ```toml
//! instance = "recipe:k=20:best=0.95:second=0.85:seed=1"
//! agents = 5
//! protocol = "gosine-sync"
//! graph = "complete"
//! budget = "poly:beta=3"
//! horizon = 200000
//! runs = 30
//! seed = 7
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::bandit::BanditInstance;
use crate::error::{Error, Result};
use crate::network::GraphSpec;
use crate::schedule::BudgetSpec;
use crate::sim::{ExperimentConfig, Protocol};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    instance: Option<String>,
    means: Option<Vec<f64>>,
    agents: Option<usize>,
    protocol: Option<String>,
    graph: Option<String>,
    budget: Option<String>,
    epsilon: Option<f64>,
    alpha: Option<f64>,
    delta: Option<f64>,
    gamma: Option<f64>,
    horizon: Option<u64>,
    runs: Option<u64>,
    seed: Option<u64>,
    checkpoint_growth: Option<f64>,
}

/// Values given on the command line; each replaces the file's entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<u64>,
    pub horizon: Option<u64>,
    pub protocol: Option<String>,
    pub graph: Option<String>,
    pub budget: Option<String>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
}

/// Parse `recipe:k=<k>[:best=<b>][:second=<s>][:seed=<n>]`, `file:<path>`
/// or a comma-separated list of means.
pub fn parse_instance(spec: &str) -> Result<BanditInstance> {
    let spec = spec.trim();
    if let Some(path) = spec.strip_prefix("file:") {
        return BanditInstance::from_file(Path::new(path));
    }
    if let Some(rest) = spec.strip_prefix("recipe:") {
        let (mut k, mut best, mut second, mut seed) = (None, 0.95, 0.85, 0u64);
        for part in rest.split(':') {
            let bad = |e: &dyn std::fmt::Display| Error::config("instance", format!("bad `{part}`: {e}"));
            match part.split_once('=') {
                Some(("k", v)) => k = Some(v.parse::<usize>().map_err(|e| bad(&e))?),
                Some(("best", v)) => best = v.parse().map_err(|e| bad(&e))?,
                Some(("second", v)) => second = v.parse().map_err(|e| bad(&e))?,
                Some(("seed", v)) => seed = v.parse().map_err(|e| bad(&e))?,
                _ => return Err(Error::config("instance", format!("unexpected `{part}` in `{spec}`"))),
            }
        }
        let k = k.ok_or_else(|| Error::config("instance", "recipe needs k=<arms>"))?;
        return BanditInstance::from_recipe(k, best, second, seed);
    }
    let means = spec
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::config("instance", format!("`{}` is not a mean: {e}", v.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    BanditInstance::new(means)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse configuration text; relative `file:` paths resolve against the
/// working directory.
pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<(ExperimentConfig, Vec<String>)> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    build(raw, overrides)
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<(ExperimentConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, overrides)
}

/// A configuration from overrides alone, for runs without a file.
pub fn config_from_overrides(instance: &str, agents: usize, overrides: &Overrides) -> Result<(ExperimentConfig, Vec<String>)> {
    let raw = RawConfig {
        instance: Some(instance.to_string()),
        agents: Some(agents),
        ..RawConfig::default()
    };
    build(raw, overrides)
}

fn build(raw: RawConfig, o: &Overrides) -> Result<(ExperimentConfig, Vec<String>)> {
    let (instance, source) = match (&raw.instance, &raw.means) {
        (Some(_), Some(_)) => return Err(Error::config("instance", "give either `instance` or `means`, not both")),
        (Some(spec), None) => (parse_instance(spec)?, spec.clone()),
        (None, Some(means)) => (BanditInstance::new(means.clone())?, "means".to_string()),
        (None, None) => return Err(Error::config("instance", "missing (set `instance` or `means`)")),
    };
    let agents = raw.agents.ok_or_else(|| Error::config("agents", "missing"))?;
    let mut c = ExperimentConfig::new(instance, agents);
    c.instance_source = source;
    if let Some(p) = o.protocol.as_ref().or(raw.protocol.as_ref()) {
        c.protocol = p.parse::<Protocol>()?;
    }
    if let Some(g) = o.graph.as_ref().or(raw.graph.as_ref()) {
        c.graph = GraphSpec::parse(g)?;
    }
    if let Some(b) = o.budget.as_ref().or(raw.budget.as_ref()) {
        c.budget = BudgetSpec::parse(b)?;
    }
    if let Some(v) = o.epsilon.or(raw.epsilon) {
        c.epsilon = v;
    }
    if let Some(v) = o.alpha.or(raw.alpha) {
        c.alpha = v;
    }
    if let Some(v) = o.delta.or(raw.delta) {
        c.delta = v;
    }
    c.gamma = o.gamma.or(raw.gamma);
    if let Some(v) = o.horizon.or(raw.horizon) {
        c.horizon = v;
    }
    if let Some(v) = o.runs.or(raw.runs) {
        c.runs = v;
    }
    if let Some(v) = o.seed.or(raw.seed) {
        c.seed = v;
    }
    if let Some(v) = raw.checkpoint_growth {
        c.checkpoint_growth = v;
    }
    let warnings = c.validate()?;
    Ok((c, warnings))
}
