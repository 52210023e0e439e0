//! Communication budgets and the information-pull schedule derived from them.
//!
//! A budget `B_t` caps how many information pulls an agent may make in the
//! first `t` slots. The schedule places pull `x` (0-based) at
//!
//! ```text
//! A_x = max( min{ t >= 1 : B_t >= x + 1 }, ceil((1 + x)^(1 + eps)) )
//! ```
//!
//! so that the number of pulls made by slot `t` never exceeds `B_t`, and the
//! gaps between pulls grow at least polynomially. `A_{-1} = 0` by convention.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default exponent slack `eps`.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BudgetSpec {
    /// `B_t = floor(t^(1/beta))`, `beta > 1`.
    Polynomial { beta: f64 },
    /// `B_t = floor(log_base(t))`, `base > 1`.
    Logarithmic { base: f64 },
    /// `B_t = t`.
    Linear,
    /// `B_t = values[t - 1]`, held constant past the end of the list.
    Explicit { values: Vec<u64> },
}

impl BudgetSpec {
    /// Parse `poly:beta=3`, `log:base=2`, `linear` or `file:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let bad = |reason: String| Error::config("budget", reason);
        let parsed = if spec == "linear" {
            BudgetSpec::Linear
        } else if let Some(path) = spec.strip_prefix("file:") {
            let text = std::fs::read_to_string(Path::new(path))?;
            Self::parse_explicit(&text)?
        } else if let Some(rest) = spec.strip_prefix("poly:") {
            BudgetSpec::Polynomial {
                beta: parse_param(rest, "beta").map_err(bad)?,
            }
        } else if let Some(rest) = spec.strip_prefix("log:") {
            BudgetSpec::Logarithmic {
                base: parse_param(rest, "base").map_err(bad)?,
            }
        } else {
            return Err(bad(format!(
                "unknown budget `{spec}` (expected poly:beta=<b>, log:base=<b>, linear or file:<path>)"
            )));
        };
        parsed.validate()?;
        Ok(parsed)
    }

    /// One integer per line, blank lines and `#` comments skipped.
    pub fn parse_explicit(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            values.push(line.parse::<u64>().map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("`{line}` is not a nonnegative integer: {e}"),
            })?);
        }
        let spec = BudgetSpec::Explicit { values };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BudgetSpec::Polynomial { beta } if !(*beta > 1.0 && beta.is_finite()) => Err(
                Error::config("budget", format!("polynomial budget needs beta > 1, got {beta}")),
            ),
            BudgetSpec::Logarithmic { base } if !(*base > 1.0 && base.is_finite()) => Err(
                Error::config("budget", format!("logarithmic budget needs base > 1, got {base}")),
            ),
            BudgetSpec::Explicit { values } if values.windows(2).any(|w| w[1] < w[0]) => Err(
                Error::config("budget", "explicit budget must be nondecreasing"),
            ),
            _ => Ok(()),
        }
    }

    /// `B_t`; `B_0 = 0`.
    pub fn budget(&self, t: u64) -> u64 {
        if t == 0 {
            return 0;
        }
        match self {
            BudgetSpec::Polynomial { beta } => integer_root(t, *beta),
            BudgetSpec::Logarithmic { base } => integer_log(t, *base),
            BudgetSpec::Linear => t,
            BudgetSpec::Explicit { values } => {
                let idx = usize::try_from(t - 1).unwrap_or(usize::MAX);
                values
                    .get(idx)
                    .or(values.last())
                    .copied()
                    .unwrap_or(0)
            }
        }
    }

    /// `min{ t >= 1 : B_t >= m }`, or `None` if the budget never gets there.
    pub fn first_slot_reaching(&self, m: u64) -> Option<u64> {
        if m == 0 {
            return Some(1);
        }
        let guess = match self {
            BudgetSpec::Linear => return Some(m),
            BudgetSpec::Explicit { values } => {
                let idx = values.partition_point(|&b| b < m);
                return (idx < values.len()).then_some(idx as u64 + 1);
            }
            BudgetSpec::Polynomial { beta } => (m as f64).powf(*beta).ceil(),
            BudgetSpec::Logarithmic { base } => base.powf(m as f64).ceil(),
        };
        if !(guess < 9.0e18) {
            return None;
        }
        let mut t = (guess as u64).max(1);
        while t > 1 && self.budget(t - 1) >= m {
            t -= 1;
        }
        while self.budget(t) < m {
            t += 1;
        }
        Some(t)
    }
}

impl fmt::Display for BudgetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetSpec::Polynomial { beta } => write!(f, "poly:beta={beta}"),
            BudgetSpec::Logarithmic { base } => write!(f, "log:base={base}"),
            BudgetSpec::Linear => write!(f, "linear"),
            BudgetSpec::Explicit { values } => write!(f, "explicit[{}]", values.len()),
        }
    }
}

fn parse_param(rest: &str, name: &str) -> std::result::Result<f64, String> {
    let value = rest
        .strip_prefix(name)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| format!("expected `{name}=<value>`, got `{rest}`"))?;
    value
        .parse::<f64>()
        .map_err(|e| format!("`{value}` is not a number: {e}"))
}

fn pow_u128(base: u64, exp: u32) -> Option<u128> {
    (base as u128).checked_pow(exp)
}

fn as_integer(v: f64) -> Option<u32> {
    (v.fract() == 0.0 && v > 0.0 && v < 64.0).then_some(v as u32)
}

/// Largest `b` with `b^beta <= t`.
fn integer_root(t: u64, beta: f64) -> u64 {
    let fits = |b: u64| -> bool {
        match as_integer(beta) {
            Some(p) => pow_u128(b, p).is_some_and(|v| v <= t as u128),
            None => (b as f64).powf(beta) <= t as f64,
        }
    };
    let mut b = (t as f64).powf(1.0 / beta).floor() as u64;
    while b > 0 && !fits(b) {
        b -= 1;
    }
    while fits(b + 1) {
        b += 1;
    }
    b
}

/// Largest `m` with `base^m <= t`.
fn integer_log(t: u64, base: f64) -> u64 {
    let fits = |m: u64| -> bool {
        match as_integer(base) {
            Some(b) => u32::try_from(m)
                .ok()
                .and_then(|m| pow_u128(u64::from(b), m))
                .is_some_and(|v| v <= t as u128),
            None => base.powf(m as f64) <= t as f64,
        }
    };
    let mut m = ((t as f64).ln() / base.ln()).floor().max(0.0) as u64;
    while m > 0 && !fits(m) {
        m -= 1;
    }
    while fits(m + 1) {
        m += 1;
    }
    m
}

/// `ceil((1 + x)^(1 + eps))`, exact when the exponent is an integer.
fn separation_floor(x: u64, epsilon: f64) -> Option<u64> {
    let exponent = 1.0 + epsilon;
    if let Some(p) = as_integer(exponent) {
        return pow_u128(x + 1, p).and_then(|v| u64::try_from(v).ok());
    }
    let v = ((x + 1) as f64).powf(exponent).ceil();
    (v < 1.8e19).then_some(v as u64)
}

/// The pull-slot sequence `(A_x)` for one budget.
///
/// Values are computed on demand from closed forms (or a binary search over
/// an explicit budget). Where the raw formula can repeat a slot (budgets
/// that jump by more than one, or log bases below 2) the affected prefix is
/// tabulated with `A_x >= A_{x-1} + 1` so that pulls never share a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CommSchedule {
    spec: BudgetSpec,
    epsilon: f64,
    prefix: Vec<u64>,
}

impl CommSchedule {
    pub fn new(spec: BudgetSpec, epsilon: f64) -> Result<Self> {
        spec.validate()?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config("epsilon", format!("must be > 0, got {epsilon}")));
        }
        let mut schedule = Self {
            spec,
            epsilon,
            prefix: Vec::new(),
        };
        schedule.prefix = schedule.strict_prefix();
        Ok(schedule)
    }

    /// First index past which the raw formula is strictly increasing by itself.
    fn raw_strict_from(&self) -> u64 {
        match &self.spec {
            BudgetSpec::Polynomial { .. } | BudgetSpec::Linear => 0,
            BudgetSpec::Logarithmic { base } if *base >= 2.0 => 0,
            // b^(x+1) (b - 1) >= 1 from here on
            BudgetSpec::Logarithmic { base } => {
                ((1.0 / (base - 1.0)).ln() / base.ln()).ceil().max(0.0) as u64
            }
            BudgetSpec::Explicit { .. } => u64::MAX,
        }
    }

    fn strict_prefix(&self) -> Vec<u64> {
        let from = self.raw_strict_from();
        let mut out: Vec<u64> = Vec::new();
        let mut x = 0u64;
        while let Ok(raw) = self.raw_time(x) {
            let prev = out.last().copied();
            if x >= from && prev.is_none_or(|p| raw > p) {
                break;
            }
            out.push(prev.map_or(raw, |p| raw.max(p + 1)));
            x += 1;
        }
        out
    }

    fn raw_time(&self, x: u64) -> Result<u64> {
        let needed = x + 1;
        let by_budget = self
            .spec
            .first_slot_reaching(needed)
            .ok_or(Error::ScheduleExhausted { needed })?;
        let separation =
            separation_floor(x, self.epsilon).ok_or(Error::ScheduleExhausted { needed })?;
        Ok(by_budget.max(separation))
    }

    pub fn spec(&self) -> &BudgetSpec {
        &self.spec
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn budget(&self, t: u64) -> u64 {
        self.spec.budget(t)
    }

    /// `A_x`, the slot of the `x`-th information pull.
    pub fn time(&self, x: u64) -> Result<u64> {
        match self.prefix.get(x as usize) {
            Some(&a) => Ok(a),
            None if matches!(self.spec, BudgetSpec::Explicit { .. }) => {
                Err(Error::ScheduleExhausted { needed: x + 1 })
            }
            None => self.raw_time(x),
        }
    }

    /// `A_x` with the `A_{-1} = 0` convention.
    pub fn time_signed(&self, x: i64) -> Result<u64> {
        if x < 0 {
            Ok(0)
        } else {
            self.time(x as u64)
        }
    }

    /// `A_x` as a float, extended past the `u64` range by the asymptotic formula.
    pub fn time_f64(&self, x: u64) -> f64 {
        match self.time(x) {
            Ok(v) => v as f64,
            Err(_) => {
                let sep = ((x + 1) as f64).powf(1.0 + self.epsilon);
                let budget = match &self.spec {
                    BudgetSpec::Polynomial { beta } => ((x + 1) as f64).powf(*beta),
                    BudgetSpec::Logarithmic { base } => base.powf((x + 1) as f64),
                    BudgetSpec::Linear => (x + 1) as f64,
                    BudgetSpec::Explicit { .. } => f64::INFINITY,
                };
                sep.max(budget)
            }
        }
    }

    /// Length of phase `j`: `A_j - A_{j-1}`.
    pub fn gap(&self, j: u64) -> Result<u64> {
        let prev = if j == 0 { 0 } else { self.time(j - 1)? };
        Ok(self.time(j)? - prev)
    }

    /// `sup{ y : A_y <= t }`, and 0 when no pull happens by `t`.
    pub fn inverse(&self, t: u64) -> u64 {
        self.count_until(t).saturating_sub(1)
    }

    /// Number of pulls scheduled in slots `1..=t`.
    pub fn count_until(&self, t: u64) -> u64 {
        let at_most = |y: u64| self.time(y).is_ok_and(|a| a <= t);
        if !at_most(0) {
            return 0;
        }
        // A_y > y, so every y with A_y <= t is below t.
        let (mut lo, mut hi) = (0u64, t);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if at_most(mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo + 1
    }

    /// Pull slots `A_0, A_1, ...` up to and including `horizon`.
    pub fn times_until(&self, horizon: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut x = 0;
        while let Ok(a) = self.time(x) {
            if a > horizon {
                break;
            }
            out.push(a);
            x += 1;
        }
        out
    }

    pub fn validate_assumptions(
        &self,
        horizon: u64,
        probe_count: usize,
        kappa: Option<f64>,
    ) -> Result<AssumptionReport> {
        if horizon < 10 {
            return Err(Error::Input(format!("horizon must be >= 10, got {horizon}")));
        }
        let probe_count = probe_count.max(2);
        let opts = SeriesOptions::default();

        // (a) B_t / ln t on log-spaced probes from t = 2.
        let lo = 2f64.ln();
        let hi = (horizon as f64).ln();
        let mut probes: Vec<(u64, f64)> = Vec::with_capacity(probe_count);
        for i in 0..probe_count {
            let t = (lo + (hi - lo) * i as f64 / (probe_count - 1) as f64).exp().round() as u64;
            let t = t.clamp(2, horizon);
            if probes.last().is_some_and(|(p, _)| *p == t) {
                continue;
            }
            probes.push((t, self.budget(t) as f64 / (t as f64).ln()));
        }
        let infimum = probes.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let early_max = probes[..probes.len().div_ceil(2)]
            .iter()
            .map(|p| p.1)
            .fold(0.0, f64::max);
        let final_ratio = probes.last().map_or(0.0, |p| p.1);
        let trending_to_zero = final_ratio <= 1e-12 || final_ratio < 0.5 * early_max;
        let log_growth = LogGrowthCheck {
            probes,
            infimum,
            final_ratio,
            trending_to_zero,
        };

        // (b) midpoint convexity on a grid of pull indices.
        let x_max = self.inverse(horizon);
        let grid: Vec<u64> = if x_max < probe_count as u64 {
            (0..=x_max).collect()
        } else {
            let mut g: Vec<u64> = (0..probe_count)
                .map(|i| (x_max as f64 * i as f64 / (probe_count - 1) as f64).round() as u64)
                .collect();
            g.dedup();
            g
        };
        let mut pairs_checked = 0usize;
        let mut violations = Vec::new();
        for (a, &x) in grid.iter().enumerate() {
            for &y in &grid[a..] {
                pairs_checked += 1;
                let mid = self.time_f64((x + y) / 2);
                if mid > 0.5 * (self.time_f64(x) + self.time_f64(y)) {
                    violations.push((x, y));
                }
            }
        }
        let convexity = ConvexityCheck {
            pairs_checked,
            passed: violations.is_empty(),
            violations,
        };

        // (c) sum_{l >= 2} A_{2l} / A_{l-1}^3
        let cubic_ratio = sum_series(
            2,
            |l| self.time_f64(2 * l) / self.time_f64(l - 1).powi(3),
            &opts,
        );

        // (d) sum_{x >= 1} A_{A_x} exp(-kappa (A_x - A_{x-1}))
        let a3 = kappa.map(|kappa| {
            sum_series(
                1,
                |x| {
                    let ax = self.time_f64(x);
                    let inner = if ax < 9.0e18 {
                        self.time_f64(ax as u64)
                    } else {
                        f64::INFINITY
                    };
                    let log_term = inner.ln() - kappa * (ax - self.time_f64(x - 1));
                    log_term.exp()
                },
                &opts,
            )
        });

        Ok(AssumptionReport {
            horizon,
            log_growth,
            convexity,
            cubic_ratio_series: cubic_ratio,
            a3_series: a3,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// Stop once a term drops below this.
    pub tolerance: f64,
    /// Last index summed.
    pub max_index: u64,
    /// Flag divergence after this many consecutive non-decreasing terms.
    pub divergence_run: u64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_index: 1_000_000,
            divergence_run: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub start: u64,
    pub last_index: u64,
    pub partial_sum: f64,
    pub last_term: f64,
    /// `last_term * r / (1 - r)` with `r` the ratio of the final two terms, or
    /// infinity when the terms were not shrinking.
    pub truncation_bound: f64,
    pub converged: bool,
    pub diverging: bool,
}

/// Sum `term(l)` for `l >= start` until a term falls below the tolerance.
pub fn sum_series(start: u64, term: impl Fn(u64) -> f64, opts: &SeriesOptions) -> SeriesReport {
    let mut sum = 0.0;
    let mut prev;
    let mut last = f64::NAN;
    let mut run = 0u64;
    let mut l = start;
    let mut diverging = false;
    let mut converged = false;
    loop {
        let value = term(l);
        if !value.is_finite() {
            diverging = true;
            prev = last;
            last = value;
            break;
        }
        sum += value;
        if last.is_finite() && value >= last {
            run += 1;
        } else {
            run = 0;
        }
        prev = last;
        last = value;
        if value < opts.tolerance {
            converged = true;
            break;
        }
        if run >= opts.divergence_run {
            diverging = true;
            break;
        }
        if l >= opts.max_index {
            break;
        }
        l += 1;
    }
    let ratio = last / prev;
    let truncation_bound = if ratio.is_finite() && ratio < 1.0 {
        last * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    SeriesReport {
        start,
        last_index: l,
        partial_sum: sum,
        last_term: last,
        truncation_bound,
        converged,
        diverging,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogGrowthCheck {
    pub probes: Vec<(u64, f64)>,
    pub infimum: f64,
    pub final_ratio: f64,
    pub trending_to_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub pairs_checked: usize,
    pub violations: Vec<(u64, u64)>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub horizon: u64,
    pub log_growth: LogGrowthCheck,
    pub convexity: ConvexityCheck,
    pub cubic_ratio_series: SeriesReport,
    pub a3_series: Option<SeriesReport>,
}
