//! Closed-form regret bound terms, evaluated numerically.

use serde::{Deserialize, Serialize};

use crate::bandit::BanditInstance;
use crate::error::{Error, Result};
use crate::network::GossipNetwork;
use crate::rng::RandomnessPlan;
use crate::schedule::{sum_series, CommSchedule, SeriesOptions, SeriesReport};
use crate::spreading::{estimate_spreading_cost, MeanEstimate};

/// Upper end of the forward scan used by [`j_star`].
pub const J_SCAN_BOUND: u64 = 10_000_000;

/// Bernoulli KL divergence `KL(a, b)` with `0 ln 0 = 0`.
pub fn kl_bernoulli(a: f64, b: f64) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Domain(format!("KL second argument must lie in (0, 1), got {b}")));
    }
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!("KL first argument must lie in [0, 1], got {a}")));
    }
    let term = |p: f64, q: f64| if p == 0.0 { 0.0 } else { p * (p / q).ln() };
    Ok((term(a, b) + term(1.0 - a, 1.0 - b)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    /// `(1/N) sum_j Delta_j / KL(mu_j, mu_best)`.
    pub kl_form: f64,
    /// `mu_best (1 - mu_best) (1/N) sum_j 1 / Delta_j`.
    pub variance_form: f64,
}

pub fn lower_bound_coefficient(instance: &BanditInstance, n: usize) -> Result<LowerBound> {
    if n == 0 {
        return Err(Error::Input("lower bound needs at least one agent".into()));
    }
    let best = instance.best_mean();
    let mut kl_sum = 0.0;
    let mut inv_sum = 0.0;
    for (arm, &mean) in instance.arm_means().iter().enumerate() {
        if arm == instance.best_arm() {
            continue;
        }
        let gap = instance.gap(arm);
        kl_sum += gap / kl_bernoulli(mean, best)?;
        inv_sum += 1.0 / gap;
    }
    Ok(LowerBound {
        kl_form: kl_sum / n as f64,
        variance_form: best * (1.0 - best) * inv_sum / n as f64,
    })
}

/// The two candidates behind `j*` and their combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JStar {
    pub value: u64,
    /// `A^{-1}((N C(K,2) (ceil(K/N) + 1))^{1/(2 alpha - 6)}) + 1`.
    pub inverse_part: u64,
    /// Smallest `j` with `(A_j - A_{j-1}) / (2 + ceil(K/N)) >= 1 + 4 alpha ln(A_j) / Delta_2^2`.
    pub scan_part: u64,
    /// The threshold handed to `A^{-1}`.
    pub threshold: f64,
}

/// Whether phase `j` is long enough for the `j*` scan condition.
pub fn phase_condition(schedule: &CommSchedule, j: u64, k: usize, n: usize, alpha: f64, gap2: f64) -> Result<bool> {
    let a_j = schedule.time(j)?;
    let len = (a_j - schedule.time_signed(j as i64 - 1)?) as f64;
    let set = (2 + k.div_ceil(n)) as f64;
    Ok(len / set >= 1.0 + 4.0 * alpha * (a_j as f64).ln() / (gap2 * gap2))
}

pub fn j_star(schedule: &CommSchedule, n: usize, k: usize, alpha: f64, gap2: f64) -> Result<JStar> {
    if !(alpha > 3.0) {
        return Err(Error::config("alpha", format!("j* needs alpha > 3, got {alpha}")));
    }
    if !(gap2 > 0.0 && gap2 < 1.0) {
        return Err(Error::Domain(format!("gap must lie in (0, 1), got {gap2}")));
    }
    if n == 0 || k < 2 {
        return Err(Error::Input(format!("j* needs N >= 1 and K >= 2, got N={n} K={k}")));
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let base = n as f64 * pairs * (k.div_ceil(n) + 1) as f64;
    let threshold = base.powf(1.0 / (2.0 * alpha - 6.0));
    let clamped = if threshold >= u64::MAX as f64 { u64::MAX } else { threshold.floor() as u64 };
    let inverse_part = schedule.inverse(clamped) + 1;

    let mut scan_part = None;
    for j in 0..J_SCAN_BOUND {
        match phase_condition(schedule, j, k, n, alpha, gap2) {
            Ok(true) => {
                scan_part = Some(j);
                break;
            }
            Ok(false) => {}
            Err(Error::ScheduleExhausted { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    let scan_part = scan_part.ok_or(Error::ScanExhausted {
        what: "phase-length condition for j*",
        bound: J_SCAN_BOUND,
    })?;
    Ok(JStar {
        value: 2 * inverse_part.max(scan_part),
        inverse_part,
        scan_part,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GTerm {
    pub value: f64,
    pub a_j_star: f64,
    pub tail: SeriesReport,
}

/// `A_{j*} + 2/(2 alpha - 3) sum_{l >= j*/2 - 1} A_{2l+1} / A_{l-1}^3`.
///
/// The tail starts at `l = 1` at the earliest so that `A_{l-1} > 0`.
pub fn g_term(schedule: &CommSchedule, j_star: u64, alpha: f64) -> GTerm {
    g_term_with(schedule, j_star, alpha, &SeriesOptions::default())
}

pub fn g_term_with(schedule: &CommSchedule, j_star: u64, alpha: f64, opts: &SeriesOptions) -> GTerm {
    let start = (j_star / 2).saturating_sub(1).max(1);
    let tail = sum_series(
        start,
        |l| schedule.time_f64(2 * l + 1) / schedule.time_f64(l - 1).powi(3),
        opts,
    );
    let a_j_star = schedule.time_f64(j_star);
    GTerm {
        value: a_j_star + 2.0 / (2.0 * alpha - 3.0) * tail.partial_sum,
        a_j_star,
        tail,
    }
}

/// `sum_{l >= 3} A_{2l} / A_{l-1}^3`.
pub fn async_tail(schedule: &CommSchedule) -> SeriesReport {
    sum_series(
        3,
        |l| schedule.time_f64(2 * l) / schedule.time_f64(l - 1).powi(3),
        &SeriesOptions::default(),
    )
}

/// `2 (1 + delta) (A_{2 ceil(2 + delta) j*} + 2/(2 alpha - 3) sum_{l >= 3} A_{2l} / A_{l-1}^3)`.
pub fn g_hat(schedule: &CommSchedule, delta: f64, j_star: u64, alpha: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::config("delta", format!("must be > 0, got {delta}")));
    }
    let index = 2 * (2.0 + delta).ceil() as u64 * j_star;
    let tail = async_tail(schedule).partial_sum;
    Ok(2.0 * (1.0 + delta) * (schedule.time_f64(index) + 2.0 / (2.0 * alpha - 3.0) * tail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsyncBoundTerms {
    pub g_hat: f64,
    /// Monte Carlo estimate of `E[A_{2 floor(2 + delta) tau_spr}]`.
    pub spreading: MeanEstimate,
    /// `g_hat + (1 + delta) * spreading.mean`.
    pub total: f64,
}

pub fn asynch_bound_terms(
    schedule: &CommSchedule,
    delta: f64,
    j_star: u64,
    alpha: f64,
    net: &GossipNetwork,
    trials: u64,
    plan: &RandomnessPlan,
) -> Result<AsyncBoundTerms> {
    let g_hat = g_hat(schedule, delta, j_star, alpha)?;
    let multiplier = 2 * (2.0 + delta).floor() as u64;
    let spreading = estimate_spreading_cost(net, schedule, multiplier, trials, plan)?;
    Ok(AsyncBoundTerms {
        g_hat,
        spreading,
        total: g_hat + (1.0 + delta) * spreading.mean,
    })
}

/// `min(delta/2 + ln(1 + delta/2), (1 + delta) ln((2 + 2 delta) / (2 + delta)) - delta/2)`.
pub fn c_delta(delta: f64) -> f64 {
    let a = delta / 2.0 + (1.0 + delta / 2.0).ln();
    let b = (1.0 + delta) * ((2.0 + 2.0 * delta) / (2.0 + delta)).ln() - delta / 2.0;
    a.min(b)
}

/// Gaps summed in the leading regret term: the `ceil(K/N) + 1` smallest positive gaps.
pub fn leading_gaps(instance: &BanditInstance, n: usize) -> Vec<f64> {
    let take = instance.k().div_ceil(n) + 1;
    instance.sorted_positive_gaps().into_iter().take(take).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `4 alpha sum 1/Delta` over [`leading_gaps`]; the slope against `ln T`.
    pub leading_coefficient: f64,
    pub additive_constant: f64,
    pub j_star: JStar,
    pub g: GTerm,
    /// `E[A_{2 tau_spr}]`.
    pub spreading: MeanEstimate,
    pub lower_bound: LowerBound,
    pub curve: Vec<BoundPoint>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub t: u64,
    pub leading: f64,
    pub total: f64,
}

impl BoundReport {
    /// Constant part of the curve: everything but the `ln T` term.
    pub fn offset(&self) -> f64 {
        self.additive_constant + self.g.value + self.spreading.mean
    }

    pub fn evaluate(&self, t: u64) -> f64 {
        self.leading_coefficient * (t as f64).ln() + self.offset()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn upper_bound_curve(
    instance: &BanditInstance,
    n: usize,
    schedule: &CommSchedule,
    net: &GossipNetwork,
    alpha: f64,
    t_grid: &[u64],
    spreading_trials: u64,
    plan: &RandomnessPlan,
) -> Result<BoundReport> {
    let mut warnings = Vec::new();
    if alpha <= 3.0 {
        warnings.push(format!("theorem requires α>3, got {alpha}"));
    }
    let gaps = leading_gaps(instance, n);
    let leading_coefficient = 4.0 * alpha * gaps.iter().map(|g| 1.0 / g).sum::<f64>();
    let gap2 = gaps[0];
    // j* is only defined for alpha > 3; evaluate at the requested value regardless
    let j = j_star(schedule, n, instance.k(), alpha.max(3.0 + 1e-9), gap2)?;
    let g = g_term(schedule, j.value, alpha);
    if !g.tail.converged {
        warnings.push(format!("g-term tail did not converge (last index {})", g.tail.last_index));
    }
    let spreading = estimate_spreading_cost(net, schedule, 2, spreading_trials, plan)?;
    let mut report = BoundReport {
        leading_coefficient,
        additive_constant: instance.k() as f64 / 4.0,
        j_star: j,
        g,
        spreading,
        lower_bound: lower_bound_coefficient(instance, n)?,
        curve: Vec::new(),
        warnings,
    };
    report.curve = t_grid
        .iter()
        .map(|&t| BoundPoint {
            t,
            leading: leading_coefficient * (t as f64).ln(),
            total: report.evaluate(t),
        })
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::BudgetSpec;

    fn cubic() -> CommSchedule {
        CommSchedule::new(BudgetSpec::Polynomial { beta: 3.0 }, 0.1).unwrap()
    }

    fn quadratic() -> CommSchedule {
        CommSchedule::new(BudgetSpec::Linear, 1.0).unwrap()
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_bernoulli(0.3, 0.3).unwrap(), 0.0);
        assert!((kl_bernoulli(0.85, 0.95).unwrap() - 0.070250).abs() < 1e-6);
        assert!((kl_bernoulli(0.0, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((kl_bernoulli(1.0, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(kl_bernoulli(0.3, 0.7).unwrap() > 0.0);
        assert!(matches!(kl_bernoulli(0.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(kl_bernoulli(0.5, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn kl_is_asymmetric() {
        let ab = kl_bernoulli(0.3, 0.9).unwrap();
        let ba = kl_bernoulli(0.9, 0.3).unwrap();
        assert!((ab - ba).abs() > 1e-3);
    }

    #[test]
    fn lower_bound_example() {
        let inst = BanditInstance::new(vec![0.95, 0.85]).unwrap();
        let lb = lower_bound_coefficient(&inst, 2).unwrap();
        assert!((lb.kl_form - 0.71174).abs() < 1e-4);
        assert!((lb.variance_form - 0.95 * 0.05 * 10.0 / 2.0).abs() < 1e-12);
        let one = lower_bound_coefficient(&inst, 1).unwrap();
        let four = lower_bound_coefficient(&inst, 4).unwrap();
        assert!((one.kl_form / 2.0 - lb.kl_form).abs() < 1e-15);
        assert!((lb.kl_form / 2.0 - four.kl_form).abs() < 1e-15);
    }

    #[test]
    fn small_gap_matches_second_order_expansion() {
        let mu = 0.95;
        let gap = 1e-3;
        let inst = BanditInstance::new(vec![mu, mu - gap]).unwrap();
        let exact = lower_bound_coefficient(&inst, 1).unwrap().kl_form;
        let approx = gap / (gap * gap / (2.0 * mu * (1.0 - mu)));
        assert!((exact / approx - 1.0).abs() < 0.05, "{exact} vs {approx}");
    }

    #[test]
    fn c_delta_values() {
        assert!((c_delta(0.5) - 0.02348).abs() < 1e-5);
        assert!((c_delta(2.0) - 0.21640).abs() < 1e-5);
        assert!(c_delta(1e-9).abs() < 1e-8);
    }

    #[test]
    fn j_star_self_consistency() {
        let s = cubic();
        let j = j_star(&s, 2, 4, 4.0, 0.1).unwrap();
        assert_eq!(j.value, 2 * j.inverse_part.max(j.scan_part));
        // scan part: first index satisfying the condition, recomputed from the schedule
        let holds = |j: u64| {
            let a = s.time(j).unwrap() as f64;
            let prev = if j == 0 { 0.0 } else { s.time(j - 1).unwrap() as f64 };
            (a - prev) / 4.0 >= 1.0 + 16.0 * a.ln() / 0.01
        };
        assert!(holds(j.scan_part));
        assert!((0..j.scan_part).all(|i| !holds(i)));
        // inverse part: A_{inverse_part - 1} <= threshold < A_{inverse_part}
        let threshold = (2.0f64 * 6.0 * 3.0).powf(0.5);
        assert!((j.threshold - threshold).abs() < 1e-12);
        assert!(s.time(j.inverse_part - 1).unwrap() as f64 <= threshold);
        assert!(s.time(j.inverse_part).unwrap() as f64 > threshold);
        assert_eq!(j_star(&s, 2, 4, 4.0, 0.1).unwrap(), j);
    }

    #[test]
    fn j_star_monotone_in_gap_and_alpha() {
        let s = cubic();
        let mut last = u64::MAX;
        for gap in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let j = j_star(&s, 2, 4, 4.0, gap).unwrap().value;
            assert!(j <= last);
            last = j;
        }
        let mut last = 0;
        for alpha in [6.0, 4.5, 3.5, 3.1, 3.01] {
            let j = j_star(&s, 5, 20, alpha, 0.1).unwrap().inverse_part;
            assert!(j >= last, "alpha {alpha}: {j} < {last}");
            last = j;
        }
        assert!(j_star(&s, 2, 4, 3.0, 0.1).is_err());
    }

    #[test]
    fn cubic_tail_respects_bound_shape() {
        let s = cubic();
        let g = g_term(&s, 0, 4.0);
        let cap = 2.0 * std::f64::consts::PI.powi(2) / 6.0 * 27.0;
        assert!((cap - 88.83).abs() < 0.01);
        assert!(g.tail.converged);
        assert!(g.tail.partial_sum <= cap, "{}", g.tail.partial_sum);
    }

    #[test]
    fn huge_j_star_leaves_only_a_j_star() {
        let s = cubic();
        let g = g_term(&s, 2_000_000, 4.0);
        assert!((g.value / g.a_j_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_tail_is_stable() {
        let s = quadratic();
        let at = |max_index| {
            let opts = SeriesOptions {
                tolerance: 0.0,
                max_index,
                ..SeriesOptions::default()
            };
            g_term_with(&s, 4, 4.0, &opts).tail
        };
        let short = at(5_000);
        let long = at(10_000);
        assert!(long.partial_sum >= short.partial_sum);
        assert!((long.partial_sum - short.partial_sum).abs() < 1e-9);
        let default = g_term(&s, 4, 4.0);
        assert!((default.tail.partial_sum - long.partial_sum).abs() < 1e-9);
    }

    #[test]
    fn async_terms_behave() {
        let s = cubic();
        let j = j_star(&s, 2, 4, 4.0, 0.1).unwrap().value;
        let tail = async_tail(&s).partial_sum;
        // right limit as delta -> 0: ceil(2 + delta) = 3
        let limit = 2.0 * (s.time_f64(6 * j) + 2.0 / 5.0 * tail);
        let near = g_hat(&s, 1e-6, j, 4.0).unwrap();
        assert!((near / limit - 1.0).abs() < 1e-3, "{near} vs {limit}");
        let mut last = 0.0;
        for d in 1..=20 {
            let v = g_hat(&s, d as f64 / 10.0, j, 4.0).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(g_hat(&s, 0.5, j, 4.0).unwrap() >= g_term(&s, j, 4.0).value);

        let net = GossipNetwork::complete(4).unwrap();
        let terms = asynch_bound_terms(&s, 0.5, j, 4.0, &net, 200, &RandomnessPlan::new(3)).unwrap();
        assert!(terms.total >= terms.g_hat && terms.spreading.mean > 0.0);
    }

    #[test]
    fn bound_curve_shape() {
        let inst = BanditInstance::new(vec![0.9, 0.8, 0.7, 0.6, 0.5]).unwrap();
        let s = cubic();
        let net = GossipNetwork::complete(5).unwrap();
        let grid = [10, 100, 1000, 10_000];
        let r = upper_bound_curve(&inst, 5, &s, &net, 4.0, &grid, 100, &RandomnessPlan::new(1)).unwrap();
        // N >= K: three arms, two gaps
        assert!((r.leading_coefficient - 16.0 * (10.0 + 5.0)).abs() < 1e-9);
        assert_eq!(r.additive_constant, 1.25);
        for w in r.curve.windows(2) {
            assert!(w[1].total >= w[0].total);
            let slope = (w[1].total - w[0].total) / ((w[1].t as f64).ln() - (w[0].t as f64).ln());
            assert!((slope / r.leading_coefficient - 1.0).abs() < 1e-9);
        }
        assert!(r.curve.iter().all(|p| p.total >= p.leading && p.leading >= 0.0));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn complete_graph_spreads_cheaper_than_ring() {
        let inst = BanditInstance::new(vec![0.9, 0.8, 0.7, 0.6, 0.5]).unwrap();
        let s = cubic();
        let complete = GossipNetwork::complete(16).unwrap();
        let ring = GossipNetwork::ring(16).unwrap();
        let mut wins = 0;
        for seed in 0..20 {
            let plan = RandomnessPlan::new(seed);
            let a = upper_bound_curve(&inst, 16, &s, &complete, 4.0, &[1000], 100, &plan).unwrap();
            let b = upper_bound_curve(&inst, 16, &s, &ring, 4.0, &[1000], 100, &plan).unwrap();
            assert_eq!(a.leading_coefficient, b.leading_coefficient);
            assert_eq!(a.g, b.g);
            if a.spreading.mean <= b.spreading.mean {
                wins += 1;
            }
        }
        assert!(wins >= 19, "complete cheaper in {wins}/20");
    }
}
