//! Per-agent insert-eliminate state machine.
//!
//! An agent plays UCB-α inside a small playing set made of a fixed sticky
//! block plus two free slots `U` and `L`. At the end of every phase it asks a
//! random neighbor for an arm; an unknown arm replaces whichever free slot was
//! played less during the phase.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::schedule::CommSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecommendMode {
    CurrentPhase,
    PreviousPhase,
}

/// How long an agent stays in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PhasePolicy {
    /// Phase `j` is exactly `A_j - A_{j-1}` slots.
    Synchronous,
    /// Uniform integer on `[g, floor((1 + delta) g)]` with `g = A_j - A_{j-1}`.
    AsyncUniform { delta: f64 },
    /// Poisson with mean `(1 + delta / 2) g`; may overrun the budget.
    AsyncPoisson { delta: f64 },
}

impl PhasePolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            PhasePolicy::AsyncUniform { delta } | PhasePolicy::AsyncPoisson { delta }
                if !(*delta > 0.0 && delta.is_finite()) =>
            {
                Err(Error::config("delta", format!("must be > 0, got {delta}")))
            }
            _ => Ok(()),
        }
    }

    pub fn recommend_mode(&self) -> RecommendMode {
        match self {
            PhasePolicy::Synchronous => RecommendMode::CurrentPhase,
            _ => RecommendMode::PreviousPhase,
        }
    }

    /// Length of phase `j` in slots. Never zero: a zero Poisson draw is
    /// rounded up to one slot.
    pub fn draw_phase_length(
        &self,
        schedule: &CommSchedule,
        j: u64,
        stream: &mut Stream,
    ) -> Result<u64> {
        let gap = schedule.gap(j)?;
        Ok(match *self {
            PhasePolicy::Synchronous => gap,
            PhasePolicy::AsyncUniform { delta } => {
                let hi = ((1.0 + delta) * gap as f64).floor() as u64;
                stream.random_range(gap..=hi.max(gap))
            }
            PhasePolicy::AsyncPoisson { delta } => {
                let mean = (1.0 + delta / 2.0) * gap as f64;
                let poisson = Poisson::new(mean)
                    .map_err(|e| Error::Domain(format!("poisson mean {mean}: {e}")))?;
                let draw: f64 = poisson.sample(stream);
                (draw as u64).max(1)
            }
        })
    }
}

/// Sticky block, initial playing set and free slots of one agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialSets {
    pub sticky: Vec<usize>,
    pub playing: Vec<usize>,
    /// `(U_0, L_0)`, or `None` when the playing set already holds every arm.
    pub slots: Option<(usize, usize)>,
}

/// Identity-based initialization for agent `agent` (0-based) of `n`.
///
/// The sticky set is the block of `ceil(K/N)` consecutive arms (mod K)
/// starting at `agent * ceil(K/N)`; `U_0` and `L_0` are the two arms that
/// cyclically follow it. When `ceil(K/N) + 2 >= K` the playing set is all arms.
pub fn init_sticky(agent: usize, k: usize, n: usize) -> InitialSets {
    let c = k.div_ceil(n);
    let start = agent * c;
    let mut sticky: Vec<usize> = (0..c).map(|o| (start + o) % k).collect();
    sticky.sort_unstable();
    if c + 2 >= k {
        // U and L would wrap back into the sticky block
        return InitialSets {
            sticky,
            playing: (0..k).collect(),
            slots: None,
        };
    }
    let u = (start + c) % k;
    let l = (start + c + 1) % k;
    let mut playing = sticky.clone();
    playing.extend([u, l]);
    playing.sort_unstable();
    InitialSets {
        sticky,
        playing,
        slots: Some((u, l)),
    }
}

/// Identity-free initialization: a uniform playing set of size
/// `ceil(ln(1/gamma) K / N) + 2` and a uniform sticky subset of it of size
/// `ceil(ln(1/gamma) K / N)`, clamped to at least one sticky arm.
pub fn init_sticky_random(k: usize, n: usize, gamma: f64, stream: &mut Stream) -> Result<InitialSets> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config("gamma", format!("must lie in (0, 1), got {gamma}")));
    }
    let sticky_size = ((1.0 / gamma).ln() * k as f64 / n as f64).ceil().max(1.0) as usize;
    let total = sticky_size + 2;
    if total > k {
        return Err(Error::config(
            "gamma",
            format!("random playing set of size {total} does not fit in {k} arms"),
        ));
    }
    let mut playing: Vec<usize> = index::sample(stream, k, total).into_vec();
    let mut sticky: Vec<usize> = index::sample(stream, total, sticky_size)
        .into_iter()
        .map(|i| playing[i])
        .collect();
    playing.sort_unstable();
    sticky.sort_unstable();
    let free: Vec<usize> = playing.iter().copied().filter(|a| !sticky.contains(a)).collect();
    Ok(InitialSets {
        sticky,
        playing,
        slots: Some((free[0], free[1])),
    })
}

/// A playing-set replacement at the end of a phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetChange {
    /// The phase that ended.
    pub phase: u64,
    pub old: Vec<usize>,
    pub new: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    id: usize,
    sticky: Vec<usize>,
    playing: Vec<usize>,
    slots: Option<(usize, usize)>,
    set_size: usize,
    phase: u64,
    counts: Vec<u64>,
    sums: Vec<u64>,
    phase_counts: Vec<u64>,
    prev_phase_counts: Vec<u64>,
    prev_most_played: Option<usize>,
}

impl AgentState {
    pub fn new(id: usize, k: usize, sets: InitialSets) -> Self {
        let set_size = sets.playing.len();
        Self {
            id,
            sticky: sets.sticky,
            playing: sets.playing,
            slots: sets.slots,
            set_size,
            phase: 0,
            counts: vec![0; k],
            sums: vec![0; k],
            phase_counts: vec![0; k],
            prev_phase_counts: vec![0; k],
            prev_most_played: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn sticky(&self) -> &[usize] {
        &self.sticky
    }

    /// Playing set, ascending by arm.
    pub fn playing(&self) -> &[usize] {
        &self.playing
    }

    pub fn slots(&self) -> Option<(usize, usize)> {
        self.slots
    }

    pub fn phase(&self) -> u64 {
        self.phase
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    pub fn phase_count(&self, arm: usize) -> u64 {
        self.phase_counts[arm]
    }

    pub fn prev_phase_count(&self, arm: usize) -> u64 {
        self.prev_phase_counts[arm]
    }

    pub fn empirical_mean(&self, arm: usize) -> f64 {
        if self.counts[arm] == 0 {
            0.0
        } else {
            self.sums[arm] as f64 / self.counts[arm] as f64
        }
    }

    /// UCB-α choice for slot `t` from the statistics through `t - 1`.
    pub fn select_arm(&self, t: u64, alpha: f64) -> usize {
        self.select_arm_with_log(alpha * (t as f64).ln())
    }

    /// [`Self::select_arm`] with `alpha * ln t` precomputed.
    pub fn select_arm_with_log(&self, alpha_log_t: f64) -> usize {
        ucb_argmax(&self.playing, &self.counts, &self.sums, alpha_log_t)
    }

    pub fn record_reward(&mut self, arm: usize, reward: u8) -> Result<()> {
        if self.playing.binary_search(&arm).is_err() {
            return Err(Error::Protocol(format!(
                "agent {} played arm {arm} outside its playing set {:?}",
                self.id, self.playing
            )));
        }
        self.counts[arm] += 1;
        self.sums[arm] += u64::from(reward);
        self.phase_counts[arm] += 1;
        Ok(())
    }

    /// Most played arm of the current phase (or of the previous one), ties to
    /// the lowest arm. Previous-phase mode in phase 0 falls back to the
    /// current phase.
    pub fn recommend(&self, mode: RecommendMode) -> usize {
        match (mode, self.prev_most_played) {
            (RecommendMode::PreviousPhase, Some(arm)) if self.phase > 0 => arm,
            _ => most_played(&self.playing, &self.phase_counts),
        }
    }

    /// End the current phase with recommendation `rec`.
    ///
    /// Returns the set change if `rec` was not already being played.
    pub fn apply_recommendation(&mut self, rec: usize) -> Result<Option<SetChange>> {
        if rec >= self.k() {
            return Err(Error::Protocol(format!(
                "recommended arm {rec} out of range for {} arms",
                self.k()
            )));
        }
        let ending = self.phase;
        let mut change = None;
        if let Some((u, l)) = self.slots {
            if self.playing.binary_search(&rec).is_err() {
                let keep = if self.phase_counts[u] >= self.phase_counts[l] { u } else { l };
                let old = self.playing.clone();
                self.slots = Some((keep, rec));
                self.playing = self.sticky.clone();
                self.playing.extend([keep, rec]);
                self.playing.sort_unstable();
                change = Some(SetChange {
                    phase: ending,
                    old,
                    new: self.playing.clone(),
                });
            }
        }
        // over the updated set: an arm dropped on a count tie is never reported
        self.prev_most_played = Some(most_played(&self.playing, &self.phase_counts));
        std::mem::swap(&mut self.prev_phase_counts, &mut self.phase_counts);
        self.phase_counts.iter_mut().for_each(|c| *c = 0);
        self.phase += 1;
        Ok(change)
    }

    /// Shape invariants of the sets; `Err` names the first one broken.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if !self.sticky.iter().all(|a| self.playing.binary_search(a).is_ok()) {
            return Err(format!("sticky {:?} not inside {:?}", self.sticky, self.playing));
        }
        if self.playing.len() != self.set_size {
            return Err(format!("playing set size {} != {}", self.playing.len(), self.set_size));
        }
        if self.playing.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("playing set {:?} not strictly ascending", self.playing));
        }
        if let Some((u, l)) = self.slots {
            if u == l || self.sticky.contains(&u) || self.sticky.contains(&l) {
                return Err(format!("free slots ({u}, {l}) collide"));
            }
            let mut expect = self.sticky.clone();
            expect.extend([u, l]);
            expect.sort_unstable();
            if expect != self.playing {
                return Err(format!("sticky + slots {expect:?} != {:?}", self.playing));
            }
        }
        Ok(())
    }
}

/// UCB-α argmax over `arms` (ascending); unplayed arms first, ties to the lowest arm.
pub fn ucb_argmax(arms: &[usize], counts: &[u64], sums: &[u64], alpha_log_t: f64) -> usize {
    let mut best = arms[0];
    let mut best_index = f64::NEG_INFINITY;
    for &arm in arms {
        let n = counts[arm];
        if n == 0 {
            return arm;
        }
        let n = n as f64;
        let index = sums[arm] as f64 / n + (alpha_log_t / n).sqrt();
        if index > best_index {
            best_index = index;
            best = arm;
        }
    }
    best
}

fn most_played(arms: &[usize], counts: &[u64]) -> usize {
    let mut best = arms[0];
    for &arm in &arms[1..] {
        if counts[arm] > counts[best] {
            best = arm;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RandomnessPlan};
    use crate::schedule::BudgetSpec;

    /// 1-based view for comparing against hand-worked examples.
    fn one_based(v: &[usize]) -> Vec<usize> {
        v.iter().map(|a| a + 1).collect()
    }

    fn state_with(sticky: &[usize], u: usize, l: usize, k: usize) -> AgentState {
        let mut playing = sticky.to_vec();
        playing.extend([u, l]);
        playing.sort_unstable();
        AgentState::new(
            0,
            k,
            InitialSets {
                sticky: sticky.to_vec(),
                playing,
                slots: Some((u, l)),
            },
        )
    }

    fn play(state: &mut AgentState, arm: usize, times: usize) {
        for _ in 0..times {
            state.record_reward(arm, 1).unwrap();
        }
    }

    #[test]
    fn init_k_equals_n() {
        let sets = init_sticky(1, 5, 5);
        assert_eq!(one_based(&sets.sticky), vec![2]);
        assert_eq!(one_based(&sets.playing), vec![2, 3, 4]);
    }

    #[test]
    fn init_wraps_around() {
        let sets = init_sticky(2, 6, 3);
        assert_eq!(one_based(&sets.sticky), vec![5, 6]);
        let (u, l) = sets.slots.unwrap();
        assert_eq!((u + 1, l + 1), (1, 2));
        assert_eq!(one_based(&sets.playing), vec![1, 2, 5, 6]);
    }

    #[test]
    fn init_saturates_small_instances() {
        let sets = init_sticky(0, 3, 2);
        assert_eq!(sets.playing, vec![0, 1, 2]);
        assert!(sets.slots.is_none());
    }

    #[test]
    fn sticky_blocks_cover_all_arms() {
        for (k, n) in [(20, 5), (75, 25), (50, 15), (7, 3), (10, 4), (3, 5)] {
            let mut covered = vec![false; k];
            for i in 0..n {
                let sets = init_sticky(i, k, n);
                assert_eq!(sets.sticky.len(), k.div_ceil(n));
                assert_eq!(sets.playing.len(), k.min(k.div_ceil(n) + 2));
                for a in sets.sticky {
                    covered[a] = true;
                }
            }
            assert!(covered.iter().all(|c| *c), "K={k} N={n}");
        }
    }

    #[test]
    fn random_init_sizes() {
        let mut s = RandomnessPlan::new(1).stream(0, 0, Purpose::Init);
        let sets = init_sticky_random(10, 5, (-1.0f64).exp(), &mut s).unwrap();
        assert_eq!(sets.playing.len(), 4);
        assert_eq!(sets.sticky.len(), 2);
        let (u, l) = sets.slots.unwrap();
        assert!(u < l);
        // ln(1/gamma) close to zero clamps to one sticky arm
        let sets = init_sticky_random(5, 5, 0.999, &mut s).unwrap();
        assert_eq!((sets.sticky.len(), sets.playing.len()), (1, 3));
        assert!(init_sticky_random(6, 3, 0.05, &mut s).is_err());
        assert!(init_sticky_random(6, 3, 1.5, &mut s).is_err());
    }

    #[test]
    fn unplayed_arm_goes_first() {
        let mut st = state_with(&[2], 6, 9, 10);
        play(&mut st, 2, 1);
        assert_eq!(st.select_arm(5, 4.0), 6);
    }

    #[test]
    fn ucb_index_example() {
        // arm 0: mean 0.5 over 10 pulls, index ~1.857; arm 1: mean 0.4 over 5, index ~2.320
        let counts = [10, 5];
        let sums = [5, 2];
        assert_eq!(ucb_argmax(&[0, 1], &counts, &sums, 4.0 * 100f64.ln()), 1);
    }

    #[test]
    fn ucb_ties_go_to_lowest_arm() {
        let counts = [0, 0, 4, 0, 0, 0, 0, 0, 0, 4];
        let sums = [0, 0, 2, 0, 0, 0, 0, 0, 0, 2];
        assert_eq!(ucb_argmax(&[2, 9], &counts, &sums, 3.0), 2);
    }

    #[test]
    fn record_reward_statistics() {
        let mut st = state_with(&[0], 3, 4, 6);
        st.record_reward(4, 1).unwrap();
        assert_eq!((st.empirical_mean(4), st.count(4)), (1.0, 1));
        let mut st = state_with(&[0], 3, 4, 6);
        for r in [1, 0, 1] {
            st.record_reward(3, r).unwrap();
        }
        assert!((st.empirical_mean(3) - 2.0 / 3.0).abs() < 1e-12);
        st.apply_recommendation(0).unwrap();
        assert_eq!(st.phase_count(3), 0);
        assert_eq!(st.prev_phase_count(3), 3);
        assert_eq!(st.count(3), 3);
        assert!(matches!(st.record_reward(5, 1), Err(Error::Protocol(_))));
    }

    #[test]
    fn recommend_most_played() {
        let mut st = state_with(&[0], 4, 1, 6);
        play(&mut st, 0, 3);
        play(&mut st, 4, 7);
        play(&mut st, 1, 1);
        assert_eq!(st.recommend(RecommendMode::CurrentPhase), 4);
        let mut st = state_with(&[1], 4, 0, 6);
        play(&mut st, 1, 7);
        play(&mut st, 4, 7);
        assert_eq!(st.recommend(RecommendMode::CurrentPhase), 1);
    }

    #[test]
    fn previous_phase_recommendation() {
        let mut st = state_with(&[0], 1, 2, 6);
        play(&mut st, 2, 4);
        // phase 0: falls back to the current phase
        assert_eq!(st.recommend(RecommendMode::PreviousPhase), 2);
        st.apply_recommendation(0).unwrap();
        play(&mut st, 1, 9);
        assert_eq!(st.recommend(RecommendMode::PreviousPhase), 2);
        assert_eq!(st.recommend(RecommendMode::CurrentPhase), 1);
    }

    #[test]
    fn insert_eliminate_keeps_more_played_slot() {
        // 1-based: sticky {1,2}, U=3 (12 plays), L=4 (5 plays), O=6
        let mut st = state_with(&[0, 1], 2, 3, 8);
        play(&mut st, 2, 12);
        play(&mut st, 3, 5);
        let change = st.apply_recommendation(5).unwrap().unwrap();
        assert_eq!(one_based(&change.new), vec![1, 2, 3, 6]);
        assert_eq!(st.slots(), Some((2, 5)));

        let mut st = state_with(&[0, 1], 2, 3, 8);
        play(&mut st, 2, 2);
        play(&mut st, 3, 9);
        st.apply_recommendation(5).unwrap();
        assert_eq!(one_based(st.playing()), vec![1, 2, 4, 6]);
        assert_eq!(st.slots(), Some((3, 5)));
    }

    #[test]
    fn known_recommendation_only_advances_phase() {
        let mut st = state_with(&[0, 1], 2, 3, 8);
        assert!(st.apply_recommendation(1).unwrap().is_none());
        assert_eq!(st.playing(), &[0, 1, 2, 3]);
        assert_eq!(st.phase(), 1);
        assert!(st.apply_recommendation(8).is_err());
    }

    #[test]
    fn slot_tie_keeps_u() {
        let mut st = state_with(&[0], 1, 2, 5);
        play(&mut st, 1, 3);
        play(&mut st, 2, 3);
        st.apply_recommendation(4).unwrap();
        assert_eq!(st.slots(), Some((1, 4)));
    }

    #[test]
    fn dropped_arm_is_not_recommended_next_phase() {
        // sticky {2, 3}, U=4, L=0; an empty phase ties everything at zero
        let mut st = AgentState::new(1, 5, init_sticky(1, 5, 3));
        st.apply_recommendation(1).unwrap();
        assert_eq!(st.playing(), &[1, 2, 3, 4]);
        assert_eq!(st.recommend(RecommendMode::PreviousPhase), 1);
    }

    #[test]
    fn saturated_sets_never_change() {
        let mut st = AgentState::new(0, 3, init_sticky(0, 3, 2));
        play(&mut st, 2, 4);
        assert!(st.apply_recommendation(1).unwrap().is_none());
        assert_eq!(st.playing(), &[0, 1, 2]);
    }

    #[test]
    fn arm_can_leave_and_return() {
        // agent A: sticky {0}, U=1, L=2; agent B feeds it recommendations
        let mut a = state_with(&[0], 1, 2, 5);
        let mut b = state_with(&[3], 4, 0, 5);
        play(&mut a, 1, 5);
        play(&mut a, 2, 1);
        play(&mut b, 3, 8);
        a.apply_recommendation(b.recommend(RecommendMode::CurrentPhase)).unwrap();
        assert_eq!(a.playing(), &[0, 1, 3]);
        b.apply_recommendation(0).unwrap();
        // B now favors arm 4; A learns it and drops arm 3 instead of arm 1
        play(&mut b, 4, 9);
        play(&mut a, 1, 6);
        a.apply_recommendation(b.recommend(RecommendMode::CurrentPhase)).unwrap();
        assert_eq!(a.playing(), &[0, 1, 4]);
        b.apply_recommendation(2).unwrap();
        play(&mut b, 2, 9);
        play(&mut a, 1, 6);
        a.apply_recommendation(b.recommend(RecommendMode::CurrentPhase)).unwrap();
        assert_eq!(a.playing(), &[0, 1, 2], "arm 2 came back");
        a.check_invariants().unwrap();
    }

    #[test]
    fn phase_lengths() {
        let cubic = CommSchedule::new(BudgetSpec::Polynomial { beta: 3.0 }, 0.1).unwrap();
        let mut s = RandomnessPlan::new(4).stream(0, 0, Purpose::PhaseLength);
        assert_eq!(cubic.time(1).unwrap(), 8);
        assert_eq!(PhasePolicy::Synchronous.draw_phase_length(&cubic, 2, &mut s).unwrap(), 19);

        let uniform = PhasePolicy::AsyncUniform { delta: 0.5 };
        let mut hist = [0u32; 10];
        let draws = 100_000;
        for _ in 0..draws {
            let len = uniform.draw_phase_length(&cubic, 2, &mut s).unwrap();
            assert!((19..=28).contains(&len));
            hist[(len - 19) as usize] += 1;
        }
        for h in hist {
            assert!((f64::from(h) / f64::from(draws) - 0.1).abs() < 0.006);
        }

        let poisson = PhasePolicy::AsyncPoisson { delta: 0.5 };
        let total: u64 = (0..100_000)
            .map(|_| poisson.draw_phase_length(&cubic, 2, &mut s).unwrap())
            .sum();
        let mean = total as f64 / 100_000.0;
        assert!((mean / 23.75 - 1.0).abs() < 0.01, "mean {mean}");

        assert!(PhasePolicy::AsyncUniform { delta: 0.0 }.validate().is_err());
    }
}
