//! The quenched walk: single steps, fixed-horizon runs, and hitting times
//! with their left-crossing profile.

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentRealization;
use crate::rng::{derive_seed, trajectory_rng, Domain, TrajectoryRng};

/// Source of the uniform words that drive the walk.
///
/// A step from `site` goes right iff the word is below `omega_site * 2^64`.
pub trait StepSource {
    fn next_word(&mut self, site: i64) -> u64;
}

/// Time-indexed stream: the `t`-th step uses the `t`-th word.
#[derive(Debug, Clone)]
pub struct TimeStream<R>(pub R);

impl<R: RngCore> StepSource for TimeStream<R> {
    #[inline]
    fn next_word(&mut self, _site: i64) -> u64 {
        self.0.next_u64()
    }
}

/// Site-indexed stacks: the `k`-th departure from site `i` uses the `k`-th word
/// of a stream keyed by `(seed, i)`. Under this coupling `T_n` is monotone in
/// the environment.
#[derive(Debug, Clone)]
pub struct SiteStacks {
    seed: u64,
    stacks: HashMap<i64, TrajectoryRng>,
}

impl SiteStacks {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            stacks: HashMap::new(),
        }
    }
}

impl StepSource for SiteStacks {
    fn next_word(&mut self, site: i64) -> u64 {
        let seed = self.seed;
        self.stacks
            .entry(site)
            .or_insert_with(|| trajectory_rng(derive_seed(seed, &[site as u64]), Domain::Walk))
            .next_u64()
    }
}

/// Scripted directions (`true` = right), then a fixed direction forever.
#[derive(Debug, Clone)]
pub struct ForcedSteps {
    script: Vec<bool>,
    next: usize,
    then_right: bool,
}

impl ForcedSteps {
    pub fn new(script: Vec<bool>, then_right: bool) -> Self {
        Self {
            script,
            next: 0,
            then_right,
        }
    }

    pub fn always_right() -> Self {
        Self::new(Vec::new(), true)
    }

    pub fn always_left() -> Self {
        Self::new(Vec::new(), false)
    }
}

impl StepSource for ForcedSteps {
    fn next_word(&mut self, _site: i64) -> u64 {
        let right = self.script.get(self.next).copied().unwrap_or(self.then_right);
        self.next += 1;
        if right {
            0
        } else {
            u64::MAX
        }
    }
}

/// Default trajectory source for a walk seed.
pub fn walk_source(seed: u64) -> TimeStream<TrajectoryRng> {
    TimeStream(trajectory_rng(seed, Domain::Walk))
}

#[inline]
fn threshold(omega: f64) -> u64 {
    // omega < 1, so the product stays below 2^64
    (omega * 18_446_744_073_709_551_616.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WalkState {
    pub position: i64,
    pub time: u64,
}

/// One step of the quenched chain.
pub fn step<S: StepSource>(state: WalkState, realization: &EnvironmentRealization, source: &mut S) -> WalkState {
    let right = source.next_word(state.position) < threshold(realization.omega_at(state.position));
    WalkState {
        position: state.position + if right { 1 } else { -1 },
        time: state.time + 1,
    }
}

/// Dense cache of step thresholds over the visited interval, which is always contiguous.
struct Window<'a> {
    env: &'a EnvironmentRealization,
    lo: i64,
    thresholds: Vec<u64>,
    left_counts: Vec<u64>,
}

const GROW: i64 = 4096;

impl<'a> Window<'a> {
    fn new(env: &'a EnvironmentRealization, lo: i64, hi: i64) -> Self {
        let thresholds: Vec<u64> = env.omega_range(lo, hi).into_iter().map(threshold).collect();
        let len = thresholds.len();
        Self {
            env,
            lo,
            thresholds,
            left_counts: vec![0; len],
        }
    }

    fn hi(&self) -> i64 {
        self.lo + self.thresholds.len() as i64
    }

    #[cold]
    fn grow_left(&mut self, site: i64) {
        let extra = (self.lo - site).max(self.thresholds.len() as i64).max(GROW);
        let new_lo = self.lo - extra;
        let mut t: Vec<u64> = self.env.omega_range(new_lo, self.lo).into_iter().map(threshold).collect();
        t.extend_from_slice(&self.thresholds);
        self.thresholds = t;
        let mut c = vec![0; extra as usize];
        c.extend_from_slice(&self.left_counts);
        self.left_counts = c;
        self.lo = new_lo;
    }

    #[cold]
    fn grow_right(&mut self, site: i64) {
        let hi = self.hi();
        let extra = (site + 1 - hi).max(self.thresholds.len() as i64).max(GROW);
        self.thresholds
            .extend(self.env.omega_range(hi, hi + extra).into_iter().map(threshold));
        self.left_counts.resize(self.thresholds.len(), 0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub position: i64,
    pub min_position: i64,
    pub max_position: i64,
}

/// `X_n` after exactly `n` steps from the origin.
pub fn run_to_time<S: StepSource>(realization: &EnvironmentRealization, n: u64, source: &mut S) -> RunSummary {
    let mut w = Window::new(realization, -GROW, GROW);
    let (mut pos, mut min, mut max) = (0i64, 0i64, 0i64);
    for _ in 0..n {
        if pos < w.lo {
            w.grow_left(pos);
        } else if pos >= w.hi() {
            w.grow_right(pos);
        }
        let idx = (pos - w.lo) as usize;
        if source.next_word(pos) < w.thresholds[idx] {
            pos += 1;
            max = max.max(pos);
        } else {
            pos -= 1;
            min = min.min(pos);
        }
    }
    RunSummary {
        steps: n,
        position: pos,
        min_position: min,
        max_position: max,
    }
}

pub fn run_to_time_seeded(realization: &EnvironmentRealization, n: u64, seed: u64) -> RunSummary {
    run_to_time(realization, n, &mut walk_source(seed))
}

/// `T_n` together with the left-crossing counts `U_i^n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub target: i64,
    /// `None` when the step cap was reached first.
    pub hitting_time: Option<u64>,
    pub steps: u64,
    /// Nonzero `U_i^n`, keyed by site.
    pub left_counts: BTreeMap<i64, u64>,
    pub min_position: i64,
}

impl HittingRecord {
    pub fn capped(&self) -> bool {
        self.hitting_time.is_none()
    }

    pub fn total_left_moves(&self) -> u64 {
        self.left_counts.values().sum()
    }

    /// `sum_{i <= 0} U_i^n`.
    pub fn left_tail_mass(&self) -> u64 {
        self.left_counts.range(..=0).map(|(_, c)| c).sum()
    }

    /// `sum_{i = 1}^{n} U_i^n`.
    pub fn positive_left_moves(&self) -> u64 {
        self.left_counts.range(1..).map(|(_, c)| c).sum()
    }
}

/// Walk from the origin until `target` is first hit or `step_cap` steps elapse.
pub fn hitting_time<S: StepSource>(
    realization: &EnvironmentRealization,
    target: i64,
    step_cap: u64,
    source: &mut S,
) -> HittingRecord {
    assert!(target >= 1, "target must be positive");
    let mut w = Window::new(realization, -GROW.min(target), target);
    let (mut pos, mut min, mut t) = (0i64, 0i64, 0u64);
    while pos != target && t < step_cap {
        if pos < w.lo {
            w.grow_left(pos);
        }
        let idx = (pos - w.lo) as usize;
        if source.next_word(pos) < w.thresholds[idx] {
            pos += 1;
        } else {
            w.left_counts[idx] += 1;
            pos -= 1;
            min = min.min(pos);
        }
        t += 1;
    }
    let left_counts = w
        .left_counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (w.lo + k as i64, c))
        .collect();
    HittingRecord {
        target,
        hitting_time: (pos == target).then_some(t),
        steps: t,
        left_counts,
        min_position: min,
    }
}

pub fn hitting_time_seeded(realization: &EnvironmentRealization, target: i64, step_cap: u64, seed: u64) -> HittingRecord {
    hitting_time(realization, target, step_cap, &mut walk_source(seed))
}

/// `T_n = n + 2 sum_i U_i^n`, in exact integer arithmetic. False for capped records.
pub fn verify_identity(record: &HittingRecord) -> bool {
    let Some(t) = record.hitting_time else {
        return false;
    };
    let sum: u128 = record.left_counts.values().map(|&c| u128::from(c)).sum();
    record.target >= 0 && u128::from(t) == record.target as u128 + 2 * sum
}

/// `sum_{i <= 0} U_i^n` for one seeded run; `None` if the cap was hit.
pub fn left_tail_mass(realization: &EnvironmentRealization, target: i64, step_cap: u64, seed: u64) -> Option<u64> {
    let rec = hitting_time_seeded(realization, target, step_cap, seed);
    (!rec.capped()).then(|| rec.left_tail_mass())
}

/// `10 * target^(1/kappa_hat) * 100`, saturating.
pub fn default_step_cap(target: i64, kappa_hat: f64) -> u64 {
    let cap = 1000.0 * (target.max(1) as f64).powf(1.0 / kappa_hat.clamp(1e-3, 1.0));
    if cap >= u64::MAX as f64 {
        u64::MAX
    } else {
        cap as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvironmentModel;

    fn constant(omega: f64) -> EnvironmentRealization {
        EnvironmentModel::constant(omega, 1).unwrap().realize()
    }

    #[test]
    fn forced_steps_move_one_site() {
        let env = constant(0.5);
        let s = step(WalkState::default(), &env, &mut ForcedSteps::always_right());
        assert_eq!(s, WalkState { position: 1, time: 1 });
        let s = step(WalkState::default(), &env, &mut ForcedSteps::always_left());
        assert_eq!(s, WalkState { position: -1, time: 1 });
    }

    #[test]
    fn zero_steps_stay_at_origin() {
        let env = constant(2.0 / 3.0);
        let r = run_to_time_seeded(&env, 0, 5);
        assert_eq!(r.position, 0);
        assert_eq!(r.min_position, 0);
    }

    #[test]
    fn monotone_path_hits_directly() {
        let env = constant(0.5);
        let rec = hitting_time(&env, 5, 100, &mut ForcedSteps::always_right());
        assert_eq!(rec.hitting_time, Some(5));
        assert!(rec.left_counts.is_empty());
        assert!(verify_identity(&rec));
        assert_eq!(rec.left_tail_mass(), 0);
    }

    #[test]
    fn hand_checked_path() {
        // 0 -> -1 -> 0 -> 1
        let env = constant(0.5);
        let mut src = ForcedSteps::new(vec![false, true, true], true);
        let rec = hitting_time(&env, 1, 100, &mut src);
        assert_eq!(rec.hitting_time, Some(3));
        assert_eq!(rec.left_counts, BTreeMap::from([(0, 1)]));
        assert_eq!(rec.min_position, -1);
        assert!(verify_identity(&rec));
    }

    #[test]
    fn tampered_record_fails_identity() {
        let env = constant(0.5);
        let mut src = ForcedSteps::new(vec![false, true, true], true);
        let mut rec = hitting_time(&env, 1, 100, &mut src);
        *rec.left_counts.get_mut(&0).unwrap() += 1;
        assert!(!verify_identity(&rec));
    }

    #[test]
    fn capped_record_is_flagged() {
        let env = constant(0.5);
        let rec = hitting_time(&env, 3, 10, &mut ForcedSteps::always_left());
        assert!(rec.capped());
        assert_eq!(rec.steps, 10);
        assert_eq!(rec.min_position, -10);
        assert!(!verify_identity(&rec));
    }

    #[test]
    fn deep_left_excursion_grows_window() {
        let env = constant(0.5);
        let mut script = vec![false; 10_000];
        script.extend(vec![true; 10_001]);
        let rec = hitting_time(&env, 1, u64::MAX, &mut ForcedSteps::new(script, true));
        assert_eq!(rec.hitting_time, Some(20_001));
        assert_eq!(rec.min_position, -10_000);
        assert_eq!(*rec.left_counts.keys().next().unwrap(), -9_999);
        assert!(verify_identity(&rec));
    }

    #[test]
    fn step_matches_windowed_run() {
        let env = EnvironmentModel::make_iid_two_point(2.0 / 3.0, 1.0 / 3.0, 0.4, 8)
            .unwrap()
            .realize();
        let mut a = walk_source(3);
        let mut s = WalkState::default();
        for _ in 0..5000 {
            s = step(s, &env, &mut a);
        }
        assert_eq!(run_to_time_seeded(&env, 5000, 3).position, s.position);
    }

    #[test]
    fn default_cap_grows_superlinearly() {
        assert_eq!(default_step_cap(100, 0.5), 10_000_000);
        assert!(default_step_cap(1 << 20, 0.01) > 1 << 60);
    }
}
