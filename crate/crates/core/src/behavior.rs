//! Sign recognition and navigation decisions.
//!
//! Each agent holds a fixed random recognition threshold per sign. A sign
//! whose attention reaches the threshold joins the seen set for that
//! perception tick; the seen set is ranked by content category (at target,
//! directional clue, irrelevant), then attention, then sign id.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::SignScore;
use crate::environment::{Environment, Location, NamedPoint, Sign, SignAction, SignId};
use crate::scenario::Leg;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of integers into one well-spread seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5151_7EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Uniform [0, 1) threshold for one agent/sign pair. Depends only on its
/// arguments, never on the order in which pairs are drawn.
pub fn threshold_draw(master_seed: u64, replication: u64, agent: u32, sign: SignId) -> f64 {
    let seed = mix_seed(&[0x7448_5245, master_seed, replication, agent as u64, sign.0 as u64]);
    ChaCha8Rng::seed_from_u64(seed).gen::<f64>()
}

/// Recognition thresholds drawn once per replication and never redrawn.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    values: BTreeMap<(u32, SignId), f64>,
}

impl ThresholdTable {
    pub fn get(&self, agent: u32, sign: SignId) -> Option<f64> {
        self.values.get(&(agent, sign)).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn init_thresholds(agents: &[u32], signs: &[SignId], master_seed: u64, replication: u64) -> ThresholdTable {
    let mut values = BTreeMap::new();
    for &a in agents {
        for &s in signs {
            values.insert((a, s), threshold_draw(master_seed, replication, a, s));
        }
    }
    ThresholdTable { values }
}

/// Content category of a sign for the current leg; lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignCategory {
    AtTarget = 1,
    DirectionalClue = 2,
    Irrelevant = 3,
}

impl SignCategory {
    pub fn priority(self) -> u8 {
        self as u8
    }
}

fn label_matches(entry_label: &str, target: &str) -> bool {
    entry_label.to_lowercase() == target.to_lowercase()
}

pub fn categorize_sign(sign: &Sign, target_label: &str) -> SignCategory {
    let matching = || sign.entries.iter().filter(|e| label_matches(&e.label, target_label));
    if matching().any(|e| e.action == SignAction::AtTarget) {
        SignCategory::AtTarget
    } else if matching().any(|e| matches!(e.action, SignAction::DirectTo(_))) {
        SignCategory::DirectionalClue
    } else {
        SignCategory::Irrelevant
    }
}

/// Goal point referenced by the first directional entry matching the target.
pub fn clue_goal<'a>(sign: &'a Sign, target_label: &str) -> Option<&'a str> {
    sign.entries.iter().find_map(|e| match &e.action {
        SignAction::DirectTo(g) if label_matches(&e.label, target_label) => Some(g.as_str()),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NavMode {
    Exploring,
    FollowingClue(String),
    TargetKnown,
    Arrived,
    TimedOut,
}

impl NavMode {
    /// Position in the upgrade order Exploring < FollowingClue < TargetKnown
    /// < terminal modes.
    pub fn rank(&self) -> u8 {
        match self {
            NavMode::Exploring => 0,
            NavMode::FollowingClue(_) => 1,
            NavMode::TargetKnown => 2,
            NavMode::Arrived | NavMode::TimedOut => 3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NavMode::Exploring => "exploring",
            NavMode::FollowingClue(_) => "following_clue",
            NavMode::TargetKnown => "target_known",
            NavMode::Arrived => "arrived",
            NavMode::TimedOut => "timed_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavState {
    pub mode: NavMode,
    pub current_leg: usize,
    pub visited_base_points: BTreeSet<String>,
    /// Clue goals reached during this leg; clues pointing there are spent.
    pub reached_clues: BTreeSet<String>,
}

impl NavState {
    pub fn new(leg: usize) -> Self {
        NavState {
            mode: NavMode::Exploring,
            current_leg: leg,
            visited_base_points: BTreeSet::new(),
            reached_clues: BTreeSet::new(),
        }
    }

    /// The clue goal still being walked towards, if any.
    pub fn active_clue(&self) -> Option<&str> {
        match &self.mode {
            NavMode::FollowingClue(g) if !self.reached_clues.contains(g) => Some(g),
            _ => None,
        }
    }

    pub fn apply(&mut self, d: &Decision) {
        self.mode = d.mode.clone();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Goal {
    Point { id: String, location: Location },
    /// No sign-derived goal: keep searching via base points.
    Explore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// The sign that set a new goal this tick.
    pub chosen_sign: Option<SignId>,
    pub mode: NavMode,
    pub goal: Goal,
    pub changed: bool,
}

/// One scored sign as judged by the agent this tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Judgement {
    pub sign: SignId,
    pub attention: f64,
    pub threshold: f64,
    pub seen: bool,
    pub category: SignCategory,
}

pub fn judge(
    scores: &[SignScore],
    thresholds: &ThresholdTable,
    agent: u32,
    env: &Environment,
    leg: &Leg,
) -> Vec<Judgement> {
    scores
        .iter()
        .filter_map(|s| {
            let sign = env.sign(s.sign)?;
            let threshold = thresholds.get(agent, s.sign).unwrap_or(1.0);
            Some(Judgement {
                sign: s.sign,
                attention: s.attention,
                threshold,
                seen: s.attention >= threshold,
                category: categorize_sign(sign, &leg.target_label),
            })
        })
        .collect()
}

/// Picks the best seen sign: category first, then attention, then lower id.
pub fn best_seen<'a, I>(candidates: I) -> Option<(SignId, SignCategory, f64)>
where
    I: IntoIterator<Item = (SignId, SignCategory, f64)> + 'a,
{
    candidates.into_iter().min_by(|a, b| {
        a.1.cmp(&b.1)
            .then(b.2.total_cmp(&a.2))
            .then(a.0.cmp(&b.0))
    })
}

fn target_goal(leg: &Leg) -> Goal {
    Goal::Point {
        id: leg.target_label.clone(),
        location: leg.target_point.clone(),
    }
}

fn clue_point(env: &Environment, id: &str) -> Goal {
    let gp = env.goal_point(id).expect("clue goals are validated at load");
    Goal::Point {
        id: id.to_string(),
        location: Location {
            floor: gp.floor.clone(),
            position: gp.position,
        },
    }
}

pub fn decide(
    scores: &[SignScore],
    thresholds: &ThresholdTable,
    agent: u32,
    env: &Environment,
    leg: &Leg,
    state: &NavState,
) -> Decision {
    let judged = judge(scores, thresholds, agent, env, leg);
    decide_judged(&judged, env, leg, state)
}

pub fn decide_judged(judged: &[Judgement], env: &Environment, leg: &Leg, state: &NavState) -> Decision {
    let unchanged = |goal: Goal| Decision {
        chosen_sign: None,
        mode: state.mode.clone(),
        goal,
        changed: false,
    };
    if state.mode == NavMode::TargetKnown {
        return unchanged(target_goal(leg));
    }

    let clue_of = |id: SignId| env.sign(id).and_then(|s| clue_goal(s, &leg.target_label));
    // a clue pointing at a goal already reached this leg carries no new information
    let effective = |j: &Judgement| match j.category {
        SignCategory::DirectionalClue if clue_of(j.sign).is_none_or(|g| state.reached_clues.contains(g)) => {
            SignCategory::Irrelevant
        }
        c => c,
    };
    let best = best_seen(judged.iter().filter(|j| j.seen).map(|j| (j.sign, effective(j), j.attention)));

    let keep_current = || match state.active_clue() {
        Some(g) => unchanged(clue_point(env, g)),
        None => unchanged(Goal::Explore),
    };

    match best {
        Some((sign, SignCategory::AtTarget, _)) => Decision {
            chosen_sign: Some(sign),
            mode: NavMode::TargetKnown,
            goal: target_goal(leg),
            changed: true,
        },
        Some((sign, SignCategory::DirectionalClue, _)) => {
            if state.active_clue().is_some() {
                return keep_current();
            }
            let goal = clue_of(sign).expect("directional clue has a goal").to_string();
            Decision {
                chosen_sign: Some(sign),
                goal: clue_point(env, &goal),
                mode: NavMode::FollowingClue(goal),
                changed: true,
            }
        }
        _ => keep_current(),
    }
}

/// Nearest unvisited base point by `path_length` (None = unreachable).
/// Once every base point has been visited the visited set is cleared.
pub fn next_exploration_goal<'a, F>(
    state: &mut NavState,
    base_points: &'a [NamedPoint],
    mut path_length: F,
) -> Option<&'a NamedPoint>
where
    F: FnMut(&NamedPoint) -> Option<f64>,
{
    if base_points.iter().all(|b| state.visited_base_points.contains(&b.id)) {
        state.visited_base_points.clear();
    }
    base_points
        .iter()
        .filter(|b| !state.visited_base_points.contains(&b.id))
        .filter_map(|b| path_length(b).map(|d| (d, b)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
        .map(|(_, b)| b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::fixtures::{room, sign};
    use crate::environment::SignEntry;
    use crate::geometry::Vec2;
    use crate::scenario::LegStart;

    fn leg(label: &str) -> Leg {
        Leg {
            start: LegStart::Previous,
            target_label: label.into(),
            target_point: Location {
                floor: "F0".into(),
                position: Vec2::new(15.0, 15.0),
            },
            arrival_radius: 1.5,
        }
    }

    fn entry(label: &str, action: SignAction) -> SignEntry {
        SignEntry {
            label: label.into(),
            action,
        }
    }

    fn env_with_goals() -> Environment {
        let mut env = room();
        for (id, x) in [("gp_7", 4.0), ("gp_8", 16.0)] {
            env.goal_points.push(NamedPoint {
                id: id.into(),
                floor: "F0".into(),
                position: Vec2::new(x, 4.0),
                heading_deg: None,
            });
        }
        env
    }

    #[test]
    fn categories_follow_entries() {
        let mut s = sign(1, 1.0, 1.0, 2.0, Vec2::new(1.0, 0.0));
        s.entries = vec![entry("WC", SignAction::AtTarget)];
        assert_eq!(categorize_sign(&s, "WC"), SignCategory::AtTarget);
        assert_eq!(categorize_sign(&s, "wc"), SignCategory::AtTarget);
        s.entries = vec![entry("WC", SignAction::DirectTo("gp_7".into()))];
        assert_eq!(categorize_sign(&s, "WC"), SignCategory::DirectionalClue);
        assert_eq!(clue_goal(&s, "WC"), Some("gp_7"));
        s.entries = vec![entry("Platform 12", SignAction::AtTarget)];
        assert_eq!(categorize_sign(&s, "WC"), SignCategory::Irrelevant);
        assert_eq!(categorize_sign(&s, "WC2"), SignCategory::Irrelevant);
    }

    #[test]
    fn thresholds_are_reproducible_and_order_free() {
        let signs = [SignId(1), SignId(2), SignId(3)];
        let a = init_thresholds(&[0, 1, 2], &signs, 42, 0);
        let b = init_thresholds(&[2, 1, 0], &[SignId(3), SignId(1), SignId(2)], 42, 0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 9);
        let c = init_thresholds(&[0, 1, 2], &signs, 42, 1);
        assert_ne!(a, c);
        assert_eq!(a.get(1, SignId(2)), Some(threshold_draw(42, 0, 1, SignId(2))));
    }

    #[test]
    fn threshold_mean_is_one_half() {
        let n = 10_000;
        let mean: f64 = (0..n).map(|a| threshold_draw(3, 0, a, SignId(1))).sum::<f64>() / n as f64;
        assert!((0.485..=0.515).contains(&mean), "{mean}");
    }

    fn setup() -> (Environment, ThresholdTable) {
        let mut env = env_with_goals();
        let mut s1 = sign(1, 2.0, 2.0, 2.0, Vec2::new(1.0, 0.0));
        s1.entries = vec![entry("WC", SignAction::DirectTo("gp_7".into()))];
        let mut s2 = sign(2, 3.0, 2.0, 2.0, Vec2::new(1.0, 0.0));
        s2.entries = vec![entry("WC", SignAction::AtTarget)];
        let mut s3 = sign(3, 4.0, 2.0, 2.0, Vec2::new(1.0, 0.0));
        s3.entries = vec![entry("WC", SignAction::DirectTo("gp_8".into()))];
        env.signs = vec![s1, s2, s3];
        let mut values = BTreeMap::new();
        for s in 1..=3 {
            values.insert((0, SignId(s)), 0.1);
        }
        (env, ThresholdTable { values })
    }

    fn score(id: u32, a: f64) -> SignScore {
        SignScore {
            sign: SignId(id),
            raw_sum: 0.0,
            attention: a,
        }
    }

    #[test]
    fn at_target_beats_stronger_clue() {
        let (env, th) = setup();
        let d = decide(&[score(1, 0.9), score(2, 0.4)], &th, 0, &env, &leg("WC"), &NavState::new(0));
        assert_eq!(d.chosen_sign, Some(SignId(2)));
        assert_eq!(d.mode, NavMode::TargetKnown);
    }

    #[test]
    fn stronger_clue_wins_within_category() {
        let (env, th) = setup();
        let d = decide(&[score(3, 0.8), score(1, 0.6)], &th, 0, &env, &leg("WC"), &NavState::new(0));
        assert_eq!(d.chosen_sign, Some(SignId(3)));
        assert_eq!(d.mode, NavMode::FollowingClue("gp_8".into()));
    }

    #[test]
    fn below_threshold_is_not_seen() {
        let (env, mut th) = setup();
        th.values.insert((0, SignId(2)), 0.8);
        let d = decide(&[score(2, 0.3)], &th, 0, &env, &leg("WC"), &NavState::new(0));
        assert_eq!(d.goal, Goal::Explore);
        assert!(!d.changed);
    }

    #[test]
    fn clue_is_sticky_until_reached() {
        let (env, th) = setup();
        let mut st = NavState::new(0);
        st.apply(&decide(&[score(1, 0.7)], &th, 0, &env, &leg("WC"), &st));
        assert_eq!(st.mode, NavMode::FollowingClue("gp_7".into()));
        let d = decide(&[score(3, 0.9)], &th, 0, &env, &leg("WC"), &st);
        assert!(!d.changed);
        assert_eq!(st.active_clue(), Some("gp_7"));
        // once reached, the other clue takes over and the spent one is ignored
        st.reached_clues.insert("gp_7".into());
        let d = decide(&[score(1, 0.95), score(3, 0.5)], &th, 0, &env, &leg("WC"), &st);
        assert_eq!(d.chosen_sign, Some(SignId(3)));
        // nothing new: keep the label, explore for the goal
        st.reached_clues.insert("gp_8".into());
        let d = decide(&[score(1, 0.95)], &th, 0, &env, &leg("WC"), &st);
        assert_eq!(d.goal, Goal::Explore);
        assert_eq!(d.mode.rank(), 1);
        // a target sign interrupts a clue immediately
        st.reached_clues.clear();
        let d = decide(&[score(2, 0.5)], &th, 0, &env, &leg("WC"), &st);
        assert_eq!(d.mode, NavMode::TargetKnown);
    }

    #[test]
    fn target_known_is_absorbing() {
        let (env, th) = setup();
        let mut st = NavState::new(0);
        st.mode = NavMode::TargetKnown;
        let d = decide(&[score(1, 0.99)], &th, 0, &env, &leg("WC"), &st);
        assert_eq!(d.mode, NavMode::TargetKnown);
        assert!(!d.changed);
    }

    fn bp(id: &str, x: f64) -> NamedPoint {
        NamedPoint {
            id: id.into(),
            floor: "F0".into(),
            position: Vec2::new(x, 0.0),
            heading_deg: None,
        }
    }

    #[test]
    fn exploration_nearest_first_with_reset() {
        let bps = vec![bp("near", 5.0), bp("far", 50.0)];
        let dist = |b: &NamedPoint| Some(b.position.x);
        let mut st = NavState::new(0);
        assert_eq!(next_exploration_goal(&mut st, &bps, dist).unwrap().id, "near");
        st.visited_base_points.insert("near".into());
        assert_eq!(next_exploration_goal(&mut st, &bps, dist).unwrap().id, "far");
        st.visited_base_points.insert("far".into());
        assert_eq!(next_exploration_goal(&mut st, &bps, dist).unwrap().id, "near");
        assert!(st.visited_base_points.is_empty());
        assert!(next_exploration_goal(&mut st, &bps, |_| None).is_none());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn modes_only_upgrade_within_a_leg(
            ticks in proptest::collection::vec(proptest::collection::vec((1u32..=3, 0.0..1.0f64), 0..4), 1..30),
            reach in proptest::collection::vec(any::<bool>(), 30),
        ) {
            let (env, th) = setup();
            let mut st = NavState::new(0);
            let mut last = st.mode.rank();
            for (i, tick) in ticks.iter().enumerate() {
                let mut scores: Vec<SignScore> = tick.iter().map(|&(id, a)| score(id, a)).collect();
                scores.dedup_by_key(|s| s.sign);
                let d = decide(&scores, &th, 0, &env, &leg("WC"), &st);
                st.apply(&d);
                prop_assert!(st.mode.rank() >= last);
                last = st.mode.rank();
                if reach[i] {
                    if let Some(g) = st.active_clue().map(str::to_string) {
                        st.reached_clues.insert(g);
                    }
                }
            }
        }
    }
}
