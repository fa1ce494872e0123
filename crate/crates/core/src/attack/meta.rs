use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::constraints::{key_string, AttackConstraints, Surface};
use super::objective::AttackerObjective;
use crate::error::{Error, Result};
use crate::mdp::{
    validate_pomdp, ActionKernelData, Choice, Criterion, FiniteMdp, IndexSet, Mode, RawPomdp,
    StateKernelData, TabularPomdp, VictimPolicy,
};

/// A subtime-tagged within-step tuple. Components hold post-attack values of
/// the subtimes already played; the last component is the element about to
/// be attacked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetaState {
    AtState(usize),
    AtObs(usize, usize),
    AtAction(usize, usize, usize),
    AtReward(usize, usize, usize, usize),
}

impl MetaState {
    /// 0 for the state subtime through 3 for the reward subtime.
    pub fn subtime(&self) -> usize {
        match self {
            MetaState::AtState(..) => 0,
            MetaState::AtObs(..) => 1,
            MetaState::AtAction(..) => 2,
            MetaState::AtReward(..) => 3,
        }
    }

    pub fn surface(&self) -> Surface {
        Surface::ALL[self.subtime()]
    }

    pub fn components(&self) -> Vec<usize> {
        match *self {
            MetaState::AtState(s) => vec![s],
            MetaState::AtObs(s, o) => vec![s, o],
            MetaState::AtAction(s, o, a) => vec![s, o, a],
            MetaState::AtReward(s, o, a, r) => vec![s, o, a, r],
        }
    }

    /// The element under attack (last component).
    pub fn own(&self) -> usize {
        match *self {
            MetaState::AtState(s) => s,
            MetaState::AtObs(_, o) => o,
            MetaState::AtAction(_, _, a) => a,
            MetaState::AtReward(_, _, _, r) => r,
        }
    }

    /// Comma-separated components, the key used in policy files.
    pub fn key(&self) -> String {
        key_string(&self.components())
    }

    pub fn parse_key(text: &str) -> Result<Self> {
        let parts: Vec<usize> = text
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("bad meta-state key {text:?}")))?;
        Ok(match parts.as_slice() {
            [s] => MetaState::AtState(*s),
            [s, o] => MetaState::AtObs(*s, *o),
            [s, o, a] => MetaState::AtAction(*s, *o, *a),
            [s, o, a, r] => MetaState::AtReward(*s, *o, *a, *r),
            _ => return Err(Error::Parse(format!("bad meta-state key {text:?}"))),
        })
    }

    /// Wrap an element of this subtime's feasible set as a meta-action.
    pub fn action(&self, element: usize) -> MetaAction {
        match self {
            MetaState::AtState(..) => MetaAction::State(element),
            MetaState::AtObs(..) => MetaAction::Observation(element),
            MetaState::AtAction(..) => MetaAction::Action(element),
            MetaState::AtReward(..) => MetaAction::Reward(element),
        }
    }

    pub fn identity_action(&self) -> MetaAction {
        self.action(self.own())
    }
}

impl fmt::Display for MetaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.key())
    }
}

/// An attacker manipulation. `PerceivedState` only appears in the compact
/// construction, where `State` denotes a true-state attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaAction {
    State(usize),
    Observation(usize),
    Action(usize),
    Reward(usize),
    PerceivedState(usize),
}

impl MetaAction {
    pub fn element(&self) -> usize {
        match *self {
            MetaAction::State(x)
            | MetaAction::Observation(x)
            | MetaAction::Action(x)
            | MetaAction::Reward(x)
            | MetaAction::PerceivedState(x) => x,
        }
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaAction::State(x) => write!(f, "state:{x}"),
            MetaAction::Observation(x) => write!(f, "observation:{x}"),
            MetaAction::Action(x) => write!(f, "action:{x}"),
            MetaAction::Reward(x) => write!(f, "reward:{x}"),
            MetaAction::PerceivedState(x) => write!(f, "perceived:{x}"),
        }
    }
}

/// Outcome of one meta-step.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaStep {
    pub next: Vec<(MetaState, f64)>,
    pub attacker_reward: f64,
    pub victim_reward: f64,
}

/// Everything the attacked interaction depends on: environment, victim,
/// feasibility sets and attacker objective, checked for mutual consistency.
#[derive(Clone, Copy, Debug)]
pub struct Interaction<'a> {
    pub model: &'a TabularPomdp,
    pub victim: &'a VictimPolicy,
    pub constraints: &'a AttackConstraints,
    pub objective: &'a AttackerObjective,
}

impl<'a> Interaction<'a> {
    pub fn new(
        model: &'a TabularPomdp,
        victim: &'a VictimPolicy,
        constraints: &'a AttackConstraints,
        objective: &'a AttackerObjective,
    ) -> Result<Self> {
        victim.check_against(model)?;
        constraints.check_against(model)?;
        objective.check_against(model)?;
        if model.horizon().is_none() && (victim.n_layers() > 1 || objective.n_layers() > 1) {
            return Err(Error::PreconditionViolated(
                "discounted interactions need a stationary victim and objective".into(),
            ));
        }
        Ok(Interaction {
            model,
            victim,
            constraints,
            objective,
        })
    }

    /// Distinct time layers of the interaction (1 when everything is stationary).
    pub fn n_layers(&self) -> usize {
        match self.model.horizon() {
            Some(h) if self.model.n_layers() > 1 || self.victim.n_layers() > 1 || self.objective.n_layers() > 1 => h,
            _ => 1,
        }
    }

    #[inline]
    pub fn feasible(&self, state: &MetaState) -> &'a [usize] {
        let c = self.constraints;
        match *state {
            MetaState::AtState(s) => c.state_set(s),
            MetaState::AtObs(s, o) => c.obs_set(s, o),
            MetaState::AtAction(s, o, a) => c.action_set(s, o, a),
            MetaState::AtReward(s, o, a, r) => c.reward_set(s, o, a, r),
        }
    }

    /// Apply manipulation `element` at `state` during time step `step`.
    pub fn step(&self, step: usize, state: &MetaState, element: usize) -> MetaStep {
        let m = self.model;
        let nonzero = |row: &[f64], f: &dyn Fn(usize) -> MetaState| -> Vec<(MetaState, f64)> {
            row.iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(i, p)| (f(i), *p))
                .collect()
        };
        match *state {
            MetaState::AtState(_) => MetaStep {
                next: nonzero(m.obs_dist(step, element), &|o| MetaState::AtObs(element, o)),
                attacker_reward: 0.0,
                victim_reward: 0.0,
            },
            MetaState::AtObs(s, _) => MetaStep {
                next: nonzero(self.victim.dist(step, element), &|a| {
                    MetaState::AtAction(s, element, a)
                }),
                attacker_reward: 0.0,
                victim_reward: 0.0,
            },
            MetaState::AtAction(s, o, _) => MetaStep {
                next: nonzero(m.reward_dist(step, s, element), &|r| {
                    MetaState::AtReward(s, o, element, r)
                }),
                attacker_reward: 0.0,
                victim_reward: 0.0,
            },
            MetaState::AtReward(s, _, a, _) => MetaStep {
                next: nonzero(m.transition(step, s, a), &MetaState::AtState),
                attacker_reward: self.objective.value(m, step, s, a, element),
                victim_reward: m.reward_value(element),
            },
        }
    }

    pub fn initial_states(&self) -> Vec<(MetaState, f64)> {
        self.model
            .initial()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(s, p)| (MetaState::AtState(s), *p))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetaKind {
    /// Four subtimes per environment step.
    Full,
    /// One meta-step per environment step (deterministic Markovian victims).
    Compact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetaBuildOptions {
    /// Materialize only meta-states reachable from the initial distribution.
    pub prune: bool,
}

impl Default for MetaBuildOptions {
    fn default() -> Self {
        MetaBuildOptions { prune: true }
    }
}

/// The attacker's meta-MDP: a decision process over tagged meta-states.
///
/// Choice labels are the manipulations; `reward` is the attacker's `g` and
/// `side_reward` the victim's reported reward, both only on reward-attack steps.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaMdp {
    states: Vec<MetaState>,
    index: HashMap<MetaState, usize>,
    pub process: FiniteMdp<MetaAction>,
    kind: MetaKind,
    source_mode: Mode,
}

impl MetaMdp {
    pub(crate) fn from_parts(
        states: Vec<MetaState>,
        process: FiniteMdp<MetaAction>,
        kind: MetaKind,
        source_mode: Mode,
    ) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        MetaMdp {
            states,
            index,
            process,
            kind,
            source_mode,
        }
    }

    pub fn states(&self) -> &[MetaState] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: &MetaState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn kind(&self) -> MetaKind {
        self.kind
    }

    /// Meta-steps per environment step.
    pub fn period(&self) -> usize {
        match self.kind {
            MetaKind::Full => 4,
            MetaKind::Compact => 1,
        }
    }

    pub fn source_mode(&self) -> Mode {
        self.source_mode
    }

    pub fn meta_discount(&self) -> Option<f64> {
        match self.process.criterion {
            Criterion::Discounted(g) => Some(g),
            Criterion::Finite(_) => None,
        }
    }

    /// Divisor turning a meta-value into per-step objective units
    /// (`gamma_bar^3` for the discounted full construction, 1 otherwise).
    pub fn rescale(&self) -> f64 {
        match self.meta_discount() {
            Some(g) => g.powi(self.period() as i32 - 1),
            None => 1.0,
        }
    }

    /// Export in the environment file format (identity observations, padded
    /// action slots marked unavailable, one-hot rewards).
    pub fn to_pomdp(&self) -> Result<TabularPomdp> {
        let p = &self.process;
        let n = p.n_states();
        let steps = match p.criterion {
            Criterion::Finite(h) => Some(h),
            Criterion::Discounted(_) => None,
        };
        let layers = if p.is_stationary() { 1 } else { steps.unwrap_or(1) };
        let n_a = (0..n)
            .flat_map(|s| (0..layers).map(move |k| (s, k)))
            .map(|(s, k)| p.choices_at(s, k).len())
            .max()
            .unwrap_or(1);
        let mut support: Vec<f64> = p
            .choices
            .iter()
            .flatten()
            .flatten()
            .map(|c| c.reward)
            .collect();
        support.sort_by(|a, b| a.total_cmp(b));
        support.dedup();
        let r_index = |x: f64| support.iter().position(|&y| y == x).unwrap();
        let mut trans = Vec::with_capacity(layers);
        let mut rew = Vec::with_capacity(layers);
        for k in 0..layers {
            let mut tl = Vec::with_capacity(n);
            let mut rl = Vec::with_capacity(n);
            for s in 0..n {
                let list = p.choices_at(s, k);
                let mut ta = Vec::with_capacity(n_a);
                let mut ra = Vec::with_capacity(n_a);
                for a in 0..n_a {
                    let c = list.get(a).unwrap_or(&list[0]);
                    let mut row = vec![0.0; n];
                    for &(t, pr) in &c.next {
                        row[t] += pr;
                    }
                    let mut rrow = vec![0.0; support.len()];
                    rrow[r_index(c.reward)] = 1.0;
                    ta.push(row);
                    ra.push(rrow);
                }
                tl.push(ta);
                rl.push(ra);
            }
            trans.push(tl);
            rew.push(rl);
        }
        let identity: Vec<Vec<f64>> = (0..n)
            .map(|s| (0..n).map(|o| if o == s { 1.0 } else { 0.0 }).collect())
            .collect();
        let wrap = |mut v: Vec<Vec<Vec<Vec<f64>>>>| {
            if v.len() == 1 {
                ActionKernelData::Stationary(v.pop().unwrap())
            } else {
                ActionKernelData::TimeIndexed(v)
            }
        };
        let available = (0..n)
            .map(|s| {
                let len = (0..layers).map(|k| p.choices_at(s, k).len()).min().unwrap();
                (0..n_a).map(|a| a < len).collect()
            })
            .collect();
        let raw = RawPomdp {
            states: IndexSet::Names(self.states.iter().map(|s| s.key()).collect()),
            observations: IndexSet::Count(n),
            actions: IndexSet::Count(n_a),
            reward_support: support.clone(),
            transition: wrap(trans),
            reward_dist: wrap(rew),
            obs_dist: StateKernelData::Stationary(identity),
            gamma: self.meta_discount(),
            horizon: steps,
            mu: p.initial.clone(),
            available: Some(available),
        };
        validate_pomdp(&raw)
    }
}

/// A choice whose successors are still keyed by meta-state.
struct PendingChoice {
    label: MetaAction,
    reward: f64,
    side_reward: f64,
    next: Vec<(MetaState, f64)>,
}

type PendingLayers = Vec<Vec<PendingChoice>>;

fn choices_for(inter: &Interaction, layers: usize, state: &MetaState) -> PendingLayers {
    let feasible = inter.feasible(state);
    (0..layers)
        .map(|h| {
            feasible
                .iter()
                .map(|&e| {
                    let st = inter.step(h, state, e);
                    PendingChoice {
                        label: state.action(e),
                        reward: st.attacker_reward,
                        side_reward: st.victim_reward,
                        next: st.next,
                    }
                })
                .collect()
        })
        .collect()
}

fn all_meta_states(model: &TabularPomdp) -> Vec<MetaState> {
    let (n_s, n_o, n_a, n_r) = (model.n_states(), model.n_obs(), model.n_actions(), model.n_rewards());
    let mut out = Vec::new();
    out.extend((0..n_s).map(MetaState::AtState));
    for s in 0..n_s {
        for o in 0..n_o {
            out.push(MetaState::AtObs(s, o));
        }
    }
    for s in 0..n_s {
        for o in 0..n_o {
            for a in 0..n_a {
                out.push(MetaState::AtAction(s, o, a));
            }
        }
    }
    for s in 0..n_s {
        for o in 0..n_o {
            for a in 0..n_a {
                for r in 0..n_r {
                    out.push(MetaState::AtReward(s, o, a, r));
                }
            }
        }
    }
    out
}

/// Collapse identical layers to one.
pub(crate) fn collapse<L: PartialEq>(mut layers: Vec<Vec<Choice<L>>>) -> Vec<Vec<Choice<L>>> {
    if layers.len() > 1 && layers.iter().all(|l| *l == layers[0]) {
        layers.truncate(1);
    }
    layers
}

/// Build the attacker's meta-MDP for a fixed victim.
///
/// Meta-discount is `gamma^(1/4)` (discounted) or the meta-horizon is `4H`
/// (finite horizon, layer `k / 4` at meta-step `k`); the initial distribution
/// is `mu` on state-subtime meta-states. States are ordered canonically:
/// subtime tag, then lexicographic components.
pub fn build_meta_mdp(inter: &Interaction, options: MetaBuildOptions) -> Result<MetaMdp> {
    let layers = inter.n_layers();
    let mut found: HashMap<MetaState, PendingLayers> = HashMap::new();
    if options.prune {
        let mut queue: VecDeque<MetaState> = VecDeque::new();
        let mut seen: HashSet<MetaState> = HashSet::new();
        for (s, _) in inter.initial_states() {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
        while let Some(state) = queue.pop_front() {
            let choices = choices_for(inter, layers, &state);
            for c in choices.iter().flatten() {
                for (t, _) in &c.next {
                    if seen.insert(*t) {
                        queue.push_back(*t);
                    }
                }
            }
            found.insert(state, choices);
        }
    } else {
        for state in all_meta_states(inter.model) {
            let choices = choices_for(inter, layers, &state);
            found.insert(state, choices);
        }
    }

    let mut states: Vec<MetaState> = found.keys().copied().collect();
    states.sort_unstable();
    let index: HashMap<MetaState, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();

    let choices = states
        .iter()
        .map(|state| {
            let raw = found.remove(state).unwrap();
            let converted = raw
                .into_iter()
                .map(|layer| {
                    layer
                        .into_iter()
                        .map(|c| Choice {
                            label: c.label,
                            reward: c.reward,
                            side_reward: c.side_reward,
                            next: c.next.iter().map(|(t, p)| (index[t], *p)).collect(),
                        })
                        .collect()
                })
                .collect();
            collapse(converted)
        })
        .collect();

    let mut initial = vec![0.0; states.len()];
    for (s, p) in inter.initial_states() {
        initial[index[&s]] += p;
    }
    let criterion = match inter.model.mode() {
        Mode::Discounted(g) => Criterion::Discounted(g.powf(0.25)),
        Mode::Finite(h) => Criterion::Finite(4 * h),
    };
    Ok(MetaMdp::from_parts(
        states,
        FiniteMdp {
            choices,
            stride: 4,
            criterion,
            initial,
        },
        MetaKind::Full,
        inter.model.mode(),
    ))
}
