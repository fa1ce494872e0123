//! Robust defenses: the victim-attacker turn-based game, its zero-sum solver,
//! and finite-horizon backward induction for weak-Stackelberg defenses.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::attack::{
    build_meta_mdp, AttackConstraints, AttackerObjective, Interaction, MetaAction, MetaBuildOptions, MetaKind,
    MetaState, Surface,
};
use crate::error::{Error, Result};
use crate::mdp::{
    beats, Choice, ChoicePolicy, Criterion, FiniteMdp, Mode, RawPolicy, TabularPomdp, VictimPolicy,
};
use crate::planner::{AttackPolicy, Provenance, RawAttackPolicy};

/// Default best-response membership tolerance.
pub const BR_TOLERANCE: f64 = 1e-9;

/// Default cap on the defense oracle's victim-policy count.
pub const DEFENSE_ORACLE_LIMIT: f64 = 1e5;

/// Game states: the four attacker strata plus the victim's turn `(s, o)`,
/// in turn order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GameState {
    AtState(usize),
    AtObs(usize, usize),
    VictimTurn(usize, usize),
    AtAction(usize, usize, usize),
    AtReward(usize, usize, usize, usize),
}

impl GameState {
    /// Position in the five-step turn cycle.
    pub fn stratum(&self) -> usize {
        match self {
            GameState::AtState(..) => 0,
            GameState::AtObs(..) => 1,
            GameState::VictimTurn(..) => 2,
            GameState::AtAction(..) => 3,
            GameState::AtReward(..) => 4,
        }
    }

    pub fn owner(&self) -> Owner {
        match self {
            GameState::VictimTurn(..) => Owner::Victim,
            _ => Owner::Attacker,
        }
    }

    /// The attacker meta-state this game state corresponds to.
    pub fn as_meta(&self) -> Option<MetaState> {
        match *self {
            GameState::AtState(s) => Some(MetaState::AtState(s)),
            GameState::AtObs(s, o) => Some(MetaState::AtObs(s, o)),
            GameState::VictimTurn(..) => None,
            GameState::AtAction(s, o, a) => Some(MetaState::AtAction(s, o, a)),
            GameState::AtReward(s, o, a, r) => Some(MetaState::AtReward(s, o, a, r)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Victim,
    Attacker,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameAction {
    Attack(MetaAction),
    Play(usize),
}

/// The victim-attacker turn-based game.
///
/// Choice `reward` is the victim's reward `r†` and `side_reward` the
/// attacker's `g`, both only on reward-attack steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnBasedGame {
    states: Vec<GameState>,
    index: HashMap<GameState, usize>,
    pub process: FiniteMdp<GameAction>,
    zero_sum: bool,
    fully_observable: bool,
    source_mode: Mode,
}

impl TurnBasedGame {
    pub fn states(&self) -> &[GameState] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: &GameState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn owner(&self, i: usize) -> Owner {
        self.states[i].owner()
    }

    pub fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    /// Fully observable environment and no observation attacks: the game is
    /// an ordinary turn-based stochastic game.
    pub fn is_fully_observable(&self) -> bool {
        self.fully_observable
    }

    pub fn game_discount(&self) -> Option<f64> {
        match self.process.criterion {
            Criterion::Discounted(g) => Some(g),
            Criterion::Finite(_) => None,
        }
    }

    /// `gamma_bar^4` in discounted mode, 1 otherwise.
    pub fn rescale(&self) -> f64 {
        self.game_discount().map_or(1.0, |g| g.powi(4))
    }

    pub fn source_mode(&self) -> Mode {
        self.source_mode
    }
}

/// A game choice whose successors are still keyed by game state.
struct PendingChoice {
    label: GameAction,
    reward: f64,
    side_reward: f64,
    next: Vec<(GameState, f64)>,
}

fn game_choices(
    m: &TabularPomdp,
    c: &AttackConstraints,
    g: &AttackerObjective,
    h: usize,
    state: &GameState,
) -> Vec<PendingChoice> {
    let dist = |row: &[f64], f: &dyn Fn(usize) -> GameState| -> Vec<(GameState, f64)> {
        row.iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, p)| (f(i), *p))
            .collect()
    };
    let quiet = |label, next| PendingChoice {
        label,
        reward: 0.0,
        side_reward: 0.0,
        next,
    };
    match *state {
        GameState::AtState(s) => c
            .state_set(s)
            .iter()
            .map(|&x| {
                quiet(
                    GameAction::Attack(MetaAction::State(x)),
                    dist(m.obs_dist(h, x), &|o| GameState::AtObs(x, o)),
                )
            })
            .collect(),
        GameState::AtObs(s, o) => c
            .obs_set(s, o)
            .iter()
            .map(|&x| {
                quiet(
                    GameAction::Attack(MetaAction::Observation(x)),
                    vec![(GameState::VictimTurn(s, x), 1.0)],
                )
            })
            .collect(),
        GameState::VictimTurn(s, o) => (0..m.n_actions())
            .map(|a| quiet(GameAction::Play(a), vec![(GameState::AtAction(s, o, a), 1.0)]))
            .collect(),
        GameState::AtAction(s, o, a) => c
            .action_set(s, o, a)
            .iter()
            .map(|&x| {
                quiet(
                    GameAction::Attack(MetaAction::Action(x)),
                    dist(m.reward_dist(h, s, x), &|r| GameState::AtReward(s, o, x, r)),
                )
            })
            .collect(),
        GameState::AtReward(s, o, a, r) => c
            .reward_set(s, o, a, r)
            .iter()
            .map(|&x| PendingChoice {
                label: GameAction::Attack(MetaAction::Reward(x)),
                reward: m.reward_value(x),
                side_reward: g.value(m, h, s, a, x),
                next: dist(m.transition(h, s, a), &GameState::AtState),
            })
            .collect(),
    }
}

fn all_game_states(m: &TabularPomdp) -> Vec<GameState> {
    let (n_s, n_o, n_a, n_r) = (m.n_states(), m.n_obs(), m.n_actions(), m.n_rewards());
    let mut out: Vec<GameState> = (0..n_s).map(GameState::AtState).collect();
    for s in 0..n_s {
        for o in 0..n_o {
            out.push(GameState::AtObs(s, o));
            out.push(GameState::VictimTurn(s, o));
            for a in 0..n_a {
                out.push(GameState::AtAction(s, o, a));
                for r in 0..n_r {
                    out.push(GameState::AtReward(s, o, a, r));
                }
            }
        }
    }
    out
}

/// Build the turn-based game.
///
/// Discount `gamma^(1/5)` or horizon `5H`; initial mass `mu` on state-stratum
/// states. States are ordered by stratum, then lexicographically.
pub fn build_meta_game(
    model: &TabularPomdp,
    constraints: &AttackConstraints,
    objective: &AttackerObjective,
    options: MetaBuildOptions,
) -> Result<TurnBasedGame> {
    constraints.check_against(model)?;
    objective.check_against(model)?;
    let layers = match model.horizon() {
        Some(h) if model.n_layers() > 1 || objective.n_layers() > 1 => h,
        _ => 1,
    };
    if model.horizon().is_none() && objective.n_layers() > 1 {
        return Err(Error::PreconditionViolated(
            "discounted games need a stationary objective".into(),
        ));
    }
    let mut found: HashMap<GameState, Vec<Vec<PendingChoice>>> = HashMap::new();
    let expand = |state: &GameState| -> Vec<Vec<PendingChoice>> {
        (0..layers)
            .map(|h| game_choices(model, constraints, objective, h, state))
            .collect()
    };
    let initial_states: Vec<GameState> = model
        .initial()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, _)| GameState::AtState(s))
        .collect();
    if options.prune {
        let mut seen: HashSet<GameState> = initial_states.iter().copied().collect();
        let mut queue: VecDeque<GameState> = initial_states.iter().copied().collect();
        while let Some(state) = queue.pop_front() {
            let choices = expand(&state);
            for c in choices.iter().flatten() {
                for (succ, _) in &c.next {
                    if seen.insert(*succ) {
                        queue.push_back(*succ);
                    }
                }
            }
            found.insert(state, choices);
        }
    } else {
        for state in all_game_states(model) {
            let choices = expand(&state);
            found.insert(state, choices);
        }
    }
    let mut states: Vec<GameState> = found.keys().copied().collect();
    states.sort_unstable_by_key(|s| (s.stratum(), *s));
    let index: HashMap<GameState, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let choices = states
        .iter()
        .map(|s| {
            let layers: Vec<Vec<Choice<GameAction>>> = found
                .remove(s)
                .unwrap()
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
            if layers.len() > 1 && layers.iter().all(|l| *l == layers[0]) {
                vec![layers.into_iter().next().unwrap()]
            } else {
                layers
            }
        })
        .collect();
    let mut initial = vec![0.0; states.len()];
    for (s, p) in model.initial().iter().enumerate() {
        if *p > 0.0 {
            initial[index[&GameState::AtState(s)]] += p;
        }
    }
    let criterion = match model.mode() {
        Mode::Discounted(g) => Criterion::Discounted(g.powf(0.2)),
        Mode::Finite(h) => Criterion::Finite(5 * h),
    };
    Ok(TurnBasedGame {
        states,
        index,
        process: FiniteMdp {
            choices,
            stride: 5,
            criterion,
            initial,
        },
        zero_sum: objective.is_zero_sum(model),
        fully_observable: model.is_fully_observable() && !constraints.toggles().get(Surface::Observation),
        source_mode: model.mode(),
    })
}

/// A defense and the attacker's reported best response to it.
#[derive(Clone, Debug, PartialEq)]
pub struct DefenseSolution {
    pub victim_policy: VictimPolicy,
    pub attacker_response: AttackPolicy,
    /// Victim's guaranteed value, per-step units.
    pub victim_value: f64,
    pub attacker_value: f64,
    pub mode: Mode,
    pub zero_sum: bool,
    pub tolerance: f64,
}

#[derive(Serialize, Deserialize)]
struct DefenseFile {
    metadata: DefenseMeta,
    victim_policy: RawPolicy,
    attacker_response: RawAttackPolicy,
}

#[derive(Serialize, Deserialize)]
struct DefenseMeta {
    victim_value: f64,
    attacker_value: f64,
    mode: Mode,
    zero_sum: bool,
    tolerance: f64,
}

impl DefenseSolution {
    pub fn to_json(&self) -> String {
        let file = DefenseFile {
            metadata: DefenseMeta {
                victim_value: self.victim_value,
                attacker_value: self.attacker_value,
                mode: self.mode,
                zero_sum: self.zero_sum,
                tolerance: self.tolerance,
            },
            victim_policy: self.victim_policy.to_raw(),
            attacker_response: self.attacker_response.to_raw(),
        };
        serde_json::to_string_pretty(&file).expect("defense serializes")
    }

    pub fn from_json(text: &str, n_actions: usize) -> Result<Self> {
        let file: DefenseFile = serde_json::from_str(text)?;
        Ok(DefenseSolution {
            victim_policy: VictimPolicy::from_raw(&file.victim_policy, n_actions)?,
            attacker_response: AttackPolicy::from_raw(&file.attacker_response)?,
            victim_value: file.metadata.victim_value,
            attacker_value: file.metadata.attacker_value,
            mode: file.metadata.mode,
            zero_sum: file.metadata.zero_sum,
            tolerance: file.metadata.tolerance,
        })
    }
}

/// Attack meta-step matching game meta-step `k` (the victim's turn has none).
fn attack_step(k: usize) -> Option<usize> {
    let (t, j) = (k / 5, k % 5);
    match j {
        0 | 1 => Some(4 * t + j),
        2 => None,
        _ => Some(4 * t + j - 1),
    }
}

/// Minimax solution of a zero-sum, fully observable game.
pub fn solve_zero_sum_tbsg(game: &TurnBasedGame, eps: f64) -> Result<DefenseSolution> {
    if !game.is_fully_observable() {
        return Err(Error::PartiallyObservable);
    }
    if !game.is_zero_sum() {
        return Err(Error::NotZeroSum);
    }
    let p = &game.process;
    let victim = |i: usize| game.owner(i) == Owner::Victim;
    let solution = match p.criterion {
        Criterion::Discounted(_) => p.game_value_iteration(eps, victim)?,
        Criterion::Finite(_) => p.game_backward_induction(victim)?,
    };
    let eval = p.evaluate(&solution.policy)?;
    let (v1, v2) = eval.start(&p.initial);
    let scale = game.rescale();
    let n_s = game
        .states()
        .iter()
        .filter_map(|s| match s {
            GameState::AtState(x) => Some(*x + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let n_actions = p
        .choices
        .iter()
        .zip(game.states())
        .find(|(_, s)| s.owner() == Owner::Victim)
        .map(|(c, _)| c[0].len())
        .unwrap_or(1);
    let chosen = |k: usize, i: usize| p.choices_at(i, k)[solution.policy.at(k, i)].label;

    let (victim_policy, attacker_response) = match &solution.policy {
        ChoicePolicy::Stationary(_) => {
            let mut actions = vec![0; n_s.max(1)];
            let mut table = BTreeMap::new();
            for (i, s) in game.states().iter().enumerate() {
                match (s, chosen(0, i)) {
                    (GameState::VictimTurn(x, o), GameAction::Play(a)) if x == o => actions[*o] = a,
                    (_, GameAction::Attack(act)) => {
                        table.insert(s.as_meta().unwrap(), act);
                    }
                    _ => {}
                }
            }
            (
                VictimPolicy::deterministic(n_actions, &actions)?,
                AttackPolicy {
                    construction: MetaKind::Full,
                    time_indexed: false,
                    table: vec![table],
                    provenance: Provenance::Planned,
                },
            )
        }
        ChoicePolicy::Layered(layers) => {
            let horizon = layers.len() / 5;
            let mut actions = vec![vec![0; n_s.max(1)]; horizon];
            let mut tables = vec![BTreeMap::new(); 4 * horizon];
            for k in 0..layers.len() {
                for (i, s) in game.states().iter().enumerate() {
                    if s.stratum() != k % 5 {
                        continue;
                    }
                    match (s, chosen(k, i)) {
                        (GameState::VictimTurn(x, o), GameAction::Play(a)) if x == o => actions[k / 5][*o] = a,
                        (_, GameAction::Attack(act)) => {
                            tables[attack_step(k).unwrap()].insert(s.as_meta().unwrap(), act);
                        }
                        _ => {}
                    }
                }
            }
            (
                VictimPolicy::time_indexed_deterministic(n_actions, &actions)?,
                AttackPolicy {
                    construction: MetaKind::Full,
                    time_indexed: true,
                    table: tables,
                    provenance: Provenance::Planned,
                },
            )
        }
    };
    Ok(DefenseSolution {
        victim_policy,
        attacker_response,
        victim_value: v1 / scale,
        attacker_value: v2 / scale,
        mode: game.source_mode(),
        zero_sum: true,
        tolerance: eps,
    })
}

/// Pick the attacker's element among `candidates` of `(element, v1, v2)`.
///
/// General-sum: best-response set `v2 >= max - tol`, then the lowest-index
/// victim-worst member. Zero-sum: the victim-worst element overall.
fn respond(candidates: &[(usize, f64, f64)], zero_sum: bool, tol: f64) -> (usize, f64, f64) {
    let top = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(usize, f64, f64)> = None;
    for &c in candidates {
        if !zero_sum && c.2 < top - tol {
            continue;
        }
        match best {
            None => best = Some(c),
            Some(b) if beats(-c.1, -b.1) => best = Some(c),
            _ => {}
        }
    }
    best.expect("feasible sets are never empty")
}

/// Finite-horizon backward induction for the optimal Markovian defense.
///
/// At each step the victim commits, per post-attack state, to the action
/// maximizing its value under the attacker's worst best response; with
/// `zero_sum` the best-response sets are replaced by the feasible sets.
pub fn defense_backward_induction(
    model: &TabularPomdp,
    constraints: &AttackConstraints,
    objective: &AttackerObjective,
    zero_sum: bool,
    tolerance: f64,
) -> Result<DefenseSolution> {
    let horizon = model.horizon().ok_or(Error::NotFiniteHorizon)?;
    if constraints.toggles().get(Surface::Observation) {
        return Err(Error::ObservationSurfaceEnabled);
    }
    if !model.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    constraints.check_against(model)?;
    objective.check_against(model)?;
    if zero_sum && !objective.is_zero_sum(model) {
        return Err(Error::NotZeroSum);
    }
    let (n_s, n_a) = (model.n_states(), model.n_actions());
    // (victim, attacker) values at the start of step h+1, before the state attack
    let mut next_u = vec![(0.0, 0.0); n_s];
    let mut actions = vec![vec![0; n_s]; horizon];
    let mut tables: Vec<BTreeMap<MetaState, MetaAction>> = vec![BTreeMap::new(); 4 * horizon];
    for h in (0..horizon).rev() {
        let future = |x: usize, a: usize| -> (f64, f64) {
            model
                .transition(h, x, a)
                .iter()
                .zip(&next_u)
                .fold((0.0, 0.0), |acc, (p, u)| (acc.0 + p * u.0, acc.1 + p * u.1))
        };
        // w[x]: values once the victim sits at post-attack state x
        let mut w = vec![(0.0, 0.0); n_s];
        for x in 0..n_s {
            let mut best_a: Option<(usize, f64, f64)> = None;
            for &a in model.available(x) {
                let mut options = Vec::new();
                for &a_att in constraints.action_set(x, x, a) {
                    let (f1, f2) = future(x, a_att);
                    let mut q = (0.0, 0.0);
                    for (r, &pr) in model.reward_dist(h, x, a_att).iter().enumerate() {
                        if pr == 0.0 {
                            continue;
                        }
                        let candidates: Vec<(usize, f64, f64)> = constraints
                            .reward_set(x, x, a_att, r)
                            .iter()
                            .map(|&r_att| {
                                (
                                    r_att,
                                    model.reward_value(r_att) + f1,
                                    objective.value(model, h, x, a_att, r_att) + f2,
                                )
                            })
                            .collect();
                        let (r_att, v1, v2) = respond(&candidates, zero_sum, tolerance);
                        tables[4 * h + 3].insert(MetaState::AtReward(x, x, a_att, r), MetaAction::Reward(r_att));
                        q.0 += pr * v1;
                        q.1 += pr * v2;
                    }
                    options.push((a_att, q.0, q.1));
                }
                let (a_att, q1, q2) = respond(&options, zero_sum, tolerance);
                tables[4 * h + 2].insert(MetaState::AtAction(x, x, a), MetaAction::Action(a_att));
                match best_a {
                    Some(b) if !beats(q1, b.1) => {}
                    _ => best_a = Some((a, q1, q2)),
                }
            }
            let (a, v1, v2) = best_a.expect("every state has an available action");
            actions[h][x] = a;
            w[x] = (v1, v2);
            tables[4 * h + 1].insert(MetaState::AtObs(x, x), MetaAction::Observation(x));
        }
        let mut u = vec![(0.0, 0.0); n_s];
        for s in 0..n_s {
            let candidates: Vec<(usize, f64, f64)> =
                constraints.state_set(s).iter().map(|&x| (x, w[x].0, w[x].1)).collect();
            let (x, v1, v2) = respond(&candidates, zero_sum, tolerance);
            tables[4 * h].insert(MetaState::AtState(s), MetaAction::State(x));
            u[s] = (v1, v2);
        }
        next_u = u;
    }
    let (v1, v2) = model
        .initial()
        .iter()
        .zip(&next_u)
        .fold((0.0, 0.0), |acc, (p, u)| (acc.0 + p * u.0, acc.1 + p * u.1));
    Ok(DefenseSolution {
        victim_policy: VictimPolicy::time_indexed_deterministic(n_a, &actions)?,
        attacker_response: AttackPolicy {
            construction: MetaKind::Full,
            time_indexed: true,
            table: tables,
            provenance: Provenance::Planned,
        },
        victim_value: v1,
        attacker_value: v2,
        mode: model.mode(),
        zero_sum,
        tolerance,
    })
}

/// Victim value of `victim` under the attacker's worst-for-the-victim best
/// response (lexicographic dynamic programming on its meta-MDP).
pub fn weak_stackelberg_value(
    model: &TabularPomdp,
    victim: &VictimPolicy,
    constraints: &AttackConstraints,
    objective: &AttackerObjective,
    tolerance: f64,
) -> Result<(f64, f64)> {
    let horizon = model.horizon().ok_or(Error::NotFiniteHorizon)?;
    let inter = Interaction::new(model, victim, constraints, objective)?;
    let meta = build_meta_mdp(&inter, MetaBuildOptions::default())?;
    let p = &meta.process;
    let n = meta.n_states();
    let mut v1 = vec![0.0; n];
    let mut v2 = vec![0.0; n];
    for k in (0..4 * horizon).rev() {
        let mut n1 = vec![0.0; n];
        let mut n2 = vec![0.0; n];
        for i in 0..n {
            let candidates: Vec<(usize, f64, f64)> = p
                .choices_at(i, k)
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let (mut a1, mut a2) = (c.side_reward, c.reward);
                    for &(t, pr) in &c.next {
                        a1 += pr * v1[t];
                        a2 += pr * v2[t];
                    }
                    (j, a1, a2)
                })
                .collect();
            let (_, b1, b2) = respond(&candidates, false, tolerance);
            n1[i] = b1;
            n2[i] = b2;
        }
        v1 = n1;
        v2 = n2;
    }
    let start = |v: &[f64]| p.initial.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    Ok((start(&v1), start(&v2)))
}

/// Best weak-Stackelberg victim value over every deterministic Markovian
/// victim policy, by enumeration.
pub fn enumerate_defense_oracle(
    model: &TabularPomdp,
    constraints: &AttackConstraints,
    objective: &AttackerObjective,
    limit: f64,
) -> Result<f64> {
    let horizon = model.horizon().ok_or(Error::NotFiniteHorizon)?;
    let n_s = model.n_states();
    let slots: Vec<&[usize]> = (0..horizon)
        .flat_map(|_| (0..n_s).map(|s| model.available(s)))
        .collect();
    let count: f64 = slots.iter().map(|a| a.len() as f64).product();
    if count > limit {
        return Err(Error::TooLarge { count, limit });
    }
    let mut digits = vec![0usize; slots.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let table: Vec<Vec<usize>> = (0..horizon)
            .map(|h| (0..n_s).map(|s| slots[h * n_s + s][digits[h * n_s + s]]).collect())
            .collect();
        let victim = if horizon == 1 {
            VictimPolicy::deterministic(model.n_actions(), &table[0])?
        } else {
            VictimPolicy::time_indexed_deterministic(model.n_actions(), &table)?
        };
        let (v1, _) = weak_stackelberg_value(model, &victim, constraints, objective, BR_TOLERANCE)?;
        best = best.max(v1);
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                return Ok(best);
            }
            digits[pos] += 1;
            if digits[pos] < slots[pos].len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}
