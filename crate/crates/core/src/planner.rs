//! Optimal attacks: exact planning on the meta-MDP, a brute-force oracle and
//! a tabular Q-learning attacker.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{Interaction, MetaAction, MetaKind, MetaMdp, MetaState};
use crate::error::{Error, Result};
use crate::mdp::{ChoicePolicy, Criterion, Mode};
use crate::sim::{self, AttackAgent};

/// Default value-iteration tolerance.
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// Default cap on the oracle's policy count.
pub const ORACLE_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Planned,
    Learned,
    Identity,
}

/// Deterministic attack policy over meta-states.
///
/// Stationary policies hold one table. Time-indexed ones hold a table per
/// meta-step (full construction) or per environment step (compact). Learned
/// and identity policies fall back to the no-op attack on missing entries;
/// planned ones report the gap.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackPolicy {
    pub construction: MetaKind,
    pub time_indexed: bool,
    pub table: Vec<BTreeMap<MetaState, MetaAction>>,
    pub provenance: Provenance,
}

fn subtime_of(action: &MetaAction) -> usize {
    match action {
        MetaAction::State(_) => 0,
        MetaAction::Observation(_) | MetaAction::PerceivedState(_) => 1,
        MetaAction::Action(_) => 2,
        MetaAction::Reward(_) => 3,
    }
}

impl AttackPolicy {
    /// The no-op attack.
    pub fn identity(_inter: &Interaction) -> Self {
        AttackPolicy {
            construction: MetaKind::Full,
            time_indexed: false,
            table: vec![BTreeMap::new()],
            provenance: Provenance::Identity,
        }
    }

    fn layer(&self, k: usize) -> Option<&BTreeMap<MetaState, MetaAction>> {
        if !self.time_indexed {
            return self.table.first();
        }
        let idx = match self.construction {
            MetaKind::Full => k,
            MetaKind::Compact => k / 4,
        };
        self.table.get(idx)
    }

    /// The element chosen at meta-step `k` (counted in full-construction
    /// subtimes) in `state`.
    pub fn element(&self, k: usize, state: &MetaState) -> Result<usize> {
        let (key, found) = match self.construction {
            MetaKind::Full => (*state, self.layer(k).and_then(|t| t.get(state))),
            MetaKind::Compact => {
                let key = MetaState::AtState(state.components()[0]);
                (key, self.layer(k).and_then(|t| t.get(&key)))
            }
        };
        match found {
            Some(action) => match self.construction {
                MetaKind::Full => Ok(action.element()),
                MetaKind::Compact if subtime_of(action) == state.subtime() => Ok(action.element()),
                MetaKind::Compact => Ok(state.own()),
            },
            None if self.provenance == Provenance::Planned => Err(Error::MissingPolicyEntry {
                state: key.key(),
                step: k,
            }),
            None => Ok(state.own()),
        }
    }

    pub fn to_raw(&self) -> RawAttackPolicy {
        RawAttackPolicy {
            provenance: self.provenance,
            construction: match self.construction {
                MetaKind::Full => "full".into(),
                MetaKind::Compact => "compact".into(),
            },
            time_indexed: self.time_indexed,
            table: self
                .table
                .iter()
                .map(|t| t.iter().map(|(k, v)| (k.key(), *v)).collect())
                .collect(),
        }
    }

    pub fn from_raw(raw: &RawAttackPolicy) -> Result<Self> {
        let construction = match raw.construction.as_str() {
            "full" => MetaKind::Full,
            "compact" => MetaKind::Compact,
            other => return Err(Error::Parse(format!("unknown construction {other:?}"))),
        };
        let table = raw
            .table
            .iter()
            .map(|t| {
                t.iter()
                    .map(|(k, v)| Ok((MetaState::parse_key(k)?, *v)))
                    .collect::<Result<BTreeMap<_, _>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if table.is_empty() {
            return Err(Error::Parse("attack policy has no tables".into()));
        }
        Ok(AttackPolicy {
            construction,
            time_indexed: raw.time_indexed,
            table,
            provenance: raw.provenance,
        })
    }

    /// Check every entry against the feasibility sets.
    pub fn check_against(&self, inter: &Interaction) -> Result<()> {
        for t in &self.table {
            for (state, action) in t {
                if self.construction == MetaKind::Full && !inter.feasible(state).contains(&action.element()) {
                    return Err(Error::InfeasibleAttack {
                        state: state.key(),
                        action: action.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Attack policy file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawAttackPolicy {
    pub provenance: Provenance,
    pub construction: String,
    pub time_indexed: bool,
    pub table: Vec<BTreeMap<String, MetaAction>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSolution {
    pub policy: AttackPolicy,
    /// Optimal meta-value at the initial distribution.
    pub meta_value: f64,
    /// Attacker objective in per-step units.
    pub objective_value: f64,
    /// Victim's value (post-attack rewards) under the policy, per-step units.
    pub victim_value: f64,
    pub mode: Mode,
    pub epsilon: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    metadata: SolutionMeta,
    policy: RawAttackPolicy,
}

#[derive(Serialize, Deserialize)]
struct SolutionMeta {
    meta_value: f64,
    objective_value: f64,
    victim_value: f64,
    mode: Mode,
    epsilon: Option<f64>,
}

impl AttackSolution {
    pub fn to_json(&self) -> String {
        let file = SolutionFile {
            metadata: SolutionMeta {
                meta_value: self.meta_value,
                objective_value: self.objective_value,
                victim_value: self.victim_value,
                mode: self.mode,
                epsilon: self.epsilon,
            },
            policy: self.policy.to_raw(),
        };
        serde_json::to_string_pretty(&file).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SolutionFile = serde_json::from_str(text)?;
        Ok(AttackSolution {
            policy: AttackPolicy::from_raw(&file.policy)?,
            meta_value: file.metadata.meta_value,
            objective_value: file.metadata.objective_value,
            victim_value: file.metadata.victim_value,
            mode: file.metadata.mode,
            epsilon: file.metadata.epsilon,
        })
    }
}

fn extract_policy(meta: &MetaMdp, policy: &ChoicePolicy) -> AttackPolicy {
    let p = &meta.process;
    let label = |k: usize, i: usize| p.choices_at(i, k)[policy.at(k, i)].label;
    let table = match policy {
        ChoicePolicy::Stationary(_) => vec![(0..meta.n_states())
            .map(|i| (meta.states()[i], label(0, i)))
            .collect()],
        ChoicePolicy::Layered(layers) => (0..layers.len())
            .map(|k| {
                meta.states()
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| meta.kind() == MetaKind::Compact || x.subtime() == k % 4)
                    .map(|(i, x)| (*x, label(k, i)))
                    .collect()
            })
            .collect(),
    };
    AttackPolicy {
        construction: meta.kind(),
        time_indexed: matches!(policy, ChoicePolicy::Layered(_)),
        table,
        provenance: Provenance::Planned,
    }
}

/// Optimal attack on `meta`: value iteration (discounted, gap
/// `eps (1 - gamma_bar) / (2 gamma_bar)`) or backward induction (finite).
/// Values are those of the returned policy, evaluated exactly.
pub fn plan_attack(meta: &MetaMdp, eps: f64) -> Result<AttackSolution> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let p = &meta.process;
    let solution = match p.criterion {
        Criterion::Discounted(_) => p.value_iteration(eps)?,
        Criterion::Finite(_) => p.backward_induction()?,
    };
    let eval = p.evaluate(&solution.policy)?;
    let (att, vic) = eval.start(&p.initial);
    let scale = meta.rescale();
    Ok(AttackSolution {
        policy: extract_policy(meta, &solution.policy),
        meta_value: att,
        objective_value: att / scale,
        victim_value: vic / scale,
        mode: meta.source_mode(),
        epsilon: matches!(p.criterion, Criterion::Discounted(_)).then_some(eps),
    })
}

/// Best objective over every deterministic policy of a finite-horizon
/// meta-MDP, by exhaustive enumeration over reachable decision points.
pub fn enumerate_attack_oracle(meta: &MetaMdp, limit: f64) -> Result<f64> {
    let p = &meta.process;
    let steps = match p.criterion {
        Criterion::Finite(h) => h,
        Criterion::Discounted(_) => return Err(Error::NotFiniteHorizon),
    };
    let n = meta.n_states();
    // states reachable at each step under some policy
    let mut reach: Vec<Vec<usize>> = Vec::with_capacity(steps);
    let mut current: Vec<usize> = (0..n).filter(|&i| p.initial[i] > 0.0).collect();
    for k in 0..steps {
        let mut mark = vec![false; n];
        for &i in &current {
            for c in p.choices_at(i, k) {
                for &(t, _) in &c.next {
                    mark[t] = true;
                }
            }
        }
        reach.push(current);
        current = (0..n).filter(|&i| mark[i]).collect();
    }
    let points: Vec<(usize, usize, usize)> = reach
        .iter()
        .enumerate()
        .flat_map(|(k, states)| states.iter().map(move |&i| (k, i)))
        .map(|(k, i)| (k, i, p.choices_at(i, k).len()))
        .filter(|&(_, _, len)| len > 1)
        .collect();
    let count: f64 = points.iter().map(|&(_, _, len)| len as f64).product();
    if count > limit {
        return Err(Error::TooLarge { count, limit });
    }
    let mut digits = vec![0usize; points.len()];
    let mut choice: Vec<HashMap<usize, usize>> = vec![HashMap::new(); steps];
    let mut best = f64::NEG_INFINITY;
    loop {
        for (d, &(k, i, _)) in digits.iter().zip(&points) {
            choice[k].insert(i, *d);
        }
        // forward propagation of the state distribution
        let mut dist = p.initial.clone();
        let mut total = 0.0;
        for (k, states) in reach.iter().enumerate() {
            let mut next = vec![0.0; n];
            for &i in states {
                if dist[i] == 0.0 {
                    continue;
                }
                let c = &p.choices_at(i, k)[choice[k].get(&i).copied().unwrap_or(0)];
                total += dist[i] * c.reward;
                for &(t, pr) in &c.next {
                    next[t] += dist[i] * pr;
                }
            }
            dist = next;
        }
        best = best.max(total);
        // odometer
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                return Ok(best / meta.rescale());
            }
            digits[pos] += 1;
            if digits[pos] < points[pos].2 {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Q-learning settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QLearningOptions {
    /// Exploration probability during learning.
    pub exploration: f64,
    /// Fraction of final episodes run greedily to estimate the objective.
    pub greedy_tail: f64,
}

impl Default for QLearningOptions {
    fn default() -> Self {
        QLearningOptions {
            exploration: 0.1,
            greedy_tail: 0.1,
        }
    }
}

type QKey = (usize, MetaState);

struct QAgent {
    q: HashMap<QKey, Vec<f64>>,
    visits: HashMap<QKey, Vec<u64>>,
    feasible: HashMap<QKey, Vec<usize>>,
    last_k: usize,
    explore: f64,
    learning: bool,
    rng: ChaCha8Rng,
}

impl QAgent {
    fn greedy(values: &[f64]) -> usize {
        let mut best = 0;
        for (i, v) in values.iter().enumerate().skip(1) {
            if crate::mdp::beats(*v, values[best]) {
                best = i;
            }
        }
        best
    }

    fn max_at(&self, key: &QKey) -> f64 {
        self.q
            .get(key)
            .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(0.0)
    }
}

impl AttackAgent for QAgent {
    fn act(&mut self, k: usize, state: &MetaState, feasible: &[usize]) -> Result<usize> {
        let key = (k, *state);
        let values = self.q.entry(key).or_insert_with(|| vec![0.0; feasible.len()]);
        self.feasible.entry(key).or_insert_with(|| feasible.to_vec());
        let idx = if self.learning && feasible.len() > 1 && self.rng.random::<f64>() < self.explore {
            self.rng.random_range(0..feasible.len())
        } else {
            Self::greedy(values)
        };
        Ok(feasible[idx])
    }

    fn feedback(&mut self, k: usize, state: &MetaState, element: usize, reward: f64, next: &MetaState) {
        if !self.learning {
            return;
        }
        let key = (k, *state);
        let idx = self.feasible[&key].iter().position(|&e| e == element).unwrap();
        let future = if k + 1 < self.last_k { self.max_at(&(k + 1, *next)) } else { 0.0 };
        let target = reward + future;
        let n = self.q[&key].len();
        let visits = self.visits.entry(key).or_insert_with(|| vec![0; n]);
        let lr = 1.0 / (1.0 + visits[idx] as f64);
        visits[idx] += 1;
        let q = self.q.get_mut(&key).unwrap();
        q[idx] += lr * (target - q[idx]);
    }
}

/// Tabular Q-learning attacker on the finite-horizon interaction.
///
/// Learning rate `1 / (1 + visits)`, zero initialization, epsilon-greedy
/// exploration on its own random stream. The final `greedy_tail` share of
/// episodes runs greedily without updates and their mean attacker return is
/// the reported objective.
pub fn learn_attack_qlearning(
    inter: &Interaction,
    episodes: usize,
    seed: u64,
    options: QLearningOptions,
) -> Result<AttackSolution> {
    let horizon = inter.model.horizon().ok_or(Error::NotFiniteHorizon)?;
    if episodes == 0 {
        let identity = AttackPolicy::identity(inter);
        let (v1, v2) = sim::exact_values(inter, &identity)?;
        return Ok(AttackSolution {
            policy: identity,
            meta_value: v2,
            objective_value: v2,
            victim_value: v1,
            mode: inter.model.mode(),
            epsilon: None,
        });
    }
    let mut explore_rng = ChaCha8Rng::seed_from_u64(seed);
    explore_rng.set_stream(u64::MAX);
    let mut agent = QAgent {
        q: HashMap::new(),
        visits: HashMap::new(),
        feasible: HashMap::new(),
        last_k: 4 * horizon,
        explore: options.exploration,
        learning: true,
        rng: explore_rng,
    };
    let tail = ((episodes as f64 * options.greedy_tail).ceil() as usize).clamp(1, episodes);
    let mut tail_returns = (0.0, 0.0);
    for e in 0..episodes {
        agent.learning = e < episodes - tail;
        let t = sim::run_episode(inter, &mut agent, seed, e as u64, horizon)?;
        if !agent.learning {
            tail_returns.0 += t.victim_return;
            tail_returns.1 += t.attacker_return;
        }
    }
    let mut table: Vec<BTreeMap<MetaState, MetaAction>> = vec![BTreeMap::new(); 4 * horizon];
    for ((k, state), values) in &agent.q {
        let e = agent.feasible[&(*k, *state)][QAgent::greedy(values)];
        table[*k].insert(*state, state.action(e));
    }
    let estimate = tail_returns.1 / tail as f64;
    Ok(AttackSolution {
        policy: AttackPolicy {
            construction: MetaKind::Full,
            time_indexed: true,
            table,
            provenance: Provenance::Learned,
        },
        meta_value: estimate,
        objective_value: estimate,
        victim_value: tail_returns.0 / tail as f64,
        mode: inter.model.mode(),
        epsilon: None,
    })
}
