//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use advrl::attack::{AttackConstraints, AttackerObjective, Interaction, MetaKind, MetaMdp, Surface};
use advrl::planner::{AttackPolicy, Provenance};
use advrl::mdp::{
    validate_pomdp, ActionKernelData, IndexSet, PolicyKind, RawPomdp, StateKernelData, TabularPomdp, VictimPolicy,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub states: usize,
    pub obs: usize,
    pub actions: usize,
    pub rewards: usize,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    pub fully_observable: bool,
    pub deterministic_rewards: bool,
    /// Kernels differ per time step (finite horizon only).
    pub time_indexed: bool,
}

impl Shape {
    /// Random small finite-horizon shape with every dimension in `1..=max`.
    pub fn small_finite(rng: &mut ChaCha8Rng, max: usize, max_h: usize) -> Self {
        let states = rng.random_range(1..=max);
        let fully_observable = rng.random_bool(0.4);
        Shape {
            states,
            obs: if fully_observable { states } else { rng.random_range(1..=max) },
            actions: rng.random_range(1..=max),
            rewards: rng.random_range(1..=max),
            horizon: Some(rng.random_range(1..=max_h)),
            gamma: None,
            fully_observable,
            deterministic_rewards: rng.random_bool(0.3),
            time_indexed: rng.random_bool(0.3),
        }
    }

    pub fn small_discounted(rng: &mut ChaCha8Rng, max: usize) -> Self {
        let mut shape = Self::small_finite(rng, max, 1);
        shape.horizon = None;
        shape.time_indexed = false;
        shape.gamma = Some([0.5, 0.8, 0.9, 0.95][rng.random_range(0..4)]);
        shape
    }
}

/// Random distribution over `n` outcomes; about `zeros` of the mass points are dropped.
pub fn random_dist(rng: &mut ChaCha8Rng, n: usize, zeros: f64) -> Vec<f64> {
    let keep = rng.random_range(0..n);
    let mut w: Vec<f64> = (0..n)
        .map(|i| {
            if i != keep && rng.random_bool(zeros) {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Distinct reward values, multiples of 0.5 in `[-3, 3]`.
pub fn random_support(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut pool: Vec<f64> = (-6..=6).map(|k| k as f64 * 0.5).collect();
    pool.shuffle(rng);
    pool.truncate(n);
    pool
}

pub fn random_raw(rng: &mut ChaCha8Rng, shape: &Shape) -> RawPomdp {
    let layers = if shape.time_indexed { shape.horizon.unwrap_or(1) } else { 1 };
    let trans: Vec<Vec<Vec<Vec<f64>>>> = (0..layers)
        .map(|_| {
            (0..shape.states)
                .map(|_| (0..shape.actions).map(|_| random_dist(rng, shape.states, 0.4)).collect())
                .collect()
        })
        .collect();
    let rew: Vec<Vec<Vec<Vec<f64>>>> = (0..layers)
        .map(|_| {
            (0..shape.states)
                .map(|_| {
                    (0..shape.actions)
                        .map(|_| {
                            if shape.deterministic_rewards {
                                one_hot(shape.rewards, rng.random_range(0..shape.rewards))
                            } else {
                                random_dist(rng, shape.rewards, 0.3)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let obs: Vec<Vec<f64>> = (0..shape.states)
        .map(|s| {
            if shape.fully_observable {
                one_hot(shape.states, s)
            } else {
                random_dist(rng, shape.obs, 0.4)
            }
        })
        .collect();
    let wrap = |mut v: Vec<Vec<Vec<Vec<f64>>>>| {
        if v.len() == 1 {
            ActionKernelData::Stationary(v.pop().unwrap())
        } else {
            ActionKernelData::TimeIndexed(v)
        }
    };
    RawPomdp {
        states: IndexSet::Count(shape.states),
        observations: IndexSet::Count(shape.obs),
        actions: IndexSet::Count(shape.actions),
        reward_support: random_support(rng, shape.rewards),
        transition: wrap(trans),
        reward_dist: wrap(rew),
        obs_dist: StateKernelData::Stationary(obs),
        gamma: shape.gamma,
        horizon: shape.horizon,
        mu: random_dist(rng, shape.states, 0.3),
        available: None,
    }
}

pub fn random_model(rng: &mut ChaCha8Rng, shape: &Shape) -> TabularPomdp {
    validate_pomdp(&random_raw(rng, shape)).expect("generated model validates")
}

/// Random stationary victim policy over observations.
pub fn random_victim(rng: &mut ChaCha8Rng, model: &TabularPomdp, deterministic: bool) -> VictimPolicy {
    let n_a = model.n_actions();
    if deterministic {
        let acts: Vec<usize> = (0..model.n_obs()).map(|_| rng.random_range(0..n_a)).collect();
        VictimPolicy::deterministic(n_a, &acts).unwrap()
    } else {
        let rows = (0..model.n_obs()).map(|_| random_dist(rng, n_a, 0.3)).collect();
        VictimPolicy::new(PolicyKind::Stationary, n_a, vec![rows]).unwrap()
    }
}

/// Random deterministic time-indexed victim over states.
pub fn random_time_indexed_victim(rng: &mut ChaCha8Rng, model: &TabularPomdp) -> VictimPolicy {
    let h = model.horizon().expect("finite horizon");
    let n_a = model.n_actions();
    let table: Vec<Vec<usize>> = (0..h)
        .map(|_| (0..model.n_obs()).map(|_| rng.random_range(0..n_a)).collect())
        .collect();
    VictimPolicy::time_indexed_deterministic(n_a, &table).unwrap()
}

/// Enable `surfaces`; each key's set keeps its own element and gains every
/// other element with probability `density`.
pub fn random_constraints(
    rng: &mut ChaCha8Rng,
    model: &TabularPomdp,
    surfaces: &[Surface],
    density: f64,
) -> AttackConstraints {
    let mut c = AttackConstraints::identity(model);
    for &surface in surfaces {
        c.enable(surface);
        let domain = match surface {
            Surface::State => model.n_states(),
            Surface::Observation => model.n_obs(),
            Surface::Action => model.n_actions(),
            Surface::Reward => model.n_rewards(),
        };
        for key in c.keys(surface) {
            let set: Vec<usize> = (0..domain).filter(|_| rng.random_bool(density)).collect();
            let _ = c.set(surface, &key, set).unwrap();
        }
    }
    c
}

/// Widen every set of `base` (on its enabled surfaces) at random.
pub fn widen(rng: &mut ChaCha8Rng, model: &TabularPomdp, base: &AttackConstraints, density: f64) -> AttackConstraints {
    let mut c = base.clone();
    for surface in base.toggles().enabled() {
        let domain = match surface {
            Surface::State => model.n_states(),
            Surface::Observation => model.n_obs(),
            Surface::Action => model.n_actions(),
            Surface::Reward => model.n_rewards(),
        };
        for key in c.keys(surface) {
            let mut set = base.get(surface, &key).unwrap().to_vec();
            set.extend((0..domain).filter(|_| rng.random_bool(density)));
            let _ = c.set(surface, &key, set).unwrap();
        }
    }
    c
}

pub fn random_custom_objective(rng: &mut ChaCha8Rng, model: &TabularPomdp) -> AttackerObjective {
    AttackerObjective::CustomTable {
        table: (0..model.n_states())
            .map(|_| {
                (0..model.n_actions())
                    .map(|_| (0..model.n_rewards()).map(|_| rng.random_range(-2..=2) as f64).collect())
                    .collect()
            })
            .collect(),
    }
}

/// Random deterministic teaching target over states.
pub fn random_teaching(rng: &mut ChaCha8Rng, model: &TabularPomdp) -> AttackerObjective {
    let n_a = model.n_actions();
    let acts: Vec<usize> = (0..model.n_states()).map(|_| rng.random_range(0..n_a)).collect();
    AttackerObjective::PolicyTeaching {
        target: VictimPolicy::deterministic(n_a, &acts).unwrap(),
    }
}

pub fn random_objective(rng: &mut ChaCha8Rng, model: &TabularPomdp) -> AttackerObjective {
    match rng.random_range(0..3) {
        0 => AttackerObjective::NegateReward,
        1 => random_teaching(rng, model),
        _ => random_custom_objective(rng, model),
    }
}

/// `|a - b| <= tol`, with a readable message.
pub fn close(a: f64, b: f64, tol: f64) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{a} vs {b} (diff {:e}, tol {tol:e})", (a - b).abs()))
    }
}

/// Uniformly random feasible attack over the meta-states of `meta` (time-indexed
/// in finite-horizon mode).
pub fn random_attack_policy(rng: &mut ChaCha8Rng, inter: &Interaction, meta: &MetaMdp) -> AttackPolicy {
    let layers = match inter.model.horizon() {
        Some(h) => 4 * h,
        None => 1,
    };
    let table = (0..layers)
        .map(|k| {
            meta.states()
                .iter()
                .filter(|x| layers == 1 || x.subtime() == k % 4)
                .map(|x| {
                    let feasible = inter.feasible(x);
                    (*x, x.action(feasible[rng.random_range(0..feasible.len())]))
                })
                .collect::<BTreeMap<_, _>>()
        })
        .collect();
    AttackPolicy {
        construction: MetaKind::Full,
        time_indexed: layers > 1,
        table,
        provenance: Provenance::Planned,
    }
}
