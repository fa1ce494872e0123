//! Tabular POMDP model and the standard single-agent solvers.

mod model;
mod process;

pub use model::{
    validate_pomdp, ActionKernelData, IndexSet, Kernel, Mode, PolicyKind, PolicyRow, PolicyTable,
    RawPolicy, RawPomdp, StateKernelData, TabularPomdp, ValueTable, VictimPolicy, NEGATIVE_SLACK,
    ROW_TOLERANCE,
};
pub use process::{
    solve_chain, Choice, ChoicePolicy, Criterion, Evaluation, FiniteMdp, Solution, TIE_TOLERANCE,
};
pub(crate) use process::beats;

use crate::error::{Error, Result};

/// Markov chain induced by running `policy` on `model`, as a one-choice process.
fn policy_chain(model: &TabularPomdp, policy: &VictimPolicy) -> FiniteMdp<()> {
    let n_s = model.n_states();
    let layers = model.n_layers().max(policy.n_layers());
    let criterion = match model.mode() {
        Mode::Discounted(g) => Criterion::Discounted(g),
        Mode::Finite(h) => Criterion::Finite(h),
    };
    let choices = (0..n_s)
        .map(|s| {
            (0..layers)
                .map(|h| {
                    let mut reward = 0.0;
                    let mut next = vec![0.0; n_s];
                    for (o, &po) in model.obs_dist(h, s).iter().enumerate() {
                        if po == 0.0 {
                            continue;
                        }
                        for (a, &pa) in policy.dist(h, o).iter().enumerate() {
                            let w = po * pa;
                            if w == 0.0 {
                                continue;
                            }
                            reward += w * model.expected_reward(h, s, a);
                            for (t, &pt) in model.transition(h, s, a).iter().enumerate() {
                                next[t] += w * pt;
                            }
                        }
                    }
                    vec![Choice {
                        label: (),
                        reward,
                        side_reward: 0.0,
                        next: next
                            .into_iter()
                            .enumerate()
                            .filter(|(_, p)| *p > 0.0)
                            .collect(),
                    }]
                })
                .collect()
        })
        .collect();
    FiniteMdp {
        choices,
        stride: 1,
        criterion,
        initial: model.initial().to_vec(),
    }
}

/// Exact value of `policy` on `model`.
pub fn evaluate_policy(model: &TabularPomdp, policy: &VictimPolicy) -> Result<ValueTable> {
    policy.check_against(model)?;
    if policy.kind() == PolicyKind::TimeIndexed && model.horizon().is_none() {
        return Err(Error::DimensionMismatch(
            "time-indexed policy needs a finite-horizon model".into(),
        ));
    }
    let chain = policy_chain(model, policy);
    let n = chain.n_states();
    let eval = match chain.criterion {
        Criterion::Finite(h) => chain.evaluate(&ChoicePolicy::Layered(vec![vec![0; n]; h]))?,
        Criterion::Discounted(_) => chain.evaluate(&ChoicePolicy::Stationary(vec![0; n]))?,
    };
    Ok(ValueTable {
        layers: eval.primary,
    })
}

/// Fully observable model as a decision process whose choices are the available actions.
pub fn to_process(model: &TabularPomdp) -> FiniteMdp<usize> {
    let layers = model.n_layers();
    let criterion = match model.mode() {
        Mode::Discounted(g) => Criterion::Discounted(g),
        Mode::Finite(h) => Criterion::Finite(h),
    };
    let choices = (0..model.n_states())
        .map(|s| {
            (0..layers)
                .map(|h| {
                    model
                        .available(s)
                        .iter()
                        .map(|&a| Choice {
                            label: a,
                            reward: model.expected_reward(h, s, a),
                            side_reward: 0.0,
                            next: model
                                .transition(h, s, a)
                                .iter()
                                .enumerate()
                                .filter(|(_, p)| **p > 0.0)
                                .map(|(t, p)| (t, *p))
                                .collect(),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    FiniteMdp {
        choices,
        stride: 1,
        criterion,
        initial: model.initial().to_vec(),
    }
}

/// Epsilon-optimal values and a deterministic stationary policy for a
/// fully observable discounted model.
pub fn value_iteration(model: &TabularPomdp, eps: f64) -> Result<(ValueTable, VictimPolicy)> {
    if !model.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    if model.horizon().is_some() {
        return Err(Error::NotDiscounted);
    }
    let process = to_process(model);
    let sol = process.value_iteration(eps)?;
    let actions: Vec<usize> = (0..model.n_states())
        .map(|s| process.choices_at(s, 0)[sol.policy.at(0, s)].label)
        .collect();
    Ok((
        ValueTable { layers: sol.values },
        VictimPolicy::deterministic(model.n_actions(), &actions)?,
    ))
}

/// Optimal finite-horizon values (`H + 1` layers) and a deterministic time-indexed policy.
pub fn backward_induction(model: &TabularPomdp) -> Result<(ValueTable, VictimPolicy)> {
    let horizon = model.horizon().ok_or(Error::NotFiniteHorizon)?;
    if !model.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    let process = to_process(model);
    let sol = process.backward_induction()?;
    let actions: Vec<Vec<usize>> = (0..horizon)
        .map(|h| {
            (0..model.n_states())
                .map(|s| process.choices_at(s, h)[sol.policy.at(h, s)].label)
                .collect()
        })
        .collect();
    Ok((
        ValueTable { layers: sol.values },
        VictimPolicy::time_indexed_deterministic(model.n_actions(), &actions)?,
    ))
}

/// Small reference models used across the test suites.
pub mod fixtures {
    use super::*;

    fn raw(
        n_s: usize,
        n_a: usize,
        support: Vec<f64>,
        transition: Vec<Vec<Vec<f64>>>,
        reward_dist: Vec<Vec<Vec<f64>>>,
        gamma: Option<f64>,
        horizon: Option<usize>,
        mu: Vec<f64>,
    ) -> RawPomdp {
        let obs = (0..n_s)
            .map(|s| (0..n_s).map(|o| if o == s { 1.0 } else { 0.0 }).collect())
            .collect();
        RawPomdp {
            states: IndexSet::Count(n_s),
            observations: IndexSet::Count(n_s),
            actions: IndexSet::Count(n_a),
            reward_support: support,
            transition: ActionKernelData::Stationary(transition),
            reward_dist: ActionKernelData::Stationary(reward_dist),
            obs_dist: StateKernelData::Stationary(obs),
            gamma,
            horizon,
            mu,
            available: None,
        }
    }

    /// One state, actions `a0` (reward 0) and `a1` (reward 1), self-loop.
    pub fn m1_raw(gamma: Option<f64>, horizon: Option<usize>) -> RawPomdp {
        raw(
            1,
            2,
            vec![0.0, 1.0],
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            gamma,
            horizon,
            vec![1.0],
        )
    }

    /// `m1_raw` with discount 0.5.
    pub fn m1() -> TabularPomdp {
        validate_pomdp(&m1_raw(Some(0.5), None)).unwrap()
    }

    pub fn m1_finite(horizon: usize) -> TabularPomdp {
        validate_pomdp(&m1_raw(None, Some(horizon))).unwrap()
    }

    /// Two states; `a0` stays, `a1` swaps; reward 1 iff the state is `s1`.
    pub fn m2_raw(gamma: Option<f64>, horizon: Option<usize>, mu: Vec<f64>) -> RawPomdp {
        raw(
            2,
            2,
            vec![0.0, 1.0],
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ],
            vec![
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            gamma,
            horizon,
            mu,
        )
    }

    pub fn m2() -> TabularPomdp {
        validate_pomdp(&m2_raw(Some(0.5), None, vec![0.0, 1.0])).unwrap()
    }

    pub fn m2_finite(horizon: usize) -> TabularPomdp {
        validate_pomdp(&m2_raw(None, Some(horizon), vec![0.5, 0.5])).unwrap()
    }
}
