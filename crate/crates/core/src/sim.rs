//! The attacked interaction protocol: sampled episodes, exact values and
//! Monte-Carlo estimates for both players.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{Interaction, MetaState};
use crate::error::{Error, Result};
use crate::mdp::{solve_chain, Mode};
use crate::planner::AttackPolicy;

/// Default tail tolerance for truncating discounted episodes.
pub const DEFAULT_TAIL: f64 = 1e-6;

/// An attacker that sees only the current meta-state and its feasible set.
pub trait AttackAgent {
    /// Pick an element of `feasible` at meta-step `k`.
    fn act(&mut self, k: usize, state: &MetaState, feasible: &[usize]) -> Result<usize>;

    /// Called after each meta-step with the attacker's reward and successor.
    fn feedback(&mut self, _k: usize, _state: &MetaState, _element: usize, _reward: f64, _next: &MetaState) {}

    /// Called when an episode ends.
    fn end_episode(&mut self) {}
}

/// The no-op attacker.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityAgent;

impl AttackAgent for IdentityAgent {
    fn act(&mut self, _k: usize, state: &MetaState, _feasible: &[usize]) -> Result<usize> {
        Ok(state.own())
    }
}

impl AttackAgent for &AttackPolicy {
    fn act(&mut self, k: usize, state: &MetaState, _feasible: &[usize]) -> Result<usize> {
        self.element(k, state)
    }
}

/// One environment step with pre- and post-attack elements (indices; rewards
/// are reward-support indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s: usize,
    pub s_attacked: usize,
    pub o: usize,
    pub o_attacked: usize,
    pub a: usize,
    pub a_attacked: usize,
    pub r: usize,
    pub r_attacked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    /// Attacker reward per step.
    pub attacker_rewards: Vec<f64>,
    /// Reward the victim received (post-attack) per step.
    pub victim_rewards: Vec<f64>,
    pub final_state: usize,
    pub victim_return: f64,
    pub attacker_return: f64,
    pub seed: u64,
    pub episode: u64,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    episode: u64,
    t: usize,
    #[serde(flatten)]
    step: &'a StepRecord,
    victim_reward: f64,
    attacker_reward: f64,
}

impl Trajectory {
    /// One JSON object per step.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (t, step) in self.steps.iter().enumerate() {
            let line = TraceLine {
                episode: self.episode,
                t,
                step,
                victim_reward: self.victim_rewards[t],
                attacker_reward: self.attacker_rewards[t],
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Random stream of episode `episode` under `seed`.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

fn sample(rng: &mut ChaCha8Rng, outcomes: &[(MetaState, f64)]) -> MetaState {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (x, p) in outcomes {
        acc += p;
        if u < acc {
            return *x;
        }
    }
    outcomes.last().expect("successor distribution is empty").0
}

fn sample_index(rng: &mut ChaCha8Rng, dist: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in dist.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Steps needed so the discounted tail is below `tail`.
pub fn truncation_length(gamma: f64, bound: f64, tail: f64) -> usize {
    if gamma == 0.0 {
        return 1;
    }
    if bound <= 0.0 {
        return 1;
    }
    let t = ((tail * (1.0 - gamma) / bound).ln() / gamma.ln()).ceil();
    t.max(1.0) as usize
}

/// Largest magnitude of either reward stream, used for truncation.
pub fn reward_bound(inter: &Interaction) -> f64 {
    let m = inter.model;
    let mut bound = m.r_max();
    let layers = inter.n_layers();
    for h in 0..layers {
        for s in 0..m.n_states() {
            for a in 0..m.n_actions() {
                for r in 0..m.n_rewards() {
                    bound = bound.max(inter.objective.value(m, h, s, a, r).abs());
                }
            }
        }
    }
    bound
}

/// Episode length in environment steps: `H`, or the truncation length.
pub fn episode_length(inter: &Interaction, tail: f64) -> usize {
    match inter.model.mode() {
        Mode::Finite(h) => h,
        Mode::Discounted(g) => truncation_length(g, reward_bound(inter), tail),
    }
}

/// Sample one episode of at most `max_steps` environment steps.
pub fn run_episode<A: AttackAgent + ?Sized>(
    inter: &Interaction,
    agent: &mut A,
    seed: u64,
    episode: u64,
    max_steps: usize,
) -> Result<Trajectory> {
    let mut rng = episode_rng(seed, episode);
    let m = inter.model;
    let gamma = match m.mode() {
        Mode::Discounted(g) => g,
        Mode::Finite(_) => 1.0,
    };
    let steps_cap = m.horizon().map_or(max_steps, |h| h.min(max_steps));
    let mut s = sample_index(&mut rng, m.initial());
    let mut out = Trajectory {
        steps: Vec::with_capacity(steps_cap),
        attacker_rewards: Vec::with_capacity(steps_cap),
        victim_rewards: Vec::with_capacity(steps_cap),
        final_state: s,
        victim_return: 0.0,
        attacker_return: 0.0,
        seed,
        episode,
    };
    let mut weight = 1.0;
    let attack = |agent: &mut A, k: usize, state: &MetaState| -> Result<usize> {
        let feasible = inter.feasible(state);
        let e = agent.act(k, state, feasible)?;
        if !feasible.contains(&e) {
            return Err(Error::InfeasibleAttack {
                state: state.key(),
                action: e.to_string(),
            });
        }
        Ok(e)
    };
    for t in 0..steps_cap {
        let h = if inter.n_layers() > 1 { t } else { 0 };
        let k = 4 * t;

        let x0 = MetaState::AtState(s);
        let s_att = attack(agent, k, &x0)?;
        let st = inter.step(h, &x0, s_att);
        let x1 = sample(&mut rng, &st.next);
        agent.feedback(k, &x0, s_att, 0.0, &x1);

        let o = x1.own();
        let o_att = attack(agent, k + 1, &x1)?;
        let st = inter.step(h, &x1, o_att);
        let x2 = sample(&mut rng, &st.next);
        agent.feedback(k + 1, &x1, o_att, 0.0, &x2);

        let a = x2.own();
        let a_att = attack(agent, k + 2, &x2)?;
        let st = inter.step(h, &x2, a_att);
        let x3 = sample(&mut rng, &st.next);
        agent.feedback(k + 2, &x2, a_att, 0.0, &x3);

        let r = x3.own();
        let r_att = attack(agent, k + 3, &x3)?;
        let st = inter.step(h, &x3, r_att);
        let x4 = sample(&mut rng, &st.next);
        agent.feedback(k + 3, &x3, r_att, st.attacker_reward, &x4);

        out.steps.push(StepRecord {
            s,
            s_attacked: s_att,
            o,
            o_attacked: o_att,
            a,
            a_attacked: a_att,
            r,
            r_attacked: r_att,
        });
        out.attacker_rewards.push(st.attacker_reward);
        out.victim_rewards.push(st.victim_reward);
        out.attacker_return += weight * st.attacker_reward;
        out.victim_return += weight * st.victim_reward;
        weight *= gamma;
        s = x4.own();
        out.final_state = s;
    }
    agent.end_episode();
    Ok(out)
}

/// Exact `(victim, attacker)` values of `policy`, in per-step units.
pub fn exact_values(inter: &Interaction, policy: &AttackPolicy) -> Result<(f64, f64)> {
    match inter.model.mode() {
        Mode::Finite(h) => exact_finite(inter, policy, h),
        Mode::Discounted(g) => exact_discounted(inter, policy, g),
    }
}

fn exact_finite(inter: &Interaction, policy: &AttackPolicy, horizon: usize) -> Result<(f64, f64)> {
    let layered = inter.n_layers() > 1;
    // forward pass: reachable meta-states and the policy's successor lists
    type Row = (MetaState, f64, f64, Vec<(usize, f64)>);
    let mut frontier: Vec<MetaState> = inter.initial_states().into_iter().map(|(x, _)| x).collect();
    frontier.sort_unstable();
    let mut rows: Vec<Vec<Row>> = Vec::with_capacity(4 * horizon);
    for k in 0..4 * horizon {
        let h = if layered { k / 4 } else { 0 };
        let mut next_index: HashMap<MetaState, usize> = HashMap::new();
        let mut next_states: Vec<MetaState> = Vec::new();
        let mut layer = Vec::with_capacity(frontier.len());
        for x in &frontier {
            let e = policy.element(k, x)?;
            if !inter.feasible(x).contains(&e) {
                return Err(Error::InfeasibleAttack {
                    state: x.key(),
                    action: e.to_string(),
                });
            }
            let st = inter.step(h, x, e);
            let next = st
                .next
                .iter()
                .map(|(y, p)| {
                    let idx = *next_index.entry(*y).or_insert_with(|| {
                        next_states.push(*y);
                        next_states.len() - 1
                    });
                    (idx, *p)
                })
                .collect();
            layer.push((*x, st.victim_reward, st.attacker_reward, next));
        }
        rows.push(layer);
        frontier = next_states;
    }
    // backward sweep
    let mut v1 = vec![0.0; frontier.len()];
    let mut v2 = vec![0.0; frontier.len()];
    for layer in rows.iter().rev() {
        let mut n1 = Vec::with_capacity(layer.len());
        let mut n2 = Vec::with_capacity(layer.len());
        for (_, r1, r2, next) in layer {
            let (mut a, mut b) = (*r1, *r2);
            for &(j, p) in next {
                a += p * v1[j];
                b += p * v2[j];
            }
            n1.push(a);
            n2.push(b);
        }
        v1 = n1;
        v2 = n2;
    }
    let first = &rows[0];
    let mut out = (0.0, 0.0);
    for (x, p) in inter.initial_states() {
        let i = first.iter().position(|row| row.0 == x).unwrap();
        out.0 += p * v1[i];
        out.1 += p * v2[i];
    }
    Ok(out)
}

fn exact_discounted(inter: &Interaction, policy: &AttackPolicy, gamma: f64) -> Result<(f64, f64)> {
    let mut order: Vec<MetaState> = Vec::new();
    let mut seen: HashSet<MetaState> = HashSet::new();
    for (x, _) in inter.initial_states() {
        if seen.insert(x) {
            order.push(x);
        }
    }
    let mut steps = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let x = order[i];
        let e = policy.element(x.subtime(), &x)?;
        if !inter.feasible(&x).contains(&e) {
            return Err(Error::InfeasibleAttack {
                state: x.key(),
                action: e.to_string(),
            });
        }
        let st = inter.step(0, &x, e);
        for (y, _) in &st.next {
            if seen.insert(*y) {
                order.push(*y);
            }
        }
        steps.push(st);
        i += 1;
    }
    let index: HashMap<MetaState, usize> = order.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let next: Vec<Vec<(usize, f64)>> = steps
        .iter()
        .map(|st| st.next.iter().map(|(y, p)| (index[y], *p)).collect())
        .collect();
    let refs: Vec<&[(usize, f64)]> = next.iter().map(|v| v.as_slice()).collect();
    let r1: Vec<f64> = steps.iter().map(|st| st.victim_reward).collect();
    let r2: Vec<f64> = steps.iter().map(|st| st.attacker_reward).collect();
    let gb = gamma.powf(0.25);
    let (v1, v2) = solve_chain(&refs, gb, &r1, &r2);
    let scale = gb.powi(3);
    let mut out = (0.0, 0.0);
    for (x, p) in inter.initial_states() {
        out.0 += p * v1[index[&x]] / scale;
        out.1 += p * v2[index[&x]] / scale;
    }
    Ok(out)
}

/// Sample mean and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Estimate {
            mean,
            stderr: (var / n).sqrt(),
        }
    }

    /// Whether `exact` lies within `max(3 stderr, 1e-9)` of the mean.
    pub fn agrees_with(&self, exact: f64) -> bool {
        self.agrees_within(exact, 0.0)
    }

    /// As `agrees_with`, widened by a known bias bound such as the
    /// truncation tail.
    pub fn agrees_within(&self, exact: f64, slack: f64) -> bool {
        (self.mean - exact).abs() <= (3.0 * self.stderr).max(1e-9) + slack
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub victim: Estimate,
    pub attacker: Estimate,
    pub episodes: usize,
    /// Environment steps per episode.
    pub steps: usize,
    /// Bound on the discounted mass beyond `steps` (0 in finite mode).
    pub tail_bound: f64,
}

/// Monte-Carlo values over `n` episodes; episode `e` uses stream `(seed, e)`.
pub fn monte_carlo_values<A>(inter: &Interaction, agent: &A, n: usize, seed: u64, tail: f64) -> Result<MonteCarlo>
where
    A: AttackAgent + Clone + Send + Sync,
{
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let steps = episode_length(inter, tail);
    let returns: Vec<(f64, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|e| {
            let mut a = agent.clone();
            run_episode(inter, &mut a, seed, e, steps).map(|t| (t.victim_return, t.attacker_return))
        })
        .collect::<Result<_>>()?;
    let v1: Vec<f64> = returns.iter().map(|r| r.0).collect();
    let v2: Vec<f64> = returns.iter().map(|r| r.1).collect();
    let tail_bound = match inter.model.mode() {
        Mode::Finite(_) => 0.0,
        Mode::Discounted(g) => g.powi(steps as i32) * reward_bound(inter) / (1.0 - g),
    };
    Ok(MonteCarlo {
        victim: Estimate::from_samples(&v1),
        attacker: Estimate::from_samples(&v2),
        episodes: n,
        steps,
        tail_bound,
    })
}
