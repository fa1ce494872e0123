//! Sparse finite decision processes with state-dependent choice sets, and the
//! dynamic-programming solvers shared by the victim MDP, the attacker's
//! meta-MDP and the defense game.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Two values within this (scaled) distance are treated as tied; ties go to the lowest index.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Largest chain solved by a dense LU factorization; bigger chains fall back to iteration.
const DENSE_SOLVE_LIMIT: usize = 4000;

#[inline]
pub(crate) fn beats(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_TOLERANCE * (1.0 + best.abs())
}

/// One available choice at a state: a label, two reward streams and a sparse successor row.
///
/// `reward` is the stream the process optimizes; `side_reward` is carried along
/// for evaluation (the victim's reward inside an attacker's meta-MDP, say).
#[derive(Clone, Debug, PartialEq)]
pub struct Choice<L> {
    pub label: L,
    pub reward: f64,
    pub side_reward: f64,
    pub next: Vec<(usize, f64)>,
}

/// Planning criterion in process steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Criterion {
    Discounted(f64),
    Finite(usize),
}

/// A finite process whose choices may change with time.
///
/// `choices[s]` holds either one choice list (stationary) or one list per
/// layer; step `k` reads layer `k / stride`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp<L> {
    pub choices: Vec<Vec<Vec<Choice<L>>>>,
    pub stride: usize,
    pub criterion: Criterion,
    pub initial: Vec<f64>,
}

/// Deterministic policy over choice indices.
#[derive(Clone, Debug, PartialEq)]
pub enum ChoicePolicy {
    Stationary(Vec<usize>),
    /// `[step][state]`
    Layered(Vec<Vec<usize>>),
}

impl ChoicePolicy {
    #[inline]
    pub fn at(&self, step: usize, s: usize) -> usize {
        match self {
            ChoicePolicy::Stationary(p) => p[s],
            ChoicePolicy::Layered(p) => p[step][s],
        }
    }
}

/// Output of a solver: values per step (one layer when discounted) and the greedy policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<Vec<f64>>,
    pub policy: ChoicePolicy,
    pub iterations: usize,
}

/// Policy evaluation of both reward streams.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub primary: Vec<Vec<f64>>,
    pub side: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn start(&self, initial: &[f64]) -> (f64, f64) {
        let dot = |v: &[f64]| initial.iter().zip(v).map(|(p, x)| p * x).sum::<f64>();
        (dot(&self.primary[0]), dot(&self.side[0]))
    }
}

impl<L> FiniteMdp<L> {
    pub fn n_states(&self) -> usize {
        self.choices.len()
    }

    #[inline]
    pub fn choices_at(&self, s: usize, step: usize) -> &[Choice<L>] {
        let layers = &self.choices[s];
        if layers.len() == 1 {
            &layers[0]
        } else {
            &layers[(step / self.stride).min(layers.len() - 1)]
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.choices.iter().all(|l| l.len() == 1)
    }

    /// Check every choice row is a distribution and every state has a choice.
    pub fn check(&self) -> Result<()> {
        if self.initial.len() != self.n_states() {
            return Err(Error::DimensionMismatch("initial distribution length".into()));
        }
        for (s, layers) in self.choices.iter().enumerate() {
            for (l, list) in layers.iter().enumerate() {
                if list.is_empty() {
                    return Err(Error::PreconditionViolated(format!(
                        "state {s} has no choice in layer {l}"
                    )));
                }
                for (c, ch) in list.iter().enumerate() {
                    let sum: f64 = ch.next.iter().map(|(_, p)| p).sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::RowNotStochastic {
                            location: format!("state {s} layer {l} choice {c}"),
                            sum,
                        });
                    }
                    if let Some(&(t, _)) = ch.next.iter().find(|(t, _)| *t >= self.n_states()) {
                        return Err(Error::IndexOutOfRange {
                            what: "successor".into(),
                            index: t,
                            size: self.n_states(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn q(choice: &Choice<L>, discount: f64, next_values: &[f64]) -> f64 {
        choice.reward
            + discount
                * choice
                    .next
                    .iter()
                    .map(|&(t, p)| p * next_values[t])
                    .sum::<f64>()
    }

    /// Best choice index and value; `maximize = false` minimizes.
    #[inline]
    pub(crate) fn best(
        choices: &[Choice<L>],
        discount: f64,
        next_values: &[f64],
        maximize: bool,
    ) -> (usize, f64) {
        let sign = if maximize { 1.0 } else { -1.0 };
        let mut best_idx = 0;
        let mut best_val = sign * Self::q(&choices[0], discount, next_values);
        let mut top = best_val;
        for (i, c) in choices.iter().enumerate().skip(1) {
            let v = sign * Self::q(c, discount, next_values);
            if beats(v, best_val) {
                best_idx = i;
                best_val = v;
            }
            top = top.max(v);
        }
        (best_idx, sign * top)
    }

    /// Value iteration for a discounted process with the usual
    /// `eps (1 - gamma) / (2 gamma)` stopping gap, so the greedy policy is `eps`-optimal.
    pub fn value_iteration(&self, eps: f64) -> Result<Solution> {
        self.game_value_iteration(eps, |_| true)
    }

    /// Minimax value iteration: states where `maximizer(s)` is false minimize.
    pub fn game_value_iteration(&self, eps: f64, maximizer: impl Fn(usize) -> bool) -> Result<Solution> {
        let gamma = match self.criterion {
            Criterion::Discounted(g) => g,
            Criterion::Finite(_) => return Err(Error::NotDiscounted),
        };
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if !self.is_stationary() {
            return Err(Error::PreconditionViolated(
                "discounted solving needs stationary choices".into(),
            ));
        }
        let n = self.n_states();
        let threshold = if gamma == 0.0 {
            f64::INFINITY
        } else {
            eps * (1.0 - gamma) / (2.0 * gamma)
        };
        let mut v = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut iterations = 0;
        loop {
            iterations += 1;
            let mut gap: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for s in 0..n {
                let (_, val) = Self::best(self.choices_at(s, 0), gamma, &v, maximizer(s));
                gap = gap.max((val - v[s]).abs());
                scale = scale.max(val.abs());
                next[s] = val;
            }
            std::mem::swap(&mut v, &mut next);
            // Below this gap the iterate no longer moves in floating point.
            let floor = 64.0 * f64::EPSILON * (1.0 + scale);
            if gap <= threshold || gap <= floor {
                break;
            }
        }
        let policy = (0..n)
            .map(|s| Self::best(self.choices_at(s, 0), gamma, &v, maximizer(s)).0)
            .collect();
        Ok(Solution {
            values: vec![v],
            policy: ChoicePolicy::Stationary(policy),
            iterations,
        })
    }

    /// Exact finite-horizon dynamic programming; ties go to the lowest choice index.
    pub fn backward_induction(&self) -> Result<Solution> {
        self.game_backward_induction(|_| true)
    }

    pub fn game_backward_induction(&self, maximizer: impl Fn(usize) -> bool) -> Result<Solution> {
        let steps = match self.criterion {
            Criterion::Finite(h) => h,
            Criterion::Discounted(_) => return Err(Error::NotFiniteHorizon),
        };
        let n = self.n_states();
        let mut values = vec![vec![0.0; n]; steps + 1];
        let mut policy = vec![vec![0; n]; steps];
        for k in (0..steps).rev() {
            let (head, tail) = values.split_at_mut(k + 1);
            let next = &tail[0];
            for s in 0..n {
                let (idx, val) = Self::best(self.choices_at(s, k), 1.0, next, maximizer(s));
                head[k][s] = val;
                policy[k][s] = idx;
            }
        }
        Ok(Solution {
            values,
            policy: ChoicePolicy::Layered(policy),
            iterations: steps,
        })
    }

    /// Evaluate a deterministic policy on both reward streams.
    ///
    /// Discounted processes are solved directly (`(I - gamma P) V = r`);
    /// finite ones by one backward sweep.
    pub fn evaluate(&self, policy: &ChoicePolicy) -> Result<Evaluation> {
        let n = self.n_states();
        let pick = |k: usize, s: usize| -> Result<&Choice<L>> {
            let list = self.choices_at(s, k);
            let idx = policy.at(k, s);
            list.get(idx).ok_or(Error::IndexOutOfRange {
                what: format!("choice at state {s}"),
                index: idx,
                size: list.len(),
            })
        };
        match self.criterion {
            Criterion::Finite(steps) => {
                let mut primary = vec![vec![0.0; n]; steps + 1];
                let mut side = vec![vec![0.0; n]; steps + 1];
                for k in (0..steps).rev() {
                    for s in 0..n {
                        let c = pick(k, s)?;
                        let (mut p, mut q) = (c.reward, c.side_reward);
                        for &(t, pr) in &c.next {
                            p += pr * primary[k + 1][t];
                            q += pr * side[k + 1][t];
                        }
                        primary[k][s] = p;
                        side[k][s] = q;
                    }
                }
                Ok(Evaluation { primary, side })
            }
            Criterion::Discounted(gamma) => {
                if matches!(policy, ChoicePolicy::Layered(_)) || !self.is_stationary() {
                    return Err(Error::PreconditionViolated(
                        "discounted evaluation needs a stationary policy".into(),
                    ));
                }
                let mut rows = Vec::with_capacity(n);
                for s in 0..n {
                    rows.push(pick(0, s)?);
                }
                let next: Vec<&[(usize, f64)]> = rows.iter().map(|c| c.next.as_slice()).collect();
                let r1: Vec<f64> = rows.iter().map(|c| c.reward).collect();
                let r2: Vec<f64> = rows.iter().map(|c| c.side_reward).collect();
                let (primary, side) = solve_chain(&next, gamma, &r1, &r2);
                Ok(Evaluation {
                    primary: vec![primary],
                    side: vec![side],
                })
            }
        }
    }
}

/// Solve `V = r + gamma P V` for two reward vectors on a sparse chain.
pub fn solve_chain(
    next: &[&[(usize, f64)]],
    gamma: f64,
    r1: &[f64],
    r2: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = next.len();
    if n <= DENSE_SOLVE_LIMIT {
        let mut m = DMatrix::<f64>::identity(n, n);
        for (s, row) in next.iter().enumerate() {
            for &(t, p) in row.iter() {
                m[(s, t)] -= gamma * p;
            }
        }
        let lu = m.lu();
        let solve = |r: &[f64]| -> Vec<f64> {
            let b = DVector::from_column_slice(r);
            lu.solve(&b)
                .expect("I - gamma P is nonsingular for gamma < 1")
                .iter()
                .copied()
                .collect()
        };
        (solve(r1), solve(r2))
    } else {
        let iterate = |r: &[f64]| -> Vec<f64> {
            let mut v = r.to_vec();
            loop {
                let mut gap: f64 = 0.0;
                let mut scale: f64 = 0.0;
                for s in 0..n {
                    let val = r[s] + gamma * next[s].iter().map(|&(t, p)| p * v[t]).sum::<f64>();
                    gap = gap.max((val - v[s]).abs());
                    scale = scale.max(val.abs());
                    v[s] = val;
                }
                if gap <= 4.0 * f64::EPSILON * (1.0 + scale) {
                    return v;
                }
            }
        };
        (iterate(r1), iterate(r2))
    }
}
