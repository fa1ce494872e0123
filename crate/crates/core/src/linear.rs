//! Linear factorizations of an environment and victim, lifted to the
//! attacker's meta-MDP.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackerObjective, MetaKind, MetaMdp, MetaState};
use crate::error::{Error, Result};
use crate::mdp::{
    validate_pomdp, ActionKernelData, IndexSet, PolicyKind, RawPomdp, StateKernelData, TabularPomdp, VictimPolicy,
};

const NEG_TOL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-9;

/// Linear components of an environment and a stationary victim.
///
/// `O(o|s) = <phi(s), obs_weight(o)>`, `pi(a|o) = <psi(o), act_weight(a)>`,
/// `R(r|s,a) = <phi(s,a), rew_weight(r)>`, `P(s'|s,a) = <phi(s,a), next_weight(s')>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearComponents {
    pub d_m: usize,
    pub d_pi: usize,
    /// `[s]`
    pub state_feat: Vec<Vec<f64>>,
    /// `[o]`
    pub obs_weight: Vec<Vec<f64>>,
    /// `[o]`
    pub obs_feat: Vec<Vec<f64>>,
    /// `[a]`
    pub act_weight: Vec<Vec<f64>>,
    /// `[s][a]`
    pub sa_feat: Vec<Vec<Vec<f64>>>,
    /// `[r]`
    pub rew_weight: Vec<Vec<f64>>,
    /// `[s']`
    pub next_weight: Vec<Vec<f64>>,
    pub reward_support: Vec<f64>,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_len(what: &str, v: &[Vec<f64>], n: usize, d: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!("{what} has {} rows, expected {n}", v.len())));
    }
    if let Some((i, row)) = v.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "{what}[{i}] has length {}, expected {d}",
            row.len()
        )));
    }
    Ok(())
}

fn check_row(location: String, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < -NEG_TOL) {
        return Err(Error::NegativeProbability { location });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::RowNotStochastic { location, sum });
    }
    Ok(())
}

fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Columns of `k` random distributions over `n` outcomes, as `[outcome][k]`.
fn random_mixture_weights<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<Vec<f64>> {
    let columns: Vec<Vec<f64>> = (0..k).map(|_| random_simplex(rng, n)).collect();
    (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect()
}

impl LinearComponents {
    pub fn n_states(&self) -> usize {
        self.state_feat.len()
    }

    pub fn n_obs(&self) -> usize {
        self.obs_weight.len()
    }

    pub fn n_actions(&self) -> usize {
        self.act_weight.len()
    }

    pub fn n_rewards(&self) -> usize {
        self.rew_weight.len()
    }

    pub fn obs_prob(&self, s: usize, o: usize) -> f64 {
        dot(&self.state_feat[s], &self.obs_weight[o])
    }

    pub fn policy_prob(&self, o: usize, a: usize) -> f64 {
        dot(&self.obs_feat[o], &self.act_weight[a])
    }

    pub fn reward_prob(&self, s: usize, a: usize, r: usize) -> f64 {
        dot(&self.sa_feat[s][a], &self.rew_weight[r])
    }

    pub fn transition_prob(&self, s: usize, a: usize, t: usize) -> f64 {
        dot(&self.sa_feat[s][a], &self.next_weight[t])
    }

    /// Check shapes and that every induced kernel row is a distribution.
    pub fn validate(&self) -> Result<()> {
        let (n_s, n_o, n_a, n_r) = (self.n_states(), self.n_obs(), self.n_actions(), self.n_rewards());
        if self.d_m == 0 || self.d_pi == 0 {
            return Err(Error::DimensionMismatch("feature dimensions must be positive".into()));
        }
        if n_s == 0 || n_o == 0 || n_a == 0 || n_r == 0 {
            return Err(Error::DimensionMismatch("every index set must be nonempty".into()));
        }
        check_len("state_feat", &self.state_feat, n_s, self.d_m)?;
        check_len("obs_weight", &self.obs_weight, n_o, self.d_m)?;
        check_len("obs_feat", &self.obs_feat, n_o, self.d_pi)?;
        check_len("act_weight", &self.act_weight, n_a, self.d_pi)?;
        check_len("rew_weight", &self.rew_weight, n_r, self.d_m)?;
        check_len("next_weight", &self.next_weight, n_s, self.d_m)?;
        if self.sa_feat.len() != n_s {
            return Err(Error::DimensionMismatch(format!(
                "sa_feat has {} rows, expected {n_s}",
                self.sa_feat.len()
            )));
        }
        for (s, row) in self.sa_feat.iter().enumerate() {
            check_len(&format!("sa_feat[{s}]"), row, n_a, self.d_m)?;
        }
        if self.reward_support.len() != n_r {
            return Err(Error::DimensionMismatch(format!(
                "reward_support has {} values, expected {n_r}",
                self.reward_support.len()
            )));
        }
        if self.reward_support.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidRewardSupport("values must be finite".into()));
        }
        for s in 0..n_s {
            let row: Vec<f64> = (0..n_o).map(|o| self.obs_prob(s, o)).collect();
            check_row(format!("O(.|{s})"), &row)?;
            for a in 0..n_a {
                let row: Vec<f64> = (0..n_r).map(|r| self.reward_prob(s, a, r)).collect();
                check_row(format!("R(.|{s},{a})"), &row)?;
                let row: Vec<f64> = (0..n_s).map(|t| self.transition_prob(s, a, t)).collect();
                check_row(format!("P(.|{s},{a})"), &row)?;
            }
        }
        for o in 0..n_o {
            let row: Vec<f64> = (0..n_a).map(|a| self.policy_prob(o, a)).collect();
            check_row(format!("pi(.|{o})"), &row)?;
        }
        Ok(())
    }

    /// The environment these components induce, in the given mode.
    pub fn induced_model(&self, gamma: Option<f64>, horizon: Option<usize>, mu: Vec<f64>) -> Result<TabularPomdp> {
        self.validate()?;
        let (n_s, n_o, n_a, n_r) = (self.n_states(), self.n_obs(), self.n_actions(), self.n_rewards());
        let clamp = |p: f64| p.max(0.0);
        let trans = (0..n_s)
            .map(|s| {
                (0..n_a)
                    .map(|a| (0..n_s).map(|t| clamp(self.transition_prob(s, a, t))).collect())
                    .collect()
            })
            .collect();
        let rew = (0..n_s)
            .map(|s| {
                (0..n_a)
                    .map(|a| (0..n_r).map(|r| clamp(self.reward_prob(s, a, r))).collect())
                    .collect()
            })
            .collect();
        let obs = (0..n_s)
            .map(|s| (0..n_o).map(|o| clamp(self.obs_prob(s, o))).collect())
            .collect();
        validate_pomdp(&RawPomdp {
            states: IndexSet::Count(n_s),
            observations: IndexSet::Count(n_o),
            actions: IndexSet::Count(n_a),
            reward_support: self.reward_support.clone(),
            transition: ActionKernelData::Stationary(trans),
            reward_dist: ActionKernelData::Stationary(rew),
            obs_dist: StateKernelData::Stationary(obs),
            gamma,
            horizon,
            mu,
            available: None,
        })
    }

    /// The stationary victim policy these components induce.
    pub fn induced_policy(&self) -> Result<VictimPolicy> {
        self.validate()?;
        let rows = (0..self.n_obs())
            .map(|o| (0..self.n_actions()).map(|a| self.policy_prob(o, a).max(0.0)).collect())
            .collect();
        VictimPolicy::new(PolicyKind::Stationary, self.n_actions(), vec![rows])
    }

    /// Indicator embedding of a stationary model and victim: `d_M = |S||A|`,
    /// `d_pi = |O|`.
    pub fn tabular(model: &TabularPomdp, victim: &VictimPolicy) -> Result<Self> {
        if model.n_layers() > 1 || victim.n_layers() > 1 {
            return Err(Error::PreconditionViolated(
                "linear components need a stationary model and victim".into(),
            ));
        }
        victim.check_against(model)?;
        let (n_s, n_o, n_a, n_r) = (model.n_states(), model.n_obs(), model.n_actions(), model.n_rewards());
        let d_m = n_s * n_a;
        let unit = |n: usize, i: usize| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        };
        let sa = |s: usize, a: usize| s * n_a + a;
        let by_pair = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            let mut v = vec![0.0; d_m];
            for s in 0..n_s {
                for a in 0..n_a {
                    v[sa(s, a)] = f(s, a);
                }
            }
            v
        };
        Ok(LinearComponents {
            d_m,
            d_pi: n_o,
            // phi(s) sits on the first |S| coordinates; obs weights read the same ones.
            state_feat: (0..n_s).map(|s| unit(d_m, s)).collect(),
            obs_weight: (0..n_o)
                .map(|o| {
                    let mut v = vec![0.0; d_m];
                    for (s, x) in v.iter_mut().enumerate().take(n_s) {
                        *x = model.obs_dist(0, s)[o];
                    }
                    v
                })
                .collect(),
            obs_feat: (0..n_o).map(|o| unit(n_o, o)).collect(),
            act_weight: (0..n_a).map(|a| (0..n_o).map(|o| victim.dist(0, o)[a]).collect()).collect(),
            sa_feat: (0..n_s).map(|s| (0..n_a).map(|a| unit(d_m, sa(s, a))).collect()).collect(),
            rew_weight: (0..n_r)
                .map(|r| by_pair(&|s, a| model.reward_dist(0, s, a)[r]))
                .collect(),
            next_weight: (0..n_s)
                .map(|t| by_pair(&|s, a| model.transition(0, s, a)[t]))
                .collect(),
            reward_support: model.reward_support().to_vec(),
        })
    }

    /// Random valid components: features on the simplex, weights whose
    /// columns are distributions, so every inner product is a mixture.
    #[allow(clippy::too_many_arguments)]
    pub fn random<R: Rng>(
        rng: &mut R,
        n_s: usize,
        n_o: usize,
        n_a: usize,
        n_r: usize,
        d_m: usize,
        d_pi: usize,
    ) -> Self {
        let support: Vec<f64> = (0..n_r).map(|i| i as f64 - (n_r / 2) as f64).collect();
        LinearComponents {
            d_m,
            d_pi,
            state_feat: (0..n_s).map(|_| random_simplex(rng, d_m)).collect(),
            obs_weight: random_mixture_weights(rng, n_o, d_m),
            obs_feat: (0..n_o).map(|_| random_simplex(rng, d_pi)).collect(),
            act_weight: random_mixture_weights(rng, n_a, d_pi),
            sa_feat: (0..n_s)
                .map(|_| (0..n_a).map(|_| random_simplex(rng, d_m)).collect())
                .collect(),
            rew_weight: random_mixture_weights(rng, n_r, d_m),
            next_weight: random_mixture_weights(rng, n_s, d_m),
            reward_support: support,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lc: LinearComponents = serde_json::from_str(text)?;
        lc.validate()?;
        Ok(lc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("components serialize")
    }
}

/// Feature maps of the meta-MDP: `P(y|x,e) = <feature(x,e), next_weight(y)>`
/// and `r(x,e) = <feature(x,e), e_1>`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaFeatures {
    lc: LinearComponents,
    objective: AttackerObjective,
    dim: usize,
}

/// Largest deviation between the linear representation and the tabular meta-MDP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearReport {
    pub max_abs_transition_error: f64,
    pub max_abs_reward_error: f64,
    pub pairs_checked: usize,
    pub transitions_checked: usize,
}

/// Lift components and a stationary attacker objective to meta-features of
/// dimension `max(d_M, d_pi) + 1`.
pub fn build_meta_features(lc: &LinearComponents, objective: &AttackerObjective) -> Result<MetaFeatures> {
    lc.validate()?;
    if objective.n_layers() > 1 {
        return Err(Error::PreconditionViolated(
            "time-dependent attacker objectives are not lifted".into(),
        ));
    }
    // Shape check against a stand-in model built from the components.
    let probe = lc.induced_model(Some(0.5), None, {
        let mut mu = vec![0.0; lc.n_states()];
        mu[0] = 1.0;
        mu
    })?;
    objective.check_against(&probe)?;
    let dim = lc.d_m.max(lc.d_pi) + 1;
    debug_assert!(dim <= lc.d_m.max(lc.d_pi) + 1);
    Ok(MetaFeatures {
        lc: lc.clone(),
        objective: objective.clone(),
        dim,
    })
}

impl MetaFeatures {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &LinearComponents {
        &self.lc
    }

    fn lift(&self, head: f64, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        out[0] = head;
        out[1..=v.len()].copy_from_slice(v);
        out
    }

    /// `e_1`.
    pub fn reward_weight(&self) -> Vec<f64> {
        self.lift(1.0, &[])
    }

    /// Feature of choosing `element` at `state`.
    pub fn feature(&self, state: &MetaState, element: usize) -> Vec<f64> {
        match *state {
            MetaState::AtState(_) => self.lift(0.0, &self.lc.state_feat[element]),
            MetaState::AtObs(..) => self.lift(0.0, &self.lc.obs_feat[element]),
            MetaState::AtAction(s, _, _) => self.lift(0.0, &self.lc.sa_feat[s][element]),
            MetaState::AtReward(s, _, a, _) => {
                let g = self.objective.value_on(&self.lc.reward_support, 0, s, a, element);
                self.lift(g, &self.lc.sa_feat[s][a])
            }
        }
    }

    /// Weight vector of a successor meta-state.
    pub fn next_weight(&self, state: &MetaState) -> Vec<f64> {
        match *state {
            MetaState::AtState(t) => self.lift(0.0, &self.lc.next_weight[t]),
            MetaState::AtObs(_, o) => self.lift(0.0, &self.lc.obs_weight[o]),
            MetaState::AtAction(_, _, a) => self.lift(0.0, &self.lc.act_weight[a]),
            MetaState::AtReward(_, _, _, r) => self.lift(0.0, &self.lc.rew_weight[r]),
        }
    }

    /// Successors that can follow `element` at `state`, whatever their probability.
    fn compatible(&self, state: &MetaState, element: usize) -> Vec<MetaState> {
        let lc = &self.lc;
        match *state {
            MetaState::AtState(_) => (0..lc.n_obs()).map(|o| MetaState::AtObs(element, o)).collect(),
            MetaState::AtObs(s, _) => (0..lc.n_actions())
                .map(|a| MetaState::AtAction(s, element, a))
                .collect(),
            MetaState::AtAction(s, o, _) => (0..lc.n_rewards())
                .map(|r| MetaState::AtReward(s, o, element, r))
                .collect(),
            MetaState::AtReward(..) => (0..lc.n_states()).map(MetaState::AtState).collect(),
        }
    }
}

fn in_range(state: &MetaState, lc: &LinearComponents) -> bool {
    let limits = [lc.n_states(), lc.n_obs(), lc.n_actions(), lc.n_rewards()];
    state.components().iter().zip(limits).all(|(x, n)| *x < n)
}

/// Compare the linear representation with a tabular meta-MDP entry by entry.
///
/// Every materialized (state, choice) pair is checked against all
/// structurally compatible successors, including those of probability zero.
pub fn verify_linear_consistency(mf: &MetaFeatures, meta: &MetaMdp) -> Result<LinearReport> {
    if meta.kind() != MetaKind::Full {
        return Err(Error::MismatchedInstances("expected a four-subtime meta-MDP".into()));
    }
    if let Some(bad) = meta.states().iter().find(|s| !in_range(s, &mf.lc)) {
        return Err(Error::MismatchedInstances(format!(
            "meta-state {bad} is outside the components' index sets"
        )));
    }
    let theta = mf.reward_weight();
    let mut report = LinearReport {
        max_abs_transition_error: 0.0,
        max_abs_reward_error: 0.0,
        pairs_checked: 0,
        transitions_checked: 0,
    };
    for (i, state) in meta.states().iter().enumerate() {
        for layer in &meta.process.choices[i] {
            for choice in layer {
                let e = choice.label.element();
                let f = mf.feature(state, e);
                report.pairs_checked += 1;
                let r_err = (dot(&f, &theta) - choice.reward).abs();
                report.max_abs_reward_error = report.max_abs_reward_error.max(r_err);
                let targets = mf.compatible(state, e);
                for (j, _) in &choice.next {
                    if !targets.contains(&meta.states()[*j]) {
                        return Err(Error::MismatchedInstances(format!(
                            "transition {state} -> {} is not structurally possible",
                            meta.states()[*j]
                        )));
                    }
                }
                for t in &targets {
                    let p = meta
                        .index_of(t)
                        .and_then(|j| choice.next.iter().find(|(k, _)| *k == j))
                        .map_or(0.0, |(_, p)| *p);
                    let err = (dot(&f, &mf.next_weight(t)) - p).abs();
                    report.transitions_checked += 1;
                    report.max_abs_transition_error = report.max_abs_transition_error.max(err);
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{build_constraints, build_meta_mdp, ConstraintRules, Interaction, MetaBuildOptions, SurfaceRule};
    use crate::mdp::fixtures::m2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_rules() -> ConstraintRules {
        ConstraintRules {
            state: SurfaceRule::All,
            observation: SurfaceRule::All,
            action: SurfaceRule::All,
            reward: SurfaceRule::All,
        }
    }

    fn check(lc: &LinearComponents, g: &AttackerObjective) -> LinearReport {
        let n_s = lc.n_states();
        let m = lc.induced_model(Some(0.9), None, vec![1.0 / n_s as f64; n_s]).unwrap();
        let pi = lc.induced_policy().unwrap();
        let c = build_constraints(&all_rules(), &m).unwrap().constraints;
        let inter = Interaction::new(&m, &pi, &c, g).unwrap();
        let meta = build_meta_mdp(&inter, MetaBuildOptions { prune: false }).unwrap();
        let mf = build_meta_features(lc, g).unwrap();
        verify_linear_consistency(&mf, &meta).unwrap()
    }

    #[test]
    fn dimension_is_max_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lc = LinearComponents::random(&mut rng, 2, 2, 2, 2, 3, 2);
        let mf = build_meta_features(&lc, &AttackerObjective::NegateReward).unwrap();
        assert_eq!(mf.dim(), 4);
    }

    #[test]
    fn reward_coordinate_only_on_reward_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lc = LinearComponents::random(&mut rng, 2, 2, 2, 3, 2, 2);
        let mf = build_meta_features(&lc, &AttackerObjective::NegateReward).unwrap();
        let e1 = mf.reward_weight();
        assert_eq!(dot(&mf.feature(&MetaState::AtState(0), 1), &e1), 0.0);
        assert_eq!(dot(&mf.feature(&MetaState::AtObs(0, 1), 0), &e1), 0.0);
        assert_eq!(dot(&mf.feature(&MetaState::AtAction(0, 1, 0), 1), &e1), 0.0);
        for r in 0..3 {
            let f = mf.feature(&MetaState::AtReward(1, 0, 1, 0), r);
            assert_eq!(dot(&f, &e1), -lc.reward_support[r]);
        }
    }

    #[test]
    fn random_components_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lc = LinearComponents::random(&mut rng, 3, 2, 2, 2, 3, 2);
        let rep = check(&lc, &AttackerObjective::NegateReward);
        assert!(rep.max_abs_transition_error <= 1e-12, "{rep:?}");
        assert!(rep.max_abs_reward_error <= 1e-12, "{rep:?}");
        assert!(rep.pairs_checked > 0);
    }

    #[test]
    fn tabular_embedding_is_exact() {
        let m = m2();
        let pi = VictimPolicy::new(PolicyKind::Stationary, 2, vec![vec![vec![0.3, 0.7], vec![1.0, 0.0]]]).unwrap();
        let lc = LinearComponents::tabular(&m, &pi).unwrap();
        assert_eq!(lc.d_m, 4);
        let rep = check(&lc, &AttackerObjective::NegateReward);
        assert_eq!(rep.max_abs_transition_error, 0.0);
        assert_eq!(rep.max_abs_reward_error, 0.0);
    }

    #[test]
    fn perturbed_weight_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lc = LinearComponents::random(&mut rng, 2, 2, 2, 2, 2, 2);
        let g = AttackerObjective::NegateReward;
        let m = lc.induced_model(Some(0.9), None, vec![0.5, 0.5]).unwrap();
        let pi = lc.induced_policy().unwrap();
        let c = build_constraints(&all_rules(), &m).unwrap().constraints;
        let inter = Interaction::new(&m, &pi, &c, &g).unwrap();
        let meta = build_meta_mdp(&inter, MetaBuildOptions { prune: false }).unwrap();
        let mut bad = lc.clone();
        bad.next_weight[0][1] += 0.1;
        let mf = build_meta_features(&lc, &g).unwrap();
        let mf_bad = MetaFeatures { lc: bad, ..mf };
        let rep = verify_linear_consistency(&mf_bad, &meta).unwrap();
        let min_feat = lc
            .sa_feat
            .iter()
            .flatten()
            .map(|v| v[1])
            .filter(|x| *x > 0.0)
            .fold(f64::INFINITY, f64::min);
        assert!(rep.max_abs_transition_error >= 0.1 * min_feat - 1e-15, "{rep:?}");
    }

    #[test]
    fn invalid_rows_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut lc = LinearComponents::random(&mut rng, 2, 2, 2, 2, 2, 2);
        lc.obs_weight[0][0] += 0.5;
        assert!(matches!(lc.validate(), Err(Error::RowNotStochastic { .. })));
        let mut lc = LinearComponents::random(&mut rng, 2, 2, 2, 2, 2, 2);
        lc.state_feat.pop();
        assert!(matches!(lc.validate(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let lc = LinearComponents::random(&mut rng, 2, 3, 2, 2, 3, 2);
        assert_eq!(LinearComponents::from_json(&lc.to_json()).unwrap(), lc);
    }

    #[test]
    fn mismatched_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let small = LinearComponents::random(&mut rng, 2, 2, 2, 2, 2, 2);
        let big = LinearComponents::random(&mut rng, 3, 2, 2, 2, 2, 2);
        let g = AttackerObjective::NegateReward;
        let m = big.induced_model(Some(0.9), None, vec![0.0, 0.0, 1.0]).unwrap();
        let pi = big.induced_policy().unwrap();
        let c = build_constraints(&all_rules(), &m).unwrap().constraints;
        let inter = Interaction::new(&m, &pi, &c, &g).unwrap();
        let meta = build_meta_mdp(&inter, MetaBuildOptions { prune: false }).unwrap();
        let mf = build_meta_features(&small, &g).unwrap();
        assert!(matches!(
            verify_linear_consistency(&mf, &meta),
            Err(Error::MismatchedInstances(_))
        ));
    }
}
