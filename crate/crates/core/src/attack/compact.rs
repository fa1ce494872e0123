use super::constraints::Surface;
use super::meta::{collapse, Interaction, MetaAction, MetaKind, MetaMdp, MetaState};
use crate::error::{Error, Result};
use crate::mdp::{Choice, Criterion, FiniteMdp};

/// One meta-step per environment step, meta-states are environment states.
///
/// Needs a finite horizon, deterministic rewards, a deterministic victim and
/// full observability. At most one surface may be enabled; with none the
/// single choice is the victim's own action.
pub fn build_meta_mdp_compact(inter: &Interaction) -> Result<MetaMdp> {
    let m = inter.model;
    let horizon = m.horizon().ok_or(Error::NotFiniteHorizon)?;
    if !m.is_fully_observable() {
        return Err(Error::NotFullyObservable);
    }
    if !m.has_deterministic_rewards() {
        return Err(Error::PreconditionViolated(
            "compact construction needs deterministic rewards".into(),
        ));
    }
    if !inter.victim.is_deterministic() {
        return Err(Error::PreconditionViolated(
            "compact construction needs a deterministic victim".into(),
        ));
    }
    let enabled = inter.constraints.toggles().enabled();
    if enabled.len() > 1 {
        return Err(Error::PreconditionViolated(
            "compact construction supports one attack surface at a time".into(),
        ));
    }
    let surface = enabled.first().copied();
    let c = inter.constraints;
    let victim_action = |h: usize, o: usize| inter.victim.action(h, o).unwrap();
    let reward_of = |h: usize, s: usize, a: usize| m.deterministic_reward(h, s, a).unwrap();
    let successors = |h: usize, s: usize, a: usize| -> Vec<(usize, f64)> {
        m.transition(h, s, a)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(t, p)| (t, *p))
            .collect()
    };
    let choice = |label, h, s, a, r_seen: usize| Choice {
        label,
        reward: inter.objective.value(m, h, s, a, r_seen),
        side_reward: m.reward_value(r_seen),
        next: successors(h, s, a),
    };

    let layers = inter.n_layers();
    let choices = (0..m.n_states())
        .map(|s| {
            let per_layer = (0..layers)
                .map(|h| match surface {
                    None => {
                        let a = victim_action(h, s);
                        let r = reward_of(h, s, a);
                        vec![choice(MetaAction::Action(a), h, s, a, r)]
                    }
                    Some(Surface::Observation) => c
                        .obs_set(s, s)
                        .iter()
                        .map(|&seen| {
                            let a = victim_action(h, seen);
                            let r = reward_of(h, s, a);
                            choice(MetaAction::PerceivedState(seen), h, s, a, r)
                        })
                        .collect(),
                    Some(Surface::State) => c
                        .state_set(s)
                        .iter()
                        .map(|&moved| {
                            let a = victim_action(h, moved);
                            let r = reward_of(h, moved, a);
                            choice(MetaAction::State(moved), h, moved, a, r)
                        })
                        .collect(),
                    Some(Surface::Action) => {
                        let a0 = victim_action(h, s);
                        c.action_set(s, s, a0)
                            .iter()
                            .map(|&a| {
                                let r = reward_of(h, s, a);
                                choice(MetaAction::Action(a), h, s, a, r)
                            })
                            .collect()
                    }
                    Some(Surface::Reward) => {
                        let a = victim_action(h, s);
                        let r = reward_of(h, s, a);
                        c.reward_set(s, s, a, r)
                            .iter()
                            .map(|&seen| choice(MetaAction::Reward(seen), h, s, a, seen))
                            .collect()
                    }
                })
                .collect();
            collapse(per_layer)
        })
        .collect();

    let states = (0..m.n_states()).map(MetaState::AtState).collect();
    Ok(MetaMdp::from_parts(
        states,
        FiniteMdp {
            choices,
            stride: 1,
            criterion: Criterion::Finite(horizon),
            initial: m.initial().to_vec(),
        },
        MetaKind::Compact,
        m.mode(),
    ))
}
