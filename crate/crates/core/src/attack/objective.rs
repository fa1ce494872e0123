use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RawPolicy, TabularPomdp, VictimPolicy};

/// The attacker's per-step reward `g(s, a, r)`.
#[derive(Clone, Debug, PartialEq)]
pub enum AttackerObjective {
    /// `g = -r`: purely adversarial, the interaction is zero-sum.
    NegateReward,
    /// `g = 1{a = target(s)}` for a deterministic target policy over states.
    PolicyTeaching { target: VictimPolicy },
    /// Arbitrary table indexed `[s][a][reward index]`.
    CustomTable { table: Vec<Vec<Vec<f64>>> },
}

/// Objective file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawObjective {
    NegateReward,
    PolicyTeaching { target: RawPolicy },
    CustomTable { table: Vec<Vec<Vec<f64>>> },
}

impl AttackerObjective {
    /// `g` at step `step` for state `s`, executed action `a` and reported reward index `r`.
    #[inline]
    pub fn value(&self, model: &TabularPomdp, step: usize, s: usize, a: usize, r: usize) -> f64 {
        self.value_on(model.reward_support(), step, s, a, r)
    }

    /// `g` given only the reward support.
    #[inline]
    pub fn value_on(&self, support: &[f64], step: usize, s: usize, a: usize, r: usize) -> f64 {
        match self {
            AttackerObjective::NegateReward => -support[r],
            AttackerObjective::PolicyTeaching { target } => {
                if target.action(step, s) == Some(a) {
                    1.0
                } else {
                    0.0
                }
            }
            AttackerObjective::CustomTable { table } => table[s][a][r],
        }
    }

    pub fn check_against(&self, model: &TabularPomdp) -> Result<()> {
        match self {
            AttackerObjective::NegateReward => Ok(()),
            AttackerObjective::PolicyTeaching { target } => {
                if target.n_obs() != model.n_states() || target.n_actions() != model.n_actions() {
                    return Err(Error::DimensionMismatch(
                        "teaching target must map states to the model's actions".into(),
                    ));
                }
                if !target.is_deterministic() {
                    return Err(Error::PreconditionViolated(
                        "teaching target must be deterministic".into(),
                    ));
                }
                if target.n_layers() > 1 && Some(target.n_layers()) != model.horizon() {
                    return Err(Error::DimensionMismatch(
                        "time-indexed teaching target must match the horizon".into(),
                    ));
                }
                Ok(())
            }
            AttackerObjective::CustomTable { table } => {
                let ok = table.len() == model.n_states()
                    && table.iter().all(|per_s| {
                        per_s.len() == model.n_actions()
                            && per_s
                                .iter()
                                .all(|row| row.len() == model.n_rewards() && row.iter().all(|x| x.is_finite()))
                    });
                if ok {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch(
                        "custom objective must be a finite [s][a][r] table".into(),
                    ))
                }
            }
        }
    }

    /// Whether `g(s, a, r) = -r` for every triple.
    pub fn is_zero_sum(&self, model: &TabularPomdp) -> bool {
        match self {
            AttackerObjective::NegateReward => true,
            AttackerObjective::PolicyTeaching { .. } => false,
            AttackerObjective::CustomTable { table } => table.iter().all(|per_s| {
                per_s.iter().all(|row| {
                    row.iter()
                        .enumerate()
                        .all(|(r, &g)| g == -model.reward_value(r))
                })
            }),
        }
    }

    /// Number of time layers (1 unless the teaching target is time-indexed).
    pub fn n_layers(&self) -> usize {
        match self {
            AttackerObjective::PolicyTeaching { target } => target.n_layers(),
            _ => 1,
        }
    }

    pub fn from_raw(raw: &RawObjective, model: &TabularPomdp) -> Result<Self> {
        let obj = match raw {
            RawObjective::NegateReward => AttackerObjective::NegateReward,
            RawObjective::PolicyTeaching { target } => AttackerObjective::PolicyTeaching {
                target: VictimPolicy::from_raw(target, model.n_actions())?,
            },
            RawObjective::CustomTable { table } => AttackerObjective::CustomTable {
                table: table.clone(),
            },
        };
        obj.check_against(model)?;
        Ok(obj)
    }

    pub fn from_json(text: &str, model: &TabularPomdp) -> Result<Self> {
        let raw: RawObjective = serde_json::from_str(text)?;
        Self::from_raw(&raw, model)
    }

    pub fn to_raw(&self) -> RawObjective {
        match self {
            AttackerObjective::NegateReward => RawObjective::NegateReward,
            AttackerObjective::PolicyTeaching { target } => RawObjective::PolicyTeaching {
                target: target.to_raw(),
            },
            AttackerObjective::CustomTable { table } => RawObjective::CustomTable {
                table: table.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::m2;

    #[test]
    fn teaching_indicator() {
        let target = VictimPolicy::deterministic(2, &[1, 0]).unwrap();
        let g = AttackerObjective::PolicyTeaching { target };
        let m = m2();
        g.check_against(&m).unwrap();
        assert_eq!(g.value(&m, 0, 0, 1, 0), 1.0);
        assert_eq!(g.value(&m, 0, 0, 0, 1), 0.0);
        assert_eq!(g.value(&m, 0, 1, 0, 1), 1.0);
        assert!(!g.is_zero_sum(&m));
    }

    #[test]
    fn custom_table_must_cover_every_triple() {
        let m = m2();
        let g = AttackerObjective::CustomTable {
            table: vec![vec![vec![0.0, -1.0]; 2]; 1],
        };
        assert!(g.check_against(&m).is_err());
        let g = AttackerObjective::CustomTable {
            table: vec![vec![vec![0.0, -1.0]; 2]; 2],
        };
        g.check_against(&m).unwrap();
        assert!(g.is_zero_sum(&m));
    }

    #[test]
    fn objective_json() {
        let raw: RawObjective =
            serde_json::from_str(r#"{"kind":"policy_teaching","target":{"kind":"stationary","table":[0,1]}}"#)
                .unwrap();
        let g = AttackerObjective::from_raw(&raw, &m2()).unwrap();
        assert_eq!(g.value(&m2(), 0, 1, 1, 0), 1.0);
        let raw: RawObjective = serde_json::from_str(r#"{"kind":"negate_reward"}"#).unwrap();
        assert_eq!(
            AttackerObjective::from_raw(&raw, &m2()).unwrap(),
            AttackerObjective::NegateReward
        );
    }
}
