use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularPomdp;

/// One of the four channels the attacker can corrupt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    State,
    Observation,
    Action,
    Reward,
}

impl Surface {
    pub const ALL: [Surface; 4] = [
        Surface::State,
        Surface::Observation,
        Surface::Action,
        Surface::Reward,
    ];

    /// Length of the within-step tuple that keys this surface's feasibility sets.
    pub fn key_len(self) -> usize {
        match self {
            Surface::State => 1,
            Surface::Observation => 2,
            Surface::Action => 3,
            Surface::Reward => 4,
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Surface::State => "state",
            Surface::Observation => "observation",
            Surface::Action => "action",
            Surface::Reward => "reward",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceToggles {
    pub state: bool,
    pub observation: bool,
    pub action: bool,
    pub reward: bool,
}

impl SurfaceToggles {
    pub fn get(&self, surface: Surface) -> bool {
        match surface {
            Surface::State => self.state,
            Surface::Observation => self.observation,
            Surface::Action => self.action,
            Surface::Reward => self.reward,
        }
    }

    pub fn set(&mut self, surface: Surface, on: bool) {
        match surface {
            Surface::State => self.state = on,
            Surface::Observation => self.observation = on,
            Surface::Action => self.action = on,
            Surface::Reward => self.reward = on,
        }
    }

    pub fn enabled(&self) -> Vec<Surface> {
        Surface::ALL.into_iter().filter(|s| self.get(*s)).collect()
    }
}

/// Rule for one surface in the constraint file.
///
/// JSON: `"disabled"`, `"identity"`, `"all"` or `{"explicit": {"s,o": [..], ...}}`
/// where keys are comma-separated within-step tuples and unlisted keys keep
/// the identity singleton.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceRule {
    #[default]
    Disabled,
    Identity,
    All,
    Explicit(BTreeMap<String, Vec<usize>>),
}

/// Constraint file: one rule per surface.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRules {
    #[serde(default)]
    pub state: SurfaceRule,
    #[serde(default)]
    pub observation: SurfaceRule,
    #[serde(default)]
    pub action: SurfaceRule,
    #[serde(default)]
    pub reward: SurfaceRule,
}

impl ConstraintRules {
    pub fn rule(&self, surface: Surface) -> &SurfaceRule {
        match surface {
            Surface::State => &self.state,
            Surface::Observation => &self.observation,
            Surface::Action => &self.action,
            Surface::Reward => &self.reward,
        }
    }

    pub fn rule_mut(&mut self, surface: Surface) -> &mut SurfaceRule {
        match surface {
            Surface::State => &mut self.state,
            Surface::Observation => &mut self.observation,
            Surface::Action => &mut self.action,
            Surface::Reward => &mut self.reward,
        }
    }

    /// Every surface disabled except `surface`, which gets `rule`.
    pub fn only(surface: Surface, rule: SurfaceRule) -> Self {
        let mut rules = ConstraintRules::default();
        *rules.rule_mut(surface) = rule;
        rules
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Materialized feasibility sets `B(s)`, `B(s,o)`, `B(s,o,a)`, `B(s,o,a,r)`.
///
/// Keys carry the post-attack values of earlier subtimes. Every set is
/// sorted, deduplicated and contains its identity element; an empty slot in
/// storage stands for the identity singleton.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackConstraints {
    n_s: usize,
    n_o: usize,
    n_a: usize,
    n_r: usize,
    toggles: SurfaceToggles,
    state_sets: Vec<Vec<usize>>,
    obs_sets: Vec<Vec<usize>>,
    action_sets: Vec<Vec<usize>>,
    reward_sets: Vec<Vec<usize>>,
    identity: Vec<usize>,
}

/// Result of [`build_constraints`]: the constraints plus one
/// [`Error::EmptyFeasibleSet`] per set that had to be repaired.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBuild {
    pub constraints: AttackConstraints,
    pub repairs: Vec<Error>,
}

impl AttackConstraints {
    /// The no-attack constraints: every surface disabled.
    pub fn identity(model: &TabularPomdp) -> Self {
        Self::with_sizes(model.n_states(), model.n_obs(), model.n_actions(), model.n_rewards())
    }

    pub fn with_sizes(n_s: usize, n_o: usize, n_a: usize, n_r: usize) -> Self {
        let max = n_s.max(n_o).max(n_a).max(n_r);
        AttackConstraints {
            n_s,
            n_o,
            n_a,
            n_r,
            toggles: SurfaceToggles::default(),
            state_sets: vec![Vec::new(); n_s],
            obs_sets: vec![Vec::new(); n_s * n_o],
            action_sets: vec![Vec::new(); n_s * n_o * n_a],
            reward_sets: vec![Vec::new(); n_s * n_o * n_a * n_r],
            identity: (0..max).collect(),
        }
    }

    pub fn toggles(&self) -> SurfaceToggles {
        self.toggles
    }

    pub fn sizes(&self) -> (usize, usize, usize, usize) {
        (self.n_s, self.n_o, self.n_a, self.n_r)
    }

    /// Check the constraints were built for a model with these index sets.
    pub fn check_against(&self, model: &TabularPomdp) -> Result<()> {
        let want = (model.n_states(), model.n_obs(), model.n_actions(), model.n_rewards());
        if self.sizes() != want {
            return Err(Error::DimensionMismatch(format!(
                "constraints built for sizes {:?}, model has {:?}",
                self.sizes(),
                want
            )));
        }
        Ok(())
    }

    /// Turn a surface on. Its sets stay identity until assigned.
    pub fn enable(&mut self, surface: Surface) {
        self.toggles.set(surface, true);
    }

    fn domain(&self, surface: Surface) -> usize {
        match surface {
            Surface::State => self.n_s,
            Surface::Observation => self.n_o,
            Surface::Action => self.n_a,
            Surface::Reward => self.n_r,
        }
    }

    fn slot(&self, surface: Surface, key: &[usize]) -> Result<usize> {
        if key.len() != surface.key_len() {
            return Err(Error::InvalidArgument(format!(
                "{surface} sets are keyed by {} indices, got {}",
                surface.key_len(),
                key.len()
            )));
        }
        let dims = [self.n_s, self.n_o, self.n_a, self.n_r];
        let mut idx = 0;
        for (i, (&k, &d)) in key.iter().zip(dims.iter()).enumerate() {
            if k >= d {
                return Err(Error::IndexOutOfRange {
                    what: ["state", "observation", "action", "reward"][i].into(),
                    index: k,
                    size: d,
                });
            }
            idx = idx * d + k;
        }
        Ok(idx)
    }

    /// Assign `B(key)` for an enabled surface. The identity element is added if
    /// missing; an empty `set` is repaired and reported as `Ok(Some(..))`.
    pub fn set(&mut self, surface: Surface, key: &[usize], set: Vec<usize>) -> Result<Option<Error>> {
        if !self.toggles.get(surface) {
            return Err(Error::PreconditionViolated(format!(
                "{surface} surface is disabled"
            )));
        }
        let slot = self.slot(surface, key)?;
        let domain = self.domain(surface);
        if let Some(&bad) = set.iter().find(|&&x| x >= domain) {
            return Err(Error::IndexOutOfRange {
                what: format!("{surface} set element"),
                index: bad,
                size: domain,
            });
        }
        let repair = set.is_empty().then(|| Error::EmptyFeasibleSet {
            surface: surface.to_string(),
            key: key_string(key),
        });
        let own = *key.last().unwrap();
        let mut set = set;
        set.push(own);
        set.sort_unstable();
        set.dedup();
        let stored = if set.len() == 1 { Vec::new() } else { set };
        match surface {
            Surface::State => self.state_sets[slot] = stored,
            Surface::Observation => self.obs_sets[slot] = stored,
            Surface::Action => self.action_sets[slot] = stored,
            Surface::Reward => self.reward_sets[slot] = stored,
        }
        Ok(repair)
    }

    #[inline]
    fn view<'a>(&'a self, stored: &'a [usize], own: usize) -> &'a [usize] {
        if stored.is_empty() {
            &self.identity[own..own + 1]
        } else {
            stored
        }
    }

    #[inline]
    pub fn state_set(&self, s: usize) -> &[usize] {
        self.view(&self.state_sets[s], s)
    }

    #[inline]
    pub fn obs_set(&self, s: usize, o: usize) -> &[usize] {
        self.view(&self.obs_sets[s * self.n_o + o], o)
    }

    #[inline]
    pub fn action_set(&self, s: usize, o: usize, a: usize) -> &[usize] {
        self.view(&self.action_sets[(s * self.n_o + o) * self.n_a + a], a)
    }

    #[inline]
    pub fn reward_set(&self, s: usize, o: usize, a: usize, r: usize) -> &[usize] {
        self.view(
            &self.reward_sets[((s * self.n_o + o) * self.n_a + a) * self.n_r + r],
            r,
        )
    }

    /// Feasible set for a surface keyed by a within-step tuple.
    pub fn get(&self, surface: Surface, key: &[usize]) -> Result<&[usize]> {
        self.slot(surface, key)?;
        Ok(match surface {
            Surface::State => self.state_set(key[0]),
            Surface::Observation => self.obs_set(key[0], key[1]),
            Surface::Action => self.action_set(key[0], key[1], key[2]),
            Surface::Reward => self.reward_set(key[0], key[1], key[2], key[3]),
        })
    }

    /// Every key of a surface in lexicographic order.
    pub fn keys(&self, surface: Surface) -> Vec<Vec<usize>> {
        let dims = [self.n_s, self.n_o, self.n_a, self.n_r];
        let len = surface.key_len();
        let mut out = vec![Vec::new()];
        for &d in &dims[..len] {
            out = out
                .into_iter()
                .flat_map(|k| {
                    (0..d).map(move |x| {
                        let mut k = k.clone();
                        k.push(x);
                        k
                    })
                })
                .collect();
        }
        out
    }

    /// Whether `inner` allows no more than `self` everywhere.
    pub fn contains(&self, inner: &AttackConstraints) -> bool {
        self.sizes() == inner.sizes()
            && Surface::ALL.into_iter().all(|surface| {
                self.keys(surface).iter().all(|k| {
                    let big = self.get(surface, k).unwrap();
                    inner.get(surface, k).unwrap().iter().all(|x| big.contains(x))
                })
            })
    }

    /// Rules that rebuild these constraints exactly.
    pub fn to_rules(&self) -> ConstraintRules {
        let mut rules = ConstraintRules::default();
        for surface in Surface::ALL {
            if !self.toggles.get(surface) {
                continue;
            }
            let mut explicit = BTreeMap::new();
            for key in self.keys(surface) {
                let set = self.get(surface, &key).unwrap();
                if set.len() > 1 {
                    explicit.insert(key_string(&key), set.to_vec());
                }
            }
            *rules.rule_mut(surface) = if explicit.is_empty() {
                SurfaceRule::Identity
            } else {
                SurfaceRule::Explicit(explicit)
            };
        }
        rules
    }
}

pub(crate) fn key_string(key: &[usize]) -> String {
    key.iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_key(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad constraint key {text:?}")))
        })
        .collect()
}

/// Materialize per-surface rules against a model.
///
/// Disabled surfaces collapse to identity singletons. `"all"` means every
/// state, every observation, every action available at the key's state, or
/// the full reward support.
pub fn build_constraints(rules: &ConstraintRules, model: &TabularPomdp) -> Result<ConstraintBuild> {
    let mut c = AttackConstraints::identity(model);
    let mut repairs = Vec::new();
    for surface in Surface::ALL {
        match rules.rule(surface) {
            SurfaceRule::Disabled => {}
            SurfaceRule::Identity => c.enable(surface),
            SurfaceRule::All => {
                c.enable(surface);
                for key in c.keys(surface) {
                    let set: Vec<usize> = match surface {
                        Surface::State => (0..model.n_states()).collect(),
                        Surface::Observation => (0..model.n_obs()).collect(),
                        Surface::Action => model.available(key[0]).to_vec(),
                        Surface::Reward => (0..model.n_rewards()).collect(),
                    };
                    repairs.extend(c.set(surface, &key, set)?);
                }
            }
            SurfaceRule::Explicit(map) => {
                c.enable(surface);
                for (k, set) in map {
                    let key = parse_key(k)?;
                    repairs.extend(c.set(surface, &key, set.clone())?);
                }
            }
        }
    }
    Ok(ConstraintBuild {
        constraints: c,
        repairs,
    })
}
