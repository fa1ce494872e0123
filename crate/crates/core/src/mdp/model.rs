//! Tabular POMDP data model, its JSON file format, and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows may deviate from 1 by at most this much before renormalization.
pub const ROW_TOLERANCE: f64 = 1e-9;
/// Entries in `[-NEGATIVE_SLACK, 0)` are treated as rounding noise and clamped to zero.
pub const NEGATIVE_SLACK: f64 = 1e-12;

/// Planning criterion of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Discounted(f64),
    Finite(usize),
}

impl Mode {
    pub fn discount(&self) -> f64 {
        match self {
            Mode::Discounted(g) => *g,
            Mode::Finite(_) => 1.0,
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        match self {
            Mode::Finite(h) => Some(*h),
            Mode::Discounted(_) => None,
        }
    }
}

/// A row-stochastic kernel, optionally with one layer per time step.
///
/// Rows are addressed by a flat index chosen by the owner (for example
/// `s * |A| + a` for transitions).
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    layers: Vec<Vec<f64>>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, layers: Vec<Vec<f64>>) -> Self {
        debug_assert!(layers.iter().all(|l| l.len() == rows * cols));
        Kernel { rows, cols, layers }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn is_layered(&self) -> bool {
        self.layers.len() > 1
    }

    /// Row `row` at time step `step` (0-based). Stationary kernels ignore `step`.
    #[inline]
    pub fn row(&self, step: usize, row: usize) -> &[f64] {
        let layer = if self.layers.len() == 1 {
            &self.layers[0]
        } else {
            &self.layers[step]
        };
        &layer[row * self.cols..(row + 1) * self.cols]
    }

    fn nested(&self, group: usize) -> Vec<Vec<Vec<Vec<f64>>>> {
        self.layers
            .iter()
            .map(|layer| {
                layer
                    .chunks(self.cols * group)
                    .map(|block| block.chunks(self.cols).map(|r| r.to_vec()).collect())
                    .collect()
            })
            .collect()
    }
}

/// A finite indexed set given either by its size or by element names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndexSet {
    Count(usize),
    Names(Vec<String>),
}

impl IndexSet {
    pub fn len(&self) -> usize {
        match self {
            IndexSet::Count(n) => *n,
            IndexSet::Names(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `[s][a][x]` or `[h][s][a][x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionKernelData {
    Stationary(Vec<Vec<Vec<f64>>>),
    TimeIndexed(Vec<Vec<Vec<Vec<f64>>>>),
}

/// `[s][o]` or `[h][s][o]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateKernelData {
    Stationary(Vec<Vec<f64>>),
    TimeIndexed(Vec<Vec<Vec<f64>>>),
}

/// The environment file format, before validation. All indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPomdp {
    pub states: IndexSet,
    pub observations: IndexSet,
    pub actions: IndexSet,
    pub reward_support: Vec<f64>,
    pub transition: ActionKernelData,
    pub reward_dist: ActionKernelData,
    pub obs_dist: StateKernelData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub mu: Vec<f64>,
    /// Optional `[s][a]` availability mask; absent means every action is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<Vec<Vec<bool>>>,
}

/// A validated finite POMDP `(S, O, A, P, R, gamma or H, mu)` with finite reward support.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPomdp {
    state_names: Vec<String>,
    obs_names: Vec<String>,
    action_names: Vec<String>,
    reward_support: Vec<f64>,
    transition: Kernel,
    reward_dist: Kernel,
    obs_dist: Kernel,
    mode: Mode,
    initial: Vec<f64>,
    available: Vec<Vec<usize>>,
    fully_observable: bool,
}

fn names(set: &IndexSet, prefix: &str) -> Vec<String> {
    match set {
        IndexSet::Count(n) => (0..*n).map(|i| format!("{prefix}{i}")).collect(),
        IndexSet::Names(v) => v.clone(),
    }
}

/// Check one distribution, clamp rounding negatives and renormalize.
fn normalize_row(row: &mut [f64], location: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for p in row.iter_mut() {
        if !p.is_finite() {
            return Err(Error::NegativeProbability {
                location: location(),
            });
        }
        if *p < 0.0 {
            if *p < -NEGATIVE_SLACK {
                return Err(Error::NegativeProbability {
                    location: location(),
                });
            }
            *p = 0.0;
        }
        sum += *p;
    }
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::RowNotStochastic {
            location: location(),
            sum,
        });
    }
    for p in row.iter_mut() {
        *p /= sum;
    }
    Ok(())
}

fn flatten_action_kernel(
    data: &ActionKernelData,
    what: &str,
    n_s: usize,
    n_a: usize,
    cols: usize,
    col_perm: Option<&[usize]>,
) -> Result<Kernel> {
    let layers: Vec<&Vec<Vec<Vec<f64>>>> = match data {
        ActionKernelData::Stationary(k) => vec![k],
        ActionKernelData::TimeIndexed(ks) => ks.iter().collect(),
    };
    if layers.is_empty() {
        return Err(Error::DimensionMismatch(format!("{what} has no layers")));
    }
    let mut out = Vec::with_capacity(layers.len());
    for (h, layer) in layers.iter().enumerate() {
        if layer.len() != n_s {
            return Err(Error::DimensionMismatch(format!(
                "{what} layer {h}: expected {n_s} states, got {}",
                layer.len()
            )));
        }
        let mut flat = Vec::with_capacity(n_s * n_a * cols);
        for (s, per_s) in layer.iter().enumerate() {
            if per_s.len() != n_a {
                return Err(Error::DimensionMismatch(format!(
                    "{what}[{s}]: expected {n_a} actions, got {}",
                    per_s.len()
                )));
            }
            for (a, row) in per_s.iter().enumerate() {
                if row.len() != cols {
                    return Err(Error::DimensionMismatch(format!(
                        "{what}[{s}][{a}]: expected {cols} entries, got {}",
                        row.len()
                    )));
                }
                let mut row: Vec<f64> = match col_perm {
                    Some(perm) => perm.iter().map(|&j| row[j]).collect(),
                    None => row.clone(),
                };
                normalize_row(&mut row, || {
                    if layers.len() > 1 {
                        format!("{what}[{h}][{s}][{a}]")
                    } else {
                        format!("{what}[{s}][{a}]")
                    }
                })?;
                flat.extend(row);
            }
        }
        out.push(flat);
    }
    Ok(Kernel::new(n_s * n_a, cols, out))
}

fn flatten_state_kernel(
    data: &StateKernelData,
    what: &str,
    n_s: usize,
    cols: usize,
) -> Result<Kernel> {
    let layers: Vec<&Vec<Vec<f64>>> = match data {
        StateKernelData::Stationary(k) => vec![k],
        StateKernelData::TimeIndexed(ks) => ks.iter().collect(),
    };
    if layers.is_empty() {
        return Err(Error::DimensionMismatch(format!("{what} has no layers")));
    }
    let mut out = Vec::with_capacity(layers.len());
    for (h, layer) in layers.iter().enumerate() {
        if layer.len() != n_s {
            return Err(Error::DimensionMismatch(format!(
                "{what} layer {h}: expected {n_s} rows, got {}",
                layer.len()
            )));
        }
        let mut flat = Vec::with_capacity(n_s * cols);
        for (s, row) in layer.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "{what}[{s}]: expected {cols} entries, got {}",
                    row.len()
                )));
            }
            let mut row = row.clone();
            normalize_row(&mut row, || format!("{what}[{s}]"))?;
            flat.extend(row);
        }
        out.push(flat);
    }
    Ok(Kernel::new(n_s, cols, out))
}

/// Validate a raw description, returning the canonical model.
///
/// Reward support is sorted ascending (reward distributions are permuted to
/// match), rows are checked to within [`ROW_TOLERANCE`] and renormalized.
pub fn validate_pomdp(raw: &RawPomdp) -> Result<TabularPomdp> {
    let n_s = raw.states.len();
    let n_o = raw.observations.len();
    let n_a = raw.actions.len();
    if n_s == 0 || n_o == 0 || n_a == 0 {
        return Err(Error::DimensionMismatch(
            "states, observations and actions must be nonempty".into(),
        ));
    }

    let mode = match (raw.gamma, raw.horizon) {
        (Some(g), Some(h)) => {
            if g < 1.0 {
                return Err(Error::ModeAmbiguous);
            }
            if g != 1.0 {
                return Err(Error::InvalidDiscount(g));
            }
            Mode::Finite(h)
        }
        (None, Some(h)) => Mode::Finite(h),
        (Some(g), None) => {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidDiscount(g));
            }
            Mode::Discounted(g)
        }
        (None, None) => return Err(Error::ModeAmbiguous),
    };
    if mode == Mode::Finite(0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }

    if raw.reward_support.is_empty() {
        return Err(Error::InvalidRewardSupport("empty".into()));
    }
    if raw.reward_support.iter().any(|r| !r.is_finite()) {
        return Err(Error::InfiniteRewardSupport);
    }
    let mut perm: Vec<usize> = (0..raw.reward_support.len()).collect();
    perm.sort_by(|&i, &j| raw.reward_support[i].total_cmp(&raw.reward_support[j]));
    let reward_support: Vec<f64> = perm.iter().map(|&i| raw.reward_support[i]).collect();
    if reward_support.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidRewardSupport("duplicate values".into()));
    }
    let n_r = reward_support.len();

    let transition = flatten_action_kernel(&raw.transition, "transition", n_s, n_a, n_s, None)?;
    let reward_dist =
        flatten_action_kernel(&raw.reward_dist, "reward_dist", n_s, n_a, n_r, Some(&perm))?;
    let obs_dist = flatten_state_kernel(&raw.obs_dist, "obs_dist", n_s, n_o)?;

    for (what, k) in [
        ("transition", &transition),
        ("reward_dist", &reward_dist),
        ("obs_dist", &obs_dist),
    ] {
        let layers = k.n_layers();
        let ok = match mode {
            Mode::Discounted(_) => layers == 1,
            Mode::Finite(h) => layers == 1 || layers == h,
        };
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "{what} has {layers} time layers; expected 1{}",
                mode.horizon().map(|h| format!(" or {h}")).unwrap_or_default()
            )));
        }
    }

    if raw.mu.len() != n_s {
        return Err(Error::DimensionMismatch(format!(
            "mu: expected {n_s} entries, got {}",
            raw.mu.len()
        )));
    }
    let mut initial = raw.mu.clone();
    normalize_row(&mut initial, || "mu".to_string())?;

    let available = match &raw.available {
        None => vec![(0..n_a).collect(); n_s],
        Some(mask) => {
            if mask.len() != n_s || mask.iter().any(|m| m.len() != n_a) {
                return Err(Error::DimensionMismatch(
                    "available must be an [s][a] boolean mask".into(),
                ));
            }
            let avail: Vec<Vec<usize>> = mask
                .iter()
                .map(|m| (0..n_a).filter(|&a| m[a]).collect())
                .collect();
            if let Some(s) = avail.iter().position(|v| v.is_empty()) {
                return Err(Error::PreconditionViolated(format!(
                    "state {s} has no available action"
                )));
            }
            avail
        }
    };

    let fully_observable = n_o == n_s
        && (0..obs_dist.n_layers()).all(|h| {
            (0..n_s).all(|s| {
                obs_dist
                    .row(h, s)
                    .iter()
                    .enumerate()
                    .all(|(o, &p)| if o == s { p == 1.0 } else { p == 0.0 })
            })
        });

    Ok(TabularPomdp {
        state_names: names(&raw.states, "s"),
        obs_names: names(&raw.observations, "o"),
        action_names: names(&raw.actions, "a"),
        reward_support,
        transition,
        reward_dist,
        obs_dist,
        mode,
        initial,
        available,
        fully_observable,
    })
}

impl TabularPomdp {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_obs(&self) -> usize {
        self.obs_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn n_rewards(&self) -> usize {
        self.reward_support.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn reward_support(&self) -> &[f64] {
        &self.reward_support
    }

    pub fn reward_value(&self, r: usize) -> f64 {
        self.reward_support[r]
    }

    /// Largest absolute supported reward.
    pub fn r_max(&self) -> f64 {
        self.reward_support.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn discount(&self) -> f64 {
        self.mode.discount()
    }

    pub fn horizon(&self) -> Option<usize> {
        self.mode.horizon()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_fully_observable(&self) -> bool {
        self.fully_observable
    }

    /// Actions the victim (and action-attack generators) may choose at `s`.
    pub fn available(&self, s: usize) -> &[usize] {
        &self.available[s]
    }

    /// Whether any kernel carries a time index.
    pub fn is_time_indexed(&self) -> bool {
        self.transition.is_layered() || self.reward_dist.is_layered() || self.obs_dist.is_layered()
    }

    #[inline]
    pub fn transition(&self, step: usize, s: usize, a: usize) -> &[f64] {
        self.transition.row(step, s * self.n_actions() + a)
    }

    #[inline]
    pub fn reward_dist(&self, step: usize, s: usize, a: usize) -> &[f64] {
        self.reward_dist.row(step, s * self.n_actions() + a)
    }

    #[inline]
    pub fn obs_dist(&self, step: usize, s: usize) -> &[f64] {
        self.obs_dist.row(step, s)
    }

    pub fn expected_reward(&self, step: usize, s: usize, a: usize) -> f64 {
        self.reward_dist(step, s, a)
            .iter()
            .zip(&self.reward_support)
            .map(|(p, r)| p * r)
            .sum()
    }

    /// Index of the reward when `R(s,a)` is a point mass.
    pub fn deterministic_reward(&self, step: usize, s: usize, a: usize) -> Option<usize> {
        let row = self.reward_dist(step, s, a);
        let idx = row.iter().position(|&p| p == 1.0)?;
        row.iter()
            .enumerate()
            .all(|(j, &p)| j == idx || p == 0.0)
            .then_some(idx)
    }

    pub fn has_deterministic_rewards(&self) -> bool {
        let layers = self.reward_dist.n_layers();
        (0..layers).all(|h| {
            (0..self.n_states())
                .all(|s| (0..self.n_actions()).all(|a| self.deterministic_reward(h, s, a).is_some()))
        })
    }

    /// Number of distinct kernel time layers (1 when stationary).
    pub fn n_layers(&self) -> usize {
        self.transition
            .n_layers()
            .max(self.reward_dist.n_layers())
            .max(self.obs_dist.n_layers())
    }

    /// Export in the environment file format; validating the result gives back `self`.
    pub fn to_raw(&self) -> RawPomdp {
        let n_a = self.n_actions();
        let action_kernel = |k: &Kernel| {
            let mut nested = k.nested(n_a);
            if nested.len() == 1 {
                ActionKernelData::Stationary(nested.pop().unwrap())
            } else {
                ActionKernelData::TimeIndexed(nested)
            }
        };
        let obs = {
            let mut nested: Vec<Vec<Vec<f64>>> = self
                .obs_dist
                .layers
                .iter()
                .map(|l| l.chunks(self.n_obs()).map(|r| r.to_vec()).collect())
                .collect();
            if nested.len() == 1 {
                StateKernelData::Stationary(nested.pop().unwrap())
            } else {
                StateKernelData::TimeIndexed(nested)
            }
        };
        let all_available = self.available.iter().all(|v| v.len() == n_a);
        RawPomdp {
            states: IndexSet::Names(self.state_names.clone()),
            observations: IndexSet::Names(self.obs_names.clone()),
            actions: IndexSet::Names(self.action_names.clone()),
            reward_support: self.reward_support.clone(),
            transition: action_kernel(&self.transition),
            reward_dist: action_kernel(&self.reward_dist),
            obs_dist: obs,
            gamma: match self.mode {
                Mode::Discounted(g) => Some(g),
                Mode::Finite(_) => None,
            },
            horizon: self.mode.horizon(),
            mu: self.initial.clone(),
            available: (!all_available).then(|| {
                self.available
                    .iter()
                    .map(|v| (0..n_a).map(|a| v.contains(&a)).collect())
                    .collect()
            }),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawPomdp = serde_json::from_str(text)?;
        validate_pomdp(&raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("model serializes")
    }
}

/// Whether a victim policy is the same at every step or indexed by time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Stationary,
    TimeIndexed,
}

/// A policy row: either a distribution over actions or a bare action index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyRow {
    Action(usize),
    Dist(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyTable {
    TimeIndexed(Vec<Vec<PolicyRow>>),
    Stationary(Vec<PolicyRow>),
}

/// Policy file format: `{"kind": "stationary"|"time_indexed", "table": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPolicy {
    pub kind: PolicyKind,
    pub table: PolicyTable,
}

/// Victim policy `O -> Delta(A)`, optionally time-indexed.
#[derive(Clone, Debug, PartialEq)]
pub struct VictimPolicy {
    kind: PolicyKind,
    n_obs: usize,
    n_actions: usize,
    /// `[h][o * n_actions + a]`
    layers: Vec<Vec<f64>>,
}

impl VictimPolicy {
    pub fn new(kind: PolicyKind, n_actions: usize, rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if rows.is_empty() || (kind == PolicyKind::Stationary && rows.len() != 1) {
            return Err(Error::DimensionMismatch(
                "stationary policies have exactly one layer".into(),
            ));
        }
        let n_obs = rows[0].len();
        let mut layers = Vec::with_capacity(rows.len());
        for (h, layer) in rows.into_iter().enumerate() {
            if layer.len() != n_obs {
                return Err(Error::DimensionMismatch(format!(
                    "policy layer {h} has {} rows, expected {n_obs}",
                    layer.len()
                )));
            }
            let mut flat = Vec::with_capacity(n_obs * n_actions);
            for (o, mut row) in layer.into_iter().enumerate() {
                if row.len() != n_actions {
                    return Err(Error::DimensionMismatch(format!(
                        "policy row {o} has {} entries, expected {n_actions}",
                        row.len()
                    )));
                }
                normalize_row(&mut row, || format!("policy[{h}][{o}]"))?;
                flat.extend(row);
            }
            layers.push(flat);
        }
        Ok(VictimPolicy {
            kind,
            n_obs,
            n_actions,
            layers,
        })
    }

    fn one_hot(n: usize, a: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[a] = 1.0;
        v
    }

    /// Stationary deterministic policy from one action per observation.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::IndexOutOfRange {
                what: "action".into(),
                index: a,
                size: n_actions,
            });
        }
        let rows = actions.iter().map(|&a| Self::one_hot(n_actions, a)).collect();
        Self::new(PolicyKind::Stationary, n_actions, vec![rows])
    }

    /// Time-indexed deterministic policy, `actions[h][o]`.
    pub fn time_indexed_deterministic(n_actions: usize, actions: &[Vec<usize>]) -> Result<Self> {
        let mut layers = Vec::with_capacity(actions.len());
        for layer in actions {
            if let Some(&a) = layer.iter().find(|&&a| a >= n_actions) {
                return Err(Error::IndexOutOfRange {
                    what: "action".into(),
                    index: a,
                    size: n_actions,
                });
            }
            layers.push(layer.iter().map(|&a| Self::one_hot(n_actions, a)).collect());
        }
        Self::new(PolicyKind::TimeIndexed, n_actions, layers)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn dist(&self, step: usize, o: usize) -> &[f64] {
        let layer = match self.kind {
            PolicyKind::Stationary => &self.layers[0],
            PolicyKind::TimeIndexed => &self.layers[step],
        };
        &layer[o * self.n_actions..(o + 1) * self.n_actions]
    }

    /// The action chosen with probability one, if the row is one-hot.
    pub fn action(&self, step: usize, o: usize) -> Option<usize> {
        let row = self.dist(step, o);
        let a = row.iter().position(|&p| p == 1.0)?;
        row.iter()
            .enumerate()
            .all(|(j, &p)| j == a || p == 0.0)
            .then_some(a)
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.layers.len()).all(|h| (0..self.n_obs).all(|o| self.action(h, o).is_some()))
    }

    /// Check the policy fits `model`: matching observation/action sets and time layers.
    pub fn check_against(&self, model: &TabularPomdp) -> Result<()> {
        if self.n_obs != model.n_obs() {
            return Err(Error::DimensionMismatch(format!(
                "policy covers {} observations, model has {}",
                self.n_obs,
                model.n_obs()
            )));
        }
        if self.n_actions != model.n_actions() {
            return Err(Error::DimensionMismatch(format!(
                "policy covers {} actions, model has {}",
                self.n_actions,
                model.n_actions()
            )));
        }
        if self.kind == PolicyKind::TimeIndexed && Some(self.layers.len()) != model.horizon() {
            return Err(Error::DimensionMismatch(format!(
                "time-indexed policy has {} layers but model horizon is {:?}",
                self.layers.len(),
                model.horizon()
            )));
        }
        Ok(())
    }

    pub fn from_raw(raw: &RawPolicy, n_actions: usize) -> Result<Self> {
        let row = |r: &PolicyRow| -> Result<Vec<f64>> {
            match r {
                PolicyRow::Action(a) => {
                    if *a >= n_actions {
                        return Err(Error::IndexOutOfRange {
                            what: "action".into(),
                            index: *a,
                            size: n_actions,
                        });
                    }
                    Ok(Self::one_hot(n_actions, *a))
                }
                PolicyRow::Dist(d) => Ok(d.clone()),
            }
        };
        let layers = match (&raw.kind, &raw.table) {
            (PolicyKind::Stationary, PolicyTable::Stationary(rows)) => {
                vec![rows.iter().map(row).collect::<Result<Vec<_>>>()?]
            }
            // an all-integer stationary distribution table parses as layers of actions
            (PolicyKind::Stationary, PolicyTable::TimeIndexed(rows)) => {
                let dist = |l: &Vec<PolicyRow>| -> Option<Vec<f64>> {
                    l.iter()
                        .map(|x| match x {
                            PolicyRow::Action(a) => Some(*a as f64),
                            PolicyRow::Dist(_) => None,
                        })
                        .collect()
                };
                let rows = rows.iter().map(dist).collect::<Option<Vec<_>>>().ok_or_else(|| {
                    Error::DimensionMismatch("policy table shape does not match its kind".into())
                })?;
                vec![rows]
            }
            (PolicyKind::TimeIndexed, PolicyTable::TimeIndexed(layers)) => layers
                .iter()
                .map(|l| l.iter().map(row).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
            _ => {
                return Err(Error::DimensionMismatch(
                    "policy table shape does not match its kind".into(),
                ))
            }
        };
        Self::new(raw.kind, n_actions, layers)
    }

    pub fn to_raw(&self) -> RawPolicy {
        let layer_rows = |h: usize| -> Vec<PolicyRow> {
            (0..self.n_obs)
                .map(|o| match self.action(h, o) {
                    Some(a) => PolicyRow::Action(a),
                    None => PolicyRow::Dist(self.dist(h, o).to_vec()),
                })
                .collect()
        };
        let table = match self.kind {
            PolicyKind::Stationary => PolicyTable::Stationary(layer_rows(0)),
            PolicyKind::TimeIndexed => {
                PolicyTable::TimeIndexed((0..self.layers.len()).map(layer_rows).collect())
            }
        };
        RawPolicy {
            kind: self.kind,
            table,
        }
    }

    pub fn from_json(text: &str, n_actions: usize) -> Result<Self> {
        let raw: RawPolicy = serde_json::from_str(text)?;
        Self::from_raw(&raw, n_actions)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("policy serializes")
    }
}

/// State values; one layer in discounted mode, `H + 1` layers (last all zero) in finite mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub layers: Vec<Vec<f64>>,
}

impl ValueTable {
    /// Values at the first decision step.
    pub fn initial_layer(&self) -> &[f64] {
        &self.layers[0]
    }

    pub fn at(&self, step: usize, s: usize) -> f64 {
        self.layers[step][s]
    }

    /// Expected value under a start distribution.
    pub fn expected(&self, mu: &[f64]) -> f64 {
        mu.iter().zip(&self.layers[0]).map(|(p, v)| p * v).sum()
    }
}
