//! Goal-seeking grid worlds with lava and unmonitored regions where attacks
//! are possible.

use serde::{Deserialize, Serialize};

use crate::attack::{
    build_meta_mdp, AttackConstraints, AttackerObjective, Interaction, MetaBuildOptions, RawObjective, Surface,
};
use crate::defense::{defense_backward_induction, BR_TOLERANCE};
use crate::error::{Error, Result};
use crate::mdp::{backward_induction, validate_pomdp, ActionKernelData, IndexSet, RawPomdp, StateKernelData, TabularPomdp};
use crate::planner::plan_attack;
use crate::sim::{run_episode, IdentityAgent, Trajectory};

pub const ACTION_NAMES: [&str; 5] = ["L", "R", "U", "D", "S"];
const MOVES: [(isize, isize); 5] = [(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)];

/// Reward-support indices.
const LAVA: usize = 0;
const NEUTRAL: usize = 1;
const GOAL: usize = 2;

/// Inclusive rectangle of cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl Region {
    pub fn contains(&self, (r, c): (usize, usize)) -> bool {
        (self.r0..=self.r1).contains(&r) && (self.c0..=self.c1).contains(&c)
    }
}

fn default_start() -> Option<(usize, usize)> {
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub n: usize,
    #[serde(default)]
    pub lava: Vec<(usize, usize)>,
    /// Defaults to the top-left cell.
    #[serde(default = "default_start", skip_serializing_if = "Option::is_none")]
    pub start: Option<(usize, usize)>,
    /// Defaults to the bottom-right cell.
    #[serde(default = "default_start", skip_serializing_if = "Option::is_none")]
    pub goal: Option<(usize, usize)>,
    #[serde(default)]
    pub unsafe_regions: Vec<Region>,
    pub horizon: usize,
}

impl GridLayout {
    /// Empty `n x n` grid.
    pub fn empty(n: usize, horizon: usize) -> Self {
        GridLayout {
            n,
            lava: Vec::new(),
            start: None,
            goal: None,
            unsafe_regions: Vec::new(),
            horizon,
        }
    }

    /// 10x10, horizon 20: two lava diagonals flank a corridor along the main
    /// diagonal; the top-right and bottom-left 4x4 corners are unmonitored.
    pub fn reference() -> Self {
        GridLayout {
            n: 10,
            lava: vec![(1, 4), (2, 5), (3, 6), (4, 7), (4, 1), (5, 2), (6, 3), (7, 4)],
            start: None,
            goal: None,
            unsafe_regions: vec![
                Region { r0: 0, c0: 6, r1: 3, c1: 9 },
                Region { r0: 6, c0: 0, r1: 9, c1: 3 },
            ],
            horizon: 20,
        }
    }

    pub fn start(&self) -> (usize, usize) {
        self.start.unwrap_or((0, 0))
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal.unwrap_or((self.n.saturating_sub(1), self.n.saturating_sub(1)))
    }

    pub fn n_cells(&self) -> usize {
        self.n * self.n
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.n, index % self.n)
    }

    pub fn index(&self, (r, c): (usize, usize)) -> usize {
        r * self.n + c
    }

    pub fn is_lava(&self, cell: (usize, usize)) -> bool {
        self.lava.contains(&cell)
    }

    pub fn is_unsafe(&self, cell: (usize, usize)) -> bool {
        self.unsafe_regions.iter().any(|r| r.contains(cell))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidLayout(msg));
        if self.n == 0 {
            return bad("grid side must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        let inside = |(r, c): (usize, usize)| r < self.n && c < self.n;
        let (start, goal) = (self.start(), self.goal());
        for (what, cell) in [("start", start), ("goal", goal)] {
            if !inside(cell) {
                return bad(format!("{what} {cell:?} is outside the {0}x{0} grid", self.n));
            }
            if self.is_lava(cell) {
                return bad(format!("{what} {cell:?} is a lava cell"));
            }
        }
        if start == goal {
            return bad("start and goal coincide".into());
        }
        if let Some(cell) = self.lava.iter().find(|c| !inside(**c)) {
            return bad(format!("lava cell {cell:?} is outside the grid"));
        }
        for reg in &self.unsafe_regions {
            if reg.r0 > reg.r1 || reg.c0 > reg.c1 || !inside((reg.r1, reg.c1)) {
                return bad(format!("unsafe region {reg:?} is not a rectangle inside the grid"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let layout: GridLayout = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    fn step(&self, (r, c): (usize, usize), a: usize) -> Option<(usize, usize)> {
        let (dr, dc) = MOVES[a];
        let r2 = r.checked_add_signed(dr)?;
        let c2 = c.checked_add_signed(dc)?;
        (r2 < self.n && c2 < self.n).then_some((r2, c2))
    }
}

/// Finite-horizon, fully observable grid MDP.
///
/// Actions are `L, R, U, D, S`; moves off the grid are unavailable. Rewards
/// are paid on arrival: `1` for the goal, `-H` for lava, `0` otherwise.
pub fn build_gridworld(layout: &GridLayout) -> Result<TabularPomdp> {
    layout.validate()?;
    let n_cells = layout.n_cells();
    let h = layout.horizon;
    let goal = layout.goal();
    let mut trans = vec![vec![vec![0.0; n_cells]; 5]; n_cells];
    let mut rew = vec![vec![vec![0.0; 3]; 5]; n_cells];
    let mut available = vec![vec![false; 5]; n_cells];
    for s in 0..n_cells {
        let here = layout.cell(s);
        for a in 0..5 {
            // Unavailable moves keep a well-formed row (stay put); no policy can pick them.
            let to = layout.step(here, a);
            available[s][a] = to.is_some();
            let to = to.unwrap_or(here);
            trans[s][a][layout.index(to)] = 1.0;
            let r = if to == goal {
                GOAL
            } else if layout.is_lava(to) {
                LAVA
            } else {
                NEUTRAL
            };
            rew[s][a][r] = 1.0;
        }
    }
    let identity = (0..n_cells)
        .map(|s| {
            let mut row = vec![0.0; n_cells];
            row[s] = 1.0;
            row
        })
        .collect();
    let mut mu = vec![0.0; n_cells];
    mu[layout.index(layout.start())] = 1.0;
    let names: Vec<String> = (0..n_cells)
        .map(|s| {
            let (r, c) = layout.cell(s);
            format!("({r},{c})")
        })
        .collect();
    validate_pomdp(&RawPomdp {
        states: IndexSet::Names(names.clone()),
        observations: IndexSet::Names(names),
        actions: IndexSet::Names(ACTION_NAMES.iter().map(|a| a.to_string()).collect()),
        reward_support: vec![-(h as f64), 0.0, 1.0],
        transition: ActionKernelData::Stationary(trans),
        reward_dist: ActionKernelData::Stationary(rew),
        obs_dist: StateKernelData::Stationary(identity),
        gamma: None,
        horizon: Some(h),
        mu,
        available: Some(available),
    })
}

/// Which element the attacker may corrupt inside the unsafe regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSurface {
    PerceivedState,
    TrueState,
    Action,
    Reward,
}

impl GridSurface {
    pub const ALL: [GridSurface; 4] = [
        GridSurface::PerceivedState,
        GridSurface::TrueState,
        GridSurface::Action,
        GridSurface::Reward,
    ];

    pub fn surface(self) -> Surface {
        match self {
            GridSurface::PerceivedState => Surface::Observation,
            GridSurface::TrueState => Surface::State,
            GridSurface::Action => Surface::Action,
            GridSurface::Reward => Surface::Reward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridSurface::PerceivedState => "perceived_state",
            GridSurface::TrueState => "true_state",
            GridSurface::Action => "action",
            GridSurface::Reward => "reward",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        GridSurface::ALL
            .into_iter()
            .find(|s| s.name() == text)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown surface {text:?}")))
    }
}

/// Unrestricted attacks on `surface` wherever the true cell is unsafe,
/// identity everywhere else.
pub fn build_region_constraints(layout: &GridLayout, surface: GridSurface) -> Result<AttackConstraints> {
    let model = build_gridworld(layout)?;
    let (n_s, n_a, n_r) = (model.n_states(), model.n_actions(), model.n_rewards());
    let mut c = AttackConstraints::identity(&model);
    let target = surface.surface();
    c.enable(target);
    let all = |n: usize| (0..n).collect::<Vec<_>>();
    for s in (0..n_s).filter(|&s| layout.is_unsafe(layout.cell(s))) {
        match target {
            Surface::State => {
                c.set(target, &[s], all(n_s))?;
            }
            Surface::Observation => {
                for o in 0..n_s {
                    c.set(target, &[s, o], all(n_s))?;
                }
            }
            Surface::Action => {
                for o in 0..n_s {
                    for a in 0..n_a {
                        c.set(target, &[s, o, a], model.available(s).to_vec())?;
                    }
                }
            }
            Surface::Reward => {
                for o in 0..n_s {
                    for a in 0..n_a {
                        for r in 0..n_r {
                            c.set(target, &[s, o, a, r], all(n_r))?;
                        }
                    }
                }
            }
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScenario {
    pub layout: GridLayout,
    pub surface: GridSurface,
    /// Defaults to `negate_reward`.
    #[serde(default)]
    pub objective: Option<RawObjective>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrajectories {
    pub clean: Trajectory,
    pub attacked: Trajectory,
    pub defense: Option<Trajectory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub surface: GridSurface,
    pub clean_value: f64,
    pub attacked_value: f64,
    pub defense_value: Option<f64>,
    /// Why the defense step was skipped, if it was.
    pub notice: Option<String>,
    pub trajectories: ScenarioTrajectories,
}

/// Clean optimum, its optimal attack, and the robust defense.
pub fn run_scenario(scenario: &GridScenario) -> Result<ScenarioReport> {
    let layout = &scenario.layout;
    let model = build_gridworld(layout)?;
    let constraints = build_region_constraints(layout, scenario.surface)?;
    let objective = match &scenario.objective {
        Some(raw) => AttackerObjective::from_raw(raw, &model)?,
        None => AttackerObjective::NegateReward,
    };
    let (values, clean_policy) = backward_induction(&model)?;
    let clean_value = values.expected(model.initial());

    let no_attack = AttackConstraints::identity(&model);
    let clean_inter = Interaction::new(&model, &clean_policy, &no_attack, &objective)?;
    let clean = run_episode(&clean_inter, &mut IdentityAgent, 0, 0, layout.horizon)?;

    let inter = Interaction::new(&model, &clean_policy, &constraints, &objective)?;
    let meta = build_meta_mdp(&inter, MetaBuildOptions::default())?;
    let attack = plan_attack(&meta, 1e-10)?;
    let attacked = run_episode(&inter, &mut &attack.policy, 0, 0, layout.horizon)?;

    let (defense_value, defense, notice) = if scenario.surface == GridSurface::PerceivedState {
        (
            None,
            None,
            Some("defense skipped: optimal defense against perceived-state attacks is NP-hard".to_string()),
        )
    } else {
        let zero_sum = objective.is_zero_sum(&model);
        let sol = defense_backward_induction(&model, &constraints, &objective, zero_sum, BR_TOLERANCE)?;
        let def_inter = Interaction::new(&model, &sol.victim_policy, &constraints, &objective)?;
        let traj = run_episode(&def_inter, &mut &sol.attacker_response, 0, 0, layout.horizon)?;
        (Some(sol.victim_value), Some(traj), None)
    };

    Ok(ScenarioReport {
        surface: scenario.surface,
        clean_value,
        attacked_value: attack.victim_value,
        defense_value,
        notice,
        trajectories: ScenarioTrajectories {
            clean,
            attacked,
            defense,
        },
    })
}

/// Cells the victim occupied, in order: each step's true cell before and
/// after a state attack, then the final cell.
pub fn visited_cells(trajectory: &Trajectory) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * trajectory.steps.len() + 1);
    for st in &trajectory.steps {
        out.push(st.s);
        if st.s_attacked != st.s {
            out.push(st.s_attacked);
        }
    }
    out.push(trajectory.final_state);
    out
}

/// Text grid, row 0 on top: `#` visited, `~` lava, `G` goal, `S` start,
/// `!` visited lava, `.` otherwise. A trajectory without steps marks nothing.
pub fn render_trajectory(layout: &GridLayout, trajectory: &Trajectory) -> Result<String> {
    let cells = if trajectory.steps.is_empty() {
        Vec::new()
    } else {
        visited_cells(trajectory)
    };
    render_cells(layout, &cells)
}

/// As [`render_trajectory`], for an explicit list of visited cell indices.
pub fn render_cells(layout: &GridLayout, visited: &[usize]) -> Result<String> {
    if let Some(&bad) = visited.iter().find(|&&c| c >= layout.n_cells()) {
        return Err(Error::OutOfBounds(bad));
    }
    let mut seen = vec![false; layout.n_cells()];
    for &c in visited {
        seen[c] = true;
    }
    let mut out = String::with_capacity(layout.n_cells() + layout.n);
    for r in 0..layout.n {
        for c in 0..layout.n {
            let cell = (r, c);
            let v = seen[layout.index(cell)];
            let ch = if v && layout.is_lava(cell) {
                '!'
            } else if cell == layout.start() {
                'S'
            } else if cell == layout.goal() {
                'G'
            } else if v {
                '#'
            } else if layout.is_lava(cell) {
                '~'
            } else {
                '.'
            };
            out.push(ch);
        }
        out.push('\n');
    }
    Ok(out)
}
