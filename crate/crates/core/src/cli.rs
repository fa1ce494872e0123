//! Command-line front end.
//!
//! Every command prints one JSON report `{command, inputs, values,
//! tolerances, notices, error, wall_time}` and exits with 0 on success, 1 on
//! invalid input and 2 when the request is declined as out of scope.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::attack::{
    build_constraints, build_meta_mdp, build_meta_mdp_compact, AttackConstraints, AttackerObjective,
    ConstraintRules, Interaction, MetaBuildOptions, RawObjective, SurfaceRule,
};
use crate::defense::{build_meta_game, defense_backward_induction, solve_zero_sum_tbsg, DefenseSolution, BR_TOLERANCE};
use crate::error::{Error, Result};
use crate::gridworld::{render_trajectory, run_scenario, GridLayout, GridScenario, GridSurface};
use crate::linear::{build_meta_features, verify_linear_consistency, LinearComponents};
use crate::mdp::{TabularPomdp, VictimPolicy};
use crate::planner::{learn_attack_qlearning, plan_attack, AttackSolution, QLearningOptions};
use crate::sim::{exact_values, monte_carlo_values, run_episode, IdentityAgent, DEFAULT_TAIL};

pub const SEED_ENV: &str = "ADVRL_SEED";
pub const LINEAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "advrl", version, about = "Optimal attacks and robust defenses for tabular RL")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Planning accuracy for discounted solvers.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub epsilon: f64,
    /// Random seed; the ADVRL_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ProblemArgs {
    /// Environment file.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Constraint rules file; omitted means no attacks.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Attacker objective file; omitted means negate_reward.
    #[arg(long)]
    pub objective: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check input files and report their sizes.
    Validate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Attack solution written by plan-attack.
        #[arg(long)]
        attack: Option<PathBuf>,
        /// Defense solution written by plan-defense.
        #[arg(long)]
        defense: Option<PathBuf>,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        linear: Option<PathBuf>,
    },
    /// Optimal attack on a fixed victim.
    PlanAttack {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        policy: PathBuf,
        /// Learn the attack with Q-learning instead of planning.
        #[arg(long)]
        learn: bool,
        /// Learning episodes.
        #[arg(long, default_value_t = 5000)]
        episodes: usize,
        /// Use the one-step-per-state construction.
        #[arg(long)]
        compact: bool,
        /// Write the attack solution here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Robust victim policy against the worst-case attacker.
    PlanDefense {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Use the zero-sum recursion (finite horizon).
        #[arg(long)]
        zero_sum: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte-Carlo rollouts next to exact values.
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        policy: PathBuf,
        /// Attack solution to play; omitted means no manipulation.
        #[arg(long)]
        attack: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Discounted tail tolerance for truncation.
        #[arg(long, default_value_t = DEFAULT_TAIL)]
        tail: f64,
        /// Write every episode as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Grid-world scenario: clean, attacked and defended runs.
    GridworldDemo {
        /// Layout file; omitted means the built-in 10x10 reference layout.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// perceived_state, true_state, action or reward.
        #[arg(long, default_value = "action")]
        surface: String,
        #[arg(long)]
        objective: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check the linear meta-feature construction against the tabular meta-MDP.
    VerifyLinear {
        #[arg(long)]
        linear: PathBuf,
        #[arg(long)]
        objective: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::PlanAttack { .. } => "plan-attack",
            Command::PlanDefense { .. } => "plan-defense",
            Command::Simulate { .. } => "simulate",
            Command::GridworldDemo { .. } => "gridworld-demo",
            Command::VerifyLinear { .. } => "verify-linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub inputs: BTreeMap<String, Value>,
    pub values: Map<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
    pub notices: Vec<String>,
    pub error: Option<ErrorReport>,
    pub wall_time: f64,
}

impl Report {
    fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            values: Map::new(),
            tolerances: BTreeMap::new(),
            notices: Vec::new(),
            error: None,
            wall_time: 0.0,
        }
    }

    fn input(&mut self, key: &str, value: impl Into<Value>) {
        self.inputs.insert(key.to_string(), value.into());
    }

    fn path(&mut self, key: &str, path: &Option<PathBuf>) {
        if let Some(p) = path {
            self.input(key, p.display().to_string());
        }
    }

    fn value(&mut self, key: &str, value: impl Into<Value>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exit status for an outcome.
pub fn exit_code(outcome: &Result<()>) -> i32 {
    match outcome {
        Ok(()) => 0,
        Err(e) if e.is_scope_refusal() => 2,
        Err(_) => 1,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<TabularPomdp> {
    TabularPomdp::from_json(&read(path)?)
}

fn load_constraints(path: &Option<PathBuf>, model: &TabularPomdp, report: &mut Report) -> Result<AttackConstraints> {
    let Some(path) = path else {
        return Ok(AttackConstraints::identity(model));
    };
    let rules = ConstraintRules::from_json(&read(path)?)?;
    let build = build_constraints(&rules, model)?;
    report.notices.extend(build.repairs.iter().map(|e| format!("repaired: {e}")));
    Ok(build.constraints)
}

fn load_objective(path: &Option<PathBuf>, model: &TabularPomdp) -> Result<AttackerObjective> {
    match path {
        None => Ok(AttackerObjective::NegateReward),
        Some(p) => AttackerObjective::from_json(&read(p)?, model),
    }
}

fn require_env(problem: &ProblemArgs) -> Result<&Path> {
    problem
        .env
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--env is required".into()))
}

fn sizes(model: &TabularPomdp) -> Value {
    json!({
        "states": model.n_states(),
        "observations": model.n_obs(),
        "actions": model.n_actions(),
        "rewards": model.n_rewards(),
        "horizon": model.horizon(),
        "gamma": model.horizon().is_none().then(|| model.discount()),
    })
}

fn seed_from_env(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={text:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

/// Run a parsed command, filling `report`.
pub fn dispatch(cli: &Cli, report: &mut Report) -> Result<()> {
    if !(cli.epsilon > 0.0) {
        return Err(Error::InvalidArgument("--epsilon must be positive".into()));
    }
    let seed = seed_from_env(cli.seed)?;
    let eps = cli.epsilon;
    match &cli.command {
        Command::Validate {
            problem,
            policy,
            attack,
            defense,
            layout,
            linear,
        } => {
            report.path("env", &problem.env);
            report.path("constraints", &problem.constraints);
            report.path("objective", &problem.objective);
            report.path("policy", policy);
            report.path("attack", attack);
            report.path("defense", defense);
            report.path("layout", layout);
            report.path("linear", linear);
            let mut checked = Vec::new();
            if let Some(env) = &problem.env {
                let model = load_model(env)?;
                report.value("environment", sizes(&model));
                checked.push("environment");
                let c = load_constraints(&problem.constraints, &model, report)?;
                report.value(
                    "enabled_surfaces",
                    c.toggles().enabled().iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                );
                let g = load_objective(&problem.objective, &model)?;
                report.value("zero_sum", g.is_zero_sum(&model));
                if let Some(p) = policy {
                    let pi = VictimPolicy::from_json(&read(p)?, model.n_actions())?;
                    pi.check_against(&model)?;
                    checked.push("policy");
                    if let Some(a) = attack {
                        let sol = AttackSolution::from_json(&read(a)?)?;
                        let inter = Interaction::new(&model, &pi, &c, &g)?;
                        sol.policy.check_against(&inter)?;
                        checked.push("attack");
                    }
                } else if attack.is_some() {
                    return Err(Error::InvalidArgument("--attack needs --policy".into()));
                }
                if let Some(d) = defense {
                    let sol = DefenseSolution::from_json(&read(d)?, model.n_actions())?;
                    sol.victim_policy.check_against(&model)?;
                    checked.push("defense");
                }
            } else if policy.is_some() || attack.is_some() || defense.is_some() || problem.constraints.is_some() {
                return Err(Error::InvalidArgument(
                    "--policy, --attack, --defense and --constraints need --env".into(),
                ));
            }
            if let Some(l) = layout {
                let layout = GridLayout::from_json(&read(l)?)?;
                report.value("layout_cells", layout.n_cells());
                checked.push("layout");
            }
            if let Some(l) = linear {
                let lc = LinearComponents::from_json(&read(l)?)?;
                report.value("linear_dims", json!({"d_m": lc.d_m, "d_pi": lc.d_pi}));
                checked.push("linear");
            }
            if checked.is_empty() {
                return Err(Error::InvalidArgument("nothing to validate".into()));
            }
            report.value("checked", checked);
            Ok(())
        }
        Command::PlanAttack {
            problem,
            policy,
            learn,
            episodes,
            compact,
            output,
        } => {
            report.path("env", &problem.env);
            report.path("constraints", &problem.constraints);
            report.path("objective", &problem.objective);
            report.input("policy", policy.display().to_string());
            let model = load_model(require_env(problem)?)?;
            let pi = VictimPolicy::from_json(&read(policy)?, model.n_actions())?;
            let c = load_constraints(&problem.constraints, &model, report)?;
            let g = load_objective(&problem.objective, &model)?;
            let inter = Interaction::new(&model, &pi, &c, &g)?;
            let sol = if *learn {
                report.input("learn", true);
                report.input("episodes", *episodes);
                report.input("seed", seed);
                let sol = learn_attack_qlearning(&inter, *episodes, seed, QLearningOptions::default())?;
                let (v1, v2) = exact_values(&inter, &sol.policy)?;
                report.value("exact_objective_value", v2);
                report.value("exact_victim_value", v1);
                sol
            } else {
                report.input("construction", if *compact { "compact" } else { "full" });
                let meta = if *compact {
                    build_meta_mdp_compact(&inter)?
                } else {
                    build_meta_mdp(&inter, MetaBuildOptions::default())?
                };
                report.value("meta_states", meta.n_states());
                report.tolerances.insert("epsilon".into(), eps);
                plan_attack(&meta, eps)?
            };
            report.value("objective_value", sol.objective_value);
            report.value("victim_value", sol.victim_value);
            report.value("meta_value", sol.meta_value);
            if let Some(out) = output {
                write(out, &sol.to_json())?;
                report.path("output", output);
            }
            Ok(())
        }
        Command::PlanDefense {
            problem,
            zero_sum,
            output,
        } => {
            report.path("env", &problem.env);
            report.path("constraints", &problem.constraints);
            report.path("objective", &problem.objective);
            report.input("zero_sum", *zero_sum);
            let model = load_model(require_env(problem)?)?;
            let c = load_constraints(&problem.constraints, &model, report)?;
            let g = load_objective(&problem.objective, &model)?;
            let sol = if model.horizon().is_some() {
                report.tolerances.insert("best_response".into(), BR_TOLERANCE);
                defense_backward_induction(&model, &c, &g, *zero_sum, BR_TOLERANCE)?
            } else {
                let game = build_meta_game(&model, &c, &g, MetaBuildOptions::default())?;
                report.value("game_states", game.n_states());
                report.tolerances.insert("epsilon".into(), eps);
                solve_zero_sum_tbsg(&game, eps)?
            };
            report.value("victim_value", sol.victim_value);
            report.value("attacker_value", sol.attacker_value);
            report.value("zero_sum", sol.zero_sum);
            if let Some(out) = output {
                write(out, &sol.to_json())?;
                report.path("output", output);
            }
            Ok(())
        }
        Command::Simulate {
            problem,
            policy,
            attack,
            episodes,
            tail,
            trace,
        } => {
            report.path("env", &problem.env);
            report.path("constraints", &problem.constraints);
            report.path("objective", &problem.objective);
            report.input("policy", policy.display().to_string());
            report.path("attack", attack);
            report.input("episodes", *episodes);
            report.input("seed", seed);
            report.tolerances.insert("tail".into(), *tail);
            let model = load_model(require_env(problem)?)?;
            let pi = VictimPolicy::from_json(&read(policy)?, model.n_actions())?;
            let c = load_constraints(&problem.constraints, &model, report)?;
            let g = load_objective(&problem.objective, &model)?;
            let inter = Interaction::new(&model, &pi, &c, &g)?;
            let (mc, exact, trajectories) = match attack {
                Some(path) => {
                    let sol = AttackSolution::from_json(&read(path)?)?;
                    sol.policy.check_against(&inter)?;
                    let agent = &sol.policy;
                    let mc = monte_carlo_values(&inter, &agent, *episodes, seed, *tail)?;
                    let traces = match trace {
                        Some(_) => (0..*episodes as u64)
                            .map(|e| run_episode(&inter, &mut &sol.policy, seed, e, mc.steps))
                            .collect::<Result<Vec<_>>>()?,
                        None => Vec::new(),
                    };
                    (mc, exact_values(&inter, &sol.policy)?, traces)
                }
                None => {
                    let mc = monte_carlo_values(&inter, &IdentityAgent, *episodes, seed, *tail)?;
                    let identity = crate::planner::AttackPolicy::identity(&inter);
                    let traces = match trace {
                        Some(_) => (0..*episodes as u64)
                            .map(|e| run_episode(&inter, &mut IdentityAgent, seed, e, mc.steps))
                            .collect::<Result<Vec<_>>>()?,
                        None => Vec::new(),
                    };
                    (mc, exact_values(&inter, &identity)?, traces)
                }
            };
            if let Some(path) = trace {
                let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                let mut out = BufWriter::new(file);
                for t in &trajectories {
                    t.write_jsonl(&mut out)?;
                }
                out.flush()?;
                report.path("trace", trace);
            }
            report.value("monte_carlo", serde_json::to_value(mc)?);
            report.value("exact_victim_value", exact.0);
            report.value("exact_attacker_value", exact.1);
            report.value(
                "agrees",
                mc.victim.agrees_within(exact.0, mc.tail_bound) && mc.attacker.agrees_within(exact.1, mc.tail_bound),
            );
            Ok(())
        }
        Command::GridworldDemo {
            layout,
            surface,
            objective,
            trace,
        } => {
            report.path("layout", layout);
            report.input("surface", surface.clone());
            report.path("objective", objective);
            let layout = match layout {
                Some(p) => GridLayout::from_json(&read(p)?)?,
                None => GridLayout::reference(),
            };
            let surface = GridSurface::parse(surface)?;
            let objective = match objective {
                Some(p) => Some(serde_json::from_str::<RawObjective>(&read(p)?)?),
                None => None,
            };
            let rep = run_scenario(&GridScenario {
                layout: layout.clone(),
                surface,
                objective,
            })?;
            report.value("clean_value", rep.clean_value);
            report.value("attacked_value", rep.attacked_value);
            report.value("defense_value", rep.defense_value);
            report.notices.extend(rep.notice.iter().cloned());
            let t = &rep.trajectories;
            let mut renders = Map::new();
            renders.insert("clean".into(), render_trajectory(&layout, &t.clean)?.into());
            renders.insert("attacked".into(), render_trajectory(&layout, &t.attacked)?.into());
            if let Some(d) = &t.defense {
                renders.insert("defense".into(), render_trajectory(&layout, d)?.into());
            }
            report.value("renderings", Value::Object(renders));
            report.value(
                "attacked_reaches_goal",
                t.attacked.final_state == layout.index(layout.goal()),
            );
            if let Some(path) = trace {
                let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                let mut out = BufWriter::new(file);
                for traj in [Some(&t.clean), Some(&t.attacked), t.defense.as_ref()].into_iter().flatten() {
                    traj.write_jsonl(&mut out)?;
                }
                out.flush()?;
                report.path("trace", &Some(path.clone()));
            }
            Ok(())
        }
        Command::VerifyLinear { linear, objective } => {
            report.input("linear", linear.display().to_string());
            report.path("objective", objective);
            let lc = LinearComponents::from_json(&read(linear)?)?;
            let n_s = lc.n_states();
            let model = lc.induced_model(Some(0.9), None, vec![1.0 / n_s as f64; n_s])?;
            let pi = lc.induced_policy()?;
            let g = load_objective(objective, &model)?;
            let all = ConstraintRules {
                state: SurfaceRule::All,
                observation: SurfaceRule::All,
                action: SurfaceRule::All,
                reward: SurfaceRule::All,
            };
            let c = build_constraints(&all, &model)?.constraints;
            let inter = Interaction::new(&model, &pi, &c, &g)?;
            let meta = build_meta_mdp(&inter, MetaBuildOptions { prune: false })?;
            let mf = build_meta_features(&lc, &g)?;
            let rep = verify_linear_consistency(&mf, &meta)?;
            report.tolerances.insert("linear".into(), LINEAR_TOLERANCE);
            report.value("dimension", mf.dim());
            report.value("max_abs_transition_error", rep.max_abs_transition_error);
            report.value("max_abs_reward_error", rep.max_abs_reward_error);
            report.value("pairs_checked", rep.pairs_checked);
            report.value(
                "consistent",
                rep.max_abs_transition_error <= LINEAR_TOLERANCE && rep.max_abs_reward_error <= LINEAR_TOLERANCE,
            );
            Ok(())
        }
    }
}

/// Parse `args`, run, and return the exit status and the report text (empty
/// when the report went to a file).
pub fn run<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            return (code, e.to_string());
        }
    };
    let start = Instant::now();
    let mut report = Report::new(cli.command.name());
    let outcome = dispatch(&cli, &mut report);
    if let Err(e) = &outcome {
        report.error = Some(ErrorReport {
            name: e.name().to_string(),
            message: e.to_string(),
        });
    }
    report.wall_time = start.elapsed().as_secs_f64();
    let text = report.to_json();
    if let Some(path) = &cli.report {
        if let Err(e) = write(path, &text) {
            return (1, e.to_string());
        }
        return (exit_code(&outcome), String::new());
    }
    (exit_code(&outcome), text)
}
