//! C ABI for advrl.
//!
//! Objects are opaque handles created by `*_from_json` or a planner and
//! released with the matching `*_free`. Every fallible call returns an
//! [`AdvrlStatus`]; on failure the thread's last error name and message are
//! available from [`advrl_last_error_name`] and [`advrl_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use advrl::attack::{
    build_constraints, build_meta_mdp, AttackConstraints, AttackerObjective, ConstraintRules, Interaction,
    MetaBuildOptions,
};
use advrl::defense::{build_meta_game, defense_backward_induction, solve_zero_sum_tbsg, DefenseSolution, BR_TOLERANCE};
use advrl::gridworld::{run_scenario, GridLayout, GridScenario, GridSurface};
use advrl::mdp::{evaluate_policy, TabularPomdp, VictimPolicy};
use advrl::planner::{plan_attack, AttackSolution};
use advrl::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdvrlStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Input failed to parse or validate, or an operation precondition failed.
    InvalidInput = 3,
    /// The request is well-formed but declined as computationally out of scope.
    ScopeRefusal = 4,
    /// Internal failure; the library caught a panic.
    Internal = 5,
}

/// Validated environment.
pub struct AdvrlModel(TabularPomdp);

/// Victim policy.
pub struct AdvrlPolicy(VictimPolicy);

/// Attack feasibility sets for one model.
pub struct AdvrlConstraints(AttackConstraints);

/// Planned attack with its values.
pub struct AdvrlAttack(AttackSolution);

/// Planned defense with its values.
pub struct AdvrlDefense(DefenseSolution);

struct LastError {
    name: CString,
    message: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

fn cstring(text: &str) -> CString {
    CString::new(text.replace('\0', " ")).unwrap()
}

fn set_error(name: &str, message: &str) {
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = Some(LastError {
            name: cstring(name),
            message: cstring(message),
        })
    });
}

struct Fail(AdvrlStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.name(), &e.to_string());
        Fail(if e.is_scope_refusal() {
            AdvrlStatus::ScopeRefusal
        } else {
            AdvrlStatus::InvalidInput
        })
    }
}

fn null(what: &str) -> Fail {
    set_error("NullPointer", &format!("{what} is NULL"));
    Fail(AdvrlStatus::NullPointer)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AdvrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdvrlStatus::Ok,
        Ok(Err(Fail(status))) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error("Internal", &msg);
            AdvrlStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("InvalidUtf8", &format!("{what} is not valid UTF-8"));
        Fail(AdvrlStatus::InvalidUtf8)
    })
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

unsafe fn objective(json: *const c_char, model: &TabularPomdp) -> Result<AttackerObjective, Fail> {
    if json.is_null() {
        return Ok(AttackerObjective::NegateReward);
    }
    Ok(AttackerObjective::from_json(text(json, "objective")?, model)?)
}

unsafe fn constraints_or_identity(c: *const AdvrlConstraints, model: &TabularPomdp) -> AttackConstraints {
    match c.as_ref() {
        Some(c) => c.0.clone(),
        None => AttackConstraints::identity(model),
    }
}

/// Name of the last error on this thread (e.g. `"RowNotStochastic"`), or
/// NULL. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn advrl_last_error_name() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |e| e.name.as_ptr()))
}

/// Message of the last error on this thread, or NULL.
#[no_mangle]
pub extern "C" fn advrl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |e| e.message.as_ptr()))
}

/// Library version; static storage.
#[no_mangle]
pub extern "C" fn advrl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Free a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn advrl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate an environment.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_model_from_json(json: *const c_char, out: *mut *mut AdvrlModel) -> AdvrlStatus {
    guard(|| {
        let model = TabularPomdp::from_json(text(json, "json")?)?;
        put(out, AdvrlModel(model))
    })
}

/// # Safety
/// `model` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn advrl_model_free(model: *mut AdvrlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sizes of a model's index sets. Any of the outputs may be NULL.
///
/// # Safety
/// `model` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_model_sizes(
    model: *const AdvrlModel,
    states: *mut usize,
    observations: *mut usize,
    actions: *mut usize,
    rewards: *mut usize,
) -> AdvrlStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        for (p, v) in [
            (states, m.n_states()),
            (observations, m.n_obs()),
            (actions, m.n_actions()),
            (rewards, m.n_rewards()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Parse a victim policy for `model` and check it fits.
///
/// # Safety
/// `model` must be a live handle, `json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_policy_from_json(
    model: *const AdvrlModel,
    json: *const c_char,
    out: *mut *mut AdvrlPolicy,
) -> AdvrlStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let pi = VictimPolicy::from_json(text(json, "json")?, m.n_actions())?;
        pi.check_against(m)?;
        put(out, AdvrlPolicy(pi))
    })
}

/// # Safety
/// `policy` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn advrl_policy_free(policy: *mut AdvrlPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Expected value of `policy` on `model` under the initial distribution.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_evaluate_policy(
    model: *const AdvrlModel,
    policy: *const AdvrlPolicy,
    out: *mut f64,
) -> AdvrlStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let pi = &borrow(policy, "policy")?.0;
        let v = evaluate_policy(m, pi)?;
        put_value(out, v.expected(m.initial()))
    })
}

/// Build feasibility sets for `model` from a constraint-rules document.
///
/// # Safety
/// `model` must be a live handle, `json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_constraints_from_json(
    model: *const AdvrlModel,
    json: *const c_char,
    out: *mut *mut AdvrlConstraints,
) -> AdvrlStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let rules = ConstraintRules::from_json(text(json, "json")?)?;
        let build = build_constraints(&rules, m)?;
        put(out, AdvrlConstraints(build.constraints))
    })
}

/// # Safety
/// `constraints` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn advrl_constraints_free(constraints: *mut AdvrlConstraints) {
    if !constraints.is_null() {
        drop(Box::from_raw(constraints));
    }
}

/// Optimal attack on `policy`. NULL `constraints` means no attacks; NULL
/// `objective_json` means `negate_reward`.
///
/// # Safety
/// Non-NULL handles must be live, strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_plan_attack(
    model: *const AdvrlModel,
    policy: *const AdvrlPolicy,
    constraints: *const AdvrlConstraints,
    objective_json: *const c_char,
    epsilon: f64,
    out: *mut *mut AdvrlAttack,
) -> AdvrlStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let pi = &borrow(policy, "policy")?.0;
        let c = constraints_or_identity(constraints, m);
        let g = objective(objective_json, m)?;
        let inter = Interaction::new(m, pi, &c, &g)?;
        let meta = build_meta_mdp(&inter, MetaBuildOptions::default())?;
        put(out, AdvrlAttack(plan_attack(&meta, epsilon)?))
    })
}

/// Attacker objective and victim value of a planned attack. Either output may be NULL.
///
/// # Safety
/// `attack` must be a live handle; non-NULL outputs writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_attack_values(
    attack: *const AdvrlAttack,
    objective_value: *mut f64,
    victim_value: *mut f64,
) -> AdvrlStatus {
    guard(|| {
        let a = &borrow(attack, "attack")?.0;
        if !objective_value.is_null() {
            *objective_value = a.objective_value;
        }
        if !victim_value.is_null() {
            *victim_value = a.victim_value;
        }
        Ok(())
    })
}

/// Attack solution as JSON; free with [`advrl_string_free`].
///
/// # Safety
/// `attack` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_attack_to_json(attack: *const AdvrlAttack, out: *mut *mut c_char) -> AdvrlStatus {
    guard(|| {
        let a = &borrow(attack, "attack")?.0;
        put_value(out, cstring(&a.to_json()).into_raw())
    })
}

/// # Safety
/// `attack` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn advrl_attack_free(attack: *mut AdvrlAttack) {
    if !attack.is_null() {
        drop(Box::from_raw(attack));
    }
}

/// Robust defense. Finite-horizon models use backward induction (`zero_sum`
/// nonzero selects the zero-sum recursion); discounted models solve the
/// zero-sum game. Observation attacks are refused with `SCOPE_REFUSAL`.
///
/// # Safety
/// Non-NULL handles must be live, strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_plan_defense(
    model: *const AdvrlModel,
    constraints: *const AdvrlConstraints,
    objective_json: *const c_char,
    zero_sum: i32,
    epsilon: f64,
    out: *mut *mut AdvrlDefense,
) -> AdvrlStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let c = constraints_or_identity(constraints, m);
        let g = objective(objective_json, m)?;
        let sol = if m.horizon().is_some() {
            defense_backward_induction(m, &c, &g, zero_sum != 0, BR_TOLERANCE)?
        } else {
            let game = build_meta_game(m, &c, &g, MetaBuildOptions::default())?;
            solve_zero_sum_tbsg(&game, epsilon)?
        };
        put(out, AdvrlDefense(sol))
    })
}

/// Victim and attacker values of a defense. Either output may be NULL.
///
/// # Safety
/// `defense` must be a live handle; non-NULL outputs writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_defense_values(
    defense: *const AdvrlDefense,
    victim_value: *mut f64,
    attacker_value: *mut f64,
) -> AdvrlStatus {
    guard(|| {
        let d = &borrow(defense, "defense")?.0;
        if !victim_value.is_null() {
            *victim_value = d.victim_value;
        }
        if !attacker_value.is_null() {
            *attacker_value = d.attacker_value;
        }
        Ok(())
    })
}

/// Defense solution as JSON; free with [`advrl_string_free`].
///
/// # Safety
/// `defense` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_defense_to_json(defense: *const AdvrlDefense, out: *mut *mut c_char) -> AdvrlStatus {
    guard(|| {
        let d = &borrow(defense, "defense")?.0;
        put_value(out, cstring(&d.to_json()).into_raw())
    })
}

/// # Safety
/// `defense` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn advrl_defense_free(defense: *mut AdvrlDefense) {
    if !defense.is_null() {
        drop(Box::from_raw(defense));
    }
}

/// Run a grid-world scenario and write its values (clean, attacked, defense)
/// to the outputs. NULL `layout_json` means the built-in reference layout;
/// `surface` is one of `perceived_state`, `true_state`, `action`, `reward`.
/// The defense value is NaN when the defense step is skipped.
///
/// # Safety
/// Strings must be NUL-terminated; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn advrl_gridworld_values(
    layout_json: *const c_char,
    surface: *const c_char,
    clean_value: *mut f64,
    attacked_value: *mut f64,
    defense_value: *mut f64,
) -> AdvrlStatus {
    guard(|| {
        let layout = if layout_json.is_null() {
            GridLayout::reference()
        } else {
            GridLayout::from_json(text(layout_json, "layout_json")?)?
        };
        let surface = GridSurface::parse(text(surface, "surface")?)?;
        let rep = run_scenario(&GridScenario {
            layout,
            surface,
            objective: None,
        })?;
        put_value(clean_value, rep.clean_value)?;
        put_value(attacked_value, rep.attacked_value)?;
        put_value(defense_value, rep.defense_value.unwrap_or(f64::NAN))
    })
}
