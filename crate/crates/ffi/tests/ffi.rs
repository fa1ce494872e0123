use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use advrl_ffi::*;

const M1: &str = include_str!("../../../data/m1.json");
const M1_H3: &str = include_str!("../../../data/m1_h3.json");

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error_name() -> String {
    let p = advrl_last_error_name();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn model(json: &str) -> *mut AdvrlModel {
    let mut m = ptr::null_mut();
    assert_eq!(advrl_model_from_json(c(json).as_ptr(), &mut m), AdvrlStatus::Ok);
    m
}

unsafe fn policy(m: *const AdvrlModel, json: &str) -> *mut AdvrlPolicy {
    let mut p = ptr::null_mut();
    assert_eq!(advrl_policy_from_json(m, c(json).as_ptr(), &mut p), AdvrlStatus::Ok);
    p
}

unsafe fn constraints(m: *const AdvrlModel, json: &str) -> *mut AdvrlConstraints {
    let mut out = ptr::null_mut();
    assert_eq!(advrl_constraints_from_json(m, c(json).as_ptr(), &mut out), AdvrlStatus::Ok);
    out
}

#[test]
fn model_sizes_and_evaluation() {
    unsafe {
        let m = model(M1);
        let (mut s, mut a) = (0usize, 0usize);
        assert_eq!(
            advrl_model_sizes(m, &mut s, ptr::null_mut(), &mut a, ptr::null_mut()),
            AdvrlStatus::Ok
        );
        assert_eq!((s, a), (1, 2));
        let p = policy(m, r#"{"kind": "stationary", "table": [1]}"#);
        let mut v = 0.0;
        assert_eq!(advrl_evaluate_policy(m, p, &mut v), AdvrlStatus::Ok);
        assert!((v - 2.0).abs() < 1e-10);
        advrl_policy_free(p);
        advrl_model_free(m);
    }
}

#[test]
fn plan_attack_and_json() {
    unsafe {
        let m = model(M1);
        let p = policy(m, r#"{"kind": "stationary", "table": [1]}"#);
        let b = constraints(m, r#"{"action": "all"}"#);
        let mut att = ptr::null_mut();
        assert_eq!(advrl_plan_attack(m, p, b, ptr::null(), 1e-10, &mut att), AdvrlStatus::Ok);
        let (mut obj, mut vic) = (f64::NAN, f64::NAN);
        assert_eq!(advrl_attack_values(att, &mut obj, &mut vic), AdvrlStatus::Ok);
        assert!(obj.abs() < 1e-9 && vic.abs() < 1e-9, "{obj} {vic}");
        let mut json = ptr::null_mut();
        assert_eq!(advrl_attack_to_json(att, &mut json), AdvrlStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap();
        assert!(text.contains("objective_value"));
        advrl_string_free(json);
        advrl_attack_free(att);
        // no constraints: the attacker can only watch
        let mut att = ptr::null_mut();
        assert_eq!(advrl_plan_attack(m, p, ptr::null(), ptr::null(), 1e-10, &mut att), AdvrlStatus::Ok);
        advrl_attack_values(att, &mut obj, ptr::null_mut());
        assert!((obj + 2.0).abs() < 1e-9);
        advrl_attack_free(att);
        advrl_constraints_free(b);
        advrl_policy_free(p);
        advrl_model_free(m);
    }
}

#[test]
fn defense_and_scope_refusal() {
    unsafe {
        let m = model(M1_H3);
        let b = constraints(m, r#"{"action": "all"}"#);
        let mut d = ptr::null_mut();
        assert_eq!(advrl_plan_defense(m, b, ptr::null(), 1, 1e-10, &mut d), AdvrlStatus::Ok);
        let (mut v1, mut v2) = (f64::NAN, f64::NAN);
        advrl_defense_values(d, &mut v1, &mut v2);
        assert!(v1.abs() < 1e-12 && v2.abs() < 1e-12);
        let mut json = ptr::null_mut();
        assert_eq!(advrl_defense_to_json(d, &mut json), AdvrlStatus::Ok);
        advrl_string_free(json);
        advrl_defense_free(d);
        advrl_constraints_free(b);

        let obs = constraints(m, r#"{"observation": "all"}"#);
        let mut d = ptr::null_mut();
        assert_eq!(
            advrl_plan_defense(m, obs, ptr::null(), 1, 1e-10, &mut d),
            AdvrlStatus::ScopeRefusal
        );
        assert!(d.is_null());
        assert_eq!(last_error_name(), "ObservationSurfaceEnabled");
        advrl_constraints_free(obs);
        advrl_model_free(m);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        let bad = M1.replace("[[[1.0, 0.0], [0.0, 1.0]]]", "[[[0.7, 0.0], [0.0, 1.0]]]");
        assert_eq!(advrl_model_from_json(c(&bad).as_ptr(), &mut m), AdvrlStatus::InvalidInput);
        assert!(m.is_null());
        assert_eq!(last_error_name(), "RowNotStochastic");
        assert_eq!(advrl_model_from_json(ptr::null(), &mut m), AdvrlStatus::NullPointer);
        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            advrl_model_from_json(invalid.as_ptr().cast(), &mut m),
            AdvrlStatus::InvalidUtf8
        );
        assert_eq!(advrl_model_from_json(c("{").as_ptr(), &mut m), AdvrlStatus::InvalidInput);
        assert_eq!(last_error_name(), "Parse");
        let msg = CStr::from_ptr(advrl_last_error_message()).to_str().unwrap();
        assert!(msg.contains("parse error"));
        // freeing NULL is a no-op
        advrl_model_free(ptr::null_mut());
        advrl_string_free(ptr::null_mut());
    }
}

#[test]
fn gridworld_reference() {
    unsafe {
        let (mut clean, mut att, mut def) = (0.0, 0.0, 0.0);
        let surface = c("action");
        assert_eq!(
            advrl_gridworld_values(ptr::null(), surface.as_ptr(), &mut clean, &mut att, &mut def),
            AdvrlStatus::Ok
        );
        assert_eq!(clean, 3.0);
        assert!(att < clean);
        assert!((def - 3.0).abs() < 1e-10);
        let bad = c("sideways");
        assert_eq!(
            advrl_gridworld_values(ptr::null(), bad.as_ptr(), &mut clean, &mut att, &mut def),
            AdvrlStatus::InvalidInput
        );
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(advrl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_and_links() {
    if !have_cc() {
        eprintln!("cc not found; skipping C header check");
        return;
    }
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = crate_dir.join("include");
    assert!(include.join("advrl.h").exists());
    let tmp = std::env::temp_dir().join(format!("advrl_ffi_c_{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let src = tmp.join("main.c");
    std::fs::write(
        &src,
        r#"#include "advrl.h"
#include <stdio.h>
int main(void) {
    AdvrlModel *m = NULL;
    const char *json = "{\"states\":1,\"observations\":1,\"actions\":2,\"reward_support\":[0,1],"
        "\"transition\":[[[1],[1]]],\"reward_dist\":[[[1,0],[0,1]]],\"obs_dist\":[[1]],\"gamma\":0.5,\"mu\":[1]}";
    if (advrl_model_from_json(json, &m) != ADVRL_STATUS_OK) {
        printf("%s\n", advrl_last_error_message());
        return 1;
    }
    size_t actions = 0;
    advrl_model_sizes(m, NULL, NULL, &actions, NULL);
    advrl_model_free(m);
    return actions == 2 ? 0 : 2;
}
"#,
    )
    .unwrap();
    let syntax = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    // Link against the static library when cargo has produced it next to this test.
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.parent().unwrap().join("libadvrl_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping link check", lib.display());
        return;
    }
    let exe = tmp.join("main");
    let link = Command::new("cc")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
}
