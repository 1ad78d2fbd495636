//! C ABI for the adseed library.
//!
//! Handles are opaque pointers created and released by these functions.
//! Strings handed back through out-parameters are heap allocations released
//! with [`adseed_string_free`]. Every entry point returns a status code; on
//! failure a per-thread message, readable via [`adseed_last_error_message`],
//! carries the details. Inputs and outputs are JSON in the same formats the
//! library and CLI use.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::Deserialize;
use serde_json::json;

use adseed::error::Error;
use adseed::eval::{
    value_adaptive_executor, value_locally_adaptive, value_nonadaptive, AdaptiveExecutor,
    Estimate, EvalMethod, DEFAULT_SEARCH_SAMPLES, DEFAULT_VALUE_SAMPLES,
};
use adseed::functions::Objective;
use adseed::harness::{gap_la_reference, gap_na_reference};
use adseed::instance::Instance;
use adseed::locallyadaptive::{locally_adaptive_solve, AdaptiveSolution};
use adseed::nonadaptive::{crs_adapt, nonadaptive_greedy, SearchEval};
use adseed::oracle::{optimal_executor, oracle_report};
use adseed::policy::Policy;
use adseed::rng::SeedStream;
use adseed::Caps;

/// Result of every API call. Values above OK describe what went wrong.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdseedStatus {
    Ok = 0,
    /// A defect inside the library (caught panic).
    Internal = 1,
    /// Malformed or inconsistent input.
    Input = 2,
    /// An enumeration exceeded its configured cap.
    CapExceeded = 3,
    /// The policy violates the budget or another feasibility constraint.
    Infeasible = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 6,
}

/// Opaque handle to a parsed and validated instance.
pub struct AdseedInstance {
    inst: Instance,
    objective: Objective,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|cell| {
        *cell.borrow_mut() = CString::new(sanitized).expect("NUL bytes stripped");
    });
}

fn status_of(err: &Error) -> AdseedStatus {
    set_error(&err.to_string());
    match err {
        Error::Input(_) => AdseedStatus::Input,
        Error::CapExceeded { .. } => AdseedStatus::CapExceeded,
        Error::Infeasible(_) => AdseedStatus::Infeasible,
    }
}

fn null_status(what: &str) -> AdseedStatus {
    set_error(&format!("{what} must not be null"));
    AdseedStatus::NullPointer
}

fn guarded(body: impl FnOnce() -> AdseedStatus) -> AdseedStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("internal: {msg}"));
            AdseedStatus::Internal
        }
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string pointer.
unsafe fn str_in<'a>(p: *const c_char, what: &str) -> Result<&'a str, AdseedStatus> {
    if p.is_null() {
        return Err(null_status(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        AdseedStatus::InvalidUtf8
    })
}

fn string_out(out: *mut *mut c_char, s: String) -> AdseedStatus {
    let sanitized: String = s.chars().filter(|&c| c != '\0').collect();
    let c = CString::new(sanitized).expect("NUL bytes stripped");
    unsafe { *out = c.into_raw() };
    AdseedStatus::Ok
}

/// Parses an instance from JSON and returns a handle through `out`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
/// The handle must be released with [`adseed_instance_free`].
#[no_mangle]
pub unsafe extern "C" fn adseed_instance_from_json(
    json: *const c_char,
    out: *mut *mut AdseedInstance,
) -> AdseedStatus {
    guarded(|| {
        if out.is_null() {
            return null_status("out");
        }
        let text = match str_in(json, "json") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let inst = match Instance::from_json(text) {
            Ok(i) => i,
            Err(e) => return status_of(&e),
        };
        let objective = match inst.objective() {
            Ok(f) => f,
            Err(e) => return status_of(&e),
        };
        *out = Box::into_raw(Box::new(AdseedInstance { inst, objective }));
        AdseedStatus::Ok
    })
}

/// Releases a handle returned by [`adseed_instance_from_json`]. Null is a
/// no-op.
///
/// # Safety
/// `handle` must be null or a pointer obtained from
/// [`adseed_instance_from_json`] that has not been freed already.
#[no_mangle]
pub unsafe extern "C" fn adseed_instance_free(handle: *mut AdseedInstance) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Reports the instance's sizes and budget.
///
/// # Safety
/// `handle` must be a live instance handle; the out-pointers must be valid
/// or null (null fields are skipped).
#[no_mangle]
pub unsafe extern "C" fn adseed_instance_counts(
    handle: *const AdseedInstance,
    n_x: *mut u64,
    n_ground: *mut u64,
    budget: *mut u64,
) -> AdseedStatus {
    guarded(|| {
        let Some(h) = handle.as_ref() else {
            return null_status("handle");
        };
        if !n_x.is_null() {
            *n_x = h.inst.n_x() as u64;
        }
        if !n_ground.is_null() {
            *n_ground = h.inst.n_ground() as u64;
        }
        if !budget.is_null() {
            *budget = h.inst.budget();
        }
        AdseedStatus::Ok
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveOptions {
    alg: String,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default)]
    samples: Option<u64>,
    #[serde(default)]
    seed: u64,
}

fn estimate_json(alg: &str, epsilon: Option<f64>, est: &Estimate, extra: serde_json::Value) -> String {
    let mut doc = json!({
        "algorithm": alg,
        "value": est.mean,
        "std_error": est.std_error,
        "samples": est.samples,
        "exact": est.exact,
    });
    let obj = doc.as_object_mut().expect("document is an object");
    if let Some(eps) = epsilon {
        obj.insert("epsilon".into(), json!(eps));
    }
    if let serde_json::Value::Object(map) = extra {
        for (k, v) in map {
            obj.insert(k, v);
        }
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

fn policy_estimate(
    h: &AdseedInstance,
    policy: &Policy,
    samples: Option<u64>,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<Estimate, Error> {
    let method = match samples {
        Some(s) => EvalMethod::MonteCarlo { samples: s },
        None => EvalMethod::Auto,
    };
    match policy {
        Policy::NonAdaptive(p) => value_nonadaptive(
            &h.inst,
            &h.objective,
            &p.second_sorted(),
            method,
            stream,
            caps,
        ),
        Policy::EpsLocal(p) => {
            let second: Vec<u32> = p.second_union().into_iter().collect();
            value_nonadaptive(&h.inst, &h.objective, &second, method, stream, caps)
        }
        Policy::LocallyAdaptive(p) => {
            value_locally_adaptive(&h.inst, &h.objective, p, method, stream, caps)
        }
    }
}

fn solve_dispatch(h: &AdseedInstance, opts: &SolveOptions) -> Result<String, Error> {
    let caps = Caps::default();
    let stream = SeedStream::new(opts.seed);
    let search_samples = opts.samples.unwrap_or(DEFAULT_SEARCH_SAMPLES);
    let value_samples = opts.samples.unwrap_or(DEFAULT_VALUE_SAMPLES);
    let need_eps = || {
        opts.epsilon
            .ok_or_else(|| Error::Input(format!("{} needs an epsilon", opts.alg)))
    };
    match opts.alg.as_str() {
        "na-greedy" => {
            let eps = need_eps()?;
            let (policy, _) = nonadaptive_greedy(
                &h.inst,
                &h.objective,
                eps,
                SearchEval::MonteCarlo {
                    samples: search_samples,
                },
                &stream,
                &caps,
            )?;
            let wrapped = Policy::NonAdaptive(policy);
            let est = policy_estimate(h, &wrapped, opts.samples, &stream.derive(10), &caps)?;
            Ok(estimate_json(
                &opts.alg,
                Some(eps),
                &est,
                json!({
                    "cost": wrapped.cost(&h.inst),
                    "policy": serde_json::to_value(wrapped.to_file(&h.inst)).expect("serializable"),
                }),
            ))
        }
        "na-greedy+crs" => {
            let eps = need_eps()?;
            let (policy, _) = nonadaptive_greedy(
                &h.inst,
                &h.objective,
                eps,
                SearchEval::MonteCarlo {
                    samples: search_samples,
                },
                &stream,
                &caps,
            )?;
            let ex = crs_adapt(&h.inst, &policy, eps)?;
            let est =
                value_adaptive_executor(&h.inst, &h.objective, &ex, value_samples, &stream.derive(11))?;
            let wrapped = Policy::NonAdaptive(policy);
            Ok(estimate_json(
                &opts.alg,
                Some(eps),
                &est,
                json!({
                    "cost": wrapped.cost(&h.inst),
                    "keep_prob": ex.keep_prob(),
                    "capacity": ex.capacity(),
                    "policy": serde_json::to_value(wrapped.to_file(&h.inst)).expect("serializable"),
                }),
            ))
        }
        "la-greedy" => {
            let eps = need_eps()?;
            match locally_adaptive_solve(&h.inst, &h.objective, eps, search_samples, &stream, &caps)? {
                AdaptiveSolution::Greedy { policy, .. } => {
                    let wrapped = Policy::LocallyAdaptive(policy);
                    let est = policy_estimate(h, &wrapped, opts.samples, &stream.derive(12), &caps)?;
                    Ok(estimate_json(
                        &opts.alg,
                        Some(eps),
                        &est,
                        json!({
                            "cost": wrapped.cost(&h.inst),
                            "policy": serde_json::to_value(wrapped.to_file(&h.inst))
                                .expect("serializable"),
                        }),
                    ))
                }
                AdaptiveSolution::Fallback { executor, value } => {
                    let first: Vec<String> = executor
                        .first_stage()
                        .iter()
                        .map(|&i| h.inst.x_name(i).to_string())
                        .collect();
                    Ok(estimate_json(
                        &opts.alg,
                        Some(eps),
                        &Estimate::exact(value),
                        json!({ "fallback": true, "first": first }),
                    ))
                }
            }
        }
        "bruteforce" => {
            let (executor, value) = optimal_executor(&h.inst, &h.objective, &caps)?;
            let first: Vec<String> = executor
                .first_stage()
                .iter()
                .map(|&i| h.inst.x_name(i).to_string())
                .collect();
            Ok(estimate_json(
                &opts.alg,
                None,
                &Estimate::exact(value),
                json!({ "first": first }),
            ))
        }
        other => Err(Error::Input(format!(
            "unknown algorithm {other:?}; expected na-greedy, na-greedy+crs, la-greedy, or bruteforce"
        ))),
    }
}

/// Runs a solver. `options_json` is an object with fields `alg`
/// ("na-greedy", "na-greedy+crs", "la-greedy", or "bruteforce") and
/// optional `epsilon`, `samples`, `seed`. The result document (value,
/// error bars, policy) is returned through `out_json`.
///
/// # Safety
/// `handle` must be a live instance handle, `options_json` a
/// NUL-terminated string, and `out_json` a valid pointer. The returned
/// string is released with [`adseed_string_free`].
#[no_mangle]
pub unsafe extern "C" fn adseed_solve_json(
    handle: *const AdseedInstance,
    options_json: *const c_char,
    out_json: *mut *mut c_char,
) -> AdseedStatus {
    guarded(|| {
        let Some(h) = handle.as_ref() else {
            return null_status("handle");
        };
        if out_json.is_null() {
            return null_status("out_json");
        }
        let text = match str_in(options_json, "options_json") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let opts: SolveOptions = match serde_json::from_str(text) {
            Ok(o) => o,
            Err(e) => {
                set_error(&format!("options JSON: {e}"));
                return AdseedStatus::Input;
            }
        };
        match solve_dispatch(h, &opts) {
            Ok(doc) => string_out(out_json, doc),
            Err(e) => status_of(&e),
        }
    })
}

/// Scores a policy JSON document against the instance. `samples` forces
/// Monte Carlo with that many samples; 0 selects exact evaluation when
/// possible. Infeasible policies (for example, over budget) fail with
/// `ADSEED_STATUS_INFEASIBLE`.
///
/// # Safety
/// `handle` must be a live instance handle, `policy_json` a NUL-terminated
/// string, `out_json` a valid pointer. The returned string is released
/// with [`adseed_string_free`].
#[no_mangle]
pub unsafe extern "C" fn adseed_eval_policy_json(
    handle: *const AdseedInstance,
    policy_json: *const c_char,
    samples: u64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> AdseedStatus {
    guarded(|| {
        let Some(h) = handle.as_ref() else {
            return null_status("handle");
        };
        if out_json.is_null() {
            return null_status("out_json");
        }
        let text = match str_in(policy_json, "policy_json") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let policy = match Policy::from_json(text, &h.inst) {
            Ok(p) => p,
            Err(e) => return status_of(&e),
        };
        let issues = policy.validate(&h.inst, false);
        if !issues.is_empty() {
            return status_of(&Error::Infeasible(issues.join("; ")));
        }
        let stream = SeedStream::new(seed);
        let forced = (samples > 0).then_some(samples);
        let est = match policy_estimate(h, &policy, forced, &stream, &Caps::default()) {
            Ok(e) => e,
            Err(e) => return status_of(&e),
        };
        let doc = json!({
            "value": est.mean,
            "std_error": est.std_error,
            "samples": est.samples,
            "exact": est.exact,
            "cost": policy.cost(&h.inst),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        string_out(out_json, s)
    })
}

/// Computes the exact adaptive and non-adaptive optima of a small instance
/// and returns the report as JSON.
///
/// # Safety
/// `handle` must be a live instance handle and `out_json` a valid pointer.
/// The returned string is released with [`adseed_string_free`].
#[no_mangle]
pub unsafe extern "C" fn adseed_oracle_json(
    handle: *const AdseedInstance,
    out_json: *mut *mut c_char,
) -> AdseedStatus {
    guarded(|| {
        let Some(h) = handle.as_ref() else {
            return null_status("handle");
        };
        if out_json.is_null() {
            return null_status("out_json");
        }
        match oracle_report(&h.inst, &h.objective, &Caps::default()) {
            Ok(report) => {
                let mut s =
                    serde_json::to_string_pretty(&report).expect("serializable");
                s.push('\n');
                string_out(out_json, s)
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Closed-form gap reference values. `family` is "na" (param = delta) or
/// "la" (param = integer m).
///
/// # Safety
/// `family` must be a NUL-terminated string and `out_json` a valid
/// pointer. The returned string is released with [`adseed_string_free`].
#[no_mangle]
pub unsafe extern "C" fn adseed_gap_reference(
    family: *const c_char,
    param: f64,
    out_json: *mut *mut c_char,
) -> AdseedStatus {
    guarded(|| {
        if out_json.is_null() {
            return null_status("out_json");
        }
        let fam = match str_in(family, "family") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let reference = match fam {
            "na" => gap_na_reference(param),
            "la" => {
                if param.fract() != 0.0 || !(2.0..=4.0e9).contains(&param) {
                    Err(Error::Input(format!(
                        "the la family takes an integer m >= 2, got {param}"
                    )))
                } else {
                    gap_la_reference(param as u32)
                }
            }
            other => Err(Error::Input(format!(
                "unknown gap family {other:?}; expected \"na\" or \"la\""
            ))),
        };
        match reference {
            Ok(r) => {
                let mut s = serde_json::to_string_pretty(&r).expect("serializable");
                s.push('\n');
                string_out(out_json, s)
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer obtained from an `out_json` parameter of
/// this library that has not been freed already.
#[no_mangle]
pub unsafe extern "C" fn adseed_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the most recent failure on the calling thread. The pointer
/// stays valid until the next failing call on the same thread. Empty when
/// nothing failed yet.
#[no_mangle]
pub extern "C" fn adseed_last_error_message() -> *const c_char {
    LAST_ERROR.with(|cell| cell.borrow().as_ptr())
}
