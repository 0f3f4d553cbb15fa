//! C ABI for the toolchain.
//!
//! Documents cross the boundary as NUL-terminated UTF-8 text. Parsed
//! policies and architectures are opaque handles owned by the caller and
//! released with their `_free` function; strings returned through out
//! parameters are released with [`dc_string_free`]. Every function returns a
//! [`DcStatus`]; on anything other than `Ok` or `Negative`, a description is
//! available from [`dc_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use datactl::arch::Architecture;
use datactl::compliance::{check_trace, render};
use datactl::dsl::{
    parse_arch_trace, parse_architecture, parse_has_query, parse_policy, parse_trace,
};
use datactl::dsl::{serialize_architecture, serialize_policy};
use datactl::logic::{deduce, render_derivation, LogicError};
use datactl::mapping::{derive_architecture, DeriveOptions};
use datactl::model::PolicyModel;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    /// Success; for checks, the positive answer (compliant, derivable).
    Ok = 0,
    /// The call succeeded and the answer is negative.
    Negative = 1,
    /// A null pointer or non-UTF-8 text was passed.
    InvalidArgument = 2,
    /// A document failed to parse.
    ParseError = 3,
    /// The input is well-formed but cannot be processed.
    Failed = 4,
    /// An internal error was contained at the boundary.
    Panic = 5,
}

/// A parsed policy document.
pub struct DcPolicy {
    model: PolicyModel,
}

/// A parsed or derived architecture.
pub struct DcArchitecture {
    arch: Architecture,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DcStatus, String);

type Outcome = Result<DcStatus, Failure>;

fn fail(status: DcStatus, msg: impl ToString) -> Failure {
    Failure(status, msg.to_string())
}

fn set_last_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Outcome) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            set_last_error(None);
            status
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(Some(msg));
            status
        }
        Err(_) => {
            set_last_error(Some("internal error".into()));
            DcStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(DcStatus::InvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or a live handle.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(DcStatus::InvalidArgument, format!("{what} is null")))
}

/// # Safety
/// `out` is null or valid for a write.
unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(DcStatus::InvalidArgument, "out pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// # Safety
/// `out` is null or valid for a write.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(DcStatus::InvalidArgument, "out pointer is null"));
    }
    *out = CString::new(s.replace('\0', " "))
        .unwrap_or_default()
        .into_raw();
    Ok(())
}

/// Message describing the last failed call on this thread, or null. Valid
/// until the next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn dc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string returned through an out parameter of this
/// library that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn dc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a policy document into a new handle.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dc_policy_parse(
    source: *const c_char,
    out: *mut *mut DcPolicy,
) -> DcStatus {
    guard(|| {
        let model = parse_policy(text(source, "policy text")?)
            .map_err(|e| fail(DcStatus::ParseError, e))?;
        put(out, DcPolicy { model })?;
        Ok(DcStatus::Ok)
    })
}

/// Release a policy handle. Null is ignored.
///
/// # Safety
/// `p` is null or a handle from [`dc_policy_parse`] not freed yet.
#[no_mangle]
pub unsafe extern "C" fn dc_policy_free(p: *mut DcPolicy) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Canonical text of a policy.
///
/// # Safety
/// `p` is a live handle; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dc_policy_serialize(
    p: *const DcPolicy,
    out: *mut *mut c_char,
) -> DcStatus {
    guard(|| {
        let p = handle(p, "policy")?;
        put_string(out, serialize_policy(&p.model))?;
        Ok(DcStatus::Ok)
    })
}

/// Check a trace against the policy. Returns `Ok` when compliant and
/// `Negative` when violations were found; the rendered report is written to
/// `report` when it is not null.
///
/// # Safety
/// `p` is a live handle; `trace` is a NUL-terminated string; `report` is
/// null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dc_check_trace(
    p: *const DcPolicy,
    trace: *const c_char,
    report: *mut *mut c_char,
) -> DcStatus {
    guard(|| {
        let p = handle(p, "policy")?;
        let events = parse_trace(text(trace, "trace text")?, &p.model)
            .map_err(|e| fail(DcStatus::ParseError, e))?;
        let r = check_trace(&p.model, &events).map_err(|e| fail(DcStatus::Failed, e))?;
        if !report.is_null() {
            put_string(report, render(&r))?;
        }
        Ok(if r.compliant {
            DcStatus::Ok
        } else {
            DcStatus::Negative
        })
    })
}

/// Derive the architecture of a set of (possibly template) events.
///
/// # Safety
/// `p` is a live handle; `events` is a NUL-terminated string; `out` is
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dc_derive_architecture(
    p: *const DcPolicy,
    events: *const c_char,
    simplify_friends: bool,
    out: *mut *mut DcArchitecture,
) -> DcStatus {
    guard(|| {
        let p = handle(p, "policy")?;
        let events = parse_trace(text(events, "events text")?, &p.model)
            .map_err(|e| fail(DcStatus::ParseError, e))?;
        let arch = derive_architecture(&p.model, &events, DeriveOptions { simplify_friends })
            .map_err(|e| fail(DcStatus::Failed, e))?;
        put(out, DcArchitecture { arch })?;
        Ok(DcStatus::Ok)
    })
}

/// Parse an architecture document into a new handle.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dc_arch_parse(
    source: *const c_char,
    out: *mut *mut DcArchitecture,
) -> DcStatus {
    guard(|| {
        let arch = parse_architecture(text(source, "architecture text")?)
            .map_err(|e| fail(DcStatus::ParseError, e))?;
        put(out, DcArchitecture { arch })?;
        Ok(DcStatus::Ok)
    })
}

/// Release an architecture handle. Null is ignored.
///
/// # Safety
/// `a` is null or a handle from this library not freed yet.
#[no_mangle]
pub unsafe extern "C" fn dc_arch_free(a: *mut DcArchitecture) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Canonical text of an architecture.
///
/// # Safety
/// `a` is a live handle; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dc_arch_serialize(
    a: *const DcArchitecture,
    out: *mut *mut c_char,
) -> DcStatus {
    guard(|| {
        let a = handle(a, "architecture")?;
        put_string(out, serialize_architecture(&a.arch))?;
        Ok(DcStatus::Ok)
    })
}

/// Decide a HAS query by deduction over the architecture and an optional
/// architecture trace (null for the empty trace). Returns `Ok` when
/// derivable and `Negative` otherwise; the rule tree is written to
/// `derivation` when it is not null.
///
/// # Safety
/// `a` is a live handle; `trace` is null or a NUL-terminated string;
/// `query` is a NUL-terminated string; `derivation` is null or valid for a
/// write.
#[no_mangle]
pub unsafe extern "C" fn dc_eval_has(
    a: *const DcArchitecture,
    trace: *const c_char,
    query: *const c_char,
    derivation: *mut *mut c_char,
) -> DcStatus {
    guard(|| {
        let a = handle(a, "architecture")?;
        let theta = if trace.is_null() {
            Vec::new()
        } else {
            parse_arch_trace(text(trace, "trace text")?)
                .map_err(|e| fail(DcStatus::ParseError, e))?
        };
        let phi = parse_has_query(text(query, "query text")?)
            .map_err(|e| fail(DcStatus::ParseError, e))?;
        let r = deduce(&a.arch, &theta, &phi).map_err(|e: LogicError| fail(DcStatus::Failed, e))?;
        if !derivation.is_null() {
            put_string(derivation, render_derivation(&r))?;
        }
        Ok(if r.derivable() {
            DcStatus::Ok
        } else {
            DcStatus::Negative
        })
    })
}
