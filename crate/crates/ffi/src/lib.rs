//! C ABI over the pure parts of `mmdebate`: stance parsing, region lookup,
//! metrics, and the debate state machine behind an opaque handle.
//!
//! Structured values cross the boundary as UTF-8 JSON using the same field
//! names as the run artifacts. Every function returns an [`MmdStatus`]; on
//! failure [`mmd_last_error_message`] describes the problem. Strings handed
//! out by the library must be released with [`mmd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mmdebate::bench::{compute_metrics, creativity_ratio, ResultRecord};
use mmdebate::gateway::parse_stance;
use mmdebate::inquiry::{region_of, RegionTag};
use mmdebate::protocol::{self, DebateConfig, DebateState, ProbeItem, ProtocolError, Stance, StanceValue, Turn};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A JSON argument did not parse into the expected shape.
    InvalidJson = 3,
    /// An argument parsed but failed validation.
    InvalidArgument = 4,
    /// The debate state machine rejected the call.
    Protocol = 5,
    /// The judge answered neither Yes nor No.
    JudgeUndecided = 6,
    /// The debate has already been finalized.
    Finished = 7,
    /// An internal panic was caught at the boundary.
    Internal = 99,
}

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmdStance {
    No = 0,
    Yes = 1,
    Unsure = 2,
}

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmdRegion {
    Center = 0,
    TopLeft = 1,
    TopRight = 2,
    BottomLeft = 3,
    BottomRight = 4,
}

/// Opaque debate handle.
pub struct MmdDebate {
    state: DebateState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MmdStatus, String);

type FfiResult<T = ()> = Result<T, Failure>;

fn set_error(msg: Option<String>) {
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    });
}

fn guard(f: impl FnOnce() -> FfiResult) -> MmdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            MmdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            MmdStatus::Internal
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(MmdStatus::NullArgument, format!("{name} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(MmdStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn read_json<T: serde::de::DeserializeOwned>(p: *const c_char, name: &str) -> FfiResult<T> {
    serde_json::from_str(read_str(p, name)?).map_err(|e| Failure(MmdStatus::InvalidJson, format!("{name}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> FfiResult {
    if out.is_null() {
        return Err(null("out_json"));
    }
    let text = serde_json::to_string(value).map_err(|e| Failure(MmdStatus::Internal, e.to_string()))?;
    let c = CString::new(text).map_err(|e| Failure(MmdStatus::Internal, e.to_string()))?;
    out.write(c.into_raw());
    Ok(())
}

unsafe fn handle<'a>(h: *mut MmdDebate) -> FfiResult<&'a mut MmdDebate> {
    h.as_mut().ok_or_else(|| null("debate"))
}

fn protocol_failure(e: ProtocolError) -> Failure {
    let status = match e {
        ProtocolError::JudgeUndecided | ProtocolError::UndecidedFinalStance(_) => MmdStatus::JudgeUndecided,
        ProtocolError::Finished => MmdStatus::Finished,
        ProtocolError::Invalid(_) => MmdStatus::InvalidArgument,
        _ => MmdStatus::Protocol,
    };
    Failure(status, e.to_string())
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library on the same
/// thread.
#[no_mangle]
pub extern "C" fn mmd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mmd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Stance from the first sentence of a model reply.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmd_parse_stance(text: *const c_char, out: *mut MmdStance) -> MmdStatus {
    guard(|| {
        let stance = match parse_stance(read_str(text, "text")?).value {
            StanceValue::No => MmdStance::No,
            StanceValue::Yes => MmdStance::Yes,
            StanceValue::Unsure => MmdStance::Unsure,
        };
        write_out(out, stance, "out")
    })
}

/// Region of a normalized point; both coordinates must lie in [0, 1].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmd_region_of(cx: f64, cy: f64, out: *mut MmdRegion) -> MmdStatus {
    guard(|| {
        let tag = region_of(cx, cy).map_err(|e| Failure(MmdStatus::InvalidArgument, e.to_string()))?;
        let region = match tag {
            RegionTag::Center => MmdRegion::Center,
            RegionTag::TopLeft => MmdRegion::TopLeft,
            RegionTag::TopRight => MmdRegion::TopRight,
            RegionTag::BottomLeft => MmdRegion::BottomLeft,
            RegionTag::BottomRight => MmdRegion::BottomRight,
        };
        write_out(out, region, "out")
    })
}

/// Metrics report for a JSON array of result records.
///
/// # Safety
/// `results_json` must be a NUL-terminated string; `out_json` must be
/// writable. The returned string is owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn mmd_metrics_compute(results_json: *const c_char, out_json: *mut *mut c_char) -> MmdStatus {
    guard(|| {
        let records: Vec<ResultRecord> = read_json(results_json, "results_json")?;
        write_json(out_json, &compute_metrics(&records))
    })
}

/// Yes-ratio over POPE-C records as a percentage; NaN when nothing was
/// answered.
///
/// # Safety
/// `results_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmd_creativity_ratio(results_json: *const c_char, out: *mut f64) -> MmdStatus {
    guard(|| {
        let records: Vec<ResultRecord> = read_json(results_json, "results_json")?;
        let report = creativity_ratio(&records).map_err(|e| Failure(MmdStatus::InvalidArgument, e.to_string()))?;
        write_out(out, report.ratio.unwrap_or(f64::NAN), "out")
    })
}

/// Start a debate. `config_json` may be null for the default configuration.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable. Release
/// the handle with [`mmd_debate_free`].
#[no_mangle]
pub unsafe extern "C" fn mmd_debate_new(
    item_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut MmdDebate,
) -> MmdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let item: ProbeItem = read_json(item_json, "item_json")?;
        let config: DebateConfig = if config_json.is_null() {
            DebateConfig::default()
        } else {
            read_json(config_json, "config_json")?
        };
        let state = protocol::new_debate(item, config).map_err(protocol_failure)?;
        out.write(Box::into_raw(Box::new(MmdDebate { state })));
        Ok(())
    })
}

/// The next action as JSON, tagged by `kind`.
///
/// # Safety
/// `debate` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmd_debate_next_action(debate: *mut MmdDebate, out_json: *mut *mut c_char) -> MmdStatus {
    guard(|| {
        let d = handle(debate)?;
        let action = protocol::next_action(&d.state).map_err(protocol_failure)?;
        write_json(out_json, &action)
    })
}

/// Record one turn. The handle is unchanged when the turn is rejected.
///
/// # Safety
/// `debate` must be a live handle; `turn_json` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mmd_debate_apply_turn(debate: *mut MmdDebate, turn_json: *const c_char) -> MmdStatus {
    guard(|| {
        let d = handle(debate)?;
        let turn: Turn = read_json(turn_json, "turn_json")?;
        d.state = protocol::apply_turn(&d.state, turn).map_err(protocol_failure)?;
        Ok(())
    })
}

/// Nonzero once the debate has been finalized.
///
/// # Safety
/// `debate` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmd_debate_is_done(debate: *const MmdDebate) -> i32 {
    debate.as_ref().is_some_and(|d| d.state.is_done()) as i32
}

/// Finish the debate and write its outcome as JSON. `judge_stance_json` may
/// be null; it is only consulted when the judge's turn was not recorded.
/// Calling again returns the same outcome.
///
/// # Safety
/// `debate` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmd_debate_outcome(
    debate: *mut MmdDebate,
    judge_stance_json: *const c_char,
    out_json: *mut *mut c_char,
) -> MmdStatus {
    guard(|| {
        let d = handle(debate)?;
        let judge: Option<Stance> = if judge_stance_json.is_null() {
            None
        } else {
            Some(read_json(judge_stance_json, "judge_stance_json")?)
        };
        let outcome = protocol::finalize(&d.state, judge.as_ref()).map_err(protocol_failure)?;
        write_json(out_json, &outcome)?;
        d.state = protocol::close(&d.state, outcome);
        Ok(())
    })
}

/// Current state snapshot as JSON.
///
/// # Safety
/// `debate` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmd_debate_state(debate: *mut MmdDebate, out_json: *mut *mut c_char) -> MmdStatus {
    guard(|| write_json(out_json, &handle(debate)?.state))
}

/// Release a debate handle. Null is ignored.
///
/// # Safety
/// `debate` must be null or a handle from [`mmd_debate_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn mmd_debate_free(debate: *mut MmdDebate) {
    if !debate.is_null() {
        drop(Box::from_raw(debate));
    }
}
