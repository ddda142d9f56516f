//! C ABI over `eerg-core`.
//!
//! Campaigns and graphs are opaque handles created by `eerg_*` constructors
//! and released with the matching `_free` function. Every fallible call
//! returns an [`EergStatus`]; on failure a message is available from
//! [`eerg_last_error_message`] on the same thread. Strings returned through
//! `char **` out-parameters are owned by the caller and released with
//! [`eerg_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};

use eerg_core::campaign::{campaign_stats, load_campaign_with, BoundingBox, Campaign, LoadError, LoadOptions};
use eerg_core::deficits::detect_all;
use eerg_core::eerg::Eerg;
use eerg_core::matching::{classify_campaign, ClassifyConfig, MatchConfig, MatchError, ResultClass};
use eerg_core::ontology::ChainMode;
use eerg_core::report::{to_dot, FindingsReport};
use eerg_core::synthesis::example_fixture;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EergStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Classification = 6,
    InvalidArgument = 7,
    Internal = 8,
}

/// A loaded, validated campaign.
pub struct EergCampaign {
    inner: Campaign,
}

/// A relation graph built from one campaign.
pub struct EergGraph {
    inner: Eerg,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EergCounts {
    pub r0: u64,
    pub r1: u64,
    pub r2: u64,
    pub r3: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EergStats {
    pub runs: u64,
    pub frames: u64,
    pub ground_truth: u64,
    pub predictions: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EergBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Error {
    status: EergStatus,
    message: String,
}

fn fail(status: EergStatus, message: impl Into<String>) -> Error {
    Error {
        status,
        message: message.into(),
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> EergStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EergStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.status
        }
        Err(_) => {
            set_last_error("internal error: panic inside eerg");
            EergStatus::Internal
        }
    }
}

fn load_error(e: LoadError) -> Error {
    let status = match &e {
        LoadError::Io { .. } => EergStatus::Io,
        LoadError::Parse { .. } => EergStatus::Parse,
        LoadError::Validation(_) => EergStatus::Validation,
    };
    fail(status, e.to_string())
}

fn match_error(e: MatchError) -> Error {
    let status = match e {
        MatchError::InvalidThreshold(_) | MatchError::InvalidConfidence(_) => EergStatus::InvalidArgument,
        _ => EergStatus::Classification,
    };
    fail(status, e.to_string())
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(fail(EergStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EergStatus::InvalidUtf8, "argument is not UTF-8"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Error> {
    p.as_ref()
        .ok_or_else(|| fail(EergStatus::NullPointer, format!("null {what}")))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Error> {
    if out.is_null() {
        return Err(fail(EergStatus::NullPointer, "null output pointer"));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> Result<*mut c_char, Error> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(EergStatus::Internal, "output contains a NUL byte"))
}

fn config(iou_threshold: f64, min_confidence: f64) -> Result<ClassifyConfig, Error> {
    let cfg = ClassifyConfig {
        matching: MatchConfig::new(iou_threshold).map_err(match_error)?,
        min_confidence,
        dedupe_per_run: false,
    };
    cfg.validate().map_err(match_error)?;
    Ok(cfg)
}

/// Loads and validates a campaign file. `permissive` registers unknown
/// entities instead of rejecting them.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_campaign_load(
    path: *const c_char,
    permissive: bool,
    out: *mut *mut EergCampaign,
) -> EergStatus {
    guard(|| {
        let path = text(path)?;
        let mode = if permissive { ChainMode::Permissive } else { ChainMode::Strict };
        let campaign = load_campaign_with(path, LoadOptions { mode }).map_err(load_error)?;
        write(out, Box::into_raw(Box::new(EergCampaign { inner: campaign })))
    })
}

/// The built-in two-identification fixture.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_campaign_example_fixture(out: *mut *mut EergCampaign) -> EergStatus {
    guard(|| write(out, Box::into_raw(Box::new(EergCampaign { inner: example_fixture() }))))
}

/// # Safety
/// `campaign` must come from an `eerg_campaign_*` constructor and not have
/// been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn eerg_campaign_free(campaign: *mut EergCampaign) {
    if !campaign.is_null() {
        drop(Box::from_raw(campaign));
    }
}

/// # Safety
/// `campaign` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_campaign_stats(campaign: *const EergCampaign, out: *mut EergStats) -> EergStatus {
    guard(|| {
        let c = deref(campaign, "campaign")?;
        let s = campaign_stats(&c.inner);
        write(
            out,
            EergStats {
                runs: s.runs as u64,
                frames: s.frames as u64,
                ground_truth: s.ground_truth as u64,
                predictions: s.predictions as u64,
            },
        )
    })
}

/// Total R0-R3 counts over the campaign.
///
/// # Safety
/// `campaign` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_evaluate(
    campaign: *const EergCampaign,
    iou_threshold: f64,
    min_confidence: f64,
    out: *mut EergCounts,
) -> EergStatus {
    guard(|| {
        let c = deref(campaign, "campaign")?;
        let cls = classify_campaign(&c.inner, &config(iou_threshold, min_confidence)?).map_err(match_error)?;
        let t = cls.totals();
        write(
            out,
            EergCounts {
                r0: t.get(ResultClass::R0),
                r1: t.get(ResultClass::R1),
                r2: t.get(ResultClass::R2),
                r3: t.get(ResultClass::R3),
            },
        )
    })
}

/// Classifies the campaign and aggregates the relation graph.
///
/// # Safety
/// `campaign` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_graph_build(
    campaign: *const EergCampaign,
    iou_threshold: f64,
    min_confidence: f64,
    out: *mut *mut EergGraph,
) -> EergStatus {
    guard(|| {
        let c = deref(campaign, "campaign")?;
        let cls = classify_campaign(&c.inner, &config(iou_threshold, min_confidence)?).map_err(match_error)?;
        let g = Eerg::from_classification(&cls).map_err(|e| fail(EergStatus::Validation, e.to_string()))?;
        write(out, Box::into_raw(Box::new(EergGraph { inner: g })))
    })
}

/// # Safety
/// `graph` must come from [`eerg_graph_build`] and not have been freed.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn eerg_graph_free(graph: *mut EergGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of distinct relation chains in the graph.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_graph_relation_count(graph: *const EergGraph, out: *mut usize) -> EergStatus {
    guard(|| write(out, deref(graph, "graph")?.inner.len()))
}

/// DOT rendering of the graph.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_graph_to_dot(graph: *const EergGraph, out: *mut *mut c_char) -> EergStatus {
    guard(|| write(out, owned_string(to_dot(&deref(graph, "graph")?.inner))?))
}

/// Line-oriented text dump of the graph.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_graph_to_text(graph: *const EergGraph, out: *mut *mut c_char) -> EergStatus {
    guard(|| write(out, owned_string(deref(graph, "graph")?.inner.to_text())?))
}

/// Findings report as JSON.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_findings_json(
    graph: *const EergGraph,
    min_support: u64,
    out: *mut *mut c_char,
) -> EergStatus {
    guard(|| {
        let g = &deref(graph, "graph")?.inner;
        let report = FindingsReport::new(min_support, detect_all(g, min_support));
        write(out, owned_string(report.to_json())?)
    })
}

/// Number of findings and of grouped hypotheses.
///
/// # Safety
/// `graph` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_findings_count(
    graph: *const EergGraph,
    min_support: u64,
    findings: *mut usize,
    hypotheses: *mut usize,
) -> EergStatus {
    guard(|| {
        let g = &deref(graph, "graph")?.inner;
        let report = FindingsReport::new(min_support, detect_all(g, min_support));
        write(findings, report.findings.len())?;
        write(hypotheses, report.hypotheses.len())
    })
}

/// Intersection over union of two boxes.
///
/// # Safety
/// `a` and `b` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eerg_iou(a: *const EergBox, b: *const EergBox, out: *mut f64) -> EergStatus {
    guard(|| {
        let to_box = |p: *const EergBox| -> Result<BoundingBox, Error> {
            let b = deref(p, "box")?;
            BoundingBox::new(b.x_min, b.y_min, b.x_max, b.y_max)
                .ok_or_else(|| fail(EergStatus::InvalidArgument, "box needs finite min < max on both axes"))
        };
        write(out, eerg_core::iou(&to_box(a)?, &to_box(b)?))
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn eerg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the most recent failed call on this thread, or an empty
/// string. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eerg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn eerg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
