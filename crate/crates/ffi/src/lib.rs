//! C ABI over the timeline graph and temporal-awareness routines.
//!
//! Graphs are opaque `TeGraph` handles created with `te_graph_new` or
//! `te_graph_from_standoff` and released with `te_graph_free`. Every fallible
//! call returns a `TeStatus`; on failure `te_last_error_message` describes
//! the most recent error on the calling thread. Strings returned by the
//! library are released with `te_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use timeline_eval::annotation::{parse_standoff, AnnotationError};
use timeline_eval::graph::{Event, EventId, GraphError, TimelineGraph};
use timeline_eval::metrics::{temporal_awareness_with, CoexMode};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    UnknownEvent = 3,
    DuplicateEvent = 4,
    SelfRelation = 5,
    CyclicGraph = 6,
    ParseError = 7,
    Panic = 8,
}

/// Opaque timeline graph.
pub struct TeGraph {
    inner: TimelineGraph,
}

/// Precision, recall and F1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(TeStatus, String);

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let status = match e {
            GraphError::UnknownEvent(_) => TeStatus::UnknownEvent,
            GraphError::DuplicateEvent(_) => TeStatus::DuplicateEvent,
            GraphError::SelfRelation(_) => TeStatus::SelfRelation,
            GraphError::CyclicGraph(_) => TeStatus::CyclicGraph,
        };
        Failure(status, e.to_string())
    }
}

impl From<AnnotationError> for Failure {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Graph(g) => g.into(),
            other => Failure(TeStatus::ParseError, other.to_string()),
        }
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TeStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TeStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn graph_ref<'a>(g: *const TeGraph, what: &str) -> Result<&'a TimelineGraph, Failure> {
    g.as_ref().map(|g| &g.inner).ok_or_else(|| null(what))
}

unsafe fn graph_mut<'a>(g: *mut TeGraph) -> Result<&'a mut TimelineGraph, Failure> {
    g.as_mut()
        .map(|g| &mut g.inner)
        .ok_or_else(|| null("graph"))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s)
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn te_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn te_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// New empty graph; release with `te_graph_free`.
#[no_mangle]
pub extern "C" fn te_graph_new() -> *mut TeGraph {
    Box::into_raw(Box::new(TeGraph {
        inner: TimelineGraph::default(),
    }))
}

/// # Safety
/// `graph` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn te_graph_free(graph: *mut TeGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Adds an event with a 1-based textual index.
///
/// # Safety
/// `graph` must be a live handle and `id` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn te_graph_add_event(
    graph: *mut TeGraph,
    id: *const c_char,
    index: usize,
) -> TeStatus {
    guard(|| {
        let id = text(id, "id")?;
        graph_mut(graph)?.add_event(Event::bare(id, index))?;
        Ok(())
    })
}

/// Adds a precedence edge: `before` starts before `after`.
///
/// # Safety
/// `graph` must be a live handle; the ids NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn te_graph_add_edge(
    graph: *mut TeGraph,
    before: *const c_char,
    after: *const c_char,
) -> TeStatus {
    guard(|| {
        let (b, a) = (text(before, "before")?, text(after, "after")?);
        graph_mut(graph)?.add_edge(EventId::new(b), EventId::new(a))?;
        Ok(())
    })
}

/// Adds a COEX link.
///
/// # Safety
/// `graph` must be a live handle; the ids NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn te_graph_add_coex(
    graph: *mut TeGraph,
    a: *const c_char,
    b: *const c_char,
) -> TeStatus {
    guard(|| {
        let (x, y) = (text(a, "a")?, text(b, "b")?);
        graph_mut(graph)?.add_coex(EventId::new(x), EventId::new(y))?;
        Ok(())
    })
}

/// Number of events, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn te_graph_event_count(graph: *const TeGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.len())
}

/// Sizes of the COEX-expanded transitive closure.
///
/// # Safety
/// `graph` must be a live handle; the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn te_graph_closure_sizes(
    graph: *const TeGraph,
    before_pairs: *mut usize,
    coex_pairs: *mut usize,
) -> TeStatus {
    guard(|| {
        let g = graph_ref(graph, "graph")?;
        if before_pairs.is_null() || coex_pairs.is_null() {
            return Err(null("output"));
        }
        let c = g.expanded_closure();
        *before_pairs = c.before_pairs.len();
        *coex_pairs = c.coex_pairs.len();
        Ok(())
    })
}

/// Longest-path layers as a JSON array of id arrays. The string is
/// released with `te_string_free`.
///
/// # Safety
/// `graph` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn te_graph_layering_json(
    graph: *const TeGraph,
    out: *mut *mut c_char,
) -> TeStatus {
    guard(|| {
        let g = graph_ref(graph, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let layers = g.layering()?;
        let ids: Vec<Vec<&str>> = layers
            .iter()
            .map(|l| l.iter().map(EventId::as_str).collect())
            .collect();
        let json =
            serde_json::to_string(&ids).map_err(|e| Failure(TeStatus::Panic, e.to_string()))?;
        *out = into_c_string(json);
        Ok(())
    })
}

/// Parses standoff annotations over `text` into a new graph.
///
/// # Safety
/// `annotation` and `text` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn te_graph_from_standoff(
    annotation: *const c_char,
    text_: *const c_char,
    out: *mut *mut TeGraph,
) -> TeStatus {
    guard(|| {
        let (ann, body) = (text(annotation, "annotation")?, text(text_, "text")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let parsed = parse_standoff(ann, body)?;
        *out = Box::into_raw(Box::new(TeGraph {
            inner: parsed.graph,
        }));
        Ok(())
    })
}

/// Temporal awareness of `pred` against `gold`; COEX pairs count when
/// `include_coex` is true.
///
/// # Safety
/// Both handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn te_temporal_awareness(
    gold: *const TeGraph,
    pred: *const TeGraph,
    include_coex: bool,
    out: *mut TeScore,
) -> TeStatus {
    guard(|| {
        let (g, p) = (graph_ref(gold, "gold")?, graph_ref(pred, "pred")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mode = if include_coex {
            CoexMode::Include
        } else {
            CoexMode::Exclude
        };
        let s = temporal_awareness_with(g, p, mode);
        *out = TeScore {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        };
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn te_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
