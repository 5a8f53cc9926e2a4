//! C bindings. Every function is panic-safe: panics are caught at the
//! boundary and reported as `NETSYNC_ERR_PANIC`. Functions return a status
//! code; `netsync_last_error` returns a thread-local message for the most
//! recent failure on the calling thread. The matching declarations live in
//! `include/netsync.h`, which is maintained by hand and checked against the
//! exported symbols in the crate tests.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use netsync::circle::{
    hybrid_ml_refine, max_vertex_load, run_local_power, AmplitudePhaseState, CircleModel,
};
use netsync::gaussian::{self, NoiseModel};
use netsync::graph::Graph;
use netsync::incidence::IncidenceSet;
use netsync::io::GraphFile;
use netsync::Error;

pub const NETSYNC_OK: i32 = 0;
pub const NETSYNC_ERR_INVALID_INPUT: i32 = 1;
pub const NETSYNC_ERR_NUMERICAL: i32 = 2;
pub const NETSYNC_ERR_NULL_POINTER: i32 = 3;
pub const NETSYNC_ERR_UTF8: i32 = 4;
pub const NETSYNC_ERR_PANIC: i32 = 5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> i32 {
    match err {
        Error::Numerical(_)
        | Error::NonConvergence { .. }
        | Error::ZeroEigenvectorComponent(_) => NETSYNC_ERR_NUMERICAL,
        _ => NETSYNC_ERR_INVALID_INPUT,
    }
}

fn fail(err: &Error) -> i32 {
    set_last_error(&err.to_string());
    status_for(err)
}

fn null_arg(name: &str) -> i32 {
    set_last_error(&format!("null pointer argument `{name}`"));
    NETSYNC_ERR_NULL_POINTER
}

/// Runs `body` with panics converted to `NETSYNC_ERR_PANIC`.
fn guarded<F: FnOnce() -> i32>(body: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => {
            set_last_error("internal panic");
            NETSYNC_ERR_PANIC
        }
    }
}

/// Opaque graph handle.
pub struct NetsyncGraph {
    graph: Graph,
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn netsync_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parses a graph from its JSON form:
/// {"vertices": ["a", ...], "edges": [{"id": "e", "source": "a", "target": "b"}, ...]}.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid location; the
/// handle written to `out` must be released with `netsync_graph_free`.
#[no_mangle]
pub unsafe extern "C" fn netsync_graph_from_json(
    json: *const c_char,
    out: *mut *mut NetsyncGraph,
) -> i32 {
    guarded(|| {
        if json.is_null() {
            return null_arg("json");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_last_error("graph JSON is not valid UTF-8");
                return NETSYNC_ERR_UTF8;
            }
        };
        let file: GraphFile = match serde_json::from_str(text) {
            Ok(f) => f,
            Err(e) => {
                set_last_error(&format!("malformed graph JSON: {e}"));
                return NETSYNC_ERR_INVALID_INPUT;
            }
        };
        match file.into_graph() {
            Ok(graph) => {
                unsafe { *out = Box::into_raw(Box::new(NetsyncGraph { graph })) };
                NETSYNC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a graph handle. Accepts NULL.
///
/// # Safety
/// `g` must be NULL or a pointer returned by `netsync_graph_from_json` that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn netsync_graph_free(g: *mut NetsyncGraph) {
    if !g.is_null() {
        drop(unsafe { Box::from_raw(g) });
    }
}

/// Number of vertices; 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netsync_graph_vertex_count(g: *const NetsyncGraph) -> usize {
    if g.is_null() {
        return 0;
    }
    unsafe { &*g }.graph.vertex_count()
}

/// Number of edges; 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn netsync_graph_edge_count(g: *const NetsyncGraph) -> usize {
    if g.is_null() {
        return 0;
    }
    unsafe { &*g }.graph.edge_count()
}

/// Spanning-tree count. Writes the count and its natural log (negative
/// infinity when the graph is disconnected). Either output may be NULL.
///
/// # Safety
/// `g` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn netsync_graph_tree_count(
    g: *const NetsyncGraph,
    value: *mut f64,
    ln_value: *mut f64,
) -> i32 {
    guarded(|| {
        if g.is_null() {
            return null_arg("g");
        }
        let graph = &unsafe { &*g }.graph;
        let inc = match IncidenceSet::build(graph, 0) {
            Ok(inc) => inc,
            Err(e) => return fail(&e),
        };
        let count = inc.spanning_tree_count(graph);
        if !value.is_null() {
            unsafe { *value = count.value };
        }
        if !ln_value.is_null() {
            unsafe { *ln_value = count.ln };
        }
        NETSYNC_OK
    })
}

/// Maximum-likelihood vertex values from scalar Gaussian edge measurements
/// with equal variance `sigma2`. `r` holds one value per edge in graph edge
/// order; `out` receives one value per vertex, with `ref_vertex` pinned to 0.
///
/// # Safety
/// `g` must be a live handle, `r` must point to `r_len` doubles, and `out`
/// must have room for one double per vertex.
#[no_mangle]
pub unsafe extern "C" fn netsync_estimate_real_iid(
    g: *const NetsyncGraph,
    r: *const f64,
    r_len: usize,
    sigma2: f64,
    ref_vertex: usize,
    out: *mut f64,
) -> i32 {
    guarded(|| {
        if g.is_null() {
            return null_arg("g");
        }
        if r.is_null() {
            return null_arg("r");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let graph = &unsafe { &*g }.graph;
        if r_len != graph.edge_count() {
            set_last_error(&format!(
                "measurement length {r_len} != edge count {}",
                graph.edge_count()
            ));
            return NETSYNC_ERR_INVALID_INPUT;
        }
        let measurements = unsafe { std::slice::from_raw_parts(r, r_len) };
        let inc = match IncidenceSet::build(graph, ref_vertex) {
            Ok(inc) => inc,
            Err(e) => return fail(&e),
        };
        let r_mat = DMatrix::from_iterator(r_len, 1, measurements.iter().copied());
        match gaussian::ml_estimate(&inc, &r_mat, &NoiseModel::IidScalar { sigma2 }) {
            Ok(est) => {
                let sink = unsafe { std::slice::from_raw_parts_mut(out, graph.vertex_count()) };
                for (v, slot) in sink.iter_mut().enumerate() {
                    *slot = est.x_hat[(v, 0)];
                }
                NETSYNC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Phase estimate from circle-valued measurements under von Mises noise with
/// common concentration `kappa`. `angles` holds one radian value per edge in
/// graph edge order. Runs a randomized power-iteration start (seeded by
/// `seed`) followed by per-vertex likelihood refinement until the
/// stationarity defect falls below `tol` or `max_rounds` rounds elapse.
/// `out_angles` receives one radian value per vertex with `ref_vertex`
/// pinned to 0. If the refinement hits the round cap, the best state is
/// still written, `*converged` (when non-NULL) is set to 0, and the call
/// returns `NETSYNC_ERR_NUMERICAL`.
///
/// # Safety
/// `g` must be a live handle, `angles` must point to `angles_len` doubles,
/// and `out_angles` must have room for one double per vertex.
#[no_mangle]
pub unsafe extern "C" fn netsync_estimate_circle_hybrid(
    g: *const NetsyncGraph,
    angles: *const f64,
    angles_len: usize,
    kappa: f64,
    ref_vertex: usize,
    seed: u64,
    tol: f64,
    max_rounds: usize,
    out_angles: *mut f64,
    converged: *mut i32,
) -> i32 {
    guarded(|| {
        if g.is_null() {
            return null_arg("g");
        }
        if angles.is_null() {
            return null_arg("angles");
        }
        if out_angles.is_null() {
            return null_arg("out_angles");
        }
        let graph = &unsafe { &*g }.graph;
        let m = graph.edge_count();
        if angles_len != m {
            set_last_error(&format!("measurement length {angles_len} != edge count {m}"));
            return NETSYNC_ERR_INVALID_INPUT;
        }
        let n = graph.vertex_count();
        if ref_vertex >= n {
            set_last_error(&format!("reference vertex {ref_vertex} out of range (n = {n})"));
            return NETSYNC_ERR_INVALID_INPUT;
        }
        let raw = unsafe { std::slice::from_raw_parts(angles, angles_len) };
        let r: Vec<Complex64> = raw.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let model = CircleModel::common(kappa, m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = AmplitudePhaseState::random_init(n, &mut rng);
        let warm = match run_local_power(graph, &model, &r, init, kappa, tol, max_rounds.max(1)) {
            Ok(run) => run,
            Err(e) => return fail(&e),
        };
        let shift = match max_vertex_load(graph, &model) {
            Ok(shift) => shift,
            Err(e) => return fail(&e),
        };
        let budget = max_rounds.saturating_sub(warm.rounds).max(1);
        let run = match hybrid_ml_refine(graph, &model, &r, &warm.state.phases, shift, tol, budget)
        {
            Ok(run) => run,
            Err(e) => return fail(&e),
        };
        let anchor = run.phases[ref_vertex].conj();
        let sink = unsafe { std::slice::from_raw_parts_mut(out_angles, n) };
        for (v, slot) in sink.iter_mut().enumerate() {
            *slot = (run.phases[v] * anchor).arg();
        }
        if !converged.is_null() {
            unsafe { *converged = i32::from(run.converged) };
        }
        if run.converged {
            NETSYNC_OK
        } else {
            set_last_error(&format!(
                "refinement stopped after {} rounds with defect {:.3e}",
                run.rounds, run.report.max_defect
            ));
            NETSYNC_ERR_NUMERICAL
        }
    })
}
