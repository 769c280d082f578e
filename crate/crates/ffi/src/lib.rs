//! C ABI for `dsvm-core`.
//!
//! Every fallible call returns a [`DsvmStatus`]; on failure a description is
//! available from [`dsvm_last_error_message`] on the same thread. Handles are
//! opaque and must be released with the matching `*_free` function.
//! Strings returned by the library are freed with [`dsvm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dsvm_core::data::{partition, Dataset, Label, PartitionStrategy, Sample};
use dsvm_core::diagnostics::{consensus_residual, total_lyapunov};
use dsvm_core::integrator::{run_flow, FlowConfig, FlowOutcome, Method, StopReason};
use dsvm_core::problem::{kkt_residuals, objective_value, Problem};
use dsvm_core::{solve_centralized, Graph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsvmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GraphError = 3,
    DataError = 4,
    ProblemError = 5,
    IntegratorError = 6,
    OracleError = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsvmMethod {
    Euler = 0,
    Rk4 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsvmPartition {
    Contiguous = 0,
    RoundRobin = 1,
}

/// Integration settings. Obtain defaults from [`dsvm_flow_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsvmFlowOptions {
    pub step_size: f64,
    pub max_steps: u64,
    pub stop_tol: f64,
    pub record_every: u64,
    pub method: DsvmMethod,
}

/// Scalar results of a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsvmRunSummary {
    pub converged: bool,
    pub steps: u64,
    pub final_field_norm: f64,
    pub objective: f64,
    pub kkt_max_residual: f64,
    pub consensus_residual: f64,
    pub lyapunov: f64,
}

/// Distributed problem: partitioned data, graph and penalty.
pub struct DsvmProblem {
    dataset: Dataset,
    problem: Problem,
}

/// Outcome of [`dsvm_run_flow`].
pub struct DsvmRun {
    outcome: FlowOutcome,
    summary: DsvmRunSummary,
    dim: usize,
    nodes: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DsvmStatus, msg: impl Into<String>) -> DsvmStatus {
    set_error(msg.into());
    status
}

fn guard<F: FnOnce() -> DsvmStatus>(f: F) -> DsvmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(DsvmStatus::Panic, "internal panic"),
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dsvm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn dsvm_flow_options_default() -> DsvmFlowOptions {
    let d = FlowConfig::default();
    DsvmFlowOptions {
        step_size: d.step_size,
        max_steps: d.max_steps,
        stop_tol: d.stop_tol,
        record_every: d.record_every,
        method: DsvmMethod::Euler,
    }
}

/// Builds a problem from row-major `features` (`n_samples × dim`), labels in
/// {−1, +1}, and `n_edges` node pairs stored flat in `edges`.
///
/// # Safety
/// `features` must point to `n_samples * dim` doubles, `labels` to
/// `n_samples` doubles, `edges` to `2 * n_edges` values (may be NULL when
/// `n_edges` is 0), and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsvm_problem_new(
    features: *const f64,
    labels: *const f64,
    n_samples: usize,
    dim: usize,
    nodes: usize,
    edges: *const usize,
    n_edges: usize,
    strategy: DsvmPartition,
    c: f64,
    out: *mut *mut DsvmProblem,
) -> DsvmStatus {
    guard(|| {
        if out.is_null() || features.is_null() || labels.is_null() || (edges.is_null() && n_edges > 0) {
            return fail(DsvmStatus::NullPointer, "null pointer argument");
        }
        *out = ptr::null_mut();
        if dim == 0 || n_samples == 0 {
            return fail(DsvmStatus::InvalidArgument, "n_samples and dim must be positive");
        }
        let x = std::slice::from_raw_parts(features, n_samples * dim);
        let y = std::slice::from_raw_parts(labels, n_samples);
        let mut samples = Vec::with_capacity(n_samples);
        for (k, &label) in y.iter().enumerate() {
            let Some(label) = Label::from_value(label) else {
                return fail(DsvmStatus::DataError, format!("label {label} at sample {k} is not -1 or +1"));
            };
            samples.push(Sample {
                x: x[k * dim..(k + 1) * dim].to_vec(),
                y: label,
            });
        }
        let dataset = match Dataset::new(samples) {
            Ok(d) => d,
            Err(e) => return fail(DsvmStatus::DataError, e.to_string()),
        };
        let pairs: Vec<(usize, usize)> = if n_edges == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(edges, 2 * n_edges)
                .chunks_exact(2)
                .map(|p| (p[0], p[1]))
                .collect()
        };
        let graph = match Graph::new(nodes, &pairs) {
            Ok(g) => g,
            Err(e) => return fail(DsvmStatus::GraphError, e.to_string()),
        };
        let strategy = match strategy {
            DsvmPartition::Contiguous => PartitionStrategy::Contiguous,
            DsvmPartition::RoundRobin => PartitionStrategy::RoundRobin,
        };
        let parts = match partition(&dataset, nodes, strategy) {
            Ok(p) => p,
            Err(e) => return fail(DsvmStatus::DataError, e.to_string()),
        };
        let problem = match Problem::new(parts, graph, c) {
            Ok(p) => p,
            Err(e) => return fail(DsvmStatus::ProblemError, e.to_string()),
        };
        *out = Box::into_raw(Box::new(DsvmProblem { dataset, problem }));
        DsvmStatus::Ok
    })
}

/// # Safety
/// `problem` must come from [`dsvm_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsvm_problem_free(problem: *mut DsvmProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Algebraic connectivity of the problem's graph.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsvm_problem_lambda2(problem: *const DsvmProblem, out: *mut f64) -> DsvmStatus {
    guard(|| {
        let (Some(p), false) = (problem.as_ref(), out.is_null()) else {
            return fail(DsvmStatus::NullPointer, "null pointer argument");
        };
        *out = p.problem.graph().lambda2();
        DsvmStatus::Ok
    })
}

/// Integrates the flow from the zero state.
///
/// # Safety
/// `problem` must be a live handle, `options` readable (NULL selects the
/// defaults) and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsvm_run_flow(
    problem: *const DsvmProblem,
    options: *const DsvmFlowOptions,
    out: *mut *mut DsvmRun,
) -> DsvmStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return fail(DsvmStatus::NullPointer, "null problem handle");
        };
        if out.is_null() {
            return fail(DsvmStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let opts = options.as_ref().copied().unwrap_or_else(|| dsvm_flow_options_default());
        let cfg = FlowConfig {
            step_size: opts.step_size,
            max_steps: opts.max_steps,
            stop_tol: opts.stop_tol,
            record_every: opts.record_every,
            method: match opts.method {
                DsvmMethod::Euler => Method::Euler,
                DsvmMethod::Rk4 => Method::Rk4,
            },
            ..FlowConfig::default()
        };
        let outcome = match run_flow(&p.problem, &cfg) {
            Ok(o) => o,
            Err(e) => return fail(DsvmStatus::IntegratorError, e.to_string()),
        };
        let s = &outcome.state;
        let pr = &p.problem;
        let measured = (|| {
            Ok::<_, String>(DsvmRunSummary {
                converged: outcome.stop == StopReason::Converged,
                steps: outcome.steps,
                final_field_norm: outcome.final_field_norm,
                objective: objective_value(s, pr).map_err(|e| e.to_string())?,
                kkt_max_residual: kkt_residuals(s, pr).map_err(|e| e.to_string())?.max_residual(),
                consensus_residual: consensus_residual(s, pr).map_err(|e| e.to_string())?,
                lyapunov: total_lyapunov(s, pr).map_err(|e| e.to_string())?,
            })
        })();
        let summary = match measured {
            Ok(s) => s,
            Err(e) => return fail(DsvmStatus::IntegratorError, e),
        };
        *out = Box::into_raw(Box::new(DsvmRun {
            outcome,
            summary,
            dim: pr.dim(),
            nodes: pr.node_count(),
        }));
        DsvmStatus::Ok
    })
}

/// # Safety
/// `run` must come from [`dsvm_run_flow`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsvm_run_free(run: *mut DsvmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsvm_run_summary(run: *const DsvmRun, out: *mut DsvmRunSummary) -> DsvmStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(DsvmStatus::NullPointer, "null pointer argument");
        };
        *out = r.summary;
        DsvmStatus::Ok
    })
}

/// Copies node `node`'s final `w` (`w_len` must be at least the feature
/// dimension) and `b`.
///
/// # Safety
/// `run` must be a live handle, `w_out` writable for `w_len` doubles and
/// `b_out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsvm_run_node_weights(
    run: *const DsvmRun,
    node: usize,
    w_out: *mut f64,
    w_len: usize,
    b_out: *mut f64,
) -> DsvmStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(DsvmStatus::NullPointer, "null run handle");
        };
        if w_out.is_null() || b_out.is_null() {
            return fail(DsvmStatus::NullPointer, "null output pointer");
        }
        if node >= r.nodes {
            return fail(DsvmStatus::InvalidArgument, format!("node {node} out of range (nodes: {})", r.nodes));
        }
        if w_len < r.dim {
            return fail(DsvmStatus::BufferTooSmall, format!("w buffer holds {w_len}, need {}", r.dim));
        }
        let w = &r.outcome.state.w[node * r.dim..(node + 1) * r.dim];
        std::slice::from_raw_parts_mut(w_out, r.dim).copy_from_slice(w);
        *b_out = r.outcome.state.b[node];
        DsvmStatus::Ok
    })
}

/// The run's trace as CSV text. Free with [`dsvm_string_free`].
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsvm_run_trace_csv(run: *const DsvmRun, out: *mut *mut c_char) -> DsvmStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(DsvmStatus::NullPointer, "null pointer argument");
        };
        let csv = CString::new(r.outcome.trace.to_csv()).expect("csv has no nul bytes");
        *out = csv.into_raw();
        DsvmStatus::Ok
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsvm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Exact centralized solution on the problem's data, C and node count.
///
/// # Safety
/// `problem` must be a live handle, `w_out` writable for `w_len` doubles,
/// `b_out` and `objective_out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsvm_oracle_solve(
    problem: *const DsvmProblem,
    w_out: *mut f64,
    w_len: usize,
    b_out: *mut f64,
    objective_out: *mut f64,
) -> DsvmStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return fail(DsvmStatus::NullPointer, "null problem handle");
        };
        if w_out.is_null() || b_out.is_null() || objective_out.is_null() {
            return fail(DsvmStatus::NullPointer, "null output pointer");
        }
        let dim = p.problem.dim();
        if w_len < dim {
            return fail(DsvmStatus::BufferTooSmall, format!("w buffer holds {w_len}, need {dim}"));
        }
        let sol = match solve_centralized(&p.dataset, p.problem.c(), p.problem.node_count()) {
            Ok(s) => s,
            Err(e) => return fail(DsvmStatus::OracleError, e.to_string()),
        };
        std::slice::from_raw_parts_mut(w_out, dim).copy_from_slice(&sol.w);
        *b_out = sol.b;
        *objective_out = sol.objective;
        DsvmStatus::Ok
    })
}
