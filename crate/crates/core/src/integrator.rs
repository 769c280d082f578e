//! Fixed-step integration of the projected flow.
//!
//! Each step is taken on the unconstrained drift and then every ξ, θ, μ
//! entry is clamped to `max(0, ·)`, so states stay exactly in the
//! nonnegative orthant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{consensus_residual, lyapunov_parts};
use crate::dynamics::{raw_field_into, vector_field, vector_field_into, DynamicsError};
use crate::problem::{kkt_residuals, objective_value, NetworkState, Problem, StateDerivative};
use crate::trace::{Trace, TraceRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("non-finite state after step {step}; the step size is too large")]
    NonFiniteState { step: u64 },
    #[error("invalid flow config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zeros,
    SeededRandom { scale: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub step_size: f64,
    pub max_steps: u64,
    pub stop_tol: f64,
    pub record_every: u64,
    pub method: Method,
    pub init: Init,
    /// Keep the full state on every recorded row.
    pub snapshots: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            max_steps: 2_000_000,
            stop_tol: 1e-6,
            record_every: 100,
            method: Method::Euler,
            init: Init::Zeros,
            snapshots: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |msg: String| Err(IntegratorError::InvalidConfig(msg));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size must be positive, got {}", self.step_size));
        }
        if !(self.stop_tol > 0.0 && self.stop_tol.is_finite()) {
            return bad(format!("stop_tol must be positive, got {}", self.stop_tol));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if let Init::SeededRandom { scale, .. } = self.init {
            if !(scale >= 0.0 && scale.is_finite()) {
                return bad(format!("init scale must be nonnegative, got {scale}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub state: NetworkState,
    pub trace: Trace,
    pub stop: StopReason,
    pub steps: u64,
    /// Sup-norm of the projected field at the final state.
    pub final_field_norm: f64,
}

pub fn initial_state(problem: &Problem, init: Init) -> NetworkState {
    let mut s = NetworkState::zeros(problem);
    if let Init::SeededRandom { scale, seed } = init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (idx, block) in s.blocks_mut().into_iter().enumerate() {
            let signed = !(2..=4).contains(&idx);
            for v in block.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = scale * if signed { z } else { z.abs() };
            }
        }
    }
    s
}

fn clamp_nonnegative(s: &mut NetworkState) {
    for v in s.xi.iter_mut().chain(s.theta.iter_mut()).chain(s.mu.iter_mut()) {
        *v = v.max(0.0);
    }
}

fn axpy_into(out: &mut NetworkState, base: &NetworkState, h: f64, dir: &StateDerivative) {
    for ((o, b), d) in out.blocks_mut().into_iter().zip(base.blocks()).zip(dir.blocks()) {
        for ((ov, bv), dv) in o.iter_mut().zip(b).zip(d) {
            *ov = bv + h * dv;
        }
    }
}

/// Scratch buffers so the stepping loop does not allocate.
struct Stepper {
    k: [StateDerivative; 4],
    stage: NetworkState,
}

impl Stepper {
    fn new(problem: &Problem) -> Self {
        Self {
            k: std::array::from_fn(|_| StateDerivative::zeros(problem)),
            stage: NetworkState::zeros(problem),
        }
    }

    /// Advances `state` in place. For Euler, `field` must already hold the
    /// projected field at `state`.
    fn advance(
        &mut self,
        state: &mut NetworkState,
        field: &StateDerivative,
        problem: &Problem,
        h: f64,
        method: Method,
    ) {
        match method {
            Method::Euler => {
                for (s, f) in state.blocks_mut().into_iter().zip(field.blocks()) {
                    for (sv, fv) in s.iter_mut().zip(f) {
                        *sv += h * fv;
                    }
                }
            }
            Method::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                raw_field_into(state, problem, k1);
                axpy_into(&mut self.stage, state, 0.5 * h, k1);
                clamp_nonnegative(&mut self.stage);
                raw_field_into(&self.stage, problem, k2);
                axpy_into(&mut self.stage, state, 0.5 * h, k2);
                clamp_nonnegative(&mut self.stage);
                raw_field_into(&self.stage, problem, k3);
                axpy_into(&mut self.stage, state, h, k3);
                clamp_nonnegative(&mut self.stage);
                raw_field_into(&self.stage, problem, k4);
                let blocks = state.blocks_mut();
                for (bi, s) in blocks.into_iter().enumerate() {
                    let (a, b, c, d) = (
                        k1.blocks()[bi],
                        k2.blocks()[bi],
                        k3.blocks()[bi],
                        k4.blocks()[bi],
                    );
                    for (i, sv) in s.iter_mut().enumerate() {
                        *sv += h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
                    }
                }
            }
        }
        clamp_nonnegative(state);
    }
}

/// One integration step from `state`.
pub fn step(
    state: &NetworkState,
    problem: &Problem,
    cfg: &FlowConfig,
) -> Result<NetworkState, IntegratorError> {
    cfg.validate()?;
    let field = vector_field(state, problem)?;
    let mut next = state.clone();
    Stepper::new(problem).advance(&mut next, &field, problem, cfg.step_size, cfg.method);
    if !next.is_finite() {
        return Err(IntegratorError::NonFiniteState { step: 1 });
    }
    Ok(next)
}

/// Builds the diagnostics row for `state` at step `step`.
pub fn record_row(
    state: &NetworkState,
    problem: &Problem,
    step: u64,
    t: f64,
    snapshot: bool,
) -> Result<TraceRow, IntegratorError> {
    let parts = lyapunov_parts(state, problem)?;
    let kkt = kkt_residuals(state, problem).map_err(DynamicsError::from)?;
    Ok(TraceRow {
        step,
        t,
        v: parts.total(),
        v_h1: parts.h1,
        v_h2: parts.h2,
        v_h3: parts.h3,
        consensus_residual: consensus_residual(state, problem)?,
        kkt_max_residual: kkt.max_residual(),
        objective: objective_value(state, problem).map_err(DynamicsError::from)?,
        snapshot: snapshot.then(|| state.clone()),
    })
}

/// Integrates from the configured initial state.
pub fn run_flow(problem: &Problem, cfg: &FlowConfig) -> Result<FlowOutcome, IntegratorError> {
    let init = initial_state(problem, cfg.init);
    run_flow_from(problem, cfg, init)
}

/// Integrates from `init` until the projected field's sup-norm drops to
/// `stop_tol` or `max_steps` steps have been taken.
pub fn run_flow_from(
    problem: &Problem,
    cfg: &FlowConfig,
    init: NetworkState,
) -> Result<FlowOutcome, IntegratorError> {
    run_flow_observed(problem, cfg, init, |_, _, _| {})
}

/// Like [`run_flow_from`], additionally calling `observe(step, t, state)`
/// on the initial state and after every step.
pub fn run_flow_observed<F>(
    problem: &Problem,
    cfg: &FlowConfig,
    init: NetworkState,
    mut observe: F,
) -> Result<FlowOutcome, IntegratorError>
where
    F: FnMut(u64, f64, &NetworkState),
{
    cfg.validate()?;
    // Checks shape and sign of the initial state.
    vector_field(&init, problem)?;

    let h = cfg.step_size;
    let mut state = init;
    let mut field = StateDerivative::zeros(problem);
    let mut stepper = Stepper::new(problem);
    let mut trace = Trace::default();
    trace
        .rows
        .push(record_row(&state, problem, 0, 0.0, cfg.snapshots)?);
    observe(0, 0.0, &state);

    let mut k: u64 = 0;
    let (stop, norm) = loop {
        vector_field_into(&state, problem, &mut field);
        let norm = field.sup_norm();
        if norm <= cfg.stop_tol {
            break (StopReason::Converged, norm);
        }
        if k >= cfg.max_steps {
            break (StopReason::MaxSteps, norm);
        }
        stepper.advance(&mut state, &field, problem, h, cfg.method);
        k += 1;
        if !state.is_finite() {
            return Err(IntegratorError::NonFiniteState { step: k });
        }
        observe(k, k as f64 * h, &state);
        if k % cfg.record_every == 0 {
            trace
                .rows
                .push(record_row(&state, problem, k, k as f64 * h, cfg.snapshots)?);
        }
    };
    if trace.rows.last().map(|r| r.step) != Some(k) {
        trace
            .rows
            .push(record_row(&state, problem, k, k as f64 * h, cfg.snapshots)?);
    }
    Ok(FlowOutcome {
        state,
        trace,
        stop,
        steps: k,
        final_field_norm: norm,
    })
}
