//! Projected primal-dual vector field.
//!
//! Primal variables descend the Lagrangian, dual variables ascend it, and
//! the sign-constrained variables ξ, θ, μ are kept in the nonnegative
//! orthant by the positive projection `[f]⁺_x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{
    lagrangian_gradient_into, NetworkState, Problem, ProblemError, StateDerivative,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Shape(#[from] ProblemError),
    #[error("sign-constrained variable {field}[{index}] is negative ({value})")]
    NegativeState {
        field: &'static str,
        index: usize,
        value: f64,
    },
}

/// `[f]⁺_x`: the drift `f` when `x > 0`, `max(0, f)` when `x = 0`.
pub fn positive_projection(x: f64, f: f64) -> Result<f64, DynamicsError> {
    if x < 0.0 {
        return Err(DynamicsError::NegativeState {
            field: "x",
            index: 0,
            value: x,
        });
    }
    Ok(project(x, f))
}

#[inline]
fn project(x: f64, f: f64) -> f64 {
    if x > 0.0 {
        f
    } else {
        f.max(0.0)
    }
}

/// Unprojected drift: `−∇L` for primal variables, `+∇L` for dual ones.
pub fn raw_field(state: &NetworkState, problem: &Problem) -> Result<StateDerivative, DynamicsError> {
    problem.check_shape(state)?;
    let mut out = StateDerivative::zeros(problem);
    raw_field_into(state, problem, &mut out);
    Ok(out)
}

pub(crate) fn raw_field_into(state: &NetworkState, problem: &Problem, out: &mut StateDerivative) {
    lagrangian_gradient_into(state, problem, out);
    for v in out.w.iter_mut().chain(out.b.iter_mut()).chain(out.xi.iter_mut()) {
        *v = -*v;
    }
}

fn check_sign(state: &NetworkState) -> Result<(), DynamicsError> {
    for (field, values) in [("xi", &state.xi), ("theta", &state.theta), ("mu", &state.mu)] {
        if let Some(index) = values.iter().position(|&v| v < 0.0) {
            return Err(DynamicsError::NegativeState {
                field,
                index,
                value: values[index],
            });
        }
    }
    Ok(())
}

/// Projected vector field at `state`.
pub fn vector_field(
    state: &NetworkState,
    problem: &Problem,
) -> Result<StateDerivative, DynamicsError> {
    problem.check_shape(state)?;
    check_sign(state)?;
    let mut out = StateDerivative::zeros(problem);
    vector_field_into(state, problem, &mut out);
    Ok(out)
}

/// Unchecked projected field; callers guarantee shapes and signs.
pub(crate) fn vector_field_into(
    state: &NetworkState,
    problem: &Problem,
    out: &mut StateDerivative,
) {
    raw_field_into(state, problem, out);
    for k in 0..state.xi.len() {
        out.xi[k] = project(state.xi[k], out.xi[k]);
        out.theta[k] = project(state.theta[k], out.theta[k]);
        out.mu[k] = project(state.mu[k], out.mu[k]);
    }
}

/// Per-node index sets (local sample positions) where a projection is
/// active: `σ` for θ, `ι` for μ, `ρ` for ξ.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SwitchSignals {
    pub sigma: Vec<Vec<usize>>,
    pub iota: Vec<Vec<usize>>,
    pub rho: Vec<Vec<usize>>,
}

impl SwitchSignals {
    pub fn total_active(&self) -> usize {
        [&self.sigma, &self.iota, &self.rho]
            .iter()
            .flat_map(|s| s.iter())
            .map(Vec::len)
            .sum()
    }
}

/// Active-projection sets: `i ∈ σ_j` iff `θ_ji = 0` and `h_ji ≤ 0`;
/// `i ∈ ι_j` iff `μ_ji = 0` and `−ξ_ji ≤ 0`; `i ∈ ρ_j` iff `ξ_ji = 0` and
/// `−mC + θ_ji + μ_ji ≤ 0`.
pub fn active_switch_sets(
    state: &NetworkState,
    problem: &Problem,
) -> Result<SwitchSignals, DynamicsError> {
    problem.check_shape(state)?;
    check_sign(state)?;
    let pen = problem.penalty();
    let m = problem.node_count();
    let mut sw = SwitchSignals {
        sigma: vec![Vec::new(); m],
        iota: vec![Vec::new(); m],
        rho: vec![Vec::new(); m],
    };
    for j in 0..m {
        for (i, k) in problem.node_samples(j).enumerate() {
            if state.theta[k] == 0.0 && problem.hinge(state, k) <= 0.0 {
                sw.sigma[j].push(i);
            }
            if state.mu[k] == 0.0 && -state.xi[k] <= 0.0 {
                sw.iota[j].push(i);
            }
            if state.xi[k] == 0.0 && -pen + state.theta[k] + state.mu[k] <= 0.0 {
                sw.rho[j].push(i);
            }
        }
    }
    Ok(sw)
}
