//! The distributed soft-margin SVM instance and its Lagrangian.
//!
//! Node `j` holds `w_j ∈ R^d`, `b_j` and, for each of its samples, a slack
//! `ξ_ji` with multipliers `θ_ji` (margin constraint) and `μ_ji` (slack
//! sign). `α_j`, `β_j` are the consensus multipliers. The Lagrangian is
//!
//! ```text
//! ½‖w‖² + mC Σ ξ + αᵀ(L⊗I)w + βᵀLb + Σ θ h − Σ μ ξ + ½ wᵀ(L⊗I)w + ½ bᵀLb
//! ```
//!
//! with `h_ji = 1 − ξ_ji − y_ji (w_j·x_ji + b_j)`. The two quadratic
//! Laplacian terms vanish at consensus.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::NodePartition;
use crate::graph::Graph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("partition has {partition} nodes but the graph has {graph}")]
    NodeCountMismatch { partition: usize, graph: usize },
    #[error("C must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("shape mismatch in {field}: expected {expected} entries, found {found}")]
    ShapeMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Problem {
    graph: Graph,
    partition: NodePartition,
    c: f64,
    dim: usize,
    /// Sample features, node-major, `dim` values per sample.
    x: Vec<f64>,
    y: Vec<f64>,
    /// `offsets[j]..offsets[j + 1]` are node `j`'s sample slots.
    offsets: Vec<usize>,
}

impl Problem {
    pub fn new(partition: NodePartition, graph: Graph, c: f64) -> Result<Self, ProblemError> {
        if partition.node_count() != graph.node_count() {
            return Err(ProblemError::NodeCountMismatch {
                partition: partition.node_count(),
                graph: graph.node_count(),
            });
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(ProblemError::InvalidC(c));
        }
        let dim = partition.dim();
        let mut x = Vec::with_capacity(partition.total() * dim);
        let mut y = Vec::with_capacity(partition.total());
        let mut offsets = vec![0];
        for j in 0..partition.node_count() {
            for s in partition.samples(j) {
                x.extend_from_slice(&s.x);
                y.push(s.y.sign());
            }
            offsets.push(y.len());
        }
        Ok(Self {
            graph,
            partition,
            c,
            dim,
            x,
            y,
            offsets,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn partition(&self) -> &NodePartition {
        &self.partition
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_count(&self) -> usize {
        self.y.len()
    }

    /// Slack weight `mC`, with `m` bound to the node count.
    pub fn penalty(&self) -> f64 {
        self.node_count() as f64 * self.c
    }

    /// Flat sample slots owned by node `j`.
    pub fn node_samples(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// Node owning flat sample slot `k`.
    pub fn owner(&self, k: usize) -> usize {
        self.offsets.partition_point(|&o| o <= k) - 1
    }

    pub fn features(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn label(&self, k: usize) -> f64 {
        self.y[k]
    }

    pub fn check_shape(&self, s: &NetworkState) -> Result<(), ProblemError> {
        let m = self.node_count();
        let n = self.sample_count();
        let d = self.dim;
        let expected = [m * d, m, n, n, n, m * d, m];
        for ((field, values), expected) in FIELD_NAMES.iter().zip(s.blocks()).zip(expected) {
            if values.len() != expected {
                return Err(ProblemError::ShapeMismatch {
                    field,
                    expected,
                    found: values.len(),
                });
            }
        }
        Ok(())
    }

    /// `h_k` for flat sample slot `k` at node state `(ξ_k, w_j, b_j)`.
    pub fn hinge(&self, s: &NetworkState, k: usize) -> f64 {
        let j = self.owner(k);
        let d = self.dim;
        hinge_constraint(s.xi[k], &s.w[j * d..(j + 1) * d], s.b[j], self.features(k), self.y[k])
    }
}

const FIELD_NAMES: [&str; 7] = ["w", "b", "xi", "theta", "mu", "alpha", "beta"];

macro_rules! block_fields {
    ($name:ident) => {
        impl $name {
            pub fn zeros(problem: &Problem) -> Self {
                let m = problem.node_count();
                let n = problem.sample_count();
                let d = problem.dim();
                Self {
                    w: vec![0.0; m * d],
                    b: vec![0.0; m],
                    xi: vec![0.0; n],
                    theta: vec![0.0; n],
                    mu: vec![0.0; n],
                    alpha: vec![0.0; m * d],
                    beta: vec![0.0; m],
                }
            }

            /// Fields in the fixed order `w, b, ξ, θ, μ, α, β`.
            pub fn blocks(&self) -> [&[f64]; 7] {
                [
                    &self.w, &self.b, &self.xi, &self.theta, &self.mu, &self.alpha, &self.beta,
                ]
            }

            pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 7] {
                [
                    &mut self.w,
                    &mut self.b,
                    &mut self.xi,
                    &mut self.theta,
                    &mut self.mu,
                    &mut self.alpha,
                    &mut self.beta,
                ]
            }

            pub fn sup_norm(&self) -> f64 {
                self.blocks()
                    .iter()
                    .flat_map(|b| b.iter())
                    .fold(0.0, |acc: f64, v| acc.max(v.abs()))
            }

            pub fn is_finite(&self) -> bool {
                self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
            }
        }
    };
}

/// Full primal-dual state of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Time derivative of a [`NetworkState`], same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDerivative {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

block_fields!(NetworkState);
block_fields!(StateDerivative);

impl NetworkState {
    pub fn w_block(&self, j: usize, dim: usize) -> &[f64] {
        &self.w[j * dim..(j + 1) * dim]
    }

    pub fn alpha_block(&self, j: usize, dim: usize) -> &[f64] {
        &self.alpha[j * dim..(j + 1) * dim]
    }

    /// `ζ_j = Σ_i θ_ji (−y_ji x_ji)` for every node, stacked.
    pub fn zeta(&self, problem: &Problem) -> Vec<f64> {
        let d = problem.dim();
        let mut out = vec![0.0; problem.node_count() * d];
        for j in 0..problem.node_count() {
            for k in problem.node_samples(j) {
                let coef = -self.theta[k] * problem.label(k);
                for (o, xv) in out[j * d..(j + 1) * d].iter_mut().zip(problem.features(k)) {
                    *o += coef * xv;
                }
            }
        }
        out
    }

    /// `η_j = Σ_i θ_ji (−y_ji)` per node.
    pub fn eta(&self, problem: &Problem) -> Vec<f64> {
        (0..problem.node_count())
            .map(|j| {
                problem
                    .node_samples(j)
                    .map(|k| -self.theta[k] * problem.label(k))
                    .sum()
            })
            .collect()
    }

    /// Minimum over all ξ, θ, μ entries (`+∞` when there are none).
    pub fn min_nonnegative_entry(&self) -> f64 {
        self.xi
            .iter()
            .chain(&self.theta)
            .chain(&self.mu)
            .fold(f64::INFINITY, |a, &v| a.min(v))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 − ξ − y (w·x + b)`; non-positive when the soft-margin constraint holds.
pub fn hinge_constraint(xi: f64, w: &[f64], b: f64, x: &[f64], y: f64) -> f64 {
    1.0 - xi - y * (dot(w, x) + b)
}

/// `½ Σ_j ‖w_j‖² + mC Σ ξ`.
pub fn objective_value(state: &NetworkState, problem: &Problem) -> Result<f64, ProblemError> {
    problem.check_shape(state)?;
    Ok(0.5 * dot(&state.w, &state.w) + problem.penalty() * state.xi.iter().sum::<f64>())
}

pub fn lagrangian_value(state: &NetworkState, problem: &Problem) -> Result<f64, ProblemError> {
    problem.check_shape(state)?;
    let g = problem.graph();
    let d = problem.dim();
    let lw = g.laplacian_apply(&state.w, d).expect("shape checked");
    let lb = g.laplacian_apply(&state.b, 1).expect("shape checked");

    let mut value = 0.5 * dot(&state.w, &state.w);
    value += problem.penalty() * state.xi.iter().sum::<f64>();
    value += dot(&state.alpha, &lw) + dot(&state.beta, &lb);
    for k in 0..problem.sample_count() {
        value += state.theta[k] * problem.hinge(state, k);
        value -= state.mu[k] * state.xi[k];
    }
    value += 0.5 * dot(&state.w, &lw) + 0.5 * dot(&state.b, &lb);
    Ok(value)
}

/// Raw gradient of the Lagrangian with respect to every variable, written
/// into `out` (shapes must already match).
pub(crate) fn lagrangian_gradient_into(
    state: &NetworkState,
    problem: &Problem,
    out: &mut StateDerivative,
) {
    let g = problem.graph();
    let d = problem.dim();
    let pen = problem.penalty();

    for j in 0..problem.node_count() {
        let wj = &state.w[j * d..(j + 1) * d];
        let aj = &state.alpha[j * d..(j + 1) * d];
        let gw = &mut out.w[j * d..(j + 1) * d];
        gw.copy_from_slice(wj);
        let mut gb = 0.0;

        // ζ_j, η_j
        for k in problem.node_samples(j) {
            let coef = -state.theta[k] * problem.label(k);
            for (o, xv) in gw.iter_mut().zip(problem.features(k)) {
                *o += coef * xv;
            }
            gb += coef;
        }

        // (Lα)_j + (Lw)_j, (Lβ)_j + (Lb)_j, and the α/β gradients (Lw)_j, (Lb)_j
        let ga = &mut out.alpha[j * d..(j + 1) * d];
        ga.iter_mut().for_each(|v| *v = 0.0);
        let mut lb = 0.0;
        for &l in g.neighbors(j) {
            let wl = &state.w[l * d..(l + 1) * d];
            let al = &state.alpha[l * d..(l + 1) * d];
            for i in 0..d {
                let dw = wj[i] - wl[i];
                ga[i] += dw;
                gw[i] += (aj[i] - al[i]) + dw;
            }
            let db = state.b[j] - state.b[l];
            lb += db;
            gb += (state.beta[j] - state.beta[l]) + db;
        }
        out.b[j] = gb;
        out.beta[j] = lb;
    }

    for k in 0..problem.sample_count() {
        out.xi[k] = pen - state.theta[k] - state.mu[k];
        out.theta[k] = problem.hinge(state, k);
        out.mu[k] = -state.xi[k];
    }
}

/// Raw gradient of the Lagrangian, all variables.
pub fn lagrangian_gradient(
    state: &NetworkState,
    problem: &Problem,
) -> Result<StateDerivative, ProblemError> {
    problem.check_shape(state)?;
    let mut out = StateDerivative::zeros(problem);
    lagrangian_gradient_into(state, problem, &mut out);
    Ok(out)
}

/// Residuals of the first-order optimality conditions; all fields are
/// non-negative and vanish exactly at a KKT point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity_residual: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub consensus: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity_residual
            .max(self.primal_infeasibility)
            .max(self.dual_infeasibility)
            .max(self.complementarity)
            .max(self.consensus)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

pub fn kkt_residuals(state: &NetworkState, problem: &Problem) -> Result<KktReport, ProblemError> {
    let grad = lagrangian_gradient(state, problem)?;
    let mut r = KktReport::default();

    r.stationarity_residual = grad
        .w
        .iter()
        .chain(&grad.b)
        .fold(0.0, |a: f64, v| a.max(v.abs()));
    // ξ sits on the bound ξ ≥ 0: only a negative gradient there is a violation.
    for (k, &gx) in grad.xi.iter().enumerate() {
        let res = if state.xi[k] > 0.0 { gx.abs() } else { (-gx).max(0.0) };
        r.stationarity_residual = r.stationarity_residual.max(res);
    }

    for k in 0..problem.sample_count() {
        let h = grad.theta[k];
        r.primal_infeasibility = r.primal_infeasibility.max(h).max(0.0 - state.xi[k]);
        r.dual_infeasibility = r
            .dual_infeasibility
            .max(0.0 - state.theta[k])
            .max(0.0 - state.mu[k]);
        r.complementarity = r
            .complementarity
            .max((state.theta[k] * h).abs())
            .max((state.xi[k] * state.mu[k]).abs());
    }

    let d = problem.dim();
    for &(a, b) in problem.graph().edges() {
        let wa = state.w_block(a, d);
        let wb = state.w_block(b, d);
        for i in 0..d {
            r.consensus = r.consensus.max((wa[i] - wb[i]).abs());
        }
        r.consensus = r.consensus.max((state.b[a] - state.b[b]).abs());
    }
    Ok(r)
}
