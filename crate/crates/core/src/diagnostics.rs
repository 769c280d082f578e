//! Numerical certificates for the flow.
//!
//! The network splits into three feedback-coupled subsystems:
//! H1 (primal `w, b`), H2 (consensus multipliers `α, β`) and H3 (slacks and
//! inequality multipliers `ξ, θ, μ`). Each gets a Krasovskii storage built
//! from the squared norm of its own time derivative; their sum `V` is the
//! Lyapunov function of the interconnection and should never increase
//! along a trajectory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{active_switch_sets, vector_field, DynamicsError, SwitchSignals};
use crate::problem::{NetworkState, Problem, StateDerivative};
use crate::trace::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("passivity ledger needs full state snapshots on every trace row")]
    MissingSnapshots,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn half_sq(values: &[f64]) -> f64 {
    0.5 * values.iter().map(|v| v * v).sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn storage_h1_from_field(field: &StateDerivative) -> f64 {
    half_sq(&field.w) + half_sq(&field.b)
}

pub fn storage_h2_from_field(field: &StateDerivative) -> f64 {
    half_sq(&field.alpha) + half_sq(&field.beta)
}

/// H3 storage; derivative entries on active projection sets are skipped.
pub fn storage_h3_from_field(
    field: &StateDerivative,
    switches: &SwitchSignals,
    problem: &Problem,
) -> f64 {
    let mut acc = 0.0;
    for j in 0..problem.node_count() {
        for (i, k) in problem.node_samples(j).enumerate() {
            if !switches.sigma[j].contains(&i) {
                acc += field.theta[k] * field.theta[k];
            }
            if !switches.iota[j].contains(&i) {
                acc += field.mu[k] * field.mu[k];
            }
            if !switches.rho[j].contains(&i) {
                acc += field.xi[k] * field.xi[k];
            }
        }
    }
    0.5 * acc
}

/// `½‖ẇ‖² + ½‖ḃ‖²`.
pub fn storage_h1(state: &NetworkState, problem: &Problem) -> Result<f64, DynamicsError> {
    Ok(storage_h1_from_field(&vector_field(state, problem)?))
}

/// `½‖α̇‖² + ½‖β̇‖²` with `α̇ = (L⊗I)w`, `β̇ = Lb`.
pub fn storage_h2(state: &NetworkState, problem: &Problem) -> Result<f64, DynamicsError> {
    Ok(storage_h2_from_field(&vector_field(state, problem)?))
}

pub fn storage_h3(state: &NetworkState, problem: &Problem) -> Result<f64, DynamicsError> {
    let field = vector_field(state, problem)?;
    let sw = active_switch_sets(state, problem)?;
    Ok(storage_h3_from_field(&field, &sw, problem))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LyapunovParts {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

impl LyapunovParts {
    pub fn total(&self) -> f64 {
        self.h1 + self.h2 + self.h3
    }
}

pub fn lyapunov_parts(state: &NetworkState, problem: &Problem) -> Result<LyapunovParts, DynamicsError> {
    let field = vector_field(state, problem)?;
    let sw = active_switch_sets(state, problem)?;
    Ok(LyapunovParts {
        h1: storage_h1_from_field(&field),
        h2: storage_h2_from_field(&field),
        h3: storage_h3_from_field(&field, &sw, problem),
    })
}

/// `V = V_H1 + V_H2 + V_H3`.
pub fn total_lyapunov(state: &NetworkState, problem: &Problem) -> Result<f64, DynamicsError> {
    Ok(lyapunov_parts(state, problem)?.total())
}

/// `max(‖(L⊗I)w‖∞, ‖Lb‖∞)`.
pub fn consensus_residual(state: &NetworkState, problem: &Problem) -> Result<f64, DynamicsError> {
    problem.check_shape(state)?;
    let g = problem.graph();
    let lw = g.laplacian_apply(&state.w, problem.dim()).expect("shape checked");
    let lb = g.laplacian_apply(&state.b, 1).expect("shape checked");
    Ok(lw.iter().chain(&lb).fold(0.0, |a: f64, v| a.max(v.abs())))
}

/// Default allowance constant for [`check_monotone`].
pub const DEFAULT_ALLOWANCE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneViolation {
    /// Time at the start of the offending record interval.
    pub t: f64,
    pub delta_v: f64,
    pub allowance: f64,
}

/// Flags consecutive rows where `V` grows by more than `c · h · Δt`.
pub fn check_monotone(trace: &Trace, step_size: f64, c: f64) -> Vec<MonotoneViolation> {
    trace
        .rows
        .windows(2)
        .filter_map(|pair| {
            let dv = pair[1].v - pair[0].v;
            let allowance = c * step_size * (pair[1].t - pair[0].t);
            (dv > allowance).then_some(MonotoneViolation {
                t: pair[0].t,
                delta_v: dv,
                allowance,
            })
        })
        .collect()
}

/// Storage change against integrated port power for one subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsystemLedger {
    pub storage_change: f64,
    pub port_integral: f64,
    /// `storage_change − port_integral`; passivity requires this ≤ 0 up to
    /// discretization error.
    pub gap: f64,
}

impl SubsystemLedger {
    fn add(&mut self, ds: f64, port: f64) {
        self.storage_change += ds;
        self.port_integral += port;
        self.gap = self.storage_change - self.port_integral;
    }

    /// Tolerance `max(abs, rel · |ΔS|)`.
    pub fn tolerance(&self, abs: f64, rel: f64) -> f64 {
        abs.max(rel * self.storage_change.abs())
    }

    pub fn passes(&self, abs: f64, rel: f64) -> bool {
        self.gap <= self.tolerance(abs, rel)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PassivityLedger {
    pub h1: SubsystemLedger,
    /// `∫ (−ẇᵀẇ − ẇᵀLẇ − ḃᵀLḃ) dt`, the output-strict dissipation of H1.
    pub h1_osp_surplus: f64,
    pub h2: SubsystemLedger,
    pub h3: SubsystemLedger,
    /// Largest H2 gap over maximal runs of record intervals in which no
    /// switching set changes.
    pub h2_switch_free_max_gap: f64,
    pub switch_free_segments: usize,
}

struct LedgerPoint {
    w: Vec<f64>,
    b: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    lw: Vec<f64>,
    lb: Vec<f64>,
    zeta: Vec<f64>,
    eta: Vec<f64>,
    parts: LyapunovParts,
    switches: SwitchSignals,
}

impl LedgerPoint {
    fn new(s: &NetworkState, problem: &Problem) -> Result<Self, DynamicsError> {
        let g = problem.graph();
        let d = problem.dim();
        Ok(Self {
            lw: g.laplacian_apply(&s.w, d).expect("shape checked by field"),
            lb: g.laplacian_apply(&s.b, 1).expect("shape checked by field"),
            zeta: s.zeta(problem),
            eta: s.eta(problem),
            parts: lyapunov_parts(s, problem)?,
            switches: active_switch_sets(s, problem)?,
            w: s.w.clone(),
            b: s.b.clone(),
            alpha: s.alpha.clone(),
            beta: s.beta.clone(),
        })
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    b.iter().zip(a).map(|(y, x)| y - x).collect()
}

/// Passivity bookkeeping over a snapshot trace.
///
/// Port signals: `u_H2 = (Lw, Lb)`, `y_H2 = (α, β)`; `u_H3 = (w, b)`,
/// `y_H3 = (ζ, η)`; for H1 the four inner products
/// `−ẇᵀLα̇ − ẇᵀζ̇ − ḃᵀLβ̇ − ḃᵀη̇`. Port derivatives are first-order
/// differences of consecutive snapshots, so on each record interval the
/// port power integrates to `Δyᵀ Δu / Δt`.
pub fn passivity_ledger(trace: &Trace, problem: &Problem) -> Result<PassivityLedger, DiagnosticsError> {
    if !trace.has_snapshots() {
        return Err(DiagnosticsError::MissingSnapshots);
    }
    let mut acc = PassivityAccumulator::new(problem);
    for r in &trace.rows {
        acc.push(r.t, r.snapshot.as_ref().expect("checked"))?;
    }
    Ok(acc.finish())
}

/// Streaming form of [`passivity_ledger`]: feed states in time order, e.g.
/// from a [`crate::integrator::run_flow_observed`] callback, without keeping
/// them.
pub struct PassivityAccumulator<'a> {
    problem: &'a Problem,
    prev: Option<(f64, LedgerPoint)>,
    ledger: PassivityLedger,
    segment_gap: Option<f64>,
}

impl<'a> PassivityAccumulator<'a> {
    pub fn new(problem: &'a Problem) -> Self {
        Self {
            problem,
            prev: None,
            ledger: PassivityLedger::default(),
            segment_gap: None,
        }
    }

    pub fn push(&mut self, t: f64, state: &NetworkState) -> Result<(), DiagnosticsError> {
        let p1 = LedgerPoint::new(state, self.problem)?;
        if let Some((t0, p0)) = self.prev.take() {
            self.interval(&p0, &p1, t - t0);
        }
        self.prev = Some((t, p1));
        Ok(())
    }

    fn interval(&mut self, p0: &LedgerPoint, p1: &LedgerPoint, dt: f64) {
        let g = self.problem.graph();
        let d = self.problem.dim();
        let dw = diff(&p0.w, &p1.w);
        let db = diff(&p0.b, &p1.b);
        let da = diff(&p0.alpha, &p1.alpha);
        let dbeta = diff(&p0.beta, &p1.beta);
        let dlw = diff(&p0.lw, &p1.lw);
        let dlb = diff(&p0.lb, &p1.lb);
        let dzeta = diff(&p0.zeta, &p1.zeta);
        let deta = diff(&p0.eta, &p1.eta);
        let l_da = g.laplacian_apply(&da, d).expect("same shape");
        let l_dbeta = g.laplacian_apply(&dbeta, 1).expect("same shape");

        let h2_port = (dot(&da, &dlw) + dot(&dbeta, &dlb)) / dt;
        let h3_port = (dot(&dzeta, &dw) + dot(&deta, &db)) / dt;
        let h1_port =
            -(dot(&dw, &l_da) + dot(&dw, &dzeta) + dot(&db, &l_dbeta) + dot(&db, &deta)) / dt;
        let surplus = -(dot(&dw, &dw) + dot(&dw, &dlw) + dot(&db, &dlb)) / dt;

        let ds2 = p1.parts.h2 - p0.parts.h2;
        self.ledger.h1.add(p1.parts.h1 - p0.parts.h1, h1_port);
        self.ledger.h2.add(ds2, h2_port);
        self.ledger.h3.add(p1.parts.h3 - p0.parts.h3, h3_port);
        self.ledger.h1_osp_surplus += surplus;

        if p0.switches == p1.switches {
            *self.segment_gap.get_or_insert(0.0) += ds2 - h2_port;
        } else {
            self.close_segment();
        }
    }

    fn close_segment(&mut self) {
        if let Some(gap) = self.segment_gap.take() {
            self.ledger.switch_free_segments += 1;
            self.ledger.h2_switch_free_max_gap = self.ledger.h2_switch_free_max_gap.max(gap);
        }
    }

    pub fn finish(mut self) -> PassivityLedger {
        self.close_segment();
        self.ledger
    }
}

/// Everything `check` reports about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub v: f64,
    pub v_h1: f64,
    pub v_h2: f64,
    pub v_h3: f64,
    pub lyapunov_violations: Vec<MonotoneViolation>,
    pub passivity: Option<PassivityLedger>,
    pub consensus_residual: f64,
    pub lambda2: f64,
    pub gain_bound: f64,
    pub passed: bool,
}

/// Tolerances applied when certifying a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateTolerances {
    pub allowance: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
}

impl Default for CertificateTolerances {
    fn default() -> Self {
        Self {
            allowance: DEFAULT_ALLOWANCE,
            gap_abs: 1e-3,
            gap_rel: 1e-3,
        }
    }
}

/// Certifies a recorded run: monotone `V`, and the H2/H3 passivity gaps
/// within tolerance when snapshots are present.
pub fn certify(
    trace: &Trace,
    problem: &Problem,
    step_size: f64,
    tol: CertificateTolerances,
) -> Result<CertificateReport, DiagnosticsError> {
    let last = trace.last().ok_or(DiagnosticsError::MissingSnapshots)?;
    let violations = check_monotone(trace, step_size, tol.allowance);
    let passivity = if trace.has_snapshots() {
        Some(passivity_ledger(trace, problem)?)
    } else {
        None
    };
    let gaps_ok = passivity.as_ref().map_or(true, |p| {
        p.h2.passes(tol.gap_abs, tol.gap_rel) && p.h3.passes(tol.gap_abs, tol.gap_rel)
    });
    let lambda2 = problem.graph().lambda2();
    Ok(CertificateReport {
        v: last.v,
        v_h1: last.v_h1,
        v_h2: last.v_h2,
        v_h3: last.v_h3,
        passed: violations.is_empty() && gaps_ok,
        lyapunov_violations: violations,
        passivity,
        consensus_residual: last.consensus_residual,
        lambda2,
        gain_bound: 2.0 * lambda2,
    })
}
