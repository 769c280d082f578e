//! Exact centralized solver used as ground truth for the flow.
//!
//! Solves the consensus restriction of the distributed problem,
//!
//! ```text
//! min (m/2)‖w‖² + mC Σ ξ_i   s.t.  y_i (wᵀx_i + b) ≥ 1 − ξ_i,  ξ_i ≥ 0,
//! ```
//!
//! which is the distributed objective evaluated at `w_j = w`, `b_j = b`.
//! Its minimiser is the soft-margin SVM with slack weight `C`, and its
//! multipliers live on the distributed scale `0 ≤ θ_i ≤ mC`.
//!
//! Every sample is assigned one of three roles (inactive, on the margin,
//! at the multiplier bound); each assignment fixes a linear KKT system.
//! All `3^n` assignments are tried, so the solver is only meant for a
//! handful of samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::problem::{NetworkState, Problem};

/// Default sample cap for [`solve_centralized`].
pub const DEFAULT_MAX_SAMPLES: usize = 12;

const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle is limited to {cap} samples, dataset has {samples}")]
    OracleScaleExceeded { samples: usize, cap: usize },
    #[error("invalid oracle input: {0}")]
    InvalidInput(String),
    #[error("no active-set assignment produced a KKT point (internal error)")]
    InternalError,
    #[error("cannot embed solution: {0}")]
    EmbedFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralSolution {
    pub w: Vec<f64>,
    pub b: f64,
    pub xi: Vec<f64>,
    /// Margin multipliers, distributed scale (`0 ≤ θ ≤ mC`).
    pub theta: Vec<f64>,
    pub objective: f64,
    pub c: f64,
    pub nodes: usize,
    /// The bias is not unique; other optimal `b` exist.
    pub degenerate: bool,
    /// Largest KKT residual of the returned point.
    pub certificate: f64,
}

impl CentralSolution {
    pub fn penalty(&self) -> f64 {
        self.nodes as f64 * self.c
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Inactive,
    Margin,
    Bound,
}

struct Candidate {
    w: Vec<f64>,
    b: f64,
    theta: Vec<f64>,
    xi: Vec<f64>,
    objective: f64,
    b_free: bool,
}

struct Instance<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<f64>,
    gram: Vec<Vec<f64>>,
    /// Norm weight `m` and slack weight `mC`.
    scale: f64,
    pen: f64,
    dim: usize,
}

impl<'a> Instance<'a> {
    fn weights(&self, theta: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for (i, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                for (wk, xk) in w.iter_mut().zip(self.x[i]) {
                    *wk += t * self.y[i] * xk / self.scale;
                }
            }
        }
        w
    }

    fn margin(&self, w: &[f64], b: f64, i: usize) -> f64 {
        self.y[i] * (w.iter().zip(self.x[i]).map(|(a, c)| a * c).sum::<f64>() + b)
    }

    fn finish(&self, roles: &[Role], theta: Vec<f64>, b: f64, b_free: bool) -> Option<Candidate> {
        let n = roles.len();
        let w = self.weights(&theta);
        let mut xi = vec![0.0; n];
        for i in 0..n {
            let yf = self.margin(&w, b, i);
            let tol = FEAS_TOL * (1.0 + yf.abs());
            match roles[i] {
                Role::Inactive if yf < 1.0 - tol => return None,
                Role::Bound => {
                    if yf > 1.0 + tol {
                        return None;
                    }
                    xi[i] = (1.0 - yf).max(0.0);
                }
                _ => {}
            }
            if theta[i] < -FEAS_TOL * self.pen || theta[i] > self.pen * (1.0 + FEAS_TOL) {
                return None;
            }
        }
        let theta: Vec<f64> = theta.iter().map(|t| t.clamp(0.0, self.pen)).collect();
        let objective = 0.5 * self.scale * w.iter().map(|v| v * v).sum::<f64>()
            + self.pen * xi.iter().sum::<f64>();
        Some(Candidate {
            w,
            b,
            theta,
            xi,
            objective,
            b_free,
        })
    }

    fn solve(&self, roles: &[Role]) -> Option<Candidate> {
        let n = roles.len();
        let margin: Vec<usize> = (0..n).filter(|&i| roles[i] == Role::Margin).collect();
        let mut theta: Vec<f64> = roles
            .iter()
            .map(|r| if *r == Role::Bound { self.pen } else { 0.0 })
            .collect();
        let bound_balance: f64 = (0..n)
            .filter(|&i| roles[i] == Role::Bound)
            .map(|i| self.pen * self.y[i])
            .sum();

        if margin.is_empty() {
            if bound_balance.abs() > FEAS_TOL * (1.0 + self.pen) {
                return None;
            }
            // b is only constrained by the inequalities; pick the feasible
            // value of smallest magnitude.
            let w = self.weights(&theta);
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..n {
                let wx: f64 = w.iter().zip(self.x[i]).map(|(a, c)| a * c).sum();
                // Inactive: y(wx + b) ≥ 1; bound: y(wx + b) ≤ 1.
                let edge = self.y[i] * 1.0 - wx;
                let lower = (roles[i] == Role::Inactive) == (self.y[i] > 0.0);
                if lower {
                    lo = lo.max(edge);
                } else {
                    hi = hi.min(edge);
                }
            }
            if lo > hi + FEAS_TOL * (1.0 + lo.abs()) {
                return None;
            }
            let b = 0.0f64.clamp(lo.min(hi), hi.max(lo));
            return self.finish(roles, theta, b, hi - lo > FEAS_TOL);
        }

        // Unknowns (θ_B, b): margin rows, then Σ_B θ y = −Σ_V mC y.
        let k = margin.len();
        let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut rhs = DVector::<f64>::zeros(k + 1);
        for (r, &i) in margin.iter().enumerate() {
            for (c, &l) in margin.iter().enumerate() {
                a[(r, c)] = self.y[i] * self.y[l] * self.gram[i][l] / self.scale;
            }
            a[(r, k)] = self.y[i];
            let mut fixed = 0.0;
            for l in 0..n {
                if roles[l] == Role::Bound {
                    fixed += self.pen * self.y[l] * self.gram[i][l] / self.scale;
                }
            }
            rhs[r] = 1.0 - self.y[i] * fixed;
        }
        for (c, &l) in margin.iter().enumerate() {
            a[(k, c)] = self.y[l];
        }
        rhs[k] = -bound_balance;

        let svd = a.clone().svd(true, true);
        let sol = svd.solve(&rhs, 1e-12).ok()?;
        let resid = (&a * &sol - &rhs).amax();
        if resid > 1e-9 * (1.0 + rhs.amax()) {
            return None;
        }
        let rank_deficient = svd.rank(1e-12) < k + 1;
        for (c, &i) in margin.iter().enumerate() {
            theta[i] = sol[c];
        }
        self.finish(roles, theta, sol[k], rank_deficient)
    }
}

/// Largest KKT residual of a centralized point (stationarity, feasibility,
/// multiplier bounds, complementarity).
pub fn central_kkt_residual(dataset: &Dataset, sol: &CentralSolution) -> f64 {
    let scale = sol.nodes as f64;
    let pen = sol.penalty();
    let mut res: f64 = 0.0;
    let mut stat = sol.w.iter().map(|v| scale * v).collect::<Vec<_>>();
    let mut balance = 0.0;
    for (i, s) in dataset.samples().iter().enumerate() {
        let y = s.y.sign();
        let t = sol.theta[i];
        for (st, xv) in stat.iter_mut().zip(&s.x) {
            *st -= t * y * xv;
        }
        balance += t * y;
        let f: f64 = sol.w.iter().zip(&s.x).map(|(a, b)| a * b).sum::<f64>() + sol.b;
        let h = 1.0 - sol.xi[i] - y * f;
        let mu = pen - t;
        res = res
            .max(h)
            .max(-sol.xi[i])
            .max(-t)
            .max(-mu)
            .max((t * h).abs())
            .max((sol.xi[i] * mu).abs());
    }
    stat.iter().fold(res.max(balance.abs()), |a, v| a.max(v.abs()))
}

/// Exact solution of the consensus-restricted problem on `nodes` nodes with
/// trade-off `c`, for at most `max_samples` samples.
pub fn solve_centralized_capped(
    dataset: &Dataset,
    c: f64,
    nodes: usize,
    max_samples: usize,
) -> Result<CentralSolution, OracleError> {
    let n = dataset.len();
    if n > max_samples {
        return Err(OracleError::OracleScaleExceeded {
            samples: n,
            cap: max_samples,
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(OracleError::InvalidInput(format!("C must be positive, got {c}")));
    }
    if nodes == 0 {
        return Err(OracleError::InvalidInput("node count must be positive".into()));
    }
    let samples = dataset.samples();
    let x: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let gram = x
        .iter()
        .map(|a| x.iter().map(|b| a.iter().zip(*b).map(|(p, q)| p * q).sum()).collect())
        .collect();
    let inst = Instance {
        y: samples.iter().map(|s| s.y.sign()).collect(),
        x,
        gram,
        scale: nodes as f64,
        pen: nodes as f64 * c,
        dim: dataset.dim(),
    };

    let total = 3usize.pow(n as u32);
    let mut roles = vec![Role::Inactive; n];
    let mut candidates: Vec<Candidate> = Vec::new();
    for code in 0..total {
        let mut rest = code;
        for r in roles.iter_mut() {
            *r = match rest % 3 {
                0 => Role::Inactive,
                1 => Role::Margin,
                _ => Role::Bound,
            };
            rest /= 3;
        }
        if let Some(cand) = inst.solve(&roles) {
            candidates.push(cand);
        }
    }
    let best_obj = candidates
        .iter()
        .map(|c| c.objective)
        .fold(f64::INFINITY, f64::min);
    if !best_obj.is_finite() {
        return Err(OracleError::InternalError);
    }
    let near = |v: f64| v <= best_obj + 1e-9 * (1.0 + best_obj.abs());
    let norm = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let optimal: Vec<&Candidate> = candidates.iter().filter(|c| near(c.objective)).collect();
    // Ties: smallest ‖w‖, then smallest |b|, then enumeration order.
    let best = optimal
        .iter()
        .copied()
        .min_by(|p, q| {
            let key = |c: &Candidate| ((norm(&c.w) * 1e9).round(), c.b.abs());
            key(p).partial_cmp(&key(q)).expect("finite")
        })
        .expect("nonempty");
    let b_spread = optimal.iter().any(|c| (c.b - best.b).abs() > 1e-8);

    let mut sol = CentralSolution {
        w: best.w.clone(),
        b: best.b,
        xi: best.xi.clone(),
        theta: best.theta.clone(),
        objective: best.objective,
        c,
        nodes,
        degenerate: best.b_free || b_spread,
        certificate: 0.0,
    };
    sol.certificate = central_kkt_residual(dataset, &sol);
    Ok(sol)
}

pub fn solve_centralized(dataset: &Dataset, c: f64, nodes: usize) -> Result<CentralSolution, OracleError> {
    solve_centralized_capped(dataset, c, nodes, DEFAULT_MAX_SAMPLES)
}

/// Places the centralized optimum on every node and recovers consensus
/// multipliers `α, β` from per-node stationarity by least squares on the
/// Laplacian system.
pub fn embed_consensus(sol: &CentralSolution, problem: &Problem) -> Result<NetworkState, OracleError> {
    let fail = |msg: String| Err(OracleError::EmbedFailure(msg));
    let d = problem.dim();
    let m = problem.node_count();
    if sol.w.len() != d {
        return fail(format!("solution has {} features, problem has {d}", sol.w.len()));
    }
    if sol.theta.len() != problem.sample_count() || sol.xi.len() != problem.sample_count() {
        return fail(format!(
            "solution has {} samples, problem has {}",
            sol.theta.len(),
            problem.sample_count()
        ));
    }
    if sol.nodes != m || sol.c != problem.c() {
        return fail(format!(
            "solution was computed for m = {}, C = {} but the problem has m = {m}, C = {}",
            sol.nodes,
            sol.c,
            problem.c()
        ));
    }

    let pen = problem.penalty();
    let mut s = NetworkState::zeros(problem);
    for j in 0..m {
        s.w[j * d..(j + 1) * d].copy_from_slice(&sol.w);
        s.b[j] = sol.b;
        for (k, &idx) in problem.node_samples(j).zip(problem.partition().indices(j)) {
            s.xi[k] = sol.xi[idx];
            s.theta[k] = sol.theta[idx];
            let mu = pen - sol.theta[idx];
            if mu < -1e-9 * pen {
                return fail(format!("θ[{idx}] = {} exceeds mC = {pen}", sol.theta[idx]));
            }
            s.mu[k] = mu.max(0.0);
        }
    }

    // (Lα)_j = −w_j − ζ_j and (Lβ)_j = −η_j at consensus.
    let zeta = s.zeta(problem);
    let eta = s.eta(problem);
    let lap = problem.graph().laplacian_matrix();
    let pinv = lap
        .clone()
        .pseudo_inverse(1e-10)
        .map_err(|e| OracleError::EmbedFailure(e.to_string()))?;
    let mut worst: f64 = 0.0;
    let mut solve = |rhs: DVector<f64>| -> DVector<f64> {
        let sol = &pinv * &rhs;
        worst = worst.max((&lap * &sol - rhs).amax());
        sol
    };
    for i in 0..d {
        let rhs = DVector::from_fn(m, |j, _| -s.w[j * d + i] - zeta[j * d + i]);
        let a = solve(rhs);
        for j in 0..m {
            s.alpha[j * d + i] = a[j];
        }
    }
    let beta = solve(DVector::from_fn(m, |j, _| -eta[j]));
    s.beta.copy_from_slice(beta.as_slice());
    if worst > 1e-6 {
        return fail(format!("consensus multiplier system residual {worst:e} exceeds 1e-6"));
    }
    Ok(s)
}
