//! Acceptance suite. Prints one PASS/FAIL line per criterion (with
//! per-case detail lines underneath) and exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use dsvm_core::diagnostics::{check_monotone, consensus_residual, passivity_ledger, PassivityAccumulator, PassivityLedger};
use dsvm_core::integrator::{initial_state, run_flow, run_flow_from, run_flow_observed, FlowConfig, StopReason};
use dsvm_core::oracle::{central_kkt_residual, embed_consensus, solve_centralized};
use dsvm_core::problem::{kkt_residuals, objective_value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const OBJ_REL_TOL: f64 = 1e-2;
const KKT_TOL: f64 = 1e-3;
const CONSENSUS_TOL: f64 = 1e-3;
const MONOTONE_C: f64 = 10.0;
const GAP_ABS: f64 = 1e-3;
const GAP_REL: f64 = 1e-3;
const SWITCH_FREE_TOL: f64 = 1e-6;
const EMBED_FIELD_TOL: f64 = 1e-4;
const EMBED_DRIFT_TOL: f64 = 1e-4;
const EMBED_STEPS: u64 = 10_000;
const FD_POINTS: usize = 100;
const FD_REL_TOL: f64 = 1e-6;
const PROJECTION_STATES: usize = 1000;
const ORACLE_CERT_TOL: f64 = 1e-8;
const CASE_TIME_LIMIT_S: f64 = 60.0;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("[{}] {id} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

struct CaseRun {
    label: String,
    converged: bool,
    steps: u64,
    seconds: f64,
    rel_obj: f64,
    kkt: f64,
    consensus: f64,
    violations: usize,
    recorded: PassivityLedger,
    per_step: PassivityLedger,
    min_entry: f64,
    oracle_cert: f64,
    csv: String,
}

fn ledger_ok(l: &PassivityLedger) -> bool {
    l.h2.passes(GAP_ABS, GAP_REL) && l.h3.passes(GAP_ABS, GAP_REL)
}

fn run_case(case: &Case) -> CaseRun {
    let cfg = case.config();
    let (ds, problem) = cfg.build().expect("acceptance config builds");
    let sol = solve_centralized(&ds, case.c, case.nodes).expect("oracle solves");
    let flow = cfg.flow_config();

    let mut acc = PassivityAccumulator::new(&problem);
    let mut min_entry = f64::INFINITY;
    let started = Instant::now();
    let out = run_flow_observed(&problem, &flow, initial_state(&problem, flow.init), |_, t, s| {
        min_entry = min_entry.min(s.min_nonnegative_entry());
        acc.push(t, s).expect("ledger point");
    })
    .expect("flow runs");
    let seconds = started.elapsed().as_secs_f64();

    let obj = objective_value(&out.state, &problem).unwrap();
    CaseRun {
        label: case.label(),
        converged: out.stop == StopReason::Converged,
        steps: out.steps,
        seconds,
        rel_obj: (obj - sol.objective).abs() / sol.objective.abs().max(f64::MIN_POSITIVE),
        kkt: kkt_residuals(&out.state, &problem).unwrap().max_residual(),
        consensus: consensus_residual(&out.state, &problem).unwrap(),
        violations: check_monotone(&out.trace, flow.step_size, MONOTONE_C).len(),
        recorded: passivity_ledger(&out.trace, &problem).unwrap(),
        per_step: acc.finish(),
        min_entry,
        oracle_cert: sol.certificate.max(central_kkt_residual(&ds, &sol)),
        csv: out.trace.to_csv(),
    }
}

fn main() -> ExitCode {
    let mut rep = Report { failures: 0 };
    let cases = acceptance_cases();
    let runs: Vec<CaseRun> = cases.iter().map(run_case).collect();

    // 1. Oracle agreement.
    let mut ok1 = true;
    for r in &runs {
        let ok = r.converged && r.rel_obj <= OBJ_REL_TOL && r.kkt <= KKT_TOL && r.seconds < CASE_TIME_LIMIT_S;
        ok1 &= ok;
        println!(
            "    {}: {} steps={} rel_obj={:.1e} kkt={:.1e} {:.2}s{}",
            r.label,
            if r.converged { "Converged" } else { "MaxSteps" },
            r.steps,
            r.rel_obj,
            r.kkt,
            r.seconds,
            if ok { "" } else { "  <-- fails" }
        );
    }
    let worst_obj = runs.iter().map(|r| r.rel_obj).fold(0.0, f64::max);
    let worst_kkt = runs.iter().map(|r| r.kkt).fold(0.0, f64::max);
    let converged = runs.iter().filter(|r| r.converged).count();
    rep.line(
        "1",
        "oracle agreement",
        ok1,
        format!(
            "{converged}/{} converged; worst rel objective {worst_obj:.2e} (tol {OBJ_REL_TOL:e}), worst KKT {worst_kkt:.2e} (tol {KKT_TOL:e})",
            runs.len()
        ),
    );

    // 2. Consensus.
    let worst_cons = runs.iter().filter(|r| r.converged).map(|r| r.consensus).fold(0.0, f64::max);
    rep.line(
        "2",
        "consensus",
        worst_cons <= CONSENSUS_TOL,
        format!("worst consensus residual {worst_cons:.2e} (tol {CONSENSUS_TOL:e})"),
    );

    // 3. Lyapunov monotonicity.
    let violations: usize = runs.iter().map(|r| r.violations).sum();
    rep.line(
        "3",
        "Lyapunov monotonicity",
        violations == 0,
        format!("{violations} violations over {} traces (c = {MONOTONE_C})", runs.len()),
    );

    // 4. Passivity ledgers, on the recorded snapshots and on every step.
    let mut ok4 = true;
    let mut worst_sf: f64 = 0.0;
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    for r in &runs {
        let ok = ledger_ok(&r.recorded)
            && ledger_ok(&r.per_step)
            && r.per_step.h2_switch_free_max_gap <= SWITCH_FREE_TOL;
        ok4 &= ok;
        worst_sf = worst_sf.max(r.per_step.h2_switch_free_max_gap);
        for l in [&r.recorded, &r.per_step] {
            worst_gap = worst_gap.max(l.h2.gap).max(l.h3.gap);
        }
        println!(
            "    {}: recorded H2 {:.1e} H3 {:.1e}; per-step H2 {:.1e} H3 {:.1e}; switch-free H2 {:.1e} over {} segments{}",
            r.label,
            r.recorded.h2.gap,
            r.recorded.h3.gap,
            r.per_step.h2.gap,
            r.per_step.h3.gap,
            r.per_step.h2_switch_free_max_gap,
            r.per_step.switch_free_segments,
            if ok { "" } else { "  <-- fails" }
        );
    }
    rep.line(
        "4",
        "passivity ledgers",
        ok4,
        format!(
            "worst H2/H3 gap {worst_gap:.2e} (tol max({GAP_ABS:e}, {GAP_REL:e}|dS|)), worst switch-free H2 gap {worst_sf:.2e} (tol {SWITCH_FREE_TOL:e})"
        ),
    );

    // 5. Fixed-point verification.
    let mut ok5 = true;
    let mut worst_field: f64 = 0.0;
    let mut worst_drift: f64 = 0.0;
    for case in &cases {
        let (ds, problem) = case.config().build().unwrap();
        let sol = solve_centralized(&ds, case.c, case.nodes).unwrap();
        let star = match embed_consensus(&sol, &problem) {
            Ok(s) => s,
            Err(e) => {
                ok5 = false;
                println!("    {}: embedding failed: {e}", case.label());
                continue;
            }
        };
        let fnorm = field_norm(&star, &problem);
        let cfg = FlowConfig {
            max_steps: EMBED_STEPS,
            stop_tol: f64::MIN_POSITIVE,
            ..FlowConfig::default()
        };
        let mut drift: f64 = 0.0;
        run_flow_observed(&problem, &cfg, star.clone(), |_, _, s| {
            drift = drift.max(max_abs_diff(s, &star));
        })
        .unwrap();
        worst_field = worst_field.max(fnorm);
        worst_drift = worst_drift.max(drift);
        ok5 &= fnorm <= EMBED_FIELD_TOL && drift <= EMBED_DRIFT_TOL;
    }
    rep.line(
        "5",
        "fixed-point verification",
        ok5,
        format!(
            "worst embedded field {worst_field:.2e} (tol {EMBED_FIELD_TOL:e}), worst drift over {EMBED_STEPS} steps {worst_drift:.2e} (tol {EMBED_DRIFT_TOL:e})"
        ),
    );

    // 6. Gradient consistency.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_fd: f64 = 0.0;
    for _ in 0..FD_POINTS {
        let m = rng.gen_range(1..=4);
        let per_node = rng.gen_range(1..=3);
        let dim = rng.gen_range(1..=3);
        let problem = random_problem(&mut rng, m, per_node, dim);
        let state = random_state(&mut rng, &problem, 0.1);
        worst_fd = worst_fd.max(fd_gradient_error(&state, &problem, 1e-5));
    }
    rep.line(
        "6",
        "gradient consistency",
        worst_fd <= FD_REL_TOL,
        format!("worst relative error {worst_fd:.2e} over {FD_POINTS} interior points (tol {FD_REL_TOL:e})"),
    );

    // 7. Invariant suite.
    let worst_min = runs.iter().map(|r| r.min_entry).fold(f64::INFINITY, f64::min);
    let nonneg = worst_min >= 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut projection_err = None;
    for _ in 0..PROJECTION_STATES {
        let m = rng.gen_range(1..=4);
        let per_node = rng.gen_range(1..=3);
        let dim = rng.gen_range(1..=3);
        let problem = random_problem(&mut rng, m, per_node, dim);
        let state = random_boundary_state(&mut rng, &problem);
        if let Err(e) = projection_consistency(&state, &problem) {
            projection_err.get_or_insert(e);
        }
    }
    let mut laplacian_err = None;
    for m in 1..=6 {
        for _ in 0..20 {
            let g = random_connected_graph(&mut rng, m);
            let dim = rng.gen_range(1..=3);
            let probe: Vec<f64> = (0..m * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if let Err(e) = laplacian_properties(&g, &probe, dim) {
                laplacian_err.get_or_insert(e);
            }
        }
    }
    let worst_cert = runs.iter().map(|r| r.oracle_cert).fold(0.0, f64::max);
    rep.line(
        "7",
        "invariant suite",
        nonneg && projection_err.is_none() && laplacian_err.is_none() && worst_cert <= ORACLE_CERT_TOL,
        format!(
            "min ξ/θ/μ over every step {worst_min:.1e}; projection/switch consistency on {PROJECTION_STATES} states: {}; Laplacian properties on 120 graphs: {}; worst oracle certificate {worst_cert:.1e} (tol {ORACLE_CERT_TOL:e})",
            projection_err.as_deref().unwrap_or("ok"),
            laplacian_err.as_deref().unwrap_or("ok"),
        ),
    );

    // 8. Determinism.
    let mut identical = 0;
    for (case, first) in cases.iter().zip(&runs) {
        let cfg = case.config();
        let (_, problem) = cfg.build().unwrap();
        let again = run_flow(&problem, &cfg.flow_config()).unwrap().trace.to_csv();
        let from_init = run_flow_from(&problem, &cfg.flow_config(), initial_state(&problem, cfg.flow.init))
            .unwrap()
            .trace
            .to_csv();
        if again == first.csv && from_init == first.csv {
            identical += 1;
        }
    }
    rep.line(
        "8",
        "determinism",
        identical == cases.len(),
        format!("{identical}/{} reruns byte-identical", cases.len()),
    );

    if rep.failures == 0 {
        println!("acceptance: all 8 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria fail", rep.failures);
        ExitCode::FAILURE
    }
}
