use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dsvm_core::config::{DataSource, RunConfig};
use dsvm_core::data::GENERATOR;
use dsvm_core::diagnostics::{certify, consensus_residual, total_lyapunov, CertificateReport, CertificateTolerances};
use dsvm_core::integrator::{run_flow, Method, StopReason};
use dsvm_core::problem::{kkt_residuals, objective_value, KktReport, NetworkState};
use dsvm_core::{gen_synthetic, solve_centralized, Dataset, SyntheticSpec, Trace};

#[derive(Parser)]
#[command(name = "dsvm", version, about = "Distributed SVM primal-dual flow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-blob synthetic dataset.
    GenData(GenDataArgs),
    /// Integrate the flow described by a JSON config.
    Run(RunArgs),
    /// Certify a run directory (Lyapunov monotonicity, passivity ledgers).
    Check(CheckArgs),
    /// Solve the centralized problem exactly.
    Oracle(OracleArgs),
    /// Print a run summary merged with its certificate.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Samples per class.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    sep: f64,
    #[arg(long)]
    seed: u64,
    /// CSV output; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    record_every: Option<u64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    snapshots: bool,
}

#[derive(Args)]
struct CheckArgs {
    dir: PathBuf,
    /// Lyapunov allowance constant.
    #[arg(long, default_value_t = 10.0)]
    allowance: f64,
    #[arg(long, default_value_t = 1e-3)]
    gap_abs: f64,
    #[arg(long, default_value_t = 1e-3)]
    gap_rel: f64,
}

#[derive(Args)]
struct OracleArgs {
    data: PathBuf,
    #[arg(long = "C", alias = "c")]
    c: f64,
    #[arg(long, default_value_t = 1)]
    nodes: usize,
    /// The CSV has a header row.
    #[arg(long)]
    header: bool,
    /// Write the solution here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "euler" => Ok(Method::Euler),
        "rk4" => Ok(Method::Rk4),
        _ => Err(format!("unknown method {s:?}, expected euler or rk4")),
    }
}

enum Failure {
    /// Non-convergence, failed certificate, solver errors.
    Domain(String),
    /// Bad flags, unreadable or invalid config.
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Domain(e.to_string())
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Sidecar {
    n_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
    generator: &'static str,
}

fn gen_data(args: GenDataArgs) -> Result<(), Failure> {
    let spec = SyntheticSpec {
        n_per_class: args.n,
        dim: args.dim,
        separation: args.sep,
        seed: args.seed,
    };
    let ds = gen_synthetic(spec).map_err(usage)?;
    write(&args.out, &ds.to_csv())?;
    let sidecar = Sidecar {
        n_per_class: args.n,
        dim: args.dim,
        separation: args.sep,
        seed: args.seed,
        generator: GENERATOR,
    };
    write(&args.out.with_extension("json"), &to_json(&sidecar))?;
    println!("wrote {} samples to {}", ds.len(), args.out.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Summary {
    stop_reason: StopReason,
    steps: u64,
    t_final: f64,
    final_field_norm: f64,
    objective: f64,
    kkt: KktReport,
    kkt_max_residual: f64,
    consensus_residual: f64,
    lyapunov: f64,
    lambda2: f64,
    gain_bound: f64,
    nodes: usize,
    samples: usize,
    dim: usize,
    #[serde(rename = "C")]
    c: f64,
    state: NetworkState,
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&args.config).map_err(usage)?;
    if let Some(out) = args.out {
        cfg.output = out;
    }
    if let Some(v) = args.max_steps {
        cfg.flow.max_steps = v;
    }
    if let Some(v) = args.step_size {
        cfg.flow.step_size = v;
    }
    if let Some(v) = args.stop_tol {
        cfg.flow.stop_tol = v;
    }
    if let Some(v) = args.record_every {
        cfg.flow.record_every = v;
    }
    if let Some(v) = args.method {
        cfg.flow.method = v;
    }
    if let Some(v) = args.c {
        cfg.c = v;
    }
    cfg.snapshots |= args.snapshots;

    let (dataset, problem) = cfg.build().map_err(usage)?;
    let flow = cfg.flow_config();
    let started = Instant::now();
    let outcome = run_flow(&problem, &flow).map_err(domain)?;
    let elapsed = started.elapsed();

    let state = &outcome.state;
    let kkt = kkt_residuals(state, &problem).map_err(domain)?;
    let graph = problem.graph();
    let summary = Summary {
        stop_reason: outcome.stop,
        steps: outcome.steps,
        t_final: outcome.steps as f64 * flow.step_size,
        final_field_norm: outcome.final_field_norm,
        objective: objective_value(state, &problem).map_err(domain)?,
        kkt_max_residual: kkt.max_residual(),
        kkt,
        consensus_residual: consensus_residual(state, &problem).map_err(domain)?,
        lyapunov: total_lyapunov(state, &problem).map_err(domain)?,
        lambda2: graph.lambda2(),
        gain_bound: graph.gain_bound(),
        nodes: problem.node_count(),
        samples: problem.sample_count(),
        dim: problem.dim(),
        c: problem.c(),
        state: state.clone(),
    };

    let dir = cfg.output.clone();
    fs::create_dir_all(&dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    let mut resolved = cfg.clone();
    resolved.data = DataSource::File {
        path: "data.csv".into(),
        header: false,
    };
    resolved.output = ".".into();
    write(&dir.join("data.csv"), &dataset.to_csv())?;
    write(&dir.join("config.json"), &to_json(&resolved))?;
    write(&dir.join("trace.csv"), &outcome.trace.to_csv())?;
    write(&dir.join("summary.json"), &to_json(&summary))?;
    let snap_path = dir.join("snapshots.json");
    match outcome.trace.snapshots_json() {
        Some(json) => write(&snap_path, &json)?,
        None if snap_path.exists() => {
            fs::remove_file(&snap_path).map_err(|e| usage(format!("cannot remove stale {}: {e}", snap_path.display())))?
        }
        None => {}
    }

    println!(
        "{:?} after {} steps: objective {:.6e}, kkt {:.3e}, consensus {:.3e}",
        summary.stop_reason, summary.steps, summary.objective, summary.kkt_max_residual, summary.consensus_residual
    );
    eprintln!("wall time {:.3} s", elapsed.as_secs_f64());
    match outcome.stop {
        StopReason::Converged => Ok(()),
        StopReason::MaxSteps => Err(Failure::Domain(format!(
            "did not converge within {} steps (field norm {:.3e})",
            outcome.steps, outcome.final_field_norm
        ))),
    }
}

fn certificate_text(rep: &CertificateReport) -> String {
    let mut s = String::new();
    let verdict = if rep.passed { "PASS" } else { "FAIL" };
    writeln!(s, "certificate: {verdict}").unwrap();
    writeln!(s, "  V = {:.3e} (H1 {:.3e}, H2 {:.3e}, H3 {:.3e})", rep.v, rep.v_h1, rep.v_h2, rep.v_h3).unwrap();
    writeln!(s, "  lyapunov violations: {}", rep.lyapunov_violations.len()).unwrap();
    match &rep.passivity {
        Some(p) => {
            writeln!(s, "  H1 gap {:.3e}, OSP surplus {:.3e}", p.h1.gap, p.h1_osp_surplus).unwrap();
            writeln!(s, "  H2 gap {:.3e} (dS {:.3e})", p.h2.gap, p.h2.storage_change).unwrap();
            writeln!(s, "  H3 gap {:.3e} (dS {:.3e})", p.h3.gap, p.h3.storage_change).unwrap();
            writeln!(
                s,
                "  H2 switch-free max gap {:.3e} over {} segments",
                p.h2_switch_free_max_gap, p.switch_free_segments
            )
            .unwrap();
        }
        None => writeln!(s, "  passivity ledger: skipped (no snapshots)").unwrap(),
    }
    writeln!(s, "  consensus residual {:.3e}", rep.consensus_residual).unwrap();
    writeln!(s, "  lambda2 {:.6}, gain bound {:.6}", rep.lambda2, rep.gain_bound).unwrap();
    s
}

fn check(args: CheckArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(&args.dir.join("config.json")).map_err(usage)?;
    let (_, problem) = cfg.build().map_err(usage)?;
    let mut trace = Trace::from_csv(&read(&args.dir.join("trace.csv"))?).map_err(domain)?;
    let snap_path = args.dir.join("snapshots.json");
    if snap_path.exists() {
        trace.attach_snapshots(&read(&snap_path)?).map_err(domain)?;
    }
    let tol = CertificateTolerances {
        allowance: args.allowance,
        gap_abs: args.gap_abs,
        gap_rel: args.gap_rel,
    };
    let rep = certify(&trace, &problem, cfg.flow.step_size, tol).map_err(domain)?;
    write(&args.dir.join("certificate.json"), &to_json(&rep))?;
    print!("{}", certificate_text(&rep));
    if rep.passed {
        Ok(())
    } else {
        Err(Failure::Domain("certificate failed".into()))
    }
}

fn oracle(args: OracleArgs) -> Result<(), Failure> {
    let ds = Dataset::load(&args.data, args.header).map_err(usage)?;
    let sol = solve_centralized(&ds, args.c, args.nodes).map_err(domain)?;
    let json = to_json(&sol);
    match args.out {
        Some(path) => write(&path, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let summary: Summary =
        serde_json::from_str(&read(&args.dir.join("summary.json"))?).map_err(usage)?;
    let mut s = String::new();
    writeln!(s, "run: {}", args.dir.display()).unwrap();
    writeln!(
        s,
        "  {} nodes, {} samples, dim {}, C = {}",
        summary.nodes, summary.samples, summary.dim, summary.c
    )
    .unwrap();
    writeln!(
        s,
        "  stop: {:?} after {} steps (t = {}), field norm {:.3e}",
        summary.stop_reason, summary.steps, summary.t_final, summary.final_field_norm
    )
    .unwrap();
    writeln!(s, "  objective {:.9e}", summary.objective).unwrap();
    writeln!(
        s,
        "  kkt: stationarity {:.3e}, primal {:.3e}, dual {:.3e}, complementarity {:.3e}, consensus {:.3e}",
        summary.kkt.stationarity_residual,
        summary.kkt.primal_infeasibility,
        summary.kkt.dual_infeasibility,
        summary.kkt.complementarity,
        summary.kkt.consensus
    )
    .unwrap();
    writeln!(s, "  V {:.3e}, gamma_H1 bound {:.6}", summary.lyapunov, summary.gain_bound).unwrap();
    let w0 = &summary.state.w[..summary.dim];
    writeln!(s, "  node 0: w = {:?}, b = {}", w0, summary.state.b[0]).unwrap();
    let cert_path = args.dir.join("certificate.json");
    if cert_path.exists() {
        let rep: CertificateReport = serde_json::from_str(&read(&cert_path)?).map_err(usage)?;
        s.push_str(&certificate_text(&rep));
    } else {
        writeln!(s, "certificate: not computed (run `dsvm check`)").unwrap();
    }
    match args.out {
        Some(path) => write(&path, &s),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Run(a) => run(a),
        Command::Check(a) => check(a),
        Command::Oracle(a) => oracle(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Domain(msg) | Failure::Usage(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
