//! Distributed soft-margin SVM solved by a projected primal-dual gradient
//! flow over a graph of computing nodes.
//!
//! Each node holds a horizontal slice of the data and a local copy of the
//! classifier `(w_j, b_j)`; Laplacian coupling drives the copies to
//! consensus. The crate integrates the flow, checks the limit against an
//! exact centralized oracle, and evaluates the Krasovskii storage
//! functions and passivity balances of the three subsystems.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod dynamics;
pub mod graph;
pub mod integrator;
pub mod oracle;
pub mod problem;
pub mod trace;

pub use data::{gen_synthetic, partition, Dataset, Label, NodePartition, PartitionStrategy, Sample, SyntheticSpec};
pub use diagnostics::{
    certify, check_monotone, consensus_residual, passivity_ledger, storage_h1, storage_h2,
    storage_h3, total_lyapunov, CertificateReport, CertificateTolerances, PassivityAccumulator,
    PassivityLedger,
};
pub use dynamics::{active_switch_sets, positive_projection, raw_field, vector_field, SwitchSignals};
pub use graph::{Graph, Topology};
pub use integrator::{run_flow, run_flow_from, run_flow_observed, step, FlowConfig, FlowOutcome, Init, Method, StopReason};
pub use oracle::{embed_consensus, solve_centralized, CentralSolution};
pub use problem::{
    hinge_constraint, kkt_residuals, lagrangian_gradient, lagrangian_value, objective_value,
    KktReport, NetworkState, Problem, StateDerivative,
};
pub use trace::{Trace, TraceRow};
