#![allow(dead_code)]

use dsvm_core::config::{DataSource, RunConfig};
use dsvm_core::dynamics::{active_switch_sets, raw_field, vector_field};
use dsvm_core::integrator::{FlowConfig, Method};
use dsvm_core::problem::{lagrangian_value, NetworkState, Problem, StateDerivative};
use dsvm_core::{gen_synthetic, partition, Dataset, Graph, PartitionStrategy, SyntheticSpec, Topology};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub index: usize,
    pub n: usize,
    pub dim: usize,
    pub c: f64,
    pub topology: Topology,
    pub nodes: usize,
    pub seed: u64,
}

pub const CASE_SEPARATION: f64 = 4.0;

/// The twenty oracle-agreement cases: sizes, penalties and graphs cycle
/// through n ∈ {2,4,6}, d ∈ {1,2}, C ∈ {1,10} and P2/P3/K3.
pub fn acceptance_cases() -> Vec<Case> {
    (0..20)
        .map(|i| {
            let n = [2, 4, 6][i % 3];
            let (topology, nodes) = if n == 2 {
                (Topology::Path, 2)
            } else {
                [(Topology::Path, 2), (Topology::Path, 3), (Topology::Complete, 3)][i % 3]
            };
            Case {
                index: i,
                n,
                dim: 1 + (i / 3) % 2,
                c: [1.0, 10.0][(i / 6) % 2],
                topology,
                nodes,
                seed: 100 + i as u64,
            }
        })
        .collect()
}

impl Case {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_per_class: self.n / 2,
            dim: self.dim,
            separation: CASE_SEPARATION,
            seed: self.seed,
        }
    }

    pub fn config(&self) -> RunConfig {
        RunConfig {
            data: DataSource::Synthetic { synthetic: self.spec() },
            nodes: self.nodes,
            topology: Some(self.topology),
            edges: None,
            partition: PartitionStrategy::RoundRobin,
            c: self.c,
            flow: FlowConfig {
                method: Method::Rk4,
                snapshots: true,
                ..FlowConfig::default()
            },
            output: "unused".into(),
            snapshots: true,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "case {:2} (n={}, d={}, C={:>2}, {:?}{})",
            self.index, self.n, self.dim, self.c, self.topology, self.nodes
        )
    }
}

pub fn problem_from(ds: &Dataset, graph: Graph, strategy: PartitionStrategy, c: f64) -> Problem {
    let parts = partition(ds, graph.node_count(), strategy).unwrap();
    Problem::new(parts, graph, c).unwrap()
}

/// Random problem with `m` nodes on a path, `per_node` samples each.
pub fn random_problem(rng: &mut ChaCha8Rng, m: usize, per_node: usize, dim: usize) -> Problem {
    let spec = SyntheticSpec {
        n_per_class: (m * per_node).div_ceil(2),
        dim,
        separation: rng.gen_range(0.5..4.0),
        seed: rng.gen(),
    };
    let ds = gen_synthetic(spec).unwrap();
    let g = Graph::from_topology(Topology::Path, m).unwrap();
    problem_from(&ds, g, PartitionStrategy::RoundRobin, rng.gen_range(0.1..5.0))
}

/// State with free variables in `[-2, 2]` and nonnegative ones in
/// `[lo, lo + 2]`.
pub fn random_state(rng: &mut ChaCha8Rng, problem: &Problem, lo: f64) -> NetworkState {
    let mut s = NetworkState::zeros(problem);
    for v in s.w.iter_mut().chain(&mut s.b).chain(&mut s.alpha).chain(&mut s.beta) {
        *v = rng.gen_range(-2.0..2.0);
    }
    for v in s.xi.iter_mut().chain(&mut s.theta).chain(&mut s.mu) {
        *v = lo + rng.gen_range(0.0..2.0);
    }
    s
}

/// Boundary-heavy state: each multiplier or slack is exactly 0 with
/// probability one half.
pub fn random_boundary_state(rng: &mut ChaCha8Rng, problem: &Problem) -> NetworkState {
    let mut s = random_state(rng, problem, 0.0);
    for v in s.xi.iter_mut().chain(&mut s.theta).chain(&mut s.mu) {
        if rng.gen_bool(0.5) {
            *v = 0.0;
        }
    }
    s
}

/// Largest deviation between the analytic raw field and central
/// differences of the Lagrangian (descent in w, b, ξ; ascent in θ, μ, α, β),
/// relative to the field's sup-norm.
pub fn fd_gradient_error(state: &NetworkState, problem: &Problem, delta: f64) -> f64 {
    let field = raw_field(state, problem).unwrap();
    let signs = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
    let mut worst: f64 = 0.0;
    for (blk, sign) in signs.iter().enumerate() {
        let len = state.blocks()[blk].len();
        for i in 0..len {
            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.blocks_mut()[blk][i] += delta;
            minus.blocks_mut()[blk][i] -= delta;
            let fd = (lagrangian_value(&plus, problem).unwrap()
                - lagrangian_value(&minus, problem).unwrap())
                / (2.0 * delta);
            worst = worst.max((sign * fd - field.blocks()[blk][i]).abs());
        }
    }
    worst / field.sup_norm().max(f64::MIN_POSITIVE)
}

/// Checks that the projected field equals `[raw]⁺` entrywise and that the
/// switching sets are exactly the entries where the projection bites.
pub fn projection_consistency(state: &NetworkState, problem: &Problem) -> Result<(), String> {
    let raw = raw_field(state, problem).map_err(|e| e.to_string())?;
    let proj = vector_field(state, problem).map_err(|e| e.to_string())?;
    let sw = active_switch_sets(state, problem).map_err(|e| e.to_string())?;

    for blk in [0, 1, 5, 6] {
        if raw.blocks()[blk] != proj.blocks()[blk] {
            return Err(format!("free block {blk} was projected"));
        }
    }
    let check = |name: &str, x: &[f64], r: &[f64], p: &[f64], set: &[Vec<usize>]| -> Result<(), String> {
        for j in 0..problem.node_count() {
            for (i, k) in problem.node_samples(j).enumerate() {
                let expect = if x[k] > 0.0 { r[k] } else { r[k].max(0.0) };
                if p[k] != expect {
                    return Err(format!("{name}[{k}]: projected {} vs expected {expect}", p[k]));
                }
                let active = x[k] == 0.0 && r[k] <= 0.0;
                if set[j].contains(&i) != active {
                    return Err(format!("{name}[{k}]: switch membership disagrees"));
                }
                if active && p[k] != 0.0 {
                    return Err(format!("{name}[{k}]: active entry moves"));
                }
            }
        }
        Ok(())
    };
    check("theta", &state.theta, &raw.theta, &proj.theta, &sw.sigma)?;
    check("mu", &state.mu, &raw.mu, &proj.mu, &sw.iota)?;
    check("xi", &state.xi, &raw.xi, &proj.xi, &sw.rho)?;
    Ok(())
}

/// Symmetry, zero row sums, PSD spectrum, `λ2 > 0`, constants in the
/// kernel and agreement of the implicit product with the dense matrix.
pub fn laplacian_properties(g: &Graph, probe: &[f64], dim: usize) -> Result<(), String> {
    let m = g.node_count();
    let lap = g.laplacian();
    for r in 0..m {
        if lap[r].iter().sum::<i64>() != 0 {
            return Err(format!("row {r} does not sum to zero"));
        }
        for c in 0..m {
            if lap[r][c] != lap[c][r] {
                return Err("not symmetric".into());
            }
        }
    }
    let spec = g.laplacian_spectrum();
    if spec.iter().any(|&l| l < -1e-10) {
        return Err(format!("negative eigenvalue in {spec:?}"));
    }
    if m > 1 && g.lambda2() <= 1e-10 {
        return Err("connected graph with λ2 = 0".into());
    }
    let ones = vec![1.5; m * dim];
    if g.laplacian_apply(&ones, dim).unwrap().iter().any(|&v| v != 0.0) {
        return Err("constants not in the kernel".into());
    }
    let fast = g.laplacian_apply(probe, dim).unwrap();
    for j in 0..m {
        for k in 0..dim {
            let dense: f64 = (0..m).map(|l| lap[j][l] as f64 * probe[l * dim + k]).sum();
            if (dense - fast[j * dim + k]).abs() > 1e-12 * (1.0 + dense.abs()) {
                return Err(format!("implicit product differs at node {j}"));
            }
        }
    }
    Ok(())
}

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, m: usize) -> Graph {
    let mut edges = Vec::new();
    for v in 1..m {
        edges.push((rng.gen_range(0..v), v));
    }
    for a in 0..m {
        for b in a + 1..m {
            if !edges.contains(&(a, b)) && rng.gen_bool(0.3) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(m, &edges).unwrap()
}

pub fn max_abs_diff(a: &NetworkState, b: &NetworkState) -> f64 {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn field_norm(s: &NetworkState, problem: &Problem) -> f64 {
    let f: StateDerivative = vector_field(s, problem).unwrap();
    f.sup_norm()
}
