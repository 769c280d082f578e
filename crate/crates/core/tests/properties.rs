mod common;

use dsvm_core::integrator::{step, FlowConfig, Method};
use dsvm_core::oracle::{central_kkt_residual, solve_centralized};
use dsvm_core::problem::{lagrangian_value, objective_value, NetworkState};
use dsvm_core::trace::{Trace, TraceRow};
use dsvm_core::{partition, run_flow, Dataset, Graph, Label, PartitionStrategy, Sample, Topology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=6).prop_flat_map(|m| {
        let parents: Vec<BoxedStrategy<usize>> = (1..m).map(|v| (0..v).boxed()).collect();
        let extra = proptest::collection::vec(any::<bool>(), m * m);
        (Just(m), parents, extra).prop_map(|(m, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents.into_iter().enumerate().map(|(i, p)| (p, i + 1)).collect();
            for a in 0..m {
                for b in a + 1..m {
                    if extra[a * m + b] && !edges.contains(&(a, b)) {
                        edges.push((a, b));
                    }
                }
            }
            (m, edges)
        })
    })
}

fn dataset_strategy(max_n: usize, max_dim: usize) -> impl Strategy<Value = Dataset> {
    (1..=max_dim, 2..=max_n).prop_flat_map(|(d, n)| {
        proptest::collection::vec((proptest::collection::vec(-3.0f64..3.0, d), any::<bool>()), n).prop_map(|rows| {
            let samples = rows
                .into_iter()
                .map(|(x, pos)| Sample {
                    x,
                    y: if pos { Label::Positive } else { Label::Negative },
                })
                .collect();
            Dataset::new(samples).unwrap()
        })
    })
}

/// `(m/2)w² + mC Σ max(0, 1 − y(wx + b))` for one feature.
fn consensus_objective(ds: &Dataset, w: f64, b: f64, c: f64, m: usize) -> f64 {
    let m = m as f64;
    let hinge: f64 = ds
        .samples()
        .iter()
        .map(|s| (1.0 - s.y.sign() * (w * s.x[0] + b)).max(0.0))
        .sum();
    0.5 * m * w * w + m * c * hinge
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn laplacian_properties_hold((m, edges) in graph_strategy(), dim in 1usize..=3, seed in any::<u64>()) {
        let g = Graph::new(m, &edges).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probe: Vec<f64> = (0..m * dim).map(|_| rand::Rng::gen_range(&mut rng, -3.0..3.0)).collect();
        prop_assert_eq!(laplacian_properties(&g, &probe, dim), Ok(()));
    }

    #[test]
    fn partition_is_a_balanced_split(ds in dataset_strategy(12, 2), m in 1usize..=4, rr in any::<bool>()) {
        prop_assume!(ds.len() >= m);
        let strategy = if rr { PartitionStrategy::RoundRobin } else { PartitionStrategy::Contiguous };
        let p = partition(&ds, m, strategy).unwrap();
        let mut all: Vec<usize> = (0..m).flat_map(|j| p.indices(j).to_vec()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        let counts = p.counts();
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        prop_assert!(counts.iter().all(|&c| c >= 1));
        for j in 0..m {
            for (s, &k) in p.samples(j).iter().zip(p.indices(j)) {
                prop_assert_eq!(s, &ds.samples()[k]);
            }
        }
    }

    #[test]
    fn dataset_csv_round_trips(ds in dataset_strategy(8, 3)) {
        prop_assert_eq!(Dataset::parse_csv(&ds.to_csv(), false).unwrap(), ds);
    }

    #[test]
    fn oracle_beats_a_grid(ds in dataset_strategy(4, 1), c in 0.1f64..5.0, m in 1usize..=3) {
        prop_assume!(ds.has_both_classes());
        let sol = solve_centralized(&ds, c, m).unwrap();
        prop_assert!(sol.certificate <= 1e-8);
        prop_assert!(central_kkt_residual(&ds, &sol) <= 1e-8);
        let at_sol = consensus_objective(&ds, sol.w[0], sol.b, c, m);
        prop_assert!((at_sol - sol.objective).abs() <= 1e-9 * (1.0 + at_sol));
        let mut best = f64::INFINITY;
        for i in 0..=200 {
            for k in 0..=200 {
                let w = -5.0 + 0.05 * i as f64;
                let b = -5.0 + 0.05 * k as f64;
                best = best.min(consensus_objective(&ds, w, b, c, m));
            }
        }
        prop_assert!(sol.objective <= best + 1e-9, "oracle {} vs grid {}", sol.objective, best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn field_matches_lagrangian_differences(seed in any::<u64>(), m in 1usize..=4, per in 1usize..=3, dim in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, m, per, dim);
        let state = random_state(&mut rng, &problem, 0.1);
        let err = fd_gradient_error(&state, &problem, 1e-5);
        prop_assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn lagrangian_is_objective_at_consensus(seed in any::<u64>(), m in 1usize..=4, per in 1usize..=3, dim in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, m, per, dim);
        let mut s = random_state(&mut rng, &problem, 0.0);
        let (w0, b0) = (s.w[..dim].to_vec(), s.b[0]);
        for j in 0..m {
            s.w[j * dim..(j + 1) * dim].copy_from_slice(&w0);
            s.b[j] = b0;
        }
        s.theta.iter_mut().for_each(|v| *v = 0.0);
        s.mu.iter_mut().for_each(|v| *v = 0.0);
        let l = lagrangian_value(&s, &problem).unwrap();
        let f = objective_value(&s, &problem).unwrap();
        prop_assert!((l - f).abs() <= 1e-12 * (1.0 + f.abs()), "{l} vs {f}");
    }

    #[test]
    fn euler_local_error_is_second_order(seed in any::<u64>(), m in 1usize..=3, dim in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, m, 2, dim);
        // Far from the bounds so no clamp fires within one step.
        let s = random_state(&mut rng, &problem, 50.0);
        let exact = |h: f64| {
            let cfg = FlowConfig { step_size: h / 256.0, method: Method::Rk4, ..FlowConfig::default() };
            (0..256).fold(s.clone(), |acc, _| step(&acc, &problem, &cfg).unwrap())
        };
        let euler = |h: f64| step(&s, &problem, &FlowConfig { step_size: h, ..FlowConfig::default() }).unwrap();
        let h = 1e-2;
        let e1 = max_abs_diff(&euler(h), &exact(h));
        let e2 = max_abs_diff(&euler(h / 2.0), &exact(h / 2.0));
        prop_assume!(e2 > 1e-13);
        let order = (e1 / e2).log2();
        prop_assert!((1.5..=2.5).contains(&order), "observed order {order}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_matches_switch_sets(seed in any::<u64>(), m in 1usize..=4, per in 1usize..=3, dim in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, m, per, dim);
        let state = random_boundary_state(&mut rng, &problem);
        prop_assert_eq!(projection_consistency(&state, &problem), Ok(()));
    }

    #[test]
    fn steps_keep_multipliers_nonnegative(seed in any::<u64>(), h in 1e-3f64..0.5, rk4 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, 2, 2, 2);
        let state = random_boundary_state(&mut rng, &problem);
        let cfg = FlowConfig { step_size: h, method: if rk4 { Method::Rk4 } else { Method::Euler }, ..FlowConfig::default() };
        let next = step(&state, &problem, &cfg).unwrap();
        prop_assert!(next.min_nonnegative_entry() >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn trace_csv_round_trips(values in proptest::collection::vec(proptest::num::f64::NORMAL, 1..40)) {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| TraceRow {
                step: i as u64 * 10,
                t: i as f64 * 0.01,
                v,
                v_h1: v / 3.0,
                v_h2: -v,
                v_h3: v * 7.0,
                consensus_residual: v.abs(),
                kkt_max_residual: 0.1 * v,
                objective: v + 1.0,
                snapshot: None,
            })
            .collect();
        let t = Trace { rows };
        prop_assert_eq!(Trace::from_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), rk4 in any::<bool>(), seeded in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, 3, 2, 2);
        let cfg = FlowConfig {
            max_steps: 2000,
            record_every: 50,
            method: if rk4 { Method::Rk4 } else { Method::Euler },
            init: if seeded {
                dsvm_core::Init::SeededRandom { scale: 0.5, seed }
            } else {
                dsvm_core::Init::Zeros
            },
            snapshots: true,
            ..FlowConfig::default()
        };
        let a = run_flow(&problem, &cfg).unwrap();
        let b = run_flow(&problem, &cfg).unwrap();
        prop_assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        prop_assert_eq!(a.trace.snapshots_json(), b.trace.snapshots_json());
    }
}

#[test]
fn consensus_objective_scales_central_objective() {
    let ds = Dataset::parse_csv("1,0.5\n-1,-1.5\n1,2.0\n-1,0.2", false).unwrap();
    for m in 1..=3 {
        let sol = solve_centralized(&ds, 2.0, m).unwrap();
        let g = Graph::from_topology(Topology::Path, m).unwrap();
        let problem = problem_from(&ds, g, PartitionStrategy::Contiguous, 2.0);
        let mut s = NetworkState::zeros(&problem);
        for j in 0..m {
            s.w[j] = sol.w[0];
            s.b[j] = sol.b;
        }
        s.xi.copy_from_slice(&sol.xi);
        let f = objective_value(&s, &problem).unwrap();
        assert!((f - sol.objective).abs() <= 1e-9 * (1.0 + f.abs()));
    }
}
