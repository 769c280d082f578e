//! Undirected communication graph between computing nodes.
//!
//! The Laplacian `L = D - A` is kept implicit through sorted neighbor lists;
//! a dense copy is only built for the spectral quantities.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("invalid edge ({0}, {1}): {2}")]
    InvalidEdge(usize, usize, &'static str),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    DisconnectedGraph(usize),
    #[error("shape mismatch: expected {expected} entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
}

/// Named topologies accepted in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Complete,
    Path,
    Ring,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are stored as `(min, max)`
    /// pairs in the order given; neighbor lists are sorted ascending.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut neighbors = vec![Vec::new(); node_count];
        let mut stored = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(GraphError::InvalidEdge(a, b, "node index out of range"));
            }
            if a == b {
                return Err(GraphError::InvalidEdge(a, b, "self-loop"));
            }
            if neighbors[a].contains(&b) {
                return Err(GraphError::DuplicateEdge(a, b));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
            stored.push((a.min(b), a.max(b)));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut seen = vec![false; node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for &l in &neighbors[j] {
                if !seen[l] {
                    seen[l] = true;
                    stack.push(l);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(GraphError::DisconnectedGraph(missing));
        }

        Ok(Self {
            node_count,
            edges: stored,
            neighbors,
        })
    }

    pub fn from_topology(topology: Topology, node_count: usize) -> Result<Self, GraphError> {
        let edges: Vec<(usize, usize)> = match topology {
            Topology::Complete => (0..node_count)
                .flat_map(|a| (a + 1..node_count).map(move |b| (a, b)))
                .collect(),
            Topology::Path => (1..node_count).map(|b| (b - 1, b)).collect(),
            Topology::Ring => {
                let mut e: Vec<_> = (1..node_count).map(|b| (b - 1, b)).collect();
                if node_count > 2 {
                    e.push((node_count - 1, 0));
                }
                e
            }
        };
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Dense Laplacian with integer entries.
    pub fn laplacian(&self) -> Vec<Vec<i64>> {
        let m = self.node_count;
        let mut lap = vec![vec![0i64; m]; m];
        for (j, row) in lap.iter_mut().enumerate() {
            row[j] = self.neighbors[j].len() as i64;
            for &l in &self.neighbors[j] {
                row[l] -= 1;
            }
        }
        lap
    }

    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let lap = self.laplacian();
        DMatrix::from_fn(self.node_count, self.node_count, |r, c| lap[r][c] as f64)
    }

    /// `(L ⊗ I_dim) v` for `v` stacked as `node_count` blocks of length `dim`.
    pub fn laplacian_apply(&self, v: &[f64], dim: usize) -> Result<Vec<f64>, GraphError> {
        let expected = self.node_count * dim;
        if v.len() != expected {
            return Err(GraphError::ShapeMismatch {
                expected,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; expected];
        self.laplacian_apply_into(v, dim, &mut out);
        Ok(out)
    }

    /// Unchecked variant writing into `out`. Neighbors are visited in
    /// ascending order so the result is bit-reproducible.
    pub(crate) fn laplacian_apply_into(&self, v: &[f64], dim: usize, out: &mut [f64]) {
        for j in 0..self.node_count {
            let own = &v[j * dim..(j + 1) * dim];
            let dst = &mut out[j * dim..(j + 1) * dim];
            dst.iter_mut().for_each(|x| *x = 0.0);
            for &l in &self.neighbors[j] {
                let other = &v[l * dim..(l + 1) * dim];
                for k in 0..dim {
                    dst[k] += own[k] - other[k];
                }
            }
        }
    }

    /// Ascending Laplacian spectrum.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.laplacian_matrix());
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Algebraic connectivity λ2(L). A single-node graph has no second
    /// eigenvalue and reports 0.
    pub fn lambda2(&self) -> f64 {
        if self.node_count < 2 {
            return 0.0;
        }
        self.laplacian_spectrum()[1]
    }

    /// Upper bound on the H1 gain parameter, `2 λ2(L)`.
    pub fn gain_bound(&self) -> f64 {
        2.0 * self.lambda2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_laplacian() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(g.laplacian(), vec![vec![1, -1], vec![-1, 1]]);
    }

    #[test]
    fn complete_graph_degrees() {
        let g = Graph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        for j in 0..3 {
            assert_eq!(g.degree(j), 2);
        }
        let k3 = Graph::from_topology(Topology::Complete, 3).unwrap();
        assert_eq!(g.laplacian(), k3.laplacian());
    }

    #[test]
    fn isolated_node_is_rejected() {
        assert_eq!(
            Graph::new(3, &[(0, 1)]),
            Err(GraphError::DisconnectedGraph(2))
        );
    }

    #[test]
    fn bad_edges() {
        assert!(matches!(
            Graph::new(2, &[(0, 2)]),
            Err(GraphError::InvalidEdge(0, 2, _))
        ));
        assert!(matches!(
            Graph::new(2, &[(1, 1)]),
            Err(GraphError::InvalidEdge(1, 1, _))
        ));
        assert_eq!(
            Graph::new(2, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(1, 0))
        );
        assert_eq!(Graph::new(0, &[]), Err(GraphError::Empty));
    }

    #[test]
    fn apply_examples() {
        let p2 = Graph::from_topology(Topology::Path, 2).unwrap();
        assert_eq!(
            p2.laplacian_apply(&[0.3, -2.0, 0.3, -2.0], 2).unwrap(),
            vec![0.0; 4]
        );
        assert_eq!(p2.laplacian_apply(&[1.0, -1.0], 1).unwrap(), vec![2.0, -2.0]);
        let k3 = Graph::from_topology(Topology::Complete, 3).unwrap();
        assert_eq!(
            k3.laplacian_apply(&[1.0, 0.0, 0.0], 1).unwrap(),
            vec![2.0, -1.0, -1.0]
        );
        assert_eq!(
            k3.laplacian_apply(&[1.0, 0.0], 1),
            Err(GraphError::ShapeMismatch {
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn lambda2_examples() {
        let cases = [
            (Graph::from_topology(Topology::Path, 2).unwrap(), 2.0),
            (Graph::from_topology(Topology::Complete, 3).unwrap(), 3.0),
            (Graph::from_topology(Topology::Path, 3).unwrap(), 1.0),
        ];
        for (g, expected) in cases {
            assert!((g.lambda2() - expected).abs() <= 1e-10 * expected);
            assert!((g.gain_bound() - 2.0 * expected).abs() <= 2e-10 * expected);
        }
    }

    #[test]
    fn ring_small_sizes() {
        assert_eq!(Graph::from_topology(Topology::Ring, 1).unwrap().edges().len(), 0);
        assert_eq!(Graph::from_topology(Topology::Ring, 2).unwrap().edges().len(), 1);
        assert_eq!(Graph::from_topology(Topology::Ring, 5).unwrap().edges().len(), 5);
        assert_eq!(Graph::from_topology(Topology::Ring, 1).unwrap().lambda2(), 0.0);
    }
}
