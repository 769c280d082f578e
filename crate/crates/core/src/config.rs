//! JSON run configuration consumed by `dsvm run`.
//!
//! ```json
//! {
//!   "data": { "path": "points.csv", "header": false },
//!   "nodes": 3,
//!   "topology": "path",
//!   "partition": "round_robin",
//!   "C": 1.0,
//!   "flow": { "method": "rk4", "record_every": 100 },
//!   "output": "out",
//!   "snapshots": true
//! }
//! ```
//!
//! `data` is either `{"path", "header"}` or `{"synthetic": {n_per_class,
//! dim, separation, seed}}`. The graph is either a `topology` or an explicit
//! `edges` list of `[a, b]` pairs, never both. Defaults: `partition`
//! contiguous, `flow` as [`FlowConfig::default`], `output` `"dsvm-out"`,
//! `snapshots` false. Relative paths resolve against the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{gen_synthetic, partition, DataError, Dataset, PartitionStrategy, SyntheticSpec};
use crate::graph::{Graph, GraphError, Topology};
use crate::integrator::FlowConfig;
use crate::problem::{Problem, ProblemError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn field_err(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    File {
        path: PathBuf,
        #[serde(default)]
        header: bool,
    },
    Synthetic { synthetic: SyntheticSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<Topology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub partition: PartitionStrategy,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub snapshots: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("dsvm-out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file and rebases relative paths onto its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataSource::File { path, .. } = &mut cfg.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    /// Flow settings with the top-level snapshot flag folded in.
    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            snapshots: self.flow.snapshots || self.snapshots,
            ..self.flow
        }
    }

    /// Checks everything that can be checked without touching the dataset.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nodes == 0 {
            return Err(field_err("nodes", "must be at least 1"));
        }
        match (&self.topology, &self.edges) {
            (Some(_), Some(_)) => {
                return Err(field_err("edges", "give either `topology` or `edges`, not both"))
            }
            (None, None) if self.nodes > 1 => {
                return Err(field_err("topology", "one of `topology` or `edges` is required"))
            }
            _ => {}
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(field_err("C", format!("must be positive and finite, got {}", self.c)));
        }
        if let DataSource::Synthetic { synthetic } = &self.data {
            if synthetic.n_per_class == 0 {
                return Err(field_err("data.synthetic.n_per_class", "must be at least 1"));
            }
            if synthetic.dim == 0 {
                return Err(field_err("data.synthetic.dim", "must be at least 1"));
            }
            if !(synthetic.separation > 0.0 && synthetic.separation.is_finite()) {
                return Err(field_err("data.synthetic.separation", "must be positive"));
            }
        }
        self.flow
            .validate()
            .map_err(|e| field_err("flow", e.to_string()))
    }

    pub fn graph(&self) -> Result<Graph, ConfigError> {
        match (&self.topology, &self.edges) {
            (Some(t), _) => Ok(Graph::from_topology(*t, self.nodes)?),
            (None, Some(edges)) => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                Ok(Graph::new(self.nodes, &pairs)?)
            }
            (None, None) => Ok(Graph::new(self.nodes, &[])?),
        }
    }

    pub fn dataset(&self) -> Result<Dataset, ConfigError> {
        Ok(match &self.data {
            DataSource::File { path, header } => Dataset::load(path, *header)?,
            DataSource::Synthetic { synthetic } => gen_synthetic(*synthetic)?,
        })
    }

    /// Validates, loads the data and assembles the distributed problem.
    pub fn build(&self) -> Result<(Dataset, Problem), ConfigError> {
        self.validate()?;
        let graph = self.graph()?;
        let dataset = self.dataset()?;
        let parts = partition(&dataset, self.nodes, self.partition)?;
        let problem = Problem::new(parts, graph, self.c)?;
        Ok((dataset, problem))
    }
}
