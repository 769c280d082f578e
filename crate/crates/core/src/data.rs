//! Labelled datasets, CSV ingestion and horizontal partitioning.
//!
//! CSV rows are `label, x_1, ..., x_d` with labels in `{-1, +1}` and no
//! header unless requested.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: cannot parse {value:?} as a number")]
    ParseError { line: usize, value: String },
    #[error("line {line}: label {value} is not -1 or +1")]
    LabelError { line: usize, value: f64 },
    #[error("line {line}: expected {expected} features, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset has no samples")]
    Empty,
    #[error("cannot split {samples} samples across {nodes} nodes")]
    TooFewSamples { samples: usize, nodes: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_value(v: f64) -> Option<Self> {
        if v == 1.0 {
            Some(Label::Positive)
        } else if v == -1.0 {
            Some(Label::Negative)
        } else {
            None
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self, DataError> {
        let dim = samples.first().ok_or(DataError::Empty)?.x.len();
        if dim == 0 {
            return Err(DataError::InvalidParam {
                name: "dim",
                reason: "samples need at least one feature".into(),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(DataError::DimMismatch {
                    line: i + 1,
                    expected: dim,
                    found: s.x.len(),
                });
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when both classes occur. Single-class data is allowed but makes
    /// the margin problem degenerate.
    pub fn has_both_classes(&self) -> bool {
        let pos = self.samples.iter().any(|s| s.y == Label::Positive);
        let neg = self.samples.iter().any(|s| s.y == Label::Negative);
        pos && neg
    }

    pub fn parse_csv(text: &str, header: bool) -> Result<Self, DataError> {
        let mut samples = Vec::new();
        let mut dim = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if header && idx == 0 {
                continue;
            }
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut values = Vec::new();
            for field in trimmed.split(',') {
                let field = field.trim();
                let v: f64 = field.parse().map_err(|_| DataError::ParseError {
                    line,
                    value: field.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::ParseError {
                        line,
                        value: field.to_string(),
                    });
                }
                values.push(v);
            }
            let label = values[0];
            let y = Label::from_value(label).ok_or(DataError::LabelError { line, value: label })?;
            let x = values.split_off(1);
            match dim {
                None => dim = Some(x.len()),
                Some(d) if d != x.len() => {
                    return Err(DataError::DimMismatch {
                        line,
                        expected: d,
                        found: x.len(),
                    })
                }
                _ => {}
            }
            if x.is_empty() {
                return Err(DataError::DimMismatch {
                    line,
                    expected: 1,
                    found: 0,
                });
            }
            samples.push(Sample { x, y });
        }
        Self::new(samples)
    }

    pub fn load(path: &Path, header: bool) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text, header)
    }

    /// Serializes with shortest round-trip float formatting, so
    /// `parse_csv(to_csv())` reproduces the dataset bit for bit.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let label = match s.y {
                Label::Positive => "1",
                Label::Negative => "-1",
            };
            out.push_str(label);
            for v in &s.x {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    #[default]
    Contiguous,
    RoundRobin,
}

/// Samples held by each node, together with their indices in the source
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePartition {
    dim: usize,
    nodes: Vec<Vec<usize>>,
    samples: Vec<Vec<Sample>>,
}

impl NodePartition {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self, node: usize) -> &[Sample] {
        &self.samples[node]
    }

    /// Dataset indices owned by `node`, ascending.
    pub fn indices(&self, node: usize) -> &[usize] {
        &self.nodes[node]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.nodes.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }
}

/// Splits the dataset across `m` nodes. Contiguous gives the first
/// `N mod m` nodes `floor(N/m) + 1` samples; round-robin sends sample `i`
/// to node `i mod m`.
pub fn partition(
    dataset: &Dataset,
    m: usize,
    strategy: PartitionStrategy,
) -> Result<NodePartition, DataError> {
    let n = dataset.len();
    if m == 0 || n < m {
        return Err(DataError::TooFewSamples {
            samples: n,
            nodes: m,
        });
    }
    let nodes: Vec<Vec<usize>> = match strategy {
        PartitionStrategy::Contiguous => {
            let base = n / m;
            let extra = n % m;
            let mut start = 0;
            (0..m)
                .map(|j| {
                    let size = base + usize::from(j < extra);
                    let range = (start..start + size).collect();
                    start += size;
                    range
                })
                .collect()
        }
        PartitionStrategy::RoundRobin => (0..m).map(|j| (j..n).step_by(m).collect()).collect(),
    };
    let samples = nodes
        .iter()
        .map(|idx| idx.iter().map(|&i| dataset.samples[i].clone()).collect())
        .collect();
    Ok(NodePartition {
        dim: dataset.dim,
        nodes,
        samples,
    })
}

/// Parameters of the two-blob generator; also the JSON sidecar schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Name of the generator recorded in sidecars.
pub const GENERATOR: &str = "chacha8-standard-normal-v1";

/// Two unit-variance Gaussian blobs centred at `±(separation/2) e_1`.
///
/// Uses ChaCha8 seeded with `seed_from_u64` and `StandardNormal` (ziggurat),
/// both fully specified algorithms, so the output is identical across
/// platforms. All positive samples come first, then all negative ones.
pub fn gen_synthetic(spec: SyntheticSpec) -> Result<Dataset, DataError> {
    if spec.n_per_class == 0 {
        return Err(DataError::InvalidParam {
            name: "n_per_class",
            reason: "must be at least 1".into(),
        });
    }
    if spec.dim == 0 {
        return Err(DataError::InvalidParam {
            name: "dim",
            reason: "must be at least 1".into(),
        });
    }
    if !(spec.separation > 0.0 && spec.separation.is_finite()) {
        return Err(DataError::InvalidParam {
            name: "separation",
            reason: format!("must be a positive finite number, got {}", spec.separation),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let half = spec.separation / 2.0;
    let mut samples = Vec::with_capacity(2 * spec.n_per_class);
    for y in [Label::Positive, Label::Negative] {
        for _ in 0..spec.n_per_class {
            let mut x: Vec<f64> = (0..spec.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            x[0] += y.sign() * half;
            samples.push(Sample { x, y });
        }
    }
    Dataset::new(samples)
}
