//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, Error, Result};
use crate::filters::{Algorithm, VarianceSign};
use crate::signal::ImpulsiveNoise;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub topology: TopologySpec,
    /// Draw a fresh topology for every Monte Carlo run instead of one per experiment.
    #[serde(default)]
    pub regenerate_topology: bool,
    /// Length M of the unknown system and of every filter.
    pub filter_length: usize,
    pub iterations: usize,
    pub monte_carlo_runs: usize,
    pub seed: u64,
    pub regressors: RegressorSpec,
    pub noise: NoiseSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Standard deviation of the random-walk drift of the unknown system.
    #[serde(default)]
    pub process_noise_std: f64,
    #[serde(default)]
    pub variance_sign: VarianceSign,
    /// Prior posterior variance `σ²_n(0)` of the probabilistic filters.
    #[serde(default = "default_initial_variance")]
    pub initial_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for Monte Carlo runs; results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_initial_variance() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Random { nodes: usize, probability: f64 },
    Geometric { nodes: usize, radius: f64 },
    Complete { nodes: usize },
    Ring { nodes: usize },
}

impl TopologySpec {
    pub fn nodes(&self) -> usize {
        match *self {
            TopologySpec::Random { nodes, .. }
            | TopologySpec::Geometric { nodes, .. }
            | TopologySpec::Complete { nodes }
            | TopologySpec::Ring { nodes } => nodes,
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, TopologySpec::Random { .. } | TopologySpec::Geometric { .. })
    }
}

/// A positive per-node quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Constant(f64),
    Values(Vec<f64>),
    /// Drawn independently per node from `U[lo, hi]` under the master seed.
    Uniform { uniform: [f64; 2] },
}

/// Per-node, per-coordinate variances for the diagonal profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCoordinate {
    Constant(f64),
    /// Same M values at every node.
    Shared(Vec<f64>),
    /// One length-M vector per node.
    PerNode(Vec<Vec<f64>>),
    /// Every entry drawn from `U[lo, hi]` under the master seed.
    Uniform { uniform: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorSpec {
    White { variance: PerNode },
    Diagonal { variances: PerCoordinate },
    Correlated { variance: PerNode, correlation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Variance of the Gaussian background noise; also the value the
    /// probabilistic filters assume for `σ_ε,n²`.
    pub gaussian_variance: PerNode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulsive: Option<ImpulsiveNoise>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: Algorithm,
    pub step_size: f64,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::new(path, message)
}

fn positive(path: &str, v: f64) -> std::result::Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(err(path, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(path: &str, v: f64) -> std::result::Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(err(path, format!("must be nonnegative and finite, got {v}")))
    }
}

fn check_range(path: &str, [lo, hi]: [f64; 2], allow_zero: bool) -> std::result::Result<(), ConfigError> {
    let path = format!("{path}.uniform");
    if allow_zero {
        nonnegative(&path, lo)?;
    } else {
        positive(&path, lo)?;
    }
    if !(hi >= lo && hi.is_finite()) {
        return Err(err(path, format!("upper bound {hi} is below lower bound {lo}")));
    }
    Ok(())
}

impl PerNode {
    fn validate(&self, path: &str, nodes: usize, allow_zero: bool) -> std::result::Result<(), ConfigError> {
        let check = |p: &str, v: f64| if allow_zero { nonnegative(p, v) } else { positive(p, v) };
        match self {
            PerNode::Constant(v) => check(path, *v),
            PerNode::Values(vs) => {
                if vs.len() != nodes {
                    return Err(err(path, format!("expected {nodes} values, found {}", vs.len())));
                }
                vs.iter()
                    .enumerate()
                    .try_for_each(|(i, &v)| check(&format!("{path}[{i}]"), v))
            }
            PerNode::Uniform { uniform } => check_range(path, *uniform, allow_zero),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(ConfigError::new(format!("line {} column {}", e.line(), e.column()), e.to_string()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn node_count(&self) -> usize {
        self.topology.nodes()
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let nodes = self.node_count();
        match &self.topology {
            TopologySpec::Random { nodes, probability } => {
                if *nodes < 2 {
                    return Err(err("topology.nodes", "random topologies need at least 2 nodes"));
                }
                if !(0.0..=1.0).contains(probability) {
                    return Err(err("topology.probability", format!("must lie in [0, 1], got {probability}")));
                }
            }
            TopologySpec::Geometric { nodes, radius } => {
                if *nodes < 2 {
                    return Err(err("topology.nodes", "geometric topologies need at least 2 nodes"));
                }
                positive("topology.radius", *radius)?;
            }
            TopologySpec::Complete { nodes } | TopologySpec::Ring { nodes } => {
                if *nodes == 0 {
                    return Err(err("topology.nodes", "must be at least 1"));
                }
            }
        }
        if self.filter_length == 0 {
            return Err(err("filter_length", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(err("iterations", "must be at least 1"));
        }
        if self.monte_carlo_runs == 0 {
            return Err(err("monte_carlo_runs", "must be at least 1"));
        }
        match &self.regressors {
            RegressorSpec::White { variance } => variance.validate("regressors.variance", nodes, false)?,
            RegressorSpec::Correlated { variance, correlation } => {
                variance.validate("regressors.variance", nodes, false)?;
                if !(0.0..1.0).contains(correlation) {
                    return Err(err("regressors.correlation", format!("must lie in [0, 1), got {correlation}")));
                }
            }
            RegressorSpec::Diagonal { variances } => {
                let path = "regressors.variances";
                let m = self.filter_length;
                match variances {
                    PerCoordinate::Constant(v) => positive(path, *v)?,
                    PerCoordinate::Shared(vs) => {
                        if vs.len() != m {
                            return Err(err(path, format!("expected {m} values, found {}", vs.len())));
                        }
                        for (i, &v) in vs.iter().enumerate() {
                            positive(&format!("{path}[{i}]"), v)?;
                        }
                    }
                    PerCoordinate::PerNode(rows) => {
                        if rows.len() != nodes {
                            return Err(err(path, format!("expected {nodes} rows, found {}", rows.len())));
                        }
                        for (n, row) in rows.iter().enumerate() {
                            if row.len() != m {
                                return Err(err(format!("{path}[{n}]"), format!("expected {m} values, found {}", row.len())));
                            }
                            for (i, &v) in row.iter().enumerate() {
                                positive(&format!("{path}[{n}][{i}]"), v)?;
                            }
                        }
                    }
                    PerCoordinate::Uniform { uniform } => check_range(path, *uniform, false)?,
                }
            }
        }
        self.noise
            .gaussian_variance
            .validate("noise.gaussian_variance", nodes, true)?;
        if let Some(imp) = &self.noise.impulsive {
            if !(0.0..=1.0).contains(&imp.probability) {
                return Err(err(
                    "noise.impulsive.probability",
                    format!("must lie in [0, 1], got {}", imp.probability),
                ));
            }
            positive("noise.impulsive.variance", imp.variance)?;
        }
        if self.algorithms.is_empty() {
            return Err(err("algorithms", "at least one algorithm is required"));
        }
        for (i, spec) in self.algorithms.iter().enumerate() {
            positive(&format!("algorithms[{i}].step_size"), spec.step_size)?;
            if self.algorithms[..i].iter().any(|s| s.name == spec.name) {
                return Err(err(format!("algorithms[{i}].name"), format!("{} listed twice", spec.name)));
            }
        }
        nonnegative("process_noise_std", self.process_noise_std)?;
        positive("initial_variance", self.initial_variance)?;
        if self.workers == Some(0) {
            return Err(err("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Canonical JSON used to hash configs that did not come from a file.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// A config together with the hash of the exact bytes it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub path: Option<PathBuf>,
}

impl LoadedConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ConfigNotFound(path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        let mut loaded = Self::from_bytes(&bytes)?;
        loaded.path = Some(path.to_path_buf());
        Ok(loaded)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| Error::Config(ConfigError::new("<file>", format!("not UTF-8: {e}"))))?;
        Ok(Self {
            config: ExperimentConfig::from_json(text)?,
            hash: config_hash(bytes),
            path: None,
        })
    }

    pub fn from_config(config: ExperimentConfig) -> Self {
        let hash = config_hash(config.canonical_json().as_bytes());
        Self {
            config,
            hash,
            path: None,
        }
    }
}

/// Lowercase hex SHA-256.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
