//! Monte Carlo experiment runner.
//!
//! Seeding: the scenario (topology, per-node profiles) comes from stream 0 of
//! the master seed. Run `r` gets its own seed from [`run_seed`]; within a
//! run, stream 0 drives the unknown system, stream 1 the data and stream 2 a
//! regenerated topology. Runs are independent of scheduling, and the
//! ensemble average is reduced in run order.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{AlgorithmSpec, ExperimentConfig, LoadedConfig, PerCoordinate, PerNode, RegressorSpec, TopologySpec};
use crate::analysis::{msd, MsdCurve};
use crate::error::{Error, Result};
use crate::filters::{Algorithm, DiffusionNetwork, NodeFilterState, VarianceSign};
use crate::linalg::dot;
use crate::network::{
    geometric_topology_with_rng, random_topology_with_rng, uniform_combination, CombinationMatrix,
    NetworkTopology,
};
use crate::signal::{unknown_system_with_rng, NoiseModel, RegressorBank, RegressorProfile, UnknownSystem};

const STREAM_SYSTEM: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_TOPOLOGY: u64 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    splitmix64(master ^ splitmix64(run as u64))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything about an experiment that is fixed across Monte Carlo runs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: NetworkTopology,
    pub combination: CombinationMatrix,
    pub profiles: Vec<RegressorProfile>,
    pub noise: Vec<NoiseModel>,
}

fn draw_per_node<R: Rng>(spec: &PerNode, nodes: usize, rng: &mut R) -> Vec<f64> {
    match spec {
        PerNode::Constant(v) => vec![*v; nodes],
        PerNode::Values(vs) => vs.clone(),
        PerNode::Uniform { uniform: [lo, hi] } => (0..nodes).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect(),
    }
}

pub fn build_topology<R: Rng>(spec: &TopologySpec, rng: &mut R) -> Result<NetworkTopology> {
    match *spec {
        TopologySpec::Random { nodes, probability } => random_topology_with_rng(nodes, probability, rng),
        TopologySpec::Geometric { nodes, radius } => geometric_topology_with_rng(nodes, radius, rng),
        TopologySpec::Complete { nodes } => NetworkTopology::complete(nodes),
        TopologySpec::Ring { nodes } => NetworkTopology::ring(nodes),
    }
}

impl Scenario {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, 0);
        let topology = build_topology(&config.topology, &mut rng)?;
        let nodes = topology.node_count();
        let m = config.filter_length;
        let profiles = match &config.regressors {
            RegressorSpec::White { variance } => draw_per_node(variance, nodes, &mut rng)
                .into_iter()
                .map(RegressorProfile::white)
                .collect::<Result<Vec<_>>>()?,
            RegressorSpec::Correlated { variance, correlation } => draw_per_node(variance, nodes, &mut rng)
                .into_iter()
                .map(|v| RegressorProfile::correlated(v, *correlation))
                .collect::<Result<Vec<_>>>()?,
            RegressorSpec::Diagonal { variances } => {
                let rows: Vec<Vec<f64>> = match variances {
                    PerCoordinate::Constant(v) => vec![vec![*v; m]; nodes],
                    PerCoordinate::Shared(vs) => vec![vs.clone(); nodes],
                    PerCoordinate::PerNode(rows) => rows.clone(),
                    PerCoordinate::Uniform { uniform: [lo, hi] } => (0..nodes)
                        .map(|_| (0..m).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
                        .collect(),
                };
                rows.into_iter().map(RegressorProfile::diagonal).collect::<Result<Vec<_>>>()?
            }
        };
        let noise = draw_per_node(&config.noise.gaussian_variance, nodes, &mut rng)
            .into_iter()
            .map(|g| NoiseModel {
                gaussian_variance: g,
                impulsive: config.noise.impulsive,
            })
            .collect();
        let combination = uniform_combination(&topology);
        Ok(Self {
            topology,
            combination,
            profiles,
            noise,
        })
    }
}

/// Supplies each iteration's regressors and desired samples.
pub trait DataSource {
    /// Fills `regressors` (N×M, node-major) and `desired` (N) for the
    /// current true weights.
    fn fill(&mut self, truth: &[f64], regressors: &mut [f64], desired: &mut [f64]);
}

/// Gaussian regressors and Bernoulli-Gaussian noise from the scenario profiles.
pub struct SyntheticData {
    bank: RegressorBank,
    noise: Vec<NoiseModel>,
    rng: ChaCha8Rng,
}

impl SyntheticData {
    pub fn new(profiles: &[RegressorProfile], noise: &[NoiseModel], m: usize, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            bank: RegressorBank::new(profiles, m)?,
            noise: noise.to_vec(),
            rng,
        })
    }
}

impl DataSource for SyntheticData {
    fn fill(&mut self, truth: &[f64], regressors: &mut [f64], desired: &mut [f64]) {
        let m = truth.len();
        for (node, (x, d)) in regressors.chunks_exact_mut(m).zip(desired.iter_mut()).enumerate() {
            self.bank.gen_regressor(node, &mut self.rng, x);
            *d = dot(x, truth) + self.noise[node].sample(&mut self.rng);
        }
    }
}

/// Filter settings shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct FilterSetup {
    pub algorithms: Vec<AlgorithmSpec>,
    pub initial_variance: f64,
    pub process_noise_var: f64,
    /// Per-node `σ_ε,n²` assumed by the probabilistic filters.
    pub noise_vars: Vec<f64>,
    pub variance_sign: VarianceSign,
}

impl FilterSetup {
    pub fn from_config(config: &ExperimentConfig, scenario: &Scenario) -> Self {
        Self {
            algorithms: config.algorithms.clone(),
            initial_variance: config.initial_variance,
            process_noise_var: config.process_noise_std * config.process_noise_std,
            noise_vars: scenario.noise.iter().map(|n| n.gaussian_variance).collect(),
            variance_sign: config.variance_sign,
        }
    }

    fn network(&self, spec: &AlgorithmSpec, m: usize) -> Result<DiffusionNetwork> {
        let states = self
            .noise_vars
            .iter()
            .map(|&eps| {
                NodeFilterState::new(m, self.initial_variance, self.process_noise_var, eps)
                    .map(|s| s.with_variance_sign(self.variance_sign))
            })
            .collect::<Result<Vec<_>>>()?;
        DiffusionNetwork::new(spec.name, spec.step_size, states)
    }
}

/// Per-iteration MSD of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// One curve per configured algorithm, in config order.
    pub curves: Vec<Vec<f64>>,
    /// MSD before the first update, `‖W_o(0)‖²` for zero-initialized filters.
    pub initial_msd: f64,
    pub diverged: Vec<bool>,
}

/// Runs every configured algorithm in lockstep on one shared data
/// realization. An algorithm whose estimates stop being finite is frozen and
/// reports infinite MSD from then on.
pub fn simulate_run<S: DataSource, R: Rng>(
    setup: &FilterSetup,
    combination: &CombinationMatrix,
    mut system: UnknownSystem,
    iterations: usize,
    drift_rng: &mut R,
    source: &mut S,
) -> Result<RunOutcome> {
    let m = system.len();
    let nodes = combination.size();
    let mut networks = setup
        .algorithms
        .iter()
        .map(|spec| setup.network(spec, m))
        .collect::<Result<Vec<_>>>()?;
    let initial_msd = msd(&system.weights, networks[0].states().iter().map(|s| s.weights.as_slice()))?;
    let mut curves = vec![Vec::with_capacity(iterations); networks.len()];
    let mut diverged = vec![false; networks.len()];
    let mut regressors = vec![0.0; nodes * m];
    let mut desired = vec![0.0; nodes];
    for _ in 0..iterations {
        system.drift(drift_rng);
        source.fill(&system.weights, &mut regressors, &mut desired);
        for ((network, curve), gone) in networks.iter_mut().zip(&mut curves).zip(&mut diverged) {
            if *gone {
                curve.push(f64::INFINITY);
                continue;
            }
            let step = network.iterate(combination, &regressors, &desired);
            let value = match step {
                Ok(()) => msd(&system.weights, network.states().iter().map(|s| s.weights.as_slice()))?,
                Err(Error::NonPositiveDenominator { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            if value.is_finite() {
                curve.push(value);
            } else {
                *gone = true;
                curve.push(f64::INFINITY);
            }
        }
    }
    Ok(RunOutcome {
        curves,
        initial_msd,
        diverged,
    })
}

#[derive(Debug, Clone)]
pub struct AlgorithmResult {
    pub spec: AlgorithmSpec,
    pub curve: MsdCurve,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub algorithms: Vec<AlgorithmResult>,
    /// Ensemble MSD before the first iteration.
    pub initial_msd: f64,
    pub run_seeds: Vec<u64>,
    /// Topology of the scenario (of run 0 when regenerated per run).
    pub topology: NetworkTopology,
    pub wall_clock: Duration,
}

impl RunResult {
    pub fn curve(&self, algorithm: Algorithm) -> Option<&MsdCurve> {
        self.algorithms
            .iter()
            .find(|a| a.spec.name == algorithm)
            .map(|a| &a.curve)
    }
}

/// Runs a config that did not come from a file; hashed in canonical form.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    run_loaded(&LoadedConfig::from_config(config.clone()))
}

pub fn run_loaded(loaded: &LoadedConfig) -> Result<RunResult> {
    let started = Instant::now();
    let config = &loaded.config;
    let scenario = Scenario::build(config)?;
    let setup = FilterSetup::from_config(config, &scenario);
    let seeds: Vec<u64> = (0..config.monte_carlo_runs).map(|r| run_seed(config.seed, r)).collect();

    let one_run = |seed: u64| -> Result<(RunOutcome, Option<NetworkTopology>)> {
        let (topology, combination) = if config.regenerate_topology && config.topology.is_random() {
            let t = build_topology(&config.topology, &mut stream(seed, STREAM_TOPOLOGY))?;
            let c = uniform_combination(&t);
            (Some(t), c)
        } else {
            (None, scenario.combination.clone())
        };
        let mut sys_rng = stream(seed, STREAM_SYSTEM);
        let mut system = unknown_system_with_rng(config.filter_length, &mut sys_rng)?;
        system.process_noise_std = config.process_noise_std;
        let mut source = SyntheticData::new(
            &scenario.profiles,
            &scenario.noise,
            config.filter_length,
            stream(seed, STREAM_DATA),
        )?;
        let outcome = simulate_run(&setup, &combination, system, config.iterations, &mut sys_rng, &mut source)?;
        Ok((outcome, topology))
    };

    let outcomes: Vec<Result<(RunOutcome, Option<NetworkTopology>)>> = match config.workers {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::invalid("workers", e.to_string()))?;
            pool.install(|| seeds.par_iter().map(|&s| one_run(s)).collect())
        }
        None => seeds.par_iter().map(|&s| one_run(s)).collect(),
    };

    let runs = config.monte_carlo_runs as f64;
    let mut sums = vec![vec![0.0; config.iterations]; config.algorithms.len()];
    let mut diverged = vec![0usize; config.algorithms.len()];
    let mut initial = 0.0;
    let mut topology = scenario.topology.clone();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let (outcome, run_topology) = outcome?;
        if r == 0 {
            if let Some(t) = run_topology {
                topology = t;
            }
        }
        initial += outcome.initial_msd;
        for (k, curve) in outcome.curves.iter().enumerate() {
            for (acc, v) in sums[k].iter_mut().zip(curve) {
                *acc += v;
            }
            diverged[k] += usize::from(outcome.diverged[k]);
        }
    }
    let algorithms = config
        .algorithms
        .iter()
        .zip(sums)
        .zip(diverged)
        .map(|((spec, sum), diverged_runs)| AlgorithmResult {
            spec: *spec,
            curve: MsdCurve::new(sum.into_iter().map(|v| v / runs).collect()),
            diverged_runs,
        })
        .collect();

    Ok(RunResult {
        config: config.clone(),
        config_hash: loaded.hash.clone(),
        algorithms,
        initial_msd: initial / runs,
        run_seeds: seeds,
        topology,
        wall_clock: started.elapsed(),
    })
}
