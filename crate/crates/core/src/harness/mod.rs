//! Configuration-driven Monte Carlo experiments.

mod config;
mod mean_study;
mod output;
mod run;

pub use config::{
    config_hash, AlgorithmSpec, ExperimentConfig, LoadedConfig, NoiseSpec, PerCoordinate, PerNode,
    RegressorSpec, TopologySpec,
};
pub use mean_study::{nlms_limit_alphas, MeanStudy};
pub use output::{csv_file_name, emit_csv, version_string, MANIFEST_FILE};
pub use run::{
    build_topology, run_experiment, run_loaded, run_seed, simulate_run, AlgorithmResult, DataSource,
    FilterSetup, RunOutcome, RunResult, Scenario, SyntheticData,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{stability_bound, BoundVariant};
use crate::error::Result;
use crate::filters::NodeFilterState;
use crate::signal::RegressorBank;

/// Default pilot length for step-size snapshots.
pub const PILOT_ITERATIONS: usize = 500;

/// Average of each node's DPLMS step size `α_n(i)` over the second half of a
/// pilot run on run 0's data. The step size does not depend on the
/// desired signal, so only regressors are drawn.
pub fn pilot_alphas(config: &ExperimentConfig, scenario: &Scenario, iterations: usize) -> Result<Vec<f64>> {
    let m = config.filter_length;
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(config.seed, 0));
    rng.set_stream(1);
    let mut bank = RegressorBank::new(&scenario.profiles, m)?;
    let mut states = scenario
        .noise
        .iter()
        .map(|noise| {
            NodeFilterState::new(
                m,
                config.initial_variance,
                config.process_noise_std * config.process_noise_std,
                noise.gaussian_variance,
            )
            .map(|s| s.with_variance_sign(config.variance_sign))
        })
        .collect::<Result<Vec<_>>>()?;
    let iterations = iterations.max(1);
    let keep_from = iterations / 2;
    let mut sums = vec![0.0; states.len()];
    let mut x = vec![0.0; m];
    for i in 0..iterations {
        for (node, state) in states.iter_mut().enumerate() {
            bank.gen_regressor(node, &mut rng, &mut x);
            let alpha = state.advance_step_size(&x)?;
            if i >= keep_from {
                sums[node] += alpha;
            }
        }
    }
    let count = (iterations - keep_from) as f64;
    Ok(sums.into_iter().map(|s| s / count).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub pilot_iterations: usize,
    pub alphas: Vec<f64>,
    /// Bound from the per-node diagonal blocks.
    pub mu_max: f64,
    /// Bound from the single self-weighted sum.
    pub mu_max_self_weights: f64,
}

/// Mean-stability step-size bound with `A = C` from the scenario and α
/// from a pilot run.
pub fn bound_report(config: &ExperimentConfig, pilot_iterations: usize) -> Result<BoundReport> {
    let scenario = Scenario::build(config)?;
    let alphas = pilot_alphas(config, &scenario, pilot_iterations)?;
    let m = config.filter_length;
    let covs: Vec<_> = scenario.profiles.iter().map(|p| p.covariance(m)).collect();
    let c = &scenario.combination;
    Ok(BoundReport {
        pilot_iterations,
        mu_max: stability_bound(&alphas, c, &covs, BoundVariant::PerNode)?,
        mu_max_self_weights: stability_bound(&alphas, c, &covs, BoundVariant::SelfWeights)?,
        alphas,
    })
}
