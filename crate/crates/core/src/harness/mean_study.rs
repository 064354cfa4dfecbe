//! Ensemble-mean weight error of DPLMS with a frozen step size, for
//! comparison against the deterministic mean recursion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::run::{run_seed, DataSource, SyntheticData};
use crate::analysis::{mean_error_matrix, MeanRecursionModel};
use crate::error::{check_dim, Error, Result};
use crate::filters::{Algorithm, DiffusionNetwork, NodeFilterState};
use crate::linalg::Matrix;
use crate::network::CombinationMatrix;
use crate::signal::{NoiseModel, RegressorProfile};

/// Runs per reduction chunk; chunks are summed in order, so the result does
/// not depend on the thread count.
const CHUNK: usize = 32;

#[derive(Debug, Clone)]
pub struct MeanStudy {
    pub combination: CombinationMatrix,
    pub profiles: Vec<RegressorProfile>,
    pub noise: Vec<NoiseModel>,
    /// Frozen per-node step sizes `α_n`.
    pub alphas: Vec<f64>,
    pub step_size: f64,
    /// The (static) unknown system, shared by all runs.
    pub truth: Vec<f64>,
    pub runs: usize,
    pub iterations: usize,
    pub seed: u64,
}

/// `α_n = 1/tr(R_{xx,n})`, the noiseless probabilistic step size
/// `1/‖x_n‖²` with `‖x_n‖²` replaced by its mean.
pub fn nlms_limit_alphas(profiles: &[RegressorProfile], m: usize) -> Vec<f64> {
    profiles.iter().map(|p| 1.0 / p.power(m)).collect()
}

impl MeanStudy {
    fn check(&self) -> Result<()> {
        let n = self.combination.size();
        check_dim(n, self.profiles.len())?;
        check_dim(n, self.noise.len())?;
        check_dim(n, self.alphas.len())?;
        if self.runs == 0 {
            return Err(Error::invalid("runs", "must be at least 1"));
        }
        Ok(())
    }

    pub fn filter_length(&self) -> usize {
        self.truth.len()
    }

    /// Mean recursion with `A = C` set to the study's combination matrix.
    pub fn model(&self) -> Result<MeanRecursionModel> {
        let m = self.filter_length();
        MeanRecursionModel::new(
            self.combination.clone(),
            self.combination.clone(),
            self.step_size,
            self.alphas.clone(),
            self.profiles.iter().map(|p| p.covariance(m)).collect(),
        )
    }

    pub fn mean_error_matrix(&self) -> Result<Matrix> {
        mean_error_matrix(&self.model()?)
    }

    fn initial_error(&self) -> Vec<f64> {
        let n = self.combination.size();
        (0..n).flat_map(|_| self.truth.iter().copied()).collect()
    }

    /// `E[Ŵ(i)] = Bⁱ Ŵ(0)` for `i = 0..=iterations`.
    pub fn predict(&self) -> Result<Vec<Vec<f64>>> {
        self.check()?;
        let b = self.mean_error_matrix()?;
        let mut out = Vec::with_capacity(self.iterations + 1);
        let mut current = self.initial_error();
        out.push(current.clone());
        for _ in 0..self.iterations {
            current = b.mul_vec(&current);
            out.push(current.clone());
        }
        Ok(out)
    }

    fn single_run(&self, run: usize, acc: &mut [Vec<f64>]) -> Result<()> {
        let m = self.filter_length();
        let n = self.combination.size();
        let states = self
            .alphas
            .iter()
            .zip(&self.noise)
            .map(|(&alpha, noise)| {
                NodeFilterState::new(m, 1.0, 0.0, noise.gaussian_variance).map(|s| s.with_frozen_alpha(alpha))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut network = DiffusionNetwork::new(Algorithm::Dplms, self.step_size, states)?;
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(self.seed, run));
        rng.set_stream(1);
        let mut source = SyntheticData::new(&self.profiles, &self.noise, m, rng)?;
        let mut regressors = vec![0.0; n * m];
        let mut desired = vec![0.0; n];
        add_error(&mut acc[0], &self.truth, network.states());
        for slot in acc.iter_mut().skip(1) {
            source.fill(&self.truth, &mut regressors, &mut desired);
            network.iterate(&self.combination, &regressors, &desired)?;
            add_error(slot, &self.truth, network.states());
        }
        Ok(())
    }

    /// Monte Carlo average of the stacked error `Ŵ(i)` for `i = 0..=iterations`.
    pub fn simulate(&self) -> Result<Vec<Vec<f64>>> {
        self.check()?;
        let width = self.combination.size() * self.filter_length();
        let chunks: Vec<(usize, usize)> = (0..self.runs)
            .step_by(CHUNK)
            .map(|start| (start, (start + CHUNK).min(self.runs)))
            .collect();
        let partial: Vec<Result<Vec<Vec<f64>>>> = chunks
            .par_iter()
            .map(|&(start, end)| {
                let mut acc = vec![vec![0.0; width]; self.iterations + 1];
                for run in start..end {
                    self.single_run(run, &mut acc)?;
                }
                Ok(acc)
            })
            .collect();
        let mut total = vec![vec![0.0; width]; self.iterations + 1];
        for chunk in partial {
            for (t, c) in total.iter_mut().zip(chunk?) {
                for (a, b) in t.iter_mut().zip(c) {
                    *a += b;
                }
            }
        }
        let scale = 1.0 / self.runs as f64;
        for row in &mut total {
            row.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(total)
    }
}

fn add_error(acc: &mut [f64], truth: &[f64], states: &[NodeFilterState]) {
    let m = truth.len();
    for (slot, state) in acc.chunks_exact_mut(m).zip(states) {
        for ((a, t), w) in slot.iter_mut().zip(truth).zip(&state.weights) {
            *a += t - w;
        }
    }
}
