//! Per-node PLMS recursions and adapt-then-combine diffusion filters.
//!
//! Every node first adapts on its own data, writing an intermediate
//! estimate `φ_n`, then replaces its weights by a convex combination of its
//! neighbors' intermediates. Adaptation only reads the previous iteration's
//! weights, so node processing order never matters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::network::CombinationMatrix;

mod complexity;

pub use complexity::{complexity_rows, kernel_op_counts, op_counts, ComplexityAlgorithm, OpCount};

/// Floor applied to the posterior variance after every update.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Receives operation counts from the filter kernels. `()` discards them.
pub trait Tally {
    fn mul(&mut self, n: u64);
    fn add(&mut self, n: u64);
    fn abs(&mut self, n: u64);
    fn sign(&mut self, n: u64);
}

impl Tally for () {
    #[inline(always)]
    fn mul(&mut self, _: u64) {}
    #[inline(always)]
    fn add(&mut self, _: u64) {}
    #[inline(always)]
    fn abs(&mut self, _: u64) {}
    #[inline(always)]
    fn sign(&mut self, _: u64) {}
}

/// How the process-noise variance enters the predictive variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSign {
    /// `σ²(i-1) + σ_p²` everywhere: prediction inflates the variance.
    #[default]
    Plus,
    /// `+σ_p²` in the step-size numerator, `-σ_p²` in
    /// the step-size denominator and the variance recursion.
    Minus,
}

impl VarianceSign {
    fn predicted(self, prev: f64, process_noise_var: f64) -> f64 {
        match self {
            VarianceSign::Plus => prev + process_noise_var,
            VarianceSign::Minus => prev - process_noise_var,
        }
    }
}

#[inline]
fn dot_counted<T: Tally>(a: &[f64], b: &[f64], tally: &mut T) -> f64 {
    tally.mul(a.len() as u64);
    tally.add(a.len().saturating_sub(1) as u64);
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Step size of the probabilistic LMS,
/// `α = (σ²_prev + σ_p²) / ((σ²_prev + σ_p²)‖x‖² + σ_ε²)`.
pub fn plms_alpha(prev_variance: f64, process_noise_var: f64, noise_var: f64, x: &[f64]) -> Result<f64> {
    let norm_sq = dot_counted(x, x, &mut ());
    alpha_from_norm(VarianceSign::Plus, prev_variance, process_noise_var, noise_var, norm_sq, &mut ())
}

/// [`plms_alpha`] with an explicit sign convention.
pub fn plms_alpha_with(
    sign: VarianceSign,
    prev_variance: f64,
    process_noise_var: f64,
    noise_var: f64,
    x: &[f64],
) -> Result<f64> {
    let norm_sq = dot_counted(x, x, &mut ());
    alpha_from_norm(sign, prev_variance, process_noise_var, noise_var, norm_sq, &mut ())
}

fn alpha_from_norm<T: Tally>(
    sign: VarianceSign,
    prev_variance: f64,
    process_noise_var: f64,
    noise_var: f64,
    norm_sq: f64,
    tally: &mut T,
) -> Result<f64> {
    let numerator = prev_variance + process_noise_var;
    tally.add(1);
    let spread = match sign {
        VarianceSign::Plus => numerator,
        VarianceSign::Minus => {
            tally.add(1);
            prev_variance - process_noise_var
        }
    };
    let denominator = spread * norm_sq + noise_var;
    tally.mul(1);
    tally.add(1);
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(Error::NonPositiveDenominator { value: denominator });
    }
    tally.mul(1);
    Ok(numerator / denominator)
}

/// Posterior variance after one update,
/// `σ² = [1 - α‖x‖²/L]·(σ²_prev + σ_p²)`, floored at [`VARIANCE_FLOOR`].
pub fn plms_variance_update(prev_variance: f64, process_noise_var: f64, alpha: f64, x: &[f64], length: usize) -> f64 {
    let norm_sq = dot_counted(x, x, &mut ());
    variance_from_norm(VarianceSign::Plus, prev_variance, process_noise_var, alpha, norm_sq, length, &mut ())
}

pub fn plms_variance_update_with(
    sign: VarianceSign,
    prev_variance: f64,
    process_noise_var: f64,
    alpha: f64,
    x: &[f64],
    length: usize,
) -> f64 {
    let norm_sq = dot_counted(x, x, &mut ());
    variance_from_norm(sign, prev_variance, process_noise_var, alpha, norm_sq, length, &mut ())
}

fn variance_from_norm<T: Tally>(
    sign: VarianceSign,
    prev_variance: f64,
    process_noise_var: f64,
    alpha: f64,
    norm_sq: f64,
    length: usize,
    tally: &mut T,
) -> f64 {
    let bracket = 1.0 - alpha * norm_sq / length as f64;
    tally.mul(2);
    tally.add(1);
    let predicted = sign.predicted(prev_variance, process_noise_var);
    // the predicted variance is shared with the step-size computation
    tally.mul(1);
    (bracket * predicted).max(VARIANCE_FLOOR)
}

/// Filter state owned by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFilterState {
    /// Current estimate `W_n(i)`.
    pub weights: Vec<f64>,
    /// Intermediate estimate `φ_n(i)` produced by the last adaptation.
    pub intermediate: Vec<f64>,
    /// Posterior variance `σ²_n(i)`, always positive.
    pub posterior_variance: f64,
    /// Assumed process-noise variance `σ_p,n²`.
    pub process_noise_var: f64,
    /// Assumed observation-noise variance `σ_ε,n²`.
    pub noise_var: f64,
    pub variance_sign: VarianceSign,
    /// When set, the adaptive step size is replaced by this constant.
    pub frozen_alpha: Option<f64>,
    last_alpha: Option<f64>,
}

impl NodeFilterState {
    /// Zero-initialized weights with the given prior variance.
    pub fn new(length: usize, initial_variance: f64, process_noise_var: f64, noise_var: f64) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("length", "filter length must be at least 1"));
        }
        if !(initial_variance > 0.0 && initial_variance.is_finite()) {
            return Err(Error::invalid(
                "initial_variance",
                format!("must be positive, got {initial_variance}"),
            ));
        }
        if !(process_noise_var >= 0.0 && noise_var >= 0.0) {
            return Err(Error::invalid("noise variances", "must be nonnegative"));
        }
        Ok(Self {
            weights: vec![0.0; length],
            intermediate: vec![0.0; length],
            posterior_variance: initial_variance,
            process_noise_var,
            noise_var,
            variance_sign: VarianceSign::Plus,
            frozen_alpha: None,
            last_alpha: None,
        })
    }

    pub fn with_variance_sign(mut self, sign: VarianceSign) -> Self {
        self.variance_sign = sign;
        self
    }

    pub fn with_frozen_alpha(mut self, alpha: f64) -> Self {
        self.frozen_alpha = Some(alpha);
        self
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Step size used by the most recent PLMS-type update.
    pub fn last_alpha(&self) -> Option<f64> {
        self.last_alpha
    }

    /// `e = d - xᵀW`
    pub fn error(&self, x: &[f64], d: f64) -> Result<f64> {
        check_dim(self.len(), x.len())?;
        Ok(d - dot_counted(x, &self.weights, &mut ()))
    }

    /// Computes `α_n(i)` and advances `σ²_n`. Returns α.
    fn advance_variance<T: Tally>(&mut self, x: &[f64], tally: &mut T) -> Result<f64> {
        let norm_sq = dot_counted(x, x, tally);
        let alpha = match self.frozen_alpha {
            Some(alpha) => alpha,
            None => alpha_from_norm(
                self.variance_sign,
                self.posterior_variance,
                self.process_noise_var,
                self.noise_var,
                norm_sq,
                tally,
            )?,
        };
        self.posterior_variance = variance_from_norm(
            self.variance_sign,
            self.posterior_variance,
            self.process_noise_var,
            alpha,
            norm_sq,
            self.len(),
            tally,
        );
        self.last_alpha = Some(alpha);
        Ok(alpha)
    }

    /// Advances only the variance recursion. The step-size sequence does
    /// not depend on the data `d`, so this is enough for pilot runs.
    pub fn advance_step_size(&mut self, x: &[f64]) -> Result<f64> {
        check_dim(self.len(), x.len())?;
        self.advance_variance(x, &mut ())
    }
}

/// Outcome of a single-node update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub error: f64,
    pub alpha: f64,
}

/// Standalone PLMS update `W ← W + τ·α·e·x` with the variance recursion.
pub fn plms_step(state: &mut NodeFilterState, x: &[f64], d: f64, tau: f64) -> Result<StepReport> {
    check_dim(state.len(), x.len())?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("tau", format!("must lie in (0, 1], got {tau}")));
    }
    let error = d - dot_counted(x, &state.weights, &mut ());
    let alpha = state.advance_variance(x, &mut ())?;
    let step = tau * alpha * error;
    for (w, xi) in state.weights.iter_mut().zip(x) {
        *w += step * xi;
    }
    Ok(StepReport { error, alpha })
}

/// Diffusion algorithms with a runnable weight recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "DPLMS")]
    Dplms,
    #[serde(rename = "DLMS")]
    Dlms,
    #[serde(rename = "DSE-LMS")]
    DseLms,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dplms, Algorithm::Dlms, Algorithm::DseLms];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dplms => "DPLMS",
            Algorithm::Dlms => "DLMS",
            Algorithm::DseLms => "DSE-LMS",
        }
    }

    /// Lowercase name safe for file names.
    pub fn slug(self) -> &'static str {
        match self {
            Algorithm::Dplms => "dplms",
            Algorithm::Dlms => "dlms",
            Algorithm::DseLms => "dse_lms",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match normalize_name(s).as_str() {
            "DPLMS" => Ok(Algorithm::Dplms),
            "DLMS" => Ok(Algorithm::Dlms),
            "DSELMS" => Ok(Algorithm::DseLms),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

fn check_step(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("mu", format!("step size must be nonnegative, got {mu}")))
    }
}

fn adapt_counted<T: Tally>(
    algorithm: Algorithm,
    state: &mut NodeFilterState,
    x: &[f64],
    d: f64,
    mu: f64,
    tally: &mut T,
) -> Result<()> {
    check_dim(state.len(), x.len())?;
    let prediction = dot_counted(x, &state.weights, tally);
    let error = d - prediction;
    tally.add(1);
    let step = match algorithm {
        Algorithm::Dplms => {
            let alpha = state.advance_variance(x, tally)?;
            tally.mul(2);
            mu * alpha * error
        }
        Algorithm::Dlms => {
            tally.mul(1);
            mu * error
        }
        Algorithm::DseLms => {
            tally.sign(1);
            tally.mul(1);
            mu * sign(error)
        }
    };
    tally.mul(x.len() as u64);
    tally.add(x.len() as u64);
    for ((phi, w), xi) in state.intermediate.iter_mut().zip(&state.weights).zip(x) {
        *phi = w + step * xi;
    }
    Ok(())
}

/// `sign` with `sign(0) = 0`.
fn sign(e: f64) -> f64 {
    if e > 0.0 {
        1.0
    } else if e < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// DPLMS adaptation `φ_n = W_n + μ·α_n·e_n·x_n`; also advances `σ²_n`.
pub fn dplms_adapt<'a>(state: &'a mut NodeFilterState, x: &[f64], d: f64, mu: f64) -> Result<&'a [f64]> {
    check_step(mu)?;
    adapt_counted(Algorithm::Dplms, state, x, d, mu, &mut ())?;
    Ok(&state.intermediate)
}

/// Diffusion LMS adaptation `φ_n = W_n + μ·e_n·x_n`.
pub fn dlms_adapt<'a>(state: &'a mut NodeFilterState, x: &[f64], d: f64, mu: f64) -> Result<&'a [f64]> {
    check_step(mu)?;
    adapt_counted(Algorithm::Dlms, state, x, d, mu, &mut ())?;
    Ok(&state.intermediate)
}

/// Sign-error adaptation `φ_n = W_n + μ·sign(e_n)·x_n`.
pub fn dse_lms_adapt<'a>(state: &'a mut NodeFilterState, x: &[f64], d: f64, mu: f64) -> Result<&'a [f64]> {
    check_step(mu)?;
    adapt_counted(Algorithm::DseLms, state, x, d, mu, &mut ())?;
    Ok(&state.intermediate)
}

pub fn adapt<'a>(algorithm: Algorithm, state: &'a mut NodeFilterState, x: &[f64], d: f64, mu: f64) -> Result<&'a [f64]> {
    check_step(mu)?;
    adapt_counted(algorithm, state, x, d, mu, &mut ())?;
    Ok(&state.intermediate)
}

fn combine_counted<'a, T: Tally>(
    a: &CombinationMatrix,
    node: usize,
    intermediate: impl Fn(usize) -> &'a [f64],
    out: &mut [f64],
    tally: &mut T,
) {
    out.iter_mut().for_each(|w| *w = 0.0);
    let column = a.column(node);
    for &(l, weight) in column {
        for (w, phi) in out.iter_mut().zip(intermediate(l)) {
            *w += weight * phi;
        }
    }
    let m = out.len() as u64;
    tally.mul(column.len() as u64 * m);
    tally.add(column.len().saturating_sub(1) as u64 * m);
}

/// Combination `W_n = Σ_l a_{l,n} φ_l` over the neighborhood of `node`.
pub fn diffusion_combine(intermediates: &[Vec<f64>], a: &CombinationMatrix, node: usize) -> Result<Vec<f64>> {
    check_dim(a.size(), intermediates.len())?;
    let m = intermediates.first().map_or(0, Vec::len);
    for phi in intermediates {
        check_dim(m, phi.len())?;
    }
    let mut out = vec![0.0; m];
    combine_counted(a, node, |l| intermediates[l].as_slice(), &mut out, &mut ());
    Ok(out)
}

/// A network of nodes running one diffusion algorithm in lockstep.
#[derive(Debug, Clone)]
pub struct DiffusionNetwork {
    algorithm: Algorithm,
    step_size: f64,
    states: Vec<NodeFilterState>,
    length: usize,
    scratch: Vec<f64>,
}

impl DiffusionNetwork {
    pub fn new(algorithm: Algorithm, step_size: f64, states: Vec<NodeFilterState>) -> Result<Self> {
        check_step(step_size)?;
        let length = states.first().map_or(0, NodeFilterState::len);
        if states.is_empty() || length == 0 {
            return Err(Error::invalid("states", "need at least one node of positive length"));
        }
        for s in &states {
            check_dim(length, s.len())?;
        }
        let scratch = vec![0.0; states.len() * length];
        Ok(Self {
            algorithm,
            step_size,
            states,
            length,
            scratch,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn states(&self) -> &[NodeFilterState] {
        &self.states
    }

    pub fn into_states(self) -> Vec<NodeFilterState> {
        self.states
    }

    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    /// One adapt-then-combine iteration. `regressors` holds the N regressors
    /// back to back (N×M); `desired` holds one sample per node.
    pub fn iterate(&mut self, a: &CombinationMatrix, regressors: &[f64], desired: &[f64]) -> Result<()> {
        self.iterate_counted(a, regressors, desired, &mut ())
    }

    /// [`iterate`](Self::iterate) while counting arithmetic into `tally`.
    pub fn iterate_counted<T: Tally>(
        &mut self,
        a: &CombinationMatrix,
        regressors: &[f64],
        desired: &[f64],
        tally: &mut T,
    ) -> Result<()> {
        let n = self.states.len();
        let m = self.length;
        check_dim(n, a.size())?;
        check_dim(n, desired.len())?;
        check_dim(n * m, regressors.len())?;
        for (node, state) in self.states.iter_mut().enumerate() {
            let x = &regressors[node * m..(node + 1) * m];
            adapt_counted(self.algorithm, state, x, desired[node], self.step_size, tally)?;
        }
        let states = &self.states;
        for (node, out) in self.scratch.chunks_exact_mut(m).enumerate() {
            combine_counted(a, node, |l| states[l].intermediate.as_slice(), out, tally);
        }
        for (state, w) in self.states.iter_mut().zip(self.scratch.chunks_exact(m)) {
            state.weights.copy_from_slice(w);
        }
        Ok(())
    }
}

/// Runs one synchronous adapt-then-combine iteration over `states`.
pub fn run_network_iteration(
    states: &mut Vec<NodeFilterState>,
    algorithm: Algorithm,
    a: &CombinationMatrix,
    regressors: &[f64],
    desired: &[f64],
    mu: f64,
) -> Result<()> {
    let mut network = DiffusionNetwork::new(algorithm, mu, std::mem::take(states))?;
    let outcome = network.iterate(a, regressors, desired);
    *states = network.into_states();
    outcome
}
