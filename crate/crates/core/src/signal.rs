//! Data generation: the unknown system, per-node regressors, measurement
//! noise with optional Bernoulli-Gaussian impulses, and desired signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// The system being identified, optionally drifting as a Gaussian random walk.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownSystem {
    pub weights: Vec<f64>,
    pub process_noise_std: f64,
}

impl UnknownSystem {
    pub fn new(weights: Vec<f64>, process_noise_std: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weights", "system length must be at least 1"));
        }
        if !(process_noise_std >= 0.0 && process_noise_std.is_finite()) {
            return Err(Error::invalid(
                "process_noise_std",
                format!("must be finite and nonnegative, got {process_noise_std}"),
            ));
        }
        Ok(Self {
            weights,
            process_noise_std,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_static(&self) -> bool {
        self.process_noise_std == 0.0
    }

    /// Returns the system after one random-walk step `W(i) = W(i-1) + p(i)`.
    pub fn random_walk_step<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut next = self.clone();
        next.drift(rng);
        next
    }

    /// In-place random-walk step. A static system consumes no randomness.
    pub fn drift<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.is_static() {
            return;
        }
        for w in &mut self.weights {
            *w += self.process_noise_std * normal(rng);
        }
    }
}

/// Draws a length-`m` system with i.i.d. Gaussian entries scaled to unit norm.
pub fn gen_unknown_system(m: usize, seed: u64) -> Result<UnknownSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unknown_system_with_rng(m, &mut rng)
}

pub fn unknown_system_with_rng<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<UnknownSystem> {
    if m == 0 {
        return Err(Error::invalid("m", "system length must be at least 1"));
    }
    loop {
        let w: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
        let norm = dot(&w, &w).sqrt();
        if norm > 0.0 {
            return UnknownSystem::new(w.into_iter().map(|x| x / norm).collect(), 0.0);
        }
    }
}

/// Second-order statistics of one node's regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorProfile {
    /// `N(0, variance * I)`.
    White { variance: f64 },
    /// Independent coordinates with per-coordinate variances.
    Diagonal { variances: Vec<f64> },
    /// Tapped delay line over an AR(1) process with the given stationary
    /// variance and lag-one correlation.
    Correlated { variance: f64, correlation: f64 },
}

fn check_variance(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("variance must be positive and finite, got {v}")))
    }
}

impl RegressorProfile {
    pub fn white(variance: f64) -> Result<Self> {
        check_variance("variance", variance)?;
        Ok(Self::White { variance })
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::invalid("variances", "empty"));
        }
        for &v in &variances {
            check_variance("variances", v)?;
        }
        Ok(Self::Diagonal { variances })
    }

    pub fn correlated(variance: f64, correlation: f64) -> Result<Self> {
        check_variance("variance", variance)?;
        if !(0.0..1.0).contains(&correlation) {
            return Err(Error::invalid(
                "correlation",
                format!("must lie in [0, 1), got {correlation}"),
            ));
        }
        Ok(Self::Correlated {
            variance,
            correlation,
        })
    }

    /// Re-checks the invariants; used after deserialization.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Self::White { variance } => check_variance("variance", *variance),
            Self::Diagonal { variances } => {
                check_dim(m, variances.len())?;
                variances.iter().try_for_each(|&v| check_variance("variances", v))
            }
            Self::Correlated {
                variance,
                correlation,
            } => Self::correlated(*variance, *correlation).map(|_| ()),
        }
    }

    /// The M×M covariance `R_xx` of a regressor drawn from this profile.
    pub fn covariance(&self, m: usize) -> Matrix {
        match self {
            Self::White { variance } => Matrix::from_diagonal(&vec![*variance; m]),
            Self::Diagonal { variances } => Matrix::from_diagonal(variances),
            Self::Correlated {
                variance,
                correlation,
            } => Matrix::from_fn(m, m, |r, c| {
                variance * correlation.powi((r as i32 - c as i32).abs())
            }),
        }
    }

    /// Trace of the covariance, i.e. `E‖x‖²`.
    pub fn power(&self, m: usize) -> f64 {
        match self {
            Self::White { variance } | Self::Correlated { variance, .. } => variance * m as f64,
            Self::Diagonal { variances } => variances.iter().sum(),
        }
    }
}

/// Stateful regressor generator for one node.
#[derive(Debug, Clone)]
pub struct RegressorStream {
    profile: RegressorProfile,
    /// Delay line for the correlated profile, newest sample first.
    window: Vec<f64>,
    primed: bool,
}

impl RegressorStream {
    pub fn new(profile: RegressorProfile, m: usize) -> Result<Self> {
        profile.validate(m)?;
        if m == 0 {
            return Err(Error::invalid("m", "regressor length must be at least 1"));
        }
        Ok(Self {
            profile,
            window: vec![0.0; m],
            primed: false,
        })
    }

    pub fn profile(&self) -> &RegressorProfile {
        &self.profile
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Writes the next regressor into `out`.
    pub fn fill<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.window.len(), "regressor length mismatch");
        match &self.profile {
            RegressorProfile::White { variance } => {
                let sd = variance.sqrt();
                out.iter_mut().for_each(|x| *x = sd * normal(rng));
            }
            RegressorProfile::Diagonal { variances } => {
                for (x, v) in out.iter_mut().zip(variances) {
                    *x = v.sqrt() * normal(rng);
                }
            }
            RegressorProfile::Correlated {
                variance,
                correlation,
            } => {
                let sd = variance.sqrt();
                let innovation = (1.0 - correlation * correlation).sqrt() * sd;
                if !self.primed {
                    // start the delay line in its stationary distribution
                    let m = self.window.len();
                    self.window[m - 1] = sd * normal(rng);
                    for k in (0..m - 1).rev() {
                        self.window[k] = correlation * self.window[k + 1] + innovation * normal(rng);
                    }
                    self.primed = true;
                } else {
                    let next = correlation * self.window[0] + innovation * normal(rng);
                    self.window.rotate_right(1);
                    self.window[0] = next;
                }
                out.copy_from_slice(&self.window);
            }
        }
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.window.len()];
        self.fill(rng, &mut out);
        out
    }
}

/// Per-node regressor generators.
#[derive(Debug, Clone)]
pub struct RegressorBank {
    streams: Vec<RegressorStream>,
}

impl RegressorBank {
    pub fn new(profiles: &[RegressorProfile], m: usize) -> Result<Self> {
        let streams = profiles
            .iter()
            .map(|p| RegressorStream::new(p.clone(), m))
            .collect::<Result<_>>()?;
        Ok(Self { streams })
    }

    pub fn node_count(&self) -> usize {
        self.streams.len()
    }

    /// Draws node `node`'s next regressor into `out`.
    pub fn gen_regressor<R: Rng + ?Sized>(&mut self, node: usize, rng: &mut R, out: &mut [f64]) {
        self.streams[node].fill(rng, out);
    }
}

/// Bernoulli-Gaussian impulses `v = f·g` with `P(g = 1) = probability` and
/// `f ~ N(0, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulsiveNoise {
    pub probability: f64,
    pub variance: f64,
}

/// Measurement noise at one node: Gaussian background plus optional impulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gaussian_variance: f64,
    pub impulsive: Option<ImpulsiveNoise>,
}

impl NoiseModel {
    pub fn gaussian(variance: f64) -> Result<Self> {
        let model = Self {
            gaussian_variance: variance,
            impulsive: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_impulses(gaussian_variance: f64, probability: f64, variance: f64) -> Result<Self> {
        let model = Self {
            gaussian_variance,
            impulsive: Some(ImpulsiveNoise {
                probability,
                variance,
            }),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_variance >= 0.0 && self.gaussian_variance.is_finite()) {
            return Err(Error::invalid(
                "gaussian_variance",
                format!("must be finite and nonnegative, got {}", self.gaussian_variance),
            ));
        }
        if let Some(imp) = &self.impulsive {
            if !(0.0..=1.0).contains(&imp.probability) {
                return Err(Error::invalid(
                    "probability",
                    format!("must lie in [0, 1], got {}", imp.probability),
                ));
            }
            check_variance("impulse variance", imp.variance)?;
        }
        Ok(())
    }

    /// Variance of the total noise, `σ_ε² + Pr·σ_f²`.
    pub fn total_variance(&self) -> f64 {
        self.gaussian_variance
            + self
                .impulsive
                .map_or(0.0, |imp| imp.probability * imp.variance)
    }

    /// One noise sample `ε + f·g`. Always consumes the same number of draws
    /// so that streams stay aligned whatever the impulse outcome.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let eps = self.gaussian_variance.sqrt() * normal(rng);
        match &self.impulsive {
            None => eps,
            Some(imp) => {
                let gate = rng.random::<f64>() < imp.probability;
                let amplitude = imp.variance.sqrt() * normal(rng);
                if gate {
                    eps + amplitude
                } else {
                    eps
                }
            }
        }
    }
}

/// Noise sample for `node` from a per-node model list.
pub fn sample_noise<R: Rng + ?Sized>(models: &[NoiseModel], node: usize, rng: &mut R) -> f64 {
    models[node].sample(rng)
}

/// Desired signal `d = xᵀ W_o + noise`.
pub fn measure(system: &UnknownSystem, x: &[f64], noise_sample: f64) -> Result<f64> {
    check_dim(system.len(), x.len())?;
    Ok(dot(x, &system.weights) + noise_sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sample_variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn unknown_system_has_unit_norm() {
        let s = gen_unknown_system(16, 11).unwrap();
        assert_eq!(s.len(), 16);
        assert!((dot(&s.weights, &s.weights) - 1.0).abs() < 1e-12);
        let scalar = gen_unknown_system(1, 5).unwrap();
        assert!((scalar.weights[0].abs() - 1.0).abs() < 1e-15);
        let other = gen_unknown_system(16, 12).unwrap();
        assert!(dot(&s.weights, &other.weights) < 1.0 - 1e-9);
        assert!(gen_unknown_system(0, 1).is_err());
    }

    #[test]
    fn static_system_does_not_move() {
        let s = gen_unknown_system(8, 1).unwrap();
        let mut r = rng(2);
        assert_eq!(s.random_walk_step(&mut r), s);
    }

    #[test]
    fn random_walk_increment_statistics() {
        let s = UnknownSystem::new(vec![0.0; 16], 1.0).unwrap();
        let mut r = rng(3);
        let trials = 100_000;
        let mut energy = 0.0;
        let mut mean = vec![0.0; 16];
        for _ in 0..trials {
            let next = s.random_walk_step(&mut r);
            energy += dot(&next.weights, &next.weights);
            for (m, w) in mean.iter_mut().zip(&next.weights) {
                *m += w;
            }
        }
        let energy = energy / trials as f64;
        assert!((energy - 16.0).abs() / 16.0 < 0.02, "E‖p‖² = {energy}");
        let bound = 3.0 / (trials as f64).sqrt();
        for m in mean {
            assert!((m / trials as f64).abs() < bound);
        }
    }

    #[test]
    fn white_regressor_covariance() {
        let m = 16;
        let mut stream = RegressorStream::new(RegressorProfile::white(1.0).unwrap(), m).unwrap();
        let cov = sample_covariance(&mut stream, m, 100_000, 4);
        let err = frobenius_diff(&cov, &Matrix::identity(m));
        assert!(err / (m as f64).sqrt() < 0.03, "relative Frobenius error {err}");
    }

    #[test]
    fn diagonal_and_correlated_covariances_converge() {
        let m = 4;
        let profiles = [
            RegressorProfile::diagonal(vec![0.5, 1.0, 1.5, 0.8]).unwrap(),
            RegressorProfile::correlated(1.2, 0.7).unwrap(),
        ];
        for (i, p) in profiles.into_iter().enumerate() {
            let target = p.covariance(m);
            let mut stream = RegressorStream::new(p, m).unwrap();
            let cov = sample_covariance(&mut stream, m, 100_000, 10 + i as u64);
            let rel = frobenius_diff(&cov, &target) / target.frobenius_norm();
            assert!(rel < 0.03, "profile {i}: relative error {rel}");
        }
    }

    #[test]
    fn zero_variance_is_rejected() {
        assert!(RegressorProfile::white(0.0).is_err());
        assert!(RegressorProfile::diagonal(vec![1.0, 0.0]).is_err());
        assert!(RegressorProfile::correlated(0.0, 0.5).is_err());
        assert!(RegressorProfile::correlated(1.0, 1.0).is_err());
        assert!(RegressorStream::new(RegressorProfile::Diagonal { variances: vec![1.0] }, 2).is_err());
    }

    #[test]
    fn uncorrelated_ar_is_white() {
        let mut stream = RegressorStream::new(RegressorProfile::correlated(1.0, 0.0).unwrap(), 4).unwrap();
        let mut r = rng(5);
        let seq: Vec<f64> = (0..100_000).map(|_| stream.next(&mut r)[0]).collect();
        let var = sample_variance(&seq);
        let lag1 = seq.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (seq.len() - 1) as f64 / var;
        assert!(lag1.abs() < 0.01, "lag-1 autocorrelation {lag1}");
    }

    #[test]
    fn correlated_stream_shifts_delay_line() {
        let mut stream = RegressorStream::new(RegressorProfile::correlated(1.0, 0.9).unwrap(), 3).unwrap();
        let mut r = rng(6);
        let a = stream.next(&mut r);
        let b = stream.next(&mut r);
        assert_eq!(&b[1..], &a[..2]);
    }

    #[test]
    fn noise_without_impulses() {
        let model = NoiseModel::with_impulses(0.01, 0.0, 0.2).unwrap();
        let mut r = rng(7);
        let xs: Vec<f64> = (0..200_000).map(|_| model.sample(&mut r)).collect();
        let v = sample_variance(&xs);
        assert!((v - 0.01).abs() / 0.01 < 0.02, "{v}");
    }

    #[test]
    fn always_on_impulses() {
        let model = NoiseModel::with_impulses(0.0, 1.0, 0.2).unwrap();
        let mut r = rng(8);
        let xs: Vec<f64> = (0..1_000_000).map(|_| model.sample(&mut r)).collect();
        let v = sample_variance(&xs);
        assert!((v - 0.2).abs() / 0.2 < 0.01, "{v}");
    }

    #[test]
    fn mixed_noise_variance() {
        let models = [NoiseModel::with_impulses(0.01, 0.4, 0.2).unwrap()];
        let mut r = rng(9);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_noise(&models, 0, &mut r)).collect();
        let v = sample_variance(&xs);
        assert!((v - 0.09).abs() / 0.09 < 0.02, "{v}");
        assert!((models[0].total_variance() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn invalid_noise_models() {
        assert!(NoiseModel::gaussian(-1.0).is_err());
        assert!(NoiseModel::with_impulses(0.01, 1.2, 0.2).is_err());
        assert!(NoiseModel::with_impulses(0.01, 0.5, 0.0).is_err());
    }

    #[test]
    fn measurement_examples() {
        let s = gen_unknown_system(16, 4).unwrap();
        assert!((measure(&s, &s.weights.clone(), 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(measure(&s, &[0.0; 16], 0.3).unwrap(), 0.3);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s2 = UnknownSystem::new(vec![h, -h], 0.0).unwrap();
        assert!((measure(&s2, &[1.0, 1.0], 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            measure(&s2, &[1.0], 0.0),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn generators_are_deterministic() {
        let profile = RegressorProfile::correlated(1.0, 0.5).unwrap();
        let draw = |seed| {
            let mut r = rng(seed);
            let mut s = RegressorStream::new(profile.clone(), 5).unwrap();
            (0..10).flat_map(|_| s.next(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
    }

    fn sample_covariance(stream: &mut RegressorStream, m: usize, draws: usize, seed: u64) -> Matrix {
        let mut r = rng(seed);
        let mut cov = Matrix::zeros(m, m);
        let mut x = vec![0.0; m];
        for _ in 0..draws {
            stream.fill(&mut r, &mut x);
            for a in 0..m {
                for b in 0..m {
                    cov[(a, b)] += x[a] * x[b];
                }
            }
        }
        cov.scale(1.0 / draws as f64)
    }

    fn frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
        let mut d = a.clone();
        d.add_scaled(-1.0, b);
        d.frobenius_norm()
    }
}
