//! Mean-error analysis of the diffusion recursion and the network MSD metric.
//!
//! With `Ŵ_n = W_o - W_n` stacked over nodes, the mean error evolves as
//! `E[Ŵ(i)] = B·E[Ŵ(i-1)]` with `B = 𝒜ᵀ(I - E[SR])`, where `𝒜 = A ⊗ I_M`
//! and `E[SR] = μ·blockdiag{Σ_l α_l c_{l,n} R_{xx,l}}`. The measurement noise
//! term has zero mean and drops out.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::network::CombinationMatrix;

pub const POWER_ITERATION_TOLERANCE: f64 = 1e-10;
pub const POWER_ITERATION_CAP: usize = 10_000;

/// Network MSD of one realization, `(1/N) Σ_n ‖W_o - W_n‖²`.
pub fn msd<'a, I>(truth: &[f64], estimates: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for w in estimates {
        check_dim(truth.len(), w.len())?;
        total += truth.iter().zip(w).map(|(t, x)| (t - x) * (t - x)).sum::<f64>();
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("estimates", "no nodes"));
    }
    Ok(total / count as f64)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Ensemble-averaged network MSD, one value per iteration starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdCurve {
    pub values: Vec<f64>,
}

pub const CSV_HEADER: &str = "iteration,msd_linear,msd_db";

impl MsdCurve {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn db(&self) -> Vec<f64> {
        self.values.iter().map(|&v| to_db(v)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Mean of the last `window` linear values, in dB.
    pub fn steady_state_db(&self, window: usize) -> f64 {
        let window = window.clamp(1, self.values.len().max(1));
        let tail = &self.values[self.values.len().saturating_sub(window)..];
        to_db(tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// Writes `iteration,msd_linear,msd_db` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for (i, &v) in self.values.iter().enumerate() {
            writeln!(out, "{},{},{}", i + 1, v, to_db(v))?;
        }
        out.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Spectral radius by power iteration.
///
/// The estimate is `sqrt(‖B²v‖)` for the normalized iterate `v`, which also
/// converges when the dominant eigenvalues come as a `±λ` pair.
pub fn spectral_radius(matrix: &Matrix) -> Result<f64> {
    if !matrix.is_square() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            found: matrix.cols(),
        });
    }
    let n = matrix.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.5 * ((k + 1) as f64).sin()).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut previous = f64::NAN;
    let mut previous_step = f64::NAN;
    for _ in 0..POWER_ITERATION_CAP {
        matrix.mul_vec_into(&v, &mut w);
        matrix.mul_vec_into(&w, &mut u);
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let estimate = norm.sqrt();
        let step = (estimate - previous).abs();
        // Remaining error of a geometrically converging sequence.
        let rate = step / previous_step;
        let remaining = if step <= 8.0 * f64::EPSILON * estimate {
            0.0
        } else if rate < 1.0 {
            step / (1.0 - rate)
        } else {
            f64::INFINITY
        };
        if remaining <= POWER_ITERATION_TOLERANCE * estimate {
            return Ok(estimate);
        }
        previous = estimate;
        previous_step = step;
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / norm;
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_ITERATION_CAP,
    })
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Ingredients of the mean-error recursion with a frozen step-size snapshot.
#[derive(Debug, Clone)]
pub struct MeanRecursionModel {
    /// `A`, combination weights.
    pub combination: CombinationMatrix,
    /// `C`, weights applied to neighbors' covariances.
    pub adaptation_weights: CombinationMatrix,
    pub step_size: f64,
    /// Per-node step-size snapshot `α_n`.
    pub alphas: Vec<f64>,
    /// Per-node regressor covariances `R_{xx,n}`, all M×M.
    pub covariances: Vec<Matrix>,
}

impl MeanRecursionModel {
    pub fn new(
        combination: CombinationMatrix,
        adaptation_weights: CombinationMatrix,
        step_size: f64,
        alphas: Vec<f64>,
        covariances: Vec<Matrix>,
    ) -> Result<Self> {
        let model = Self {
            combination,
            adaptation_weights,
            step_size,
            alphas,
            covariances,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let n = self.combination.size();
        check_dim(n, self.adaptation_weights.size())?;
        check_dim(n, self.alphas.len())?;
        check_dim(n, self.covariances.len())?;
        let m = self.filter_length();
        for r in &self.covariances {
            check_dim(m, r.rows())?;
            check_dim(m, r.cols())?;
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.combination.size()
    }

    pub fn filter_length(&self) -> usize {
        self.covariances.first().map_or(0, Matrix::rows)
    }

    /// `Σ_l α_l c_{l,n} R_{xx,l}` for node `n`.
    pub fn weighted_covariance(&self, node: usize) -> Matrix {
        weighted_covariance(&self.alphas, &self.adaptation_weights, &self.covariances, node)
    }

    /// Applies `B` to a stacked error vector without forming `B`.
    pub fn apply(&self, error: &[f64]) -> Result<Vec<f64>> {
        let n = self.node_count();
        let m = self.filter_length();
        check_dim(n * m, error.len())?;
        let mut adapted = vec![0.0; n * m];
        for l in 0..n {
            let block = &error[l * m..(l + 1) * m];
            let d = self.weighted_covariance(l).mul_vec(block);
            for k in 0..m {
                adapted[l * m + k] = block[k] - self.step_size * d[k];
            }
        }
        let mut out = vec![0.0; n * m];
        for node in 0..n {
            for &(l, a) in self.combination.column(node) {
                for k in 0..m {
                    out[node * m + k] += a * adapted[l * m + k];
                }
            }
        }
        Ok(out)
    }
}

fn weighted_covariance(alphas: &[f64], c: &CombinationMatrix, covariances: &[Matrix], node: usize) -> Matrix {
    let m = covariances[0].rows();
    let mut acc = Matrix::zeros(m, m);
    for &(l, weight) in c.column(node) {
        acc.add_scaled(alphas[l] * weight, &covariances[l]);
    }
    acc
}

/// `B = 𝒜ᵀ(I - E[SR])`, an MN×MN matrix whose `(n, l)` block is
/// `a_{l,n}(I - μ Σ_k α_k c_{k,l} R_{xx,k})`.
pub fn mean_error_matrix(model: &MeanRecursionModel) -> Result<Matrix> {
    model.check()?;
    let n = model.node_count();
    let m = model.filter_length();
    let contractions: Vec<Matrix> = (0..n)
        .map(|l| {
            let mut block = Matrix::identity(m);
            block.add_scaled(-model.step_size, &model.weighted_covariance(l));
            block
        })
        .collect();
    let mut b = Matrix::zeros(n * m, n * m);
    for node in 0..n {
        for &(l, a) in model.combination.column(node) {
            for r in 0..m {
                for c in 0..m {
                    b[(node * m + r, l * m + c)] = a * contractions[l][(r, c)];
                }
            }
        }
    }
    Ok(b)
}

/// Which covariance sums enter the step-size bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// Max over nodes of `ρ(Σ_l α_l c_{l,n} R_l)`, one per diagonal block.
    #[default]
    PerNode,
    /// The single sum `Σ_l α_l c_{l,l} R_l` over self weights.
    SelfWeights,
}

/// Largest step size `μ_max = 2 / ρ_max` that keeps the mean error stable.
pub fn stability_bound(
    alphas: &[f64],
    c: &CombinationMatrix,
    covariances: &[Matrix],
    variant: BoundVariant,
) -> Result<f64> {
    let n = c.size();
    check_dim(n, alphas.len())?;
    check_dim(n, covariances.len())?;
    let m = covariances.first().map_or(0, Matrix::rows);
    for (node, r) in covariances.iter().enumerate() {
        check_dim(m, r.rows())?;
        if !r.is_positive_definite() {
            return Err(Error::NotPositiveDefinite { node });
        }
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::invalid("alphas", format!("step sizes must be nonnegative, got {a}")));
    }
    let rho = match variant {
        BoundVariant::PerNode => (0..n)
            .map(|node| symmetric_radius(&weighted_covariance(alphas, c, covariances, node)))
            .fold(0.0f64, f64::max),
        BoundVariant::SelfWeights => {
            let mut acc = Matrix::zeros(m, m);
            for l in 0..n {
                acc.add_scaled(alphas[l] * c.weight(l, l), &covariances[l]);
            }
            symmetric_radius(&acc)
        }
    };
    Ok(2.0 / rho)
}

/// Largest eigenvalue modulus of a symmetric matrix.
pub fn symmetric_radius(matrix: &Matrix) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(matrix.rows(), matrix.cols(), matrix.as_slice());
    m.symmetric_eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{uniform_combination, NetworkTopology};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn msd_examples() {
        let truth = [0.6, 0.8];
        assert_eq!(msd(&truth, [&truth[..], &truth[..]]).unwrap(), 0.0);
        let a = [0.6 + 0.2, 0.8];
        let b = [0.6, 0.8 - 0.4];
        assert!((msd(&truth, [&a[..], &b[..]]).unwrap() - 0.10).abs() < 1e-15);
        assert!(msd(&truth, [&[1.0][..]]).is_err());
    }

    #[test]
    fn msd_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<f64> = (0..16).map(|_| rng.random::<f64>() - 0.5).collect();
        let nodes: Vec<Vec<f64>> = (0..20)
            .map(|_| truth.iter().map(|t| t + rng.random::<f64>() - 0.5).collect())
            .collect();
        let mut oracle = 0.0;
        for node in &nodes {
            for k in 0..16 {
                let d = truth[k] - node[k];
                oracle += d * d;
            }
        }
        oracle /= 20.0;
        let got = msd(&truth, nodes.iter().map(Vec::as_slice)).unwrap();
        assert!((got - oracle).abs() < 1e-12);

        let mut relabeled = nodes.clone();
        relabeled.reverse();
        relabeled.swap(2, 11);
        let permuted = msd(&truth, relabeled.iter().map(Vec::as_slice)).unwrap();
        assert!((permuted - got).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let curve = MsdCurve::new(vec![1.0, 0.1]);
        assert_eq!(curve.to_csv_string(), "iteration,msd_linear,msd_db\n1,1,0\n2,0.1,-10\n");
        assert!((curve.steady_state_db(2) - to_db(0.55)).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&Matrix::identity(4)).unwrap() - 1.0).abs() < 1e-12);
        let d = Matrix::from_diagonal(&[0.2, 0.9]);
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-9);
        let flip = Matrix::from_diagonal(&[-0.7, 0.7, 0.1]);
        assert!((spectral_radius(&flip).unwrap() - 0.7).abs() < 1e-9);
        assert_eq!(spectral_radius(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        assert!(spectral_radius(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn rotation_does_not_converge() {
        let rot = Matrix::from_row_major(2, 2, vec![0.6, -0.8, 0.8, 0.6]).unwrap();
        // ‖R²v‖ = 1 for every unit v, so the estimate converges immediately
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-12);
        let mut shear = Matrix::zeros(3, 3);
        // eigenvalues are the cube roots of 0.5: one real, a complex pair of equal modulus
        shear[(0, 1)] = 1.0;
        shear[(1, 2)] = 1.0;
        shear[(2, 0)] = 0.5;
        assert!(matches!(spectral_radius(&shear), Err(Error::NoConvergence { .. })));
    }

    fn model(n_topology: &NetworkTopology, mu: f64, alphas: Vec<f64>, variances: &[f64], m: usize) -> MeanRecursionModel {
        let a = uniform_combination(n_topology);
        let covs = variances.iter().map(|&v| Matrix::from_diagonal(&vec![v; m])).collect();
        MeanRecursionModel::new(a.clone(), a, mu, alphas, covs).unwrap()
    }

    #[test]
    fn zero_step_gives_pure_combination() {
        let t = NetworkTopology::ring(4).unwrap();
        let md = model(&t, 0.0, vec![1.0; 4], &[1.0, 2.0, 0.5, 1.5], 2);
        let b = mean_error_matrix(&md).unwrap();
        let a = uniform_combination(&t);
        for n in 0..4 {
            for l in 0..4 {
                for r in 0..2 {
                    for c in 0..2 {
                        let expected = if r == c { a.weight(l, n) } else { 0.0 };
                        assert_eq!(b[(n * 2 + r, l * 2 + c)], expected);
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_network_collapses() {
        let t = NetworkTopology::from_edges(1, &[]).unwrap();
        let md = model(&t, 0.3, vec![0.8], &[2.0], 1);
        let b = mean_error_matrix(&md).unwrap();
        assert!((b[(0, 0)] - (1.0 - 0.3 * 0.8 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn block_matrix_matches_kronecker_assembly() {
        let t = NetworkTopology::ring(3).unwrap();
        let (m, n, mu) = (2, 3, 0.4);
        let alphas = vec![0.9, 1.1, 0.7];
        let variances = [0.5, 1.0, 1.5];
        let md = model(&t, mu, alphas.clone(), &variances, m);
        let b = mean_error_matrix(&md).unwrap();

        // brute force: 𝒜ᵀ as an explicit Kronecker product times (I - E[SR])
        let a = uniform_combination(&t);
        let big_a = Matrix::from_fn(n * m, n * m, |r, c| {
            if r % m == c % m {
                a.weight(r / m, c / m)
            } else {
                0.0
            }
        });
        let mut esr = Matrix::zeros(n * m, n * m);
        for node in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += alphas[l] * a.weight(l, node) * variances[l];
            }
            for k in 0..m {
                esr[(node * m + k, node * m + k)] = mu * s;
            }
        }
        let mut inner = Matrix::identity(n * m);
        inner.add_scaled(-1.0, &esr);
        let oracle = big_a.transpose().matmul(&inner);
        for r in 0..n * m {
            for c in 0..n * m {
                assert!((b[(r, c)] - oracle[(r, c)]).abs() < 1e-15);
            }
        }
        let v: Vec<f64> = (0..n * m).map(|k| (k as f64).cos()).collect();
        let direct = md.apply(&v).unwrap();
        for (x, y) in direct.iter().zip(b.mul_vec(&v)) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn classical_lms_bound() {
        let c = CombinationMatrix::identity(1);
        let r = vec![Matrix::from_diagonal(&[2.5; 3])];
        let mu = stability_bound(&[1.0], &c, &r, BoundVariant::PerNode).unwrap();
        assert!((mu - 2.0 / 2.5).abs() < 1e-9);
        let doubled = vec![r[0].scale(2.0)];
        let mu2 = stability_bound(&[1.0], &c, &doubled, BoundVariant::PerNode).unwrap();
        assert!((mu2 - mu / 2.0).abs() < 1e-9);
    }

    #[test]
    fn three_node_bound_matches_closed_form() {
        let t = NetworkTopology::ring(3).unwrap();
        let c = uniform_combination(&t);
        let variances = [0.5, 1.0, 1.5];
        let covs: Vec<Matrix> = variances.iter().map(|&v| Matrix::from_diagonal(&[v, v])).collect();
        let mu = stability_bound(&[1.0; 3], &c, &covs, BoundVariant::PerNode).unwrap();
        // every block is (0.5 + 1.0 + 1.5)/3 · I
        let closed = (0..3)
            .map(|n| (0..3).map(|l| c.weight(l, n) * variances[l]).sum::<f64>())
            .fold(0.0f64, f64::max);
        assert!((mu - 2.0 / closed).abs() < 1e-9);

        let literal = stability_bound(&[1.0; 3], &c, &covs, BoundVariant::SelfWeights).unwrap();
        assert!((literal - 2.0 / closed).abs() < 1e-9);
    }

    #[test]
    fn bound_rejects_indefinite_covariance() {
        let c = CombinationMatrix::identity(2);
        let covs = vec![Matrix::identity(2), Matrix::from_diagonal(&[1.0, -1.0])];
        assert!(matches!(
            stability_bound(&[1.0, 1.0], &c, &covs, BoundVariant::PerNode),
            Err(Error::NotPositiveDefinite { node: 1 })
        ));
    }
}
