//! The two vector norms behind the drift function: a monotone weighted-l1
//! norm built from the ARCH comparison matrix, and a scaled norm under which
//! the AR companion block is a strict contraction.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Monotone weighted-l1 norm ||x|| = sum_i w_i |x_i| with weights
/// w = (I - Lambda_bar)^{-T} 1, so that w' |x| = 1' (I - Lambda_bar)^{-1} |x|.
///
/// Requires spectral radius of `Lambda_bar` strictly below one. Weights are
/// cross-checked against a truncated Neumann series at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulletNorm {
    weights: Vec<f64>,
    spectral_radius_bar: f64,
}

impl BulletNorm {
    pub fn from_lambda_bar(lambda_bar: &DMatrix<f64>) -> Result<Self> {
        let q = lambda_bar.nrows();
        if q == 0 || lambda_bar.ncols() != q {
            return Err(Error::DimensionMismatch(
                "lambda_bar must be square with q >= 1".into(),
            ));
        }
        if lambda_bar.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid_argument(
                "lambda_bar entries must be finite and nonnegative",
            ));
        }
        let rho = spectral_radius(lambda_bar);
        if !(rho < 1.0) {
            return Err(Error::invalid_parameter(format!(
                "spectral radius of lambda_bar is {rho:.6}, need < 1"
            )));
        }

        let ident = DMatrix::identity(q, q);
        let system = (&ident - lambda_bar).transpose();
        let ones = DVector::from_element(q, 1.0);
        let weights = system
            .lu()
            .solve(&ones)
            .ok_or_else(|| Error::Numeric("I - lambda_bar is numerically singular".into()))?;

        // Neumann cross-check: w = sum_k (Lambda_bar^T)^k 1, carried far
        // enough that the geometric tail rho^k falls below the tolerance.
        let terms = if rho > 0.0 {
            ((-30.0 * std::f64::consts::LN_10) / rho.ln()).ceil() as usize
        } else {
            0
        }
        .clamp(200, 2_000_000);
        let lt = lambda_bar.transpose();
        let mut term = ones.clone();
        let mut series = ones.clone();
        for _ in 0..terms {
            term = &lt * &term;
            series += &term;
            if term.abs().max() < 1e-14 {
                break;
            }
        }
        let dev = (&weights - &series).abs().max();
        if dev > 1e-10 * weights.abs().max().max(1.0) {
            return Err(Error::Numeric(format!(
                "weight solve disagrees with Neumann series by {dev:.3e}"
            )));
        }

        let weights: Vec<f64> = weights.iter().copied().collect();
        if weights.iter().any(|&w| w < 1.0 - 1e-12) {
            return Err(Error::Numeric(
                "bullet norm weights must all be >= 1".into(),
            ));
        }
        Ok(BulletNorm {
            weights,
            spectral_radius_bar: rho,
        })
    }

    /// The l1 norm on R^q (all weights one); the degenerate no-feedback case.
    pub fn l1(q: usize) -> Self {
        BulletNorm {
            weights: vec![1.0; q],
            spectral_radius_bar: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spectral_radius_bar(&self) -> f64 {
        self.spectral_radius_bar
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights
            .iter()
            .zip(x)
            .map(|(w, v)| w * v.abs())
            .sum()
    }
}

/// Scaled norm ||x|| = max_{0 <= k < m} theta^{-k} ||Pi1^k x||_2 with
/// theta = (1 + rho(Pi1)) / 2 and m chosen so that ||Pi1^m||_2 <= theta^m.
///
/// Under this norm the induced matrix norm of Pi1 is at most theta < 1:
/// applying Pi1 shifts the max one power up, and the k = m term is dominated
/// by the k = 0 term through the operator-norm bound.
#[derive(Debug, Clone)]
pub struct StarNorm {
    powers: Vec<DMatrix<f64>>,
    theta: f64,
}

impl StarNorm {
    pub fn for_pi1(pi1: &DMatrix<f64>) -> Result<Self> {
        let n = pi1.nrows();
        if n == 0 {
            return Ok(StarNorm {
                powers: Vec::new(),
                theta: 0.0,
            });
        }
        if pi1.ncols() != n {
            return Err(Error::DimensionMismatch("Pi1 must be square".into()));
        }
        let rho = spectral_radius(pi1);
        if !(rho < 1.0) {
            return Err(Error::invalid_parameter(format!(
                "spectral radius of Pi1 is {rho:.6}, need < 1 (root condition)"
            )));
        }
        let theta = 0.5 * (1.0 + rho);
        let mut powers = vec![DMatrix::identity(n, n)];
        let mut current = pi1.clone();
        let mut theta_pow = theta;
        for _ in 0..512 {
            let op2 = current
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .copied()
                .fold(0.0, f64::max);
            if op2 <= theta_pow {
                return Ok(StarNorm { powers, theta });
            }
            powers.push(current.clone());
            current = &current * pi1;
            theta_pow *= theta;
        }
        Err(Error::Numeric(
            "star norm power sequence did not contract within 512 steps".into(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.powers.first().map_or(0, |m| m.nrows())
    }

    /// Certified upper bound for the induced norm of Pi1.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.powers.is_empty() {
            return 0.0;
        }
        debug_assert_eq!(x.len(), self.dim());
        let v = DVector::from_column_slice(x);
        let mut best = 0.0f64;
        let mut scale = 1.0;
        for m in &self.powers {
            best = best.max((m * &v).norm() * scale);
            scale /= self.theta;
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn companion(alpha_bar: &[f64]) -> DMatrix<f64> {
        let q = alpha_bar.len();
        let mut m = DMatrix::zeros(q, q);
        for (j, &a) in alpha_bar.iter().enumerate() {
            m[(0, j)] = a;
        }
        for i in 1..q {
            m[(i, i - 1)] = 1.0;
        }
        m
    }

    #[test]
    fn scalar_geometric_weight() {
        let n = BulletNorm::from_lambda_bar(&companion(&[0.5])).unwrap();
        assert_relative_eq!(n.weights()[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(n.eval(&[-3.0]), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_feedback_reduces_to_l1_for_q1() {
        let n = BulletNorm::from_lambda_bar(&companion(&[0.0])).unwrap();
        assert_eq!(n.weights(), &[1.0]);
    }

    #[test]
    fn q2_weights_and_radius() {
        // alpha_bar = (0.5, 0.3): radius from t^2 - 0.5 t - 0.3 = 0.
        let n = BulletNorm::from_lambda_bar(&companion(&[0.5, 0.3])).unwrap();
        let expected_rho = 0.5 * (0.5 + (0.25f64 + 1.2).sqrt());
        assert_relative_eq!(n.spectral_radius_bar(), expected_rho, epsilon = 1e-10);
        assert!((n.spectral_radius_bar() - 0.85208).abs() < 1e-4);
        // (I - L)^{-1} column sums: w = (10, 4).
        assert_relative_eq!(n.weights()[0], 10.0, epsilon = 1e-9);
        assert_relative_eq!(n.weights()[1], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn weights_match_200_term_neumann_series() {
        let lb = companion(&[0.5, 0.3]);
        let n = BulletNorm::from_lambda_bar(&lb).unwrap();
        let lt = lb.transpose();
        let mut term = DVector::from_element(2, 1.0);
        let mut series = term.clone();
        for _ in 0..200 {
            term = &lt * &term;
            series += &term;
        }
        for (w, s) in n.weights().iter().zip(series.iter()) {
            assert!((w - s).abs() < 1e-10, "{w} vs {s}");
        }
    }

    #[test]
    fn radius_at_least_one_is_rejected() {
        assert!(BulletNorm::from_lambda_bar(&companion(&[1.0])).is_err());
        assert!(BulletNorm::from_lambda_bar(&companion(&[0.7, 0.4])).is_err());
    }

    #[test]
    fn bullet_dominates_l1_with_positive_feedback() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = rng.random_range(1..=4usize);
            let mut alpha: Vec<f64> = (0..q).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = alpha.iter().sum();
            let target = rng.random_range(0.1..0.95);
            for a in alpha.iter_mut() {
                *a *= target / s;
            }
            let n = BulletNorm::from_lambda_bar(&companion(&alpha)).unwrap();
            let x: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            assert!(n.eval(&x) > l1, "bullet must strictly dominate l1");
        }
    }

    #[test]
    fn star_norm_contracts_pi1() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let k = rng.random_range(1..=4usize);
            let pi = crate::stability::random_stable_pi(k, &mut rng);
            let p1 = companion(&pi);
            let star = StarNorm::for_pi1(&p1).unwrap();
            assert!(star.theta() < 1.0);
            for _ in 0..50 {
                let x: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
                let nx = star.eval(&x);
                if nx == 0.0 {
                    continue;
                }
                let px = &p1 * DVector::from_column_slice(&x);
                let npx = star.eval(px.as_slice());
                assert!(
                    npx <= star.theta() * nx * (1.0 + 1e-12),
                    "contraction violated: {npx} vs {} * {nx}",
                    star.theta()
                );
            }
        }
    }

    #[test]
    fn star_norm_rejects_unstable_block() {
        let p1 = companion(&[1.05]);
        assert!(StarNorm::for_pi1(&p1).is_err());
    }

    #[test]
    fn star_norm_empty_dimension() {
        let star = StarNorm::for_pi1(&DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(star.eval(&[]), 0.0);
    }
}
