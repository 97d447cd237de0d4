//! Gaussian binary hypothesis problem: observations `y(k) = m_l + noise`
//! with spatially correlated, temporally independent noise of covariance S.
//!
//! The log-likelihood ratio of one observation is affine in `y` and splits
//! into per-sensor innovations `η_i = v_i (y_i − (m1_i + m0_i)/2)` with
//! `v = S⁻¹(m1 − m0)`; the innovations sum to the LLR.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Hypothesis label, also used as a decision label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }

    /// (−1)^(l+1): −1 under H0, +1 under H1.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Hypothesis::H0 => -T::one(),
            Hypothesis::H1 => T::one(),
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::H0 => f.write_str("H0"),
            Hypothesis::H1 => f.write_str("H1"),
        }
    }
}

/// Relative pivot floor for the covariance Cholesky factorization.
pub const SPD_PIVOT_TOL: f64 = 1e-12;
/// Absolute symmetry tolerance on the covariance, relative to its largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHypothesisPair<T> {
    m0: Vec<T>,
    m1: Vec<T>,
    cov: Matrix<T>,
    chol: Cholesky<T>,
    v: Vec<T>,
    llr_mean0: T,
    llr_mean1: T,
    llr_var: T,
}

/// Mean and covariance of the innovation vector η(k).
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationStats<T> {
    pub mean0: Vec<T>,
    pub mean1: Vec<T>,
    pub cov: Matrix<T>,
}

impl<T: Scalar> InnovationStats<T> {
    pub fn mean(&self, h: Hypothesis) -> &[T] {
        match h {
            Hypothesis::H0 => &self.mean0,
            Hypothesis::H1 => &self.mean1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    /// Time index, starting at 1.
    pub k: usize,
    pub y: Vec<T>,
}

impl<T: Scalar> GaussianHypothesisPair<T> {
    pub fn new(m0: Vec<T>, m1: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        let n = m0.len();
        if n == 0 {
            return Err(shape_err("at least one sensor", "0"));
        }
        if m1.len() != n {
            return Err(shape_err(format!("m1 of length {n}"), m1.len()));
        }
        if cov.rows() != n || cov.cols() != n {
            return Err(shape_err(
                format!("{n}x{n} covariance"),
                format!("{}x{}", cov.rows(), cov.cols()),
            ));
        }
        if m0.iter().chain(&m1).any(|x| !x.is_finite()) {
            return Err(Error::Parameter("non-finite mean entry".into()));
        }
        let scale = cov.max_abs().max(T::min_positive_value());
        if cov.asymmetry() > T::tol(SYMMETRY_TOL) * scale {
            return Err(Error::DegenerateCovariance(format!(
                "asymmetry {} exceeds tolerance",
                cov.asymmetry()
            )));
        }
        if m0 == m1 {
            return Err(Error::IndistinguishableHypotheses);
        }
        let chol = Cholesky::new(&cov, T::tol(SPD_PIVOT_TOL))?;
        let diff: Vec<T> = m1.iter().zip(&m0).map(|(&a, &b)| a - b).collect();
        let v = chol.solve(&diff);
        let llr_var = dot(&diff, &v);
        if !(llr_var > T::zero()) {
            return Err(Error::IndistinguishableHypotheses);
        }
        let half = T::lit(0.5);
        Ok(Self {
            m0,
            m1,
            cov,
            chol,
            v,
            llr_mean0: -half * llr_var,
            llr_mean1: half * llr_var,
            llr_var,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.m0.len()
    }

    pub fn mean(&self, h: Hypothesis) -> &[T] {
        match h {
            Hypothesis::H0 => &self.m0,
            Hypothesis::H1 => &self.m1,
        }
    }

    pub fn covariance(&self) -> &Matrix<T> {
        &self.cov
    }

    /// Lower-triangular square root C of S (CCᵀ = S).
    pub fn noise_factor(&self) -> &Matrix<T> {
        self.chol.lower()
    }

    /// v = S⁻¹(m1 − m0).
    pub fn v(&self) -> &[T] {
        &self.v
    }

    /// Mean of the LLR under `h`: ∓σ_L²/2.
    pub fn llr_mean(&self, h: Hypothesis) -> T {
        match h {
            Hypothesis::H0 => self.llr_mean0,
            Hypothesis::H1 => self.llr_mean1,
        }
    }

    /// σ_L² = (m1 − m0)ᵀS⁻¹(m1 − m0).
    pub fn llr_variance(&self) -> T {
        self.llr_var
    }

    fn midpoint(&self, i: usize) -> T {
        (self.m1[i] + self.m0[i]) * T::lit(0.5)
    }

    fn check_len(&self, y: &[T]) -> Result<()> {
        if y.len() != self.n_sensors() {
            return Err(shape_err(
                format!("observation of length {}", self.n_sensors()),
                y.len(),
            ));
        }
        Ok(())
    }

    /// Observation driven by an explicit standard normal vector: y = m_h + C·z.
    pub fn observation_from_noise(
        &self,
        h: Hypothesis,
        k: usize,
        z: &[T],
    ) -> Result<Observation<T>> {
        self.check_len(z)?;
        let noise = self.chol.lower().mul_vec(z);
        let y = self
            .mean(h)
            .iter()
            .zip(noise)
            .map(|(&m, e)| m + e)
            .collect();
        Ok(Observation { k, y })
    }

    pub fn sample_observation<R: Rng + ?Sized>(
        &self,
        h: Hypothesis,
        k: usize,
        rng: &mut R,
    ) -> Observation<T> {
        let z: Vec<T> = (0..self.n_sensors())
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        self.observation_from_noise(h, k, &z)
            .expect("noise length matches sensor count")
    }

    pub fn llr(&self, y: &[T]) -> Result<T> {
        self.check_len(y)?;
        Ok((0..y.len())
            .map(|i| self.v[i] * (y[i] - self.midpoint(i)))
            .sum())
    }

    pub fn local_innovations(&self, y: &[T]) -> Result<Vec<T>> {
        self.check_len(y)?;
        Ok((0..y.len())
            .map(|i| self.v[i] * (y[i] - self.midpoint(i)))
            .collect())
    }

    pub fn innovation_stats(&self) -> InnovationStats<T> {
        let half = T::lit(0.5);
        let mean1: Vec<T> = (0..self.n_sensors())
            .map(|i| self.v[i] * (self.m1[i] - self.m0[i]) * half)
            .collect();
        let mean0 = mean1.iter().map(|&x| -x).collect();
        let dv = Matrix::from_diagonal(&self.v);
        let cov = dv.matmul(&self.cov).matmul(&dv);
        InnovationStats { mean0, mean1, cov }
    }

    /// Relabels sensors: new sensor `i` is old sensor `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pick = |v: &[T]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        Self::new(pick(&self.m0), pick(&self.m1), self.cov.permuted(perm))
    }
}

/// Per-step random stream for one trial.
///
/// The ChaCha key is the concatenation of the master seed, the hypothesis,
/// the trial index and the time index, so every (trial, k) draw is
/// reproducible on its own and independent of how trials are scheduled.
pub fn observation_rng(master_seed: u64, h: Hypothesis, trial: u64, k: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&(h.index() as u64).to_le_bytes());
    key[16..24].copy_from_slice(&trial.to_le_bytes());
    key[24..32].copy_from_slice(&k.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Covariance of the form S_ij = ρ^|i−j|.
pub fn exponential_covariance<T: Scalar>(n: usize, rho: T) -> Matrix<T> {
    Matrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32))
}
