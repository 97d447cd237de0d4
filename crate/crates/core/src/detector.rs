//! Centralized running-mean LLR detector and the running-consensus
//! distributed detector.
//!
//! The distributed recursion is
//!
//! ```text
//! x(1)   = N·η(1)
//! x(k+1) = k/(k+1) · W(k)·x(k) + N/(k+1) · η(k+1)
//! ```
//!
//! Both detectors decide H1 iff their decision variable is strictly positive.

use std::io::{self, Write};

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::model::{GaussianHypothesisPair, Hypothesis};
use crate::scalar::Scalar;
use crate::schedule::WeightSchedule;

/// Zero-threshold test; a tie at exactly zero goes to H0.
pub fn decide<T: Scalar>(variable: T) -> Hypothesis {
    if variable > T::zero() {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// D(k) = (1/k)·Σ_{j≤k} L(j).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralizedState<T> {
    pub k: usize,
    pub d: T,
}

impl<T: Scalar> Default for CentralizedState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> CentralizedState<T> {
    pub fn new() -> Self {
        Self { k: 0, d: T::zero() }
    }

    pub fn step_llr(&mut self, llr: T) {
        let k = T::lit(self.k as f64);
        self.d = (k * self.d + llr) / (k + T::one());
        self.k += 1;
    }

    pub fn step(&mut self, model: &GaussianHypothesisPair<T>, y: &[T]) -> Result<()> {
        self.step_llr(model.llr(y)?);
        Ok(())
    }

    pub fn decision(&self) -> Hypothesis {
        decide(self.d)
    }
}

/// Per-node decision variables x(k).
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedState<T> {
    pub k: usize,
    pub x: Vec<T>,
}

impl<T: Scalar> DistributedState<T> {
    /// x(1) = N·η(1).
    pub fn init(eta: &[T]) -> Self {
        let n = T::lit(eta.len() as f64);
        Self {
            k: 1,
            x: eta.iter().map(|&e| n * e).collect(),
        }
    }

    pub fn init_from_observation(model: &GaussianHypothesisPair<T>, y: &[T]) -> Result<Self> {
        Ok(Self::init(&model.local_innovations(y)?))
    }

    /// Advances from x(k) to x(k+1) with W(k) and η(k+1).
    pub fn step_with(&mut self, w: &Matrix<T>, eta_next: &[T]) -> Result<()> {
        let n = self.x.len();
        if eta_next.len() != n || w.rows() != n || w.cols() != n {
            return Err(shape_err(
                format!("innovations of length {n} and {n}x{n} weights"),
                format!("{} and {}x{}", eta_next.len(), w.rows(), w.cols()),
            ));
        }
        let k = T::lit(self.k as f64);
        let k1 = k + T::one();
        let mixing = k / k1;
        let gain = T::lit(n as f64) / k1;
        let mixed = w.mul_vec(&self.x);
        for ((x, m), &e) in self.x.iter_mut().zip(mixed).zip(eta_next) {
            *x = mixing * m + gain * e;
        }
        self.k += 1;
        Ok(())
    }

    pub fn step(&mut self, schedule: &WeightSchedule<T>, eta_next: &[T]) -> Result<()> {
        let w = schedule.at(self.k);
        self.step_with(w, eta_next)
    }

    pub fn step_observation(
        &mut self,
        model: &GaussianHypothesisPair<T>,
        schedule: &WeightSchedule<T>,
        y_next: &[T],
    ) -> Result<()> {
        let eta = model.local_innovations(y_next)?;
        self.step(schedule, &eta)
    }

    pub fn network_average(&self) -> T {
        self.x.iter().copied().sum::<T>() / T::lit(self.x.len() as f64)
    }

    pub fn decisions(&self) -> Vec<Hypothesis> {
        self.x.iter().map(|&x| decide(x)).collect()
    }
}

/// x(k) = (N/k)·Σ_{j<k} Φ(k, j)·η(j) + (N/k)·η(k), evaluated directly from
/// the innovation history `innovations[0..k]` = η(1), …, η(k).
pub fn distributed_closed_form<T: Scalar>(
    schedule: &WeightSchedule<T>,
    innovations: &[Vec<T>],
) -> Result<Vec<T>> {
    let k = innovations.len();
    if k < 2 {
        return Err(Error::Index(format!("closed form needs k >= 2, got {k}")));
    }
    let n = schedule.n();
    if let Some(bad) = innovations.iter().find(|e| e.len() != n) {
        return Err(shape_err(format!("innovations of length {n}"), bad.len()));
    }
    let mut acc = innovations[k - 1].clone();
    for (idx, eta) in innovations[..k - 1].iter().enumerate() {
        let j = idx + 1;
        let phi = schedule.forward_product(k, j)?;
        for (a, b) in acc.iter_mut().zip(phi.mul_vec(eta)) {
            *a += b;
        }
    }
    let scale = T::lit(n as f64) / T::lit(k as f64);
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

/// Writes one trajectory row per step: `k,D,x_1,...,x_N`.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W, n: usize) -> io::Result<Self> {
        let mut header = String::from("k,D");
        for i in 1..=n {
            header.push_str(&format!(",x_{i}"));
        }
        writeln!(out, "{header}")?;
        Ok(Self { out })
    }

    pub fn record<T: Scalar>(
        &mut self,
        central: &CentralizedState<T>,
        dist: &DistributedState<T>,
    ) -> io::Result<()> {
        write!(self.out, "{},{}", dist.k, central.d.to_f64_lossy())?;
        for x in &dist.x {
            write!(self.out, ",{}", x.to_f64_lossy())?;
        }
        writeln!(self.out)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
