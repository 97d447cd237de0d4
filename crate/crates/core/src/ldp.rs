//! Large-deviations quantities of the Gaussian LLR and exact error analysis
//! of both detectors.
//!
//! Conditioned on `H_l` the per-step LLR is `N(m_L^(l), σ_L²)`, so its log-MGF
//! is `λ·m_L^(l) + λ²σ_L²/2` and its rate function is
//! `I_l(t) = (t − m_L^(l))² / (2σ_L²)`. The Chernoff information is
//! `I_0(0) = σ_L²/8`.
//!
//! The distributed recursion is linear in Gaussian innovations, so every
//! `x_i(k)` is exactly Gaussian. Propagating its first two moments gives
//! exact error probabilities at every node without simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{GaussianHypothesisPair, Hypothesis, InnovationStats};
use crate::scalar::Scalar;
use crate::schedule::WeightSchedule;

/// Standard normal upper tail `Q(x) = P(Z > x)`.
pub fn normal_q(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `ln Q(x)`, accurate far into the upper tail where `Q` underflows.
pub fn log_normal_q(x: f64) -> f64 {
    if x < 30.0 {
        return normal_q(x).ln();
    }
    // Asymptotic series Q(x) = φ(x)/x · (1 − 1/x² + 3/x⁴ − 15/x⁶ + 105/x⁸ − …)
    let x2 = x * x;
    let inv = 1.0 / x2;
    let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
    -0.5 * x2 - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Quadratic rate function `I(t) = (t − mean)² / (2·variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFunction<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> RateFunction<T> {
    pub fn for_hypothesis(model: &GaussianHypothesisPair<T>, h: Hypothesis) -> Self {
        Self {
            mean: model.llr_mean(h),
            variance: model.llr_variance(),
        }
    }

    pub fn eval(&self, t: T) -> T {
        let d = t - self.mean;
        d * d / (T::lit(2.0) * self.variance)
    }
}

pub fn rate_function<T: Scalar>(model: &GaussianHypothesisPair<T>, h: Hypothesis, t: T) -> T {
    RateFunction::for_hypothesis(model, h).eval(t)
}

/// Chernoff information `σ_L²/8 = (m1 − m0)ᵀS⁻¹(m1 − m0)/8`.
pub fn chernoff_information<T: Scalar>(model: &GaussianHypothesisPair<T>) -> T {
    model.llr_variance() / T::lit(8.0)
}

/// Log-MGF of the one-step LLR under `h`.
pub fn log_mgf<T: Scalar>(model: &GaussianHypothesisPair<T>, h: Hypothesis, lambda: T) -> T {
    lambda * model.llr_mean(h) + lambda * lambda * model.llr_variance() / T::lit(2.0)
}

/// Default search interval for the Fenchel–Legendre transform.
pub const FL_DEFAULT_INTERVAL: (f64, f64) = (-50.0, 50.0);

/// Numeric convex conjugate `sup_λ {λt − f(λ)}` over `interval` by
/// golden-section search. `f` must be convex on the interval.
pub fn fenchel_legendre<T: Scalar>(f: impl Fn(T) -> T, t: T, interval: (T, T)) -> Result<T> {
    let (lo0, hi0) = interval;
    if !(lo0 < hi0) {
        return Err(Error::Parameter(format!(
            "empty search interval [{lo0}, {hi0}]"
        )));
    }
    let g = |l: T| l * t - f(l);
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let width0 = hi0 - lo0;
    let x_tol = T::tol(1e-11) * width0.max(T::one());
    let (mut a, mut b) = (lo0, hi0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..400 {
        if b - a <= x_tol {
            break;
        }
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let arg = (a + b) / T::lit(2.0);
    let edge = T::tol(1e-6) * width0;
    if arg - lo0 <= edge {
        return Err(Error::MaximizerAtBoundary {
            boundary: lo0.to_f64_lossy(),
        });
    }
    if hi0 - arg <= edge {
        return Err(Error::MaximizerAtBoundary {
            boundary: hi0.to_f64_lossy(),
        });
    }
    Ok(g(arg))
}

/// Exponents `(lim (1/k) ln α(k), lim (1/k) ln β(k))` of the LLR test with
/// constant threshold `γ ∈ (m_L^(0), m_L^(1))`: `(−I_0(γ), γ − I_0(γ))`.
pub fn fixed_threshold_rates<T: Scalar>(
    model: &GaussianHypothesisPair<T>,
    gamma: T,
) -> Result<(T, T)> {
    let lo = model.llr_mean(Hypothesis::H0);
    let hi = model.llr_mean(Hypothesis::H1);
    if !(gamma > lo && gamma < hi) {
        return Err(Error::ThresholdOutOfRange {
            gamma: gamma.to_f64_lossy(),
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }
    let i0 = rate_function(model, Hypothesis::H0, gamma);
    Ok((-i0, gamma - i0))
}

/// Exact mean and covariance of x(k), k = 1..=k_max, under one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory<T> {
    pub hypothesis: Hypothesis,
    /// `means[k − 1]` = E[x(k)].
    pub means: Vec<Vec<T>>,
    /// `covariances[k − 1]` = Cov[x(k)].
    pub covariances: Vec<Matrix<T>>,
}

impl<T: Scalar> MomentTrajectory<T> {
    pub fn k_max(&self) -> usize {
        self.means.len()
    }

    pub fn n(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn mean(&self, k: usize) -> &[T] {
        &self.means[k - 1]
    }

    pub fn covariance(&self, k: usize) -> &Matrix<T> {
        &self.covariances[k - 1]
    }

    pub fn variance(&self, k: usize, node: usize) -> T {
        self.covariances[k - 1][(node, node)]
    }
}

/// μ(1) = N·m_η, P(1) = N²·S_η, then
/// μ(k+1) = k/(k+1)·W(k)μ(k) + N/(k+1)·m_η and
/// P(k+1) = (k/(k+1))²·W(k)P(k)W(k)ᵀ + (N/(k+1))²·S_η.
pub fn propagate_moments<T: Scalar>(
    model: &GaussianHypothesisPair<T>,
    schedule: &WeightSchedule<T>,
    h: Hypothesis,
    k_max: usize,
) -> Result<MomentTrajectory<T>> {
    if k_max == 0 {
        return Err(Error::Parameter("k_max must be at least 1".into()));
    }
    let n = model.n_sensors();
    if schedule.n() != n {
        return Err(Error::Shape {
            expected: format!("schedule on {n} nodes"),
            got: schedule.n().to_string(),
        });
    }
    let stats = model.innovation_stats();
    let m_eta = stats.mean(h);
    let nn = T::lit(n as f64);
    let mut mean: Vec<T> = m_eta.iter().map(|&m| nn * m).collect();
    let mut cov = stats.cov.scale(nn * nn);
    let mut means = Vec::with_capacity(k_max);
    let mut covariances = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        means.push(mean.clone());
        covariances.push(cov.clone());
        if k == k_max {
            break;
        }
        let kk = T::lit(k as f64);
        let mix = kk / (kk + T::one());
        let gain = nn / (kk + T::one());
        let w = schedule.at(k);
        mean = w
            .mul_vec(&mean)
            .into_iter()
            .zip(m_eta)
            .map(|(a, &m)| mix * a + gain * m)
            .collect();
        let wpw = w.matmul(&cov).matmul(&w.transpose());
        // Symmetrize to keep round-off from accumulating in the off-diagonal.
        let wpw = wpw.add(&wpw.transpose()).scale(T::lit(0.5));
        cov = wpw.scale(mix * mix).add(&stats.cov.scale(gain * gain));
    }
    Ok(MomentTrajectory {
        hypothesis: h,
        means,
        covariances,
    })
}

/// Prior probabilities (P(H0), P(H1)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub p0: f64,
    pub p1: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self { p0: 0.5, p1: 0.5 }
    }
}

impl Priors {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        if !(p0 > 0.0 && p1 > 0.0 && ((p0 + p1) - 1.0).abs() <= 1e-12) {
            return Err(Error::Parameter(format!(
                "priors must be positive and sum to 1, got ({p0}, {p1})"
            )));
        }
        Ok(Self { p0, p1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveSource {
    Exact,
    MonteCarlo,
}

impl CurveSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveSource::Exact => "exact",
            CurveSource::MonteCarlo => "mc",
        }
    }
}

/// Which detector a curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CurveNode {
    Centralized,
    /// 0-based node index.
    Node(usize),
}

impl CurveNode {
    /// Label used in files: `centralized` or the 1-based node number.
    pub fn label(self) -> String {
        match self {
            CurveNode::Centralized => "centralized".to_string(),
            CurveNode::Node(i) => (i + 1).to_string(),
        }
    }
}

/// Standard errors attached to a Monte Carlo curve point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointStderr {
    pub alpha: f64,
    pub beta: f64,
    pub pe: f64,
}

/// Error probabilities over a grid of times. Probabilities are held as
/// natural logarithms so that deep tails stay representable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub node: CurveNode,
    pub source: CurveSource,
    pub priors: Priors,
    pub ks: Vec<usize>,
    pub log_alpha: Vec<f64>,
    pub log_beta: Vec<f64>,
    pub log_pe: Vec<f64>,
    /// Present for Monte Carlo curves.
    pub stderr: Option<Vec<PointStderr>>,
}

impl ErrorCurve {
    pub fn from_log_probabilities(
        node: CurveNode,
        source: CurveSource,
        priors: Priors,
        ks: Vec<usize>,
        log_alpha: Vec<f64>,
        log_beta: Vec<f64>,
    ) -> Self {
        let (l0, l1) = (priors.p0.ln(), priors.p1.ln());
        let log_pe = log_alpha
            .iter()
            .zip(&log_beta)
            .map(|(&a, &b)| log_add_exp(l0 + a, l1 + b))
            .collect();
        Self {
            node,
            source,
            priors,
            ks,
            log_alpha,
            log_beta,
            log_pe,
            stderr: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn alpha(&self, idx: usize) -> f64 {
        self.log_alpha[idx].exp()
    }

    pub fn beta(&self, idx: usize) -> f64 {
        self.log_beta[idx].exp()
    }

    pub fn pe(&self, idx: usize) -> f64 {
        self.log_pe[idx].exp()
    }

    pub fn position(&self, k: usize) -> Option<usize> {
        self.ks.iter().position(|&x| x == k)
    }

    pub fn log_pe_at(&self, k: usize) -> Option<f64> {
        self.position(k).map(|i| self.log_pe[i])
    }

    /// Restricts the curve to the given times (which must be present).
    pub fn restrict(&self, ks: &[usize]) -> Option<Self> {
        let idx: Vec<usize> = ks
            .iter()
            .map(|&k| self.position(k))
            .collect::<Option<_>>()?;
        Some(Self {
            node: self.node,
            source: self.source,
            priors: self.priors,
            ks: ks.to_vec(),
            log_alpha: idx.iter().map(|&i| self.log_alpha[i]).collect(),
            log_beta: idx.iter().map(|&i| self.log_beta[i]).collect(),
            log_pe: idx.iter().map(|&i| self.log_pe[i]).collect(),
            stderr: self
                .stderr
                .as_ref()
                .map(|s| idx.iter().map(|&i| s[i]).collect()),
        })
    }
}

/// Exact per-node curves from the moment trajectories under H0 and H1:
/// `α_i(k) = Q(μ_i^(0)(k)/σ_i(k)·(−1))`, `β_i(k) = Q(μ_i^(1)(k)/σ_i(k))`.
pub fn exact_error_curves<T: Scalar>(
    under_h0: &MomentTrajectory<T>,
    under_h1: &MomentTrajectory<T>,
    priors: Priors,
    ks: &[usize],
) -> Result<Vec<ErrorCurve>> {
    if under_h0.hypothesis != Hypothesis::H0 || under_h1.hypothesis != Hypothesis::H1 {
        return Err(Error::Parameter(
            "trajectories must be ordered (H0, H1)".into(),
        ));
    }
    let n = under_h0.n();
    if under_h1.n() != n {
        return Err(Error::Shape {
            expected: format!("trajectories on {n} nodes"),
            got: under_h1.n().to_string(),
        });
    }
    let k_max = under_h0.k_max().min(under_h1.k_max());
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > k_max) {
        return Err(Error::Index(format!(
            "checkpoint {bad} outside 1..={k_max}"
        )));
    }
    let var_tol = 1e-300;
    let mut curves = Vec::with_capacity(n);
    for node in 0..n {
        let mut la = Vec::with_capacity(ks.len());
        let mut lb = Vec::with_capacity(ks.len());
        for &k in ks {
            let v0 = under_h0.variance(k, node).to_f64_lossy();
            let v1 = under_h1.variance(k, node).to_f64_lossy();
            for v in [v0, v1] {
                if !(v > var_tol) {
                    return Err(Error::DegenerateVariance {
                        k,
                        node,
                        variance: v,
                    });
                }
            }
            let mu0 = under_h0.mean(k)[node].to_f64_lossy();
            let mu1 = under_h1.mean(k)[node].to_f64_lossy();
            la.push(log_normal_q(-mu0 / v0.sqrt()));
            lb.push(log_normal_q(mu1 / v1.sqrt()));
        }
        curves.push(ErrorCurve::from_log_probabilities(
            CurveNode::Node(node),
            CurveSource::Exact,
            priors,
            ks.to_vec(),
            la,
            lb,
        ));
    }
    Ok(curves)
}

/// Exact curve of the centralized detector: D(k) ~ N(m_L^(l), σ_L²/k).
pub fn centralized_error_curve<T: Scalar>(
    model: &GaussianHypothesisPair<T>,
    priors: Priors,
    ks: &[usize],
) -> Result<ErrorCurve> {
    if ks.contains(&0) {
        return Err(Error::Index("checkpoint 0 is not a valid time".into()));
    }
    let sigma = model.llr_variance().to_f64_lossy().sqrt();
    let m0 = model.llr_mean(Hypothesis::H0).to_f64_lossy();
    let m1 = model.llr_mean(Hypothesis::H1).to_f64_lossy();
    let la = ks
        .iter()
        .map(|&k| log_normal_q(-m0 * (k as f64).sqrt() / sigma))
        .collect();
    let lb = ks
        .iter()
        .map(|&k| log_normal_q(m1 * (k as f64).sqrt() / sigma))
        .collect();
    Ok(ErrorCurve::from_log_probabilities(
        CurveNode::Centralized,
        CurveSource::Exact,
        priors,
        ks.to_vec(),
        la,
        lb,
    ))
}

/// `(1/k)·ln E[exp(kμ·x_i(k))] = μ·E[x_i(k)] + (k/2)·μ²·Var[x_i(k)]`.
pub fn scaled_cumulant<T: Scalar>(traj: &MomentTrajectory<T>, k: usize, mu: T, node: usize) -> T {
    let kk = T::lit(k as f64);
    mu * traj.mean(k)[node] + kk / T::lit(2.0) * mu * mu * traj.variance(k, node)
}

/// Large-k limit `σ_L²μ²/2 + m_L^(l)·μ` of the scaled cumulant.
pub fn scaled_cumulant_limit<T: Scalar>(
    model: &GaussianHypothesisPair<T>,
    h: Hypothesis,
    mu: T,
) -> T {
    model.llr_variance() * mu * mu / T::lit(2.0) + model.llr_mean(h) * mu
}

/// One evaluation of the finite-k remainder δ(k) and its upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaPoint {
    pub k: usize,
    pub node: usize,
    pub mu: f64,
    /// δ(k) summed directly from the disagreement products Φ(k,j) − J.
    pub delta: f64,
    /// The same quantity recovered from the propagated moments.
    pub delta_from_moments: f64,
    pub bound: f64,
}

/// Evaluates the decomposition
/// `(1/k)·L_k(kμ) = Λ̄(μ, k) + δ(k)`, where `L_k` is the log-MGF of the
/// first `k − 1` innovation terms of x_i(k) and
/// `Λ̄(μ, k) = (k−1)/k · (m_L^(l)μ + σ_L²μ²/2)`, together with the bound
///
/// ```text
/// |δ(k)| ≤ θ/k · (N²·m̄·|μ| + N³·μ²·b̄)/(1 − β) + θ²/k · N⁴/2 · μ²·S̄/(1 − β²)
/// ```
///
/// with `m̄ = max|m_η|`, `S̄ = max|S_η|` and `b̄ = max|S_η·J·e_i|`.
#[derive(Debug, Clone)]
pub struct DeltaAnalysis<'a, T> {
    schedule: &'a WeightSchedule<T>,
    hypothesis: Hypothesis,
    stats: InnovationStats<T>,
    theta: T,
    beta: T,
    limit_mean: T,
    limit_var: T,
}

impl<'a, T: Scalar> DeltaAnalysis<'a, T> {
    pub fn new(
        model: &GaussianHypothesisPair<T>,
        schedule: &'a WeightSchedule<T>,
        hypothesis: Hypothesis,
    ) -> Result<Self> {
        if schedule.n() != model.n_sensors() {
            return Err(Error::Shape {
                expected: format!("schedule on {} nodes", model.n_sensors()),
                got: schedule.n().to_string(),
            });
        }
        let bound = schedule.contraction_bound()?;
        Ok(Self {
            schedule,
            hypothesis,
            stats: model.innovation_stats(),
            theta: bound.theta,
            beta: bound.beta,
            limit_mean: model.llr_mean(hypothesis),
            limit_var: model.llr_variance(),
        })
    }

    /// The finite-k drift term Λ̄(μ, k).
    pub fn drift(&self, k: usize, mu: T) -> T {
        let kk = T::lit(k as f64);
        (kk - T::one()) / kk * (self.limit_mean * mu + self.limit_var * mu * mu / T::lit(2.0))
    }

    /// δ(k) from the disagreement products.
    pub fn delta(&self, k: usize, mu: T, node: usize) -> Result<T> {
        if k < 2 {
            return Err(Error::Index(format!("delta needs k >= 2, got {k}")));
        }
        let n = self.schedule.n();
        if node >= n {
            return Err(Error::Index(format!("node {node} outside 0..{n}")));
        }
        let nn = T::lit(n as f64);
        let kk = T::lit(k as f64);
        let jm = Matrix::averaging(n);
        let m = self.stats.mean(self.hypothesis);
        let s = &self.stats.cov;
        let sj = s.matmul(&jm);
        let sj_ei: Vec<T> = (0..n).map(|l| sj[(l, node)]).collect();
        // r_j = e_iᵀ·Φ̃(k, j), built from j = k−1 downwards.
        let mut r: Vec<T> = (0..n)
            .map(|c| if c == node { T::one() } else { T::zero() })
            .collect();
        let (mut lin, mut quad, mut cross) = (T::zero(), T::zero(), T::zero());
        for j in (1..k).rev() {
            let wt = self.schedule.at(j).sub(&jm);
            r = wt.vec_mul(&r);
            lin += dot(&r, m);
            quad += s.bilinear(&r, &r);
            cross += dot(&r, &sj_ei);
        }
        let two = T::lit(2.0);
        Ok(nn / kk * mu * lin
            + nn * nn / (two * kk) * mu * mu * quad
            + nn * nn / kk * mu * mu * cross)
    }

    /// δ(k) recovered from exact moments: the scaled cumulant minus the
    /// last innovation's contribution minus the drift.
    pub fn delta_from_moments(
        &self,
        traj: &MomentTrajectory<T>,
        k: usize,
        mu: T,
        node: usize,
    ) -> T {
        let n = T::lit(self.schedule.n() as f64);
        let kk = T::lit(k as f64);
        let m = self.stats.mean(self.hypothesis)[node];
        let sii = self.stats.cov[(node, node)];
        let last = (n * mu * m + n * n * mu * mu * sii / T::lit(2.0)) / kk;
        scaled_cumulant(traj, k, mu, node) - last - self.drift(k, mu)
    }

    pub fn bound(&self, k: usize, mu: T, node: usize) -> T {
        let n = self.schedule.n();
        let nn = T::lit(n as f64);
        let kk = T::lit(k as f64);
        let m = self.stats.mean(self.hypothesis);
        let s = &self.stats.cov;
        let m_bar = m.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        let s_bar = s.max_abs();
        let sj = s.matmul(&Matrix::averaging(n));
        let b_bar = (0..n).fold(T::zero(), |a, l| a.max(sj[(l, node)].abs()));
        let (theta, beta) = (self.theta, self.beta);
        let mu2 = mu * mu;
        theta / kk * (nn.powi(2) * m_bar * mu.abs() + nn.powi(3) * mu2 * b_bar) / (T::one() - beta)
            + theta * theta / kk * nn.powi(4) / T::lit(2.0) * mu2 * s_bar / (T::one() - beta * beta)
    }

    pub fn point(
        &self,
        traj: &MomentTrajectory<T>,
        k: usize,
        mu: T,
        node: usize,
    ) -> Result<DeltaPoint> {
        if traj.hypothesis != self.hypothesis {
            return Err(Error::Parameter("trajectory hypothesis mismatch".into()));
        }
        if k > traj.k_max() {
            return Err(Error::Index(format!(
                "k={k} beyond trajectory horizon {}",
                traj.k_max()
            )));
        }
        Ok(DeltaPoint {
            k,
            node,
            mu: mu.to_f64_lossy(),
            delta: self.delta(k, mu, node)?.to_f64_lossy(),
            delta_from_moments: self.delta_from_moments(traj, k, mu, node).to_f64_lossy(),
            bound: self.bound(k, mu, node).to_f64_lossy(),
        })
    }
}
