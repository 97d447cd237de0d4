//! Seeded Monte Carlo estimation of error curves and comparison with the
//! exact analysis.
//!
//! Trials are independent work items. Each trial owns the observation stream
//! keyed by `(master_seed, hypothesis, trial, k)`, runs the centralized and
//! distributed detectors side by side on it, and contributes integer error
//! counts at the checkpoints. Batches are merged in a fixed order, so results
//! depend only on the plan and never on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{decide, CentralizedState, DistributedState, TrajectoryWriter};
use crate::error::{Error, Result};
use crate::ldp::{
    centralized_error_curve, chernoff_information, exact_error_curves, propagate_moments,
    CurveNode, CurveSource, ErrorCurve, MomentTrajectory, PointStderr, Priors,
};
use crate::linalg::Matrix;
use crate::model::{observation_rng, GaussianHypothesisPair, Hypothesis};
use crate::scalar::Scalar;
use crate::schedule::{ValidationReport, WeightSchedule};

const BATCH: u64 = 512;

/// What to estimate: detectors on one model/schedule pair.
#[derive(Debug, Clone)]
pub struct ExperimentPlan<'a, T> {
    pub model: &'a GaussianHypothesisPair<T>,
    pub schedule: &'a WeightSchedule<T>,
    pub priors: Priors,
    pub checkpoints: Vec<usize>,
    pub n_trials: u64,
    pub master_seed: u64,
}

impl<'a, T: Scalar> ExperimentPlan<'a, T> {
    pub fn new(
        model: &'a GaussianHypothesisPair<T>,
        schedule: &'a WeightSchedule<T>,
        priors: Priors,
        checkpoints: Vec<usize>,
        n_trials: u64,
        master_seed: u64,
    ) -> Result<Self> {
        if model.n_sensors() != schedule.n() {
            return Err(Error::Shape {
                expected: format!("schedule on {} nodes", model.n_sensors()),
                got: schedule.n().to_string(),
            });
        }
        if checkpoints.is_empty() {
            return Err(Error::Parameter(
                "at least one checkpoint is required".into(),
            ));
        }
        if checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "checkpoints must be strictly increasing and start at k >= 1".into(),
            ));
        }
        if n_trials == 0 {
            return Err(Error::Parameter("n_trials must be at least 1".into()));
        }
        Priors::new(priors.p0, priors.p1)?;
        Ok(Self {
            model,
            schedule,
            priors,
            checkpoints,
            n_trials,
            master_seed,
        })
    }

    pub fn horizon(&self) -> usize {
        *self.checkpoints.last().expect("non-empty checkpoints")
    }
}

/// 1, 2, 4, … up to and including the largest power of two ≤ `k_max`.
pub fn geometric_checkpoints(k_max: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&k| k.checked_mul(2))
        .take_while(|&k| k <= k_max)
        .collect()
}

/// Runs one trial, calling `visit` after every step with the two detector
/// states.
fn run_trial<T: Scalar>(
    model: &GaussianHypothesisPair<T>,
    schedule: &WeightSchedule<T>,
    h: Hypothesis,
    master_seed: u64,
    trial: u64,
    horizon: usize,
    mut visit: impl FnMut(&CentralizedState<T>, &DistributedState<T>),
) {
    let mut central = CentralizedState::new();
    let mut dist: Option<DistributedState<T>> = None;
    for k in 1..=horizon {
        let obs =
            model.sample_observation(h, k, &mut observation_rng(master_seed, h, trial, k as u64));
        let eta = model
            .local_innovations(&obs.y)
            .expect("sampled observation has sensor length");
        central.step_llr(eta.iter().copied().sum());
        match dist.as_mut() {
            None => dist = Some(DistributedState::init(&eta)),
            Some(d) => d.step(schedule, &eta).expect("schedule matches model size"),
        }
        visit(&central, dist.as_ref().expect("initialized at k = 1"));
    }
}

/// |mean(x) − D| relative to the magnitude of the quantities being averaged.
pub fn consensus_deviation<T: Scalar>(
    central: &CentralizedState<T>,
    dist: &DistributedState<T>,
) -> f64 {
    let d = central.d.to_f64_lossy();
    let avg = dist.network_average().to_f64_lossy();
    let scale = dist
        .x
        .iter()
        .fold(d.abs(), |m, x| m.max(x.to_f64_lossy().abs()));
    if scale == 0.0 {
        0.0
    } else {
        (avg - d).abs() / scale
    }
}

#[derive(Debug, Clone)]
struct ErrorCounts {
    /// `counts[c][0]` centralized, `counts[c][i + 1]` node i.
    counts: Vec<Vec<u64>>,
    max_deviation: f64,
}

impl ErrorCounts {
    fn new(checkpoints: usize, n: usize) -> Self {
        Self {
            counts: vec![vec![0; n + 1]; checkpoints],
            max_deviation: 0.0,
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.max_deviation = self.max_deviation.max(other.max_deviation);
        self
    }
}

fn count_errors<T: Scalar>(plan: &ExperimentPlan<'_, T>, h: Hypothesis) -> ErrorCounts {
    let n = plan.model.n_sensors();
    let horizon = plan.horizon();
    let n_batches = plan.n_trials.div_ceil(BATCH);
    let wrong = match h {
        Hypothesis::H0 => Hypothesis::H1,
        Hypothesis::H1 => Hypothesis::H0,
    };
    let batches: Vec<ErrorCounts> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = ErrorCounts::new(plan.checkpoints.len(), n);
            let end = ((b + 1) * BATCH).min(plan.n_trials);
            for trial in b * BATCH..end {
                let mut next = 0;
                run_trial(
                    plan.model,
                    plan.schedule,
                    h,
                    plan.master_seed,
                    trial,
                    horizon,
                    |c, d| {
                        acc.max_deviation = acc.max_deviation.max(consensus_deviation(c, d));
                        if next < plan.checkpoints.len() && d.k == plan.checkpoints[next] {
                            let row = &mut acc.counts[next];
                            row[0] += u64::from(decide(c.d) == wrong);
                            for (i, &x) in d.x.iter().enumerate() {
                                row[i + 1] += u64::from(decide(x) == wrong);
                            }
                            next += 1;
                        }
                    },
                );
            }
            acc
        })
        .collect();
    let init = ErrorCounts::new(plan.checkpoints.len(), n);
    batches.iter().fold(init, |acc, b| acc.merge(b))
}

/// Binomial standard error; a zero or full count uses the rule-of-three
/// bound 3/n.
pub fn binomial_stderr(count: u64, n: u64) -> f64 {
    let nf = n as f64;
    if count == 0 || count == n {
        return 3.0 / nf;
    }
    let p = count as f64 / nf;
    (p * (1.0 - p) / nf).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub n_trials: u64,
    pub master_seed: u64,
    pub centralized: ErrorCurve,
    pub nodes: Vec<ErrorCurve>,
    /// Largest relative gap between the network average of x(k) and D(k)
    /// seen on any trial and step.
    pub max_consensus_deviation: f64,
}

impl MonteCarloResult {
    pub fn curves(&self) -> impl Iterator<Item = &ErrorCurve> {
        std::iter::once(&self.centralized).chain(&self.nodes)
    }
}

pub fn run_monte_carlo<T: Scalar>(plan: &ExperimentPlan<'_, T>) -> Result<MonteCarloResult> {
    let n = plan.model.n_sensors();
    let c0 = count_errors(plan, Hypothesis::H0);
    let c1 = count_errors(plan, Hypothesis::H1);
    let trials = plan.n_trials;
    let curve_for = |col: usize, node: CurveNode| {
        let mut la = Vec::new();
        let mut lb = Vec::new();
        let mut se = Vec::new();
        for c in 0..plan.checkpoints.len() {
            let (a, b) = (c0.counts[c][col], c1.counts[c][col]);
            la.push((a as f64 / trials as f64).ln());
            lb.push((b as f64 / trials as f64).ln());
            let (sa, sb) = (binomial_stderr(a, trials), binomial_stderr(b, trials));
            let sp = ((plan.priors.p0 * sa).powi(2) + (plan.priors.p1 * sb).powi(2)).sqrt();
            se.push(PointStderr {
                alpha: sa,
                beta: sb,
                pe: sp,
            });
        }
        let mut curve = ErrorCurve::from_log_probabilities(
            node,
            CurveSource::MonteCarlo,
            plan.priors,
            plan.checkpoints.clone(),
            la,
            lb,
        );
        curve.stderr = Some(se);
        curve
    };
    Ok(MonteCarloResult {
        n_trials: trials,
        master_seed: plan.master_seed,
        centralized: curve_for(0, CurveNode::Centralized),
        nodes: (0..n)
            .map(|i| curve_for(i + 1, CurveNode::Node(i)))
            .collect(),
        max_consensus_deviation: c0.max_deviation.max(c1.max_deviation),
    })
}

/// Sample mean and covariance of x(k) at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub k: usize,
    pub n_trials: u64,
    pub mean: Vec<f64>,
    pub covariance: Matrix<f64>,
}

#[derive(Debug, Clone)]
struct MomentSums {
    sum: Vec<Vec<f64>>,
    outer: Vec<Matrix<f64>>,
}

/// Monte Carlo estimate of the first two moments of x(k) at `checkpoints`.
pub fn estimate_moments<T: Scalar>(
    model: &GaussianHypothesisPair<T>,
    schedule: &WeightSchedule<T>,
    h: Hypothesis,
    checkpoints: &[usize],
    n_trials: u64,
    master_seed: u64,
) -> Result<Vec<MomentEstimate>> {
    let plan = ExperimentPlan::new(
        model,
        schedule,
        Priors::default(),
        checkpoints.to_vec(),
        n_trials,
        master_seed,
    )?;
    let n = model.n_sensors();
    let nc = checkpoints.len();
    let empty = || MomentSums {
        sum: vec![vec![0.0; n]; nc],
        outer: vec![Matrix::zeros(n, n); nc],
    };
    let n_batches = n_trials.div_ceil(BATCH);
    let batches: Vec<MomentSums> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = empty();
            let end = ((b + 1) * BATCH).min(n_trials);
            for trial in b * BATCH..end {
                let mut next = 0;
                run_trial(
                    model,
                    schedule,
                    h,
                    master_seed,
                    trial,
                    plan.horizon(),
                    |_, d| {
                        if next < nc && d.k == checkpoints[next] {
                            let x: Vec<f64> = d.x.iter().map(|v| v.to_f64_lossy()).collect();
                            for i in 0..n {
                                acc.sum[next][i] += x[i];
                                for j in 0..n {
                                    acc.outer[next][(i, j)] += x[i] * x[j];
                                }
                            }
                            next += 1;
                        }
                    },
                );
            }
            acc
        })
        .collect();
    let mut total = empty();
    for b in &batches {
        for c in 0..nc {
            for i in 0..n {
                total.sum[c][i] += b.sum[c][i];
            }
            total.outer[c] = total.outer[c].add(&b.outer[c]);
        }
    }
    let nt = n_trials as f64;
    Ok((0..nc)
        .map(|c| {
            let mean: Vec<f64> = total.sum[c].iter().map(|s| s / nt).collect();
            let denom = (nt - 1.0).max(1.0);
            let covariance = Matrix::from_fn(n, n, |i, j| {
                (total.outer[c][(i, j)] - nt * mean[i] * mean[j]) / denom
            });
            MomentEstimate {
                k: checkpoints[c],
                n_trials,
                mean,
                covariance,
            }
        })
        .collect())
}

/// Least-squares line through `(k, ln pe(k))` over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub window: (usize, usize),
    /// Decay rate: the negated slope.
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub points: usize,
}

pub fn fit_exponent(curve: &ErrorCurve, window: (usize, usize)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    let in_window: Vec<usize> = (0..curve.len())
        .filter(|&i| curve.ks[i] >= lo && curve.ks[i] <= hi)
        .collect();
    if in_window.len() < 3 {
        return Err(Error::InsufficientPoints {
            need: 3,
            found: in_window.len(),
        });
    }
    let pts: Vec<(f64, f64)> = in_window
        .iter()
        .filter(|&&i| curve.log_pe[i].is_finite())
        .map(|&i| (curve.ks[i] as f64, curve.log_pe[i]))
        .collect();
    if pts.len() < 3 {
        return Err(Error::ZeroProbabilityInWindow { usable: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(ExponentFit {
        window,
        rate: -slope,
        intercept,
        residual: (rss / n).sqrt(),
        points: pts.len(),
    })
}

/// `ln F(k) = ln pe(k) + k·C`, the sub-exponential prefactor in log-space.
pub fn subexponential_factor(curve: &ErrorCurve, chernoff: f64) -> Result<Vec<(usize, f64)>> {
    if !(chernoff > 0.0) {
        return Err(Error::Parameter(format!(
            "Chernoff information {chernoff} must be positive"
        )));
    }
    Ok(curve
        .ks
        .iter()
        .zip(&curve.log_pe)
        .map(|(&k, &lp)| (k, lp + k as f64 * chernoff))
        .collect())
}

/// Pass/fail thresholds applied by the comparison and agreement reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceThresholds {
    /// Allowed `(1/k)|ln pe_i − ln pe_cen|` at the last checkpoint, as a
    /// fraction of the Chernoff information.
    pub gap_fraction: f64,
    /// Agreement band in binomial standard errors.
    pub agreement_sigmas: f64,
    /// Only exact probabilities at least this large are compared.
    pub agreement_min_probability: f64,
    /// Required fraction of compared cells inside the band.
    pub agreement_fraction: f64,
    /// Below this many trials the agreement verdict is waived.
    pub min_trials: u64,
}

impl Default for AcceptanceThresholds {
    fn default() -> Self {
        Self {
            gap_fraction: 0.02,
            agreement_sigmas: 3.0,
            agreement_min_probability: 1e-3,
            agreement_fraction: 0.99,
            min_trials: 1000,
        }
    }
}

/// Exact curves for every node and the centralized detector at every
/// `k = 1..=horizon`, plus the trajectories they came from.
#[derive(Debug, Clone)]
pub struct ExactAnalysis<T> {
    pub centralized: ErrorCurve,
    pub nodes: Vec<ErrorCurve>,
    pub under_h0: MomentTrajectory<T>,
    pub under_h1: MomentTrajectory<T>,
}

pub fn exact_analysis<T: Scalar>(
    model: &GaussianHypothesisPair<T>,
    schedule: &WeightSchedule<T>,
    priors: Priors,
    horizon: usize,
) -> Result<ExactAnalysis<T>> {
    let t0 = propagate_moments(model, schedule, Hypothesis::H0, horizon)?;
    let t1 = propagate_moments(model, schedule, Hypothesis::H1, horizon)?;
    let ks: Vec<usize> = (1..=horizon).collect();
    Ok(ExactAnalysis {
        centralized: centralized_error_curve(model, priors, &ks)?,
        nodes: exact_error_curves(&t0, &t1, priors, &ks)?,
        under_h0: t0,
        under_h1: t1,
    })
}

/// `(1/k)|ln pe_i(k) − ln pe_cen(k)|`.
pub fn log_gap(node: &ErrorCurve, central: &ErrorCurve, k: usize) -> Option<f64> {
    Some((node.log_pe_at(k)? - central.log_pe_at(k)?).abs() / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeComparison {
    /// 1-based node label.
    pub node: usize,
    pub fitted_rate: Option<ExponentFit>,
    /// Gap at every checkpoint, in checkpoint order.
    pub gaps: Vec<(usize, f64)>,
    pub gap_at_last: f64,
    /// Checkpoints after which `pe` increased despite the mean dominating.
    pub monotonicity_violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub chernoff_information: f64,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    pub window: usize,
    pub w_min: f64,
    pub schedule_valid: bool,
    pub validation: ValidationReport,
    pub fit_window: (usize, usize),
    pub centralized_fit: Option<ExponentFit>,
    pub nodes: Vec<NodeComparison>,
    pub thresholds: AcceptanceThresholds,
    /// `None` when the schedule fails validation: the optimality claim does
    /// not apply to such a network.
    pub optimality_verdict: Option<bool>,
}

/// Compares per-node exact error curves with the centralized detector.
pub fn compare_detectors<T: Scalar>(
    plan: &ExperimentPlan<'_, T>,
    thresholds: &AcceptanceThresholds,
) -> Result<ComparisonReport> {
    let validation = plan.schedule.validate();
    let bound = plan.schedule.contraction_bound().ok();
    let horizon = plan.horizon();
    let exact = exact_analysis(plan.model, plan.schedule, plan.priors, horizon)?;
    let chernoff = chernoff_information(plan.model).to_f64_lossy();
    let fit_window = ((horizon / 2).max(1), horizon);
    let centralized_fit = fit_exponent(&exact.centralized, fit_window).ok();
    let mut nodes = Vec::with_capacity(exact.nodes.len());
    for (i, curve) in exact.nodes.iter().enumerate() {
        let gaps: Vec<(usize, f64)> = plan
            .checkpoints
            .iter()
            .map(|&k| {
                (
                    k,
                    log_gap(curve, &exact.centralized, k).expect("dense exact grid"),
                )
            })
            .collect();
        nodes.push(NodeComparison {
            node: i + 1,
            fitted_rate: fit_exponent(curve, fit_window).ok(),
            gap_at_last: gaps.last().expect("non-empty checkpoints").1,
            gaps,
            monotonicity_violations: monotonicity_violations(&exact, i, &plan.checkpoints),
        });
    }
    let optimality_verdict = validation.passed.then(|| {
        nodes
            .iter()
            .all(|n| n.gap_at_last <= thresholds.gap_fraction * chernoff)
    });
    Ok(ComparisonReport {
        chernoff_information: chernoff,
        theta: bound.map(|b| b.theta.to_f64_lossy()),
        beta: bound.map(|b| b.beta.to_f64_lossy()),
        window: plan.schedule.window(),
        w_min: plan.schedule.w_min().to_f64_lossy(),
        schedule_valid: validation.passed,
        validation,
        fit_window,
        centralized_fit,
        nodes,
        thresholds: *thresholds,
        optimality_verdict,
    })
}

fn monotonicity_violations<T: Scalar>(
    exact: &ExactAnalysis<T>,
    node: usize,
    checkpoints: &[usize],
) -> Vec<usize> {
    let dominated = |k: usize| {
        [&exact.under_h0, &exact.under_h1].iter().all(|t| {
            t.mean(k)[node].to_f64_lossy().abs() >= t.variance(k, node).to_f64_lossy().sqrt()
        })
    };
    let Some(start) = checkpoints.iter().position(|&k| dominated(k)) else {
        return Vec::new();
    };
    let curve = &exact.nodes[node];
    checkpoints[start..]
        .windows(2)
        .filter(|w| curve.log_pe_at(w[1]) > curve.log_pe_at(w[0]))
        .map(|w| w[1])
        .collect()
}

/// Cell-by-cell agreement between Monte Carlo and exact probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub cells_compared: usize,
    pub cells_within: usize,
    pub fraction_within: f64,
    /// Worst |estimate − exact| / stderr.
    pub worst_z: f64,
    pub waived: bool,
    pub passed: bool,
}

/// Compares every α and β estimate whose exact value is at least the
/// threshold, at every node and checkpoint.
pub fn mc_agreement(
    mc: &MonteCarloResult,
    exact_nodes: &[ErrorCurve],
    exact_central: &ErrorCurve,
    thresholds: &AcceptanceThresholds,
) -> AgreementReport {
    let mut compared = 0;
    let mut within = 0;
    let mut worst = 0.0f64;
    let pairs =
        std::iter::once((&mc.centralized, exact_central)).chain(mc.nodes.iter().zip(exact_nodes));
    for (est, ex) in pairs {
        let se = est
            .stderr
            .as_ref()
            .expect("Monte Carlo curves carry standard errors");
        for (idx, &k) in est.ks.iter().enumerate() {
            let Some(e) = ex.position(k) else { continue };
            let cells = [
                (est.alpha(idx), ex.alpha(e), se[idx].alpha),
                (est.beta(idx), ex.beta(e), se[idx].beta),
            ];
            for (p_hat, p, _) in cells {
                if p < thresholds.agreement_min_probability {
                    continue;
                }
                compared += 1;
                // Binomial error at the exact probability; the estimate's own
                // error collapses to the rule-of-three bound on zero counts.
                let band = (p * (1.0 - p) / mc.n_trials as f64)
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                let z = (p_hat - p).abs() / band;
                worst = worst.max(z);
                if z <= thresholds.agreement_sigmas {
                    within += 1;
                }
            }
        }
    }
    let fraction = if compared == 0 {
        1.0
    } else {
        within as f64 / compared as f64
    };
    let waived = mc.n_trials < thresholds.min_trials;
    AgreementReport {
        cells_compared: compared,
        cells_within: within,
        fraction_within: fraction,
        worst_z: worst,
        waived,
        passed: waived || fraction >= thresholds.agreement_fraction,
    }
}

/// Writes the per-step trajectory of one trial as CSV (`k,D,x_1..x_N`).
pub fn dump_trajectory<T: Scalar, W: std::io::Write>(
    model: &GaussianHypothesisPair<T>,
    schedule: &WeightSchedule<T>,
    h: Hypothesis,
    master_seed: u64,
    trial: u64,
    horizon: usize,
    out: W,
) -> std::io::Result<W> {
    let mut writer = TrajectoryWriter::new(out, model.n_sensors())?;
    let mut status = Ok(());
    run_trial(model, schedule, h, master_seed, trial, horizon, |c, d| {
        if status.is_ok() {
            status = writer.record(c, d);
        }
    });
    status?;
    Ok(writer.into_inner())
}
