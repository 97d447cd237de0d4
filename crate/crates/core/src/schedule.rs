//! Deterministic, periodic sequences of symmetric stochastic weight matrices.
//!
//! A schedule stores one period `W(1..P)` and extends it as
//! `W(k) = W(((k − 1) mod P) + 1)`. Building a schedule measures `w_min` (the
//! smallest positive entry) and the smallest window length `B` such that the
//! union of links over every `B` consecutive steps is connected. Under these
//! conditions the disagreement part `Φ(k, j) − J` of the backward product
//! `Φ(k, j) = W(k−1)···W(j)` decays like `θ·β^(k−j)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{is_connected, metropolis_weights, support, GraphSnapshot};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Tolerance on symmetry and on row sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// How the per-step matrices of one period are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec<T> {
    /// The same graph at every step, Metropolis weights. Period 1.
    Static {
        n: usize,
        edges: Vec<(usize, usize)>,
    },
    /// One link of `links` online per step, cycling through the list.
    /// The period defaults to the number of links.
    AlternatingLinks {
        n: usize,
        links: Vec<(usize, usize)>,
        period: Option<usize>,
    },
    /// At each step of the period every base edge is kept independently with
    /// probability `keep_probability`; the draw is made once and frozen.
    RandomSubgraph {
        n: usize,
        base: Vec<(usize, usize)>,
        period: usize,
        seed: u64,
        keep_probability: f64,
    },
    /// Caller-supplied matrices, one per step of the period.
    Explicit { matrices: Vec<Matrix<T>> },
}

impl<T: Scalar> ScheduleSpec<T> {
    /// Graph snapshots for one period (not available for explicit matrices).
    pub fn snapshots(&self) -> Result<Option<Vec<GraphSnapshot>>> {
        let snaps = match self {
            ScheduleSpec::Static { n, edges } => {
                vec![GraphSnapshot::new(*n, edges.iter().copied())?]
            }
            ScheduleSpec::AlternatingLinks { n, links, period } => {
                if links.is_empty() {
                    return Err(Error::Parameter(
                        "alternating-links needs at least one link".into(),
                    ));
                }
                let p = period.unwrap_or(links.len());
                if p == 0 {
                    return Err(Error::Parameter("period must be positive".into()));
                }
                (0..p)
                    .map(|s| GraphSnapshot::new(*n, [links[s % links.len()]]))
                    .collect::<Result<_>>()?
            }
            ScheduleSpec::RandomSubgraph {
                n,
                base,
                period,
                seed,
                keep_probability,
            } => {
                if *period == 0 {
                    return Err(Error::Parameter("period must be positive".into()));
                }
                if !(0.0..=1.0).contains(keep_probability) {
                    return Err(Error::Parameter(format!(
                        "keep_probability {keep_probability} outside [0, 1]"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut out = Vec::with_capacity(*period);
                for _ in 0..*period {
                    let kept: Vec<_> = base
                        .iter()
                        .copied()
                        .filter(|_| rng.random_bool(*keep_probability))
                        .collect();
                    out.push(GraphSnapshot::new(*n, kept)?);
                }
                out
            }
            ScheduleSpec::Explicit { .. } => return Ok(None),
        };
        Ok(Some(snaps))
    }
}

/// A validated periodic schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule<T> {
    n: usize,
    matrices: Vec<Matrix<T>>,
    w_min: T,
    window: usize,
}

/// The constants θ and β of the geometric decay bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionBound<T> {
    pub theta: T,
    pub beta: T,
}

impl<T: Scalar> ContractionBound<T> {
    /// θ·β^gap.
    pub fn at_gap(&self, gap: usize) -> T {
        self.theta * self.beta.powi(gap as i32)
    }
}

/// θ = (1 − w_min/(4N²))⁻², β = (1 − w_min/(4N²))^(1/B).
pub fn lemma_bound<T: Scalar>(n: usize, w_min: T, window: usize) -> Result<ContractionBound<T>> {
    if n == 0 {
        return Err(Error::Parameter("node count must be at least 1".into()));
    }
    if !(w_min > T::zero() && w_min <= T::one()) {
        return Err(Error::Parameter(format!("w_min {w_min} outside (0, 1]")));
    }
    if window == 0 {
        return Err(Error::Parameter(
            "window length B must be at least 1".into(),
        ));
    }
    let base = T::one() - w_min / (T::lit(4.0) * T::lit((n * n) as f64));
    Ok(ContractionBound {
        theta: base.powi(-2),
        beta: base.powf(T::one() / T::lit(window as f64)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckFailure {
    pub k: usize,
    pub entry: Option<(usize, usize)>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub passed: bool,
    pub failures: Vec<CheckFailure>,
}

impl CheckItem {
    fn from_failures(failures: Vec<CheckFailure>) -> Self {
        Self {
            passed: failures.is_empty(),
            failures,
        }
    }
}

/// Outcome of checking the three schedule conditions over one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub n: usize,
    pub period: usize,
    pub w_min: f64,
    pub window: usize,
    /// Symmetric, nonnegative, rows summing to one.
    pub symmetric_stochastic: CheckItem,
    /// Diagonal and positive off-diagonal entries at least `w_min`.
    pub minimum_weight: CheckItem,
    /// Union of links over every window of length `window` is connected.
    pub window_connectivity: CheckItem,
    pub note: String,
}

/// Result of comparing `max |Φ(k,j) − J|` with `θβ^(k−j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub max_gap: usize,
    pub theta: f64,
    pub beta: f64,
    /// Largest observed `max |Φ̃(k,j)| / (θβ^(k−j))`; at most 1 when the bound holds.
    pub worst_slack_ratio: f64,
    pub worst_at: (usize, usize),
    /// Per-step contraction factor fitted from the decay of the worst entry
    /// with the gap, if enough gaps stay above round-off.
    pub measured_rate: Option<f64>,
    /// `max_j max |Φ̃(j+g, j)|` for g = 1..=max_gap.
    pub max_entry_by_gap: Vec<f64>,
}

fn check_symmetric_stochastic<T: Scalar>(k: usize, w: &Matrix<T>, out: &mut Vec<CheckFailure>) {
    let tol = T::tol(STOCHASTIC_TOL);
    let n = w.rows();
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] < T::zero() || !w[(i, j)].is_finite() {
                out.push(CheckFailure {
                    k,
                    entry: Some((i, j)),
                    detail: format!("negative or non-finite entry {}", w[(i, j)]),
                });
            }
            if j > i && (w[(i, j)] - w[(j, i)]).abs() > tol {
                out.push(CheckFailure {
                    k,
                    entry: Some((i, j)),
                    detail: format!("asymmetric: {} vs {}", w[(i, j)], w[(j, i)]),
                });
            }
        }
    }
    for (i, s) in w.row_sums().into_iter().enumerate() {
        if (s - T::one()).abs() > tol {
            out.push(CheckFailure {
                k,
                entry: Some((i, i)),
                detail: format!("row {i} sums to {s}"),
            });
        }
    }
}

fn check_minimum_weight<T: Scalar>(k: usize, w: &Matrix<T>, w_min: T, out: &mut Vec<CheckFailure>) {
    let n = w.rows();
    for i in 0..n {
        for j in 0..n {
            let x = w[(i, j)];
            let needs_floor = i == j || x > T::zero();
            if needs_floor && x < w_min {
                out.push(CheckFailure {
                    k,
                    entry: Some((i, j)),
                    detail: format!("entry {x} below w_min {w_min}"),
                });
            }
        }
    }
}

impl<T: Scalar> WeightSchedule<T> {
    /// Builds and validates a schedule from a specification.
    pub fn build(spec: &ScheduleSpec<T>) -> Result<Self> {
        let matrices = match spec {
            ScheduleSpec::Explicit { matrices } => matrices.clone(),
            _ => spec
                .snapshots()?
                .expect("generated topologies have snapshots")
                .iter()
                .map(metropolis_weights)
                .collect(),
        };
        Self::from_matrices(matrices)
    }

    /// Validates one period of matrices, measures `w_min` and the minimal
    /// connectivity window.
    pub fn from_matrices(matrices: Vec<Matrix<T>>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Parameter("schedule needs at least one matrix".into()))?;
        let n = first.rows();
        if n == 0 {
            return Err(Error::Parameter("schedule needs at least one node".into()));
        }
        for (idx, w) in matrices.iter().enumerate() {
            if w.rows() != n || w.cols() != n {
                return Err(Error::InvalidWeights {
                    k: idx + 1,
                    reason: format!("expected {n}x{n}, got {}x{}", w.rows(), w.cols()),
                });
            }
            let mut fails = Vec::new();
            check_symmetric_stochastic(idx + 1, w, &mut fails);
            if let Some(f) = fails.first() {
                return Err(Error::InvalidWeights {
                    k: f.k,
                    reason: f.detail.clone(),
                });
            }
            if let Some(i) = (0..n).find(|&i| !(w[(i, i)] > T::zero())) {
                return Err(Error::InvalidWeights {
                    k: idx + 1,
                    reason: format!("diagonal entry {i} is not positive"),
                });
            }
        }
        let w_min = matrices
            .iter()
            .flat_map(|w| w.as_slice().iter().copied())
            .filter(|&x| x > T::zero())
            .fold(T::infinity(), T::min);
        let window = minimal_window(&matrices).ok_or(Error::NoConnectedWindow {
            period: matrices.len(),
        })?;
        Ok(Self {
            n,
            matrices,
            w_min,
            window,
        })
    }

    /// Assembles a schedule without any checks, e.g. to exercise validation
    /// reports on deliberately broken inputs.
    pub fn from_parts_unchecked(matrices: Vec<Matrix<T>>, w_min: T, window: usize) -> Self {
        let n = matrices.first().map_or(0, Matrix::rows);
        Self {
            n,
            matrices,
            w_min,
            window,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    pub fn w_min(&self) -> T {
        self.w_min
    }

    /// Connectivity window length B.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn matrices(&self) -> &[Matrix<T>] {
        &self.matrices
    }

    /// W(k) for 1-based `k`.
    pub fn at(&self, k: usize) -> &Matrix<T> {
        assert!(k >= 1, "schedule is indexed from k = 1");
        &self.matrices[(k - 1) % self.matrices.len()]
    }

    pub fn contraction_bound(&self) -> Result<ContractionBound<T>> {
        lemma_bound(self.n, self.w_min, self.window)
    }

    /// Checks all three conditions over one period against the stored
    /// `w_min` and window length.
    pub fn validate(&self) -> ValidationReport {
        let mut sym = Vec::new();
        let mut minw = Vec::new();
        for (idx, w) in self.matrices.iter().enumerate() {
            if w.rows() != self.n || w.cols() != self.n {
                sym.push(CheckFailure {
                    k: idx + 1,
                    entry: None,
                    detail: format!(
                        "expected {}x{}, got {}x{}",
                        self.n,
                        self.n,
                        w.rows(),
                        w.cols()
                    ),
                });
                continue;
            }
            check_symmetric_stochastic(idx + 1, w, &mut sym);
            check_minimum_weight(idx + 1, w, self.w_min, &mut minw);
        }
        let mut conn = Vec::new();
        if self.window == 0 {
            conn.push(CheckFailure {
                k: 0,
                entry: None,
                detail: "window length must be at least 1".into(),
            });
        } else if sym.is_empty() {
            let supports: Vec<_> = self.matrices.iter().map(support).collect();
            for start in 0..self.period() {
                if !window_connected(self.n, &supports, start, self.window) {
                    conn.push(CheckFailure {
                        k: start,
                        entry: None,
                        detail: format!(
                            "union over W({})..W({}) is disconnected",
                            start + 1,
                            start + self.window
                        ),
                    });
                }
            }
        }
        let symmetric_stochastic = CheckItem::from_failures(sym);
        let minimum_weight = CheckItem::from_failures(minw);
        let window_connectivity = CheckItem::from_failures(conn);
        ValidationReport {
            passed: symmetric_stochastic.passed
                && minimum_weight.passed
                && window_connectivity.passed,
            n: self.n,
            period: self.period(),
            w_min: self.w_min.to_f64_lossy(),
            window: self.window,
            symmetric_stochastic,
            minimum_weight,
            window_connectivity,
            note: "periodic schedule: conditions checked exhaustively over one period".into(),
        }
    }

    fn check_indices(k: usize, j: usize) -> Result<()> {
        if j < 1 || k <= j {
            return Err(Error::Index(format!("need k > j >= 1, got k={k}, j={j}")));
        }
        Ok(())
    }

    /// Φ(k, j) = W(k−1)·W(k−2)···W(j).
    pub fn forward_product(&self, k: usize, j: usize) -> Result<Matrix<T>> {
        Self::check_indices(k, j)?;
        let mut phi = self.at(j).clone();
        for l in (j + 1)..k {
            phi = self.at(l).matmul(&phi);
        }
        Ok(phi)
    }

    /// Φ(k, j) − J.
    pub fn disagreement_product(&self, k: usize, j: usize) -> Result<Matrix<T>> {
        Ok(self.forward_product(k, j)?.sub(&Matrix::averaging(self.n)))
    }

    /// (W(k−1) − J)···(W(j) − J); equal to `disagreement_product` for doubly
    /// stochastic factors.
    pub fn disagreement_product_factored(&self, k: usize, j: usize) -> Result<Matrix<T>> {
        Self::check_indices(k, j)?;
        let jm = Matrix::averaging(self.n);
        let mut acc = self.at(j).sub(&jm);
        for l in (j + 1)..k {
            acc = self.at(l).sub(&jm).matmul(&acc);
        }
        Ok(acc)
    }

    /// Compares `max |Φ̃(k, j)|` with `θβ^(k−j)` for every start offset in one
    /// period and every gap up to `max_gap`.
    pub fn check_geometric_decay(&self, max_gap: usize) -> Result<DecayReport> {
        let bound = self.contraction_bound()?;
        let jm = Matrix::averaging(self.n);
        let tilde: Vec<_> = self.matrices.iter().map(|w| w.sub(&jm)).collect();
        let p = self.period();
        let mut by_gap = vec![0.0f64; max_gap];
        let mut worst = (f64::NEG_INFINITY, (0, 0));
        for j in 1..=p {
            let mut acc = tilde[(j - 1) % p].clone();
            for gap in 1..=max_gap {
                let k = j + gap;
                let b = bound.at_gap(gap);
                let mut peak = T::zero();
                let mut peak_at = (0, 0);
                for r in 0..self.n {
                    for c in 0..self.n {
                        let x = acc[(r, c)].abs();
                        if x > peak {
                            peak = x;
                            peak_at = (r, c);
                        }
                    }
                }
                if peak > b {
                    return Err(Error::BoundViolated {
                        k,
                        j,
                        row: peak_at.0,
                        col: peak_at.1,
                        value: peak.to_f64_lossy(),
                        bound: b.to_f64_lossy(),
                    });
                }
                let ratio = (peak / b).to_f64_lossy();
                if ratio > worst.0 {
                    worst = (ratio, (k, j));
                }
                by_gap[gap - 1] = by_gap[gap - 1].max(peak.to_f64_lossy());
                if gap < max_gap {
                    acc = tilde[(k - 1) % p].matmul(&acc);
                }
            }
        }
        Ok(DecayReport {
            max_gap,
            theta: bound.theta.to_f64_lossy(),
            beta: bound.beta.to_f64_lossy(),
            worst_slack_ratio: worst.0.max(0.0),
            worst_at: worst.1,
            measured_rate: measured_contraction(&by_gap),
            max_entry_by_gap: by_gap,
        })
    }

    /// Relabels nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            n: self.n,
            matrices: self.matrices.iter().map(|w| w.permuted(perm)).collect(),
            w_min: self.w_min,
            window: self.window,
        }
    }
}

fn window_connected(n: usize, supports: &[Vec<(usize, usize)>], start: usize, len: usize) -> bool {
    let p = supports.len();
    is_connected(
        n,
        (0..len).flat_map(|o| supports[(start + o) % p].iter().copied()),
    )
}

fn minimal_window<T: Scalar>(matrices: &[Matrix<T>]) -> Option<usize> {
    let n = matrices[0].rows();
    let supports: Vec<_> = matrices.iter().map(support).collect();
    let p = matrices.len();
    (1..=p).find(|&b| (0..p).all(|s| window_connected(n, &supports, s, b)))
}

/// exp(slope) of a least-squares fit of ln(max entry) on the gap, using gaps
/// whose worst entry is still well above round-off.
fn measured_contraction(by_gap: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = by_gap
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-12)
        .map(|(g, &v)| ((g + 1) as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternation3() -> WeightSchedule<f64> {
        WeightSchedule::build(&ScheduleSpec::AlternatingLinks {
            n: 3,
            links: vec![(0, 1), (1, 2)],
            period: None,
        })
        .unwrap()
    }

    /// Brute-force union connectivity for every window length, independent
    /// of the schedule's own search.
    fn brute_force_min_window(n: usize, links_per_step: &[Vec<(usize, usize)>]) -> Option<usize> {
        let p = links_per_step.len();
        'outer: for b in 1..=p {
            for s in 0..p {
                let mut adj = vec![vec![false; n]; n];
                for o in 0..b {
                    for &(i, j) in &links_per_step[(s + o) % p] {
                        adj[i][j] = true;
                        adj[j][i] = true;
                    }
                }
                // transitive closure
                for m in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            if adj[i][m] && adj[m][j] {
                                adj[i][j] = true;
                            }
                        }
                    }
                }
                if !(1..n).all(|j| adj[0][j]) {
                    continue 'outer;
                }
            }
            return Some(b);
        }
        None
    }

    #[test]
    fn static_connected_graph_has_window_one() {
        let s = WeightSchedule::<f64>::build(&ScheduleSpec::Static {
            n: 3,
            edges: vec![(0, 1), (1, 2)],
        })
        .unwrap();
        assert_eq!(s.window(), 1);
        assert_eq!(s.period(), 1);
        assert!((s.w_min() - 1.0 / 3.0).abs() < 1e-15);
        assert!(s.validate().passed);
    }

    #[test]
    fn alternation_window_and_w_min() {
        let s = alternation3();
        let oracle = brute_force_min_window(3, &[vec![(0, 1)], vec![(1, 2)]]);
        assert_eq!(oracle, Some(2));
        assert_eq!(s.window(), 2);
        assert_eq!(s.w_min(), 0.5);
        assert!(s.validate().passed);
    }

    #[test]
    fn disconnected_forever_is_rejected() {
        let r = WeightSchedule::<f64>::build(&ScheduleSpec::Static {
            n: 4,
            edges: vec![(0, 1), (2, 3)],
        });
        assert_eq!(r.unwrap_err(), Error::NoConnectedWindow { period: 1 });
    }

    #[test]
    fn invalid_matrices_rejected() {
        let bad = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.4, 0.6]]).unwrap();
        assert!(matches!(
            WeightSchedule::from_matrices(vec![bad]),
            Err(Error::InvalidWeights { k: 1, .. })
        ));
        let zero_diag = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            WeightSchedule::from_matrices(vec![zero_diag]),
            Err(Error::InvalidWeights { .. })
        ));
    }

    #[test]
    fn validation_flags_bad_row_sum() {
        let good = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let bad = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.4, 0.6]]).unwrap();
        let s = WeightSchedule::from_parts_unchecked(vec![good, bad], 0.4, 1);
        let r = s.validate();
        assert!(!r.passed);
        assert!(!r.symmetric_stochastic.passed);
        assert_eq!(r.symmetric_stochastic.failures[0].k, 2);
    }

    #[test]
    fn validation_flags_overclaimed_window() {
        let links = vec![(0, 1), (1, 2), (2, 3)];
        let s = WeightSchedule::<f64>::build(&ScheduleSpec::AlternatingLinks {
            n: 4,
            links: links.clone(),
            period: None,
        })
        .unwrap();
        let per_step: Vec<_> = links.iter().map(|&l| vec![l]).collect();
        assert_eq!(brute_force_min_window(4, &per_step), Some(3));
        assert_eq!(s.window(), 3);
        let claimed = WeightSchedule::from_parts_unchecked(s.matrices().to_vec(), s.w_min(), 2);
        let r = claimed.validate();
        assert!(!r.passed);
        assert!(r.symmetric_stochastic.passed);
        assert!(!r.window_connectivity.passed);
        assert_eq!(r.window_connectivity.failures.len(), 3);
    }

    #[test]
    fn validation_flags_low_weight() {
        let s = alternation3();
        let r = WeightSchedule::from_parts_unchecked(s.matrices().to_vec(), 0.75, 2).validate();
        assert!(!r.minimum_weight.passed);
    }

    #[test]
    fn forward_product_examples() {
        let s = alternation3();
        assert_eq!(s.forward_product(2, 1).unwrap(), *s.at(1));
        let phi = s.forward_product(3, 1).unwrap();
        // W(2)·W(1) multiplied out by hand.
        let want = [[0.5, 0.5, 0.0], [0.25, 0.25, 0.5], [0.25, 0.25, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((phi[(i, j)] - want[i][j]).abs() < 1e-15);
            }
        }
        assert!(matches!(s.forward_product(3, 3), Err(Error::Index(_))));
        assert!(matches!(s.forward_product(3, 0), Err(Error::Index(_))));

        let st = WeightSchedule::<f64>::build(&ScheduleSpec::Static {
            n: 3,
            edges: vec![(0, 1), (1, 2)],
        })
        .unwrap();
        let w = st.at(1);
        let w3 = w.matmul(w).matmul(w);
        assert!(st.forward_product(5, 2).unwrap().sub(&w3).max_abs() < 1e-15);
    }

    #[test]
    fn disagreement_two_node_closed_form() {
        let a = 0.7;
        let w = Matrix::<f64>::from_rows(&[vec![a, 1.0 - a], vec![1.0 - a, a]]).unwrap();
        let s = WeightSchedule::from_matrices(vec![w]).unwrap();
        let d: Matrix<f64> = s.disagreement_product(2, 1).unwrap();
        let c = a - 0.5;
        let want = [[c, -c], [-c, c]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((d[(i, j)] - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn disagreement_vanishes_for_averaging_schedule() {
        let s = WeightSchedule::from_matrices(vec![Matrix::<f64>::averaging(4)]).unwrap();
        assert!(s.disagreement_product(7, 2).unwrap().max_abs() < 1e-15);
        let rep = s.check_geometric_decay(50).unwrap();
        assert!(rep.worst_slack_ratio < 1e-14);
        assert!(rep.measured_rate.is_none());
    }

    #[test]
    fn disagreement_routes_agree_on_alternation() {
        let s = alternation3();
        let a = s.disagreement_product(5, 1).unwrap();
        let b = s.disagreement_product_factored(5, 1).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-12);
        // direct multiplication oracle
        let mut phi = Matrix::identity(3);
        for l in 1..5 {
            phi = s.at(l).matmul(&phi);
        }
        let oracle = phi.sub(&Matrix::averaging(3));
        assert!((a.max_abs() - oracle.max_abs()).abs() < 1e-15);
    }

    #[test]
    fn lemma_bound_values() {
        let b = lemma_bound(2, 0.5f64, 1).unwrap();
        assert!((b.beta - 31.0 / 32.0).abs() < 1e-15);
        assert!((b.theta - (32.0f64 / 31.0).powi(2)).abs() < 1e-14);
        assert!((b.theta - 1.065557).abs() < 1e-6);

        let far = lemma_bound(2, 0.5, 50).unwrap();
        assert_eq!(far.theta, b.theta);
        assert!(far.beta > b.beta && far.beta < 1.0);

        let one = lemma_bound(1, 0.4, 3).unwrap();
        assert!((one.theta - (1.0f64 - 0.1).powi(-2)).abs() < 1e-14);

        assert!(lemma_bound(0, 0.5, 1).is_err());
        assert!(lemma_bound(2, 0.0, 1).is_err());
        assert!(lemma_bound(2, 1.5, 1).is_err());
        assert!(lemma_bound(2, 0.5, 0).is_err());
    }

    #[test]
    fn alternation_decays_within_bound() {
        let s = alternation3();
        let rep = s.check_geometric_decay(200).unwrap();
        assert!(rep.worst_slack_ratio <= 1.0);
        let rate = rep.measured_rate.unwrap();
        assert!(rate < rep.beta);
    }

    #[test]
    fn random_subgraph_is_frozen_by_seed() {
        let spec = ScheduleSpec::<f64>::RandomSubgraph {
            n: 5,
            base: vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)],
            period: 8,
            seed: 11,
            keep_probability: 0.5,
        };
        let a = WeightSchedule::build(&spec).unwrap();
        let b = WeightSchedule::build(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().passed);
    }

    #[test]
    fn periodic_extension() {
        let s = alternation3();
        assert_eq!(s.at(1), s.at(3));
        assert_eq!(s.at(2), s.at(100));
    }
}
