//! Undirected graph snapshots, Metropolis weights and connectivity checks.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// The set of undirected links online at one time step. Nodes are 0-based;
/// each edge is stored once as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSnapshot {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl GraphSnapshot {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Parameter(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Parameter(format!(
                    "edge ({a},{b}) references a node outside 0..{n}"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self.n, self.edges.iter().copied())
    }
}

/// Metropolis–Hastings weights: `W_ij = 1/(1 + max(d_i, d_j))` on edges and
/// the remaining mass on the diagonal.
pub fn metropolis_weights<T: Scalar>(g: &GraphSnapshot) -> Matrix<T> {
    let n = g.n();
    let deg = g.degrees();
    let mut w = Matrix::zeros(n, n);
    for (i, j) in g.edges() {
        let wij = T::one() / T::lit((1 + deg[i].max(deg[j])) as f64);
        w[(i, j)] = wij;
        w[(j, i)] = wij;
    }
    for i in 0..n {
        let off: T = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = T::one() - off;
    }
    w
}

/// Breadth-first search over an undirected edge list.
pub fn is_connected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> bool {
    if n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

/// Off-diagonal support `{(i, j) : i < j, W_ij > 0}` of a weight matrix.
pub fn support<T: Scalar>(w: &Matrix<T>) -> Vec<(usize, usize)> {
    let n = w.rows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if w[(i, j)] > T::zero() || w[(j, i)] > T::zero() {
                out.push((i, j));
            }
        }
    }
    out
}
