//! Weighted digraphs and Laplacian-derived quantities.
//!
//! The Laplacian convention is `L = D_out − A`: `L_ii = Σ_j a_ij` over
//! out-edges and `L_ij = −a_ij`, so row sums vanish and `L·1ₙ = 0` always.
//! On top of it this module computes the data network analyses consume:
//!
//! | Quantity | Builder |
//! |----------|---------|
//! | Laplacian matrix | [`laplacian`] |
//! | global reachability | [`globally_reachable`] |
//! | dominant left eigenvector `v` (`vᵀL = 0`, `1ᵀv = 1`) | [`dominant_left_eigenvector`] |
//! | algebraic connectivity λ₂ and the disagreement eigenbasis | [`disagreement_basis`] |
//! | ε-optimal complex reduction for directed Laplacians | [`epsilon_reduction`] |
//!
//! The disagreement eigenbasis stacks the orthonormal Laplacian eigenvectors
//! at λ₂ ≤ … ≤ λₙ as rows: it annihilates the consensus direction and
//! diagonalizes the symmetric Laplacian on its complement. For directed
//! graphs no orthonormal row basis achieves the essential spectral abscissa
//! exactly, but [`epsilon_reduction`] gets within any ε > 0 of it.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::linalg::{self, hermitian_eigen, null_space, DenseMatrix, LinalgError};
use crate::measures::{self, MeasureError, PNorm, ZERO_EIGENVALUE_TOL};

/// Errors from graph analysis.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("no globally reachable node (zero eigenvalue is not simple)")]
    NotReachable,

    #[error("graph is disconnected (λ₂ = {lambda2:.3e})")]
    Disconnected { lambda2: f64 },

    #[error("matrix is not a symmetric Laplacian: {0}")]
    NotSymmetric(String),

    #[error(
        "could not reach the essential-abscissa bound within ε = {epsilon:.3e} \
         (best slack {best_slack:.3e})"
    )]
    EpsilonTooSmall { epsilon: f64, best_slack: f64 },

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// A weighted digraph on nodes `0..n`. Undirected graphs store each edge
/// once and expand it symmetrically where adjacency is needed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedDigraph {
    n: usize,
    directed: bool,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedDigraph {
    /// Validates and builds a graph: endpoints in range, no self-loops,
    /// strictly positive weights.
    pub fn new(n: usize, directed: bool, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(GraphError::InvalidGraph("node count must be ≥ 1".into()));
        }
        for &(i, j, w) in &edges {
            if i >= n || j >= n {
                return Err(GraphError::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(GraphError::InvalidGraph(format!("self-loop at node {i}")));
            }
            if !(w > 0.0) {
                return Err(GraphError::InvalidGraph(format!(
                    "edge ({i}, {j}) has non-positive weight {w}"
                )));
            }
        }
        Ok(WeightedDigraph { n, directed, edges })
    }

    /// Complete undirected graph on `n` nodes with uniform weight.
    pub fn complete(n: usize, weight: f64) -> Self {
        let edges = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j, weight)))
            .collect();
        Self::new(n, false, edges).expect("complete graph is always valid")
    }

    /// Path `0 — 1 — … — n−1` (or `0 → 1 → …` when directed).
    pub fn path(n: usize, weight: f64, directed: bool) -> Self {
        let edges = (0..n.saturating_sub(1))
            .map(|i| (i, i + 1, weight))
            .collect();
        Self::new(n, directed, edges).expect("path graph is always valid")
    }

    /// Star with the given center and uniform weights; undirected.
    pub fn star(n: usize, center: usize, weight: f64) -> Self {
        let edges = (0..n)
            .filter(|&i| i != center)
            .map(|i| (center, i, weight))
            .collect();
        Self::new(n, false, edges).expect("star graph is always valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Stored edges (one direction per undirected pair).
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Adjacency weights: `a[i][j]` is the total weight of edges `i → j`,
    /// with symmetric expansion for undirected graphs.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for &(i, j, w) in &self.edges {
            a[i][j] += w;
            if !self.directed {
                a[j][i] += w;
            }
        }
        a
    }
}

impl<'de> Deserialize<'de> for WeightedDigraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            n: usize,
            directed: bool,
            edges: Vec<(usize, usize, f64)>,
        }
        let raw = Raw::deserialize(deserializer)?;
        WeightedDigraph::new(raw.n, raw.directed, raw.edges).map_err(serde::de::Error::custom)
    }
}

/// Out-degree Laplacian `L = D_out − A` (always with zero row sums).
pub fn laplacian(g: &WeightedDigraph) -> DenseMatrix {
    let a = g.adjacency();
    DenseMatrix::from_real_fn(g.n(), g.n(), |i, j| {
        if i == j {
            a[i].iter().sum()
        } else {
            -a[i][j]
        }
    })
}

/// True iff some node is reachable from every node along directed edges
/// (trivially true for connected undirected graphs). Checked by breadth-first
/// search on reversed edges from each candidate sink.
pub fn globally_reachable(g: &WeightedDigraph) -> bool {
    let n = g.n();
    // reverse_adj[j] lists nodes i with an edge i → j.
    let mut reverse_adj = vec![Vec::new(); n];
    for &(i, j, _) in g.edges() {
        reverse_adj[j].push(i);
        if !g.is_directed() {
            reverse_adj[i].push(j);
        }
    }
    'candidates: for target in 0..n {
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([target]);
        seen[target] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &reverse_adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        if count == n {
            return true;
        }
        // All nodes reaching `target` also fail for any node outside the
        // seen set, but the scan is cheap at desk scale; keep it simple.
        continue 'candidates;
    }
    false
}

/// The dominant left eigenvector of a digraph Laplacian: `v ≥ 0`, `vᵀL = 0`,
/// `1ᵀv = 1`. Strictly positive when the graph is strongly connected; zero
/// outside the terminal component otherwise.
///
/// # Errors
/// [`GraphError::NotReachable`] unless the zero eigenvalue is simple (which
/// is equivalent to the graph having a globally reachable node).
pub fn dominant_left_eigenvector(l: &DenseMatrix) -> Result<Vec<f64>> {
    let zero_count = linalg::eigenvalues(l)?
        .iter()
        .filter(|z| z.norm() <= ZERO_EIGENVALUE_TOL * (1.0 + l.norm_inf()))
        .count();
    if zero_count != 1 {
        return Err(GraphError::NotReachable);
    }
    let kernel = null_space(&l.transpose(), None)?;
    if kernel.len() != 1 {
        return Err(GraphError::NotReachable);
    }
    // Rotate the complex phase out, then normalize the sum to one.
    let raw = &kernel[0];
    let lead = raw
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .copied()
        .unwrap_or(Complex64::ONE);
    let phase = lead / lead.norm();
    let mut v: Vec<f64> = raw.iter().map(|z| (z / phase).re).collect();
    let sum: f64 = v.iter().sum();
    debug_assert!(sum.abs() > 1e-12, "kernel vector has near-zero sum");
    for x in &mut v {
        *x /= sum;
        // Clamp round-off noise; genuinely negative entries cannot occur for
        // a Laplacian with a simple zero eigenvalue.
        if x.abs() <= 1e-12 {
            *x = 0.0;
        }
    }
    if v.iter().any(|&x| x < 0.0) {
        return Err(GraphError::NotReachable);
    }
    Ok(v)
}

/// Ascending eigenvalues of a symmetric Laplacian together with the
/// disagreement eigenbasis: the `(n−1)×n` matrix whose rows are the
/// orthonormal eigenvectors at λ₂ ≤ … ≤ λₙ, sign-canonicalized so each row's
/// first nonzero entry is positive.
///
/// The rows annihilate `1ₙ` and satisfy `R L Rᵀ = diag(λ₂, …, λₙ)`.
///
/// # Errors
/// [`GraphError::NotSymmetric`]; [`GraphError::Disconnected`] when
/// λ₂ ≤ 1e-10.
pub fn disagreement_basis(l: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = l.rows();
    if !l.is_square() {
        return Err(GraphError::NotSymmetric(format!(
            "matrix is {}×{}",
            l.rows(),
            l.cols()
        )));
    }
    let asym = (&l.clone() - &l.transpose()).max_abs();
    if asym > 1e-10 * (1.0 + l.max_abs()) {
        return Err(GraphError::NotSymmetric(format!(
            "asymmetry {asym:.3e} exceeds tolerance"
        )));
    }
    if n < 2 {
        return Err(GraphError::InvalidGraph(
            "need at least 2 nodes for a disagreement basis".into(),
        ));
    }
    let (w, vectors) = hermitian_eigen(l)?;
    if w[1] <= 1e-10 {
        return Err(GraphError::Disconnected { lambda2: w[1] });
    }
    let mut r = DenseMatrix::zeros(n - 1, n);
    for row in 0..n - 1 {
        let col = vectors.column(row + 1);
        let max_mod = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let first_nonzero = col
            .iter()
            .find(|z| z.norm() > 1e-8 * max_mod)
            .copied()
            .unwrap_or(Complex64::ONE);
        let sign = if first_nonzero.re < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            r[(row, j)] = Complex64::new(sign * col[j].re, 0.0);
        }
    }
    Ok((w, r))
}

/// A complex `(n−1)×n` reduction matrix `R` with `Ker R = span(1ₙ)` whose
/// weighted ∞-measure of `−L` comes within `epsilon` of the essential
/// spectral abscissa `α_ess(−L)` — the best any reduction can do.
///
/// Rows come from left eigenvectors of `L` at its nonzero eigenvalues
/// (automatically orthogonal to `1ₙ`); a defective Laplacian triggers seeded
/// random diagonalizing perturbations before giving up.
///
/// # Errors
/// [`GraphError::NotReachable`] when the zero eigenvalue is not simple;
/// [`GraphError::EpsilonTooSmall`] when the perturbation budget is exhausted.
pub fn epsilon_reduction(l: &DenseMatrix, epsilon: f64) -> Result<DenseMatrix> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n = l.rows();
    if n < 2 {
        return Err(GraphError::InvalidGraph(
            "need at least 2 nodes for a reduction".into(),
        ));
    }
    let zero_count = linalg::eigenvalues(l)?
        .iter()
        .filter(|z| z.norm() <= ZERO_EIGENVALUE_TOL * (1.0 + l.norm_inf()))
        .count();
    if zero_count != 1 {
        return Err(GraphError::NotReachable);
    }
    let neg_l = l.scale(Complex64::new(-1.0, 0.0));
    let ones = vec![Complex64::ONE; n];
    match measures::optimal_reduction_matrix(&neg_l, &[ones], PNorm::Inf, epsilon) {
        Ok(r) => Ok(r),
        Err(MeasureError::EpsilonTooSmall {
            epsilon,
            best_slack,
            ..
        }) => Err(GraphError::EpsilonTooSmall {
            epsilon,
            best_slack,
        }),
        Err(other) => Err(other.into()),
    }
}

/// Everything downstream network analyses need from one graph, bundled.
#[derive(Debug, Clone)]
pub struct LaplacianBundle {
    pub l: DenseMatrix,
    /// Algebraic connectivity; present for connected undirected graphs.
    pub lambda2: Option<f64>,
    /// Dominant left eigenvector (`vᵀL = 0`, `1ᵀv = 1`, `v ≥ 0`).
    pub v: Vec<f64>,
    /// Essential spectral abscissa of `−L` (convergence-rate yardstick).
    pub alpha_ess: f64,
    /// Disagreement eigenbasis; present for connected undirected graphs.
    pub r_v: Option<DenseMatrix>,
}

impl LaplacianBundle {
    /// Analyzes a graph with a globally reachable node.
    ///
    /// # Errors
    /// [`GraphError::NotReachable`]; [`GraphError::Disconnected`] for an
    /// undirected graph that fails the connectivity check.
    pub fn analyze(g: &WeightedDigraph) -> Result<Self> {
        let l = laplacian(g);
        let v = dominant_left_eigenvector(&l)?;
        let neg_l = l.scale(Complex64::new(-1.0, 0.0));
        let alpha_ess = measures::alpha_ess(&neg_l)?;
        let (lambda2, r_v) = if g.is_directed() {
            (None, None)
        } else {
            let (w, r) = disagreement_basis(&l)?;
            (Some(w[1]), Some(r))
        };
        Ok(LaplacianBundle {
            l,
            lambda2,
            v,
            alpha_ess,
            r_v,
        })
    }
}
