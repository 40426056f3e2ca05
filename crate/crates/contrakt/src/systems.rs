//! The model zoo: every dynamical system this crate analyzes, with exact
//! vector fields, Jacobians, known invariant structure, and predicted
//! limits and rates.
//!
//! | Builder | Dynamics |
//! |---------|----------|
//! | [`affine_averaging`] | `ẋ = −Lx + b` (consensus-style averaging) |
//! | [`affine_flow`] | `ẋ = −Lᵀx + b` (mass-conserving flow) |
//! | [`primal_dual`] | distributed optimization saddle dynamics on `(x, ν)` |
//! | [`diffusive_network`] | `n` identical systems with diffusive coupling |
//! | [`lotka_volterra`] | `ẋ = diag(x)(Ax + r)` plus its log-coordinate form |
//! | [`andronov_hopf`] | planar oscillator `ẋ = ωJx + (β − ‖x‖²)x` |
//! | [`toy_example`] | hand-picked 2-dimensional counterexample systems |
//!
//! Each [`DynSystem`] carries metadata the certifiers and the simulator
//! consume: conserved functionals, the kernel of the certifying semi-norm,
//! equilibrium structure, a predicted decay rate with a plain-language
//! provenance note, and (when the theory pins it down) the expected limit
//! as a function of the initial condition.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

use crate::graph::{self, GraphError, WeightedDigraph};
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::measures::{self, MeasureError};

/// Off-diagonal entries of a Metzler matrix may undershoot zero by this much.
pub const METZLER_TOL: f64 = 1e-12;

/// Sampled Hessians with an eigenvalue below `−CONVEXITY_TOL` refute convexity.
pub const CONVEXITY_TOL: f64 = 1e-9;

/// Relative tolerance for the finite-difference Jacobian validation.
pub const JACOBIAN_FD_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum SystemsError {
    #[error("graph has no globally reachable node")]
    NotReachable,

    #[error("graph must be connected and undirected (λ₂ = {lambda2:.3e})")]
    NotConnected { lambda2: f64 },

    #[error("cost {index} is not convex: sampled Hessian eigenvalue {eigenvalue:.3e} at {point:?}")]
    NonConvexCost {
        index: usize,
        eigenvalue: f64,
        point: Vec<f64>,
    },

    #[error("matrix is not Metzler: entry ({i}, {j}) = {value:.3e}")]
    NotMetzler { i: usize, j: usize, value: f64 },

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.3e}); no positive equilibrium")]
    NotHurwitz { abscissa: f64 },

    #[error("unknown system name {0:?}")]
    UnknownName(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, SystemsError>;

type VectorField = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
type JacobianField = Arc<dyn Fn(f64, &[f64]) -> DenseMatrix + Send + Sync>;
type StateFunctional = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type StateMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// What is known about the equilibrium set of a system.
#[derive(Debug, Clone, PartialEq)]
pub enum Equilibria {
    /// Nothing asserted.
    Unspecified,
    /// No equilibrium exists and every trajectory is unbounded.
    AllUnbounded,
    /// A single known equilibrium point.
    Point(Vec<f64>),
    /// The affine set `base + span(directions)`.
    AffineSet {
        base: Vec<f64>,
        directions: Vec<Vec<f64>>,
    },
}

/// A quantity `x ↦ q(x)` that trajectories keep constant.
#[derive(Clone)]
pub struct ConservedQuantity {
    pub name: String,
    eval: StateFunctional,
}

impl ConservedQuantity {
    pub fn linear(name: impl Into<String>, w: Vec<f64>) -> Self {
        ConservedQuantity {
            name: name.into(),
            eval: Arc::new(move |x| w.iter().zip(x).map(|(a, b)| a * b).sum()),
        }
    }

    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ConservedQuantity {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}

impl std::fmt::Debug for ConservedQuantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConservedQuantity").field("name", &self.name).finish()
    }
}

/// An expected exponential decay rate together with a plain-language note
/// saying which quantity it is.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedRate {
    pub value: f64,
    pub provenance: String,
}

/// A finite-dimensional dynamical system `ẋ = f(t, x)` with its Jacobian
/// and structural metadata.
#[derive(Clone)]
pub struct DynSystem {
    dim: usize,
    name: String,
    f: VectorField,
    jacobian: JacobianField,
    time_invariant: bool,
    known_kernel: Option<Vec<Vec<f64>>>,
    known_equilibria: Equilibria,
    predicted_rate: Option<PredictedRate>,
    conserved: Vec<ConservedQuantity>,
    limit_from: Option<StateMap>,
}

impl std::fmt::Debug for DynSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("time_invariant", &self.time_invariant)
            .finish()
    }
}

impl DynSystem {
    pub fn new(
        dim: usize,
        name: impl Into<String>,
        f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(f64, &[f64]) -> DenseMatrix + Send + Sync + 'static,
    ) -> Self {
        DynSystem {
            dim,
            name: name.into(),
            f: Arc::new(f),
            jacobian: Arc::new(jacobian),
            time_invariant: true,
            known_kernel: None,
            known_equilibria: Equilibria::Unspecified,
            predicted_rate: None,
            conserved: Vec::new(),
            limit_from: None,
        }
    }

    pub fn time_varying(mut self) -> Self {
        self.time_invariant = false;
        self
    }

    pub fn with_kernel(mut self, basis: Vec<Vec<f64>>) -> Self {
        self.known_kernel = Some(basis);
        self
    }

    pub fn with_equilibria(mut self, e: Equilibria) -> Self {
        self.known_equilibria = e;
        self
    }

    pub fn with_rate(mut self, value: f64, provenance: impl Into<String>) -> Self {
        self.predicted_rate = Some(PredictedRate {
            value,
            provenance: provenance.into(),
        });
        self
    }

    pub fn with_conserved(mut self, q: ConservedQuantity) -> Self {
        self.conserved.push(q);
        self
    }

    pub fn with_limit(
        mut self,
        limit: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.limit_from = Some(Arc::new(limit));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Vector field `f(t, x)`.
    pub fn f(&self, t: f64, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (self.f)(t, x)
    }

    /// Jacobian `Df(t, x)` (with respect to `x`).
    pub fn jacobian(&self, t: f64, x: &[f64]) -> DenseMatrix {
        debug_assert_eq!(x.len(), self.dim);
        (self.jacobian)(t, x)
    }

    pub fn is_time_invariant(&self) -> bool {
        self.time_invariant
    }

    /// Basis of the subspace a certifying semi-norm is allowed to ignore.
    pub fn known_kernel(&self) -> Option<&[Vec<f64>]> {
        self.known_kernel.as_deref()
    }

    pub fn known_equilibria(&self) -> &Equilibria {
        &self.known_equilibria
    }

    pub fn predicted_rate(&self) -> Option<&PredictedRate> {
        self.predicted_rate.as_ref()
    }

    pub fn conserved(&self) -> &[ConservedQuantity] {
        &self.conserved
    }

    /// Predicted limit of the trajectory from `x0`, when the theory pins one
    /// down.
    pub fn limit_from(&self, x0: &[f64]) -> Option<Vec<f64>> {
        self.limit_from.as_ref().map(|l| l(x0))
    }
}

/// Worst relative finite-difference defect of the Jacobian over `count`
/// deterministic samples in the box. The defect at one sample is
/// `‖Df − FD(f)‖∞ / (1 + ‖Df‖∞)` with central differences.
pub fn jacobian_fd_defect(
    sys: &DynSystem,
    lo: &[f64],
    hi: &[f64],
    count: usize,
    seed: u64,
) -> f64 {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = sys.dim();
    assert_eq!(lo.len(), n);
    assert_eq!(hi.len(), n);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let x: Vec<f64> = (0..n).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
        let t = if sys.is_time_invariant() {
            0.0
        } else {
            rng.random_range(0.0..10.0)
        };
        let jac = sys.jacobian(t, &x);
        let mut fd = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = sys.f(t, &xp);
            let fm = sys.f(t, &xm);
            for i in 0..n {
                fd[(i, j)] = Complex64::new((fp[i] - fm[i]) / (2.0 * h), 0.0);
            }
        }
        let defect = (&jac - &fd).norm_inf() / (1.0 + jac.norm_inf());
        worst = worst.max(defect);
    }
    worst
}

fn real_matrix(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)].re).collect())
        .collect()
}

fn mat_vec(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `(L ⊗ I_k)·x` acting blockwise on `x ∈ ℝ^{nk}`.
fn kron_apply(l: &[Vec<f64>], k: usize, x: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n * k];
    for i in 0..n {
        for (j, &lij) in l[i].iter().enumerate() {
            if lij == 0.0 {
                continue;
            }
            for c in 0..k {
                y[i * k + c] += lij * x[j * k + c];
            }
        }
    }
    y
}

/// The averaging dynamics `ẋ = −Lx + b` on a digraph with a globally
/// reachable node. Conserves `vᵀx` (`v` the dominant left eigenvector);
/// when `vᵀb = 0` trajectories converge to `L†b + (vᵀx₀)1ₙ` at rate
/// `−α_ess(−L)`, otherwise every trajectory is unbounded.
pub fn affine_averaging(g: &WeightedDigraph, b: &[f64]) -> Result<DynSystem> {
    let n = g.n();
    if b.len() != n {
        return Err(SystemsError::InvalidParams(format!(
            "b has length {}, graph has {n} nodes",
            b.len()
        )));
    }
    let l = graph::laplacian(g);
    let v = graph::dominant_left_eigenvector(&l).map_err(|e| match e {
        GraphError::NotReachable => SystemsError::NotReachable,
        other => other.into(),
    })?;
    let neg_l = l.scale(Complex64::new(-1.0, 0.0));
    let alpha_ess = measures::alpha_ess(&neg_l)?;
    let l_rows = real_matrix(&l);
    let b_own = b.to_vec();
    let field = {
        let l_rows = l_rows.clone();
        let b = b_own.clone();
        move |_t: f64, x: &[f64]| {
            let lx = mat_vec(&l_rows, x);
            lx.iter().zip(&b).map(|(lx_i, b_i)| b_i - lx_i).collect()
        }
    };
    let jac = move |_t: f64, _x: &[f64]| neg_l.clone();

    let v_dot_b: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
    let scale = 1.0 + b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut sys = DynSystem::new(n, "affine_averaging", field, jac)
        .with_kernel(vec![vec![1.0; n]])
        .with_conserved(ConservedQuantity::linear("vᵀx", v.clone()))
        .with_rate(-alpha_ess, "minus the essential spectral abscissa of −L");
    if v_dot_b.abs() > 1e-12 * scale {
        sys = sys.with_equilibria(Equilibria::AllUnbounded);
    } else {
        let l_pinv = linalg::pinv(&l, None)?;
        let bc: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        // Particular solution of Lx = b, shifted along 1ₙ so that vᵀbase = 0:
        // the limit of a trajectory must carry the conserved value vᵀx₀, and
        // the Moore–Penrose solution has vᵀ(L†b) ≠ 0 on directed graphs.
        let mut base: Vec<f64> = l_pinv.mul_vec(&bc).iter().map(|z| z.re).collect();
        let v_dot_base: f64 = v.iter().zip(&base).map(|(a, c)| a * c).sum();
        for entry in &mut base {
            *entry -= v_dot_base;
        }
        let v_limit = v.clone();
        let base_limit = base.clone();
        sys = sys
            .with_equilibria(Equilibria::AffineSet {
                base: base.clone(),
                directions: vec![vec![1.0; n]],
            })
            .with_limit(move |x0| {
                let shift: f64 = v_limit.iter().zip(x0).map(|(a, b)| a * b).sum();
                base_limit.iter().map(|p| p + shift).collect()
            });
    }
    Ok(sys)
}

/// The flow dynamics `ẋ = −Lᵀx + b`. Conserves `1ᵀx`; when `1ᵀb = 0`
/// trajectories converge to `(Lᵀ)†b + (1ᵀx₀)v` at rate `−α_ess(−L)`,
/// otherwise every trajectory is unbounded.
pub fn affine_flow(g: &WeightedDigraph, b: &[f64]) -> Result<DynSystem> {
    let n = g.n();
    if b.len() != n {
        return Err(SystemsError::InvalidParams(format!(
            "b has length {}, graph has {n} nodes",
            b.len()
        )));
    }
    let l = graph::laplacian(g);
    let v = graph::dominant_left_eigenvector(&l).map_err(|e| match e {
        GraphError::NotReachable => SystemsError::NotReachable,
        other => other.into(),
    })?;
    let lt = l.transpose();
    let neg_lt = lt.scale(Complex64::new(-1.0, 0.0));
    let alpha_ess = measures::alpha_ess(&neg_lt)?;
    let lt_rows = real_matrix(&lt);
    let b_own = b.to_vec();
    let field = {
        let lt_rows = lt_rows.clone();
        let b = b_own.clone();
        move |_t: f64, x: &[f64]| {
            let ltx = mat_vec(&lt_rows, x);
            ltx.iter().zip(&b).map(|(y, b_i)| b_i - y).collect()
        }
    };
    let jac = move |_t: f64, _x: &[f64]| neg_lt.clone();

    let ones_dot_b: f64 = b.iter().sum();
    let scale = 1.0 + b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut sys = DynSystem::new(n, "affine_flow", field, jac)
        .with_kernel(vec![v.clone()])
        .with_conserved(ConservedQuantity::linear("1ᵀx", vec![1.0; n]))
        .with_rate(-alpha_ess, "minus the essential spectral abscissa of −L");
    if ones_dot_b.abs() > 1e-12 * scale {
        sys = sys.with_equilibria(Equilibria::AllUnbounded);
    } else {
        let lt_pinv = linalg::pinv(&lt, None)?;
        let bc: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        // Particular solution of Lᵀx = b, shifted along v so that 1ᵀbase = 0:
        // the limit must carry the conserved mass 1ᵀx₀, and the Moore–Penrose
        // solution has 1ᵀ(Lᵀ)†b ≠ 0 on directed graphs.
        let mut base: Vec<f64> = lt_pinv.mul_vec(&bc).iter().map(|z| z.re).collect();
        let mass_base: f64 = base.iter().sum();
        for (entry, vi) in base.iter_mut().zip(&v) {
            *entry -= mass_base * vi;
        }
        let v_limit = v.clone();
        let base_limit = base.clone();
        sys = sys
            .with_equilibria(Equilibria::AffineSet {
                base: base.clone(),
                directions: vec![v.clone()],
            })
            .with_limit(move |x0| {
                let mass: f64 = x0.iter().sum();
                base_limit
                    .iter()
                    .zip(&v_limit)
                    .map(|(p, vi)| p + mass * vi)
                    .collect()
            });
    }
    Ok(sys)
}

/// A convex scalar field with gradient and Hessian, used as one agent's
/// objective in [`primal_dual`].
#[derive(Clone)]
pub struct CostFunction {
    pub name: String,
    dim: usize,
    value: StateFunctional,
    gradient: StateMap,
    hessian: Arc<dyn Fn(&[f64]) -> DenseMatrix + Send + Sync>,
}

impl std::fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl CostFunction {
    pub fn from_parts(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> DenseMatrix + Send + Sync + 'static,
    ) -> Self {
        CostFunction {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
        }
    }

    /// `½‖x − a‖₂²`.
    pub fn quadratic(target: Vec<f64>) -> Self {
        let dim = target.len();
        let t1 = target.clone();
        let t2 = target.clone();
        CostFunction::from_parts(
            "quadratic",
            dim,
            move |x| {
                0.5 * x
                    .iter()
                    .zip(&target)
                    .map(|(xi, ai)| (xi - ai) * (xi - ai))
                    .sum::<f64>()
            },
            move |x| x.iter().zip(&t1).map(|(xi, ai)| xi - ai).collect(),
            move |_x| {
                let _ = &t2;
                DenseMatrix::identity(dim)
            },
        )
    }

    /// `¼‖x − a‖₂⁴` — convex, with a Hessian that vanishes at `a` itself.
    pub fn quartic(target: Vec<f64>) -> Self {
        let dim = target.len();
        let t1 = target.clone();
        let t2 = target.clone();
        CostFunction::from_parts(
            "quartic",
            dim,
            move |x| {
                let s: f64 = x
                    .iter()
                    .zip(&target)
                    .map(|(xi, ai)| (xi - ai) * (xi - ai))
                    .sum();
                0.25 * s * s
            },
            move |x| {
                let d: Vec<f64> = x.iter().zip(&t1).map(|(xi, ai)| xi - ai).collect();
                let s: f64 = d.iter().map(|v| v * v).sum();
                d.iter().map(|v| s * v).collect()
            },
            move |x| {
                let d: Vec<f64> = x.iter().zip(&t2).map(|(xi, ai)| xi - ai).collect();
                let s: f64 = d.iter().map(|v| v * v).sum();
                DenseMatrix::from_real_fn(dim, dim, |i, j| {
                    2.0 * d[i] * d[j] + if i == j { s } else { 0.0 }
                })
            },
        )
    }

    /// `log Σ_j exp(⟨c_j, x⟩ + d_j)` (smooth max; convex).
    pub fn log_sum_exp(rows: Vec<(Vec<f64>, f64)>) -> Self {
        assert!(!rows.is_empty(), "log-sum-exp needs at least one affine row");
        let dim = rows[0].0.len();
        assert!(rows.iter().all(|(c, _)| c.len() == dim));
        let weights = move |x: &[f64], rows: &[(Vec<f64>, f64)]| -> (f64, Vec<f64>) {
            let exponents: Vec<f64> = rows
                .iter()
                .map(|(c, d)| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + d)
                .collect();
            let m = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = exponents.iter().map(|e| (e - m).exp()).collect();
            let z: f64 = weights.iter().sum();
            (m + z.ln(), weights.iter().map(|w| w / z).collect())
        };
        let r1 = rows.clone();
        let r2 = rows.clone();
        let r3 = rows;
        CostFunction::from_parts(
            "log_sum_exp",
            dim,
            move |x| weights(x, &r1).0,
            move |x| {
                let (_, p) = weights(x, &r2);
                (0..r2[0].0.len())
                    .map(|i| p.iter().zip(&r2).map(|(pi, (c, _))| pi * c[i]).sum())
                    .collect()
            },
            move |x| {
                let (_, p) = weights(x, &r3);
                let mean: Vec<f64> = (0..dim)
                    .map(|i| p.iter().zip(&r3).map(|(pi, (c, _))| pi * c[i]).sum())
                    .collect();
                DenseMatrix::from_real_fn(dim, dim, |i, j| {
                    let second: f64 = p
                        .iter()
                        .zip(&r3)
                        .map(|(pi, (c, _))| pi * c[i] * c[j])
                        .sum();
                    second - mean[i] * mean[j]
                })
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: &[f64]) -> DenseMatrix {
        (self.hessian)(x)
    }
}

/// Finds a minimizer of `Σᵢ costs[i]` by a damped Newton iteration.
fn minimize_cost_sum(costs: &[CostFunction], k: usize) -> Option<Vec<f64>> {
    let grad_sum = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; k];
        for c in costs {
            for (gi, ci) in g.iter_mut().zip(c.gradient(x)) {
                *gi += ci;
            }
        }
        g
    };
    let mut x = vec![0.0; k];
    let mut grad = grad_sum(&x);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for _ in 0..200 {
        if norm(&grad) <= 1e-13 * (1.0 + norm(&x)) {
            return Some(x);
        }
        let mut hess = DenseMatrix::zeros(k, k);
        for c in costs {
            hess = &hess + &c.hessian(&x);
        }
        // Levenberg-style damping keeps the step well-defined when some
        // Hessians vanish (e.g. quartic costs at their own targets).
        let damped = &hess + &DenseMatrix::identity(k).scale(Complex64::new(1e-9, 0.0));
        let hinv = linalg::pinv(&damped, None).ok()?;
        let gc: Vec<Complex64> = grad.iter().map(|&g| Complex64::new(g, 0.0)).collect();
        let step: Vec<f64> = hinv.mul_vec(&gc).iter().map(|z| z.re).collect();
        let mut alpha = 1.0;
        let g0 = norm(&grad);
        loop {
            let candidate: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi - alpha * si).collect();
            let gc = grad_sum(&candidate);
            if norm(&gc) < g0 || alpha < 1e-12 {
                x = candidate;
                grad = gc;
                break;
            }
            alpha *= 0.5;
        }
    }
    (norm(&grad) <= 1e-9 * (1.0 + norm(&x))).then_some(x)
}

/// Distributed primal-dual optimization dynamics on a connected undirected
/// graph: states `(x, ν) ∈ ℝ^{2nk}`,
/// `ẋ = −∇h(x) − (L⊗I_k)ν`, `ν̇ = (L⊗I_k)x` with `h(x) = Σᵢ fᵢ(xᵢ)`.
///
/// `Σᵢ νᵢ` is conserved, so the predicted limit pairs the consensus
/// minimizer `1ₙ⊗x*` with `1ₙ⊗ν̄(0)` where `ν̄(0)` is the mean of the
/// initial dual blocks.
///
/// # Errors
/// [`SystemsError::NonConvexCost`] when a sampled Hessian of some cost has
/// an eigenvalue below `−1e-9`; [`SystemsError::NotConnected`].
pub fn primal_dual(
    g: &WeightedDigraph,
    costs: Vec<CostFunction>,
    k: usize,
) -> Result<DynSystem> {
    let n = g.n();
    if costs.len() != n {
        return Err(SystemsError::InvalidParams(format!(
            "{} costs for {n} nodes",
            costs.len()
        )));
    }
    if costs.iter().any(|c| c.dim() != k) {
        return Err(SystemsError::InvalidParams(
            "every cost must act on ℝᵏ".into(),
        ));
    }
    let l = graph::laplacian(g);
    if n > 1 {
        if g.is_directed() {
            return Err(SystemsError::NotConnected { lambda2: f64::NAN });
        }
        match graph::disagreement_basis(&l) {
            Ok(_) => {}
            Err(GraphError::Disconnected { lambda2 }) => {
                return Err(SystemsError::NotConnected { lambda2 })
            }
            Err(other) => return Err(other.into()),
        }
    }

    // Convexity screening on deterministic samples in a generous box.
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC057);
    for (index, cost) in costs.iter().enumerate() {
        for _ in 0..50 {
            let point: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let hess = cost.hessian(&point);
            let (eigs, _) = linalg::hermitian_eigen(&hess)?;
            if eigs[0] < -CONVEXITY_TOL {
                return Err(SystemsError::NonConvexCost {
                    index,
                    eigenvalue: eigs[0],
                    point,
                });
            }
        }
    }

    let l_rows = real_matrix(&l);
    let costs = Arc::new(costs);
    let dim = 2 * n * k;
    let field = {
        let costs = Arc::clone(&costs);
        let l_rows = l_rows.clone();
        move |_t: f64, state: &[f64]| {
            let (x, nu) = state.split_at(n * k);
            let l_nu = kron_apply(&l_rows, k, nu);
            let l_x = kron_apply(&l_rows, k, x);
            let mut out = vec![0.0; 2 * n * k];
            for i in 0..n {
                let grad = costs[i].gradient(&x[i * k..(i + 1) * k]);
                for c in 0..k {
                    out[i * k + c] = -grad[c] - l_nu[i * k + c];
                }
            }
            out[n * k..].copy_from_slice(&l_x);
            out
        }
    };
    let jac = {
        let costs = Arc::clone(&costs);
        let l_rows = l_rows.clone();
        move |_t: f64, state: &[f64]| {
            let (x, _) = state.split_at(n * k);
            let mut jac = DenseMatrix::zeros(2 * n * k, 2 * n * k);
            for i in 0..n {
                let hess = costs[i].hessian(&x[i * k..(i + 1) * k]);
                for r in 0..k {
                    for c in 0..k {
                        jac[(i * k + r, i * k + c)] = -hess[(r, c)];
                    }
                }
            }
            for i in 0..n {
                for (j, &lij) in l_rows[i].iter().enumerate() {
                    for c in 0..k {
                        // ẋ block: −(L⊗I)ν; ν̇ block: (L⊗I)x.
                        jac[(i * k + c, n * k + j * k + c)] = Complex64::new(-lij, 0.0);
                        jac[(n * k + i * k + c, j * k + c)] = Complex64::new(lij, 0.0);
                    }
                }
            }
            jac
        }
    };

    let mut sys = DynSystem::new(dim, "primal_dual", field, jac);
    for c in 0..k {
        let mut w = vec![0.0; dim];
        for i in 0..n {
            w[n * k + i * k + c] = 1.0;
        }
        sys = sys.with_conserved(ConservedQuantity::linear(format!("Σᵢ ν_i[{c}]"), w));
    }

    if let Some(x_star) = minimize_cost_sum(&costs, k) {
        // Saddle matrix at the optimizer: [[−∇²h, −L⊗I], [L⊗I, 0]].
        let state_at_star: Vec<f64> = x_star
            .iter()
            .cycle()
            .take(n * k)
            .copied()
            .chain(std::iter::repeat_n(0.0, n * k))
            .collect();
        let saddle = sys.jacobian(0.0, &state_at_star);
        let alpha = measures::alpha_ess(&saddle)?;

        // Equilibrium duals solve (L⊗I)ν = −stack(∇fᵢ(x*)). Only the sum
        // of the gradients vanishes at the optimizer, so the dual limit is
        // generally not a consensus state: it is the zero-mean particular
        // solution ν_p shifted by the conserved dual mean.
        let grads: Vec<Vec<f64>> = costs.iter().map(|c| c.gradient(&x_star)).collect();
        let l_pinv = linalg::pinv(&l, None)?;
        let mut nu_p = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..n {
                let w = l_pinv[(i, j)].re;
                for c in 0..k {
                    nu_p[i * k + c] -= w * grads[j][c];
                }
            }
        }
        let mut base: Vec<f64> = Vec::with_capacity(dim);
        for _ in 0..n {
            base.extend_from_slice(&x_star);
        }
        base.extend_from_slice(&nu_p);
        let directions: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                let mut d = vec![0.0; dim];
                for i in 0..n {
                    d[n * k + i * k + c] = 1.0;
                }
                d
            })
            .collect();
        let x_star_limit = x_star.clone();
        sys = sys
            .with_equilibria(Equilibria::AffineSet { base, directions })
            .with_rate(
                -alpha,
                "minus the essential spectral abscissa of the saddle matrix at the optimizer",
            )
            .with_limit(move |state0| {
                let nu0 = &state0[n * k..];
                let mut nu_bar = vec![0.0; k];
                for i in 0..n {
                    for c in 0..k {
                        nu_bar[c] += nu0[i * k + c] / n as f64;
                    }
                }
                let mut limit = Vec::with_capacity(2 * n * k);
                for _ in 0..n {
                    limit.extend_from_slice(&x_star_limit);
                }
                for i in 0..n {
                    for c in 0..k {
                        limit.push(nu_p[i * k + c] + nu_bar[c]);
                    }
                }
                limit
            });
    }
    Ok(sys)
}

/// `n` copies of an internal system coupled diffusively over a connected
/// undirected graph: `ẋᵢ = f(t, xᵢ) − Σⱼ aᵢⱼ(xᵢ − xⱼ)`. The synchronization
/// subspace `{1ₙ ⊗ u}` is recorded as the known kernel.
pub fn diffusive_network(g: &WeightedDigraph, internal: DynSystem) -> Result<DynSystem> {
    let n = g.n();
    let k = internal.dim();
    let l = graph::laplacian(g);
    if n > 1 {
        if g.is_directed() {
            return Err(SystemsError::NotConnected { lambda2: f64::NAN });
        }
        match graph::disagreement_basis(&l) {
            Ok(_) => {}
            Err(GraphError::Disconnected { lambda2 }) => {
                return Err(SystemsError::NotConnected { lambda2 })
            }
            Err(other) => return Err(other.into()),
        }
    }
    let l_rows = real_matrix(&l);
    let internal = Arc::new(internal);
    let time_invariant = internal.is_time_invariant();

    let field = {
        let internal = Arc::clone(&internal);
        let l_rows = l_rows.clone();
        move |t: f64, x: &[f64]| {
            let mut out = kron_apply(&l_rows, k, x);
            for y in out.iter_mut() {
                *y = -*y;
            }
            for i in 0..n {
                let fi = internal.f(t, &x[i * k..(i + 1) * k]);
                for c in 0..k {
                    out[i * k + c] += fi[c];
                }
            }
            out
        }
    };
    let jac = {
        let internal = Arc::clone(&internal);
        let l_rows = l_rows.clone();
        move |t: f64, x: &[f64]| {
            let mut jac = DenseMatrix::zeros(n * k, n * k);
            for i in 0..n {
                let block = internal.jacobian(t, &x[i * k..(i + 1) * k]);
                for r in 0..k {
                    for c in 0..k {
                        jac[(i * k + r, i * k + c)] = block[(r, c)];
                    }
                }
            }
            for i in 0..n {
                for (j, &lij) in l_rows[i].iter().enumerate() {
                    if lij == 0.0 {
                        continue;
                    }
                    for c in 0..k {
                        jac[(i * k + c, j * k + c)] -= Complex64::new(lij, 0.0);
                    }
                }
            }
            jac
        }
    };

    let sync_basis: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut u = vec![0.0; n * k];
            for i in 0..n {
                u[i * k + c] = 1.0;
            }
            u
        })
        .collect();
    let mut sys = DynSystem::new(n * k, format!("diffusive({})", internal.name()), field, jac)
        .with_kernel(sync_basis);
    if !time_invariant {
        sys = sys.time_varying();
    }
    Ok(sys)
}

/// A Lotka–Volterra model `ẋ = diag(x)(Ax + r)` on the open positive
/// orthant, together with its log-coordinate companion `ẏ = A·eʸ + r`
/// (which any ℝⁿ integrator can run without risking the positivity
/// boundary).
#[derive(Debug)]
pub struct LotkaVolterra {
    pub system: DynSystem,
    pub log_system: DynSystem,
    a: DenseMatrix,
    r: Vec<f64>,
    equilibrium: Option<Vec<f64>>,
    weight: Option<Vec<f64>>,
    abscissa: f64,
}

impl LotkaVolterra {
    pub fn interaction_matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn growth_rates(&self) -> &[f64] {
        &self.r
    }

    /// The positive equilibrium `x* = −A⁻¹r`.
    ///
    /// # Errors
    /// [`SystemsError::NotHurwitz`] when `A` has spectral abscissa ≥ 0.
    pub fn equilibrium(&self) -> Result<&[f64]> {
        self.equilibrium
            .as_deref()
            .ok_or(SystemsError::NotHurwitz {
                abscissa: self.abscissa,
            })
    }

    /// The positive weight `v = −(Aᵀ)⁻¹1ₙ` with `vᵀA = −1ₙᵀ`.
    ///
    /// # Errors
    /// [`SystemsError::NotHurwitz`] as for [`Self::equilibrium`].
    pub fn weight(&self) -> Result<&[f64]> {
        self.weight.as_deref().ok_or(SystemsError::NotHurwitz {
            abscissa: self.abscissa,
        })
    }
}

/// Builds a Lotka–Volterra model from a Metzler interaction matrix and
/// positive intrinsic growth rates.
///
/// # Errors
/// [`SystemsError::NotMetzler`] when an off-diagonal entry is below
/// `−1e-12`; [`SystemsError::InvalidParams`] for non-positive `r`.
pub fn lotka_volterra(a: &DenseMatrix, r: &[f64]) -> Result<LotkaVolterra> {
    let n = a.rows();
    if !a.is_square() || !a.is_real() {
        return Err(SystemsError::InvalidParams(
            "interaction matrix must be real and square".into(),
        ));
    }
    if r.len() != n {
        return Err(SystemsError::InvalidParams(format!(
            "r has length {}, matrix is {n}×{n}",
            r.len()
        )));
    }
    if let Some(&bad) = r.iter().find(|&&x| !(x > 0.0)) {
        return Err(SystemsError::InvalidParams(format!(
            "growth rates must be positive, found {bad}"
        )));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)].re < -METZLER_TOL {
                return Err(SystemsError::NotMetzler {
                    i,
                    j,
                    value: a[(i, j)].re,
                });
            }
        }
    }

    let a_rows = real_matrix(a);
    let r_own = r.to_vec();

    let field = {
        let a_rows = a_rows.clone();
        let r = r_own.clone();
        move |_t: f64, x: &[f64]| {
            let ax = mat_vec(&a_rows, x);
            x.iter()
                .zip(ax.iter().zip(&r))
                .map(|(xi, (axi, ri))| xi * (axi + ri))
                .collect()
        }
    };
    let jac = {
        let a_rows = a_rows.clone();
        let r = r_own.clone();
        move |_t: f64, x: &[f64]| {
            let ax = mat_vec(&a_rows, x);
            DenseMatrix::from_real_fn(x.len(), x.len(), |i, j| {
                let mut v = x[i] * a_rows[i][j];
                if i == j {
                    v += ax[i] + r[i];
                }
                v
            })
        }
    };

    let log_field = {
        let a_rows = a_rows.clone();
        let r = r_own.clone();
        move |_t: f64, y: &[f64]| {
            let expy: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            let aey = mat_vec(&a_rows, &expy);
            aey.iter().zip(&r).map(|(s, ri)| s + ri).collect()
        }
    };
    let log_jac = {
        let a_rows = a_rows.clone();
        move |_t: f64, y: &[f64]| {
            DenseMatrix::from_real_fn(y.len(), y.len(), |i, j| a_rows[i][j] * y[j].exp())
        }
    };

    let abscissa = measures::spectral_abscissa(a)?;
    let (equilibrium, weight) = if abscissa < -measures::ZERO_EIGENVALUE_TOL {
        let a_inv = linalg::pinv(a, None)?;
        let rc: Vec<Complex64> = r.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let x_star: Vec<f64> = a_inv.mul_vec(&rc).iter().map(|z| -z.re).collect();
        let at_inv = linalg::pinv(&a.transpose(), None)?;
        let ones: Vec<Complex64> = vec![Complex64::ONE; n];
        let v: Vec<f64> = at_inv.mul_vec(&ones).iter().map(|z| -z.re).collect();
        assert!(
            x_star.iter().all(|&x| x > 0.0) && v.iter().all(|&x| x > 0.0),
            "Metzler Hurwitz structure guarantees positive equilibrium and weight"
        );
        (Some(x_star), Some(v))
    } else {
        (None, None)
    };

    let mut system = DynSystem::new(n, "lotka_volterra", field, jac);
    let mut log_system = DynSystem::new(n, "lotka_volterra_log", log_field, log_jac);
    if let Some(ref x_star) = equilibrium {
        system = system.with_equilibria(Equilibria::Point(x_star.clone()));
        let x_log: Vec<f64> = x_star.iter().map(|&x| x.ln()).collect();
        log_system = log_system.with_equilibria(Equilibria::Point(x_log));
        let target = x_star.clone();
        system = system.with_limit(move |_| target.clone());
    }
    Ok(LotkaVolterra {
        system,
        log_system,
        a: a.clone(),
        r: r.to_vec(),
        equilibrium,
        weight,
        abscissa,
    })
}

/// Planar oscillator `ẋ = ωJx + (β − ‖x‖²)x` with `J` the rotation
/// generator: the normal form of an Andronov–Hopf bifurcation. For `β > 0`
/// it has an attracting circular limit cycle of radius `√β`, and
/// `μ₂(Df(x)) ≤ β` everywhere.
pub fn andronov_hopf(omega: f64, beta: f64) -> DynSystem {
    let field = move |_t: f64, x: &[f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        vec![
            -omega * x[1] + (beta - r2) * x[0],
            omega * x[0] + (beta - r2) * x[1],
        ]
    };
    let jac = move |_t: f64, x: &[f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        DenseMatrix::from_real_rows(&[
            &[beta - r2 - 2.0 * x[0] * x[0], -omega - 2.0 * x[0] * x[1]],
            &[omega - 2.0 * x[0] * x[1], beta - r2 - 2.0 * x[1] * x[1]],
        ])
        .expect("static shape")
    };
    DynSystem::new(2, "andronov_hopf", field, jac).with_rate(
        beta,
        "supremum of the Euclidean logarithmic norm of the Jacobian",
    )
}

/// Hand-picked two-dimensional systems that separate the contraction
/// notions:
///
/// * `semi_only` — `(ẋ₁, ẋ₂) = (−x₁, x₁x₂²)`: contracts the `|x₁|`
///   semi-norm at rate 1 while `x₂` can blow up.
/// * `weak_only` — `(ẋ₁, ẋ₂) = (x₂, −x₁)`: a rotation; distances never
///   grow, never shrink.
/// * `linear_2x2` — `(ẋ₁, ẋ₂) = (−x₁, x₁ − 2x₂)`: `span(e₂)` is invariant
///   for the Jacobian, yet the Jacobian does not commute with the
///   orthogonal projection onto `span(e₁)`.
pub fn toy_example(name: &str) -> Result<DynSystem> {
    match name {
        "semi_only" => Ok(DynSystem::new(
            2,
            "toy_semi_only",
            |_t, x| vec![-x[0], x[0] * x[1] * x[1]],
            |_t, x| {
                DenseMatrix::from_real_rows(&[&[-1.0, 0.0], &[x[1] * x[1], 2.0 * x[0] * x[1]]])
                    .expect("static shape")
            },
        )
        .with_kernel(vec![vec![0.0, 1.0]])
        .with_rate(1.0, "decay rate of the first coordinate")),
        "weak_only" => Ok(DynSystem::new(
            2,
            "toy_weak_only",
            |_t, x| vec![x[1], -x[0]],
            |_t, _x| {
                DenseMatrix::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).expect("static shape")
            },
        )
        .with_equilibria(Equilibria::Point(vec![0.0, 0.0]))
        .with_conserved(ConservedQuantity::new("‖x‖₂²", |x| {
            x[0] * x[0] + x[1] * x[1]
        }))),
        "linear_2x2" => Ok(DynSystem::new(
            2,
            "toy_linear_2x2",
            |_t, x| vec![-x[0], x[0] - 2.0 * x[1]],
            |_t, _x| {
                DenseMatrix::from_real_rows(&[&[-1.0, 0.0], &[1.0, -2.0]]).expect("static shape")
            },
        )
        .with_kernel(vec![vec![0.0, 1.0]])
        .with_equilibria(Equilibria::Point(vec![0.0, 0.0]))),
        other => Err(SystemsError::UnknownName(other.to_string())),
    }
}

/// JSON system description: `{"model": ..., "graph": {...}, "params": {...}}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub model: String,
    #[serde(default)]
    pub graph: Option<WeightedDigraph>,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum CostConfig {
    Quadratic { target: Vec<f64> },
    Quartic { target: Vec<f64> },
    LogSumExp { rows: Vec<(Vec<f64>, f64)> },
}

impl CostConfig {
    fn build(&self) -> CostFunction {
        match self {
            CostConfig::Quadratic { target } => CostFunction::quadratic(target.clone()),
            CostConfig::Quartic { target } => CostFunction::quartic(target.clone()),
            CostConfig::LogSumExp { rows } => CostFunction::log_sum_exp(rows.clone()),
        }
    }
}

fn param<T: serde::de::DeserializeOwned>(
    params: &serde_json::Value,
    key: &str,
) -> Result<T> {
    let value = params
        .get(key)
        .ok_or_else(|| SystemsError::InvalidParams(format!("missing parameter {key:?}")))?;
    serde_json::from_value(value.clone())
        .map_err(|e| SystemsError::InvalidParams(format!("parameter {key:?}: {e}")))
}

fn require_graph(cfg: &SystemConfig) -> Result<&WeightedDigraph> {
    cfg.graph.as_ref().ok_or_else(|| {
        SystemsError::InvalidParams(format!("model {:?} needs a graph", cfg.model))
    })
}

/// Builds a system from a parsed [`SystemConfig`].
///
/// Models: `affine_averaging`, `affine_flow` (param `b`), `primal_dual`
/// (params `k`, `costs`), `diffusive_network` (param `internal`, a nested
/// config), `lotka_volterra` (params `a` as rows, `r`), `andronov_hopf`
/// (params `omega`, `beta`), and the toy names `semi_only`, `weak_only`,
/// `linear_2x2`.
pub fn from_config(cfg: &SystemConfig) -> Result<DynSystem> {
    match cfg.model.as_str() {
        "affine_averaging" => {
            let b: Vec<f64> = param(&cfg.params, "b")?;
            affine_averaging(require_graph(cfg)?, &b)
        }
        "affine_flow" => {
            let b: Vec<f64> = param(&cfg.params, "b")?;
            affine_flow(require_graph(cfg)?, &b)
        }
        "primal_dual" => {
            let k: usize = param(&cfg.params, "k")?;
            let costs: Vec<CostConfig> = param(&cfg.params, "costs")?;
            primal_dual(
                require_graph(cfg)?,
                costs.iter().map(CostConfig::build).collect(),
                k,
            )
        }
        "diffusive_network" => {
            let internal_cfg: SystemConfig = param(&cfg.params, "internal")?;
            let internal = from_config(&internal_cfg)?;
            diffusive_network(require_graph(cfg)?, internal)
        }
        "lotka_volterra" => {
            let rows: Vec<Vec<f64>> = param(&cfg.params, "a")?;
            let r: Vec<f64> = param(&cfg.params, "r")?;
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let a = DenseMatrix::from_real_rows(&refs)
                .map_err(|e| SystemsError::InvalidParams(e.to_string()))?;
            Ok(lotka_volterra(&a, &r)?.system)
        }
        "andronov_hopf" => {
            let omega: f64 = param(&cfg.params, "omega")?;
            let beta: f64 = param(&cfg.params, "beta")?;
            Ok(andronov_hopf(omega, beta))
        }
        name @ ("semi_only" | "weak_only" | "linear_2x2") => toy_example(name),
        other => Err(SystemsError::UnknownName(other.to_string())),
    }
}
