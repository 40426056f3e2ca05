//! Norms, semi-norms, matrix measures, and matrix semi-measures.
//!
//! A *semi-norm* here is always of the weighted form `|v| = ‖Rv‖_p` for a
//! full-row-rank weight `R ∈ ℂ^{k×n}` and `p ∈ {1, 2, ∞}` or a generic
//! `p ∈ (1, ∞)`; with `R` absent (or square invertible) it is a norm. The
//! *matrix semi-measure* is the one-sided derivative
//! `μ(A) = lim_{h→0⁺} (|I + hA| − 1)/h` of the induced semi-norm at the
//! identity; negative values certify contraction of flows.
//!
//! | Operation | Route |
//! |-----------|-------|
//! | [`matrix_measure`] | closed forms: column rule (p=1), row rule (p=∞), `½λ_max(A+A^H)` (p=2) |
//! | [`semi_measure`] | reduction `μ_R(A) = μ(R A R†)` on the k×k reduced matrix |
//! | [`measure_limit_oracle`] | difference quotients of the defining limit + Richardson extrapolation |
//! | [`weighted_diag_measure`] | diagonal-weight closed forms, zero weights masking rows/columns |
//! | [`lmi_semi_measure_check`] | `PA + A^H P ⪯ 2cP` feasibility with `P = R^H R` |
//! | [`two_norm_semi_measure_via_abscissa`] | `½·max Re spec` of the compressed `A + P†A^H P` |
//! | [`optimal_reduction_matrix`] | eigenvector-row construction meeting the abscissa bound within ε |
//!
//! The reduction route assumes `Ker R` is invariant under `A` (otherwise the
//! induced semi-norm of `I + hA` is infinite); [`semi_measure`] reports the
//! invariance residual so callers can reject meaningless values.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{
    self, eigen, eigenvalues, hermitian_eigen, null_space, pinv, svd, DenseMatrix, LinalgError,
};

/// Absolute tolerance below which an eigenvalue counts as zero when computing
/// the essential spectral abscissa or checking simple-zero conditions.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

/// Relative slack for linear-matrix-inequality feasibility:
/// `λ_max(PA + A^H P − 2cP) ≤ LMI_SLACK_REL·‖P‖₂` counts as feasible.
pub const LMI_SLACK_REL: f64 = 1e-9;

/// Relative residual bound for subspace-invariance checks:
/// `‖(I − P_S) A u‖₂ ≤ INVARIANCE_TOL·(1 + ‖A‖_F)` per unit basis vector.
pub const INVARIANCE_TOL: f64 = 1e-8;

/// Accuracy target of the power-method estimate used for induced norms with
/// generic `p`; documented, not guaranteed (the estimate is a lower bound).
pub const GENERIC_P_ACCURACY: f64 = 1e-4;

/// Errors from measure computations.
#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("no closed form for p = {0}; use the limit oracle")]
    UnsupportedP(f64),

    #[error("p must be 1, 2, ∞, or a finite value in (1, ∞); got {0}")]
    InvalidP(f64),

    #[error("diagonal weight vector has no positive entry")]
    AllZeroWeights,

    #[error("weight matrix is not full row rank (σ_min/σ_max = {ratio:.3e})")]
    WeightRankDeficient { ratio: f64 },

    #[error("kernel of the weight is not invariant under A (residual {residual:.3e})")]
    KernelNotInvariant { residual: f64 },

    #[error("subspace is not invariant under A (residual {residual:.3e})")]
    SubspaceNotInvariant { residual: f64 },

    #[error("spectral abscissa {abscissa:.3e} is positive beyond tolerance")]
    PositiveSpectrum { abscissa: f64 },

    #[error(
        "could not meet the abscissa bound within ε = {epsilon:.3e} \
         (best slack {best_slack:.3e} after {attempts} attempts)"
    )]
    EpsilonTooSmall {
        epsilon: f64,
        best_slack: f64,
        attempts: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

// ---------------------------------------------------------------------------
// Norm exponent
// ---------------------------------------------------------------------------

/// Exponent of an ℓp (semi-)norm. Closed-form matrix measures exist for
/// `One`, `Two`, and `Inf`; `Generic` values are served by vector norms and
/// the limit oracle only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    One,
    Two,
    Inf,
    /// Finite exponent strictly between 1 and ∞ (other than the named ones).
    Generic(f64),
}

impl PNorm {
    /// Classifies a numeric exponent. `f64::INFINITY` maps to `Inf`.
    pub fn from_f64(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(PNorm::One)
        } else if p == 2.0 {
            Ok(PNorm::Two)
        } else if p == f64::INFINITY {
            Ok(PNorm::Inf)
        } else if p.is_finite() && p > 1.0 {
            Ok(PNorm::Generic(p))
        } else {
            Err(MeasureError::InvalidP(p))
        }
    }

    /// Parses `"1"`, `"2"`, `"inf"` (or `"∞"`), or a float literal.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "INF" | "∞" => Ok(PNorm::Inf),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| MeasureError::InvalidP(f64::NAN))?;
                Self::from_f64(p)
            }
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            PNorm::One => 1.0,
            PNorm::Two => 2.0,
            PNorm::Inf => f64::INFINITY,
            PNorm::Generic(p) => p,
        }
    }

    /// True when closed-form operator norms and measures exist.
    pub fn has_closed_form(self) -> bool {
        !matches!(self, PNorm::Generic(_))
    }
}

impl std::fmt::Display for PNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PNorm::One => write!(f, "1"),
            PNorm::Two => write!(f, "2"),
            PNorm::Inf => write!(f, "inf"),
            PNorm::Generic(p) => write!(f, "{p}"),
        }
    }
}

/// ℓp norm of a complex vector; supports any `p ≥ 1` including generic.
pub fn vector_norm(v: &[Complex64], p: PNorm) -> f64 {
    match p {
        PNorm::One => v.iter().map(|z| z.norm()).sum(),
        PNorm::Two => v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        PNorm::Inf => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
        PNorm::Generic(p) => {
            // Scale by the max modulus to avoid overflow for large p.
            let m = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if m == 0.0 {
                return 0.0;
            }
            m * v
                .iter()
                .map(|z| (z.norm() / m).powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
        }
    }
}

// ---------------------------------------------------------------------------
// Semi-norm specification
// ---------------------------------------------------------------------------

/// A (semi-)norm `|v| = ‖Rv‖_p`, with `R` optional (plain ℓp norm).
///
/// Construction validates that `R` has full row rank and caches its
/// pseudoinverse together with an orthonormal basis of `Ker R`, so values are
/// immutable and cheap to share afterwards.
#[derive(Debug, Clone)]
pub struct SemiNormSpec {
    p: PNorm,
    weight: Option<WeightCache>,
}

#[derive(Debug, Clone)]
struct WeightCache {
    r: DenseMatrix,
    r_pinv: DenseMatrix,
    kernel: Vec<Vec<Complex64>>,
}

impl SemiNormSpec {
    /// Plain ℓp norm on the ambient space (no weight).
    pub fn plain(p: PNorm) -> Self {
        SemiNormSpec { p, weight: None }
    }

    /// Weighted (semi-)norm `‖Rv‖_p`.
    ///
    /// # Errors
    /// [`MeasureError::WeightRankDeficient`] unless `R` has full row rank
    /// (σ_min > 1e-12·σ_max), which also enforces k ≤ n.
    pub fn weighted(p: PNorm, r: DenseMatrix) -> Result<Self> {
        let dec = svd(&r)?;
        let smax = dec.sigma.first().copied().unwrap_or(0.0);
        let smin = dec.sigma.last().copied().unwrap_or(0.0);
        if r.rows() > r.cols() || smax == 0.0 || smin <= linalg::RANK_TOL_REL * smax {
            return Err(MeasureError::WeightRankDeficient {
                ratio: if smax == 0.0 { 0.0 } else { smin / smax },
            });
        }
        let r_pinv = pinv(&r, None)?;
        let kernel = null_space(&r, None)?;
        Ok(SemiNormSpec {
            p,
            weight: Some(WeightCache { r, r_pinv, kernel }),
        })
    }

    pub fn p(&self) -> PNorm {
        self.p
    }

    /// The weight matrix `R`, if any.
    pub fn weight(&self) -> Option<&DenseMatrix> {
        self.weight.as_ref().map(|w| &w.r)
    }

    /// Cached pseudoinverse `R†`.
    pub fn weight_pinv(&self) -> Option<&DenseMatrix> {
        self.weight.as_ref().map(|w| &w.r_pinv)
    }

    /// Orthonormal basis of `Ker R` (empty for a genuine norm).
    pub fn kernel_basis(&self) -> &[Vec<Complex64>] {
        self.weight.as_ref().map_or(&[], |w| w.kernel.as_slice())
    }

    /// True when the kernel is nontrivial, i.e. this is a proper semi-norm.
    pub fn is_seminorm(&self) -> bool {
        !self.kernel_basis().is_empty()
    }

    /// Ambient dimension `n` when a weight pins it down.
    pub fn ambient_dim(&self) -> Option<usize> {
        self.weight.as_ref().map(|w| w.r.cols())
    }

    /// Evaluates the (semi-)norm of `v`.
    pub fn apply(&self, v: &[Complex64]) -> Result<f64> {
        seminorm(v, self)
    }

    /// Evaluates the (semi-)norm of a real vector.
    pub fn apply_real(&self, v: &[f64]) -> Result<f64> {
        let vc: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        seminorm(&vc, self)
    }
}

/// `‖Rv‖_p` (or `‖v‖_p` without a weight).
///
/// # Errors
/// [`MeasureError::DimensionMismatch`] if `v` has the wrong length.
pub fn seminorm(v: &[Complex64], s: &SemiNormSpec) -> Result<f64> {
    match &s.weight {
        None => Ok(vector_norm(v, s.p)),
        Some(w) => {
            if v.len() != w.r.cols() {
                return Err(MeasureError::DimensionMismatch(format!(
                    "vector length {} but weight has {} columns",
                    v.len(),
                    w.r.cols()
                )));
            }
            Ok(vector_norm(&w.r.mul_vec(v), s.p))
        }
    }
}

// ---------------------------------------------------------------------------
// Operator norms
// ---------------------------------------------------------------------------

/// Induced matrix p-norm for `p ∈ {1, 2, ∞}`.
///
/// # Errors
/// [`MeasureError::UnsupportedP`] for generic exponents — no closed form
/// exists; measures for generic p go through [`measure_limit_oracle`].
pub fn operator_norm(a: &DenseMatrix, p: PNorm) -> Result<f64> {
    match p {
        PNorm::One => Ok(a.norm_one()),
        PNorm::Inf => Ok(a.norm_inf()),
        PNorm::Two => Ok(a.norm_two()?),
        PNorm::Generic(p) => Err(MeasureError::UnsupportedP(p)),
    }
}

fn complex_phase(z: Complex64) -> Complex64 {
    let m = z.norm();
    if m == 0.0 {
        Complex64::ZERO
    } else {
        z / m
    }
}

/// Hölder-dual vector of `y` for exponent `p`: `‖dual‖_q = 1` and
/// `dual^H y = ‖y‖_p` (q the conjugate exponent). Returns `None` for `y = 0`.
fn holder_dual(y: &[Complex64], p: f64) -> Option<Vec<Complex64>> {
    let ny = vector_norm(y, PNorm::Generic(p));
    if ny == 0.0 {
        return None;
    }
    Some(
        y.iter()
            .map(|&yi| complex_phase(yi) * (yi.norm() / ny).powf(p - 1.0))
            .collect(),
    )
}

/// Lower-bound estimate of the induced p-norm for generic `p ∈ (1, ∞)` via
/// the alternating power method, deterministically multi-started from every
/// standard basis vector, the ones vector, and eight seeded random vectors.
/// Accuracy target [`GENERIC_P_ACCURACY`] at desk scale.
pub(crate) fn induced_pnorm_estimate(a: &DenseMatrix, p: f64) -> f64 {
    assert!(p.is_finite() && p > 1.0, "generic p must lie in (1, ∞)");
    let n = a.cols();
    let q = p / (p - 1.0);
    let ah = a.conj_transpose();

    let mut starts: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex64::ZERO; n];
            e[j] = Complex64::ONE;
            e
        })
        .collect();
    starts.push(vec![Complex64::ONE; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9E37_79B9);
    for _ in 0..8 {
        starts.push(
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        );
    }

    let mut best: f64 = 0.0;
    for x0 in starts {
        let Some(mut x) = holder_dual(&x0, q).map(|_| {
            let nx = vector_norm(&x0, PNorm::Generic(p));
            x0.iter().map(|&z| z / nx).collect::<Vec<_>>()
        }) else {
            continue;
        };
        let mut prev = -1.0_f64;
        for _ in 0..80 {
            let y = a.mul_vec(&x);
            let est = vector_norm(&y, PNorm::Generic(p));
            best = best.max(est);
            let Some(dual_y) = holder_dual(&y, p) else {
                break;
            };
            let z = ah.mul_vec(&dual_y);
            let nz = vector_norm(&z, PNorm::Generic(q));
            let zx: Complex64 = z.iter().zip(&x).map(|(zi, xi)| zi.conj() * xi).sum();
            // Stationarity: subgradient condition ‖z‖_q ≤ Re⟨z, x⟩.
            if nz <= zx.re * (1.0 + 1e-12) + 1e-15 {
                break;
            }
            match holder_dual(&z, q) {
                Some(next) => x = next,
                None => break,
            }
            if (est - prev).abs() <= 1e-13 * est.max(1.0) {
                break;
            }
            prev = est;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Matrix measures
// ---------------------------------------------------------------------------

/// Closed-form matrix measure μ_p(A) for `p ∈ {1, 2, ∞}`.
///
/// - `μ₁(A) = max_j ( Re a_jj + Σ_{i≠j} |a_ij| )` (column rule)
/// - `μ_∞(A) = max_i ( Re a_ii + Σ_{j≠i} |a_ij| )` (row rule)
/// - `μ₂(A) = ½ λ_max(A + A^H)`
///
/// # Errors
/// [`MeasureError::UnsupportedP`] for generic p; [`LinalgError::NotSquare`]
/// via conversion for non-square input.
pub fn matrix_measure(a: &DenseMatrix, p: PNorm) -> Result<f64> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        }
        .into());
    }
    let n = a.rows();
    match p {
        PNorm::One => Ok((0..n)
            .map(|j| {
                a[(j, j)].re
                    + (0..n)
                        .filter(|&i| i != j)
                        .map(|i| a[(i, j)].norm())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)),
        PNorm::Inf => Ok((0..n)
            .map(|i| {
                a[(i, i)].re
                    + (0..n)
                        .filter(|&j| j != i)
                        .map(|j| a[(i, j)].norm())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)),
        PNorm::Two => {
            let (w, _) = hermitian_eigen(a)?;
            Ok(w.last().copied().unwrap_or(0.0))
        }
        PNorm::Generic(p) => Err(MeasureError::UnsupportedP(p)),
    }
}

/// How a measure value was obtained, recorded in [`MeasureResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMethod {
    ClosedForm,
    Reduced,
    LmiBisection,
    RestrictedAbscissa,
    LimitOracle,
}

/// A measure value with its computation route and a residual quantifying how
/// trustworthy the route was (kernel-invariance defect for the reduction
/// route, bracket width for bisection, 0 for exact closed forms).
#[derive(Debug, Clone, Serialize)]
pub struct MeasureResult {
    pub value: f64,
    pub method: MeasureMethod,
    pub residual: f64,
}

/// Residual of `span(basis)`-invariance under `A`: the largest component of
/// `A·u` outside the span, relative to `1 + ‖A‖_F`, over unit basis vectors.
/// An empty basis is trivially invariant (residual 0).
pub fn invariance_residual(a: &DenseMatrix, basis: &[Vec<Complex64>]) -> Result<f64> {
    if basis.is_empty() {
        return Ok(0.0);
    }
    let n = a.rows();
    let p = linalg::orth_projection(n, basis)?;
    let scale = 1.0 + a.frobenius_norm();
    let mut worst: f64 = 0.0;
    for u in basis {
        let len = vector_norm(u, PNorm::Two);
        if len == 0.0 {
            continue;
        }
        let au = a.mul_vec(u);
        let pau = p.mul_vec(&au);
        let out: f64 = au
            .iter()
            .zip(&pau)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(out / (len * scale));
    }
    Ok(worst)
}

/// Matrix semi-measure via the reduction `μ_R(A) = μ_p(R A R†)`.
///
/// Without a weight this is [`matrix_measure`] with method `closed_form`.
/// With a weight, the value is the closed-form measure of the k×k reduced
/// matrix and `residual` reports the `Ker R` invariance defect — the
/// reduction is only meaningful when that residual is small.
///
/// # Errors
/// [`MeasureError::UnsupportedP`] for generic p (use the limit oracle);
/// [`MeasureError::DimensionMismatch`] when `A` and the weight disagree.
pub fn semi_measure(a: &DenseMatrix, s: &SemiNormSpec) -> Result<MeasureResult> {
    match &s.weight {
        None => Ok(MeasureResult {
            value: matrix_measure(a, s.p)?,
            method: MeasureMethod::ClosedForm,
            residual: 0.0,
        }),
        Some(w) => {
            if a.rows() != w.r.cols() || !a.is_square() {
                return Err(MeasureError::DimensionMismatch(format!(
                    "matrix is {}×{} but weight acts on ℂ^{}",
                    a.rows(),
                    a.cols(),
                    w.r.cols()
                )));
            }
            let reduced = w.r.matmul(a).matmul(&w.r_pinv);
            Ok(MeasureResult {
                value: matrix_measure(&reduced, s.p)?,
                method: MeasureMethod::Reduced,
                residual: invariance_residual(a, &w.kernel)?,
            })
        }
    }
}

/// Default step sizes for the defining-limit oracle.
pub const DEFAULT_ORACLE_STEPS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Evaluates the defining limit `μ = lim_{h→0⁺} (‖I + h·RAR†‖_p − 1)/h`
/// on a decreasing grid of steps and returns the Richardson-extrapolated
/// estimate from the two smallest steps.
///
/// The difference quotient is nondecreasing in `h`, so the sampled sequence
/// must be nonincreasing as `h` shrinks; this is asserted (with slack for the
/// power-method estimates used at generic p). Supports every `p`, including
/// generic exponents — this is the only measure route for those.
pub fn measure_limit_oracle(
    a: &DenseMatrix,
    s: &SemiNormSpec,
    h_list: Option<&[f64]>,
) -> Result<f64> {
    let default = DEFAULT_ORACLE_STEPS;
    let hs = h_list.unwrap_or(&default);
    assert!(
        !hs.is_empty() && hs.windows(2).all(|w| w[0] > w[1]) && *hs.last().unwrap() > 0.0,
        "step list must be positive and strictly decreasing"
    );

    // Form the reduced matrix once; I + h·M equals R(I + hA)R† up to the
    // round-off in R R† = I, and avoids amplifying that round-off by 1/h.
    let m = match &s.weight {
        None => a.clone(),
        Some(w) => {
            if a.rows() != w.r.cols() || !a.is_square() {
                return Err(MeasureError::DimensionMismatch(format!(
                    "matrix is {}×{} but weight acts on ℂ^{}",
                    a.rows(),
                    a.cols(),
                    w.r.cols()
                )));
            }
            w.r.matmul(a).matmul(&w.r_pinv)
        }
    };
    let k = m.rows();
    let eye = DenseMatrix::identity(k);

    let norm_of = |b: &DenseMatrix| -> Result<f64> {
        match s.p {
            PNorm::One => Ok(b.norm_one()),
            PNorm::Inf => Ok(b.norm_inf()),
            PNorm::Two => Ok(b.norm_two()?),
            PNorm::Generic(p) => Ok(induced_pnorm_estimate(b, p)),
        }
    };

    let slack = if s.p.has_closed_form() { 1e-9 } else { 1e-6 };
    let mut quotients: Vec<f64> = Vec::with_capacity(hs.len());
    for &h in hs {
        let b = &eye + &m.scale(Complex64::new(h, 0.0));
        let q = (norm_of(&b)? - 1.0) / h;
        if let Some(&prev) = quotients.last() {
            let scale: f64 = 1.0 + f64::max(q.abs(), prev.abs());
            assert!(
                q <= prev + slack * scale,
                "difference quotient increased as h decreased: {prev} -> {q}"
            );
        }
        quotients.push(q);
    }

    if quotients.len() == 1 {
        return Ok(quotients[0]);
    }
    // One step of Richardson extrapolation on q(h) = μ + C·h + O(h²).
    let h1 = hs[hs.len() - 2];
    let h0 = hs[hs.len() - 1];
    let q1 = quotients[quotients.len() - 2];
    let q0 = quotients[quotients.len() - 1];
    let rho = h1 / h0;
    Ok((rho * q0 - q1) / (rho - 1.0))
}

/// Measure with a nonnegative diagonal weight `ξ`: the semi-norm is
/// `‖diag(ξ) v‖_p` with zero entries of `ξ` masking their coordinates.
///
/// Closed forms (p = 1 shown; p = ∞ mirrors with rows):
/// `max over j with ξ_j > 0 of ( Re a_jj + (1/ξ_j) Σ_{i≠j, ξ_i>0} ξ_i |a_ij| )`.
/// With `ξ = 1ₙ` this reduces to [`matrix_measure`].
///
/// # Errors
/// [`MeasureError::AllZeroWeights`]; [`MeasureError::UnsupportedP`] unless
/// `p ∈ {1, ∞}`. Negative weights are a precondition violation (panics).
pub fn weighted_diag_measure(a: &DenseMatrix, xi: &[f64], p: PNorm) -> Result<f64> {
    assert!(a.is_square() && a.rows() == xi.len(), "shape mismatch");
    assert!(xi.iter().all(|&w| w >= 0.0), "weights must be nonnegative");
    let support: Vec<usize> = (0..xi.len()).filter(|&i| xi[i] > 0.0).collect();
    if support.is_empty() {
        return Err(MeasureError::AllZeroWeights);
    }
    match p {
        PNorm::One => Ok(support
            .iter()
            .map(|&j| {
                a[(j, j)].re
                    + support
                        .iter()
                        .filter(|&&i| i != j)
                        .map(|&i| xi[i] * a[(i, j)].norm())
                        .sum::<f64>()
                        / xi[j]
            })
            .fold(f64::NEG_INFINITY, f64::max)),
        PNorm::Inf => Ok(support
            .iter()
            .map(|&i| {
                a[(i, i)].re
                    + xi[i]
                        * support
                            .iter()
                            .filter(|&&j| j != i)
                            .map(|&j| a[(i, j)].norm() / xi[j])
                            .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)),
        other => Err(MeasureError::UnsupportedP(other.as_f64())),
    }
}

// ---------------------------------------------------------------------------
// LMI characterization of the 2-norm semi-measure
// ---------------------------------------------------------------------------

/// Which form of the quadratic inequality `PA + A^H P ⪯ 2cP` to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiForm {
    /// Test on the whole space; requires `Ker R` invariant under `A`.
    Unrestricted,
    /// Test the quadratic form only on `Ker(P)⊥ = Img(R^H)`.
    RestrictedToRange,
}

/// Feasibility of `μ_{2,R}(A) ≤ c` via `P A + A^H P ⪯ 2cP` with `P = R^H R`.
///
/// Feasible means `λ_max ≤ `[`LMI_SLACK_REL`]`·‖P‖₂` of the slack matrix
/// (compressed onto `Img(R^H)` for the restricted form).
///
/// # Errors
/// [`MeasureError::KernelNotInvariant`] when the unrestricted form is
/// requested but `A` does not leave `Ker R` invariant.
pub fn lmi_semi_measure_check(
    a: &DenseMatrix,
    r: &DenseMatrix,
    c: f64,
    form: LmiForm,
) -> Result<bool> {
    if a.rows() != r.cols() || !a.is_square() {
        return Err(MeasureError::DimensionMismatch(format!(
            "matrix is {}×{} but weight acts on ℂ^{}",
            a.rows(),
            a.cols(),
            r.cols()
        )));
    }
    let p = r.conj_transpose().matmul(r);
    let pa = p.matmul(a);
    let slack_matrix = &(&pa + &pa.conj_transpose()) - &p.scale(Complex64::new(2.0 * c, 0.0));
    let (pw, _) = hermitian_eigen(&p)?;
    let p_norm = pw.last().copied().unwrap_or(0.0).abs();
    let tol = LMI_SLACK_REL * p_norm.max(1e-300);

    let lambda_max = match form {
        LmiForm::Unrestricted => {
            let kernel = null_space(r, None)?;
            let residual = invariance_residual(a, &kernel)?;
            if residual > INVARIANCE_TOL {
                return Err(MeasureError::KernelNotInvariant { residual });
            }
            let (w, _) = hermitian_eigen(&slack_matrix)?;
            w.last().copied().unwrap_or(0.0)
        }
        LmiForm::RestrictedToRange => {
            let range = linalg::range_space(&r.conj_transpose(), None)?;
            let q = DenseMatrix::from_columns(&range)?;
            let compressed = q.conj_transpose().matmul(&slack_matrix).matmul(&q);
            let (w, _) = hermitian_eigen(&compressed)?;
            w.last().copied().unwrap_or(0.0)
        }
    };
    Ok(lambda_max <= tol)
}

/// `μ_{2,R}(A)` located by bisecting `c` in [`lmi_semi_measure_check`].
/// The residual reports the final bracket width.
pub fn lmi_bisect_semi_measure(
    a: &DenseMatrix,
    r: &DenseMatrix,
    form: LmiForm,
) -> Result<MeasureResult> {
    // Any induced measure satisfies |μ| ≤ ‖RAR†‖; pad the bracket a little.
    let reduced = r.matmul(a).matmul(&pinv(r, None)?);
    let bound = reduced.norm_two()? + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    if !lmi_semi_measure_check(a, r, hi, form)? {
        return Err(MeasureError::DimensionMismatch(
            "bisection bracket failed to contain the measure".into(),
        ));
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * bound.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if lmi_semi_measure_check(a, r, mid, form)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(MeasureResult {
        value: hi,
        method: MeasureMethod::LmiBisection,
        residual: hi - lo,
    })
}

/// `μ_{2,R}(A)` via the eigenvalue route: `½·max Re spec` of the compression
/// of `B = A + P† A^H P` onto `Img(R^H)`, with `P = R^H R`.
///
/// The compression spectrum equals the spectrum of `R B R†` for any
/// full-row-rank `R` (write `R = (RQ)Q^H` with `Q` an orthonormal basis of
/// `Img(R^H)` and `RQ` invertible), so no invariance hypothesis is needed
/// for the computation itself.
pub fn two_norm_semi_measure_via_abscissa(
    a: &DenseMatrix,
    r: &DenseMatrix,
) -> Result<MeasureResult> {
    if a.rows() != r.cols() || !a.is_square() {
        return Err(MeasureError::DimensionMismatch(format!(
            "matrix is {}×{} but weight acts on ℂ^{}",
            a.rows(),
            a.cols(),
            r.cols()
        )));
    }
    let p = r.conj_transpose().matmul(r);
    let p_pinv = pinv(&p, None)?;
    let b = &a.clone() + &p_pinv.matmul(&a.conj_transpose()).matmul(&p);
    let range = linalg::range_space(&r.conj_transpose(), None)?;
    let q = DenseMatrix::from_columns(&range)?;
    let compressed = q.conj_transpose().matmul(&b).matmul(&q);
    let ev = eigenvalues(&compressed)?;
    let alpha = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    // Residual: how far the compression is from Hermitian — the spectrum is
    // real in exact arithmetic because Q^H B Q is similar to a Hermitian
    // congruence of A + its adjoint.
    let max_im = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(MeasureResult {
        value: 0.5 * alpha,
        method: MeasureMethod::RestrictedAbscissa,
        residual: max_im,
    })
}

// ---------------------------------------------------------------------------
// Spectral abscissas
// ---------------------------------------------------------------------------

/// Spectral abscissa `α(A)`: the largest real part over the spectrum.
pub fn spectral_abscissa(a: &DenseMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Spectral abscissa of `A` restricted to the invariant subspace
/// `S = span(s_basis)`: the largest real part of the spectrum of the
/// compression `Q^H A Q` with `Q` an orthonormal basis of `S`.
///
/// # Errors
/// [`MeasureError::SubspaceNotInvariant`] if the invariance residual exceeds
/// [`INVARIANCE_TOL`].
pub fn restricted_abscissa(a: &DenseMatrix, s_basis: &[Vec<Complex64>]) -> Result<f64> {
    assert!(!s_basis.is_empty(), "subspace basis must be nonempty");
    let residual = invariance_residual(a, s_basis)?;
    if residual > INVARIANCE_TOL {
        return Err(MeasureError::SubspaceNotInvariant { residual });
    }
    let b = DenseMatrix::from_columns(s_basis).map_err(MeasureError::Linalg)?;
    let range = linalg::range_space(&b, None)?;
    let q = DenseMatrix::from_columns(&range)?;
    let compressed = q.conj_transpose().matmul(a).matmul(&q);
    spectral_abscissa(&compressed)
}

/// Essential spectral abscissa: the largest real part over the nonzero
/// spectrum, where "zero" means `|λ| ≤ `[`ZERO_EIGENVALUE_TOL`]. Returns
/// `-∞` when the whole spectrum is zero.
///
/// # Errors
/// [`MeasureError::PositiveSpectrum`] if any real part exceeds the zero
/// tolerance — the quantity is meant for marginally stable matrices.
pub fn alpha_ess(a: &DenseMatrix) -> Result<f64> {
    let ev = eigenvalues(a)?;
    let alpha = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if alpha > ZERO_EIGENVALUE_TOL {
        return Err(MeasureError::PositiveSpectrum { abscissa: alpha });
    }
    Ok(ev
        .iter()
        .filter(|z| z.norm() > ZERO_EIGENVALUE_TOL)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

// ---------------------------------------------------------------------------
// Optimal reduction matrices
// ---------------------------------------------------------------------------

/// Builds `R` with `Ker R = span(s_basis)` whose semi-measure comes within
/// `epsilon` of the theoretical optimum `α_{S⊥}(A^H)`, for any absolute norm
/// `p ∈ {1, 2, ∞}`.
///
/// Rows of `R` are conjugated eigenvectors of `A^H` lying in `S⊥` (computed
/// through the compression of `A^H` onto `S⊥`), which makes `R A R†` exactly
/// diagonal in exact arithmetic, so its measure is the restricted abscissa
/// for every absolute norm. A defective compression is nudged by scaled
/// random perturbations (fixed seed) until diagonalizable and the bound is
/// re-verified; the perturbation budget failing yields `EpsilonTooSmall`.
///
/// # Errors
/// [`MeasureError::SubspaceNotInvariant`]; [`MeasureError::UnsupportedP`]
/// for generic p; [`MeasureError::EpsilonTooSmall`].
pub fn optimal_reduction_matrix(
    a: &DenseMatrix,
    s_basis: &[Vec<Complex64>],
    p: PNorm,
    epsilon: f64,
) -> Result<DenseMatrix> {
    if let PNorm::Generic(g) = p {
        return Err(MeasureError::UnsupportedP(g));
    }
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n = a.rows();
    assert!(a.is_square(), "matrix must be square");

    let residual = invariance_residual(a, s_basis)?;
    if residual > INVARIANCE_TOL {
        return Err(MeasureError::SubspaceNotInvariant { residual });
    }

    // Orthonormal basis U of S⊥ (the whole space when S = {0}).
    let u = if s_basis.is_empty() {
        DenseMatrix::identity(n)
    } else {
        let b = DenseMatrix::from_columns(s_basis).map_err(MeasureError::Linalg)?;
        let ker = null_space(&b.conj_transpose(), None)?;
        if ker.is_empty() {
            return Err(MeasureError::DimensionMismatch(
                "kernel subspace must be a proper subspace".into(),
            ));
        }
        DenseMatrix::from_columns(&ker).map_err(MeasureError::Linalg)?
    };

    // Compression of A^H onto S⊥; its spectrum is spec_{S⊥}(A^H).
    let b_red = u.conj_transpose().matmul(&a.conj_transpose()).matmul(&u);
    let target = spectral_abscissa(&b_red)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x0C0F_FEE5);
    let k = b_red.rows();
    let mut best_slack = f64::INFINITY;
    let mut delta = epsilon / 4.0;
    const ATTEMPTS: usize = 40;
    for attempt in 0..ATTEMPTS {
        let candidate = if attempt == 0 {
            b_red.clone()
        } else {
            let mut g = DenseMatrix::from_fn(k, k, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let scale = g.max_abs();
            g = g.scale(Complex64::new(delta / scale, 0.0));
            delta *= 0.5;
            &b_red + &g
        };
        let dec = eigen(&candidate)?;
        if dec.is_defective {
            continue;
        }
        let w = dec
            .right_eigenvectors
            .as_ref()
            .expect("eigen always returns vectors");
        // Rows v_i^H with v_i = U w_i: eigenvectors of A^H inside S⊥.
        let r = u.matmul(w).conj_transpose();
        let Ok(spec) = SemiNormSpec::weighted(p, r.clone()) else {
            continue;
        };
        let value = semi_measure(a, &spec)?.value;
        let slack = value - target;
        best_slack = best_slack.min(slack);
        if slack <= epsilon {
            // Track how well-conditioned the construction was, so callers of
            // the perturbation path know the achieved bound.
            return Ok(r);
        }
    }
    Err(MeasureError::EpsilonTooSmall {
        epsilon,
        best_slack,
        attempts: ATTEMPTS,
    })
}
