//! Sampled-domain contraction certificates and invariance checks: the
//! hypotheses of the convergence theory turned into machine-checkable
//! predicates over a box of states.
//!
//! | Operation | Question it answers |
//! |-----------|---------------------|
//! | [`certify_semi_contraction`] | is `μ(Df)` ≤ −c < 0 at every sample? |
//! | [`certify_weak_contraction`] | is `μ(Df)` ≤ 0 at every sample? |
//! | [`check_infinitesimal_invariance`] | does `Df` map the kernel into itself? |
//! | [`check_shifted_invariance`] | does `f` map a shifted kernel into the kernel? |
//! | [`sync_condition`] | does `μ_p(Q·Df·Q⁻¹) ≤ λ₂ − c` hold with `c > 0`? |
//! | [`analyze_doubly_contracting`] | weak + semi legs together, with a predicted rate |
//!
//! Every operation samples the Jacobian (or the field) on a deterministic
//! [`DomainSampler`] grid-plus-random point set and reduces with an
//! index-ordered maximum, so results do not depend on thread scheduling.
//! A sampled certificate is *not* a global proof and says so in its notes —
//! except when the Jacobian is constant and the dynamics time-invariant, in
//! which case a single evaluation decides the whole space and the
//! certificate sets `global = true`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::measures::{self, MeasureError, PNorm, SemiNormSpec};
use crate::systems::DynSystem;

/// Weak contraction accepts a sampled measure up to this slack above zero.
pub const WEAK_CONTRACTION_TOL: f64 = 1e-9;

/// Invariance residuals (relative to `1 + ‖Df‖_F`) at or below this pass.
pub const INVARIANCE_REL_TOL: f64 = 1e-8;

/// `‖f(z)‖ ≤ EQUILIBRIUM_REL_TOL·(1+‖z‖)` qualifies `z` as an equilibrium.
pub const EQUILIBRIUM_REL_TOL: f64 = 1e-8;

/// Default number of grid points per coordinate.
pub const DEFAULT_GRID_PER_DIM: usize = 5;

/// Grids are dropped above this dimension (growth is `grid^dim`).
pub const GRID_DIM_LIMIT: usize = 6;

/// Default number of uniform random samples added to the grid.
pub const DEFAULT_RANDOM_SAMPLES: usize = 200;

/// Default RNG seed recorded in every certificate.
pub const DEFAULT_SAMPLER_SEED: u64 = 0x5EED_CAFE;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("Q is numerically singular (condition number {condition:.3e})")]
    SingularQ { condition: f64 },
    #[error("invalid sampler: {0}")]
    InvalidSampler(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("weak contraction needs a genuine norm, got a semi-norm: {0}")]
    InvalidNorm(String),
    #[error(
        "the supplied subspace is not made of equilibria: \
         residual {residual:.3e} at {point:?}"
    )]
    NotEquilibriumSubspace { residual: f64, point: Vec<f64> },
    #[error("measure computation failed: {0}")]
    Measure(#[from] MeasureError),
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, CertifyError>;

// ---------------------------------------------------------------------------
// Domain sampling
// ---------------------------------------------------------------------------

/// A deterministic sample set over an axis-aligned box: a full grid of
/// `grid_per_dim` points per coordinate (skipped above [`GRID_DIM_LIMIT`]
/// dimensions), then `random_count` uniform draws from a seeded generator.
/// Every sample lies in the box; the same seed reproduces the same set.
#[derive(Debug, Clone, Serialize)]
pub struct DomainSampler {
    lo: Vec<f64>,
    hi: Vec<f64>,
    grid_per_dim: usize,
    random_count: usize,
    time_samples: Vec<f64>,
    seed: u64,
}

impl DomainSampler {
    /// Box `[lo_j, hi_j]` per coordinate with the default grid, random
    /// count, seed, and the single time sample `t = 0`.
    ///
    /// # Errors
    /// [`CertifyError::InvalidSampler`] for empty or mismatched bounds,
    /// non-finite entries, or `lo_j > hi_j`.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(CertifyError::InvalidSampler(format!(
                "bounds must be nonempty and of equal length, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(CertifyError::InvalidSampler(format!(
                    "every coordinate needs finite lo ≤ hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(DomainSampler {
            lo,
            hi,
            grid_per_dim: DEFAULT_GRID_PER_DIM,
            random_count: DEFAULT_RANDOM_SAMPLES,
            time_samples: vec![0.0],
            seed: DEFAULT_SAMPLER_SEED,
        })
    }

    /// The symmetric box `[−half_width, half_width]^dim`.
    ///
    /// # Errors
    /// As [`DomainSampler::new`].
    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        DomainSampler::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn with_grid_per_dim(mut self, count: usize) -> Self {
        self.grid_per_dim = count;
        self
    }

    pub fn with_random_count(mut self, count: usize) -> Self {
        self.random_count = count;
        self
    }

    /// Replaces the time samples (time-varying systems are checked at each).
    ///
    /// # Panics
    /// If `times` is empty or contains a non-finite value.
    pub fn with_time_samples(mut self, times: Vec<f64>) -> Self {
        assert!(
            !times.is_empty() && times.iter().all(|t| t.is_finite()),
            "time samples must be nonempty and finite"
        );
        self.time_samples = times;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time_samples(&self) -> &[f64] {
        &self.time_samples
    }

    /// All state samples: grid points (row-major over coordinates, inclusive
    /// of the box corners; a 1-point grid uses the midpoint) followed by the
    /// random draws. The order is part of the contract — certificates report
    /// the first worst sample in this order.
    pub fn state_samples(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let mut points = Vec::new();
        if self.grid_per_dim > 0 && dim <= GRID_DIM_LIMIT {
            let g = self.grid_per_dim;
            let total = g.pow(dim as u32);
            for idx in 0..total {
                let mut x = vec![0.0; dim];
                let mut rem = idx;
                for (j, xj) in x.iter_mut().enumerate() {
                    let i = rem % g;
                    rem /= g;
                    *xj = if g == 1 {
                        0.5 * (self.lo[j] + self.hi[j])
                    } else {
                        self.lo[j]
                            + (self.hi[j] - self.lo[j]) * i as f64 / (g - 1) as f64
                    };
                }
                points.push(x);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_count {
            points.push(
                (0..dim)
                    .map(|j| rng.random_range(self.lo[j]..=self.hi[j]))
                    .collect(),
            );
        }
        points
    }

    /// Coefficient draws for subspace sampling: the zero vector first, then
    /// `random_count` uniform draws from `[−s, s]^k` where `s` is half the
    /// widest box side (or 1 for a degenerate box). A separate seeded stream
    /// keeps these independent of [`DomainSampler::state_samples`].
    pub fn coefficient_samples(&self, k: usize) -> Vec<Vec<f64>> {
        let side = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (h - l))
            .fold(0.0f64, f64::max);
        let s = if side > 0.0 { side } else { 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7368_6674);
        let mut draws = vec![vec![0.0; k]];
        for _ in 0..self.random_count {
            draws.push((0..k).map(|_| rng.random_range(-s..=s)).collect());
        }
        draws
    }
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    SemiContracting,
    WeaklyContracting,
    DoublyContracting,
    SyncCondition,
}

/// One evaluated sample: the time, the state, and the quantity measured
/// there (a matrix measure for certificates, a residual for invariance
/// reports).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateStatus {
    /// Every sample satisfied the defining inequality.
    CertifiedOnSamples,
    /// At least one sample violated it; `witness` re-evaluates above the
    /// threshold when checked independently.
    Refuted { witness: SamplePoint },
}

/// Outcome of a sampled certification run.
///
/// `rate_c` is `−(max sampled μ)` for the contraction kinds,
/// `λ₂ − max sampled μ` for the synchronization condition, and the
/// predicted per-trajectory rate for a certified doubly-contracting system
/// (NaN when a leg was refuted). `worst_sample` always carries the largest
/// sampled value, whether or not it violates the threshold.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// Human-readable description of the (semi-)norm being certified.
    pub norm: String,
    /// Second norm for the doubly-contracting kind (the semi leg).
    pub second_norm: Option<String>,
    pub rate_c: f64,
    pub worst_sample: SamplePoint,
    pub sample_count: usize,
    #[serde(flatten)]
    pub status: CertificateStatus,
    /// True when one sample decides every state: constant Jacobian on a
    /// time-invariant system.
    pub global: bool,
    /// Condition number of the similarity weight, when one was supplied.
    pub condition_number: Option<f64>,
    /// Largest kernel-invariance residual seen by the semi-measure
    /// reduction, when a weighted norm was used.
    pub max_invariance_residual: Option<f64>,
    /// Hypotheses the downstream theory needs but this run did not check.
    pub assumed_hypotheses: Vec<String>,
    pub notes: Vec<String>,
    pub seed: u64,
    pub weak_leg: Option<Box<Certificate>>,
    pub semi_leg: Option<Box<Certificate>>,
}

impl Certificate {
    pub fn certified(&self) -> bool {
        matches!(self.status, CertificateStatus::CertifiedOnSamples)
    }

    /// Records an extra hypothesis the caller is assuming.
    #[must_use]
    pub fn with_assumed_hypothesis(mut self, hypothesis: impl Into<String>) -> Self {
        self.assumed_hypotheses.push(hypothesis.into());
        self
    }
}

/// Boolean verdict plus the worst residual for the invariance checks.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub passed: bool,
    pub max_residual: f64,
    /// Sample attaining `max_residual` (its `value` is that residual).
    pub worst: SamplePoint,
    pub sample_count: usize,
}

// ---------------------------------------------------------------------------
// Shared sweep machinery
// ---------------------------------------------------------------------------

fn to_complex_basis(basis: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
    basis
        .iter()
        .map(|u| u.iter().map(|&x| Complex64::new(x, 0.0)).collect())
        .collect()
}

fn matrices_identical(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    a.rows() == b.rows()
        && a.cols() == b.cols()
        && (0..a.rows()).all(|i| a.row(i) == b.row(i))
}

fn p_label(p: PNorm) -> String {
    match p {
        PNorm::One => "1".into(),
        PNorm::Two => "2".into(),
        PNorm::Inf => "∞".into(),
        PNorm::Generic(g) => format!("{g}"),
    }
}

fn describe_norm(s: &SemiNormSpec) -> String {
    match s.weight() {
        None => format!("ℓ{}", p_label(s.p())),
        Some(r) => format!(
            "‖R·‖_{} with R {}×{} (kernel dimension {})",
            p_label(s.p()),
            r.rows(),
            r.cols(),
            s.kernel_basis().len()
        ),
    }
}

/// Times at which Jacobians are sampled: a single representative for
/// time-invariant systems, every supplied time sample otherwise.
fn effective_times(sys: &DynSystem, d: &DomainSampler) -> Vec<f64> {
    if sys.is_time_invariant() {
        vec![d.time_samples()[0]]
    } else {
        d.time_samples().to_vec()
    }
}

struct Sweep {
    worst: SamplePoint,
    max_residual: f64,
    sample_count: usize,
    constant_jacobian: bool,
}

/// Evaluates `eval` on the Jacobian at every (time, state) sample in
/// parallel and reduces sequentially in sample order, so the reported worst
/// sample is the first maximizer regardless of scheduling. `eval` returns
/// (value, residual) pairs.
fn sweep_jacobian<F>(sys: &DynSystem, d: &DomainSampler, eval: F) -> Result<Sweep>
where
    F: Fn(&DenseMatrix) -> std::result::Result<(f64, f64), MeasureError> + Sync,
{
    if d.dim() != sys.dim() {
        return Err(CertifyError::InvalidSampler(format!(
            "sampler box has dimension {} but the system has dimension {}",
            d.dim(),
            sys.dim()
        )));
    }
    let times = effective_times(sys, d);
    let points = d.state_samples();
    if points.is_empty() {
        return Err(CertifyError::InvalidSampler(
            "the sampler produced no points (zero grid and zero random count)".into(),
        ));
    }
    let samples: Vec<(f64, &Vec<f64>)> = times
        .iter()
        .flat_map(|&t| points.iter().map(move |x| (t, x)))
        .collect();
    let df0 = sys.jacobian(samples[0].0, samples[0].1);

    let evals: std::result::Result<Vec<(f64, f64, bool)>, MeasureError> = samples
        .par_iter()
        .map(|(t, x)| {
            let df = sys.jacobian(*t, x);
            let (value, residual) = eval(&df)?;
            Ok((value, residual, matrices_identical(&df, &df0)))
        })
        .collect();
    let evals = evals?;

    let mut worst_idx = 0;
    let mut max_residual: f64 = 0.0;
    let mut constant = true;
    for (i, &(value, residual, same)) in evals.iter().enumerate() {
        if value > evals[worst_idx].0 {
            worst_idx = i;
        }
        max_residual = max_residual.max(residual);
        constant &= same;
    }
    Ok(Sweep {
        worst: SamplePoint {
            t: samples[worst_idx].0,
            x: samples[worst_idx].1.clone(),
            value: evals[worst_idx].0,
        },
        max_residual,
        sample_count: samples.len(),
        constant_jacobian: constant && sys.is_time_invariant(),
    })
}

fn scope_notes(global: bool) -> Vec<String> {
    if global {
        vec![
            "the Jacobian is constant and the dynamics time-invariant, so a single \
             sample decides every state: this verdict is global"
                .into(),
        ]
    } else {
        vec![
            "sampling is not a global proof: this verdict covers the sampled box only"
                .into(),
        ]
    }
}

// ---------------------------------------------------------------------------
// Contraction certificates
// ---------------------------------------------------------------------------

/// Certifies semi-contraction: `μ(Df(t,x)) ≤ −c` with `c > 0` at every
/// sample, where `μ` is the (semi-)measure induced by `s`. A plain norm is
/// accepted and then certifies strict contraction. The returned rate is
/// `c = −max μ`; a nonnegative maximum refutes with the witness sample.
///
/// # Errors
/// [`CertifyError::InvalidSampler`] on dimension mismatch or an empty
/// sample set; measure errors propagate.
pub fn certify_semi_contraction(
    sys: &DynSystem,
    s: &SemiNormSpec,
    d: &DomainSampler,
) -> Result<Certificate> {
    if let Some(n) = s.ambient_dim() {
        if n != sys.dim() {
            return Err(CertifyError::InvalidSampler(format!(
                "norm acts on ℝ^{n} but the system has dimension {}",
                sys.dim()
            )));
        }
    }
    let sweep = sweep_jacobian(sys, d, |df| {
        measures::semi_measure(df, s).map(|m| (m.value, m.residual))
    })?;

    let mut notes = scope_notes(sweep.constant_jacobian);
    if !s.is_seminorm() {
        notes.push(
            "the supplied norm has a trivial kernel: this certifies strict contraction"
                .into(),
        );
    }
    let max_invariance_residual = s.weight().map(|_| sweep.max_residual);
    if let Some(r) = max_invariance_residual {
        if r > measures::INVARIANCE_TOL {
            notes.push(format!(
                "kernel invariance residual {r:.3e} exceeds {:.0e}: the reduced \
                 measure may not bound the true semi-measure",
                measures::INVARIANCE_TOL
            ));
        }
    }
    let status = if sweep.worst.value < 0.0 {
        CertificateStatus::CertifiedOnSamples
    } else {
        CertificateStatus::Refuted {
            witness: sweep.worst.clone(),
        }
    };
    Ok(Certificate {
        kind: CertificateKind::SemiContracting,
        norm: describe_norm(s),
        second_norm: None,
        rate_c: -sweep.worst.value,
        worst_sample: sweep.worst,
        sample_count: sweep.sample_count,
        status,
        global: sweep.constant_jacobian,
        condition_number: None,
        max_invariance_residual,
        assumed_hypotheses: Vec::new(),
        notes,
        seed: d.seed(),
        weak_leg: None,
        semi_leg: None,
    })
}

/// Certifies weak contraction (nonexpansiveness): `μ(Df(t,x)) ≤ 0` at every
/// sample, with [`WEAK_CONTRACTION_TOL`] slack for rounding. The norm must
/// be genuine (trivial kernel); `rate_c = −max μ` may legitimately be 0.
///
/// Every weak certificate records the piecewise-real-analyticity hypothesis
/// the equilibrium-convergence corollary needs — model metadata this run
/// does not machine-check.
///
/// # Errors
/// [`CertifyError::InvalidNorm`] for a semi-norm; sampler and measure
/// errors as in [`certify_semi_contraction`].
pub fn certify_weak_contraction(
    sys: &DynSystem,
    norm: &SemiNormSpec,
    d: &DomainSampler,
) -> Result<Certificate> {
    if norm.is_seminorm() {
        return Err(CertifyError::InvalidNorm(describe_norm(norm)));
    }
    let mut cert = certify_semi_contraction(sys, norm, d)?;
    cert.kind = CertificateKind::WeaklyContracting;
    cert.status = if cert.worst_sample.value <= WEAK_CONTRACTION_TOL {
        CertificateStatus::CertifiedOnSamples
    } else {
        CertificateStatus::Refuted {
            witness: cert.worst_sample.clone(),
        }
    };
    // Drop the strict-contraction note: the threshold here is 0, not −c.
    cert.notes.retain(|n| !n.contains("strict contraction"));
    cert.assumed_hypotheses.push(
        "piecewise real-analytic vector field (needed by the ℓ1/ℓ∞ \
         equilibrium-convergence corollary; taken from model metadata, not checked)"
            .into(),
    );
    Ok(cert)
}

// ---------------------------------------------------------------------------
// Invariance checks
// ---------------------------------------------------------------------------

/// Checks infinitesimal invariance of `span(kernel_basis)` under the
/// Jacobian: at every sample, `‖(I − P)·Df(t,x)·u‖₂ ≤ 1e-8·(1+‖Df‖_F)` for
/// each unit basis vector `u`, with `P` the orthogonal projection onto the
/// span. An empty basis passes trivially.
///
/// # Errors
/// Sampler-shape errors; linear-algebra failures from the projection.
pub fn check_infinitesimal_invariance(
    sys: &DynSystem,
    kernel_basis: &[Vec<f64>],
    d: &DomainSampler,
) -> Result<InvarianceReport> {
    let basis = to_complex_basis(kernel_basis);
    let sweep = sweep_jacobian(sys, d, |df| {
        measures::invariance_residual(df, &basis).map(|r| (r, 0.0))
    })?;
    Ok(InvarianceReport {
        passed: sweep.worst.value <= INVARIANCE_REL_TOL,
        max_residual: sweep.worst.value,
        worst: sweep.worst,
        sample_count: sweep.sample_count,
    })
}

/// Checks shifted invariance: at points `z = x_star + Σ cᵢ uᵢ` (coefficient
/// draws from the sampler, zero included), the field stays in the kernel:
/// `‖(I − P) f(t,z)‖₂ ≤ 1e-8·(1+‖f(t,z)‖₂)`.
///
/// # Errors
/// [`CertifyError::InvalidSampler`] when `x_star` has the wrong length;
/// linear-algebra failures from the projection.
pub fn check_shifted_invariance(
    sys: &DynSystem,
    kernel_basis: &[Vec<f64>],
    x_star: &[f64],
    d: &DomainSampler,
) -> Result<InvarianceReport> {
    let n = sys.dim();
    if x_star.len() != n {
        return Err(CertifyError::InvalidSampler(format!(
            "x_star has length {} but the system has dimension {n}",
            x_star.len()
        )));
    }
    if kernel_basis.iter().any(|u| u.len() != n) {
        return Err(CertifyError::InvalidSampler(
            "kernel basis vectors must match the system dimension".into(),
        ));
    }
    let basis = to_complex_basis(kernel_basis);
    let p = linalg::orth_projection(n, &basis)?;
    let times = effective_times(sys, d);
    let k = kernel_basis.len();

    let mut samples: Vec<(f64, Vec<f64>)> = Vec::new();
    for &t in &times {
        for c in d.coefficient_samples(k) {
            let mut z = x_star.to_vec();
            for (ci, u) in c.iter().zip(kernel_basis) {
                for (zj, uj) in z.iter_mut().zip(u) {
                    *zj += ci * uj;
                }
            }
            samples.push((t, z));
        }
    }

    let residuals: Vec<f64> = samples
        .par_iter()
        .map(|(t, z)| {
            let fz = sys.f(*t, z);
            let fz_c: Vec<Complex64> =
                fz.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let proj = p.mul_vec(&fz_c);
            let out: f64 = fz_c
                .iter()
                .zip(&proj)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let scale = 1.0 + fz.iter().map(|v| v * v).sum::<f64>().sqrt();
            out / scale
        })
        .collect();

    let mut worst_idx = 0;
    for (i, r) in residuals.iter().enumerate() {
        if *r > residuals[worst_idx] {
            worst_idx = i;
        }
    }
    let worst = SamplePoint {
        t: samples[worst_idx].0,
        x: samples[worst_idx].1.clone(),
        value: residuals[worst_idx],
    };
    Ok(InvarianceReport {
        passed: worst.value <= INVARIANCE_REL_TOL,
        max_residual: worst.value,
        worst,
        sample_count: samples.len(),
    })
}

// ---------------------------------------------------------------------------
// Synchronization condition
// ---------------------------------------------------------------------------

/// Certifies the network synchronization threshold for one internal system:
/// `c = λ₂ − max μ_p(Q·Df(t,x)·Q⁻¹)` over the sampled box, certified iff
/// `c > 0`. The hypothesis in the theory quantifies over *all* internal
/// states; for unbounded Jacobians no sampler suffices, so the certificate's
/// honest scope is the box (noted in the output, unless the Jacobian is
/// constant and the verdict global).
///
/// # Errors
/// [`CertifyError::SingularQ`] when `Q` is not invertible to working
/// precision (its condition number is reported); shape errors otherwise.
pub fn sync_condition(
    internal: &DynSystem,
    q: &DenseMatrix,
    p: PNorm,
    lambda2: f64,
    d: &DomainSampler,
) -> Result<Certificate> {
    let k = internal.dim();
    if !q.is_square() || q.rows() != k {
        return Err(CertifyError::InvalidInput(format!(
            "Q must be {k}×{k} to match the internal dynamics, got {}×{}",
            q.rows(),
            q.cols()
        )));
    }
    let dec = linalg::svd(q)?;
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let smin = dec.sigma.last().copied().unwrap_or(0.0);
    if smax == 0.0 || smin <= linalg::RANK_TOL_REL * smax {
        return Err(CertifyError::SingularQ {
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    let condition = smax / smin;
    let q_inv = linalg::pinv(q, None)?;

    let sweep = sweep_jacobian(internal, d, |df| {
        let weighted = q.matmul(df).matmul(&q_inv);
        measures::matrix_measure(&weighted, p).map(|v| (v, 0.0))
    })?;

    let c = lambda2 - sweep.worst.value;
    let mut notes = scope_notes(sweep.constant_jacobian);
    if !sweep.constant_jacobian {
        notes.push(
            "the synchronization hypothesis quantifies over all internal states; \
             a box certificate is the honest sampled scope"
                .into(),
        );
    }
    notes.push(format!(
        "threshold: algebraic connectivity λ₂ = {lambda2}; worst sampled weighted \
         measure = {}",
        sweep.worst.value
    ));
    let status = if c > 0.0 {
        CertificateStatus::CertifiedOnSamples
    } else {
        CertificateStatus::Refuted {
            witness: sweep.worst.clone(),
        }
    };
    Ok(Certificate {
        kind: CertificateKind::SyncCondition,
        norm: format!(
            "ℓ{} norm weighted by the similarity Q ({k}×{k})",
            p_label(p)
        ),
        second_norm: None,
        rate_c: c,
        worst_sample: sweep.worst,
        sample_count: sweep.sample_count,
        status,
        global: sweep.constant_jacobian,
        condition_number: Some(condition),
        max_invariance_residual: None,
        assumed_hypotheses: Vec::new(),
        notes,
        seed: d.seed(),
        weak_leg: None,
        semi_leg: None,
    })
}

// ---------------------------------------------------------------------------
// Doubly-contracting analysis
// ---------------------------------------------------------------------------

/// Spectral abscissa of `a` off the equilibrium subspace `S = span(basis)`.
///
/// Because the field vanishes identically on `S`, the Jacobian at any point
/// of `S` kills `S`; in a basis adapted to `[S⊥ | S]` the matrix is block
/// lower-triangular, so its spectrum splits into `dim S` zeros and the
/// spectrum of the compression onto `S⊥` — no invariance of `S⊥` is needed.
fn abscissa_off_subspace(a: &DenseMatrix, basis: &[Vec<Complex64>]) -> Result<f64> {
    if basis.is_empty() {
        return Ok(measures::spectral_abscissa(a)?);
    }
    let b = DenseMatrix::from_columns(basis)?;
    let perp = linalg::null_space(&b.conj_transpose(), None)?;
    if perp.is_empty() {
        // S is the whole space: nothing left to contract.
        return Ok(f64::NEG_INFINITY);
    }
    let q = DenseMatrix::from_columns(&perp)?;
    let compressed = q.conj_transpose().matmul(a).matmul(&q);
    Ok(measures::spectral_abscissa(&compressed)?)
}

/// Runs the weak and semi contraction legs together and, when both certify,
/// predicts the per-trajectory convergence rate `−α_{S⊥}(Df(x_star))`: the
/// spectral abscissa of the Jacobian at the supplied limit point, restricted
/// off the equilibrium subspace `S = span(equil_basis)`. The caller (usually
/// the simulator) supplies `x_star`; any point of `S` gives the same answer
/// for the bundled models since their Jacobians are constant along `S`.
///
/// Preconditions checked here: the dynamics are time-invariant, the semi
/// leg's kernel equals `S`, the field vanishes on sampled points of `S`
/// (to [`EQUILIBRIUM_REL_TOL`]), and `Df(x_star)` kills `S`.
///
/// # Errors
/// [`CertifyError::InvalidInput`] for time-varying dynamics or a kernel ≠
/// `S`; [`CertifyError::NotEquilibriumSubspace`] when the field or the
/// Jacobian fails to vanish on `S`; leg errors propagate.
pub fn analyze_doubly_contracting(
    sys: &DynSystem,
    weak_norm: &SemiNormSpec,
    semi_spec: &SemiNormSpec,
    equil_basis: &[Vec<f64>],
    x_star: &[f64],
    d: &DomainSampler,
) -> Result<Certificate> {
    if !sys.is_time_invariant() {
        return Err(CertifyError::InvalidInput(
            "doubly-contracting analysis applies to time-invariant dynamics".into(),
        ));
    }
    let n = sys.dim();
    if x_star.len() != n || equil_basis.iter().any(|u| u.len() != n) {
        return Err(CertifyError::InvalidInput(
            "x_star and the equilibrium basis must match the system dimension".into(),
        ));
    }
    // The semi leg's kernel must be exactly the equilibrium subspace.
    if semi_spec.kernel_basis().len() != equil_basis.len() {
        return Err(CertifyError::InvalidInput(format!(
            "the semi-norm kernel has dimension {} but the equilibrium subspace \
             has dimension {}",
            semi_spec.kernel_basis().len(),
            equil_basis.len()
        )));
    }
    if let Some(r) = semi_spec.weight() {
        let scale = 1.0 + r.frobenius_norm();
        for u in equil_basis {
            let uc: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let len = uc.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if len == 0.0 {
                continue;
            }
            let ru = r.mul_vec(&uc);
            let out = ru.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if out > INVARIANCE_REL_TOL * scale * len {
                return Err(CertifyError::InvalidInput(
                    "the semi-norm kernel does not contain the equilibrium subspace"
                        .into(),
                ));
            }
        }
    }

    // The affine set x* + span(basis) really must consist of equilibria.
    // The zero-coefficient sample comes first, so x* itself is checked.
    let t0 = d.time_samples()[0];
    for c in d.coefficient_samples(equil_basis.len()) {
        let mut z = x_star.to_vec();
        for (ci, u) in c.iter().zip(equil_basis) {
            for (zj, uj) in z.iter_mut().zip(u) {
                *zj += ci * uj;
            }
        }
        let fz = sys.f(t0, &z);
        let fnorm = fz.iter().map(|v| v * v).sum::<f64>().sqrt();
        let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let residual = fnorm / (1.0 + znorm);
        if residual > EQUILIBRIUM_REL_TOL {
            return Err(CertifyError::NotEquilibriumSubspace { residual, point: z });
        }
    }

    let weak = certify_weak_contraction(sys, weak_norm, d)?;
    let semi = certify_semi_contraction(sys, semi_spec, d)?;
    let both = weak.certified() && semi.certified();

    let df_star = sys.jacobian(t0, x_star);
    let basis_c = to_complex_basis(equil_basis);
    let df_scale = 1.0 + df_star.frobenius_norm();
    for u in &basis_c {
        let len = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let du = df_star.mul_vec(u);
        let out = du.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if out > INVARIANCE_REL_TOL * df_scale * len {
            return Err(CertifyError::NotEquilibriumSubspace {
                residual: out / (df_scale * len),
                point: x_star.to_vec(),
            });
        }
    }

    let mut notes = scope_notes(weak.global && semi.global);
    let rate_c = if both {
        let alpha = abscissa_off_subspace(&df_star, &basis_c)?;
        notes.push(
            "predicted per-trajectory rate: minus the spectral abscissa of the \
             Jacobian at the supplied limit, taken off the equilibrium subspace"
                .into(),
        );
        -alpha
    } else {
        notes.push("no predicted rate: a contraction leg was refuted".into());
        f64::NAN
    };
    let status = if both {
        CertificateStatus::CertifiedOnSamples
    } else if let CertificateStatus::Refuted { witness } = &weak.status {
        CertificateStatus::Refuted {
            witness: witness.clone(),
        }
    } else if let CertificateStatus::Refuted { witness } = &semi.status {
        CertificateStatus::Refuted {
            witness: witness.clone(),
        }
    } else {
        unreachable!("a failed conjunction has a refuted leg")
    };

    Ok(Certificate {
        kind: CertificateKind::DoublyContracting,
        norm: weak.norm.clone(),
        second_norm: Some(semi.norm.clone()),
        rate_c,
        // The semi leg limits the convergence rate; expose its worst sample.
        worst_sample: semi.worst_sample.clone(),
        sample_count: semi.sample_count,
        status,
        global: weak.global && semi.global,
        condition_number: None,
        max_invariance_residual: semi.max_invariance_residual,
        assumed_hypotheses: vec![
            "the sampled box lies in a convex invariant set (not machine-checked)"
                .into(),
        ],
        notes,
        seed: d.seed(),
        weak_leg: Some(Box::new(weak)),
        semi_leg: Some(Box::new(semi)),
    })
}

/// `‖P·A − A·P‖₂` for the orthogonal projection `P` onto `span(basis)` —
/// zero exactly when the subspace reduces `A` orthogonally. A subspace can
/// be invariant (even infinitesimally invariant at every state) while this
/// residual stays large; the two notions are deliberately different.
///
/// # Errors
/// Linear-algebra failures from the projection or the spectral norm.
pub fn projector_commutation_residual(
    a: &DenseMatrix,
    basis: &[Vec<f64>],
) -> Result<f64> {
    let p = linalg::orth_projection(a.rows(), &to_complex_basis(basis))?;
    let pa = p.matmul(a);
    let ap = a.matmul(&p);
    let diff = DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| pa[(i, j)] - ap[(i, j)]);
    Ok(diff.norm_two()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{self, WeightedDigraph};
    use crate::systems::{self, CostFunction};
    use proptest::prelude::*;

    fn box2(half: f64) -> DomainSampler {
        DomainSampler::symmetric(2, half).unwrap()
    }

    #[test]
    fn sampler_is_deterministic_and_stays_in_the_box() {
        let d = DomainSampler::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let pts = d.state_samples();
        assert_eq!(pts.len(), 25 + DEFAULT_RANDOM_SAMPLES);
        for x in &pts {
            assert!(x[0] >= -1.0 && x[0] <= 1.0 && x[1] >= 0.0 && x[1] <= 2.0);
        }
        // Grid corners are included.
        assert!(pts.contains(&vec![-1.0, 0.0]));
        assert!(pts.contains(&vec![1.0, 2.0]));
        // Same seed → identical set; different seed → different randoms.
        let again = DomainSampler::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(pts, again.state_samples());
        let other = again.with_seed(7).state_samples();
        assert_ne!(pts, other);
        // Above the dimension limit the grid is dropped.
        let wide = DomainSampler::symmetric(GRID_DIM_LIMIT + 1, 1.0).unwrap();
        assert_eq!(wide.state_samples().len(), DEFAULT_RANDOM_SAMPLES);
        // Coefficient draws start at zero and respect the half-width bound.
        let coeffs = d.coefficient_samples(3);
        assert_eq!(coeffs.len(), DEFAULT_RANDOM_SAMPLES + 1);
        assert_eq!(coeffs[0], vec![0.0; 3]);
        assert!(coeffs.iter().flatten().all(|c| c.abs() <= 1.0));
        // Invalid boxes are rejected.
        assert!(DomainSampler::new(vec![1.0], vec![0.0]).is_err());
        assert!(DomainSampler::new(vec![], vec![]).is_err());
        assert!(DomainSampler::new(vec![0.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn semi_only_toy_is_semi_contracting_at_unit_rate() {
        let sys = systems::toy_example("semi_only").unwrap();
        let r = DenseMatrix::from_real_rows(&[&[1.0, 0.0]]).unwrap();
        let s = SemiNormSpec::weighted(PNorm::One, r).unwrap();
        let cert = certify_semi_contraction(&sys, &s, &box2(5.0)).unwrap();
        assert!(cert.certified());
        assert!((cert.rate_c - 1.0).abs() <= 1e-12);
        assert_eq!(cert.sample_count, 225);
        assert!(!cert.global, "the Jacobian depends on the state");
        assert!(cert.max_invariance_residual.unwrap() <= 1e-12);
        // Scheduling independence: a rerun reproduces the exact certificate.
        let again = certify_semi_contraction(&sys, &s, &box2(5.0)).unwrap();
        assert_eq!(cert.rate_c, again.rate_c);
        assert_eq!(cert.worst_sample, again.worst_sample);
    }

    #[test]
    fn averaging_semi_certificate_attains_the_essential_abscissa() {
        let g = WeightedDigraph::complete(3, 1.0);
        let sys = systems::affine_averaging(&g, &[0.0; 3]).unwrap();
        let l = graph::laplacian(&g);
        let r = graph::epsilon_reduction(&l, 1e-6).unwrap();
        let s = SemiNormSpec::weighted(PNorm::Inf, r).unwrap();
        let d = DomainSampler::symmetric(3, 2.0).unwrap();
        let cert = certify_semi_contraction(&sys, &s, &d).unwrap();
        assert!(cert.certified());
        assert!(cert.global, "constant Jacobian makes the verdict global");
        // α_ess(−L) = −3 for the complete graph on 3 nodes with unit weights.
        assert!(cert.rate_c >= 3.0 - 1e-6);
        assert!(cert.rate_c <= 3.0 + 1e-9);
    }

    #[test]
    fn plain_two_norm_refutes_the_rotation_toy() {
        let sys = systems::toy_example("weak_only").unwrap();
        let s = SemiNormSpec::plain(PNorm::Two);
        let cert = certify_semi_contraction(&sys, &s, &box2(3.0)).unwrap();
        assert!(!cert.certified());
        assert!(cert.rate_c <= 0.0);
        match &cert.status {
            CertificateStatus::Refuted { witness } => {
                // The witness re-evaluates at or above the threshold.
                let df = sys.jacobian(witness.t, &witness.x);
                let again = measures::semi_measure(&df, &s).unwrap().value;
                assert_eq!(again, witness.value);
                assert!(again >= 0.0);
            }
            CertificateStatus::CertifiedOnSamples => panic!("expected a refutation"),
        }
    }

    #[test]
    fn weak_certificates_hold_for_the_flagship_models() {
        let g = WeightedDigraph::complete(3, 1.0);
        let avg = systems::affine_averaging(&g, &[0.0; 3]).unwrap();
        let d3 = DomainSampler::symmetric(3, 2.0).unwrap();
        let cert =
            certify_weak_contraction(&avg, &SemiNormSpec::plain(PNorm::Inf), &d3).unwrap();
        assert!(cert.certified());
        assert!(cert.rate_c.abs() <= WEAK_CONTRACTION_TOL);
        assert!(cert.global);
        assert!(cert
            .assumed_hypotheses
            .iter()
            .any(|h| h.contains("analytic")));

        let c3 = WeightedDigraph::new(
            3,
            true,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
        )
        .unwrap();
        let flow = systems::affine_flow(&c3, &[0.0; 3]).unwrap();
        let cert =
            certify_weak_contraction(&flow, &SemiNormSpec::plain(PNorm::One), &d3).unwrap();
        assert!(cert.certified());
        assert!(cert.rate_c.abs() <= WEAK_CONTRACTION_TOL);

        let k2 = WeightedDigraph::complete(2, 1.0);
        let costs = vec![
            CostFunction::quadratic(vec![1.0]),
            CostFunction::quadratic(vec![-1.0]),
        ];
        let pd = systems::primal_dual(&k2, costs, 1).unwrap();
        let d4 = DomainSampler::symmetric(4, 2.0).unwrap();
        let cert =
            certify_weak_contraction(&pd, &SemiNormSpec::plain(PNorm::Two), &d4).unwrap();
        assert!(cert.certified());
        assert!(cert.rate_c.abs() <= WEAK_CONTRACTION_TOL);
    }

    #[test]
    fn weak_contraction_rejects_semi_norms() {
        let sys = systems::toy_example("semi_only").unwrap();
        let r = DenseMatrix::from_real_rows(&[&[1.0, 0.0]]).unwrap();
        let s = SemiNormSpec::weighted(PNorm::Two, r).unwrap();
        let err = certify_weak_contraction(&sys, &s, &box2(1.0)).unwrap_err();
        assert!(matches!(err, CertifyError::InvalidNorm(_)));
    }

    #[test]
    fn infinitesimal_invariance_matches_the_known_kernels() {
        // Triangular linear system: span(e₂) is invariant under the Jacobian.
        let sys = systems::toy_example("linear_2x2").unwrap();
        let report =
            check_infinitesimal_invariance(&sys, &[vec![0.0, 1.0]], &box2(2.0)).unwrap();
        assert!(report.passed);
        assert!(report.max_residual <= 1e-12);

        // Diffusive coupling of identical nodes: the synchronization
        // subspace is invariant by block structure.
        let g = WeightedDigraph::complete(2, 1.0);
        let inner = systems::toy_example("linear_2x2").unwrap();
        let net = systems::diffusive_network(&g, inner).unwrap();
        let kernel = net.known_kernel().unwrap().to_vec();
        let d4 = DomainSampler::symmetric(4, 1.5).unwrap();
        let report = check_infinitesimal_invariance(&net, &kernel, &d4).unwrap();
        assert!(report.passed);

        // A generic direction is not invariant, and the worst sample
        // re-evaluates to the reported residual.
        let report =
            check_infinitesimal_invariance(&sys, &[vec![1.0, 0.0]], &box2(2.0)).unwrap();
        assert!(!report.passed);
        assert!(report.max_residual > 0.1);
        let df = sys.jacobian(report.worst.t, &report.worst.x);
        let basis = vec![vec![Complex64::ONE, Complex64::ZERO]];
        let again = measures::invariance_residual(&df, &basis).unwrap();
        assert_eq!(again, report.max_residual);
    }

    #[test]
    fn shifted_invariance_matches_the_known_kernels() {
        // f(0, x₂) lands exactly on the kernel axis.
        let sys = systems::toy_example("semi_only").unwrap();
        let report =
            check_shifted_invariance(&sys, &[vec![0.0, 1.0]], &[0.0, 0.0], &box2(3.0))
                .unwrap();
        assert!(report.passed);
        assert!(report.max_residual <= 1e-14);

        // Averaging with a zero-weighted-mean input: shifting by the
        // particular solution makes every consensus translate an equilibrium.
        let g = WeightedDigraph::complete(3, 1.0);
        let b = [1.0, -2.0, 1.0];
        let avg = systems::affine_averaging(&g, &b).unwrap();
        let x_star = match avg.known_equilibria() {
            systems::Equilibria::AffineSet { base, .. } => base.clone(),
            other => panic!("unexpected equilibria {other:?}"),
        };
        let d3 = DomainSampler::symmetric(3, 2.0).unwrap();
        let report =
            check_shifted_invariance(&avg, &[vec![1.0; 3]], &x_star, &d3).unwrap();
        assert!(report.passed, "residual {}", report.max_residual);

        // A generic affine field misses the kernel from almost every shift.
        let a = DenseMatrix::from_real_rows(&[&[0.0, 1.0], &[2.0, 0.0]]).unwrap();
        let aff = systems::DynSystem::new(
            2,
            "affine_probe",
            move |_t, x: &[f64]| vec![x[1] + 1.0, 2.0 * x[0] + 1.0],
            move |_t, _x| a.clone(),
        );
        let report =
            check_shifted_invariance(&aff, &[vec![0.0, 1.0]], &[0.0, 0.0], &box2(2.0))
                .unwrap();
        assert!(!report.passed);
        assert!(report.max_residual > 0.1);
    }

    fn linear_system(a: DenseMatrix, name: &str) -> DynSystem {
        let a_f = a.clone();
        DynSystem::new(
            a.rows(),
            name,
            move |_t, x: &[f64]| a_f.mul_real_vec(x),
            move |_t, _x| a.clone(),
        )
    }

    #[test]
    fn sync_condition_recovers_the_linear_threshold() {
        // Triangular internal dynamics: the optimal similarity pushes the
        // weighted measure down to the spectral abscissa −1.
        let a = DenseMatrix::from_real_rows(&[&[-1.0, 2.0], &[0.0, -2.0]]).unwrap();
        let internal = linear_system(a.clone(), "internal_linear");
        let q = measures::optimal_reduction_matrix(&a, &[], PNorm::Two, 1e-8).unwrap();
        let cert = sync_condition(&internal, &q, PNorm::Two, 3.0, &box2(1.0)).unwrap();
        assert!(cert.certified());
        assert!((cert.rate_c - 4.0).abs() <= 1e-6, "c = {}", cert.rate_c);
        assert!(cert.global);
        assert!(cert.condition_number.unwrap() >= 1.0);

        // Gradient of a convex potential: μ₂ ≤ −1 everywhere, so any
        // connected graph clears the threshold with c ≥ λ₂ + 1.
        let grad = DynSystem::new(
            2,
            "convex_gradient",
            |_t, x: &[f64]| x.iter().map(|&v| -v - v * v * v).collect(),
            |_t, x: &[f64]| {
                DenseMatrix::from_real_fn(2, 2, |i, j| {
                    if i == j {
                        -1.0 - 3.0 * x[i] * x[i]
                    } else {
                        0.0
                    }
                })
            },
        );
        let cert = sync_condition(
            &grad,
            &DenseMatrix::identity(2),
            PNorm::Two,
            2.0,
            &box2(1.0),
        )
        .unwrap();
        assert!(cert.certified());
        assert!(cert.rate_c >= 2.0 + 1.0 - 1e-12);

        // Expansion rate 1 against connectivity 0.5: refuted, and the
        // witness re-evaluates above the threshold.
        let expanding = linear_system(
            DenseMatrix::from_real_rows(&[&[1.0]]).unwrap(),
            "expanding",
        );
        let d1 = DomainSampler::symmetric(1, 1.0).unwrap();
        let cert = sync_condition(
            &expanding,
            &DenseMatrix::identity(1),
            PNorm::Two,
            0.5,
            &d1,
        )
        .unwrap();
        assert!(!cert.certified());
        match &cert.status {
            CertificateStatus::Refuted { witness } => {
                assert!((witness.value - 1.0).abs() <= 1e-12);
                assert!(witness.value >= 0.5);
            }
            CertificateStatus::CertifiedOnSamples => panic!("expected a refutation"),
        }
    }

    #[test]
    fn sync_condition_rejects_a_singular_similarity() {
        let internal = linear_system(DenseMatrix::identity(2), "internal_id");
        let q = DenseMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let err = sync_condition(&internal, &q, PNorm::Two, 1.0, &box2(1.0)).unwrap_err();
        assert!(matches!(err, CertifyError::SingularQ { .. }));
    }

    #[test]
    fn doubly_contracting_averaging_predicts_the_consensus_rate() {
        let g = WeightedDigraph::complete(3, 1.0);
        let sys = systems::affine_averaging(&g, &[0.0; 3]).unwrap();
        let l = graph::laplacian(&g);
        let semi =
            SemiNormSpec::weighted(PNorm::Inf, graph::epsilon_reduction(&l, 1e-6).unwrap())
                .unwrap();
        let d3 = DomainSampler::symmetric(3, 2.0).unwrap();
        let cert = analyze_doubly_contracting(
            &sys,
            &SemiNormSpec::plain(PNorm::Inf),
            &semi,
            &[vec![1.0; 3]],
            &[0.0; 3],
            &d3,
        )
        .unwrap();
        assert!(cert.certified());
        assert!(cert.global);
        // Off the consensus line, −L has eigenvalues {−3, −3}.
        assert!((cert.rate_c - 3.0).abs() <= 1e-9);
        assert!(cert.weak_leg.as_ref().unwrap().certified());
        assert!(cert.semi_leg.as_ref().unwrap().certified());
        assert!(cert.second_norm.is_some());
    }

    #[test]
    fn doubly_contracting_flow_on_a_directed_cycle() {
        let c3 = WeightedDigraph::new(
            3,
            true,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
        )
        .unwrap();
        let flow = systems::affine_flow(&c3, &[0.0; 3]).unwrap();
        let v = flow.known_kernel().unwrap()[0].clone();
        let neg_lt = graph::laplacian(&c3)
            .transpose()
            .scale(Complex64::new(-1.0, 0.0));
        let v_c: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let r = measures::optimal_reduction_matrix(&neg_lt, &[v_c], PNorm::One, 1e-6)
            .unwrap();
        let semi = SemiNormSpec::weighted(PNorm::One, r).unwrap();
        let d3 = DomainSampler::symmetric(3, 2.0).unwrap();
        let cert = analyze_doubly_contracting(
            &flow,
            &SemiNormSpec::plain(PNorm::One),
            &semi,
            &[v],
            &[0.0; 3],
            &d3,
        )
        .unwrap();
        assert!(cert.certified());
        // Nonzero cycle Laplacian eigenvalues are 1.5 ± i√3/2.
        assert!((cert.rate_c - 1.5).abs() <= 1e-9, "rate {}", cert.rate_c);
        assert!(cert.semi_leg.as_ref().unwrap().rate_c >= 1.5 - 1e-6);
    }

    #[test]
    fn doubly_contracting_refutes_the_rotation_on_its_semi_leg() {
        let sys = systems::toy_example("weak_only").unwrap();
        let plain = SemiNormSpec::plain(PNorm::Two);
        let cert =
            analyze_doubly_contracting(&sys, &plain, &plain, &[], &[0.0, 0.0], &box2(2.0))
                .unwrap();
        assert!(!cert.certified());
        assert!(cert.weak_leg.as_ref().unwrap().certified());
        assert!(!cert.semi_leg.as_ref().unwrap().certified());
        assert!(cert.rate_c.is_nan());
        match &cert.status {
            CertificateStatus::Refuted { witness } => assert!(witness.value >= 0.0),
            CertificateStatus::CertifiedOnSamples => panic!("expected a refutation"),
        }
    }

    #[test]
    fn doubly_contracting_validates_its_preconditions() {
        let g = WeightedDigraph::complete(3, 1.0);
        let plain = SemiNormSpec::plain(PNorm::Inf);
        let l = graph::laplacian(&g);
        let semi =
            SemiNormSpec::weighted(PNorm::Inf, graph::epsilon_reduction(&l, 1e-6).unwrap())
                .unwrap();
        let d3 = DomainSampler::symmetric(3, 2.0).unwrap();

        // Nonzero input: the consensus line through the origin no longer
        // consists of equilibria…
        let pushed = systems::affine_averaging(&g, &[1.0, -2.0, 1.0]).unwrap();
        let err = analyze_doubly_contracting(
            &pushed,
            &plain,
            &semi,
            &[vec![1.0; 3]],
            &[0.0; 3],
            &d3,
        )
        .unwrap_err();
        assert!(matches!(err, CertifyError::NotEquilibriumSubspace { .. }));

        // …but the shifted line through the true equilibrium does, and the
        // analysis certifies it at the same rate as the unforced dynamics.
        let base = [1.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0];
        let cert = analyze_doubly_contracting(
            &pushed,
            &plain,
            &semi,
            &[vec![1.0; 3]],
            &base,
            &d3,
        )
        .unwrap();
        assert!(cert.certified());
        assert!(
            (cert.rate_c - 3.0).abs() <= 1e-9,
            "rate {} should be the consensus rate 3",
            cert.rate_c
        );

        // Kernel dimension must match the subspace dimension.
        let sys = systems::affine_averaging(&g, &[0.0; 3]).unwrap();
        let err = analyze_doubly_contracting(&sys, &plain, &plain, &[vec![1.0; 3]], &[0.0; 3], &d3)
            .unwrap_err();
        assert!(matches!(err, CertifyError::InvalidInput(_)));

        // Time-varying dynamics are out of scope.
        let tv = DynSystem::new(
            1,
            "decay_tv",
            |t, x: &[f64]| vec![-(1.0 + t.sin()) * x[0]],
            |t, _x| DenseMatrix::from_real_fn(1, 1, |_, _| -(1.0 + t.sin())),
        )
        .time_varying();
        let one = SemiNormSpec::plain(PNorm::Two);
        let d1 = DomainSampler::symmetric(1, 1.0).unwrap();
        let err = analyze_doubly_contracting(&tv, &one, &one, &[], &[0.0], &d1).unwrap_err();
        assert!(matches!(err, CertifyError::InvalidInput(_)));
    }

    #[test]
    fn projector_commutation_distinguishes_oblique_invariance() {
        // Triangular Jacobian: span(e₂) is invariant but not reducing.
        let sys = systems::toy_example("linear_2x2").unwrap();
        let df = sys.jacobian(0.0, &[0.0, 0.0]);
        let res = projector_commutation_residual(&df, &[vec![0.0, 1.0]]).unwrap();
        assert!((res - 1.0).abs() <= 1e-12, "residual {res}");

        // A symmetric matrix commutes with the projector onto an eigenspace.
        let a = DenseMatrix::from_real_rows(&[&[-1.0, 0.0], &[0.0, -2.0]]).unwrap();
        let res = projector_commutation_residual(&a, &[vec![0.0, 1.0]]).unwrap();
        assert!(res <= 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        /// A superset of samples can only raise the max measure, so the
        /// certified rate never increases; and any refutation witness
        /// re-evaluates above the threshold.
        #[test]
        fn enlarging_the_sample_set_never_increases_the_rate(
            seed in 0u64..1000,
            e in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            let a = DenseMatrix::from_real_rows(&[&e[0..2], &e[2..4]]).unwrap();
            let a_f = a.clone();
            let sys = DynSystem::new(
                2,
                "cubic_probe",
                move |_t, x: &[f64]| {
                    let lin = a_f.mul_real_vec(x);
                    lin.iter().zip(x).map(|(l, &v)| l - v * v * v).collect()
                },
                move |_t, x: &[f64]| {
                    DenseMatrix::from_fn(2, 2, |i, j| {
                        a[(i, j)]
                            - if i == j {
                                Complex64::new(3.0 * x[i] * x[i], 0.0)
                            } else {
                                Complex64::ZERO
                            }
                    })
                },
            );
            let s = SemiNormSpec::plain(PNorm::Two);
            let small = DomainSampler::symmetric(2, 2.0)
                .unwrap()
                .with_seed(seed)
                .with_random_count(20);
            let big = DomainSampler::symmetric(2, 2.0)
                .unwrap()
                .with_seed(seed)
                .with_random_count(60);
            let c_small = certify_semi_contraction(&sys, &s, &small).unwrap();
            let c_big = certify_semi_contraction(&sys, &s, &big).unwrap();
            // Same seed means the small random set is a prefix of the big one.
            prop_assert!(c_big.rate_c <= c_small.rate_c);
            for cert in [&c_small, &c_big] {
                if let CertificateStatus::Refuted { witness } = &cert.status {
                    let df = sys.jacobian(witness.t, &witness.x);
                    let again = measures::semi_measure(&df, &s).unwrap().value;
                    prop_assert!(again >= 0.0);
                    prop_assert_eq!(again, witness.value);
                }
            }
        }
    }
}
