//! Mixed tensor norms on `ℝⁿ ⊗ ℝᵏ ≅ ℝ^{nk}` for network analysis.
//!
//! A vector `u ∈ ℝ^{nk}` is identified with the `n×k` matrix `M` via
//! `u[(i·k)+j] = M[i][j]`, so `v ⊗ w ↔ v wᵀ`. The `(2,p)` value of a
//! representation `u = Σ vⁱ ⊗ wⁱ` is `(Σ ‖vⁱ‖₂²‖wⁱ‖_p²)^{1/2}`, and the
//! norm is the infimum of that value over representations whose first
//! factors `{vⁱ}` are mutually orthogonal. (Without the orthogonality
//! restriction the infimum degenerates: splitting a term `v⊗w` into `r`
//! copies of `(v/r)⊗w` scales its contribution by `1/r`. All canonical
//! representations — SVD factors, block decompositions `Σ eᵢ⊗uᵢ` — are
//! orthogonal, and every downstream certificate consumes only upper
//! bounds, which the restriction preserves.)
//!
//! | Need | Tool |
//! |------|------|
//! | value of a given representation | [`tensor_norm_upper`] |
//! | desk-scale numerical infimum (`nk ≤ 16`) | [`tensor_norm_bruteforce`] |
//! | measure bound `μ_{(2,p)}(blkdiag Λᵢ) ≤ maxᵢ μ_p(Λᵢ)` | [`tensor_measure_bound`] |
//!
//! For `p = 2` every orthogonal representation has the same value
//! `‖M‖_F = ‖u‖₂`, which testing exploits as an exact oracle.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError, RANK_TOL_REL};
use crate::measures::{
    matrix_measure, measure_limit_oracle, MeasureError, PNorm, SemiNormSpec,
};

/// Representations whose reconstruction misses the target by more than this
/// (relative to `1 + ‖u‖₂`) are rejected.
pub const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Compass-search step below which a local search is considered converged.
pub const SEARCH_STEP_TOL: f64 = 1e-8;

/// Default number of local-search restarts per admissible term count.
pub const DEFAULT_RESTARTS: usize = 32;

/// Seed for the reproducible multi-start search; echoed in the output.
pub const BRUTEFORCE_SEED: u64 = 0x2070_0A11;

/// Largest `n·k` accepted by the brute-force search.
pub const BRUTEFORCE_MAX_DIM: usize = 16;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("representation reconstructs the target with residual {residual:.3e}")]
    BadRepresentation { residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A finite-rank representation `Σᵢ vⁱ ⊗ wⁱ` with `vⁱ ∈ ℝⁿ`, `wⁱ ∈ ℝᵏ`.
#[derive(Debug, Clone, Serialize)]
pub struct TensorRepresentation {
    n: usize,
    k: usize,
    terms: Vec<(Vec<f64>, Vec<f64>)>,
}

impl TensorRepresentation {
    /// Validates factor dimensions; an empty term list represents zero.
    pub fn new(n: usize, k: usize, terms: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(TensorError::DimensionMismatch(
                "factor dimensions must be ≥ 1".into(),
            ));
        }
        for (i, (v, w)) in terms.iter().enumerate() {
            if v.len() != n || w.len() != k {
                return Err(TensorError::DimensionMismatch(format!(
                    "term {i} has factors of length {} and {}, expected {n} and {k}",
                    v.len(),
                    w.len()
                )));
            }
        }
        Ok(TensorRepresentation { n, k, terms })
    }

    pub fn rank_one(v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let (n, k) = (v.len(), w.len());
        Self::new(n, k, vec![(v, w)])
    }

    /// Representation from the singular value decomposition of the `n×k`
    /// reshaping: terms `(aᵢ, σᵢbᵢ)` over the significant singular triplets.
    /// Its first factors are orthonormal, so its value is an upper bound the
    /// brute-force search can only improve on.
    pub fn from_reshaped_svd(u: &[f64], n: usize, k: usize) -> Result<Self> {
        let m = reshape(u, n, k)?;
        let svd = linalg::svd(&m)?;
        let cutoff = RANK_TOL_REL * svd.sigma.first().copied().unwrap_or(0.0);
        let mut terms = Vec::new();
        for (l, &sigma) in svd.sigma.iter().enumerate() {
            if sigma <= cutoff {
                break;
            }
            let a: Vec<f64> = svd.u.column(l).iter().map(|z| z.re).collect();
            let b: Vec<f64> = svd.v.column(l).iter().map(|z| sigma * z.re).collect();
            terms.push((a, b));
        }
        Self::new(n, k, terms)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn terms(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.terms
    }

    /// `Σᵢ vⁱ ⊗ wⁱ` as a flat vector in `ℝ^{nk}`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.n * self.k];
        for (v, w) in &self.terms {
            for (i, &vi) in v.iter().enumerate() {
                for (j, &wj) in w.iter().enumerate() {
                    u[i * self.k + j] += vi * wj;
                }
            }
        }
        u
    }
}

fn reshape(u: &[f64], n: usize, k: usize) -> Result<DenseMatrix> {
    if u.len() != n * k {
        return Err(TensorError::DimensionMismatch(format!(
            "vector has length {}, expected n·k = {}",
            u.len(),
            n * k
        )));
    }
    Ok(DenseMatrix::from_real_fn(n, k, |i, j| u[i * k + j]))
}

fn real_pnorm(v: &[f64], p: PNorm) -> f64 {
    match p {
        PNorm::One => v.iter().map(|x| x.abs()).sum(),
        PNorm::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        PNorm::Inf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
        PNorm::Generic(q) => {
            let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                0.0
            } else {
                scale * v.iter().map(|x| (x.abs() / scale).powf(q)).sum::<f64>().powf(1.0 / q)
            }
        }
    }
}

/// Value `(Σ ‖vⁱ‖₂²‖wⁱ‖_p²)^{1/2}` of a representation of `u` — always an
/// upper bound on the tensor norm of `u`.
///
/// # Errors
/// [`TensorError::BadRepresentation`] when the representation misses `u` by
/// more than [`RECONSTRUCTION_TOL`]·(1+‖u‖₂) in the Euclidean norm.
pub fn tensor_norm_upper(u: &[f64], rep: &TensorRepresentation, p: PNorm) -> Result<f64> {
    if u.len() != rep.n * rep.k {
        return Err(TensorError::DimensionMismatch(format!(
            "vector has length {}, representation lives in ℝ^{}",
            u.len(),
            rep.n * rep.k
        )));
    }
    let rebuilt = rep.reconstruct();
    let residual = u
        .iter()
        .zip(&rebuilt)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = 1.0 + real_pnorm(u, PNorm::Two);
    if residual > RECONSTRUCTION_TOL * scale {
        return Err(TensorError::BadRepresentation { residual });
    }
    let sum: f64 = rep
        .terms
        .iter()
        .map(|(v, w)| {
            let nv = real_pnorm(v, PNorm::Two);
            let nw = real_pnorm(w, p);
            nv * nv * nw * nw
        })
        .sum();
    Ok(sum.sqrt())
}

/// Outcome of the multi-start search: the best value found, the orthogonal
/// representation achieving it, and the provenance needed to reproduce it.
#[derive(Debug, Clone)]
pub struct TensorNormEstimate {
    /// Best representation value found — an upper bound on the infimum.
    pub value: f64,
    /// Number of terms in the winning representation.
    pub rank_used: usize,
    /// Seed of the deterministic restart generator.
    pub seed: u64,
    /// The representation achieving `value`.
    pub representation: TensorRepresentation,
}

/// Orthonormalizes the columns of the `rows×cols` array `y` (column-major
/// list of columns). Returns `None` when the columns are numerically
/// dependent.
fn gram_schmidt(y: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(y.len());
    for col in y {
        let mut v = col.clone();
        for prev in &q {
            let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        // One re-orthogonalization pass keeps near-dependent starts honest.
        for prev in &q {
            let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm = real_pnorm(&v, PNorm::Two);
        let orig = real_pnorm(col, PNorm::Two).max(1.0);
        if norm <= 1e-10 * orig {
            return None;
        }
        for vi in &mut v {
            *vi /= norm;
        }
        q.push(v);
    }
    Some(q)
}

/// Objective `Σ_l ‖N·θ_l‖_p²` where `θ_l` are the rows of the
/// orthonormalization of `y` (an `r`-element list of `b`-vectors is produced
/// from `y`'s `b` columns of length `r`).
fn objective(n_mat: &[Vec<f64>], y: &[Vec<f64>], r: usize, p: PNorm) -> f64 {
    let Some(q) = gram_schmidt(y) else {
        return f64::INFINITY;
    };
    let b = q.len();
    let k = n_mat.len();
    let mut total = 0.0;
    let mut image = vec![0.0; k];
    for l in 0..r {
        for (row, img) in image.iter_mut().enumerate() {
            *img = (0..b).map(|c| n_mat[row][c] * q[c][l]).sum();
        }
        let norm = real_pnorm(&image, p);
        total += norm * norm;
    }
    total
}

fn compass_search(
    n_mat: &[Vec<f64>],
    mut y: Vec<Vec<f64>>,
    r: usize,
    p: PNorm,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<Vec<f64>>) {
    let mut best = objective(n_mat, &y, r, p);
    let mut step = 0.5;
    let mut evals = 0usize;
    let dim = y.len() * r;
    while step >= SEARCH_STEP_TOL && evals < 60_000 {
        let mut improved = false;
        for c in 0..y.len() {
            for i in 0..r {
                for sign in [1.0, -1.0] {
                    let old = y[c][i];
                    y[c][i] = old + sign * step;
                    let val = objective(n_mat, &y, r, p);
                    evals += 1;
                    if val < best {
                        best = val;
                        improved = true;
                    } else {
                        y[c][i] = old;
                    }
                }
            }
        }
        // The 1- and ∞-norm objectives are kinked; axis moves alone can
        // stall off-minimum, so probe random directions at the same scale.
        for _ in 0..2 * dim {
            let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scale = step / real_pnorm(&dir, PNorm::Two).max(1e-12);
            let snapshot = y.clone();
            for (flat, d) in dir.iter().enumerate() {
                y[flat / r][flat % r] += scale * d;
            }
            let val = objective(n_mat, &y, r, p);
            evals += 1;
            if val < best {
                best = val;
                improved = true;
            } else {
                y = snapshot;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, y)
}

/// Multi-start numerical infimum of the tensor norm of `u` over orthogonal
/// representations with at most `rank_cap` terms (default `min(n,k)+1`,
/// never more than `n` nor fewer than the reshaping's rank). The result is
/// an upper bound on the true infimum, nonincreasing in `rank_cap` and
/// `restarts`, and fully reproducible: restarts are seeded from the recorded
/// seed and reduced by a deterministic minimum.
///
/// # Panics
/// When `u` is not an `n·k` vector or `n·k` exceeds
/// [`BRUTEFORCE_MAX_DIM`].
pub fn tensor_norm_bruteforce(
    u: &[f64],
    n: usize,
    k: usize,
    p: PNorm,
    rank_cap: Option<usize>,
    restarts: Option<usize>,
) -> Result<TensorNormEstimate> {
    assert!(
        n * k <= BRUTEFORCE_MAX_DIM,
        "brute-force search is limited to n·k ≤ {BRUTEFORCE_MAX_DIM}"
    );
    let m = reshape(u, n, k)?;
    let restarts = restarts.unwrap_or(DEFAULT_RESTARTS).max(1);
    let cap = rank_cap.unwrap_or(n.min(k) + 1).min(n).max(1);

    let svd = linalg::svd(&m)?;
    let sigma_max = svd.sigma.first().copied().unwrap_or(0.0);
    let rank = svd
        .sigma
        .iter()
        .take_while(|&&s| s > RANK_TOL_REL * sigma_max)
        .count();
    if rank == 0 {
        return Ok(TensorNormEstimate {
            value: 0.0,
            rank_used: 0,
            seed: BRUTEFORCE_SEED,
            representation: TensorRepresentation::new(n, k, Vec::new())?,
        });
    }
    let b = rank;
    // N = Mᵀ·B over the significant left singular basis, stored per row of N.
    let n_mat: Vec<Vec<f64>> = (0..k)
        .map(|row| {
            (0..b)
                .map(|c| (0..n).map(|i| m[(i, row)].re * svd.u[(i, c)].re).sum())
                .collect()
        })
        .collect();

    // Candidate term counts: the rank is mandatory, the cap is a budget.
    let r_list: Vec<usize> = (b..=cap.max(b)).collect();
    let jobs: Vec<(usize, usize)> = r_list
        .iter()
        .flat_map(|&r| (0..restarts).map(move |s| (r, s)))
        .collect();

    let results: Vec<(f64, usize, usize, Vec<Vec<f64>>)> = jobs
        .par_iter()
        .map(|&(r, s)| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(BRUTEFORCE_SEED ^ ((r as u64) << 32) ^ s as u64);
            // Column c of Y is an r-vector; start at the identity embedding,
            // then at jittered and fully random points.
            let mut y: Vec<Vec<f64>> = (0..b)
                .map(|c| (0..r).map(|i| if i == c { 1.0 } else { 0.0 }).collect())
                .collect();
            if s > 0 {
                let scale = if s <= restarts / 2 { 0.5 } else { 2.0 };
                for col in &mut y {
                    for entry in col.iter_mut() {
                        let jitter: f64 = rng.random_range(-1.0..1.0);
                        *entry = if s <= restarts / 2 {
                            *entry + scale * jitter
                        } else {
                            scale * jitter
                        };
                    }
                }
            }
            let (val, y_best) = compass_search(&n_mat, y, r, p, &mut rng);
            (val, r, s, y_best)
        })
        .collect();

    let (best_val, best_r, _, best_y) = results
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
        .expect("at least one restart always runs");

    let q = gram_schmidt(&best_y).expect("winning point is orthonormalizable");
    // Complete Θ's rows (the orthonormal columns in `q`) to an orthogonal
    // r×r matrix; the extra rows ride along directions M annihilates, which
    // keeps each first factor aₗ = B·θₗ + F·φₗ at unit length without
    // changing wₗ = Mᵀaₗ = N·θₗ.
    let mut completion: Vec<Vec<f64>> = Vec::new();
    while b + completion.len() < best_r {
        let mut best_residual: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for cand in 0..best_r {
            let mut v: Vec<f64> = (0..best_r).map(|i| f64::from(u8::from(i == cand))).collect();
            for basis in q.iter().chain(&completion) {
                let dot: f64 = basis.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, bi) in v.iter_mut().zip(basis) {
                    *vi -= dot * bi;
                }
            }
            let norm = real_pnorm(&v, PNorm::Two);
            if norm > best_norm {
                best_norm = norm;
                best_residual = Some(v);
            }
        }
        let mut v = best_residual.expect("ℝʳ always has room for the completion");
        for vi in &mut v {
            *vi /= best_norm;
        }
        completion.push(v);
    }
    let mut terms = Vec::new();
    for l in 0..best_r {
        let theta: Vec<f64> = (0..b).map(|c| q[c][l]).collect();
        let w: Vec<f64> = (0..k)
            .map(|row| (0..b).map(|c| n_mat[row][c] * theta[c]).sum())
            .collect();
        if real_pnorm(&w, PNorm::Two) <= 1e-14 * (1.0 + sigma_max) {
            continue;
        }
        let a: Vec<f64> = (0..n)
            .map(|i| {
                let head: f64 = (0..b).map(|c| svd.u[(i, c)].re * theta[c]).sum();
                let tail: f64 = completion
                    .iter()
                    .enumerate()
                    .map(|(c, phi)| svd.u[(i, b + c)].re * phi[l])
                    .sum();
                head + tail
            })
            .collect();
        terms.push((a, w));
    }
    let representation = TensorRepresentation::new(n, k, terms)?;
    Ok(TensorNormEstimate {
        value: best_val.sqrt(),
        rank_used: best_r,
        seed: BRUTEFORCE_SEED,
        representation,
    })
}

/// Certified upper bound `maxᵢ μ_p(Λᵢ)` on the `(2,p)` measure of the
/// block-diagonal matrix `blkdiag(Λ₁, …, Λₙ)`. This is the bound all
/// synchronization certificates consume; it never needs the exact norm.
pub fn tensor_measure_bound(blocks: &[DenseMatrix], p: PNorm) -> Result<f64> {
    assert!(!blocks.is_empty(), "need at least one diagonal block");
    let k = blocks[0].rows();
    let mut worst = f64::NEG_INFINITY;
    for block in blocks {
        if !block.is_square() || block.rows() != k {
            return Err(TensorError::DimensionMismatch(format!(
                "blocks must all be {k}×{k}, found {}×{}",
                block.rows(),
                block.cols()
            )));
        }
        let mu = if p.has_closed_form() {
            matrix_measure(block, p)?
        } else {
            measure_limit_oracle(block, &SemiNormSpec::plain(p), None)?
        };
        worst = worst.max(mu);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::semi_measure;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn kron(v: &[f64], w: &[f64]) -> Vec<f64> {
        v.iter().flat_map(|&a| w.iter().map(move |&b| a * b)).collect()
    }

    fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn upper_bound_examples() {
        let e11 = kron(&[1.0, 0.0], &[1.0, 0.0]);
        let rep = TensorRepresentation::rank_one(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        for p in [PNorm::One, PNorm::Two, PNorm::Inf, PNorm::Generic(2.5)] {
            assert_abs_diff_eq!(tensor_norm_upper(&e11, &rep, p).unwrap(), 1.0, epsilon = 1e-12);
        }

        let v = vec![1.0, -2.0, 0.5];
        let w = vec![0.3, 1.1];
        let u = kron(&v, &w);
        let rep = TensorRepresentation::rank_one(v.clone(), w.clone()).unwrap();
        for p in [PNorm::One, PNorm::Two, PNorm::Inf] {
            let expect = real_pnorm(&v, PNorm::Two) * real_pnorm(&w, p);
            assert_abs_diff_eq!(tensor_norm_upper(&u, &rep, p).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn svd_representation_matches_euclidean_norm_at_p_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let u = random_vec(9, &mut rng);
            let rep = TensorRepresentation::from_reshaped_svd(&u, 3, 3).unwrap();
            let val = tensor_norm_upper(&u, &rep, PNorm::Two).unwrap();
            assert_abs_diff_eq!(val, real_pnorm(&u, PNorm::Two), epsilon = 1e-10);
        }
    }

    #[test]
    fn bad_representation_is_rejected() {
        let u = kron(&[1.0, 0.0], &[1.0, 0.0]);
        let rep = TensorRepresentation::rank_one(vec![1.0, 0.1], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            tensor_norm_upper(&u, &rep, PNorm::Two),
            Err(TensorError::BadRepresentation { .. })
        ));
    }

    #[test]
    fn bruteforce_rank_one_recovers_product() {
        let v = vec![1.0, -2.0, 0.5];
        let w = vec![0.3, 1.1];
        let u = kron(&v, &w);
        for p in [PNorm::One, PNorm::Two, PNorm::Inf, PNorm::Generic(3.0)] {
            let est = tensor_norm_bruteforce(&u, 3, 2, p, None, Some(8)).unwrap();
            let expect = real_pnorm(&v, PNorm::Two) * real_pnorm(&w, p);
            assert_abs_diff_eq!(est.value, expect, epsilon = 1e-6);
            // The winning representation is itself a valid certificate.
            let check = tensor_norm_upper(&u, &est.representation, p).unwrap();
            assert_abs_diff_eq!(check, est.value, epsilon = 1e-9);
        }
    }

    #[test]
    fn bruteforce_at_p_two_matches_euclidean_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, k) in [(2, 2), (3, 3), (2, 3)] {
            for _ in 0..5 {
                let u = random_vec(n * k, &mut rng);
                let est = tensor_norm_bruteforce(&u, n, k, PNorm::Two, None, Some(8)).unwrap();
                assert_abs_diff_eq!(est.value, real_pnorm(&u, PNorm::Two), epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn bruteforce_diagonal_sum_at_p_inf() {
        // e₁⊗e₁ + e₂⊗e₂: the diagonal representation gives √2, a rotated
        // basis reaches 1, the optimum of the orthogonal class.
        let u = add(&kron(&[1.0, 0.0], &[1.0, 0.0]), &kron(&[0.0, 1.0], &[0.0, 1.0]));
        let diag_rep = TensorRepresentation::new(
            2,
            2,
            vec![
                (vec![1.0, 0.0], vec![1.0, 0.0]),
                (vec![0.0, 1.0], vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        let upper = tensor_norm_upper(&u, &diag_rep, PNorm::Inf).unwrap();
        assert_abs_diff_eq!(upper, 2.0_f64.sqrt(), epsilon = 1e-12);

        let est = tensor_norm_bruteforce(&u, 2, 2, PNorm::Inf, None, None).unwrap();
        assert!(est.value <= upper + 1e-9);
        assert!(est.value >= 1.0 - 1e-6, "value = {}", est.value);
        assert!(est.value <= 1.0 + 1e-4, "value = {}", est.value);
    }

    #[test]
    fn bruteforce_monotone_in_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let u = random_vec(6, &mut rng);
        let tight = tensor_norm_bruteforce(&u, 3, 2, PNorm::Inf, Some(2), Some(4)).unwrap();
        let wide = tensor_norm_bruteforce(&u, 3, 2, PNorm::Inf, Some(3), Some(16)).unwrap();
        assert!(wide.value <= tight.value + 1e-9);
    }

    #[test]
    fn measure_bound_examples() {
        let neg_eye = DenseMatrix::identity(3).scale(Complex64::new(-1.0, 0.0));
        for p in [PNorm::One, PNorm::Two, PNorm::Inf] {
            let bound = tensor_measure_bound(&[neg_eye.clone(), neg_eye.clone()], p).unwrap();
            assert_abs_diff_eq!(bound, -1.0, epsilon = 1e-12);
        }

        let b1 = DenseMatrix::from_real_rows(&[&[-1.0]]).unwrap();
        let b2 = DenseMatrix::from_real_rows(&[&[-3.0]]).unwrap();
        let bound = tensor_measure_bound(&[b1.clone(), b2.clone()], PNorm::Two).unwrap();
        assert_abs_diff_eq!(bound, -1.0, epsilon = 1e-12);

        // Generic p runs through the limit oracle.
        let bound = tensor_measure_bound(&[b1, b2], PNorm::Generic(1.7)).unwrap();
        assert_abs_diff_eq!(bound, -1.0, epsilon = 1e-5);
    }

    #[test]
    fn measure_bound_matches_weighted_measures_of_conjugated_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let q = DenseMatrix::from_real_rows(&[&[1.0, 0.4], &[-0.2, 0.9]]).unwrap();
        let q_inv = crate::linalg::pinv(&q, None).unwrap();
        for p in [PNorm::One, PNorm::Two, PNorm::Inf] {
            let jacobians: Vec<DenseMatrix> = (0..3)
                .map(|_| DenseMatrix::from_real_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let conjugated: Vec<DenseMatrix> = jacobians
                .iter()
                .map(|j| q.matmul(j).matmul(&q_inv))
                .collect();
            let bound = tensor_measure_bound(&conjugated, p).unwrap();
            let direct = jacobians
                .iter()
                .map(|j| {
                    semi_measure(j, &SemiNormSpec::weighted(p, q.clone()).unwrap())
                        .unwrap()
                        .value
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert_abs_diff_eq!(bound, direct, epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(15))]

        /// Absolute homogeneity of the brute-force value.
        #[test]
        fn bruteforce_homogeneous(seed in 0u64..200, c in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, k) = (2 + (seed % 2) as usize, 2 + (seed % 2) as usize);
            let u = random_vec(n * k, &mut rng);
            let scaled: Vec<f64> = u.iter().map(|x| c * x).collect();
            for p in [PNorm::One, PNorm::Inf] {
                let base = tensor_norm_bruteforce(&u, n, k, p, None, None).unwrap().value;
                let scl = tensor_norm_bruteforce(&scaled, n, k, p, None, None).unwrap().value;
                prop_assert!((scl - c.abs() * base).abs() <= 1e-4 * (1.0 + c.abs()),
                    "p={p}: {scl} vs |c|·{base}");
            }
        }

        /// Triangle inequality at brute-force scale.
        #[test]
        fn bruteforce_triangle(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(900));
            let (n, k) = (3, 2);
            let u = random_vec(n * k, &mut rng);
            let z = random_vec(n * k, &mut rng);
            let sum = add(&u, &z);
            for p in [PNorm::One, PNorm::Inf] {
                let fu = tensor_norm_bruteforce(&u, n, k, p, None, None).unwrap().value;
                let fz = tensor_norm_bruteforce(&z, n, k, p, None, None).unwrap().value;
                let fs = tensor_norm_bruteforce(&sum, n, k, p, None, None).unwrap().value;
                prop_assert!(fs <= fu + fz + 1e-4, "p={p}: {fs} > {fu} + {fz}");
            }
        }

        /// Row-orthonormal contractions `U ⊗ I_k` do not increase the norm,
        /// and attain it on aligned rank-one tensors.
        #[test]
        fn orthonormal_rows_contract(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1700));
            let (n, k) = (3, 2);
            // Random 2×3 with orthonormal rows via SVD.
            let raw = DenseMatrix::from_real_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
            let svd = crate::linalg::svd(&raw).unwrap();
            let u_rows: Vec<Vec<f64>> = (0..2)
                .map(|r| (0..n).map(|c| {
                    (0..2).map(|l| svd.u[(r, l)].re * svd.v[(c, l)].re).sum()
                }).collect())
                .collect();
            let x = random_vec(n * k, &mut rng);
            // (U ⊗ I_k)x reshapes to U·M.
            let mapped: Vec<f64> = (0..2)
                .flat_map(|r| (0..k).map(|j| {
                    (0..n).map(|i| u_rows[r][i] * x[i * k + j]).sum::<f64>()
                }).collect::<Vec<f64>>())
                .collect();
            for p in [PNorm::One, PNorm::Inf] {
                let fx = tensor_norm_bruteforce(&x, n, k, p, None, Some(8)).unwrap().value;
                let fm = tensor_norm_bruteforce(&mapped, 2, k, p, None, Some(8)).unwrap().value;
                prop_assert!(fm <= fx + 1e-4, "p={p}: {fm} > {fx}");
            }

            // Alignment: u = Uᵀa ⊗ w passes through with equality.
            let a = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let w = random_vec(k, &mut rng);
            let lifted: Vec<f64> = (0..n).map(|i| u_rows[0][i] * a[0] + u_rows[1][i] * a[1]).collect();
            let x = kron(&lifted, &w);
            let mapped: Vec<f64> = (0..2)
                .flat_map(|r| (0..k).map(|j| {
                    (0..n).map(|i| u_rows[r][i] * x[i * k + j]).sum::<f64>()
                }).collect::<Vec<f64>>())
                .collect();
            let fx = tensor_norm_bruteforce(&x, n, k, PNorm::Inf, None, Some(8)).unwrap().value;
            let fm = tensor_norm_bruteforce(&mapped, 2, k, PNorm::Inf, None, Some(8)).unwrap().value;
            prop_assert!((fm - fx).abs() <= 1e-3 * (1.0 + fx), "{fm} vs {fx}");
        }

        /// Block-diagonal operators obey `‖Λu‖ ≤ maxᵢ‖Λᵢ‖_p · ‖u‖`.
        #[test]
        fn block_diagonal_operator_bound(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2600));
            let (n, k) = (3, 2);
            let blocks: Vec<DenseMatrix> = (0..n)
                .map(|_| DenseMatrix::from_real_fn(k, k, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let u = random_vec(n * k, &mut rng);
            let mut lu = vec![0.0; n * k];
            for (i, block) in blocks.iter().enumerate() {
                for row in 0..k {
                    lu[i * k + row] = (0..k).map(|c| block[(row, c)].re * u[i * k + c]).sum();
                }
            }
            for p in [PNorm::One, PNorm::Inf] {
                let gain = blocks
                    .iter()
                    .map(|b| crate::measures::operator_norm(b, p).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                let fu = tensor_norm_bruteforce(&u, n, k, p, None, None).unwrap().value;
                let flu = tensor_norm_bruteforce(&lu, n, k, p, None, Some(8)).unwrap().value;
                prop_assert!(flu <= gain * fu + 1e-4, "p={p}: {flu} > {gain}·{fu}");
            }
        }
    }
}
