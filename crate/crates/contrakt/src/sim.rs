//! Adaptive ODE integration and trajectory-level verification.
//!
//! | Operation | What it checks |
//! |-----------|----------------|
//! | [`integrate`] | embedded Dormand–Prince 5(4) solve of a [`DynSystem`] |
//! | [`coppel_verify`] | two-sided exponential sandwich on a linear flow's semi-norm |
//! | [`contraction_pairwise_check`] | `\|φ(t,x₀) − φ(t,y₀)\| ≤ e^{−ct}\|x₀ − y₀\|` on a grid |
//! | [`estimate_decay_rate`] | least-squares exponential rate of a trajectory metric |
//! | [`sync_metrics`] | blockwise average, disagreement, and pairwise distances |
//! | [`lyapunov_monitor`] | monotone decrease of a scalar functional |
//! | [`dichotomy_probe`] | bounded/unbounded classification against model metadata |
//!
//! Step acceptance controls the *error per unit step*, so the accumulated
//! defect of an integration scales linearly with the tolerance — halving
//! the tolerance (at most) halves the defect, which the verification suite
//! exploits as a convergence sanity check.
//!
//! Every integration is single-threaded and deterministic given the
//! initial condition and options; batch drivers parallelize across
//! trajectories and assemble reports in input order.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::measures::{self, MeasureError, PNorm, SemiNormSpec};
use crate::systems::{DynSystem, Equilibria};
use crate::tensor;

/// Default relative tolerance.
pub const DEFAULT_RTOL: f64 = 1e-9;

/// Default absolute tolerance.
pub const DEFAULT_ATOL: f64 = 1e-11;

/// Admissible relative-tolerance range.
pub const RTOL_RANGE: (f64, f64) = (1e-12, 1e-3);

/// Minimum number of stored samples under the default storage policy.
pub const DEFAULT_MIN_SAMPLES: usize = 200;

/// A state whose largest component exceeds this is treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Relative slack for the exponential sandwich bounds.
pub const COPPEL_SLACK_REL: f64 = 1e-6;

/// Relative slack for pairwise contraction inequalities.
pub const PAIRWISE_SLACK_REL: f64 = 1e-6;

/// Additive slack (scaled by `1 + V`) for Lyapunov monotonicity.
pub const LYAPUNOV_SLACK_REL: f64 = 1e-8;

/// Default floor below which metric samples are excluded from rate fits.
pub const RATE_FIT_FLOOR: f64 = 1e-10;

/// Final-to-initial norm ratio beyond which a trajectory is classified
/// unbounded (a finite-horizon heuristic, not a proof).
pub const UNBOUNDED_GROWTH_FACTOR: f64 = 100.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trajectory diverged at t = {t:.6e} (state norm {norm:.3e})")]
    Diverged { t: f64, norm: f64 },

    #[error("step size underflow at t = {t:.6e}")]
    StepUnderflow { t: f64 },

    #[error("step budget exhausted at t = {t:.6e}")]
    StepLimit { t: f64 },

    #[error("relative tolerance {0:.3e} outside [1e-12, 1e-3]")]
    InvalidTolerance(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("semi-norm kernel not invariant under A({t:.6e}): residual {residual:.3e}")]
    KernelNotInvariant { t: f64, residual: f64 },

    #[error("only {usable} usable samples for the rate fit (need ≥ 10)")]
    InsufficientDecay { usable: usize },

    #[error("state component {index} is {value:.3e}; logarithmic functional needs positive entries")]
    NonPositiveState { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// Reached the final time.
    Completed,
    /// The state norm exceeded [`DIVERGENCE_NORM`], turned non-finite, or
    /// entered runaway growth that collapsed the step size (the signature
    /// of a finite-time blow-up); the trajectory is truncated at the last
    /// stored sample.
    Diverged { t: f64, norm: f64 },
    /// The step size shrank below machine resolution.
    StepUnderflow { t: f64 },
    /// The step budget was exhausted before the final time.
    StepLimit { t: f64 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntegratorStats {
    pub steps: u64,
    pub rejected_steps: u64,
    pub rtol: f64,
    pub atol: f64,
}

/// Which accepted states are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorePolicy {
    /// Every accepted step (plus the initial state).
    EveryStep,
    /// Only the mandatory grid times.
    MandatoryOnly,
}

/// Integration controls. The defaults give a dense, high-accuracy solve.
#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// The maximum step is `t_final / min_samples`, so at least this many
    /// samples are stored under [`StorePolicy::EveryStep`].
    pub min_samples: usize,
    /// Times the integrator must land on exactly (sorted internally).
    pub mandatory: Vec<f64>,
    /// Replace the stored samples by a log-uniform grid of this size.
    pub log_uniform: Option<usize>,
    pub store: StorePolicy,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            min_samples: DEFAULT_MIN_SAMPLES,
            mandatory: Vec::new(),
            log_uniform: None,
            store: StorePolicy::EveryStep,
        }
    }
}

impl IntegrateOptions {
    /// Default options at a given relative tolerance (absolute = rtol/100).
    pub fn with_tol(rtol: f64) -> Self {
        IntegrateOptions {
            rtol,
            atol: rtol * 1e-2,
            ..Default::default()
        }
    }

    /// Land exactly on `times` and store only those samples.
    pub fn on_grid(mut self, times: &[f64]) -> Self {
        self.mandatory = times.to_vec();
        self.store = StorePolicy::MandatoryOnly;
        self
    }

    /// Store a log-uniform grid of `count` samples instead of every step.
    pub fn log_uniform(mut self, count: usize) -> Self {
        self.log_uniform = Some(count);
        self.store = StorePolicy::MandatoryOnly;
        self
    }
}

/// A stored solution of `ẋ = f(t, x)`: strictly increasing times, finite
/// states of constant dimension, solver statistics, and a termination
/// marker.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    stats: IntegratorStats,
    termination: Termination,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn stats(&self) -> &IntegratorStats {
        &self.stats
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory stores at least t = 0")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory stores at least x₀")
    }

    /// Index of the stored sample at time `t`, within `1e-9·(1+|t|)`.
    pub fn index_at_time(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    /// Evaluates a scalar metric at every stored sample.
    pub fn sample_metric(&self, metric: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.states.iter().map(|x| metric(x)).collect()
    }

    /// A trajectory with the same times and a transformed state (e.g.
    /// exponentiating a log-coordinate solve back to the original chart).
    pub fn map_states(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|x| f(x)).collect(),
            stats: self.stats,
            termination: self.termination,
        }
    }

    /// CSV with columns `t,x_0,…,x_{n−1}` (shortest round-trippable float
    /// formatting, so identical runs give identical bytes).
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("t");
        for j in 0..n {
            out.push_str(&format!(",x_{j}"));
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// CSV with columns `t,metric` for a sampled scalar time series.
pub fn metric_csv(times: &[f64], values: &[f64], name: &str) -> String {
    let mut out = format!("t,{name}\n");
    for (t, v) in times.iter().zip(values) {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

// Dormand–Prince 5(4) coefficients (FSAL: the last stage of an accepted
// step is the first stage of the next).
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: u64 = 5_000_000;

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Core solver over a plain closure; the public entry points wrap it.
fn integrate_core(
    f: &dyn Fn(f64, &[f64]) -> Vec<f64>,
    x0: &[f64],
    t_final: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(SimError::InvalidInput(format!(
            "final time must be positive and finite, got {t_final}"
        )));
    }
    if !(opts.rtol >= RTOL_RANGE.0 && opts.rtol <= RTOL_RANGE.1) {
        return Err(SimError::InvalidTolerance(opts.rtol));
    }
    if !(opts.atol > 0.0 && opts.atol <= 1e-3) {
        return Err(SimError::InvalidInput(format!(
            "absolute tolerance {:.3e} outside (0, 1e-3]",
            opts.atol
        )));
    }
    if x0.is_empty() {
        return Err(SimError::InvalidInput("empty initial state".into()));
    }
    if !finite(x0) {
        return Err(SimError::InvalidInput("non-finite initial state".into()));
    }

    // Assemble the mandatory grid: user times, optional log-uniform grid,
    // and the final time. Times at (or numerically at) zero are dropped —
    // the initial sample is always stored for grid-storage policies.
    let mut mandatory: Vec<f64> = opts.mandatory.clone();
    if let Some(count) = opts.log_uniform {
        let count = count.max(2);
        let t_lo = t_final * 1e-4;
        let ratio = (t_final / t_lo).ln();
        for j in 0..count {
            mandatory.push(t_lo * (ratio * j as f64 / (count - 1) as f64).exp());
        }
    }
    mandatory.push(t_final);
    mandatory.retain(|&t| t > 1e-14 * t_final);
    mandatory.sort_by(f64::total_cmp);
    mandatory.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    if mandatory.iter().any(|&t| t > t_final * (1.0 + 1e-12)) {
        return Err(SimError::InvalidInput(
            "mandatory times must lie in (0, t_final]".into(),
        ));
    }

    let n = x0.len();
    let h_max = t_final / opts.min_samples.max(1) as f64;
    let store_all = opts.store == StorePolicy::EveryStep;

    let mut times = Vec::new();
    let mut states = Vec::new();
    if store_all {
        times.push(0.0);
        states.push(x0.to_vec());
    }

    let mut t = 0.0_f64;
    let mut y = x0.to_vec();
    let mut k1 = f(t, &y);
    if k1.len() != n {
        return Err(SimError::DimensionMismatch(format!(
            "vector field returned {} components for an {n}-state",
            k1.len()
        )));
    }

    // Hairer-style initial step heuristic, capped by the density limit.
    let sc = |v: &[f64], yref: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let w = opts.atol + opts.rtol * yref[i].abs();
            s += (v[i] / w) * (v[i] / w);
        }
        (s / n as f64).sqrt()
    };
    let d0 = sc(&y, &y);
    let d1 = sc(&k1, &y);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(h_max).min(t_final);
    {
        let y1: Vec<f64> = (0..n).map(|i| y[i] + h * k1[i]).collect();
        let f1 = f(h, &y1);
        if finite(&f1) {
            let diff: Vec<f64> = (0..n).map(|i| f1[i] - k1[i]).collect();
            let d2 = sc(&diff, &y) / h;
            let dm = d1.max(d2);
            let h1 = if dm <= 1e-15 {
                (h * 1e-3).max(1e-6)
            } else {
                (0.01 / dm).powf(0.2)
            };
            h = (100.0 * h).min(h1).min(h_max).min(t_final);
        }
    }

    let mut stats = IntegratorStats {
        steps: 0,
        rejected_steps: 0,
        rtol: opts.rtol,
        atol: opts.atol,
    };
    let mut next_mand = 0usize;
    let mut termination = Termination::Completed;
    let mut k = vec![vec![0.0_f64; n]; 7];
    let initial_norm = max_abs(x0);
    let mut prev_norm = initial_norm;
    let mut just_rejected = false;

    'outer: while t < t_final * (1.0 - 1e-14) {
        if stats.steps >= MAX_STEPS {
            termination = Termination::StepLimit { t };
            break;
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            termination = Termination::StepUnderflow { t };
            break;
        }
        // The controller's desired step; clipping for output times must
        // not feed back into step-size control or blow-up detection.
        let h_des = h.min(h_max);
        let mut h_step = h_des.min(t_final - t);
        // Land exactly on the next mandatory time.
        let mut hit_mandatory = false;
        if next_mand < mandatory.len() {
            let tm = mandatory[next_mand];
            if t + h_step >= tm - 1e-12 * (1.0 + tm.abs()) {
                h_step = tm - t;
                hit_mandatory = true;
            }
        }
        let output_clipped = h_step < 0.5 * h_des;

        k[0].copy_from_slice(&k1);
        let stage = |k: &[Vec<f64>], coeffs: &[f64], y: &[f64], h: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for (a, ks) in coeffs.iter().zip(k) {
                        acc += a * ks[i];
                    }
                    y[i] + h * acc
                })
                .collect()
        };
        k[1] = f(t + C[1] * h_step, &stage(&k[..1], &A2, &y, h_step));
        k[2] = f(t + C[2] * h_step, &stage(&k[..2], &A3, &y, h_step));
        k[3] = f(t + C[3] * h_step, &stage(&k[..3], &A4, &y, h_step));
        k[4] = f(t + C[4] * h_step, &stage(&k[..4], &A5, &y, h_step));
        k[5] = f(t + C[5] * h_step, &stage(&k[..5], &A6, &y, h_step));
        let y5: Vec<f64> = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (b, ks) in B5.iter().zip(&*k) {
                    acc += b * ks[i];
                }
                y[i] + h_step * acc
            })
            .collect();
        if !finite(&y5) || k.iter().any(|ks| !finite(ks)) {
            termination = Termination::Diverged {
                t,
                norm: f64::INFINITY,
            };
            break;
        }
        k[6] = f(t + h_step, &y5);
        if !finite(&k[6]) {
            termination = Termination::Diverged {
                t,
                norm: f64::INFINITY,
            };
            break;
        }

        // Scaled RMS of the 5th/4th-order difference, per unit step.
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for j in 0..7 {
                e += (B5[j] - B4[j]) * k[j][i];
            }
            e *= h_step;
            let w = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            err += (e / w) * (e / w);
        }
        let err = (err / n as f64).sqrt();
        let q = err / h_step;

        if q <= 1.0 {
            stats.steps += 1;
            t += h_step;
            y = y5;
            std::mem::swap(&mut k1, &mut k[6]);
            let norm = max_abs(&y);
            if norm > DIVERGENCE_NORM {
                termination = Termination::Diverged { t, norm };
                break 'outer;
            }
            // Finite-time blow-up signature: the state keeps growing while
            // the accuracy-driven step collapses far below the requested
            // resolution. Near a pole, waiting for the hard norm threshold
            // would take astronomically many steps.
            if h_des < 1e-4 * h_max && norm > 1e3 * (1.0 + initial_norm) && norm > prev_norm {
                termination = Termination::Diverged { t, norm };
                break 'outer;
            }
            prev_norm = norm;
            let is_mandatory = hit_mandatory && {
                next_mand += 1;
                true
            };
            if store_all || is_mandatory {
                times.push(t);
                states.push(y.clone());
            }
            let grow = if just_rejected && q > 0.0 {
                // Standard post-rejection caution: no growth right after.
                1.0_f64.min(0.9 * q.powf(-0.25)).max(0.2)
            } else if q > 0.0 {
                (0.9 * q.powf(-0.25)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = if output_clipped {
                // A step shortened only to land on an output time carries
                // no step-size information; resume from the desired step.
                h_des
            } else {
                h_step * grow
            };
            just_rejected = false;
        } else {
            stats.rejected_steps += 1;
            stats.steps += 1;
            just_rejected = true;
            h = h_step * (0.9 * q.powf(-0.25)).clamp(0.1, 0.9);
        }
    }

    if times.is_empty() || times[0] != 0.0 {
        times.insert(0, 0.0);
        states.insert(0, x0.to_vec());
    }
    Ok(Trajectory {
        times,
        states,
        stats,
        termination,
    })
}

/// Integrates `ẋ = f(t, x)` from `x₀` to `t_final`.
///
/// # Errors
/// [`SimError::Diverged`] when the state norm passes 1e12 or turns
/// non-finite; [`SimError::StepUnderflow`]; [`SimError::InvalidTolerance`]
/// for a relative tolerance outside `[1e-12, 1e-3]`.
pub fn integrate(
    sys: &DynSystem,
    x0: &[f64],
    t_final: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let traj = integrate_allowing_divergence(sys, x0, t_final, opts)?;
    match traj.termination {
        Termination::Completed => Ok(traj),
        Termination::Diverged { t, norm } => Err(SimError::Diverged { t, norm }),
        Termination::StepUnderflow { t } => Err(SimError::StepUnderflow { t }),
        Termination::StepLimit { t } => Err(SimError::StepLimit { t }),
    }
}

/// Like [`integrate`], but an abnormal end is reported through the
/// trajectory's [`Termination`] marker (truncated at the last finite
/// sample) instead of an error — the form the dichotomy probe needs.
pub fn integrate_allowing_divergence(
    sys: &DynSystem,
    x0: &[f64],
    t_final: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if x0.len() != sys.dim() {
        return Err(SimError::DimensionMismatch(format!(
            "initial state has {} components, system has dimension {}",
            x0.len(),
            sys.dim()
        )));
    }
    integrate_core(&|t, x| sys.f(t, x), x0, t_final, opts)
}

/// Largest drift `max_t |q(x(t)) − q(x(0))|` of a scalar functional along
/// a trajectory — zero, up to integration error, for conserved quantities.
pub fn conservation_defect(traj: &Trajectory, q: impl Fn(&[f64]) -> f64) -> f64 {
    let q0 = q(&traj.states[0]);
    traj.states
        .iter()
        .map(|x| (q(x) - q0).abs())
        .fold(0.0, f64::max)
}

/// Report of a two-sided exponential sandwich check on `ẋ = A(t)x`:
/// `exp(−∫₀ᵗ μ(−A)) · |x₀| ≤ |x(t)| ≤ exp(∫₀ᵗ μ(A)) · |x₀|` in the given
/// (semi-)norm, with slack `1e-6·(1+bound)` per side.
#[derive(Debug, Clone, Serialize)]
pub struct CoppelReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `max_t (value − upper − slack)`; ≤ 0 when the upper bound holds.
    pub upper_violation: f64,
    /// `max_t (lower − slack − value)`; ≤ 0 when the lower bound holds.
    pub lower_violation: f64,
    /// `max_t |upper − value|` — the tightness gap (integration +
    /// quadrature error when the bound is an equality, as for scalar
    /// systems).
    pub upper_gap: f64,
    pub lower_gap: f64,
    pub ok: bool,
    pub kernel_residual: f64,
}

// 5-point Gauss–Legendre nodes and weights on [−1, 1].
const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_08,
];

/// Verifies the exponential sandwich for the linear flow `ẋ = A(t)x`
/// against the (semi-)norm `s` at the grid times.
///
/// The measure integrals `∫μ(±A)` are accumulated by 5-point Gauss
/// quadrature on each grid interval, so for smooth `t ↦ A(t)` the bounds
/// are quadrature-exact at the slack scale.
///
/// # Errors
/// [`SimError::KernelNotInvariant`] when `Ker s` fails to be `A(t)`-
/// invariant at some grid time; [`SimError::InvalidInput`] for an empty or
/// non-increasing grid.
pub fn coppel_verify(
    a_map: &dyn Fn(f64) -> DenseMatrix,
    s: &SemiNormSpec,
    x0: &[f64],
    t_grid: &[f64],
    opts: &IntegrateOptions,
) -> Result<CoppelReport> {
    if t_grid.is_empty() {
        return Err(SimError::InvalidInput("empty time grid".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] < 0.0 {
        return Err(SimError::InvalidInput(
            "grid times must be nonnegative and strictly increasing".into(),
        ));
    }
    let n = x0.len();
    let mut grid: Vec<f64> = Vec::with_capacity(t_grid.len() + 1);
    if t_grid[0] > 0.0 {
        grid.push(0.0);
    }
    grid.extend_from_slice(t_grid);
    let t_final = *grid.last().expect("nonempty");
    if !(t_final > 0.0) {
        return Err(SimError::InvalidInput(
            "grid must extend past t = 0".into(),
        ));
    }

    // Kernel invariance of the semi-norm under A(t) at every grid time.
    let kernel = s.kernel_basis().to_vec();
    let mut kernel_residual = 0.0_f64;
    for &tg in &grid {
        let a = a_map(tg);
        if a.rows() != n || a.cols() != n {
            return Err(SimError::DimensionMismatch(format!(
                "A({tg}) is {}×{}, state has dimension {n}",
                a.rows(),
                a.cols()
            )));
        }
        let residual = measures::invariance_residual(&a, &kernel)?;
        kernel_residual = kernel_residual.max(residual);
        if residual > measures::INVARIANCE_TOL {
            return Err(SimError::KernelNotInvariant { t: tg, residual });
        }
    }

    // Integrate the flow, landing exactly on the grid.
    let field = |t: f64, x: &[f64]| -> Vec<f64> {
        let a = a_map(t);
        (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)].re * x[j]).sum())
            .collect()
    };
    let run_opts = opts.clone().on_grid(&grid);
    let traj = integrate_core(&field, x0, t_final, &run_opts)?;
    match traj.termination {
        Termination::Completed => {}
        Termination::Diverged { t, norm } => return Err(SimError::Diverged { t, norm }),
        Termination::StepUnderflow { t } => return Err(SimError::StepUnderflow { t }),
        Termination::StepLimit { t } => return Err(SimError::StepLimit { t }),
    }

    // Cumulative ∫μ(A) and ∫μ(−A) at the grid times.
    let mu_of = |t: f64, negate: bool| -> Result<f64> {
        let mut a = a_map(t);
        if negate {
            a = a.scale(Complex64::new(-1.0, 0.0));
        }
        Ok(measures::semi_measure(&a, s)?.value)
    };
    let mut int_plus = vec![0.0_f64; grid.len()];
    let mut int_minus = vec![0.0_f64; grid.len()];
    for j in 1..grid.len() {
        let (lo, hi) = (grid[j - 1], grid[j]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc_p = 0.0;
        let mut acc_m = 0.0;
        for (node, w) in GAUSS_NODES.iter().zip(&GAUSS_WEIGHTS) {
            let ts = mid + half * node;
            acc_p += w * mu_of(ts, false)?;
            acc_m += w * mu_of(ts, true)?;
        }
        int_plus[j] = int_plus[j - 1] + half * acc_p;
        int_minus[j] = int_minus[j - 1] + half * acc_m;
    }

    let value0 = s.apply_real(x0)?;
    let mut values = Vec::with_capacity(grid.len());
    for &tg in &grid {
        let idx = traj.index_at_time(tg).ok_or_else(|| {
            SimError::InvalidInput(format!("integrator did not store t = {tg}"))
        })?;
        values.push(s.apply_real(&traj.states[idx])?);
    }
    let upper: Vec<f64> = int_plus.iter().map(|i| i.exp() * value0).collect();
    let lower: Vec<f64> = int_minus.iter().map(|i| (-i).exp() * value0).collect();

    let mut upper_violation = f64::NEG_INFINITY;
    let mut lower_violation = f64::NEG_INFINITY;
    let mut upper_gap = 0.0_f64;
    let mut lower_gap = 0.0_f64;
    for j in 0..grid.len() {
        let su = COPPEL_SLACK_REL * (1.0 + upper[j]);
        let sl = COPPEL_SLACK_REL * (1.0 + lower[j]);
        upper_violation = upper_violation.max(values[j] - upper[j] - su);
        lower_violation = lower_violation.max(lower[j] - sl - values[j]);
        upper_gap = upper_gap.max((upper[j] - values[j]).abs());
        lower_gap = lower_gap.max((values[j] - lower[j]).abs());
    }
    let ok = upper_violation <= 0.0 && lower_violation <= 0.0;
    Ok(CoppelReport {
        times: grid,
        values,
        lower,
        upper,
        upper_violation,
        lower_violation,
        upper_gap,
        lower_gap,
        ok,
        kernel_residual,
    })
}

/// Report of a pairwise trajectory-contraction check.
#[derive(Debug, Clone, Serialize)]
pub struct PairwiseReport {
    pub times: Vec<f64>,
    /// `|φ(t,x₀) − φ(t,y₀)|` in the chosen metric.
    pub distances: Vec<f64>,
    /// `e^{−ct} · |x₀ − y₀|`.
    pub bounds: Vec<f64>,
    /// `max_t (distance − bound − slack)`; ≤ 0 when the inequality holds.
    pub max_violation: f64,
    pub ok: bool,
    /// True when the metric is a computable upper bound rather than the
    /// exact norm, making this a bound-level (one-sided) verification.
    pub bound_level: bool,
}

/// Checks `metric(φ(t,x₀) − φ(t,y₀)) ≤ e^{−ct} · metric(x₀ − y₀)` at the
/// grid times, with relative slack `1e-6`. `c = 0` is the non-expansive
/// (weak-contraction) form.
pub fn contraction_pairwise_metric_check(
    sys: &DynSystem,
    x0: &[f64],
    y0: &[f64],
    metric: &dyn Fn(&[f64]) -> Result<f64>,
    c: f64,
    t_grid: &[f64],
    opts: &IntegrateOptions,
    bound_level: bool,
) -> Result<PairwiseReport> {
    if x0.len() != y0.len() {
        return Err(SimError::DimensionMismatch(format!(
            "initial states have lengths {} and {}",
            x0.len(),
            y0.len()
        )));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] < 0.0 {
        return Err(SimError::InvalidInput(
            "grid times must be nonnegative and strictly increasing".into(),
        ));
    }
    let t_final = *t_grid.last().expect("nonempty");
    let run_opts = opts.clone().on_grid(t_grid);
    let ta = integrate(sys, x0, t_final, &run_opts)?;
    let tb = integrate(sys, y0, t_final, &run_opts)?;

    let d0: Vec<f64> = x0.iter().zip(y0).map(|(a, b)| a - b).collect();
    let m0 = metric(&d0)?;
    let mut times = Vec::with_capacity(t_grid.len() + 1);
    let mut distances = Vec::new();
    let mut bounds = Vec::new();
    let mut max_violation = f64::NEG_INFINITY;
    let grid_with_zero: Vec<f64> = if t_grid[0] > 0.0 {
        std::iter::once(0.0).chain(t_grid.iter().copied()).collect()
    } else {
        t_grid.to_vec()
    };
    for &tg in &grid_with_zero {
        let (ia, ib) = match (ta.index_at_time(tg), tb.index_at_time(tg)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(SimError::InvalidInput(format!(
                    "integrator did not store t = {tg}"
                )))
            }
        };
        let d: Vec<f64> = ta.states[ia]
            .iter()
            .zip(&tb.states[ib])
            .map(|(a, b)| a - b)
            .collect();
        let dist = metric(&d)?;
        let bound = (-c * tg).exp() * m0;
        max_violation = max_violation.max(dist - bound - PAIRWISE_SLACK_REL * (1.0 + bound));
        times.push(tg);
        distances.push(dist);
        bounds.push(bound);
    }
    Ok(PairwiseReport {
        times,
        distances,
        bounds,
        max_violation,
        ok: max_violation <= 0.0,
        bound_level,
    })
}

/// [`contraction_pairwise_metric_check`] with the metric given by a
/// (semi-)norm specification — the exact trajectory-level inequality of a
/// semi-contraction certificate.
pub fn contraction_pairwise_check(
    sys: &DynSystem,
    x0: &[f64],
    y0: &[f64],
    s: &SemiNormSpec,
    c: f64,
    t_grid: &[f64],
    opts: &IntegrateOptions,
) -> Result<PairwiseReport> {
    let metric = |d: &[f64]| -> Result<f64> { Ok(s.apply_real(d)?) };
    contraction_pairwise_metric_check(sys, x0, y0, &metric, c, t_grid, opts, false)
}

/// A computable upper bound for the coupled-network pair metric: the
/// difference vector is weighted by `R ⊗ Q`, reshaped to an
/// `(R-rows)×(Q-rows)` matrix, and priced by the search-based tensor-norm
/// bound (falling back to the factorization upper bound in high
/// dimension). Checks built on it are bound-level by construction.
pub fn tensor_pair_metric<'a>(
    r: &'a DenseMatrix,
    q: &'a DenseMatrix,
    p: PNorm,
    restarts: usize,
) -> impl Fn(&[f64]) -> Result<f64> + Sync + 'a {
    move |d: &[f64]| {
        let n = r.cols();
        let k = q.cols();
        if d.len() != n * k {
            return Err(SimError::DimensionMismatch(format!(
                "difference has {} components, expected {}",
                d.len(),
                n * k
            )));
        }
        // W = R · M · Qᵀ where M is the n×k reshaping of d.
        let rr = r.rows();
        let qr = q.rows();
        let mut w = vec![0.0; rr * qr];
        for a in 0..rr {
            for b in 0..qr {
                let mut acc = 0.0;
                for i in 0..n {
                    let ra = r[(a, i)].re;
                    if ra == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        acc += ra * q[(b, j)].re * d[i * k + j];
                    }
                }
                w[a * qr + b] = acc;
            }
        }
        if rr * qr <= tensor::BRUTEFORCE_MAX_DIM {
            Ok(tensor::tensor_norm_bruteforce(&w, rr, qr, p, None, Some(restarts))
                .map_err(|e| SimError::InvalidInput(e.to_string()))?
                .value)
        } else {
            let rep = tensor::TensorRepresentation::from_reshaped_svd(&w, rr, qr)
                .map_err(|e| SimError::InvalidInput(e.to_string()))?;
            tensor::tensor_norm_upper(&w, &rep, p).map_err(|e| SimError::InvalidInput(e.to_string()))
        }
    }
}

/// An exponential-rate fit `metric(t) ≈ C e^{−rate·t}` on the stored
/// samples inside the fitting window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    /// Positive for decay (the fit is of `−d log metric / dt`).
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub floor: f64,
}

/// Least-squares exponential rate of a positive time series.
///
/// The window keeps samples with value in `[floor, cutoff]` where the
/// cutoff discards the initial transient: at least one decade below the
/// initial value and the first 20% of the available decades. Fitting stops
/// at the first sample below the floor (later samples sit in the numerical
/// noise).
///
/// # Errors
/// [`SimError::InsufficientDecay`] with fewer than 10 usable samples.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], floor: Option<f64>) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(SimError::DimensionMismatch(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    let floor = floor.unwrap_or(RATE_FIT_FLOOR);
    let m0 = values.first().copied().unwrap_or(0.0);
    if !(m0 > floor) {
        return Err(SimError::InsufficientDecay { usable: 0 });
    }
    let decades = (m0 / floor).log10();
    let cutoff = (0.1 * m0).min(m0 * 10f64.powf(-0.2 * decades));

    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if v < floor {
            break;
        }
        if v <= cutoff {
            ts.push(t);
            logs.push(v.ln());
        }
    }
    if ts.len() < 10 {
        return Err(SimError::InsufficientDecay { usable: ts.len() });
    }
    let n = ts.len() as f64;
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_l = logs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stl = 0.0;
    let mut sll = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        stt += (t - mean_t) * (t - mean_t);
        stl += (t - mean_t) * (l - mean_l);
        sll += (l - mean_l) * (l - mean_l);
    }
    if stt == 0.0 {
        return Err(SimError::InsufficientDecay { usable: ts.len() });
    }
    let slope = stl / stt;
    let r_squared = if sll == 0.0 {
        1.0
    } else {
        ((stl * stl) / (stt * sll)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        rate: -slope,
        r_squared,
        window: (ts[0], *ts.last().expect("nonempty")),
        floor,
    })
}

/// [`fit_exponential_rate`] over a metric evaluated along a trajectory.
pub fn estimate_decay_rate(
    traj: &Trajectory,
    metric: impl Fn(&[f64]) -> f64,
    floor: Option<f64>,
) -> Result<RateFit> {
    let values = traj.sample_metric(metric);
    fit_exponential_rate(&traj.times, &values, floor)
}

/// Synchronization diagnostics for a stacked state of `n` blocks of size
/// `k`: the blockwise average `x_ave(t)`, the disagreement
/// `‖x − 1ₙ⊗x_ave‖₂`, and every pairwise distance `‖x_i − x_j‖₂`.
#[derive(Debug, Clone, Serialize)]
pub struct SyncMetrics {
    pub times: Vec<f64>,
    pub average: Vec<Vec<f64>>,
    pub disagreement: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    /// `pairwise[m][q]` is `‖x_i − x_j‖₂` at time `m` for `pairs[q] = (i, j)`.
    pub pairwise: Vec<Vec<f64>>,
}

pub fn sync_metrics(traj: &Trajectory, n: usize, k: usize) -> Result<SyncMetrics> {
    if traj.dim() != n * k || n == 0 || k == 0 {
        return Err(SimError::DimensionMismatch(format!(
            "trajectory dimension {} is not {n}×{k}",
            traj.dim()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let mut average = Vec::with_capacity(traj.len());
    let mut disagreement = Vec::with_capacity(traj.len());
    let mut pairwise = Vec::with_capacity(traj.len());
    for x in &traj.states {
        let mut ave = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                ave[c] += x[i * k + c] / n as f64;
            }
        }
        let mut dis = 0.0;
        for i in 0..n {
            for c in 0..k {
                let d = x[i * k + c] - ave[c];
                dis += d * d;
            }
        }
        let row: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| {
                (0..k)
                    .map(|c| {
                        let d = x[i * k + c] - x[j * k + c];
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        average.push(ave);
        disagreement.push(dis.sqrt());
        pairwise.push(row);
    }
    Ok(SyncMetrics {
        times: traj.times.clone(),
        average,
        disagreement,
        pairs,
        pairwise,
    })
}

/// Report of a monotone-decrease check on a scalar functional.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `max_m (V(t_{m+1}) − V(t_m) − slack)`; ≤ 0 when nonincreasing.
    pub max_increase: f64,
    pub ok: bool,
}

fn monotonicity_report(times: Vec<f64>, values: Vec<f64>) -> LyapunovReport {
    let mut max_increase = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let slack = LYAPUNOV_SLACK_REL * (1.0 + w[0].abs());
        max_increase = max_increase.max(w[1] - w[0] - slack);
    }
    if !max_increase.is_finite() {
        max_increase = 0.0;
    }
    let ok = max_increase <= 0.0;
    LyapunovReport {
        times,
        values,
        max_increase,
        ok,
    }
}

/// Asserts `V(x(t_{m+1})) ≤ V(x(t_m)) + 1e-8·(1+V)` over consecutive
/// stored samples.
pub fn lyapunov_monitor(
    traj: &Trajectory,
    v: impl Fn(&[f64]) -> Result<f64>,
) -> Result<LyapunovReport> {
    let mut values = Vec::with_capacity(traj.len());
    for x in &traj.states {
        values.push(v(x)?);
    }
    Ok(monotonicity_report(traj.times.clone(), values))
}

/// Monotonicity of a two-trajectory functional `d(x(t), z(t))` (e.g. a
/// contraction distance). The trajectories must share their sample times.
pub fn lyapunov_pair_monitor(
    ta: &Trajectory,
    tb: &Trajectory,
    d: impl Fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<LyapunovReport> {
    if ta.len() != tb.len()
        || ta
            .times
            .iter()
            .zip(&tb.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
    {
        return Err(SimError::InvalidInput(
            "trajectories must share their sample times (use a common grid)".into(),
        ));
    }
    let mut values = Vec::with_capacity(ta.len());
    for (x, z) in ta.states.iter().zip(&tb.states) {
        values.push(d(x, z)?);
    }
    Ok(monotonicity_report(ta.times.clone(), values))
}

fn positive_logs(x: &[f64]) -> Result<Vec<f64>> {
    x.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok(value.ln())
            } else {
                Err(SimError::NonPositiveState { index, value })
            }
        })
        .collect()
}

/// Weighted logarithmic distance `d(x, z) = Σᵢ vᵢ |ln(xᵢ/zᵢ)|` between two
/// positive states — contracting for cooperative population models.
pub fn lv_distance(weights: &[f64]) -> impl Fn(&[f64], &[f64]) -> Result<f64> + '_ {
    move |x, z| {
        let lx = positive_logs(x)?;
        let lz = positive_logs(z)?;
        Ok(weights
            .iter()
            .zip(lx.iter().zip(&lz))
            .map(|(w, (a, b))| w * (a - b).abs())
            .sum())
    }
}

/// `V₁(x) = Σᵢ vᵢ |ln(xᵢ/x*ᵢ)|` — distance to the equilibrium in the
/// logarithmic chart.
pub fn lv_v1<'a>(
    weights: &'a [f64],
    x_star: &'a [f64],
) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |x| {
        let lx = positive_logs(x)?;
        let ls = positive_logs(x_star)?;
        Ok(weights
            .iter()
            .zip(lx.iter().zip(&ls))
            .map(|(w, (a, b))| w * (a - b).abs())
            .sum())
    }
}

/// `V₂(x) = Σᵢ vᵢ |(Ax + r)ᵢ|` — the weighted per-capita growth residual.
pub fn lv_v2<'a>(
    weights: &'a [f64],
    a: &'a DenseMatrix,
    r: &'a [f64],
) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |x| {
        let n = x.len();
        let mut total = 0.0;
        for i in 0..n {
            let mut acc = r[i];
            for j in 0..n {
                acc += a[(i, j)].re * x[j];
            }
            total += weights[i] * acc.abs();
        }
        Ok(total)
    }
}

/// Finite-horizon classification of one trajectory.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TrajectoryClass {
    Bounded {
        final_norm: f64,
    },
    /// Final norm above 100× the initial norm and still growing, or an
    /// outright divergence marker.
    Unbounded {
        growth: f64,
        diverged: bool,
    },
}

/// Boundedness probe for a family of initial conditions.
#[derive(Debug, Clone, Serialize)]
pub struct DichotomyReport {
    pub classes: Vec<TrajectoryClass>,
    /// Whether the classification agrees with the model's equilibrium
    /// metadata (`None` when the model asserts nothing).
    pub metadata_consistent: Option<bool>,
    /// The probe is a finite-horizon heuristic, recorded explicitly.
    pub caveat: String,
}

/// Integrates each initial condition (in parallel, reported in input
/// order) and classifies the outcome as bounded or unbounded, cross-
/// checking against the model's equilibrium metadata: a model that
/// asserts every trajectory unbounded should produce only unbounded
/// classes, and a model with known equilibria only bounded ones.
pub fn dichotomy_probe(
    sys: &DynSystem,
    x0_list: &[Vec<f64>],
    t_final: f64,
    opts: &IntegrateOptions,
) -> Result<DichotomyReport> {
    let runs: Vec<Result<TrajectoryClass>> = x0_list
        .par_iter()
        .map(|x0| {
            let traj = integrate_allowing_divergence(sys, x0, t_final, opts)?;
            let initial = max_abs(x0).max(1e-12);
            let final_norm = max_abs(traj.final_state());
            let diverged = matches!(traj.termination(), Termination::Diverged { .. });
            // "Still growing": compare against the norm at ~90% of the run.
            let idx_late = (traj.len() * 9) / 10;
            let late_norm = max_abs(&traj.states[idx_late.min(traj.len() - 1)]);
            let growing = final_norm > 1.02 * late_norm.min(final_norm * 0.999_999);
            let growth = final_norm / initial;
            if diverged || (growth > UNBOUNDED_GROWTH_FACTOR && growing) {
                Ok(TrajectoryClass::Unbounded { growth, diverged })
            } else {
                Ok(TrajectoryClass::Bounded { final_norm })
            }
        })
        .collect();
    let mut classes = Vec::with_capacity(runs.len());
    for r in runs {
        classes.push(r?);
    }
    let metadata_consistent = match sys.known_equilibria() {
        Equilibria::Unspecified => None,
        Equilibria::AllUnbounded => Some(
            classes
                .iter()
                .all(|c| matches!(c, TrajectoryClass::Unbounded { .. })),
        ),
        Equilibria::Point(_) | Equilibria::AffineSet { .. } => Some(
            classes
                .iter()
                .all(|c| matches!(c, TrajectoryClass::Bounded { .. })),
        ),
    };
    Ok(DichotomyReport {
        classes,
        metadata_consistent,
        caveat: format!(
            "finite-horizon heuristic: growth beyond {UNBOUNDED_GROWTH_FACTOR}× the initial norm \
             with a rising tail is reported as unbounded; no finite simulation proves divergence"
        ),
    })
}
