//! Configuration-driven dispatch: every CLI invocation lowers to a
//! [`RunConfig`], and [`execute`] turns a `RunConfig` into stdout JSON,
//! optional artifacts, and an [`Outcome`].
//!
//! Output contract:
//!
//! | command    | stdout                          | `out` artifact               |
//! |------------|---------------------------------|------------------------------|
//! | `measure`  | `{manifest, result}` JSON       | same JSON                    |
//! | `certify`  | `{manifest, result}` JSON       | same JSON                    |
//! | `simulate` | `{manifest, result}` JSON       | CSV + `.manifest.json`       |
//! | `verify`   | `{manifest, result}` JSON       | same JSON                    |
//! | `sync`     | `{manifest, result}` JSON       | same JSON                    |
//! | `report`   | `{manifest, result}` JSON       | directory of JSON + CSVs     |
//!
//! The manifest echoes the full resolved configuration, so a printed run
//! can be replayed bit-for-bit with `run --config`. All maps are ordered
//! and the float formatter is deterministic, so equal configurations give
//! byte-identical output.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use contrakt::certify::{self, Certificate, DomainSampler};
use contrakt::graph::{self, LaplacianBundle, WeightedDigraph};
use contrakt::linalg::{self, DenseMatrix};
use contrakt::measures::{self, PNorm, SemiNormSpec};
use contrakt::sim::{self, IntegrateOptions, SimError};
use contrakt::systems::{self, DynSystem, Equilibria, SystemConfig};

/// Any failure that maps to exit code 2. Every variant renders as a
/// single line.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Linalg(#[from] linalg::LinalgError),
    #[error("{0}")]
    Graph(#[from] graph::GraphError),
    #[error("{0}")]
    Measure(#[from] measures::MeasureError),
    #[error("{0}")]
    Systems(#[from] systems::SystemsError),
    #[error("{0}")]
    Sim(#[from] SimError),
    #[error("{0}")]
    Certify(#[from] certify::CertifyError),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

/// How the run ended when no error occurred: `Refuted` maps to exit 1
/// (a certificate was refuted or a trajectory inequality was violated).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Refuted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Measure,
    Certify,
    Simulate,
    Verify,
    Sync,
    Report,
}

/// The file-format mirror of a CLI invocation. Unknown keys are rejected
/// so a typo cannot silently change a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Parses a [`RunConfig`] from a JSON file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    read_json(path)
}

// ---------------------------------------------------------------------------
// Typed access to params and inputs with unknown-key rejection
// ---------------------------------------------------------------------------

struct Params<'a> {
    map: &'a BTreeMap<String, serde_json::Value>,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Params<'a> {
    fn new(map: &'a BTreeMap<String, serde_json::Value>) -> Self {
        Params {
            map,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn opt<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.used.borrow_mut().insert(key.to_string());
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| input_err(format!("parameter {key:?}: {e}"))),
        }
    }

    fn require<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        self.opt(key)?
            .ok_or_else(|| input_err(format!("missing parameter {key:?}")))
    }

    fn or<T: DeserializeOwned>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    /// A norm exponent, accepted as a string (`"1"`, `"2"`, `"inf"`,
    /// `"2.5"`) or a bare number.
    fn p_norm(&self, key: &str, default: PNorm) -> Result<PNorm> {
        match self.opt::<serde_json::Value>(key)? {
            None => Ok(default),
            Some(serde_json::Value::String(s)) => Ok(PNorm::parse(&s)?),
            Some(serde_json::Value::Number(n)) => {
                let v = n
                    .as_f64()
                    .ok_or_else(|| input_err(format!("parameter {key:?}: not a finite number")))?;
                Ok(PNorm::from_f64(v)?)
            }
            Some(other) => Err(input_err(format!(
                "parameter {key:?}: expected a norm exponent, got {other}"
            ))),
        }
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .map
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(input_err(format!(
                "unrecognized or unused parameter(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

struct Inputs<'a> {
    map: &'a BTreeMap<String, PathBuf>,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Inputs<'a> {
    fn new(map: &'a BTreeMap<String, PathBuf>) -> Self {
        Inputs {
            map,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn opt(&self, key: &str) -> Option<&'a Path> {
        self.used.borrow_mut().insert(key.to_string());
        self.map.get(key).map(PathBuf::as_path)
    }

    fn require(&self, key: &str) -> Result<&'a Path> {
        self.opt(key)
            .ok_or_else(|| input_err(format!("missing input {key:?}")))
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .map
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(input_err(format!(
                "unrecognized or unused input(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = read_json(path)?;
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    DenseMatrix::from_real_rows(&refs)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    read_json(path)
}

fn load_system(path: &Path) -> Result<(SystemConfig, DynSystem)> {
    let cfg: SystemConfig = read_json(path)?;
    let sys = systems::from_config(&cfg)?;
    Ok((cfg, sys))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn pretty(value: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn seminorm_from(p: PNorm, weight: Option<DenseMatrix>) -> Result<SemiNormSpec> {
    Ok(match weight {
        Some(r) => SemiNormSpec::weighted(p, r)?,
        None => SemiNormSpec::plain(p),
    })
}

/// Strictly increasing output grid `t_final/steps, …, t_final`.
fn time_grid(t_final: f64, steps: usize) -> Result<Vec<f64>> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(input_err(format!(
            "t_final must be positive and finite, got {t_final}"
        )));
    }
    if steps == 0 {
        return Err(input_err("grid_steps must be positive"));
    }
    Ok((1..=steps)
        .map(|i| t_final * i as f64 / steps as f64)
        .collect())
}

/// gnuplot script plotting columns 2..=`cols` of a headered CSV.
fn gnuplot_script(csv_name: &str, cols: usize, ylabel: &str, logscale: bool) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator \",\"\n");
    s.push_str("set xlabel \"t\"\n");
    s.push_str(&format!("set ylabel \"{ylabel}\"\n"));
    if logscale {
        s.push_str("set logscale y\n");
    }
    s.push_str("set key outside\n");
    s.push_str(&format!(
        "plot for [i=2:{cols}] \"{csv_name}\" using 1:i with lines title columnheader(i)\n"
    ));
    s
}

fn csv_file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

// ---------------------------------------------------------------------------
// Shared certificate plumbing
// ---------------------------------------------------------------------------

fn sampler_from_params(params: &Params, seed: u64) -> Result<DomainSampler> {
    let lo: Vec<f64> = params.require("box_lo")?;
    let hi: Vec<f64> = params.require("box_hi")?;
    let mut d = DomainSampler::new(lo, hi)?.with_seed(seed);
    if let Some(g) = params.opt::<usize>("grid")? {
        d = d.with_grid_per_dim(g);
    }
    if let Some(r) = params.opt::<usize>("random")? {
        d = d.with_random_count(r);
    }
    if let Some(times) = params.opt::<Vec<f64>>("times")? {
        if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
            return Err(input_err("times must be a nonempty list of finite values"));
        }
        d = d.with_time_samples(times);
    }
    Ok(d)
}

fn certificate_outcome(cert: &Certificate) -> Outcome {
    if cert.certified() {
        Outcome::Success
    } else {
        Outcome::Refuted
    }
}

/// λ₂ for the sync commands: an explicit value wins; otherwise it is
/// computed from a connected undirected graph.
fn resolve_lambda2(
    params: &Params,
    inputs: &Inputs,
    key: &str,
) -> Result<(f64, Option<String>)> {
    if let Some(v) = params.opt::<f64>("lambda2")? {
        if !(v.is_finite()) {
            return Err(input_err(format!("lambda2 must be finite, got {v}")));
        }
        return Ok((v, None));
    }
    let Some(path) = inputs.opt(key) else {
        return Err(input_err(
            "provide either the lambda2 parameter or a graph input",
        ));
    };
    let g: WeightedDigraph = read_json(path)?;
    let bundle = LaplacianBundle::analyze(&g)?;
    let lambda2 = bundle.lambda2.ok_or_else(|| {
        input_err(
            "the graph has no algebraic connectivity (it is directed); \
             pass lambda2 explicitly",
        )
    })?;
    Ok((
        lambda2,
        Some(format!(
            "lambda2 = {lambda2} computed from the coupling graph"
        )),
    ))
}

/// The equilibrium structure `(x*, directions)` a doubly-contracting
/// analysis needs, taken from the model's metadata.
fn equilibrium_structure(sys: &DynSystem) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    match sys.known_equilibria() {
        Equilibria::Point(p) => Ok((p.clone(), Vec::new())),
        Equilibria::AffineSet { base, directions } => Ok((base.clone(), directions.clone())),
        Equilibria::AllUnbounded => Err(input_err(
            "the model declares every trajectory unbounded; there is no \
             equilibrium set to contract to",
        )),
        Equilibria::Unspecified => Err(input_err(
            "the model does not declare its equilibrium set; a \
             doubly-contracting analysis needs one",
        )),
    }
}

/// Builds the semi-norm weight for the equilibrium subspace from the
/// Jacobian at `x*`, at reduction accuracy `epsilon`.
fn auto_semi_weight(
    sys: &DynSystem,
    x_star: &[f64],
    directions: &[Vec<f64>],
    p: PNorm,
    epsilon: f64,
) -> Result<DenseMatrix> {
    let basis: Vec<Vec<num_complex::Complex64>> = directions
        .iter()
        .map(|u| u.iter().map(|&x| num_complex::Complex64::new(x, 0.0)).collect())
        .collect();
    let jac = sys.jacobian(0.0, x_star);
    Ok(measures::optimal_reduction_matrix(&jac, &basis, p, epsilon)?)
}

// ---------------------------------------------------------------------------
// Command handlers
// ---------------------------------------------------------------------------

fn run_measure(cfg: &RunConfig) -> Result<(Outcome, serde_json::Value)> {
    let inputs = Inputs::new(&cfg.inputs);
    let params = Params::new(&cfg.params);
    let a = read_matrix(inputs.require("matrix")?)?;
    let weight = inputs.opt("weight").map(read_matrix).transpose()?;
    let p = params.p_norm("p", PNorm::Two)?;
    let oracle = params.or("oracle", false)?;
    inputs.finish()?;
    params.finish()?;

    let weighted = weight.is_some();
    let spec = seminorm_from(p, weight)?;
    let res = measures::semi_measure(&a, &spec)?;
    let mut doc = json!({
        "value": res.value,
        "p": p.to_string(),
        "weighted": weighted,
        "seminorm": spec.is_seminorm(),
        "method": res.method,
        "residual": res.residual,
    });
    if oracle {
        let reference = measures::measure_limit_oracle(&a, &spec, None)?;
        doc["oracle_value"] = json!(reference);
        doc["oracle_gap"] = json!((res.value - reference).abs());
    }
    Ok((Outcome::Success, doc))
}

fn run_certify(cfg: &RunConfig) -> Result<(Outcome, serde_json::Value)> {
    let inputs = Inputs::new(&cfg.inputs);
    let params = Params::new(&cfg.params);
    let (_, sys) = load_system(inputs.require("system")?)?;
    let kind: String = params.require("kind")?;
    let p = params.p_norm("p", PNorm::Two)?;
    // Read the reduction accuracy up front: the flag surface supplies it
    // for every kind, but only the doubly analysis uses it.
    let epsilon: f64 = params.or("epsilon", 1e-6)?;
    let d = sampler_from_params(&params, cfg.seed)?;

    let cert = match kind.as_str() {
        "semi" => {
            let weight = inputs.opt("weight").map(read_matrix).transpose()?;
            let spec = seminorm_from(p, weight)?;
            inputs.finish()?;
            params.finish()?;
            certify::certify_semi_contraction(&sys, &spec, &d)?
        }
        "weak" => {
            let weight = inputs.opt("weight").map(read_matrix).transpose()?;
            let spec = seminorm_from(p, weight)?;
            inputs.finish()?;
            params.finish()?;
            certify::certify_weak_contraction(&sys, &spec, &d)?
        }
        "doubly" => {
            let weak_p = params.p_norm("weak_p", p)?;
            let semi_p = params.p_norm("semi_p", weak_p)?;
            let weak_weight = inputs.opt("weight").map(read_matrix).transpose()?;
            let weak_norm = seminorm_from(weak_p, weak_weight)?;
            let (x_star, directions) = equilibrium_structure(&sys)?;
            let semi_weight = match inputs.opt("semi_weight").map(read_matrix).transpose()? {
                Some(r) => r,
                None => auto_semi_weight(&sys, &x_star, &directions, semi_p, epsilon)?,
            };
            let semi_spec = SemiNormSpec::weighted(semi_p, semi_weight)?;
            inputs.finish()?;
            params.finish()?;
            certify::analyze_doubly_contracting(
                &sys,
                &weak_norm,
                &semi_spec,
                &directions,
                &x_star,
                &d,
            )?
        }
        "sync" => {
            let (lambda2, _) = resolve_lambda2(&params, &inputs, "graph")?;
            let q = match inputs.opt("q").map(read_matrix).transpose()? {
                Some(m) => m,
                None => DenseMatrix::identity(sys.dim()),
            };
            inputs.finish()?;
            params.finish()?;
            certify::sync_condition(&sys, &q, p, lambda2, &d)?
        }
        other => {
            return Err(input_err(format!(
                "unknown certify kind {other:?} (expected semi, weak, doubly, or sync)"
            )))
        }
    };

    let outcome = certificate_outcome(&cert);
    Ok((outcome, serde_json::to_value(&cert)?))
}

fn run_simulate(cfg: &RunConfig) -> Result<(Outcome, serde_json::Value)> {
    let inputs = Inputs::new(&cfg.inputs);
    let params = Params::new(&cfg.params);
    let (_, sys) = load_system(inputs.require("system")?)?;
    let x0 = read_vector(inputs.require("x0")?)?;
    let t_final: f64 = params.require("t_final")?;
    let tol: f64 = params.or("tol", 1e-9)?;
    let mut opts = IntegrateOptions::with_tol(tol);
    if let Some(atol) = params.opt::<f64>("atol")? {
        opts.atol = atol;
    }
    if let Some(m) = params.opt::<usize>("min_samples")? {
        opts.min_samples = m;
    }
    if let Some(n) = params.opt::<usize>("log_uniform")? {
        opts = opts.log_uniform(n);
    }
    let emit_gnuplot: bool = params.or("emit_gnuplot", false)?;
    inputs.finish()?;
    params.finish()?;

    let out = cfg
        .out
        .as_deref()
        .ok_or_else(|| input_err("simulate needs an output CSV path (out)"))?;

    let traj = sim::integrate(&sys, &x0, t_final, &opts)?;
    write_text(out, &traj.to_csv())?;
    let mut artifacts = vec![out.display().to_string()];
    if emit_gnuplot {
        let gp = out.with_extension("gp");
        write_text(
            &gp,
            &gnuplot_script(&csv_file_name(out), traj.dim() + 1, "state", false),
        )?;
        artifacts.push(gp.display().to_string());
    }

    let doc = json!({
        "samples": traj.len(),
        "final_time": traj.final_time(),
        "final_state": traj.final_state(),
        "stats": traj.stats(),
        "artifacts": artifacts,
    });
    Ok((Outcome::Success, doc))
}

fn run_sync(cfg: &RunConfig) -> Result<(Outcome, serde_json::Value)> {
    let inputs = Inputs::new(&cfg.inputs);
    let params = Params::new(&cfg.params);
    let (_, internal) = load_system(inputs.require("internal")?)?;
    let p = params.p_norm("p", PNorm::Two)?;
    let (lambda2, note) = resolve_lambda2(&params, &inputs, "graph")?;
    let q = match inputs.opt("q").map(read_matrix).transpose()? {
        Some(m) => m,
        None => DenseMatrix::identity(internal.dim()),
    };
    let d = sampler_from_params(&params, cfg.seed)?;
    inputs.finish()?;
    params.finish()?;

    let cert = certify::sync_condition(&internal, &q, p, lambda2, &d)?;
    let outcome = certificate_outcome(&cert);
    let mut doc = serde_json::to_value(&cert)?;
    if let Some(n) = note {
        doc["lambda2_source"] = json!(n);
    }
    doc["lambda2"] = json!(lambda2);
    Ok((outcome, doc))
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn run_verify(cfg: &RunConfig) -> Result<(Outcome, serde_json::Value)> {
    let inputs = Inputs::new(&cfg.inputs);
    let params = Params::new(&cfg.params);
    let kind: String = params.require("kind")?;
    // The flag surface supplies these for every verify kind; kinds that
    // have no use for one still accept it and echo it in the manifest.
    for key in [
        "p",
        "t_final",
        "grid_steps",
        "rate_rel_tol",
        "require_no_decay",
        "tol",
    ] {
        let _ = params.opt::<serde_json::Value>(key)?;
    }
    match kind.as_str() {
        "coppel" => verify_coppel(cfg, &inputs, &params),
        "pairwise" => verify_pairwise(cfg, &inputs, &params),
        "rate" => verify_rate(cfg, &inputs, &params),
        "sync" => verify_sync(cfg, &inputs, &params),
        "lyapunov" => verify_lyapunov(cfg, &inputs, &params),
        "dichotomy" => verify_dichotomy(cfg, &inputs, &params),
        other => Err(input_err(format!(
            "unknown verify kind {other:?} (expected coppel, pairwise, rate, sync, lyapunov, or dichotomy)"
        ))),
    }
}

fn verify_common(params: &Params) -> Result<(f64, usize, IntegrateOptions)> {
    let t_final: f64 = params.require("t_final")?;
    let grid_steps: usize = params.or("grid_steps", 100)?;
    let tol: f64 = params.or("tol", 1e-9)?;
    Ok((t_final, grid_steps, IntegrateOptions::with_tol(tol)))
}

/// Exponential sandwich on the linear flow `ẋ = A(t)x` with
/// `A(t) = Df(t, 0)` — exact for linear models, a linearization check
/// otherwise (recorded in the report note).
fn verify_coppel(
    cfg: &RunConfig,
    inputs: &Inputs,
    params: &Params,
) -> Result<(Outcome, serde_json::Value)> {
    let (_, sys) = load_system(inputs.require("system")?)?;
    let x0 = read_vector(inputs.require("x0")?)?;
    let weight = inputs.opt("weight").map(read_matrix).transpose()?;
    let p = params.p_norm("p", PNorm::Two)?;
    let (t_final, grid_steps, opts) = verify_common(params)?;
    inputs.finish()?;
    params.finish()?;
    let _ = cfg;

    let spec = seminorm_from(p, weight)?;
    let grid = time_grid(t_final, grid_steps)?;
    let origin = vec![0.0; sys.dim()];
    let a_map = move |t: f64| sys.jacobian(t, &origin);
    let report = sim::coppel_verify(&a_map, &spec, &x0, &grid, &opts)?;
    let ok = report.ok;
    let mut doc = serde_json::to_value(&report)?;
    doc["note"] = json!(
        "bounds evaluated for the linear flow given by the Jacobian at the \
         origin; exact for linear models"
    );
    Ok((if ok { Outcome::Success } else { Outcome::Refuted }, doc))
}

/// Pairwise trajectory inequality `‖φ(t,x₀) − φ(t,y₀)‖ ≤ e^{−ct}‖x₀ − y₀‖`.
fn verify_pairwise(
    cfg: &RunConfig,
    inputs: &Inputs,
    params: &Params,
) -> Result<(Outcome, serde_json::Value)> {
    let (_, sys) = load_system(inputs.require("system")?)?;
    let x0 = read_vector(inputs.require("x0")?)?;
    let y0 = read_vector(inputs.require("y0")?)?;
    let weight = inputs.opt("weight").map(read_matrix).transpose()?;
    let p = params.p_norm("p", PNorm::Two)?;
    let rate: f64 = params.or("rate", 0.0)?;
    let (t_final, grid_steps, opts) = verify_common(params)?;
    inputs.finish()?;
    params.finish()?;
    let _ = cfg;

    let spec = seminorm_from(p, weight)?;
    let grid = time_grid(t_final, grid_steps)?;
    let report = sim::contraction_pairwise_check(&sys, &x0, &y0, &spec, rate, &grid, &opts)?;
    let ok = report.ok;
    let doc = serde_json::to_value(&report)?;
    Ok((if ok { Outcome::Success } else { Outcome::Refuted }, doc))
}

/// Fits the decay rate of the distance to the model's predicted limit and
/// compares it against the expected rate.
fn verify_rate(
    cfg: &RunConfig,
    inputs: &Inputs,
    params: &Params,
) -> Result<(Outcome, serde_json::Value)> {
    let (_, sys) = load_system(inputs.require("system")?)?;
    let x0 = read_vector(inputs.require("x0")?)?;
    let weight = inputs.opt("weight").map(read_matrix).transpose()?;
    let p = params.p_norm("p", PNorm::Two)?;
    let floor = params.opt::<f64>("floor")?;
    let expected_override = params.opt::<f64>("expected")?;
    let rate_rel_tol: f64 = params.or("rate_rel_tol", 0.1)?;
    let (t_final, _, opts) = verify_common(params)?;
    inputs.finish()?;
    params.finish()?;
    let _ = cfg;

    let target = match sys.limit_from(&x0) {
        Some(limit) => limit,
        None => match sys.known_equilibria() {
            Equilibria::Point(pt) => pt.clone(),
            _ => {
                return Err(input_err(
                    "the model predicts no limit point from this start; there \
                     is no distance to fit a decay rate to",
                ))
            }
        },
    };
    if target.len() != sys.dim() {
        return Err(input_err(
            "the model's limit point does not match the system dimension",
        ));
    }
    let spec = seminorm_from(p, weight)?;

    let traj = sim::integrate(&sys, &x0, t_final, &opts)?;
    let metric = |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a - b).collect();
        spec.apply_real(&d).expect("dimension checked above")
    };
    let fit = sim::estimate_decay_rate(&traj, metric, floor)?;
    let expected = expected_override.or(sys.predicted_rate().map(|r| r.value));
    let rate_matches = expected.map(|e| (fit.rate - e).abs() <= rate_rel_tol * e.abs());
    let ok = rate_matches.unwrap_or(true);

    let doc = json!({
        "fit": fit,
        "expected_rate": expected,
        "rate_rel_tol": rate_rel_tol,
        "rate_matches": rate_matches,
        "limit": target,
        "final_distance": metric(traj.final_state()),
        "samples": traj.len(),
    });
    Ok((if ok { Outcome::Success } else { Outcome::Refuted }, doc))
}

/// Disagreement decay of a stacked network state: fits the decay rate of
/// `‖x − 1ₙ⊗x_ave‖₂` and checks it against `min_rate`, or asserts the
/// absence of decay with `require_no_decay`.
fn verify_sync(
    cfg: &RunConfig,
    inputs: &Inputs,
    params: &Params,
) -> Result<(Outcome, serde_json::Value)> {
    let (_, sys) = load_system(inputs.require("system")?)?;
    let x0 = read_vector(inputs.require("x0")?)?;
    let nodes: usize = params.require("nodes")?;
    let floor = params.opt::<f64>("floor")?;
    let min_rate = params.opt::<f64>("min_rate")?;
    let require_no_decay: bool = params.or("require_no_decay", false)?;
    let (t_final, _, opts) = verify_common(params)?;
    inputs.finish()?;
    params.finish()?;
    let _ = cfg;

    if nodes == 0 || sys.dim() % nodes != 0 {
        return Err(input_err(format!(
            "nodes = {nodes} does not divide the system dimension {}",
            sys.dim()
        )));
    }
    let k = sys.dim() / nodes;
    let traj = sim::integrate(&sys, &x0, t_final, &opts)?;
    let metrics = sim::sync_metrics(&traj, nodes, k)?;
    let initial = metrics.disagreement.first().copied().unwrap_or(0.0);
    let final_dis = metrics.disagreement.last().copied().unwrap_or(0.0);

    // A failed fit for lack of decay is itself the verdict when no decay
    // is expected, so it is captured rather than propagated.
    let fit = match sim::fit_exponential_rate(&metrics.times, &metrics.disagreement, floor) {
        Ok(f) => Some(f),
        Err(SimError::InsufficientDecay { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let ok = if require_no_decay {
        fit.is_none()
    } else {
        match (&fit, min_rate) {
            (Some(f), Some(m)) => f.rate >= m,
            (Some(f), None) => f.rate > 0.0,
            (None, _) => false,
        }
    };

    let doc = json!({
        "nodes": nodes,
        "block_size": k,
        "initial_disagreement": initial,
        "final_disagreement": final_dis,
        "fit": fit,
        "min_rate": min_rate,
        "require_no_decay": require_no_decay,
        "final_average": metrics.average.last(),
        "samples": traj.len(),
    });
    Ok((if ok { Outcome::Success } else { Outcome::Refuted }, doc))
}

/// Monotone-decrease checks for the population model: the pairwise
/// logarithmic distance between two trajectories and the two standard
/// functionals of a single trajectory.
fn verify_lyapunov(
    cfg: &RunConfig,
    inputs: &Inputs,
    params: &Params,
) -> Result<(Outcome, serde_json::Value)> {
    let system_path = inputs.require("system")?;
    let (sys_cfg, sys) = load_system(system_path)?;
    if sys_cfg.model != "lotka_volterra" {
        return Err(input_err(format!(
            "verify lyapunov applies to the lotka_volterra model, got {:?}",
            sys_cfg.model
        )));
    }
    let rows: Vec<Vec<f64>> = serde_json::from_value(
        sys_cfg
            .params
            .get("a")
            .cloned()
            .ok_or_else(|| input_err("lotka_volterra config lacks parameter \"a\""))?,
    )
    .map_err(|e| input_err(format!("parameter \"a\": {e}")))?;
    let growth: Vec<f64> = serde_json::from_value(
        sys_cfg
            .params
            .get("r")
            .cloned()
            .ok_or_else(|| input_err("lotka_volterra config lacks parameter \"r\""))?,
    )
    .map_err(|e| input_err(format!("parameter \"r\": {e}")))?;
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let a = DenseMatrix::from_real_rows(&refs).map_err(|e| input_err(e.to_string()))?;
    let lv = systems::lotka_volterra(&a, &growth)?;
    let weights = lv.weight()?.to_vec();
    let x_star = lv.equilibrium()?.to_vec();

    let x0 = read_vector(inputs.require("x0")?)?;
    let y0 = match inputs.opt("y0") {
        Some(p) => read_vector(p)?,
        // Default second start: the first one, scaled into the interior.
        None => x0.iter().map(|v| v * 1.5).collect(),
    };
    let (t_final, grid_steps, opts) = verify_common(params)?;
    inputs.finish()?;
    params.finish()?;
    let _ = cfg;

    if x0.iter().chain(&y0).any(|&v| v <= 0.0) {
        return Err(input_err(
            "population states must be strictly positive componentwise",
        ));
    }

    // A shared grid gives both trajectories identical sample times, which
    // the pairwise monitor requires.
    let grid = time_grid(t_final, grid_steps)?;
    let grid_opts = opts.clone().on_grid(&grid);
    let ta = sim::integrate(&sys, &x0, t_final, &grid_opts)?;
    let tb = sim::integrate(&sys, &y0, t_final, &grid_opts)?;

    let pair = sim::lyapunov_pair_monitor(&ta, &tb, sim::lv_distance(&weights))?;
    let v1 = sim::lyapunov_monitor(&ta, sim::lv_v1(&weights, &x_star))?;
    let v2 = sim::lyapunov_monitor(&ta, sim::lv_v2(&weights, &a, &growth))?;
    let final_gap = ta
        .final_state()
        .iter()
        .zip(&x_star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let ok = pair.ok && v1.ok && v2.ok;

    let doc = json!({
        "equilibrium": x_star,
        "weights": weights,
        "pair_distance": {"ok": pair.ok, "max_increase": pair.max_increase},
        "v1": {"ok": v1.ok, "max_increase": v1.max_increase},
        "v2": {"ok": v2.ok, "max_increase": v2.max_increase},
        "final_distance_to_equilibrium": final_gap,
        "times": pair.times,
        "pair_values": pair.values,
        "v1_values": v1.values,
        "v2_values": v2.values,
    });
    Ok((if ok { Outcome::Success } else { Outcome::Refuted }, doc))
}

/// Boundedness classification of a family of starts, cross-checked
/// against the model's equilibrium metadata.
fn verify_dichotomy(
    cfg: &RunConfig,
    inputs: &Inputs,
    params: &Params,
) -> Result<(Outcome, serde_json::Value)> {
    let (_, sys) = load_system(inputs.require("system")?)?;
    let x0_list: Vec<Vec<f64>> = read_json(inputs.require("x0_list")?)?;
    let (t_final, _, opts) = verify_common(params)?;
    inputs.finish()?;
    params.finish()?;
    let _ = cfg;

    let report = sim::dichotomy_probe(&sys, &x0_list, t_final, &opts)?;
    let ok = report.metadata_consistent != Some(false);
    let doc = serde_json::to_value(&report)?;
    Ok((if ok { Outcome::Success } else { Outcome::Refuted }, doc))
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// A bundled scenario: which system, where to start, how long to run,
/// and the certificate/fit tolerances.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    system: SystemConfig,
    x0: Vec<f64>,
    t_final: f64,
    #[serde(default)]
    weak_p: Option<String>,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default)]
    box_half_width: Option<f64>,
    #[serde(default)]
    rate_rel_tol: Option<f64>,
    #[serde(default)]
    tol: Option<f64>,
}

/// Norm exponent a model's convergence theory is phrased in, used when
/// the scenario does not pick one.
fn default_weak_p(model: &str) -> PNorm {
    match model {
        "affine_averaging" | "diffusive_network" => PNorm::Inf,
        "affine_flow" => PNorm::One,
        _ => PNorm::Two,
    }
}

fn run_report(cfg: &RunConfig) -> Result<(Outcome, serde_json::Value)> {
    let inputs = Inputs::new(&cfg.inputs);
    let params = Params::new(&cfg.params);
    let scenario: Scenario = read_json(inputs.require("scenario")?)?;
    let emit_gnuplot: bool = params.or("emit_gnuplot", false)?;
    inputs.finish()?;
    params.finish()?;

    let sys = systems::from_config(&scenario.system)?;
    if scenario.x0.len() != sys.dim() {
        return Err(input_err(format!(
            "x0 has {} components, the system has dimension {}",
            scenario.x0.len(),
            sys.dim()
        )));
    }
    let weak_p = match &scenario.weak_p {
        Some(s) => PNorm::parse(s)?,
        None => default_weak_p(&scenario.system.model),
    };
    let epsilon = scenario.epsilon.unwrap_or(1e-6);
    let half_width = scenario.box_half_width.unwrap_or(2.0);
    let rate_rel_tol = scenario.rate_rel_tol.unwrap_or(0.1);
    let tol = scenario.tol.unwrap_or(1e-9);

    let d = DomainSampler::symmetric(sys.dim(), half_width)?.with_seed(cfg.seed);
    let weak_norm = SemiNormSpec::plain(weak_p);

    // Certificate: a joint equilibrium-convergence analysis when the
    // model declares its equilibrium set, otherwise the two legs
    // separately (or just the weak one if even the kernel is unknown).
    let mut fallback = Vec::new();
    let cert = match equilibrium_structure(&sys) {
        Ok((x_star, directions)) => {
            let semi_weight = auto_semi_weight(&sys, &x_star, &directions, weak_p, epsilon)?;
            let semi_spec = SemiNormSpec::weighted(weak_p, semi_weight)?;
            match certify::analyze_doubly_contracting(
                &sys,
                &weak_norm,
                &semi_spec,
                &directions,
                &x_star,
                &d,
            ) {
                Ok(c) => c,
                Err(e @ certify::CertifyError::NotEquilibriumSubspace { .. }) => {
                    fallback.push(format!("joint analysis unavailable: {e}"));
                    certify::certify_weak_contraction(&sys, &weak_norm, &d)?
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(e) => {
            fallback.push(format!("joint analysis unavailable: {e}"));
            certify::certify_weak_contraction(&sys, &weak_norm, &d)?
        }
    };

    // Trajectory and the decay of the distance to the predicted limit.
    let opts = IntegrateOptions::with_tol(tol);
    let traj = sim::integrate(&sys, &scenario.x0, scenario.t_final, &opts)?;
    let (fit, metric_values, metric_name) = match sys.limit_from(&scenario.x0) {
        Some(limit) => {
            let metric = |x: &[f64]| {
                let diff: Vec<f64> = x.iter().zip(&limit).map(|(a, b)| a - b).collect();
                weak_norm.apply_real(&diff).expect("dimensions match")
            };
            let values = traj.sample_metric(metric);
            let fit = match sim::fit_exponential_rate(traj.times(), &values, None) {
                Ok(f) => Some(f),
                Err(SimError::InsufficientDecay { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            (fit, Some(values), "distance_to_limit")
        }
        None => (None, None, ""),
    };

    let expected_rate = if cert.certified() && cert.rate_c.is_finite() && cert.rate_c > 0.0 {
        Some(cert.rate_c)
    } else {
        sys.predicted_rate().map(|r| r.value)
    };
    let rate_matches = match (&fit, expected_rate) {
        (Some(f), Some(e)) => Some((f.rate - e).abs() <= rate_rel_tol * e.abs()),
        _ => None,
    };
    let ok = cert.certified() && rate_matches != Some(false);

    let mut doc = json!({
        "model": scenario.system.model,
        "certificate": cert,
        "fallback_notes": fallback,
        "fit": fit,
        "expected_rate": expected_rate,
        "rate_rel_tol": rate_rel_tol,
        "rate_matches": rate_matches,
        "final_state": traj.final_state(),
        "samples": traj.len(),
    });

    if let Some(dir) = cfg.out.as_deref() {
        std::fs::create_dir_all(dir)?;
        let traj_csv = dir.join("traj.csv");
        write_text(&traj_csv, &traj.to_csv())?;
        let mut artifacts = vec![traj_csv.display().to_string()];
        if let Some(values) = &metric_values {
            let metric_csv = dir.join("metric.csv");
            write_text(&metric_csv, &sim::metric_csv(traj.times(), values, metric_name))?;
            artifacts.push(metric_csv.display().to_string());
            if emit_gnuplot {
                let gp = dir.join("metric.gp");
                write_text(&gp, &gnuplot_script("metric.csv", 2, metric_name, true))?;
                artifacts.push(gp.display().to_string());
            }
        }
        if emit_gnuplot {
            let gp = dir.join("traj.gp");
            write_text(&gp, &gnuplot_script("traj.csv", traj.dim() + 1, "state", false))?;
            artifacts.push(gp.display().to_string());
        }
        doc["artifacts"] = json!(artifacts);
    }

    Ok((if ok { Outcome::Success } else { Outcome::Refuted }, doc))
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Runs a configuration: prints the `{manifest, result}` document to
/// stdout, writes artifacts when `out` is set, and returns the outcome.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let (outcome, result) = match cfg.command {
        CommandKind::Measure => run_measure(cfg)?,
        CommandKind::Certify => run_certify(cfg)?,
        CommandKind::Simulate => run_simulate(cfg)?,
        CommandKind::Verify => run_verify(cfg)?,
        CommandKind::Sync => run_sync(cfg)?,
        CommandKind::Report => run_report(cfg)?,
    };
    let doc = json!({
        "manifest": cfg,
        "result": result,
    });
    let text = pretty(&doc)?;
    print!("{text}");

    match cfg.command {
        // The CSV/directory artifacts were written by the handler; the
        // manifest goes next to them so the artifact run is replayable.
        CommandKind::Simulate => {
            if let Some(out) = cfg.out.as_deref() {
                let mut name = out.as_os_str().to_owned();
                name.push(".manifest.json");
                write_text(Path::new(&name), &pretty(&json!(cfg))?)?;
            }
        }
        CommandKind::Report => {
            if let Some(dir) = cfg.out.as_deref() {
                write_text(&dir.join("report.json"), &text)?;
                write_text(&dir.join("manifest.json"), &pretty(&json!(cfg))?)?;
            }
        }
        _ => {
            if let Some(out) = cfg.out.as_deref() {
                write_text(out, &text)?;
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_from(pairs: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn params_reject_unknown_keys_and_type_errors() {
        let map = params_from(&[("p", json!("inf")), ("bogus", json!(1))]);
        let params = Params::new(&map);
        assert_eq!(params.p_norm("p", PNorm::Two).unwrap(), PNorm::Inf);
        let err = params.finish().unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");

        let map = params_from(&[("grid", json!("five"))]);
        let params = Params::new(&map);
        assert!(params.opt::<usize>("grid").is_err());
    }

    #[test]
    fn p_norm_param_accepts_numbers_and_strings() {
        let map = params_from(&[("a", json!(2)), ("b", json!("1")), ("c", json!(2.5))]);
        let params = Params::new(&map);
        assert_eq!(params.p_norm("a", PNorm::One).unwrap(), PNorm::Two);
        assert_eq!(params.p_norm("b", PNorm::Two).unwrap(), PNorm::One);
        assert_eq!(
            params.p_norm("c", PNorm::Two).unwrap(),
            PNorm::Generic(2.5)
        );
        assert_eq!(params.p_norm("missing", PNorm::Inf).unwrap(), PNorm::Inf);
        params.finish().unwrap();
    }

    #[test]
    fn run_config_round_trips_and_rejects_unknown_fields() {
        let cfg = RunConfig {
            command: CommandKind::Measure,
            inputs: [("matrix".to_string(), PathBuf::from("m.json"))]
                .into_iter()
                .collect(),
            params: params_from(&[("p", json!("inf"))]),
            seed: 7,
            out: None,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.command, CommandKind::Measure);
        assert_eq!(back.seed, 7);

        let bad = r#"{"command": "measure", "extra": 1}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
    }

    #[test]
    fn time_grid_is_strictly_increasing_and_validated() {
        let g = time_grid(2.0, 4).unwrap();
        assert_eq!(g, vec![0.5, 1.0, 1.5, 2.0]);
        assert!(time_grid(0.0, 4).is_err());
        assert!(time_grid(1.0, 0).is_err());
        assert!(time_grid(f64::INFINITY, 4).is_err());
    }

    #[test]
    fn gnuplot_script_references_the_csv_by_name() {
        let s = gnuplot_script("traj.csv", 4, "state", false);
        assert!(s.contains("plot for [i=2:4] \"traj.csv\""));
        assert!(!s.contains("logscale"));
        let s = gnuplot_script("metric.csv", 2, "distance", true);
        assert!(s.contains("set logscale y"));
    }
}
