//! `contrakt` — command-line surface over the measure, certification, and
//! simulation library. Every subcommand resolves to a [`runner::RunConfig`]
//! and runs through a single dispatch path, so a flag invocation and a
//! `run --config file.json` invocation of the same configuration produce
//! byte-identical output.
//!
//! Exit codes: `0` success, `1` refuted certificate or violated trajectory
//! inequality, `2` input error (single-line diagnostic on stderr).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

mod runner;

use runner::{CommandKind, Outcome, RunConfig};

#[derive(Parser)]
#[command(
    name = "contrakt",
    version,
    about = "Matrix semi-measures, contraction certificates, and trajectory verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CertifyKind {
    Semi,
    Weak,
    Doubly,
    Sync,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VerifyKind {
    Coppel,
    Pairwise,
    Rate,
    Sync,
    Lyapunov,
    Dichotomy,
}

#[derive(Subcommand)]
enum Command {
    /// Matrix (semi-)measure of a real matrix, optionally cross-checked
    /// against the defining-limit oracle.
    Measure {
        /// JSON matrix (array of rows of numbers).
        #[arg(long)]
        matrix: PathBuf,
        /// Optional weight matrix R defining the semi-norm ‖Rv‖_p.
        #[arg(long)]
        weight: Option<PathBuf>,
        /// Norm exponent: 1, 2, inf, or a float > 1.
        #[arg(short, long, default_value = "2")]
        p: String,
        /// Also evaluate the defining-limit oracle and report the gap.
        #[arg(long)]
        oracle: bool,
        /// Write the JSON document here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled contraction certificate for a system from a config file.
    Certify {
        /// System config JSON ({"model": ..., "graph": ..., "params": ...}).
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_enum)]
        kind: CertifyKind,
        /// Norm exponent for the certificate.
        #[arg(short, long, default_value = "2")]
        p: String,
        /// Weight matrix for the (semi-)norm (kinds semi/weak).
        #[arg(long)]
        weight: Option<PathBuf>,
        /// Weak-leg exponent for kind doubly (defaults to -p).
        #[arg(long)]
        weak_p: Option<String>,
        /// Semi-leg exponent for kind doubly (defaults to the weak leg's).
        #[arg(long)]
        semi_p: Option<String>,
        /// Semi-leg weight matrix for kind doubly (default: constructed
        /// from the Jacobian at the equilibrium, accuracy --epsilon).
        #[arg(long)]
        semi_weight: Option<PathBuf>,
        /// Similarity matrix Q for kind sync (default: identity).
        #[arg(long)]
        q: Option<PathBuf>,
        /// Algebraic connectivity for kind sync (or pass --graph).
        #[arg(long)]
        lambda2: Option<f64>,
        /// Undirected graph JSON from which to compute λ₂ (kind sync).
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Reduction accuracy for the auto-built semi weight.
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Sampling box lower corner, comma-separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        box_lo: Vec<f64>,
        /// Sampling box upper corner, comma-separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        box_hi: Vec<f64>,
        /// Grid points per coordinate (default 5; grids are dropped above
        /// 6 dimensions).
        #[arg(long)]
        grid: Option<usize>,
        /// Number of uniform random samples (default 200).
        #[arg(long)]
        random: Option<usize>,
        /// Time samples for time-varying systems, comma-separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        times: Option<Vec<f64>>,
        #[arg(long, default_value_t = contrakt::certify::DEFAULT_SAMPLER_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a system and write the trajectory as CSV.
    Simulate {
        #[arg(long)]
        system: PathBuf,
        /// Initial state JSON (array of numbers).
        #[arg(long)]
        x0: PathBuf,
        #[arg(long)]
        t_final: f64,
        /// Relative tolerance (absolute = tol/100 unless --atol).
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        atol: Option<f64>,
        /// Lower bound on stored samples (caps the step at t_final/n).
        #[arg(long)]
        min_samples: Option<usize>,
        /// Store a log-uniform grid of this many samples instead of
        /// every accepted step.
        #[arg(long)]
        log_uniform: Option<usize>,
        /// Output CSV path (columns t, x_0..x_{n-1}).
        #[arg(long)]
        out: PathBuf,
        /// Write a gnuplot script next to the CSV.
        #[arg(long)]
        emit_gnuplot: bool,
    },
    /// Trajectory-level verification reports (JSON).
    Verify {
        #[arg(long, value_enum)]
        kind: VerifyKind,
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        x0: Option<PathBuf>,
        /// Second initial state (pairwise distance checks).
        #[arg(long)]
        y0: Option<PathBuf>,
        /// List of initial states (kind dichotomy).
        #[arg(long)]
        x0_list: Option<PathBuf>,
        #[arg(short, long, default_value = "2")]
        p: String,
        #[arg(long)]
        weight: Option<PathBuf>,
        #[arg(long)]
        t_final: f64,
        /// Output-grid resolution for grid-based checks.
        #[arg(long, default_value_t = 100)]
        grid_steps: usize,
        /// Contraction rate c for the pairwise bound e^{-ct}·d(0).
        #[arg(long, allow_hyphen_values = true)]
        rate: Option<f64>,
        /// Node count n for kind sync (block size k = dim/n).
        #[arg(long)]
        nodes: Option<usize>,
        /// Decay-fit floor (metric values below it are ignored).
        #[arg(long)]
        floor: Option<f64>,
        /// Expected decay rate override (default: model metadata).
        #[arg(long, allow_hyphen_values = true)]
        expected: Option<f64>,
        /// Relative tolerance for the fitted-vs-expected rate comparison.
        #[arg(long, default_value_t = 0.1)]
        rate_rel_tol: f64,
        /// Kind sync: require the fitted disagreement decay rate ≥ this.
        #[arg(long)]
        min_rate: Option<f64>,
        /// Kind sync: require the disagreement NOT to decay instead.
        #[arg(long)]
        require_no_decay: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = contrakt::certify::DEFAULT_SAMPLER_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Network synchronization certificate: μ_p(Q·Df·Q⁻¹) ≤ λ₂ − c.
    Sync {
        /// Internal (per-node) system config JSON.
        #[arg(long)]
        internal: PathBuf,
        /// Undirected coupling graph JSON (source of λ₂).
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        lambda2: Option<f64>,
        /// Similarity matrix Q (default: identity).
        #[arg(long)]
        q: Option<PathBuf>,
        #[arg(short, long, default_value = "2")]
        p: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        box_lo: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        box_hi: Vec<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = contrakt::certify::DEFAULT_SAMPLER_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bundled scenario run: certificates + simulation + rate fit.
    Report {
        /// Scenario JSON: {"system": ..., "x0": [...], "t_final": T, ...}.
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for report.json, traj.csv, metric.csv, manifest.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        emit_gnuplot: bool,
        #[arg(long, default_value_t = contrakt::certify::DEFAULT_SAMPLER_SEED)]
        seed: u64,
    },
    /// Execute a RunConfig JSON file (same schema as the emitted manifests).
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn opt_path(
    inputs: &mut BTreeMap<String, PathBuf>,
    key: &str,
    value: Option<PathBuf>,
) {
    if let Some(v) = value {
        inputs.insert(key.to_string(), v);
    }
}

fn opt_param(
    params: &mut BTreeMap<String, serde_json::Value>,
    key: &str,
    value: Option<serde_json::Value>,
) {
    if let Some(v) = value {
        params.insert(key.to_string(), v);
    }
}

/// Lowers parsed flags into the file-format configuration, resolving
/// defaults so the emitted manifest is complete.
fn to_config(cmd: Command) -> Result<RunConfig, runner::CliError> {
    let mut inputs = BTreeMap::new();
    let mut params = BTreeMap::new();
    Ok(match cmd {
        Command::Measure {
            matrix,
            weight,
            p,
            oracle,
            out,
        } => {
            inputs.insert("matrix".into(), matrix);
            opt_path(&mut inputs, "weight", weight);
            params.insert("p".into(), json!(p));
            params.insert("oracle".into(), json!(oracle));
            RunConfig {
                command: CommandKind::Measure,
                inputs,
                params,
                seed: 0,
                out,
            }
        }
        Command::Certify {
            system,
            kind,
            p,
            weight,
            weak_p,
            semi_p,
            semi_weight,
            q,
            lambda2,
            graph,
            epsilon,
            box_lo,
            box_hi,
            grid,
            random,
            times,
            seed,
            out,
        } => {
            inputs.insert("system".into(), system);
            opt_path(&mut inputs, "weight", weight);
            opt_path(&mut inputs, "semi_weight", semi_weight);
            opt_path(&mut inputs, "q", q);
            opt_path(&mut inputs, "graph", graph);
            let kind = match kind {
                CertifyKind::Semi => "semi",
                CertifyKind::Weak => "weak",
                CertifyKind::Doubly => "doubly",
                CertifyKind::Sync => "sync",
            };
            params.insert("kind".into(), json!(kind));
            params.insert("p".into(), json!(p));
            opt_param(&mut params, "weak_p", weak_p.map(|v| json!(v)));
            opt_param(&mut params, "semi_p", semi_p.map(|v| json!(v)));
            opt_param(&mut params, "lambda2", lambda2.map(|v| json!(v)));
            params.insert("epsilon".into(), json!(epsilon));
            params.insert("box_lo".into(), json!(box_lo));
            params.insert("box_hi".into(), json!(box_hi));
            opt_param(&mut params, "grid", grid.map(|v| json!(v)));
            opt_param(&mut params, "random", random.map(|v| json!(v)));
            opt_param(&mut params, "times", times.map(|v| json!(v)));
            RunConfig {
                command: CommandKind::Certify,
                inputs,
                params,
                seed,
                out,
            }
        }
        Command::Simulate {
            system,
            x0,
            t_final,
            tol,
            atol,
            min_samples,
            log_uniform,
            out,
            emit_gnuplot,
        } => {
            inputs.insert("system".into(), system);
            inputs.insert("x0".into(), x0);
            params.insert("t_final".into(), json!(t_final));
            params.insert("tol".into(), json!(tol));
            opt_param(&mut params, "atol", atol.map(|v| json!(v)));
            opt_param(&mut params, "min_samples", min_samples.map(|v| json!(v)));
            opt_param(&mut params, "log_uniform", log_uniform.map(|v| json!(v)));
            params.insert("emit_gnuplot".into(), json!(emit_gnuplot));
            RunConfig {
                command: CommandKind::Simulate,
                inputs,
                params,
                seed: 0,
                out: Some(out),
            }
        }
        Command::Verify {
            kind,
            system,
            x0,
            y0,
            x0_list,
            p,
            weight,
            t_final,
            grid_steps,
            rate,
            nodes,
            floor,
            expected,
            rate_rel_tol,
            min_rate,
            require_no_decay,
            tol,
            seed,
            out,
        } => {
            inputs.insert("system".into(), system);
            opt_path(&mut inputs, "x0", x0);
            opt_path(&mut inputs, "y0", y0);
            opt_path(&mut inputs, "x0_list", x0_list);
            opt_path(&mut inputs, "weight", weight);
            let kind = match kind {
                VerifyKind::Coppel => "coppel",
                VerifyKind::Pairwise => "pairwise",
                VerifyKind::Rate => "rate",
                VerifyKind::Sync => "sync",
                VerifyKind::Lyapunov => "lyapunov",
                VerifyKind::Dichotomy => "dichotomy",
            };
            params.insert("kind".into(), json!(kind));
            params.insert("p".into(), json!(p));
            params.insert("t_final".into(), json!(t_final));
            params.insert("grid_steps".into(), json!(grid_steps));
            opt_param(&mut params, "rate", rate.map(|v| json!(v)));
            opt_param(&mut params, "nodes", nodes.map(|v| json!(v)));
            opt_param(&mut params, "floor", floor.map(|v| json!(v)));
            opt_param(&mut params, "expected", expected.map(|v| json!(v)));
            params.insert("rate_rel_tol".into(), json!(rate_rel_tol));
            opt_param(&mut params, "min_rate", min_rate.map(|v| json!(v)));
            params.insert("require_no_decay".into(), json!(require_no_decay));
            params.insert("tol".into(), json!(tol));
            RunConfig {
                command: CommandKind::Verify,
                inputs,
                params,
                seed,
                out,
            }
        }
        Command::Sync {
            internal,
            graph,
            lambda2,
            q,
            p,
            box_lo,
            box_hi,
            grid,
            random,
            seed,
            out,
        } => {
            inputs.insert("internal".into(), internal);
            opt_path(&mut inputs, "graph", graph);
            opt_path(&mut inputs, "q", q);
            params.insert("p".into(), json!(p));
            opt_param(&mut params, "lambda2", lambda2.map(|v| json!(v)));
            params.insert("box_lo".into(), json!(box_lo));
            params.insert("box_hi".into(), json!(box_hi));
            opt_param(&mut params, "grid", grid.map(|v| json!(v)));
            opt_param(&mut params, "random", random.map(|v| json!(v)));
            RunConfig {
                command: CommandKind::Sync,
                inputs,
                params,
                seed,
                out,
            }
        }
        Command::Report {
            scenario,
            out_dir,
            emit_gnuplot,
            seed,
        } => {
            inputs.insert("scenario".into(), scenario);
            params.insert("emit_gnuplot".into(), json!(emit_gnuplot));
            RunConfig {
                command: CommandKind::Report,
                inputs,
                params,
                seed,
                out: out_dir,
            }
        }
        Command::Run { config } => runner::load_config(&config)?,
    })
}

fn main() -> ExitCode {
    // CONTRAKT_THREADS caps the worker count for all parallel sweeps.
    if let Ok(v) = std::env::var("CONTRAKT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: CONTRAKT_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let config = match to_config(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match runner::execute(&config) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Refuted) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
