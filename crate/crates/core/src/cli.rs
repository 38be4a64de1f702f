//! Batch front end. Every command reads one scenario document, writes its
//! artifacts atomically into the output directory together with
//! `manifest.json`, and maps outcomes to exit codes: 0 success, 1 usage or
//! input error, 2 a solver failure reported in `failure.json`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use num_rational::BigRational;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::epsnash::{self, SearchConfig};
use crate::error::{Error, Result};
use crate::finite_eq::{self, ENUMERATION_BUDGET};
use crate::linalg::{self, Mat, Vector};
use crate::model::{load_spec, FiniteGameSpec, LqGameSpec, Spec};
use crate::sebeu_lq::{build_sebeu, solve_mean_field, SebeuProfile};
use crate::simulate::moments::{consistency_check, StartLaw, CONSISTENCY_TOL_FINITE, CONSISTENCY_TOL_STATIONARY};
use crate::simulate::trajectories::simulate_trajectories;

/// Seed used when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 20_240_601;
/// Window compared by `consistency` and simulated by `simulate` for
/// infinite-horizon specs when `--horizon` is absent.
pub const DEFAULT_STATIONARY_STAGES: usize = 11;
pub const DEFAULT_N_GRID: [usize; 4] = [1, 4, 16, 64];

#[derive(Debug, Parser)]
#[command(name = "sebeu", version, about = "Solve, simulate and audit subjective equilibria of stochastic games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// Scenario document.
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Number of sample paths for `simulate`.
    #[arg(long, global = true, default_value_t = 1000)]
    pub paths: usize,
    /// Stages to simulate or compare (defaults to the spec horizon).
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Population sizes for `sweep-n`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Tolerance of the command's convergence or consistency test.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Enumeration size or iteration budget.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// SEBEU of an LQ game (finite horizon or stationary): `profile.json`.
    SolveLq,
    /// Symmetric mean-field SEBEU: `profile.json`.
    SolveMeanfield,
    /// Pure SEBEU, Nash and Kalai sets of a finite game.
    Enumerate,
    /// Damped best-reply iteration toward a mixed SEBEU of a finite game.
    IterateSebeu,
    /// Monte Carlo paths under the SEBEU: `trajectories.csv` and `.bin`.
    Simulate,
    /// Actual versus believed environment law: `consistency.csv`.
    Consistency,
    /// Deviation gaps at the SEBEU: `gaps.csv`.
    EpsGap,
    /// Deviation gap as the population grows: `gaps.csv`.
    SweepN,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SolveLq => "solve-lq",
            Command::SolveMeanfield => "solve-meanfield",
            Command::Enumerate => "enumerate",
            Command::IterateSebeu => "iterate-sebeu",
            Command::Simulate => "simulate",
            Command::Consistency => "consistency",
            Command::EpsGap => "eps-gap",
            Command::SweepN => "sweep-n",
        }
    }
}

/// Decimal string with 17 significant digits.
fn num(x: f64) -> Value {
    Value::String(format!("{x:.16e}"))
}

fn vec_json(v: &Vector) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

fn mat_json(m: &Mat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect())).collect())
}

fn rat_str(x: &BigRational) -> String {
    if x.denom() == &1.into() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects artifacts and writes each one via a temporary file and rename.
struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(name))?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn put_json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(v)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }
}

fn usage(message: impl Into<String>) -> Error {
    Error::InvalidValue { field: "command line".into(), message: message.into() }
}

fn want_lq(spec: Spec, cmd: Command) -> Result<LqGameSpec> {
    match spec {
        Spec::Lq(s) => Ok(s),
        Spec::Finite(_) => Err(usage(format!("{} needs an LQ scenario", cmd.name()))),
    }
}

fn want_finite(spec: Spec, cmd: Command) -> Result<FiniteGameSpec> {
    match spec {
        Spec::Finite(s) => Ok(s),
        Spec::Lq(_) => Err(usage(format!("{} needs a finite-game scenario", cmd.name()))),
    }
}

fn profile_json(spec: &LqGameSpec, profile: &SebeuProfile) -> Value {
    let gains = profile.gains();
    match profile {
        SebeuProfile::Finite(fin) => {
            let ctrls = fin.controllers();
            let groups: Vec<Value> = ctrls
                .iter()
                .enumerate()
                .map(|(g, c)| {
                    let stages: Vec<Value> = (0..fin.horizon())
                        .map(|t| {
                            let (ys, h) = c.history_form(t).expect("SEBEU controllers act on the environment history");
                            json!({
                                "t": t,
                                "F": mat_json(&c.stage(t).f),
                                "env_history": ys.iter().map(mat_json).collect::<Vec<_>>(),
                                "h": vec_json(&h),
                                "G_forecast": mat_json(&gains[g].g[t]),
                                "H_forecast": vec_json(&gains[g].h[t]),
                            })
                        })
                        .collect();
                    json!({ "group": g, "count": spec.groups[g].count, "stages": stages })
                })
                .collect();
            json!({ "kind": "finite", "horizon": fin.horizon(), "n_dm": spec.n_dm, "groups": groups })
        }
        SebeuProfile::Stationary(st) => {
            let groups: Vec<Value> = gains
                .iter()
                .enumerate()
                .map(|(g, gg)| {
                    json!({
                        "group": g,
                        "count": spec.groups[g].count,
                        "F": mat_json(&gg.f[0]),
                        "G": mat_json(&gg.g[0]),
                        "H": vec_json(&gg.h[0]),
                    })
                })
                .collect();
            json!({
                "kind": "stationary",
                "n_dm": spec.n_dm,
                "groups": groups,
                "filter_error_cov": mat_json(&st.sigma),
                "state_cov": mat_json(&st.theta),
                "state_mean": vec_json(&st.x_hat0),
                "closed_loop_spectral_radius": num(linalg::spectral_radius(&st.a_cl)),
                "fixed_point_iterations": st.fixed_point.iterations,
                "residuals": {
                    "fixed_point": num(st.fixed_point.residual),
                    "filter_error_cov": num(st.sigma_residual),
                    "state_cov": num(st.theta_residual),
                    "state_mean": num(st.mean_residual),
                },
            })
        }
    }
}

fn default_stages(spec: &LqGameSpec, opts: &Options) -> usize {
    opts.horizon.or(spec.horizon_len()).unwrap_or(DEFAULT_STATIONARY_STAGES)
}

fn labels(spec: &FiniteGameSpec, u: &[usize]) -> Vec<String> {
    u.iter().enumerate().map(|(i, &a)| spec.actions[i][a].clone()).collect()
}

fn execute(cmd: Command, opts: &Options, spec: Spec, art: &mut Artifacts) -> Result<()> {
    match cmd {
        Command::SolveLq => {
            let spec = want_lq(spec, cmd)?;
            let profile = build_sebeu(&spec)?;
            art.put_json("profile.json", &profile_json(&spec, &profile))
        }
        Command::SolveMeanfield => {
            let spec = want_lq(spec, cmd)?;
            let mf = solve_mean_field(&spec)?;
            let check = epsnash::mean_field_nash_check(&spec, &mf, 100, 1e-2, opts.seed)?;
            art.put_json(
                "profile.json",
                &json!({
                    "kind": "mean_field",
                    "F": mat_json(&mf.policy.f),
                    "G_sum": mat_json(&mf.policy.g_sum),
                    "H": vec_json(&mf.policy.h),
                    "offset": vec_json(&mf.offset()),
                    "env_mean": vec_json(&mf.y_hat),
                    "state_mean": vec_json(&mf.x_hat),
                    "condition_number": num(mf.condition_number),
                    "init_mismatch": mf.init_mismatch,
                    "nash_check": {
                        "equilibrium_cost": num(check.equilibrium_cost),
                        "best_perturbed_cost": num(check.best_perturbed_cost),
                        "max_improvement": num(check.max_improvement),
                        "perturbations": check.perturbations,
                        "unstable": check.unstable,
                    },
                }),
            )
        }
        Command::Enumerate => {
            let spec = want_finite(spec, cmd)?;
            let budget = opts.budget.map(u128::from).unwrap_or(ENUMERATION_BUDGET);
            let sets = [
                ("sebeu", finite_eq::enumerate_pure_sebeu(&spec, budget)?),
                ("nash", finite_eq::enumerate_pure_nash(&spec, budget)?),
                ("kalai", finite_eq::enumerate_pure_kalai(&spec, budget)?),
            ];
            for (kind, set) in sets {
                let profiles: Vec<Vec<String>> = set.iter().map(|u| labels(&spec, u)).collect();
                art.put_json(&format!("equilibria_{kind}.json"), &json!({ "kind": kind, "count": set.len(), "profiles": profiles }))?;
            }
            Ok(())
        }
        Command::IterateSebeu => {
            let spec = want_finite(spec, cmd)?;
            let budget = opts.budget.unwrap_or(10_000) as usize;
            let rep = finite_eq::sebeu_fixed_point_iteration(&spec, finite_eq::uniform_profile(&spec), 0.5, opts.tol.unwrap_or(1e-12), budget)?;
            let profile: Vec<Vec<Value>> = rep.profile.iter().map(|p| p.iter().map(|x| num(*x)).collect()).collect();
            art.put_json(
                "profile.json",
                &json!({
                    "kind": "mixed_iteration",
                    "converged": rep.converged,
                    "iterations": rep.iterations,
                    "profile": profile,
                    "env_law": rep.env_law.iter().map(|x| num(*x)).collect::<Vec<_>>(),
                    "best_reply_residuals": rep.residuals.iter().map(|x| num(*x)).collect::<Vec<_>>(),
                }),
            )?;
            let mut csv = String::from("iter,dm,tv_change,br_residual\n");
            for r in &rep.trace {
                csv.push_str(&format!("{},{},{:.16e},{:.16e}\n", r.iter, r.dm, r.tv_change, r.br_residual));
            }
            art.put("trace.csv", csv.as_bytes())
        }
        Command::Simulate => {
            let spec = want_lq(spec, cmd)?;
            let profile = build_sebeu(&spec)?;
            let stages = default_stages(&spec, opts);
            if let Some(t) = profile.horizon() {
                if stages > t {
                    return Err(usage(format!("--horizon {stages} exceeds the game horizon {t}")));
                }
            }
            let start = StartLaw::of_belief(profile.belief());
            let batch = simulate_trajectories(&spec, &profile.controllers(), &start, opts.paths, stages, opts.seed)?;
            let mut csv = Vec::new();
            batch.write_csv(&spec, &mut csv)?;
            art.put("trajectories.csv", &csv)?;
            let mut bin = Vec::new();
            batch.write_binary(&spec, &mut bin)?;
            art.put("trajectories.bin", &bin)
        }
        Command::Consistency => {
            let spec = want_lq(spec, cmd)?;
            let profile = build_sebeu(&spec)?;
            let stages = default_stages(&spec, opts);
            if let Some(t) = profile.horizon() {
                if stages > t {
                    return Err(usage(format!("--horizon {stages} exceeds the game horizon {t}")));
                }
            }
            let tol = opts.tol.unwrap_or(if profile.horizon().is_some() { CONSISTENCY_TOL_FINITE } else { CONSISTENCY_TOL_STATIONARY });
            let ctrls = profile.controllers();
            let mut csv = String::from("stages,mean_gap,cov_gap,tolerance,passed\n");
            for k in 1..=stages {
                let r = consistency_check(&spec, profile.belief(), &ctrls, k, tol);
                csv.push_str(&format!("{},{:.16e},{:.16e},{:.16e},{}\n", r.stages, r.mean_gap, r.cov_gap, r.tolerance, r.passed));
            }
            art.put("consistency.csv", csv.as_bytes())
        }
        Command::EpsGap => match spec {
            Spec::Lq(spec) => {
                let profile = match build_sebeu(&spec)? {
                    SebeuProfile::Finite(f) => f,
                    SebeuProfile::Stationary(_) => return Err(usage("eps-gap needs a finite-horizon LQ scenario")),
                };
                let rep = epsnash::eps_gap_lq(&spec, &profile, &search_config(opts))?;
                let mut csv = Vec::new();
                epsnash::write_gap_csv(&rep.entries, &mut csv)?;
                art.put("gaps.csv", &csv)
            }
            Spec::Finite(spec) => {
                let budget = opts.budget.map(u128::from).unwrap_or(ENUMERATION_BUDGET);
                let mut csv = String::from("profile,dm,cost,best_deviation,best_deviation_cost,gap\n");
                for u in finite_eq::enumerate_pure_sebeu(&spec, budget)? {
                    let gaps = epsnash::eps_gap_pure(&spec, &u)?;
                    let name = labels(&spec, &u).join(";");
                    for i in 0..spec.n_dm {
                        csv.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            name,
                            i,
                            rat_str(&gaps.cost[i]),
                            spec.actions[i][gaps.best_deviation[i]],
                            rat_str(&gaps.best_deviation_cost[i]),
                            rat_str(&gaps.gap[i])
                        ));
                    }
                }
                art.put("gaps.csv", csv.as_bytes())
            }
        },
        Command::SweepN => {
            let spec = want_lq(spec, cmd)?;
            let grid = opts.n_grid.clone().unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
            if grid.is_empty() || grid.contains(&0) {
                return Err(usage("--n-grid needs positive population sizes"));
            }
            let rows = epsnash::sweep_population(&spec, &grid, &search_config(opts))?;
            let mut csv = Vec::new();
            epsnash::write_gap_csv(&rows, &mut csv)?;
            art.put("gaps.csv", &csv)
        }
    }
}

fn search_config(opts: &Options) -> SearchConfig {
    let d = SearchConfig::default();
    SearchConfig {
        seed: opts.seed,
        grad_tol: opts.tol.unwrap_or(d.grad_tol),
        max_iters: opts.budget.unwrap_or(d.max_iters),
        ..d
    }
}

fn failure_json(cmd: Command, e: &Error) -> Value {
    let assumption = match e {
        Error::AssumptionViolated { assumption, .. } => Some(assumption.clone()),
        Error::SingularEquilibrium { .. } => Some("well-conditioned environment equation".to_string()),
        Error::SingularMeanField { .. } => Some("well-conditioned mean-field equation".to_string()),
        Error::InstabilityDetected { .. } | Error::ClosedLoopUnstable { .. } => Some("stable closed loop".to_string()),
        Error::SteadyStateInfeasible { .. } => Some("feasible steady state".to_string()),
        Error::BudgetExceeded { .. } => Some("enumeration budget".to_string()),
        _ => None,
    };
    json!({
        "command": cmd.name(),
        "kind": e.kind(),
        "solver_failure": e.is_solver_failure(),
        "assumption": assumption,
        "message": e.to_string(),
    })
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let cmd = cli.command;
    let opts = &cli.opts;
    let Some(spec_path) = opts.spec.clone() else {
        eprintln!("error: {} needs --spec PATH", cmd.name());
        return 1;
    };
    let mut art = match Artifacts::new(&opts.out) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: cannot prepare output directory {}: {e}", opts.out.display());
            return 1;
        }
    };
    let outcome = fs::read(&spec_path)
        .map_err(Error::from)
        .and_then(|bytes| {
            let text = String::from_utf8(bytes.clone()).map_err(|e| Error::parse(spec_path.display().to_string(), e.to_string()))?;
            Ok((sha256_hex(&bytes), load_spec(&text)?))
        })
        .and_then(|(hash, spec)| execute(cmd, opts, spec, &mut art).map(|_| hash));
    let (code, input_hash) = match &outcome {
        Ok(h) => (0, Some(h.clone())),
        Err(e) => {
            eprintln!("error: {e}");
            let _ = art.put_json("failure.json", &failure_json(cmd, e));
            (if e.is_solver_failure() { 2 } else { 1 }, None)
        }
    };
    let manifest = json!({
        "command": cmd.name(),
        "status": if code == 0 { "success" } else { "failure" },
        "exit_code": code,
        "spec": spec_path.display().to_string(),
        "spec_sha256": input_hash,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": opts.seed,
        "options": {
            "paths": opts.paths,
            "horizon": opts.horizon,
            "n_grid": opts.n_grid,
            "tol": opts.tol,
            "budget": opts.budget,
        },
        "artifacts": art.written.iter().map(|(n, h)| json!({ "file": n, "sha256": h })).collect::<Vec<_>>(),
        "timings": {
            "elapsed_seconds": started.elapsed().as_secs_f64(),
            "finished_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        },
    });
    if let Err(e) = art.put_json("manifest.json", &manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return 1;
    }
    code
}
