//! `estimator` binary: ingest -> factorize -> lambda -> cost -> compile,
//! plus the FCI oracle, classical DMRG scaling, crossover tables, and the
//! full pipeline runner.
//!
//! Exit codes: 0 success, 2 validation/parse error, 3 stage failure.

use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use estimator_core::classical::{dmrg_scale, DMRGCostPoint};
use estimator_core::factor::{
    cholesky_sf, cp3_init, double_factorize, factorization_error, load_factors, save_factors,
    CholeskyStop, Factors, Method,
};
use estimator_core::hamiltonian::{load_binary, parse_fcidump, save_binary};
use estimator_core::lambda::{lambda_for, LambdaBreakdown};
use estimator_core::logical::{
    default_qubit_model, default_step_cost_model, logical_cost, ErrorBudget, LogicalCost,
    StepCostModel,
};
use estimator_core::oracle::{fci_ground_state, max_basis_overlap};
use estimator_core::report::{
    crossover_table, run_pipeline, write_crossover_csv, QpuPoint, RunConfig,
};
use estimator_core::surface::{search_optimal, LogicalInputs, PhysicalAssumptions};
use estimator_core::{Error, Result};

#[derive(Parser)]
#[command(name = "estimator", version, about = "Hamiltonian factorization and fault-tolerant resource estimation")]
struct Cli {
    /// Run-config TOML (used by `report`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base random seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory override for `report` (top-level flag)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sf,
    Df,
    Thc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Sf => Method::Sf,
            MethodArg::Df => Method::Df,
            MethodArg::Thc => Method::Thc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse an FCIDUMP file into the binary Hamiltonian form
    Ingest {
        #[arg(long)]
        fcidump: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Factorize the two-electron tensor (SF, DF, or THC)
    Factorize {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Retained rank (required for THC; alternative to threshold for SF/DF)
        #[arg(long)]
        rank: Option<usize>,
        /// Cholesky residual-diagonal threshold (Hartree)
        #[arg(long)]
        threshold: Option<f64>,
        /// Eigenvalue truncation threshold for DF leaves
        #[arg(long, default_value_t = 1e-8)]
        eig_threshold: f64,
        #[arg(long, default_value_t = 200)]
        sweeps: usize,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Coefficient L1 norms of a factor archive
    Lambda {
        #[arg(long)]
        factors: PathBuf,
        #[arg(long)]
        ham: PathBuf,
        #[arg(long)]
        json: PathBuf,
    },
    /// Toffoli and logical-qubit estimates from a lambda report
    Cost {
        #[arg(long)]
        lambda_json: PathBuf,
        /// Phase-estimation precision (Hartree)
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps_trunc: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps_rot: f64,
        /// Fitted step-cost model JSON (defaults to the built-in calibration)
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Surface-code compilation of a logical cost report
    Compile {
        #[arg(long)]
        cost: PathBuf,
        /// Physical per-gate error rate
        #[arg(long, default_value_t = 1e-3)]
        p: f64,
        #[arg(long, default_value_t = 4)]
        factories: u64,
        #[arg(long, default_value_t = 1.0)]
        cycle_time_us: f64,
        #[arg(long, default_value_t = 10.0)]
        reaction_time_us: f64,
        #[arg(long)]
        json: PathBuf,
    },
    /// Exact ground state of a small active space
    Fci {
        #[arg(long)]
        ham: PathBuf,
        #[arg(long)]
        na: usize,
        #[arg(long)]
        nb: usize,
        #[arg(long)]
        json: PathBuf,
    },
    /// Scale a DMRG cost baseline to a target (k, M)
    Classical {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        target_k: usize,
        #[arg(long)]
        target_m: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Quantum-vs-classical wall-time comparison table
    Crossover {
        /// JSON list of QPU runtime points
        #[arg(long)]
        qpu: PathBuf,
        /// JSON list of DMRG cost points
        #[arg(long)]
        dmrg: PathBuf,
        #[arg(long, default_value_t = 2)]
        factories: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output CSV path (a .json sibling is written alongside)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a TOML config
    Report {},
}

#[derive(Serialize, Deserialize)]
struct LambdaReport {
    n_orbitals: usize,
    gamma: usize,
    #[serde(flatten)]
    breakdown: LambdaBreakdown,
}

#[derive(Serialize)]
struct FciReport {
    e0: f64,
    max_overlap: f64,
    argmax_alpha: String,
    argmax_beta: String,
    dimension: usize,
    degenerate: bool,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn load_ham(path: &PathBuf) -> Result<estimator_core::hamiltonian::Hamiltonian> {
    let file = std::fs::File::open(path)?;
    let (ham, _) = load_binary(BufReader::new(file))?;
    Ok(ham)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { fcidump, out } => {
            let file = std::fs::File::open(&fcidump)?;
            let ham = parse_fcidump(BufReader::new(file))?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            let sink = std::fs::File::create(&out)?;
            save_binary(&ham, None, BufWriter::new(sink))?;
            println!(
                "ingested {} orbitals ({}a, {}b) -> {}",
                ham.n_orbitals(),
                ham.n_alpha(),
                ham.n_beta(),
                out.display()
            );
            Ok(())
        }
        Command::Factorize {
            method,
            input,
            out,
            rank,
            threshold,
            eig_threshold,
            sweeps,
            max_iter,
            tol,
        } => {
            let ham = load_ham(&input)?;
            let method: Method = method.into();
            let stop = match (rank, threshold) {
                (Some(r), None) => CholeskyStop::Rank(r),
                (None, Some(t)) => CholeskyStop::Threshold(t),
                (None, None) => CholeskyStop::Threshold(1e-8),
                (Some(_), Some(_)) => {
                    return Err(Error::validation("give either --rank or --threshold, not both"))
                }
            };
            let factors = match method {
                Method::Sf => Factors::Sf(cholesky_sf(&ham, stop)?),
                Method::Df => {
                    let sf = cholesky_sf(&ham, stop)?;
                    Factors::Df(double_factorize(&sf, eig_threshold)?)
                }
                Method::Thc => {
                    let m = rank.ok_or_else(|| Error::validation("THC needs --rank"))?;
                    let sf = cholesky_sf(&ham, CholeskyStop::Threshold(threshold.unwrap_or(1e-8)))?;
                    let (_, init) = cp3_init(&sf, m, sweeps, cli.seed)?;
                    let opt = estimator_core::factor::thc_optimize(&ham, &init, max_iter, tol)?;
                    if !opt.converged {
                        eprintln!(
                            "warning: THC optimizer hit max_iter; best loss {:.6e}",
                            opt.final_loss
                        );
                    }
                    Factors::Thc(opt.factors)
                }
            };
            save_factors(&out, &factors, cli.seed)?;
            let err = factorization_error(&ham, &factors)?;
            println!(
                "{} factors: rank {}, gamma {}, frobenius error {:.6e} -> {}",
                factors.method(),
                factors.rank(),
                factors.gamma(),
                err,
                out.display()
            );
            Ok(())
        }
        Command::Lambda { factors, ham, json } => {
            let ham = load_ham(&ham)?;
            let f = load_factors(&factors)?;
            let breakdown = lambda_for(&ham, &f)?;
            let report = LambdaReport {
                n_orbitals: ham.n_orbitals(),
                gamma: f.gamma(),
                breakdown,
            };
            write_json(&json, &report)?;
            println!(
                "lambda_total {:.4} (T {:.4} + two-body {:.4}) -> {}",
                report.breakdown.lambda_total,
                report.breakdown.lambda_t,
                report.breakdown.lambda_two,
                json.display()
            );
            Ok(())
        }
        Command::Cost {
            lambda_json,
            eps,
            eps_trunc,
            eps_rot,
            model,
            out,
        } => {
            let report: LambdaReport = read_json(&lambda_json)?;
            let step_model: StepCostModel = match model {
                Some(path) => read_json(&path)?,
                None => default_step_cost_model()?,
            };
            let qubit_model = default_qubit_model();
            let budget = ErrorBudget {
                eps_pea: eps,
                eps_trunc,
                eps_rot,
            };
            let cost = logical_cost(
                report.breakdown.method,
                report.breakdown.lambda_total,
                report.n_orbitals,
                report.breakdown.rank,
                report.gamma,
                &budget,
                &step_model,
                &qubit_model,
            )?;
            write_json(&out, &cost)?;
            println!(
                "iterations {} x step cost {} = {} Toffolis, {} logical qubits -> {}",
                cost.iterations,
                cost.step_cost,
                cost.toffoli_count,
                cost.logical_qubits,
                out.display()
            );
            Ok(())
        }
        Command::Compile {
            cost,
            p,
            factories,
            cycle_time_us,
            reaction_time_us,
            json,
        } => {
            let cost: LogicalCost = read_json(&cost)?;
            let phys = PhysicalAssumptions {
                p_gate: p,
                cycle_time_us,
                reaction_time_us,
                n_factories: factories,
            };
            let plan = search_optimal(LogicalInputs::from(&cost), &phys)?;
            write_json(&json, &plan)?;
            println!(
                "distances (d1 {}, d2 {}, d_data {}): {} physical qubits, {:.1} h, p_fail {:.3} -> {}",
                plan.d1,
                plan.d2,
                plan.d_data,
                plan.physical_qubits,
                plan.runtime_hours,
                plan.p_fail_total,
                json.display()
            );
            Ok(())
        }
        Command::Fci { ham, na, nb, json } => {
            let ham = load_ham(&ham)?;
            let res = fci_ground_state(&ham, na, nb)?;
            let (overlap, det) = max_basis_overlap(&res);
            let report = FciReport {
                e0: res.e0,
                max_overlap: overlap,
                argmax_alpha: format!("{:#x}", det.0),
                argmax_beta: format!("{:#x}", det.1),
                dimension: res.basis.len(),
                degenerate: res.degenerate,
            };
            write_json(&json, &report)?;
            println!(
                "E0 = {:.10} Ha, max overlap {:.6} at ({}, {}) -> {}",
                report.e0,
                report.max_overlap,
                report.argmax_alpha,
                report.argmax_beta,
                json.display()
            );
            Ok(())
        }
        Command::Classical {
            baseline,
            target_k,
            target_m,
            json,
        } => {
            let base: DMRGCostPoint = read_json(&baseline)?;
            let scaled = dmrg_scale(&base, target_k, target_m)?;
            let text = serde_json::to_string_pretty(&scaled)?;
            match json {
                Some(path) => write_json(&path, &scaled)?,
                None => println!("{text}"),
            }
            eprintln!(
                "({}, {}) -> ({target_k}, {target_m}): {:.0} CPU-h, {:.0} GB memory, {:.0} GB disk",
                base.k, base.m_bond, scaled.cpu_hours, scaled.memory_gb, scaled.disk_gb
            );
            Ok(())
        }
        Command::Crossover {
            qpu,
            dmrg,
            factories,
            threads,
            out,
        } => {
            let qpu_points: Vec<QpuPoint> = read_json(&qpu)?;
            let dmrg_points: Vec<DMRGCostPoint> = read_json(&dmrg)?;
            let table = crossover_table(&qpu_points, &dmrg_points, factories, threads)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            let mut csv = Vec::new();
            write_crossover_csv(&table, &mut csv)?;
            std::fs::write(&out, csv)?;
            let json_path = out.with_extension("json");
            write_json(&json_path, &table)?;
            for mark in &table.crossovers {
                match mark.n_crossover {
                    Some(n) => println!(
                        "{} @ M = {}: QPU wall time wins from N = {n}",
                        mark.method, mark.bond_dim
                    ),
                    None => println!(
                        "{} @ M = {}: no crossover on this grid",
                        mark.method, mark.bond_dim
                    ),
                }
            }
            println!("table -> {} and {}", out.display(), json_path.display());
            Ok(())
        }
        Command::Report {} => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::validation("report needs --config CONFIG.toml"))?;
            let text = std::fs::read_to_string(path)?;
            let mut config = RunConfig::from_toml(&text)?;
            if cli.seed != 0 {
                config.seed = cli.seed;
            }
            if cli.workers != 0 {
                config.workers = cli.workers;
            }
            if let Some(dir) = &cli.out {
                config.out_dir = dir.clone();
            }
            let bundle = run_pipeline(&config)?;
            let ok = bundle.cells.iter().filter(|c| c.status == "ok").count();
            let failed = bundle.cells.len() - ok;
            println!(
                "pipeline: {} cells ok, {} failed -> {}",
                ok,
                failed,
                config.out_dir.join("report.json").display()
            );
            if failed > 0 {
                for cell in bundle.cells.iter().filter(|c| c.status != "ok") {
                    eprintln!(
                        "  cell ({}, {}, rank {}): {}",
                        cell.system,
                        cell.method,
                        cell.rank,
                        cell.error.as_deref().unwrap_or("unknown")
                    );
                }
                return Err(Error::infeasible(format!("{failed} pipeline cells failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut stderr = std::io::stderr();
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::Parse(_) | Error::Validation(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
