//! Pipeline orchestration and report emission.
//!
//! A run walks ingest -> factorize -> lambda -> logical cost -> surface plan
//! for every (system, method, rank) cell, optionally adds the classical DMRG
//! comparison, and writes a JSON report bundle plus factor archives and
//! plot-ready series. Outputs are deterministic for a fixed config and seed:
//! timestamps go to a provenance side-file, never into the bundle.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::{dmrg_scale, DMRGCostPoint};
use crate::factor::{
    factorization_error, factorize_at_rank, save_factors, Method, RankSearchConfig,
};
use crate::hamiltonian::{load_binary, parse_fcidump, Hamiltonian, SymmetryReport};
use crate::lambda::{lambda_for, LambdaBreakdown};
use crate::logical::{
    default_qubit_model, default_step_cost_model, logical_cost, ErrorBudget, LogicalCost,
};
use crate::surface::{search_optimal, LogicalInputs, PhysicalAssumptions, SurfacePlan};
use crate::{Error, Result};

/// Source of one system's integrals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fcidump: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ham_bin: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_orbitals: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub seed: u64,
}

/// Per-method rank grids.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RankGrids {
    #[serde(default)]
    pub sf: Vec<usize>,
    #[serde(default)]
    pub df: Vec<usize>,
    #[serde(default)]
    pub thc: Vec<usize>,
}

impl RankGrids {
    fn for_method(&self, method: Method) -> &[usize] {
        match method {
            Method::Sf => &self.sf,
            Method::Df => &self.df,
            Method::Thc => &self.thc,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorizeParams {
    pub cholesky_threshold: f64,
    pub df_eig_threshold: f64,
    pub cp3_sweeps: usize,
    pub thc_max_iter: usize,
    pub thc_tol: f64,
}

impl Default for FactorizeParams {
    fn default() -> Self {
        let d = RankSearchConfig::default();
        FactorizeParams {
            cholesky_threshold: d.cholesky_threshold,
            df_eig_threshold: d.df_eig_threshold,
            cp3_sweeps: d.cp3_sweeps,
            thc_max_iter: d.thc_max_iter,
            thc_tol: d.thc_tol,
        }
    }
}

impl FactorizeParams {
    fn as_search_config(&self) -> RankSearchConfig {
        RankSearchConfig {
            cholesky_threshold: self.cholesky_threshold,
            df_eig_threshold: self.df_eig_threshold,
            cp3_sweeps: self.cp3_sweeps,
            thc_max_iter: self.thc_max_iter,
            thc_tol: self.thc_tol,
        }
    }
}

/// Optional classical-comparison stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalConfig {
    pub baseline: DMRGCostPoint,
    pub bond_dims: Vec<usize>,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    1
}

/// Full run configuration; serialized into every output for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    pub methods: Vec<Method>,
    pub systems: Vec<SystemConfig>,
    #[serde(default)]
    pub ranks: RankGrids,
    #[serde(default)]
    pub budget: ErrorBudget,
    #[serde(default)]
    pub physical: PhysicalAssumptions,
    #[serde(default)]
    pub factorize: FactorizeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::parse(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::validation("method list is empty"));
        }
        if self.systems.is_empty() {
            return Err(Error::validation("no systems configured"));
        }
        for sys in &self.systems {
            let sources =
                sys.fcidump.is_some() as u8 + sys.ham_bin.is_some() as u8 + sys.synthetic.is_some() as u8;
            if sources != 1 {
                return Err(Error::validation(format!(
                    "system {:?} must have exactly one of fcidump, ham_bin, synthetic",
                    sys.name
                )));
            }
        }
        for &m in &self.methods {
            if self.ranks.for_method(m).is_empty() {
                return Err(Error::validation(format!("no rank grid for method {m}")));
            }
        }
        self.budget.validate()?;
        self.physical.validate()?;
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemReport {
    pub name: String,
    pub n_orbitals: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub e_core: f64,
    pub symmetry: SymmetryReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub method: Method,
    pub rank: usize,
    pub gamma: usize,
    pub frobenius_error: f64,
    pub archive_path: PathBuf,
    pub seed: u64,
}

/// One (system, method, rank) pipeline cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub system: String,
    pub method: Method,
    pub rank: usize,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorization: Option<FactorizationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logical_cost: Option<LogicalCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_plan: Option<SurfacePlan>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config_hash: String,
    pub calibration_versions: BTreeMap<String, String>,
    pub config: RunConfig,
    pub systems: Vec<SystemReport>,
    pub cells: Vec<CellReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<Vec<ClassicalReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover: Option<CrossoverTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalReport {
    pub system: String,
    pub points: Vec<DMRGCostPoint>,
}

fn load_system(sys: &SystemConfig) -> Result<Hamiltonian> {
    if let Some(spec) = &sys.synthetic {
        return Ok(Hamiltonian::synthetic(
            spec.n_orbitals,
            spec.n_alpha,
            spec.n_beta,
            spec.seed,
        ));
    }
    if let Some(path) = &sys.fcidump {
        let file = std::fs::File::open(path)?;
        return parse_fcidump(std::io::BufReader::new(file));
    }
    if let Some(path) = &sys.ham_bin {
        let file = std::fs::File::open(path)?;
        let (ham, _) = load_binary(std::io::BufReader::new(file))?;
        return Ok(ham);
    }
    Err(Error::validation(format!("system {:?} has no source", sys.name)))
}

fn cell_seed(base: u64, system_idx: usize, method: Method, rank: usize) -> u64 {
    let m = match method {
        Method::Sf => 1u64,
        Method::Df => 2,
        Method::Thc => 3,
    };
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((system_idx as u64) << 32)
        .wrapping_add(m << 16)
        .wrapping_add(rank as u64)
}

/// Execute the full pipeline. Cell failures are recorded in the bundle and
/// do not abort other cells.
pub fn run_pipeline(config: &RunConfig) -> Result<ReportBundle> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;

    let step_model = default_step_cost_model()?;
    let qubit_model = default_qubit_model();
    let mut calibration_versions = BTreeMap::new();
    calibration_versions.insert(
        "thc_step".to_string(),
        crate::logical::builtin_calibration().version.clone(),
    );
    calibration_versions.insert(
        "surface".to_string(),
        crate::surface::builtin_calibration().version.clone(),
    );

    let mut systems = Vec::new();
    let mut hams = Vec::new();
    for sys in &config.systems {
        let ham = load_system(sys)?;
        systems.push(SystemReport {
            name: sys.name.clone(),
            n_orbitals: ham.n_orbitals(),
            n_alpha: ham.n_alpha(),
            n_beta: ham.n_beta(),
            e_core: ham.e_core(),
            symmetry: ham.validate_symmetry(crate::hamiltonian::SYMMETRY_TOL)?,
        });
        hams.push(ham);
    }

    // cells in a fixed order: system-major, then method, then rank
    let mut cell_specs: Vec<(usize, Method, usize)> = Vec::new();
    for (si, _) in config.systems.iter().enumerate() {
        for &method in &config.methods {
            for &rank in config.ranks.for_method(method) {
                cell_specs.push((si, method, rank));
            }
        }
    }

    let search_cfg = config.factorize.as_search_config();
    let cells: Vec<CellReport> = cell_specs
        .par_iter()
        .map(|&(si, method, rank)| {
            let sys_name = config.systems[si].name.clone();
            let ham = &hams[si];
            let seed = cell_seed(config.seed, si, method, rank);
            let run = || -> Result<CellReport> {
                let factors = factorize_at_rank(ham, method, rank, seed, &search_cfg)?;
                let archive = config
                    .out_dir
                    .join("factors")
                    .join(&sys_name)
                    .join(format!("{method}_r{rank}"));
                save_factors(&archive, &factors, seed)?;
                let frob = factorization_error(ham, &factors)?;
                let lam = lambda_for(ham, &factors)?;
                let cost = logical_cost(
                    method,
                    lam.lambda_total,
                    ham.n_orbitals(),
                    rank,
                    factors.gamma(),
                    &config.budget,
                    &step_model,
                    &qubit_model,
                )?;
                let plan = search_optimal(LogicalInputs::from(&cost), &config.physical)?;
                Ok(CellReport {
                    system: sys_name.clone(),
                    method,
                    rank,
                    status: "ok".into(),
                    error: None,
                    factorization: Some(FactorizationReport {
                        method,
                        rank: factors.rank(),
                        gamma: factors.gamma(),
                        frobenius_error: frob,
                        archive_path: archive,
                        seed,
                    }),
                    lambda: Some(lam),
                    logical_cost: Some(cost),
                    surface_plan: Some(plan),
                })
            };
            run().unwrap_or_else(|e| CellReport {
                system: sys_name,
                method,
                rank,
                status: "error".into(),
                error: Some(e.to_string()),
                factorization: None,
                lambda: None,
                logical_cost: None,
                surface_plan: None,
            })
        })
        .collect();

    // classical comparison and crossover, when configured
    let (classical, crossover) = if let Some(cc) = &config.classical {
        let mut reports = Vec::new();
        let mut dmrg_points = Vec::new();
        for (si, sys) in config.systems.iter().enumerate() {
            let k = hams[si].n_orbitals();
            let mut points = Vec::new();
            for &m in &cc.bond_dims {
                let p = dmrg_scale(&cc.baseline, k, m)?;
                points.push(p.clone());
                dmrg_points.push(p);
            }
            reports.push(ClassicalReport {
                system: sys.name.clone(),
                points,
            });
        }
        let qpu: Vec<QpuPoint> = cells
            .iter()
            .filter_map(|c| {
                let plan = c.surface_plan.as_ref()?;
                Some(QpuPoint {
                    n_orbitals: systems
                        .iter()
                        .find(|s| s.name == c.system)
                        .map(|s| s.n_orbitals)?,
                    method: c.method,
                    runtime_hours: plan.runtime_hours,
                    n_factories: config.physical.n_factories,
                })
            })
            .collect();
        let table = if qpu.is_empty() {
            None
        } else {
            Some(crossover_table(
                &qpu,
                &dmrg_points,
                config.physical.n_factories,
                cc.threads,
            )?)
        };
        (Some(reports), table)
    } else {
        (None, None)
    };

    let bundle = ReportBundle {
        config_hash: config.config_hash(),
        calibration_versions,
        config: config.clone(),
        systems,
        cells,
        classical,
        crossover,
    };

    let json = serde_json::to_string_pretty(&bundle)?;
    std::fs::write(config.out_dir.join("report.json"), json)?;
    if let Some(table) = &bundle.crossover {
        let mut csv = Vec::new();
        write_crossover_csv(table, &mut csv)?;
        std::fs::write(config.out_dir.join("crossover.csv"), csv)?;
    }
    write_scaling_series(config, &bundle)?;
    write_provenance(&config.out_dir, &bundle.config_hash)?;
    Ok(bundle)
}

/// Per-method Toffoli and logical-qubit counts against the orbital count,
/// as log-log series with fitted slopes (needs at least two systems).
fn write_scaling_series(config: &RunConfig, bundle: &ReportBundle) -> Result<()> {
    let mut series = Vec::new();
    for &method in &config.methods {
        let mut points: Vec<(f64, f64, f64)> = bundle
            .cells
            .iter()
            .filter(|c| c.method == method && c.status == "ok")
            .filter_map(|c| {
                let cost = c.logical_cost.as_ref()?;
                Some((
                    cost.n_orbitals as f64,
                    cost.toffoli_count as f64,
                    cost.logical_qubits as f64,
                ))
            })
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        points.dedup_by(|a, b| a.0 == b.0);
        if points.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        series.push(Series::new(
            format!("toffoli_{method}"),
            "n_orbitals",
            "toffoli_count",
            xs.clone(),
            points.iter().map(|p| p.1).collect(),
            true,
        )?);
        series.push(Series::new(
            format!("logical_qubits_{method}"),
            "n_orbitals",
            "logical_qubits",
            xs,
            points.iter().map(|p| p.2).collect(),
            true,
        )?);
    }
    if series.is_empty() {
        return Ok(());
    }
    let dir = config.out_dir.join("plot_data");
    std::fs::create_dir_all(&dir)?;
    let mut json = Vec::new();
    emit_series(&series, PlotFormat::Json, &mut json)?;
    std::fs::write(dir.join("scaling_series.json"), json)?;
    let mut csv = Vec::new();
    emit_series(&series, PlotFormat::Csv, &mut csv)?;
    std::fs::write(dir.join("scaling_series.csv"), csv)?;
    Ok(())
}

fn write_provenance(out_dir: &Path, config_hash: &str) -> Result<()> {
    // wall-clock metadata lives here, outside the deterministic bundle
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "config_hash": config_hash,
        "unix_time": now,
        "crate_version": env!("CARGO_PKG_VERSION"),
    }))?;
    std::fs::write(out_dir.join("provenance.json"), text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// crossover table
// ---------------------------------------------------------------------------

/// One QPU runtime sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpuPoint {
    pub n_orbitals: usize,
    pub method: Method,
    pub runtime_hours: f64,
    pub n_factories: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub n_orbitals: usize,
    pub method: Method,
    pub qpu_hours: f64,
    /// Wall-clock DMRG hours, aligned with `bond_dims`.
    pub dmrg_hours: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverMark {
    pub method: Method,
    pub bond_dim: usize,
    /// Smallest orbital count where the QPU wall time beats DMRG, if any.
    pub n_crossover: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverTable {
    pub factories: u64,
    pub threads: usize,
    pub bond_dims: Vec<usize>,
    pub rows: Vec<CrossoverRow>,
    pub crossovers: Vec<CrossoverMark>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Join QPU runtimes against DMRG cost points on the orbital count and mark,
/// per bond dimension, the smallest size where the QPU wall time wins.
/// QPU runtimes rescale inversely with the factory count; DMRG CPU-hours
/// divide by the thread count.
pub fn crossover_table(
    qpu_reports: &[QpuPoint],
    dmrg_cost_points: &[DMRGCostPoint],
    factories: u64,
    threads: usize,
) -> Result<CrossoverTable> {
    if qpu_reports.is_empty() || dmrg_cost_points.is_empty() {
        return Err(Error::validation(
            "need at least one QPU report and one DMRG series",
        ));
    }
    if factories == 0 || threads == 0 {
        return Err(Error::validation("factories and threads must be positive"));
    }
    let mut bond_dims: Vec<usize> = dmrg_cost_points.iter().map(|p| p.m_bond).collect();
    bond_dims.sort_unstable();
    bond_dims.dedup();

    let mut dmrg: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for p in dmrg_cost_points {
        dmrg.entry(p.k).or_default().insert(p.m_bond, p.cpu_hours);
    }

    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let mut sorted_qpu: Vec<&QpuPoint> = qpu_reports.iter().collect();
    sorted_qpu.sort_by_key(|p| (p.n_orbitals, p.method as u8));
    for q in sorted_qpu {
        let Some(series) = dmrg.get(&q.n_orbitals) else {
            warnings.push(format!(
                "no DMRG points at N = {}, dropping QPU row",
                q.n_orbitals
            ));
            continue;
        };
        let mut dmrg_hours = Vec::with_capacity(bond_dims.len());
        let mut complete = true;
        for &m in &bond_dims {
            match series.get(&m) {
                Some(&cpu) => dmrg_hours.push(cpu / threads as f64),
                None => {
                    complete = false;
                    warnings.push(format!(
                        "missing DMRG point (N = {}, M = {m})",
                        q.n_orbitals
                    ));
                }
            }
        }
        if !complete {
            continue;
        }
        rows.push(CrossoverRow {
            n_orbitals: q.n_orbitals,
            method: q.method,
            qpu_hours: q.runtime_hours * q.n_factories as f64 / factories as f64,
            dmrg_hours,
        });
    }
    if rows.is_empty() {
        return Err(Error::validation(
            "QPU and DMRG grids share no orbital counts",
        ));
    }
    rows.sort_by_key(|r| (r.n_orbitals, r.method as u8));
    let crossovers = compute_crossovers(&rows, &bond_dims);
    Ok(CrossoverTable {
        factories,
        threads,
        bond_dims,
        rows,
        crossovers,
        warnings,
    })
}

fn compute_crossovers(rows: &[CrossoverRow], bond_dims: &[usize]) -> Vec<CrossoverMark> {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort_by_key(|m| *m as u8);
    methods.dedup();
    let mut marks = Vec::new();
    for method in methods {
        for (bi, &m) in bond_dims.iter().enumerate() {
            let n_crossover = rows
                .iter()
                .filter(|r| r.method == method)
                .find(|r| r.qpu_hours < r.dmrg_hours[bi])
                .map(|r| r.n_orbitals);
            marks.push(CrossoverMark {
                method,
                bond_dim: m,
                n_crossover,
            });
        }
    }
    marks
}

/// RFC-4180 CSV with deterministic column order:
/// `n_orbitals,method,qpu_hours,dmrg_hours_m<bd>...,qpu_factories,dmrg_threads`.
pub fn write_crossover_csv<W: Write>(table: &CrossoverTable, mut w: W) -> Result<()> {
    let mut header = vec!["n_orbitals".to_string(), "method".into(), "qpu_hours".into()];
    for &m in &table.bond_dims {
        header.push(format!("dmrg_hours_m{m}"));
    }
    header.push("qpu_factories".into());
    header.push("dmrg_threads".into());
    writeln!(w, "{}", header.join(","))?;
    for row in &table.rows {
        let mut fields = vec![
            row.n_orbitals.to_string(),
            row.method.to_string(),
            format!("{}", row.qpu_hours),
        ];
        for v in &row.dmrg_hours {
            fields.push(format!("{v}"));
        }
        fields.push(table.factories.to_string());
        fields.push(table.threads.to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Parse a table written by [`write_crossover_csv`].
pub fn parse_crossover_csv<R: BufRead>(r: R) -> Result<CrossoverTable> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty CSV"))??;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 5 || cols[0] != "n_orbitals" || cols[1] != "method" || cols[2] != "qpu_hours" {
        return Err(Error::parse("unexpected crossover CSV header"));
    }
    let n_dmrg = cols.len() - 5;
    let mut bond_dims = Vec::with_capacity(n_dmrg);
    for c in &cols[3..3 + n_dmrg] {
        let m = c
            .strip_prefix("dmrg_hours_m")
            .ok_or_else(|| Error::parse(format!("bad DMRG column {c:?}")))?;
        bond_dims.push(
            m.parse::<usize>()
                .map_err(|_| Error::parse(format!("bad bond dimension in {c:?}")))?,
        );
    }
    let mut rows = Vec::new();
    let mut factories = 0u64;
    let mut threads = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(format!("row width mismatch: {line:?}")));
        }
        let method = match fields[1] {
            "sf" => Method::Sf,
            "df" => Method::Df,
            "thc" => Method::Thc,
            other => return Err(Error::parse(format!("unknown method {other:?}"))),
        };
        let mut dmrg_hours = Vec::with_capacity(n_dmrg);
        for f in &fields[3..3 + n_dmrg] {
            dmrg_hours.push(
                f.parse::<f64>()
                    .map_err(|_| Error::parse(format!("bad float {f:?}")))?,
            );
        }
        factories = fields[3 + n_dmrg]
            .parse()
            .map_err(|_| Error::parse("bad factory count"))?;
        threads = fields[4 + n_dmrg]
            .parse()
            .map_err(|_| Error::parse("bad thread count"))?;
        rows.push(CrossoverRow {
            n_orbitals: fields[0]
                .parse()
                .map_err(|_| Error::parse("bad orbital count"))?,
            method,
            qpu_hours: fields[2]
                .parse()
                .map_err(|_| Error::parse("bad qpu hours"))?,
            dmrg_hours,
        });
    }
    let crossovers = compute_crossovers(&rows, &bond_dims);
    Ok(CrossoverTable {
        factories,
        threads,
        bond_dims,
        rows,
        crossovers,
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// plot data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Csv,
    Json,
}

impl std::str::FromStr for PlotFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(PlotFormat::Csv),
            "json" => Ok(PlotFormat::Json),
            other => Err(Error::validation(format!("unknown plot format {other:?}"))),
        }
    }
}

/// One plot-ready series with axis metadata; log-log series carry their
/// fitted slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub log_log: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
}

impl Series {
    pub fn new(
        label: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
        x: Vec<f64>,
        y: Vec<f64>,
        log_log: bool,
    ) -> Result<Series> {
        if x.len() != y.len() {
            return Err(Error::validation("series axes must have equal length"));
        }
        let slope = if log_log && x.len() >= 2 {
            Some(crate::linalg::fit_loglog(&x, &y)?.0)
        } else {
            None
        };
        Ok(Series {
            label: label.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x,
            y,
            log_log,
            slope,
        })
    }
}

/// Emit series in the requested format (JSON object list or CSV columns).
pub fn emit_series<W: Write>(series: &[Series], format: PlotFormat, mut w: W) -> Result<()> {
    match format {
        PlotFormat::Json => {
            let text = serde_json::to_string_pretty(series)?;
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            Ok(())
        }
        PlotFormat::Csv => {
            for s in series {
                writeln!(w, "series,{}", s.label)?;
                writeln!(w, "{},{}", s.x_label, s.y_label)?;
                for (x, y) in s.x.iter().zip(&s.y) {
                    writeln!(w, "{x},{y}")?;
                }
            }
            Ok(())
        }
    }
}
