//! Logical-resource cost models for qubitized phase estimation.
//!
//! The iteration count is `ceil(pi * lambda / (2 * eps))`. Per-iteration
//! Toffoli cost follows a calibrated model: an affine-in-rank law for THC
//! fitted against a reference convergence sweep, which doubles as a generic
//! `a * sqrt(Gamma) + b` law for the other factorizations through the
//! information content `Gamma` of the factor set. Logical qubit counts use
//! a plateau table (system qubits plus a rank-driven ancilla step function).

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::factor::Method;
use crate::linalg::{fit_affine, fit_loglog};
use crate::{Error, Result};

/// Separate error allowances; they add across sources.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// Phase-estimation precision (Hartree).
    pub eps_pea: f64,
    /// Factorization truncation allowance (Hartree).
    pub eps_trunc: f64,
    /// Rotation-synthesis / table-lookup rounding allowance (dimensionless).
    pub eps_rot: f64,
}

impl Default for ErrorBudget {
    fn default() -> Self {
        ErrorBudget {
            eps_pea: 1.0e-3,
            eps_trunc: 1.0e-3,
            eps_rot: 1.0e-3,
        }
    }
}

impl ErrorBudget {
    pub fn validate(&self) -> Result<()> {
        if self.eps_pea <= 0.0 || self.eps_trunc <= 0.0 || self.eps_rot <= 0.0 {
            return Err(Error::validation("error budget components must be positive"));
        }
        Ok(())
    }
}

/// Phase-estimation iteration count `ceil(pi * lambda / (2 * eps))`.
pub fn pea_iterations(lambda: f64, eps_pea: f64) -> Result<u64> {
    if !(lambda > 0.0) {
        return Err(Error::validation("lambda must be positive"));
    }
    if !(eps_pea > 0.0) {
        return Err(Error::validation("eps_pea must be positive"));
    }
    let raw = (std::f64::consts::PI * lambda / (2.0 * eps_pea)).ceil();
    if !raw.is_finite() || raw > u64::MAX as f64 {
        return Err(Error::numerical("iteration count overflow"));
    }
    Ok((raw as u64).max(1))
}

/// Affine per-iteration Toffoli cost, `C(M) = alpha * M + beta`, with the
/// generic form `C = alpha * sqrt(Gamma) + beta` for non-THC factorizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepCostModel {
    pub alpha: f64,
    pub beta: f64,
    /// Rank domain covered by the fit; predictions outside are flagged.
    pub rank_min: f64,
    pub rank_max: f64,
    pub max_rel_residual: f64,
    pub eps_pea: f64,
    pub provenance: String,
}

impl StepCostModel {
    pub fn step_cost(&self, rank: f64) -> f64 {
        self.alpha * rank + self.beta
    }
    pub fn step_cost_from_gamma(&self, gamma: f64) -> f64 {
        self.step_cost(gamma.sqrt())
    }
    pub fn covers(&self, rank: f64) -> bool {
        rank >= self.rank_min && rank <= self.rank_max
    }
}

/// Fit the affine per-step law from (rank, lambda, toffoli) rows generated at
/// a common phase-estimation precision.
pub fn fit_step_cost(rows: &[(f64, f64, f64)], eps_pea: f64) -> Result<StepCostModel> {
    if rows.len() < 2 {
        return Err(Error::validation("need at least two calibration rows"));
    }
    let mut ranks = Vec::with_capacity(rows.len());
    let mut costs = Vec::with_capacity(rows.len());
    for &(rank, lambda, toffoli) in rows {
        let iters = pea_iterations(lambda, eps_pea)? as f64;
        ranks.push(rank);
        costs.push(toffoli / iters);
    }
    let (alpha, beta) = fit_affine(&ranks, &costs)?;
    let mut max_rel = 0.0f64;
    for (r, c) in ranks.iter().zip(&costs) {
        let pred = alpha * r + beta;
        max_rel = max_rel.max((pred - c).abs() / c.abs().max(1e-300));
    }
    let rank_min = ranks.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank_max = ranks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(StepCostModel {
        alpha,
        beta,
        rank_min,
        rank_max,
        max_rel_residual: max_rel,
        eps_pea,
        provenance: format!("affine fit over {} rows at eps_pea = {eps_pea}", rows.len()),
    })
}

/// Toffoli count broken into its exact factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToffoliEstimate {
    pub iterations: u64,
    pub step_cost: u64,
    pub toffoli: u64,
    /// Set when the rank lies outside the fitted domain.
    pub extrapolated: bool,
}

/// `I(lambda, eps) x round(C_step(rank))`.
pub fn toffoli_count(
    model: &StepCostModel,
    lambda: f64,
    eps_pea: f64,
    rank: f64,
) -> Result<ToffoliEstimate> {
    let iterations = pea_iterations(lambda, eps_pea)?;
    let c = model.step_cost(rank);
    if c <= 0.0 {
        return Err(Error::numerical(format!(
            "predicted per-step cost {c:.3} is not positive at rank {rank}"
        )));
    }
    let step_cost = c.round() as u64;
    let toffoli = iterations
        .checked_mul(step_cost)
        .ok_or_else(|| Error::numerical("toffoli count overflow"))?;
    Ok(ToffoliEstimate {
        iterations,
        step_cost,
        toffoli,
        extrapolated: !model.covers(rank),
    })
}

/// Logical-qubit plateau model: `2N` system qubits plus a non-decreasing
/// ancilla step function of the rank, calibrated at reference points.
/// Between calibration points the model holds the last plateau.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QubitModel {
    /// (rank breakpoint, ancilla count) pairs, ascending in rank.
    pub breakpoints: Vec<(usize, usize)>,
    /// Orbital count of the calibration system.
    pub calibrated_n: usize,
}

impl QubitModel {
    pub fn logical_qubit_count(&self, n_orbitals: usize, rank: usize) -> Result<usize> {
        if self.breakpoints.is_empty() {
            return Err(Error::validation("uncalibrated qubit model"));
        }
        let mut ancilla = self.breakpoints[0].1;
        for &(r, a) in &self.breakpoints {
            if rank >= r {
                ancilla = a;
            } else {
                break;
            }
        }
        Ok(2 * n_orbitals + ancilla)
    }
}

/// Full logical-cost report for one (system, method, rank) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogicalCost {
    pub method: Method,
    pub iterations: u64,
    pub step_cost: u64,
    pub toffoli_count: u64,
    pub logical_qubits: usize,
    pub lambda: f64,
    pub eps_pea: f64,
    pub n_orbitals: usize,
    pub rank: usize,
    pub extrapolated: bool,
    pub budget: ErrorBudget,
    pub model_provenance: String,
}

/// Assemble a [`LogicalCost`] from the calibrated models.
pub fn logical_cost(
    method: Method,
    lambda: f64,
    n_orbitals: usize,
    rank: usize,
    gamma: usize,
    budget: &ErrorBudget,
    step_model: &StepCostModel,
    qubit_model: &QubitModel,
) -> Result<LogicalCost> {
    budget.validate()?;
    let effective_rank = match method {
        Method::Thc => rank as f64,
        // generic route: the sqrt of the information content plays the rank role
        Method::Sf | Method::Df => (gamma as f64).sqrt(),
    };
    let est = toffoli_count(step_model, lambda, budget.eps_pea, effective_rank)?;
    let logical_qubits = qubit_model.logical_qubit_count(n_orbitals, rank)?;
    Ok(LogicalCost {
        method,
        iterations: est.iterations,
        step_cost: est.step_cost,
        toffoli_count: est.toffoli,
        logical_qubits,
        lambda,
        eps_pea: budget.eps_pea,
        n_orbitals,
        rank,
        extrapolated: est.extrapolated,
        budget: budget.clone(),
        model_provenance: step_model.provenance.clone(),
    })
}

/// Power-law fit `y = exp(ln_coeff) * n^exponent` on log-log axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub ln_coeff: f64,
    pub max_rel_residual: f64,
    pub n_min: f64,
    pub n_max: f64,
}

pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 2 {
        return Err(Error::validation("need at least two points for a scaling fit"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (s, c) = fit_loglog(&xs, &ys)?;
    let mut max_rel = 0.0f64;
    for (x, y) in xs.iter().zip(&ys) {
        let pred = (c + s * x.ln()).exp();
        max_rel = max_rel.max((pred - y).abs() / y);
    }
    Ok(ScalingFit {
        exponent: s,
        ln_coeff: c,
        max_rel_residual: max_rel,
        n_min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
        n_max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

impl ScalingFit {
    pub fn predict(&self, n: f64) -> Result<f64> {
        if n < self.n_min {
            return Err(Error::validation(format!(
                "target {n} below the smallest fitted point {}",
                self.n_min
            )));
        }
        Ok((self.ln_coeff + self.exponent * n.ln()).exp())
    }
}

/// Extrapolate fitted Toffoli and qubit power laws to a target orbital count.
pub fn extrapolate_cost(
    toffoli_fit: &ScalingFit,
    qubit_fit: &ScalingFit,
    target_n: f64,
) -> Result<(f64, f64)> {
    Ok((toffoli_fit.predict(target_n)?, qubit_fit.predict(target_n)?))
}

// ---------------------------------------------------------------------------
// built-in calibration table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub rank: usize,
    pub eri_residual: f64,
    pub energy_error_mha: f64,
    pub lambda: f64,
    pub toffoli: f64,
    pub logical_qubits: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub version: String,
    pub description: String,
    pub eps_pea_hartree: f64,
    pub n_orbitals: usize,
    pub rows: Vec<CalibrationRow>,
}

static BUILTIN: OnceLock<CalibrationTable> = OnceLock::new();

/// Reference THC convergence sweep shipped with the crate.
pub fn builtin_calibration() -> &'static CalibrationTable {
    BUILTIN.get_or_init(|| {
        serde_json::from_str(include_str!("../data/thc_step_calibration.json"))
            .expect("embedded calibration table is valid JSON")
    })
}

/// Step-cost model fitted from the built-in calibration sweep.
pub fn default_step_cost_model() -> Result<StepCostModel> {
    let table = builtin_calibration();
    let rows: Vec<(f64, f64, f64)> = table
        .rows
        .iter()
        .map(|r| (r.rank as f64, r.lambda, r.toffoli))
        .collect();
    let mut model = fit_step_cost(&rows, table.eps_pea_hartree)?;
    model.provenance = format!(
        "builtin calibration v{} ({} rows, N = {})",
        table.version,
        table.rows.len(),
        table.n_orbitals
    );
    Ok(model)
}

/// Qubit plateau model from the built-in calibration sweep.
pub fn default_qubit_model() -> QubitModel {
    let table = builtin_calibration();
    let base = 2 * table.n_orbitals;
    let mut breakpoints: Vec<(usize, usize)> = Vec::new();
    for row in &table.rows {
        let ancilla = row.logical_qubits - base;
        match breakpoints.last() {
            Some(&(_, last)) if last == ancilla => {}
            _ => breakpoints.push((row.rank, ancilla)),
        }
    }
    QubitModel {
        breakpoints,
        calibrated_n: table.n_orbitals,
    }
}
