//! Surface-code compilation: code distances, factory configuration, physical
//! qubits, runtime, and failure probability for a given logical workload.
//!
//! The grid search picks the feasible configuration (total failure at most
//! 10%) with the least spacetime volume. Execution time is bottlenecked by
//! magic-state production, so runtime is the Toffoli count divided across
//! factories times the per-state period. Space is the routed data block plus
//! the factory footprints; the 50% routing overhead applies to the data
//! block only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::logical::LogicalCost;
use crate::{Error, Result};

/// Hardware assumptions for the compilation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalAssumptions {
    /// Physical per-gate error rate.
    pub p_gate: f64,
    /// Surface-code cycle time in microseconds.
    pub cycle_time_us: f64,
    /// Control-system reaction time in microseconds (provenance only).
    pub reaction_time_us: f64,
    pub n_factories: u64,
}

impl Default for PhysicalAssumptions {
    fn default() -> Self {
        PhysicalAssumptions {
            p_gate: 1e-3,
            cycle_time_us: 1.0,
            reaction_time_us: 10.0,
            n_factories: 4,
        }
    }
}

impl PhysicalAssumptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_gate > 0.0 && self.p_gate < 0.5) {
            return Err(Error::validation("p_gate must lie in (0, 0.5)"));
        }
        if self.cycle_time_us <= 0.0 || self.reaction_time_us <= 0.0 {
            return Err(Error::validation("times must be positive"));
        }
        if self.n_factories == 0 {
            return Err(Error::validation("need at least one factory"));
        }
        Ok(())
    }
}

/// Logical workload to compile.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogicalInputs {
    pub toffoli: u64,
    pub logical_qubits: u64,
}

impl From<&LogicalCost> for LogicalInputs {
    fn from(c: &LogicalCost) -> Self {
        LogicalInputs {
            toffoli: c.toffoli_count,
            logical_qubits: c.logical_qubits as u64,
        }
    }
}

/// A fully specified surface-code configuration and its predicted resources.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfacePlan {
    pub d_data: u64,
    pub d1: u64,
    pub d2: u64,
    pub physical_qubits: u64,
    pub data_block_qubits: u64,
    pub factory_qubits: u64,
    pub period_cycles: u64,
    pub total_cycles: u64,
    pub runtime_hours: f64,
    pub p_fail_total: f64,
    /// physical qubits x runtime (qubit-hours).
    pub spacetime_volume: f64,
    /// Set for p below 1e-5, where this error-correction model is a stretch.
    pub advisory: bool,
    pub calibration_version: String,
}

/// Model coefficients; see the embedded calibration file for meanings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceCalibration {
    pub version: String,
    pub description: String,
    pub logical_prefactor: f64,
    pub logical_threshold: f64,
    pub inj_cubic: f64,
    pub level1_volume: f64,
    pub combine: f64,
    pub level2_volume: f64,
    pub footprint_d1_sq: f64,
    pub footprint_d2_sq: f64,
    pub period_slope: f64,
    pub period_offset: f64,
    pub anchor: serde_json::Value,
}

static BUILTIN: OnceLock<SurfaceCalibration> = OnceLock::new();

pub fn builtin_calibration() -> &'static SurfaceCalibration {
    BUILTIN.get_or_init(|| {
        serde_json::from_str(include_str!("../data/surface_calibration.json"))
            .expect("embedded surface calibration is valid JSON")
    })
}

/// Logical failure probability per qubit per code cycle:
/// `prefactor * (p / threshold)^((d+1)/2)`.
pub fn logical_failure_rate(cal: &SurfaceCalibration, p_gate: f64, d: u64) -> Result<f64> {
    if p_gate >= cal.logical_threshold {
        return Err(Error::validation(format!(
            "p_gate {p_gate} at or above threshold {}",
            cal.logical_threshold
        )));
    }
    if p_gate <= 0.0 {
        return Err(Error::validation("p_gate must be positive"));
    }
    Ok(cal.logical_prefactor * (p_gate / cal.logical_threshold).powf((d as f64 + 1.0) / 2.0))
}

/// Footprint, production period, and per-Toffoli failure of one factory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FactoryModel {
    pub footprint: u64,
    pub period_cycles: u64,
    pub p_fail_per_toffoli: f64,
}

pub fn factory_model(
    cal: &SurfaceCalibration,
    d1: u64,
    d2: u64,
    p_gate: f64,
) -> Result<FactoryModel> {
    if d1 % 2 == 0 || d2 % 2 == 0 {
        return Err(Error::validation("factory code distances must be odd"));
    }
    let ratio = p_gate / cal.logical_threshold;
    let e1 = cal.inj_cubic * p_gate.powi(3) + cal.level1_volume * ratio.powf((d1 as f64 + 1.0) / 2.0);
    let p_tof = cal.combine * e1 * e1 + cal.level2_volume * ratio.powf((d2 as f64 + 1.0) / 2.0);
    let footprint =
        (cal.footprint_d1_sq * (d1 * d1) as f64 + cal.footprint_d2_sq * (d2 * d2) as f64).round();
    let period = (cal.period_slope * d2 as f64 + cal.period_offset).round();
    if period < 1.0 {
        return Err(Error::numerical("factory period below one cycle"));
    }
    Ok(FactoryModel {
        footprint: footprint as u64,
        period_cycles: period as u64,
        p_fail_per_toffoli: p_tof,
    })
}

/// Resource prediction for explicit code distances.
///
/// `physical_qubits = 1.5 * logical_qubits * 2 d_data^2 + n_factories * footprint`;
/// `runtime = toffoli / n_factories * period * cycle_time`;
/// failure combines per-cycle data errors and per-Toffoli factory errors.
pub fn compile_config(
    logical: LogicalInputs,
    phys: &PhysicalAssumptions,
    d1: u64,
    d2: u64,
    d_data: u64,
) -> Result<SurfacePlan> {
    compile_config_with(builtin_calibration(), logical, phys, d1, d2, d_data)
}

pub fn compile_config_with(
    cal: &SurfaceCalibration,
    logical: LogicalInputs,
    phys: &PhysicalAssumptions,
    d1: u64,
    d2: u64,
    d_data: u64,
) -> Result<SurfacePlan> {
    phys.validate()?;
    if d_data % 2 == 0 || d_data < 3 {
        return Err(Error::validation("data code distance must be odd and >= 3"));
    }
    let factory = factory_model(cal, d1, d2, phys.p_gate)?;
    let p_l = logical_failure_rate(cal, phys.p_gate, d_data)?;

    // 1.5 routing overhead on the data block: 1.5 * Q * 2d^2 = 3 Q d^2
    let data_block = 3 * logical.logical_qubits * d_data * d_data;
    let factory_qubits = phys.n_factories * factory.footprint;
    let physical_qubits = data_block + factory_qubits;

    let states_per_factory = logical.toffoli.div_ceil(phys.n_factories);
    let total_cycles = states_per_factory * factory.period_cycles;
    let runtime_hours = total_cycles as f64 * phys.cycle_time_us * 1e-6 / 3600.0;

    let qubit_cycles = logical.logical_qubits as f64 * total_cycles as f64;
    let p_tof = factory.p_fail_per_toffoli.min(0.999_999);
    let log_success = qubit_cycles * (-p_l).ln_1p() + logical.toffoli as f64 * (-p_tof).ln_1p();
    let p_fail_total = 1.0 - log_success.exp();

    Ok(SurfacePlan {
        d_data,
        d1,
        d2,
        physical_qubits,
        data_block_qubits: data_block,
        factory_qubits,
        period_cycles: factory.period_cycles,
        total_cycles,
        runtime_hours,
        p_fail_total,
        spacetime_volume: physical_qubits as f64 * runtime_hours,
        advisory: phys.p_gate < 1e-5,
        calibration_version: cal.version.clone(),
    })
}

/// Search grids (odd distances).
pub const D_DATA_GRID: std::ops::RangeInclusive<u64> = 3..=51;
pub const D1_GRID: std::ops::RangeInclusive<u64> = 7..=25;
pub const D2_GRID: std::ops::RangeInclusive<u64> = 15..=41;

/// Acceptance bound on the total failure probability.
pub const MAX_FAILURE: f64 = 0.1;

fn odd_values(range: std::ops::RangeInclusive<u64>) -> Vec<u64> {
    range.filter(|d| d % 2 == 1).collect()
}

/// Exhaustive grid search for the feasible plan with the least spacetime
/// volume. Ties break toward smaller `d_data`, then smaller `d2`, then
/// smaller `d1`, so the result is schedule-independent.
pub fn search_optimal(logical: LogicalInputs, phys: &PhysicalAssumptions) -> Result<SurfacePlan> {
    search_optimal_with(builtin_calibration(), logical, phys)
}

pub fn search_optimal_with(
    cal: &SurfaceCalibration,
    logical: LogicalInputs,
    phys: &PhysicalAssumptions,
) -> Result<SurfacePlan> {
    phys.validate()?;
    let configs: Vec<(u64, u64, u64)> = odd_values(D_DATA_GRID)
        .into_iter()
        .flat_map(|dd| {
            odd_values(D1_GRID).into_iter().flat_map(move |d1| {
                odd_values(D2_GRID).into_iter().map(move |d2| (dd, d1, d2))
            })
        })
        .collect();
    let best = configs
        .par_iter()
        .filter_map(|&(dd, d1, d2)| {
            compile_config_with(cal, logical, phys, d1, d2, dd)
                .ok()
                .filter(|plan| plan.p_fail_total <= MAX_FAILURE)
        })
        .min_by(|a, b| {
            (a.spacetime_volume, a.d_data, a.d2, a.d1)
                .partial_cmp(&(b.spacetime_volume, b.d_data, b.d2, b.d1))
                .expect("volumes are finite")
        });
    best.ok_or_else(|| {
        Error::infeasible(format!(
            "no feasible surface-code configuration on the grid at p = {}",
            phys.p_gate
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const REF: LogicalInputs = LogicalInputs {
        toffoli: 7_800_000_000,
        logical_qubits: 1434,
    };

    fn phys(p: f64, factories: u64) -> PhysicalAssumptions {
        PhysicalAssumptions {
            p_gate: p,
            n_factories: factories,
            ..Default::default()
        }
    }

    #[test]
    fn logical_rate_direct_evaluation() {
        let cal = builtin_calibration();
        let rate = logical_failure_rate(cal, 0.01 * 0.01, 3).unwrap();
        assert_abs_diff_eq!(rate, 1e-5, epsilon = 1e-18);
    }

    #[test]
    fn logical_rate_distance_step_ratio() {
        let cal = builtin_calibration();
        let p = 1e-3;
        for d in [3u64, 11, 21, 29] {
            let a = logical_failure_rate(cal, p, d).unwrap();
            let b = logical_failure_rate(cal, p, d + 2).unwrap();
            assert_abs_diff_eq!(b / a, p / cal.logical_threshold, epsilon = 1e-12);
        }
    }

    #[test]
    fn logical_rate_consistent_with_budget() {
        let cal = builtin_calibration();
        let rate = logical_failure_rate(cal, 1e-3, 29).unwrap();
        assert_abs_diff_eq!(rate, 1e-16, epsilon = 1e-22);
        // ~2e3 qubits over ~3e11 cycles stays below the 10% budget
        assert!(2e3 * 3e11 * rate <= 0.1);
        assert!(logical_failure_rate(cal, 0.01, 29).is_err());
    }

    #[test]
    fn factory_monotone_in_d2() {
        let cal = builtin_calibration();
        let mut prev_fp = 0u64;
        let mut prev_period = 0u64;
        let mut prev_fail = f64::INFINITY;
        for d2 in [15u64, 17, 25, 31, 41] {
            let f = factory_model(cal, 19, d2, 1e-3).unwrap();
            assert!(f.footprint > prev_fp);
            assert!(f.period_cycles > prev_period);
            assert!(f.p_fail_per_toffoli < prev_fail);
            prev_fp = f.footprint;
            prev_period = f.period_cycles;
            prev_fail = f.p_fail_per_toffoli;
        }
    }

    #[test]
    fn factory_period_backsolved_from_anchor() {
        // 7.8e9 Toffolis over 4 factories in ~73 h at 1 us cycles works out
        // to ~135 cycles per Toffoli per factory
        let cal = builtin_calibration();
        let f = factory_model(cal, 19, 31, 1e-3).unwrap();
        assert_eq!(f.period_cycles, 135);
        assert!(factory_model(cal, 18, 31, 1e-3).is_err());
    }

    #[test]
    fn compile_reference_anchor_four_factories() {
        let plan = compile_config(REF, &phys(1e-3, 4), 19, 31, 29).unwrap();
        let q_rel = (plan.physical_qubits as f64 - 4_624_440.0).abs() / 4_624_440.0;
        let t_rel = (plan.runtime_hours - 73.0).abs() / 73.0;
        assert!(q_rel <= 0.25, "qubits {} rel {q_rel}", plan.physical_qubits);
        assert!(t_rel <= 0.25, "runtime {} rel {t_rel}", plan.runtime_hours);
        assert!(plan.p_fail_total <= MAX_FAILURE);
        // accounting identity: routed data block plus factories
        assert_eq!(
            plan.physical_qubits,
            plan.data_block_qubits + plan.factory_qubits
        );
        assert_eq!(plan.data_block_qubits, 3 * 1434 * 29 * 29);
    }

    #[test]
    fn compile_reference_anchor_two_factories() {
        let plan = compile_config(REF, &phys(1e-3, 2), 19, 31, 29).unwrap();
        let q_rel = (plan.physical_qubits as f64 - 4.9e6).abs() / 4.9e6;
        let t_rel = (plan.runtime_hours - 135.0).abs() / 135.0;
        assert!(q_rel <= 0.25, "qubits {} rel {q_rel}", plan.physical_qubits);
        assert!(t_rel <= 0.25, "runtime {} rel {t_rel}", plan.runtime_hours);
    }

    #[test]
    fn halving_toffolis_halves_runtime() {
        let a = compile_config(REF, &phys(1e-3, 4), 19, 31, 29).unwrap();
        let half = LogicalInputs {
            toffoli: REF.toffoli / 2,
            logical_qubits: REF.logical_qubits,
        };
        let b = compile_config(half, &phys(1e-3, 4), 19, 31, 29).unwrap();
        assert_abs_diff_eq!(b.runtime_hours * 2.0, a.runtime_hours, epsilon = 1e-12);
    }

    #[test]
    fn search_matches_reference_distances() {
        let plan = search_optimal(REF, &phys(1e-3, 4)).unwrap();
        assert!(
            (plan.d1 as i64 - 19).abs() <= 2
                && (plan.d2 as i64 - 31).abs() <= 2
                && (plan.d_data as i64 - 29).abs() <= 2,
            "distances ({}, {}, {})",
            plan.d1,
            plan.d2,
            plan.d_data
        );
        let q_rel = (plan.physical_qubits as f64 - 4_624_440.0).abs() / 4_624_440.0;
        let t_rel = (plan.runtime_hours - 73.0).abs() / 73.0;
        assert!(q_rel <= 0.25 && t_rel <= 0.25);
    }

    #[test]
    fn search_low_error_rate_regime() {
        let plan = search_optimal(REF, &phys(1e-5, 4)).unwrap();
        assert!(plan.physical_qubits <= 1_000_000, "qubits {}", plan.physical_qubits);
        assert!(plan.runtime_hours <= 35.0, "runtime {}", plan.runtime_hours);
        assert!(!plan.advisory);
        let plan6 = search_optimal(REF, &phys(1e-6, 4)).unwrap();
        assert!(plan6.advisory, "sub-1e-5 rates are advisory");
    }

    #[test]
    fn search_monotone_in_error_rate() {
        let mut prev_q = u64::MAX;
        let mut prev_t = f64::INFINITY;
        let mut prev_d = u64::MAX;
        for p in [1e-3, 1e-4, 1e-5, 1e-6] {
            let plan = search_optimal(REF, &phys(p, 4)).unwrap();
            assert!(plan.physical_qubits <= prev_q);
            assert!(plan.runtime_hours <= prev_t);
            assert!(plan.d_data <= prev_d);
            prev_q = plan.physical_qubits;
            prev_t = plan.runtime_hours;
            prev_d = plan.d_data;
        }
    }

    #[test]
    fn search_result_is_grid_minimum() {
        let phys = phys(1e-3, 4);
        let best = search_optimal(REF, &phys).unwrap();
        for dd in (3..=51).step_by(2) {
            for d1 in (7..=25).step_by(2) {
                for d2 in (15..=41).step_by(2) {
                    let plan = compile_config(REF, &phys, d1, d2, dd).unwrap();
                    if plan.p_fail_total <= MAX_FAILURE {
                        assert!(
                            best.spacetime_volume <= plan.spacetime_volume + 1e-9,
                            "({d1},{d2},{dd}) has smaller volume"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_when_error_rate_too_high() {
        let res = search_optimal(REF, &phys(9e-3, 4));
        assert!(res.is_err());
    }

    #[test]
    fn assumptions_validated() {
        assert!(phys(0.6, 4).validate().is_err());
        assert!(phys(-1e-3, 4).validate().is_err());
        assert!(phys(1e-3, 0).validate().is_err());
    }
}
