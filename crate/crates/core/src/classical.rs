//! DMRG cost scaling and discarded-weight energy extrapolation.
//!
//! Costs scale from a measured baseline: CPU time as `k^3 M^3`, memory as
//! `k^2 M^2`, disk as `k^3 M^2` in the orbital count `k` and bond dimension
//! `M`. Energies extrapolate linearly in the discarded weight, with the
//! empirical error estimate of one fifth of the gap between the largest
//! calculation and the extrapolated value.

use serde::{Deserialize, Serialize};

use crate::linalg::{fit_affine, fit_loglog};
use crate::{Error, Result};

/// Measured or predicted resource usage of one DMRG calculation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DMRGCostPoint {
    /// Active orbital count.
    pub k: usize,
    /// Bond dimension.
    pub m_bond: usize,
    /// CPU time: wall-clock hours multiplied by the thread count.
    pub cpu_hours: f64,
    pub memory_gb: f64,
    pub disk_gb: f64,
}

impl DMRGCostPoint {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.m_bond < 1 {
            return Err(Error::validation("need k >= 2 and M >= 1"));
        }
        if self.cpu_hours <= 0.0 || self.memory_gb <= 0.0 || self.disk_gb <= 0.0 {
            return Err(Error::validation("cost entries must be positive"));
        }
        Ok(())
    }

    /// Wall-clock hours when spread over `threads` threads.
    pub fn wall_hours(&self, threads: usize) -> f64 {
        self.cpu_hours / threads.max(1) as f64
    }
}

/// Scale a baseline to a target (k, M) by the theoretical exponents.
pub fn dmrg_scale(
    baseline: &DMRGCostPoint,
    k_target: usize,
    m_target: usize,
) -> Result<DMRGCostPoint> {
    baseline.validate()?;
    if k_target < 2 || m_target < 1 {
        return Err(Error::validation("targets must be positive (k >= 2, M >= 1)"));
    }
    let rk = k_target as f64 / baseline.k as f64;
    let rm = m_target as f64 / baseline.m_bond as f64;
    Ok(DMRGCostPoint {
        k: k_target,
        m_bond: m_target,
        cpu_hours: baseline.cpu_hours * rk.powi(3) * rm.powi(3),
        memory_gb: baseline.memory_gb * rk.powi(2) * rm.powi(2),
        disk_gb: baseline.disk_gb * rk.powi(3) * rm.powi(2),
    })
}

/// Log-log slope of CPU hours against orbital count at fixed bond dimension.
pub fn fit_dmrg_walltime(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::validation("need at least three timing points"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, _) = fit_loglog(&xs, &ys)?;
    Ok(slope)
}

/// Discarded-weight extrapolation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    /// Zero-discarded-weight intercept (Hartree).
    pub e_extrap: f64,
    /// Fitted slope against the discarded weight.
    pub slope: f64,
    /// One fifth of |E(largest calculation) - E_extrap|; the largest
    /// calculation is the point with the smallest discarded weight.
    pub error_estimate: f64,
    pub points: Vec<(f64, f64)>,
}

/// Linear fit `E(w) = E_extrap + s*w` over (discarded weight, energy) pairs.
pub fn dmrg_extrapolate_energy(points: &[(f64, f64)]) -> Result<ExtrapolationResult> {
    if points.len() < 2 {
        return Err(Error::validation("need at least two extrapolation points"));
    }
    if points.iter().any(|&(w, _)| w < 0.0) {
        return Err(Error::validation("discarded weights must be non-negative"));
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[i].0 == points[j].0 {
                return Err(Error::validation("discarded weights must be distinct"));
            }
        }
    }
    let ws: Vec<f64> = points.iter().map(|p| p.0).collect();
    let es: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, intercept) = fit_affine(&ws, &es)?;
    let (_, e_largest) = points
        .iter()
        .cloned()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .expect("non-empty");
    Ok(ExtrapolationResult {
        e_extrap: intercept,
        slope,
        error_estimate: (e_largest - intercept).abs() / 5.0,
        points: points.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn baseline_g() -> DMRGCostPoint {
        DMRGCostPoint {
            k: 43,
            m_bond: 1500,
            cpu_hours: 1800.0,
            memory_gb: 48.0,
            disk_gb: 235.0,
        }
    }

    #[test]
    fn reference_predictions_within_five_percent() {
        let x15 = dmrg_scale(&baseline_g(), 58, 1500).unwrap();
        let x30 = dmrg_scale(&baseline_g(), 58, 3000).unwrap();
        let checks = [
            (x15.cpu_hours, 4570.0),
            (x15.memory_gb, 87.0),
            (x15.disk_gb, 572.0),
            (x30.cpu_hours, 36564.0),
            (x30.memory_gb, 348.0),
            (x30.disk_gb, 2288.0),
        ];
        for (pred, reference) in checks {
            let rel = (pred - reference).abs() / reference;
            assert!(rel <= 0.05, "{pred} vs {reference}: rel {rel}");
        }
    }

    #[test]
    fn doubling_bond_dimension_ratios_exact() {
        let x15 = dmrg_scale(&baseline_g(), 58, 1500).unwrap();
        let x30 = dmrg_scale(&baseline_g(), 58, 3000).unwrap();
        assert_abs_diff_eq!(x30.cpu_hours / x15.cpu_hours, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x30.memory_gb / x15.memory_gb, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x30.disk_gb / x15.disk_gb, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_targets_unchanged() {
        let b = baseline_g();
        let same = dmrg_scale(&b, 43, 1500).unwrap();
        assert_eq!(same.cpu_hours, b.cpu_hours);
        assert_eq!(same.memory_gb, b.memory_gb);
        assert_eq!(same.disk_gb, b.disk_gb);
    }

    #[test]
    fn scaling_is_exactly_multiplicative() {
        let b = baseline_g();
        let two_step = dmrg_scale(&dmrg_scale(&b, 50, 2000).unwrap(), 58, 3000).unwrap();
        let one_step = dmrg_scale(&b, 58, 3000).unwrap();
        assert_abs_diff_eq!(
            two_step.cpu_hours,
            one_step.cpu_hours,
            epsilon = 1e-12 * one_step.cpu_hours
        );
        assert_abs_diff_eq!(
            two_step.disk_gb,
            one_step.disk_gb,
            epsilon = 1e-12 * one_step.disk_gb
        );
    }

    #[test]
    fn walltime_slope_on_planted_cubic() {
        let pts: Vec<(f64, f64)> = [23.0, 31.0, 41.0, 43.0f64]
            .iter()
            .map(|&k| (k, 0.02 * k.powi(3)))
            .collect();
        let slope = fit_dmrg_walltime(&pts).unwrap();
        assert_abs_diff_eq!(slope, 3.0, epsilon = 1e-9);
        // slope invariant under uniform rescaling of CPU units
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(k, c)| (k, 3600.0 * c)).collect();
        assert_abs_diff_eq!(fit_dmrg_walltime(&scaled).unwrap(), slope, epsilon = 1e-12);
        assert!(fit_dmrg_walltime(&pts[..2]).is_err());
    }

    #[test]
    fn slope_of_generated_scaling_data_is_cubic() {
        let b = baseline_g();
        let pts: Vec<(f64, f64)> = [20usize, 30, 40, 50]
            .iter()
            .map(|&k| {
                let c = dmrg_scale(&b, k, 1500).unwrap();
                (k as f64, c.cpu_hours)
            })
            .collect();
        assert_abs_diff_eq!(fit_dmrg_walltime(&pts).unwrap(), 3.0, epsilon = 1e-12);
        let pts_m: Vec<(f64, f64)> = [500usize, 1000, 2000, 4000]
            .iter()
            .map(|&m| {
                let c = dmrg_scale(&b, 43, m).unwrap();
                (m as f64, c.cpu_hours)
            })
            .collect();
        let (slope_m, _) = fit_loglog(
            &pts_m.iter().map(|p| p.0).collect::<Vec<_>>(),
            &pts_m.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_abs_diff_eq!(slope_m, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn two_points_define_line_exactly() {
        let res = dmrg_extrapolate_energy(&[(1e-5, -9.99998), (2e-5, -9.99996)]).unwrap();
        assert_abs_diff_eq!(res.e_extrap, -10.0, epsilon = 1e-10);
    }

    #[test]
    fn planted_line_recovered() {
        let pts: Vec<(f64, f64)> = [1e-5, 1e-6, 1e-7]
            .iter()
            .map(|&w| (w, -10.0 + 2.0 * w))
            .collect();
        let res = dmrg_extrapolate_energy(&pts).unwrap();
        assert_abs_diff_eq!(res.e_extrap, -10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.error_estimate, 2.0e-7 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn extrapolation_affine_equivariant() {
        let pts = [(1e-5, -3.2), (5e-6, -3.25), (1e-6, -3.29)];
        let base = dmrg_extrapolate_energy(&pts).unwrap();
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(w, e)| (w, e + 7.5)).collect();
        let res = dmrg_extrapolate_energy(&shifted).unwrap();
        assert_abs_diff_eq!(res.e_extrap, base.e_extrap + 7.5, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_weights_rejected() {
        assert!(dmrg_extrapolate_energy(&[(1e-5, -1.0), (1e-5, -2.0)]).is_err());
        assert!(dmrg_extrapolate_energy(&[(1e-5, -1.0)]).is_err());
        assert!(dmrg_extrapolate_energy(&[(-1e-5, -1.0), (1e-5, -2.0)]).is_err());
    }
}
