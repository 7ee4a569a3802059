//! Post-processing of stored trajectories: target errors, high-mode energies,
//! defects and the monitoring factors of the suboptimality estimate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pde::{fmt12, ControlSignal, Trajectory};
use crate::pm::{parameterization_defect, PmFunction};
use crate::spectral::{modal_norm_sq, GridField, ModalBasis, ModalCoeffs, NormKind};

/// `‖y(T) − Y‖ / ‖Y‖` in the discrete L² norm.
pub fn target_relative_error(final_state: &GridField, target: &ModalCoeffs) -> Result<f64> {
    let grid = final_state.grid();
    let y_target = ModalBasis::new(grid).synthesize(target.as_slice());
    let dx = grid.dx();
    let target_norm = (dx * y_target.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if !(target_norm > 0.0) {
        return Err(invalid("target must be nonzero"));
    }
    let diff = dx * final_state.values().iter().zip(&y_target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    Ok(diff.sqrt() / target_norm)
}

/// Total `‖P_s y‖_{L²(0,T;H¹)}` and the pointwise curve `(t, ‖P_s y(t)‖_{H¹})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighModeEnergy {
    pub total: f64,
    pub curve: Vec<(f64, f64)>,
}

pub fn high_mode_energy(traj: &Trajectory, m: usize, n_max: usize) -> Result<HighModeEnergy> {
    let available = traj.grid().interior();
    if n_max <= m || n_max > available {
        return Err(invalid(format!("high-mode cut {n_max} must lie in ({m}, {available}]")));
    }
    let length = traj.grid().length();
    let curve: Vec<(f64, f64)> = traj
        .modal()
        .iter()
        .enumerate()
        .map(|(k, c)| (traj.time(k), modal_norm_sq(&c.as_slice()[m..n_max], m + 1, length, NormKind::H1).sqrt()))
        .collect();
    let dt = traj.dt();
    let total = curve.windows(2).map(|w| 0.5 * dt * (w[0].1.powi(2) + w[1].1.powi(2))).sum::<f64>().sqrt();
    Ok(HighModeEnergy { total, curve })
}

/// Everything reported for one controlled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub q: f64,
    pub q_curve: Vec<(f64, f64)>,
    pub high_mode_energy: f64,
    pub high_mode_energy_curve: Vec<(f64, f64)>,
    pub cost: f64,
    pub relative_target_error: f64,
    /// `Q < 1`; a violation is reported, not raised.
    pub is_parameterizing: bool,
}

pub fn defect_report(
    traj: &Trajectory,
    pm: &dyn PmFunction,
    m: usize,
    n_max: usize,
    cost: f64,
    target: &ModalCoeffs,
) -> Result<DefectReport> {
    let defect = parameterization_defect(traj, pm, m, NormKind::H1, n_max)?;
    let energy = high_mode_energy(traj, m, n_max)?;
    Ok(DefectReport {
        q: defect.q,
        q_curve: defect.curve,
        high_mode_energy: energy.total,
        high_mode_energy_curve: energy.curve,
        cost,
        relative_target_error: target_relative_error(&traj.final_state(), target)?,
        is_parameterizing: defect.q < 1.0,
    })
}

impl DefectReport {
    /// `t, Q_t`.
    pub fn write_defect_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,Q_t")?;
        for (t, q) in &self.q_curve {
            writeln!(w, "{},{}", fmt12(*t), fmt12(*q))?;
        }
        Ok(())
    }

    /// `t, energy`.
    pub fn write_energy_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,high_mode_h1")?;
        for (t, e) in &self.high_mode_energy_curve {
            writeln!(w, "{},{}", fmt12(*t), fmt12(*e))?;
        }
        Ok(())
    }
}

/// Computable factors of the suboptimality estimate. The constants in front
/// are not estimated, so these are monitoring quantities only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub defect_reduced: f64,
    pub defect_reference: f64,
    pub energy_reduced: f64,
    pub energy_reference: f64,
    /// `√Q_R·‖y_{R,s}‖ + √Q_ref·‖y_{ref,s}‖`.
    pub monitoring_factor: f64,
    /// `‖u_R − u_ref‖²_{L²(0,T;L²)}`.
    pub control_gap_sq: f64,
    /// Same, restricted to the first `m` modes.
    pub low_mode_control_gap_sq: f64,
}

/// Both trajectories must share grid and time step.
pub fn estimate_report(
    reduced: (&Trajectory, &ControlSignal),
    reference: (&Trajectory, &ControlSignal),
    pm: &dyn PmFunction,
    m: usize,
    n_max: usize,
) -> Result<EstimateReport> {
    let (traj_r, u_r) = reduced;
    let (traj_ref, u_ref) = reference;
    if traj_r.grid() != traj_ref.grid() || traj_r.len() != traj_ref.len() || traj_r.dt() != traj_ref.dt() {
        return Err(invalid("trajectories must share grid and time levels"));
    }
    let q_r = parameterization_defect(traj_r, pm, m, NormKind::H1, n_max)?.q;
    let q_ref = parameterization_defect(traj_ref, pm, m, NormKind::H1, n_max)?.q;
    let e_r = high_mode_energy(traj_r, m, n_max)?.total;
    let e_ref = high_mode_energy(traj_ref, m, n_max)?.total;
    let (mut full_pts, mut low_pts) = (Vec::with_capacity(traj_r.len()), Vec::with_capacity(traj_r.len()));
    for k in 0..traj_r.len() {
        let t = traj_r.time(k);
        let (a, b) = (u_r.eval(t), u_ref.eval(t));
        let width = a.len().max(b.len());
        let (mut full, mut low) = (0.0, 0.0);
        for i in 0..width {
            let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
            full += d * d;
            if i < m {
                low += d * d;
            }
        }
        full_pts.push(full);
        low_pts.push(low);
    }
    let dt = traj_r.dt();
    let trap = |v: &[f64]| v.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum::<f64>();
    Ok(EstimateReport {
        defect_reduced: q_r,
        defect_reference: q_ref,
        energy_reduced: e_r,
        energy_reference: e_ref,
        monitoring_factor: q_r.sqrt() * e_r + q_ref.sqrt() * e_ref,
        control_gap_sq: trap(&full_pts),
        low_mode_control_gap_sq: trap(&low_pts),
    })
}
