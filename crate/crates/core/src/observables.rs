//! Maps steady states to measured quantities: output field amplitudes,
//! transmission coefficients and the isolation ratio.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::model::{Direction, StateVector, SystemParams};
use crate::steady::SteadyBranch;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ObservablesError {
    #[error("transmission undefined at zero drive (eps_p = 0)")]
    ZeroDrive,
    #[error("isolation ratio undefined for T_L = {t_l}, T_R = {t_r}")]
    UndefinedRatio { t_l: f64, t_r: f64 },
}

impl ObservablesError {
    /// Signed-infinity interpretation of an undefined ratio: `+inf` when only
    /// the forward transmission vanishes, `-inf` when only the backward one
    /// does, `None` when both sides are degenerate.
    pub fn limit_db(&self) -> Option<f64> {
        match self {
            ObservablesError::UndefinedRatio { t_l, t_r } => {
                if *t_l > 0.0 && *t_r <= 0.0 {
                    Some(f64::INFINITY)
                } else if *t_r > 0.0 && *t_l <= 0.0 {
                    Some(f64::NEG_INFINITY)
                } else {
                    None
                }
            }
            ObservablesError::ZeroDrive => None,
        }
    }
}

/// Transmission of one branch in one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionRecord {
    pub direction: Direction,
    /// Power transmission |S_out|^2 / eps_p^2.
    pub t: f64,
    pub out_amplitude: C64,
    pub branch_i1: f64,
}

/// Output field amplitude: the launch passes through to the far cavity, so
/// forward reads out cavity 2 and backward reads out cavity 1.
pub fn output_amplitude(state: &StateVector, params: &SystemParams, dir: Direction) -> C64 {
    let root_ke = params.kappa_e.sqrt();
    match dir {
        Direction::Forward => root_ke * state.a2,
        Direction::Backward => root_ke * state.a1,
    }
}

pub fn transmission(
    params: &SystemParams,
    dir: Direction,
    branch: &SteadyBranch,
) -> Result<TransmissionRecord, ObservablesError> {
    if params.eps_p <= 0.0 {
        return Err(ObservablesError::ZeroDrive);
    }
    let out = output_amplitude(&branch.state, params, dir);
    Ok(TransmissionRecord {
        direction: dir,
        t: out.norm_sqr() / (params.eps_p * params.eps_p),
        out_amplitude: out,
        branch_i1: branch.i1,
    })
}

/// Isolation ratio in dB, backward over forward: `10 log10(T_L / T_R)`.
/// Computed as a log difference so that swapping the arguments negates the
/// result exactly.
pub fn isolation_ratio(t_l: f64, t_r: f64) -> Result<f64, ObservablesError> {
    if t_l > 0.0 && t_r > 0.0 {
        Ok(10.0 * (t_l.log10() - t_r.log10()))
    } else {
        Err(ObservablesError::UndefinedRatio { t_l, t_r })
    }
}
