use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::sim::VehicleKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Driving,
    Uav,
}

impl From<VehicleKind> for RewardMode {
    fn from(k: VehicleKind) -> Self {
        match k {
            VehicleKind::Car => RewardMode::Driving,
            VehicleKind::Uav => RewardMode::Uav,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub mode: RewardMode,
    pub alpha: f64,
    pub r_penalty: f64,
    /// Per-step discount on the UAV speed sum. The driving score is a whole
    /// trajectory ratio and ignores it.
    pub gamma: f64,
}

impl RewardConfig {
    pub fn new(mode: RewardMode) -> Self {
        RewardConfig { mode, alpha: 0.5, r_penalty: -15000.0, gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_penalty < 0.0) {
            return Err(Error::InvalidParameter(format!("r_penalty must be negative, got {}", self.r_penalty)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

/// `ζ / (α·Σ|e| + 1)`, plus the penalty when the trajectory ends off track.
pub fn driving_score(zeta: f64, sum_abs_error: f64, terminal: bool, cfg: &RewardConfig) -> f64 {
    let r = zeta / (cfg.alpha * sum_abs_error + 1.0);
    if terminal {
        r + cfg.r_penalty
    } else {
        r
    }
}

/// `Σ v_f`, plus the penalty when the trajectory ends off track.
pub fn uav_score(forward_speeds: impl IntoIterator<Item = f64>, terminal: bool, cfg: &RewardConfig) -> f64 {
    let mut discount = 1.0;
    let mut r = 0.0;
    for v in forward_speeds {
        r += discount * v;
        discount *= cfg.gamma;
    }
    if terminal {
        r + cfg.r_penalty
    } else {
        r
    }
}

pub fn reward_driving(traj: &Trajectory, cfg: &RewardConfig) -> f64 {
    driving_score(traj.zeta(), traj.sum_abs_error(), traj.terminal, cfg)
}

pub fn reward_uav(traj: &Trajectory, cfg: &RewardConfig) -> f64 {
    uav_score(traj.steps.iter().map(|s| s.outcome.forward_speed), traj.terminal, cfg)
}

pub fn trajectory_reward(traj: &Trajectory, cfg: &RewardConfig) -> f64 {
    match cfg.mode {
        RewardMode::Driving => reward_driving(traj, cfg),
        RewardMode::Uav => reward_uav(traj, cfg),
    }
}
