use serde::{Deserialize, Serialize};

use super::reward::{trajectory_reward, RewardConfig};
use crate::sim::{ControlVector, Env, StepOutcome, Track, VehicleState};
use crate::teachers::Policy;

/// splitmix64 finalizer; derives independent child seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: VehicleState,
    pub action: ControlVector,
    pub outcome: StepOutcome,
}

/// An N-step rollout record. If `terminal`, the last step left the lane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: VehicleState,
    pub start_arc: f64,
    pub track_length: f64,
    pub steps: Vec<TrajectoryStep>,
    pub terminal: bool,
}

fn wrapped(d: f64, total: f64) -> f64 {
    let mut d = d.rem_euclid(total);
    if d > 0.5 * total {
        d -= total;
    }
    d
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Arc-length progress along the centerline, wraparound-aware.
    pub fn zeta(&self) -> f64 {
        let mut prev = self.start_arc;
        let mut total = 0.0;
        for s in &self.steps {
            total += wrapped(s.outcome.arc_progress - prev, self.track_length);
            prev = s.outcome.arc_progress;
        }
        total
    }

    pub fn sum_abs_error(&self) -> f64 {
        self.steps.iter().map(|s| s.outcome.lateral_error.abs()).sum()
    }

    pub fn final_state(&self) -> VehicleState {
        self.steps.last().map(|s| s.outcome.next_state).unwrap_or(self.start)
    }
}

/// Rolls `policy` out from `start` for up to `n` steps, stopping at the first
/// terminal state. The policy is reset first.
pub fn rollout(
    env: &Env,
    track: &Track,
    policy: &mut dyn Policy,
    start: &VehicleState,
    n: usize,
    noise_seed: u64,
) -> Trajectory {
    policy.reset();
    let start_arc = track.project(start.position).s;
    let mut steps = Vec::with_capacity(n);
    let mut state = *start;
    let mut terminal = false;
    for k in 0..n {
        let obs = env.observe(track, &state, mix_seed(noise_seed, k as u64));
        let action = policy.act(&obs);
        let outcome = env.step(track, &state, &action);
        steps.push(TrajectoryStep { state, action, outcome });
        state = outcome.next_state;
        if outcome.terminal {
            terminal = true;
            break;
        }
    }
    Trajectory { start: *start, start_arc, track_length: track.total_length(), steps, terminal }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyId {
    Learner,
    Teacher(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueEstimate {
    pub policy: PolicyId,
    pub value: f64,
    pub rewards: Vec<f64>,
    /// The first rollout.
    pub trajectory: Trajectory,
}

/// Monte-Carlo value: mean trajectory reward over `mc_rollouts` rollouts that
/// differ only in their perception-noise seed.
#[allow(clippy::too_many_arguments)]
pub fn estimate_value(
    env: &Env,
    track: &Track,
    policy: &mut dyn Policy,
    id: PolicyId,
    start: &VehicleState,
    n: usize,
    cfg: &RewardConfig,
    mc_rollouts: usize,
    seed: u64,
) -> ValueEstimate {
    let mut rewards = Vec::with_capacity(mc_rollouts.max(1));
    let mut first = None;
    for r in 0..mc_rollouts.max(1) {
        let traj = rollout(env, track, policy, start, n, mix_seed(seed, r as u64));
        rewards.push(trajectory_reward(&traj, cfg));
        first.get_or_insert(traj);
    }
    let value = rewards.iter().sum::<f64>() / rewards.len() as f64;
    ValueEstimate { policy: id, value, rewards, trajectory: first.unwrap() }
}
