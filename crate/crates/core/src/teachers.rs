//! Naive PID path-tracking teachers.

use serde::{Deserialize, Serialize};

use crate::sim::{ControlVector, Observation, VehicleKind, VehicleState, WaypointVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the accumulated integral (error·seconds).
    pub integral_limit: f64,
}

impl PidGains {
    pub const fn p(kp: f64) -> Self {
        PidGains { kp, ki: 0.0, kd: 0.0, integral_limit: 1.0 }
    }

    pub const fn pid(kp: f64, ki: f64, kd: f64, integral_limit: f64) -> Self {
        PidGains { kp, ki, kd, integral_limit }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
}

/// One PID update. The integral is clamped to `±integral_limit` before use.
pub fn pid_step(state: &PidState, error: f64, dt: f64, gains: &PidGains) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let limit = gains.integral_limit.abs();
    let integral = (state.integral + error * dt).clamp(-limit, limit);
    let derivative = (error - state.prev_error) / dt;
    let output = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    (output, PidState { integral, prev_error: error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub label: String,
    /// Steering (car) or yaw (uav) from the bearing of the look-ahead waypoint.
    pub steer_pid: PidGains,
    /// Throttle (car) or forward thrust (uav) from the speed error.
    pub speed_pid: PidGains,
    /// Lateral thrust from the horizontal offset of the first waypoint (uav only).
    pub lateral_pid: PidGains,
    pub target_speed: f64,
    /// 1-based index of the waypoint that drives steering.
    pub lookahead_index: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TeacherState {
    pub steer: PidState,
    pub speed: PidState,
    pub lateral: PidState,
}

/// PID teacher action. Every channel is clamped to `[-1, 1]`.
pub fn teacher_policy(
    spec: &TeacherSpec,
    kind: VehicleKind,
    wp: &WaypointVector,
    state: &VehicleState,
    pid: &mut TeacherState,
    dt: f64,
) -> ControlVector {
    let idx = spec.lookahead_index.clamp(1, wp.len()) - 1;
    let bearing = wp.bearing(idx);
    let (steer, steer_state) = pid_step(&pid.steer, bearing, dt, &spec.steer_pid);
    pid.steer = steer_state;
    let action = match kind {
        VehicleKind::Car => {
            let (gas, s) = pid_step(&pid.speed, spec.target_speed - state.forward_speed(), dt, &spec.speed_pid);
            pid.speed = s;
            ControlVector::Car { gas, steer }
        }
        VehicleKind::Uav => {
            let (forward, s) =
                pid_step(&pid.speed, spec.target_speed - state.forward_speed(), dt, &spec.speed_pid);
            pid.speed = s;
            let (lateral, l) = pid_step(&pid.lateral, wp.horizontal(0), dt, &spec.lateral_pid);
            pid.lateral = l;
            ControlVector::Uav { forward, lateral, yaw: steer }
        }
    };
    action.clamped()
}

/// Anything that maps observations to controls.
pub trait Policy {
    /// Clears per-rollout internal state.
    fn reset(&mut self) {}
    fn act(&mut self, obs: &Observation) -> ControlVector;
}

/// Emits the same action every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantPolicy(pub ControlVector);

impl Policy for ConstantPolicy {
    fn act(&mut self, _obs: &Observation) -> ControlVector {
        self.0
    }
}

/// A teacher spec bound to a vehicle kind, with its own PID state.
#[derive(Clone, Debug)]
pub struct Teacher {
    pub spec: TeacherSpec,
    pub kind: VehicleKind,
    pub state: TeacherState,
}

impl Teacher {
    pub fn new(spec: TeacherSpec, kind: VehicleKind) -> Self {
        Teacher { spec, kind, state: TeacherState::default() }
    }
}

impl Policy for Teacher {
    fn reset(&mut self) {
        self.state = TeacherState::default();
    }

    fn act(&mut self, obs: &Observation) -> ControlVector {
        teacher_policy(&self.spec, self.kind, &obs.waypoints, &obs.state, &mut self.state, obs.dt)
    }
}

fn car_teacher(label: &str, steer_kp: f64, steer_kd: f64, speed_kp: f64, target: f64, look: usize) -> TeacherSpec {
    TeacherSpec {
        label: label.to_string(),
        steer_pid: PidGains::pid(steer_kp, 0.0, steer_kd, 1.0),
        speed_pid: PidGains::pid(speed_kp, 0.05, 0.0, 2.0),
        lateral_pid: PidGains::p(0.0),
        target_speed: target,
        lookahead_index: look,
    }
}

fn uav_teacher(label: &str, yaw_kp: f64, lateral_kp: f64, speed_kp: f64, target: f64, look: usize) -> TeacherSpec {
    TeacherSpec {
        label: label.to_string(),
        steer_pid: PidGains::pid(yaw_kp, 0.0, 0.0, 1.0),
        speed_pid: PidGains::pid(speed_kp, 0.05, 0.0, 2.0),
        lateral_pid: PidGains::pid(lateral_kp, 0.0, 0.0, 1.0),
        target_speed: target,
        lookahead_index: look,
    }
}

/// Five teachers spanning careful-and-slow to fast-and-reckless. Indices in
/// the returned list are the teacher numbers minus one.
pub fn make_default_ensemble(kind: VehicleKind) -> Vec<TeacherSpec> {
    match kind {
        VehicleKind::Car => vec![
            car_teacher("teacher1-conservative", 1.2, 0.0, 0.6, 7.0, 1),
            car_teacher("teacher2-precise", 4.0, 0.06, 0.6, 10.0, 1),
            car_teacher("teacher3-balanced", 1.5, 0.0, 0.6, 12.0, 2),
            car_teacher("teacher4-fast", 3.0, 0.0, 0.6, 14.0, 1),
            car_teacher("teacher5-aggressive", 1.2, 0.0, 0.8, 16.0, 4),
        ],
        VehicleKind::Uav => vec![
            uav_teacher("teacher1-conservative", 1.0, 0.3, 0.5, 6.0, 1),
            uav_teacher("teacher2-twitchy", 3.0, 0.1, 0.5, 12.0, 1),
            uav_teacher("teacher3-balanced", 1.5, 0.3, 0.5, 9.0, 2),
            uav_teacher("teacher4-fast", 1.2, 0.2, 0.5, 12.0, 4),
            uav_teacher("teacher5-aggressive", 1.0, 0.0, 0.8, 15.0, 5),
        ],
    }
}

/// Parses a 1-based teacher list such as `"1,3,4"` or `"1-5"`.
pub fn parse_teacher_subset(s: &str, available: usize) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: usize = lo.parse().map_err(|_| format!("bad teacher index '{part}'"))?;
        let hi: usize = hi.parse().map_err(|_| format!("bad teacher index '{part}'"))?;
        if lo == 0 || hi < lo || hi > available {
            return Err(format!("teacher index '{part}' out of range 1..={available}"));
        }
        for i in lo..=hi {
            if !out.contains(&(i - 1)) {
                out.push(i - 1);
            }
        }
    }
    if out.is_empty() {
        return Err("empty teacher subset".into());
    }
    Ok(out)
}
