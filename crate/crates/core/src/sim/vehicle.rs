//! Vehicle state, control channels and the two dynamics models.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{Track, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Car,
    Uav,
}

impl VehicleKind {
    pub fn action_dim(self) -> usize {
        match self {
            VehicleKind::Car => 2,
            VehicleKind::Uav => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VehicleKind::Car => "car",
            VehicleKind::Uav => "uav",
        }
    }
}

impl std::str::FromStr for VehicleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "car" => Ok(VehicleKind::Car),
            "uav" => Ok(VehicleKind::Uav),
            other => Err(format!("unknown vehicle kind '{other}' (expected car or uav)")),
        }
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

pub fn heading_vector(heading: f64) -> Vec2 {
    Vec2::new(heading.cos(), heading.sin())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    pub heading: f64,
    /// World-frame velocity. For the car it always points along the heading.
    pub velocity: Vec2,
    /// Front-wheel steering angle (car only).
    pub steer: f64,
}

impl VehicleState {
    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        VehicleState { position, heading: normalize_angle(heading), velocity: Vec2::zeros(), steer: 0.0 }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Velocity component along the heading.
    pub fn forward_speed(&self) -> f64 {
        self.velocity.dot(&heading_vector(self.heading))
    }

    /// Velocity component along the left normal of the heading.
    pub fn lateral_speed(&self) -> f64 {
        let h = heading_vector(self.heading);
        self.velocity.dot(&Vec2::new(-h.y, h.x))
    }
}

/// Per-kind action channels, each in `[-1, 1]` after clamping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControlVector {
    Car { gas: f64, steer: f64 },
    Uav { forward: f64, lateral: f64, yaw: f64 },
}

impl ControlVector {
    pub fn zero(kind: VehicleKind) -> Self {
        match kind {
            VehicleKind::Car => ControlVector::Car { gas: 0.0, steer: 0.0 },
            VehicleKind::Uav => ControlVector::Uav { forward: 0.0, lateral: 0.0, yaw: 0.0 },
        }
    }

    pub fn kind(&self) -> VehicleKind {
        match self {
            ControlVector::Car { .. } => VehicleKind::Car,
            ControlVector::Uav { .. } => VehicleKind::Uav,
        }
    }

    /// Channel order: car `[gas, steer]`, uav `[forward, lateral, yaw]`.
    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            ControlVector::Car { gas, steer } => vec![gas, steer],
            ControlVector::Uav { forward, lateral, yaw } => vec![forward, lateral, yaw],
        }
    }

    /// Inverse of [`ControlVector::to_vec`]; missing channels read as zero.
    pub fn from_slice(kind: VehicleKind, v: &[f64]) -> Self {
        let at = |i: usize| v.get(i).copied().unwrap_or(0.0);
        match kind {
            VehicleKind::Car => ControlVector::Car { gas: at(0), steer: at(1) },
            VehicleKind::Uav => ControlVector::Uav { forward: at(0), lateral: at(1), yaw: at(2) },
        }
    }

    pub fn clamped(&self) -> Self {
        let c = |x: f64| if x.is_nan() { x } else { x.clamp(-1.0, 1.0) };
        match *self {
            ControlVector::Car { gas, steer } => ControlVector::Car { gas: c(gas), steer: c(steer) },
            ControlVector::Uav { forward, lateral, yaw } => {
                ControlVector::Uav { forward: c(forward), lateral: c(lateral), yaw: c(yaw) }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub drag: f64,
    pub steer_rate: f64,
    /// Grip limit: yaw rate is capped at `max_lateral_accel / v`.
    pub max_lateral_accel: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        CarParams {
            wheelbase: 2.7,
            max_steer: 0.5,
            max_accel: 5.0,
            drag: 0.1,
            steer_rate: 1.5,
            max_lateral_accel: 6.0,
        }
    }
}

/// Kinematic bicycle, explicit Euler. Steering slews toward `steer·max_steer`
/// at `steer_rate`; speed never goes negative.
pub fn step_car(state: &VehicleState, action: &ControlVector, dt: f64, p: &CarParams) -> VehicleState {
    let (gas, steer_cmd) = match action.clamped() {
        ControlVector::Car { gas, steer } => (gas, steer),
        ControlVector::Uav { forward, yaw, .. } => (forward, yaw),
    };
    let v = state.forward_speed().max(0.0);
    let (sin_h, cos_h) = state.heading.sin_cos();

    let mut yaw_rate = v / p.wheelbase * state.steer.tan();
    if v > 0.0 && p.max_lateral_accel.is_finite() {
        let cap = p.max_lateral_accel / v;
        yaw_rate = yaw_rate.clamp(-cap, cap);
    }
    let target = steer_cmd * p.max_steer;
    let max_slew = p.steer_rate * dt;
    let steer = state.steer + (target - state.steer).clamp(-max_slew, max_slew);

    let position = state.position + Vec2::new(cos_h, sin_h) * (v * dt);
    let heading = normalize_angle(state.heading + yaw_rate * dt);
    let speed = (v + (gas * p.max_accel - p.drag * v) * dt).max(0.0);

    VehicleState { position, heading, velocity: heading_vector(heading) * speed, steer }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavParams {
    pub max_accel: f64,
    pub max_yaw_rate: f64,
    pub drag: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        UavParams { max_accel: 6.0, max_yaw_rate: 1.5, drag: 0.3 }
    }
}

/// Planar point mass with yaw: body-frame thrusts, linear drag, explicit Euler.
pub fn step_uav(state: &VehicleState, action: &ControlVector, dt: f64, p: &UavParams) -> VehicleState {
    let (forward, lateral, yaw) = match action.clamped() {
        ControlVector::Uav { forward, lateral, yaw } => (forward, lateral, yaw),
        ControlVector::Car { gas, steer } => (gas, 0.0, steer),
    };
    let (sin_h, cos_h) = state.heading.sin_cos();
    let body = Vec2::new(forward, lateral) * p.max_accel;
    let accel = Vec2::new(cos_h * body.x - sin_h * body.y, sin_h * body.x + cos_h * body.y)
        - state.velocity * p.drag;

    VehicleState {
        position: state.position + state.velocity * dt,
        heading: normalize_angle(state.heading + yaw * p.max_yaw_rate * dt),
        velocity: state.velocity + accel * dt,
        steer: 0.0,
    }
}

/// Anything that advances a vehicle one simulator step. The track is passed so
/// that scripted plants (rails, test fixtures) can follow the course.
pub trait Plant: Send + Sync {
    fn kind(&self) -> VehicleKind;
    fn step(&self, track: &Track, state: &VehicleState, action: &ControlVector, dt: f64) -> VehicleState;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum VehicleModel {
    Car(CarParams),
    Uav(UavParams),
}

impl VehicleModel {
    pub fn default_for(kind: VehicleKind) -> Self {
        match kind {
            VehicleKind::Car => VehicleModel::Car(CarParams::default()),
            VehicleKind::Uav => VehicleModel::Uav(UavParams::default()),
        }
    }
}

impl Plant for VehicleModel {
    fn kind(&self) -> VehicleKind {
        match self {
            VehicleModel::Car(_) => VehicleKind::Car,
            VehicleModel::Uav(_) => VehicleKind::Uav,
        }
    }

    fn step(&self, _track: &Track, state: &VehicleState, action: &ControlVector, dt: f64) -> VehicleState {
        match self {
            VehicleModel::Car(p) => step_car(state, action, dt, p),
            VehicleModel::Uav(p) => step_uav(state, action, dt, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(speed: f64, steer: f64) -> VehicleState {
        let mut s = VehicleState::at_rest(Vec2::zeros(), 0.3);
        s.velocity = heading_vector(0.3) * speed;
        s.steer = steer;
        s
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        for k in -20..20 {
            let a = normalize_angle(k as f64 * 0.77);
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn straight_line_from_rest() {
        let p = CarParams::default();
        let mut s = car(0.0, 0.0);
        let a = ControlVector::Car { gas: 1.0, steer: 0.0 };
        for _ in 0..40 {
            s = step_car(&s, &a, 0.05, &p);
        }
        assert_eq!(s.heading, 0.3);
        assert!(s.position.norm() > 0.0);
        let dir = s.position.normalize();
        assert!((dir - heading_vector(0.3)).norm() < 1e-12);
    }

    #[test]
    fn coasting_slows_down() {
        let p = CarParams::default();
        let mut s = car(10.0, 0.0);
        let a = ControlVector::Car { gas: 0.0, steer: 0.0 };
        for _ in 0..100 {
            let next = step_car(&s, &a, 0.05, &p);
            assert!(next.speed() < s.speed());
            s = next;
        }
    }

    #[test]
    fn speed_never_negative() {
        let p = CarParams::default();
        let mut s = car(1.0, 0.0);
        for _ in 0..50 {
            s = step_car(&s, &ControlVector::Car { gas: -1.0, steer: 0.3 }, 0.05, &p);
            assert!(s.forward_speed() >= 0.0);
        }
    }

    #[test]
    fn steering_slews_at_rate() {
        let p = CarParams::default();
        let s = step_car(&car(5.0, 0.0), &ControlVector::Car { gas: 0.0, steer: 1.0 }, 0.05, &p);
        assert!((s.steer - p.steer_rate * 0.05).abs() < 1e-15);
    }

    #[test]
    fn lateral_accel_cap_limits_yaw_rate() {
        let p = CarParams { max_lateral_accel: 2.0, ..CarParams::default() };
        let s = car(20.0, 0.4);
        let next = step_car(&s, &ControlVector::Car { gas: 0.0, steer: 0.8 }, 0.05, &p);
        let yaw_rate = normalize_angle(next.heading - s.heading) / 0.05;
        assert!((yaw_rate - 2.0 / 20.0).abs() < 1e-9);
    }

    #[test]
    fn uav_fixed_point_and_pure_yaw() {
        let p = UavParams::default();
        let s = VehicleState::at_rest(Vec2::new(1.0, 2.0), 0.5);
        assert_eq!(step_uav(&s, &ControlVector::zero(VehicleKind::Uav), 0.05, &p), s);
        let yawed = step_uav(&s, &ControlVector::Uav { forward: 0.0, lateral: 0.0, yaw: 0.4 }, 0.05, &p);
        assert_eq!(yawed.position, s.position);
        assert!((yawed.heading - (0.5 + 0.4 * p.max_yaw_rate * 0.05)).abs() < 1e-15);
    }

    #[test]
    fn uav_terminal_speed() {
        let p = UavParams::default();
        let dt = 0.05;
        let mut s = VehicleState::at_rest(Vec2::zeros(), 0.0);
        let steps = (10.0 / p.drag / dt).ceil() as usize;
        for _ in 0..steps {
            s = step_uav(&s, &ControlVector::Uav { forward: 1.0, lateral: 0.0, yaw: 0.0 }, dt, &p);
        }
        let terminal = p.max_accel / p.drag;
        assert!((s.speed() - terminal).abs() / terminal < 0.01);
    }

    #[test]
    fn actions_are_clamped() {
        let c = ControlVector::Uav { forward: 3.0, lateral: -7.0, yaw: 0.2 }.clamped();
        assert_eq!(c, ControlVector::Uav { forward: 1.0, lateral: -1.0, yaw: 0.2 });
    }
}
