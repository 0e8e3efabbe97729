#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use oil_core::policy::{control_dims, Mlp};
use oil_core::sim::{ControlVector, Env, Plant, Track, Vec2, VehicleKind, VehicleState};

/// Two 400 m straights along y = 0 and y = 120 joined by half circles.
pub fn stadium() -> Track {
    let (straight, r) = (400.0, 60.0);
    let mut pts = Vec::new();
    for i in 0..400 {
        pts.push(Vec2::new(i as f64 * straight / 400.0, 0.0));
    }
    for i in 0..180 {
        let a = -PI / 2.0 + PI * i as f64 / 180.0;
        pts.push(Vec2::new(straight + r * a.cos(), r + r * a.sin()));
    }
    for i in 0..400 {
        pts.push(Vec2::new(straight - i as f64 * straight / 400.0, 2.0 * r));
    }
    for i in 0..180 {
        let a = PI / 2.0 + PI * i as f64 / 180.0;
        pts.push(Vec2::new(r * a.cos(), r + r * a.sin()));
    }
    Track::from_centerline(pts, 4.0, 50.0, 0).unwrap()
}

/// Circle whose length is an exact multiple of the 50 m checkpoint spacing.
pub fn circle(length: f64) -> Track {
    let r = length / (2.0 * PI);
    let n = 720;
    let pts = (0..n).map(|i| {
        let a = 2.0 * PI * i as f64 / n as f64;
        Vec2::new(r * a.cos(), r * a.sin())
    });
    Track::from_centerline(pts.collect(), 4.0, 50.0, 0).unwrap()
}

/// Moves the vehicle along the centerline at `speed · clamp(first channel, 0, 1)`.
pub struct RailPlant {
    pub speed: f64,
    pub kind: VehicleKind,
}

impl Plant for RailPlant {
    fn kind(&self) -> VehicleKind {
        self.kind
    }

    fn step(&self, track: &Track, state: &VehicleState, action: &ControlVector, dt: f64) -> VehicleState {
        let throttle = action.to_vec()[0].clamp(0.0, 1.0);
        let s = track.project(state.position).s + self.speed * throttle * dt;
        let t = track.tangent_at(s);
        VehicleState {
            position: track.point_at(s),
            heading: t.y.atan2(t.x),
            velocity: t * self.speed * throttle,
            steer: 0.0,
        }
    }
}

pub fn rail_env(speed: f64, kind: VehicleKind) -> Env {
    let mut env = Env::with_plant(Arc::new(RailPlant { speed, kind }));
    env.dt = 0.05;
    env
}

/// Throws the vehicle 10 m sideways on every step.
pub struct EjectPlant;

impl Plant for EjectPlant {
    fn kind(&self) -> VehicleKind {
        VehicleKind::Car
    }

    fn step(&self, _track: &Track, state: &VehicleState, _action: &ControlVector, _dt: f64) -> VehicleState {
        VehicleState { position: state.position + Vec2::new(0.0, 10.0), ..*state }
    }
}

/// Control network that outputs `out` for every input.
pub fn constant_net(input: usize, out: &[f64]) -> Mlp {
    let mut net = Mlp::zeros(&control_dims(input, out.len())).unwrap();
    let (_, bias) = net.layer_range(net.layer_count() - 1);
    net.params_mut()[bias].copy_from_slice(out);
    net
}
