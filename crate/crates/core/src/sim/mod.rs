//! Deterministic 2D world: tracks, vehicle dynamics, centerline geometry,
//! terminal detection and waypoint encoding.

mod track;
mod vehicle;
mod waypoints;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use track::{curvature_profile, generate_suite, generate_track, suite_track_seed, Projection, Track, TrackFile, TrackParams, TRACK_FILE_VERSION};
pub use vehicle::{
    heading_vector, normalize_angle, step_car, step_uav, CarParams, ControlVector, Plant, UavParams,
    VehicleKind, VehicleModel, VehicleState,
};
pub use waypoints::{add_waypoint_noise, encode_waypoints, encode_waypoints_from, WaypointVector};

pub type Vec2 = nalgebra::Vector2<f64>;

/// Result of one simulator step, measured against the centerline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: VehicleState,
    /// Signed lateral error, positive left of the direction of travel.
    pub lateral_error: f64,
    pub arc_progress: f64,
    /// Velocity projected on the centerline tangent.
    pub forward_speed: f64,
    pub terminal: bool,
}

/// Fixed scaling applied to the learner's input features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub offset: f64,
    pub speed: f64,
}

impl Default for FeatureScale {
    fn default() -> Self {
        FeatureScale { offset: 0.1, speed: 0.1 }
    }
}

/// What a policy sees at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub waypoints: WaypointVector,
    pub state: VehicleState,
    /// Learner input: scaled waypoints followed by `[speed, sin Δψ, cos Δψ]`,
    /// where `Δψ` is the heading relative to the centerline tangent.
    pub features: Vec<f64>,
    pub dt: f64,
}

/// Simulation settings shared by every rollout on any track.
#[derive(Clone)]
pub struct Env {
    pub plant: Arc<dyn Plant>,
    pub dt: f64,
    pub waypoint_count: usize,
    pub waypoint_spacing: f64,
    pub feature_scale: FeatureScale,
    /// Standard deviation of perception noise on waypoints (meters).
    pub waypoint_noise: f64,
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env")
            .field("kind", &self.kind())
            .field("dt", &self.dt)
            .field("waypoint_count", &self.waypoint_count)
            .field("waypoint_spacing", &self.waypoint_spacing)
            .field("waypoint_noise", &self.waypoint_noise)
            .finish()
    }
}

pub const DEFAULT_DT: f64 = 0.05;

impl Env {
    pub fn new(model: VehicleModel) -> Self {
        Env {
            plant: Arc::new(model),
            dt: DEFAULT_DT,
            waypoint_count: 5,
            waypoint_spacing: 4.0,
            feature_scale: FeatureScale::default(),
            waypoint_noise: 0.0,
        }
    }

    pub fn for_kind(kind: VehicleKind) -> Self {
        Env::new(VehicleModel::default_for(kind))
    }

    pub fn with_plant(plant: Arc<dyn Plant>) -> Self {
        Env { plant, ..Env::for_kind(VehicleKind::Car) }
    }

    pub fn kind(&self) -> VehicleKind {
        self.plant.kind()
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.waypoint_count + 3
    }

    pub fn action_dim(&self) -> usize {
        self.kind().action_dim()
    }

    /// On the centerline at arc length `s`, facing along the tangent, at rest.
    pub fn start_state(&self, track: &Track, s: f64) -> VehicleState {
        let t = track.tangent_at(s);
        VehicleState::at_rest(track.point_at(s), t.y.atan2(t.x))
    }

    pub fn observe(&self, track: &Track, state: &VehicleState, noise_seed: u64) -> Observation {
        let proj = track.project(state.position);
        self.observe_projected(track, state, &proj, noise_seed)
    }

    pub fn observe_projected(
        &self,
        track: &Track,
        state: &VehicleState,
        proj: &Projection,
        noise_seed: u64,
    ) -> Observation {
        let clean = encode_waypoints_from(
            track,
            proj.s,
            state.position,
            state.heading,
            self.waypoint_count,
            self.waypoint_spacing,
        );
        let waypoints = add_waypoint_noise(&clean, self.waypoint_noise, noise_seed);
        let features = self.features(&waypoints, state, proj);
        Observation { waypoints, state: *state, features, dt: self.dt }
    }

    pub fn features(&self, wp: &WaypointVector, state: &VehicleState, proj: &Projection) -> Vec<f64> {
        let rel = normalize_angle(state.heading - proj.tangent.y.atan2(proj.tangent.x));
        let mut f: Vec<f64> = wp.flatten().map(|x| x * self.feature_scale.offset).collect();
        f.push(state.speed() * self.feature_scale.speed);
        f.push(rel.sin());
        f.push(rel.cos());
        f
    }

    pub fn step(&self, track: &Track, state: &VehicleState, action: &ControlVector) -> StepOutcome {
        let next_state = self.plant.step(track, state, &action.clamped(), self.dt);
        let proj = track.project(next_state.position);
        StepOutcome {
            next_state,
            lateral_error: proj.e,
            arc_progress: proj.s,
            forward_speed: next_state.velocity.dot(&proj.tangent),
            terminal: track.is_off_track(proj.e),
        }
    }
}
