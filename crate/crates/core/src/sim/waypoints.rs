use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{heading_vector, Track, Vec2};

/// Look-ahead centerline points in the vehicle's viewing frame: each entry is
/// `[vertical, horizontal]`, i.e. the offset along the heading and along its
/// left normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointVector {
    pub points: Vec<[f64; 2]>,
}

impl WaypointVector {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn vertical(&self, i: usize) -> f64 {
        self.points[i][0]
    }

    pub fn horizontal(&self, i: usize) -> f64 {
        self.points[i][1]
    }

    /// Angle of waypoint `i` off the heading, positive to the left.
    pub fn bearing(&self, i: usize) -> f64 {
        self.points[i][1].atan2(self.points[i][0])
    }

    pub fn flatten(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().flat_map(|p| p.iter().copied())
    }
}

/// Samples the centerline at `s + spacing, …, s + k·spacing` past the
/// vehicle's projected arc length and expresses each point in the vehicle
/// frame.
pub fn encode_waypoints(track: &Track, position: Vec2, heading: f64, k: usize, spacing: f64) -> WaypointVector {
    let s = track.project(position).s;
    encode_waypoints_from(track, s, position, heading, k, spacing)
}

/// Same as [`encode_waypoints`] with the projected arc length already known.
pub fn encode_waypoints_from(
    track: &Track,
    s: f64,
    position: Vec2,
    heading: f64,
    k: usize,
    spacing: f64,
) -> WaypointVector {
    let forward = heading_vector(heading);
    let left = Vec2::new(-forward.y, forward.x);
    let points = (1..=k)
        .map(|i| {
            let d = track.point_at(s + i as f64 * spacing) - position;
            [d.dot(&forward), d.dot(&left)]
        })
        .collect();
    WaypointVector { points }
}

/// Adds i.i.d. Gaussian noise to every offset, then restores the ordering of
/// vertical offsets. `sigma == 0` returns the input untouched.
pub fn add_waypoint_noise(wp: &WaypointVector, sigma: f64, seed: u64) -> WaypointVector {
    if sigma == 0.0 {
        return wp.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let mut points: Vec<[f64; 2]> = wp
        .points
        .iter()
        .map(|p| [p[0] + normal.sample(&mut rng), p[1] + normal.sample(&mut rng)])
        .collect();
    points.sort_by(|a, b| a[0].total_cmp(&b[0]));
    WaypointVector { points }
}
