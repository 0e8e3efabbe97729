//! Closed race tracks: generation, arc-length geometry and the on-disk format.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Vec2;
use crate::error::{Error, Result};

pub const TRACK_FILE_VERSION: u32 = 1;

/// A closed course whose centerline is a uniformly resampled polyline.
///
/// `centerline` stores `segments + 1` points; the last one repeats the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub seed: u64,
    centerline: Vec<Vec2>,
    cumulative_arc_length: Vec<f64>,
    half_width: f64,
    checkpoint_spacing: f64,
    checkpoints: Vec<f64>,
}

/// Nearest point on the centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arc length of the nearest point, in `[0, total_length)`.
    pub s: f64,
    /// Signed perpendicular distance, positive left of the tangent.
    pub e: f64,
    pub tangent: Vec2,
}

impl Track {
    /// Builds a track from an ordered loop of points. A closing point equal to
    /// the first one is appended when missing.
    pub fn from_centerline(
        mut points: Vec<Vec2>,
        half_width: f64,
        checkpoint_spacing: f64,
        seed: u64,
    ) -> Result<Track> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidTrack(format!("half_width must be positive, got {half_width}")));
        }
        if !(checkpoint_spacing > 0.0) {
            return Err(Error::InvalidTrack(format!(
                "checkpoint_spacing must be positive, got {checkpoint_spacing}"
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidTrack("non-finite centerline point".into()));
        }
        let first = *points.first().ok_or_else(|| Error::InvalidTrack("empty centerline".into()))?;
        let last = *points.last().unwrap();
        if (last - first).norm() > 1e-6 {
            points.push(first);
        } else {
            *points.last_mut().unwrap() = first;
        }
        if points.len() < 32 {
            return Err(Error::InvalidTrack(format!(
                "centerline needs at least 32 points, got {}",
                points.len()
            )));
        }

        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let len = (w[1] - w[0]).norm();
            if !(len > 0.0) {
                return Err(Error::InvalidTrack("repeated consecutive centerline points".into()));
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        let total = *cumulative.last().unwrap();

        let mut checkpoints = Vec::new();
        let mut s = 0.0;
        while s < total - 1e-9 {
            checkpoints.push(s);
            s += checkpoint_spacing;
        }

        Ok(Track {
            seed,
            centerline: points,
            cumulative_arc_length: cumulative,
            half_width,
            checkpoint_spacing,
            checkpoints,
        })
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn cumulative_arc_length(&self) -> &[f64] {
        &self.cumulative_arc_length
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn checkpoint_spacing(&self) -> f64 {
        self.checkpoint_spacing
    }

    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative_arc_length.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.centerline.len() - 1
    }

    /// Mean distance between consecutive centerline samples.
    pub fn sample_spacing(&self) -> f64 {
        self.total_length() / self.segment_count() as f64
    }

    pub fn wrap(&self, s: f64) -> f64 {
        let total = self.total_length();
        let w = s.rem_euclid(total);
        if w >= total {
            0.0
        } else {
            w
        }
    }

    /// Signed arc distance from `from` to `to`, taking the short way round.
    pub fn wrapped_delta(&self, from: f64, to: f64) -> f64 {
        let total = self.total_length();
        let mut d = (to - from).rem_euclid(total);
        if d > 0.5 * total {
            d -= total;
        }
        d
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let s = self.wrap(s);
        let arc = &self.cumulative_arc_length;
        let i = match arc.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
        .min(self.segment_count() - 1);
        let len = arc[i + 1] - arc[i];
        (i, ((s - arc[i]) / len).clamp(0.0, 1.0))
    }

    /// Centerline point at arc length `s` (wrapping around the loop).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let (i, t) = self.segment_at(s);
        self.centerline[i] + (self.centerline[i + 1] - self.centerline[i]) * t
    }

    /// Unit tangent of the segment containing arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let (i, _) = self.segment_at(s);
        (self.centerline[i + 1] - self.centerline[i]).normalize()
    }

    /// Nearest point on the piecewise-linear centerline. Ties go to the
    /// smaller arc length.
    pub fn project(&self, p: Vec2) -> Projection {
        let mut best_d2 = f64::INFINITY;
        let mut best = (0usize, 0.0f64);
        for i in 0..self.segment_count() {
            let a = self.centerline[i];
            let ab = self.centerline[i + 1] - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d2 = (p - (a + ab * t)).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = (i, t);
            }
        }
        let (i, t) = best;
        let a = self.centerline[i];
        let ab = self.centerline[i + 1] - a;
        let len = ab.norm();
        let tangent = ab / len;
        let q = a + ab * t;
        let d = p - q;
        let e = tangent.x * d.y - tangent.y * d.x;
        let mut s = self.cumulative_arc_length[i] + t * len;
        if s >= self.total_length() {
            s -= self.total_length();
        }
        Projection { s, e, tangent }
    }

    pub fn is_off_track(&self, e: f64) -> bool {
        e.abs() > self.half_width
    }

    /// Arc length of the last checkpoint at or behind `s`.
    pub fn checkpoint_behind(&self, s: f64) -> f64 {
        let s = self.wrap(s);
        self.checkpoints.iter().copied().filter(|&c| c <= s).fold(0.0, f64::max)
    }

    pub fn to_file(&self) -> TrackFile {
        TrackFile {
            version: TRACK_FILE_VERSION,
            seed: self.seed,
            half_width: self.half_width,
            checkpoint_spacing: self.checkpoint_spacing,
            centerline: self.centerline.iter().map(|p| [p.x, p.y]).collect(),
            meta: Default::default(),
        }
    }

    pub fn from_file(file: TrackFile) -> Result<Track> {
        if file.version != TRACK_FILE_VERSION {
            return Err(Error::InvalidTrack(format!("unsupported track file version {}", file.version)));
        }
        let points = file.centerline.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        Track::from_centerline(points, file.half_width, file.checkpoint_spacing, file.seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file()).map_err(|e| Error::format(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Track> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TrackFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        Track::from_file(file).map_err(|e| Error::format(path, e))
    }
}

/// Serialized track document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub version: u32,
    pub seed: u64,
    pub half_width: f64,
    pub checkpoint_spacing: f64,
    pub centerline: Vec<[f64; 2]>,
    /// Free-form provenance.
    #[serde(default)]
    pub meta: std::collections::BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackParams {
    pub control_points: usize,
    /// Control-point radii are drawn uniformly from `[min, max]` (meters).
    pub radius_range: (f64, f64),
    /// Angular jitter of control points as a fraction of their even spacing.
    pub angle_jitter: f64,
    /// Lane half-width (meters).
    pub width: f64,
    pub checkpoint_spacing: f64,
    pub samples: usize,
}

impl Default for TrackParams {
    fn default() -> Self {
        TrackParams {
            control_points: 9,
            radius_range: (45.0, 95.0),
            angle_jitter: 0.3,
            width: 4.0,
            checkpoint_spacing: 50.0,
            samples: 512,
        }
    }
}

/// Seeds of the `i`-th training and test track derived from a suite seed.
pub fn suite_track_seed(seed: u64, test: bool, i: usize) -> u64 {
    let stream = if test { 1_000 + i as u64 } else { i as u64 };
    crate::oil::mix_seed(seed, stream)
}

/// Generates `train` training and `test` held-out tracks from one seed.
pub fn generate_suite(seed: u64, train: usize, test: usize, params: &TrackParams) -> Result<(Vec<Track>, Vec<Track>)> {
    let gen = |is_test: bool, n: usize| {
        (0..n).map(|i| generate_track(suite_track_seed(seed, is_test, i), params)).collect::<Result<Vec<_>>>()
    };
    Ok((gen(false, train)?, gen(true, test)?))
}

const MAX_GENERATION_ATTEMPTS: usize = 100;

/// Generates a smooth closed loop from random control points on a perturbed
/// circle. The radius is interpolated over the polar angle with a periodic
/// cubic Hermite spline (C¹), then the curve is resampled uniformly by arc
/// length. Candidates whose lane corridor overlaps itself are redrawn.
pub fn generate_track(seed: u64, params: &TrackParams) -> Result<Track> {
    let (r_min, r_max) = params.radius_range;
    if params.control_points < 4 {
        return Err(Error::InvalidParameter(format!(
            "control_points must be >= 4, got {}",
            params.control_points
        )));
    }
    if !(r_min > 0.0 && r_max >= r_min) {
        return Err(Error::InvalidParameter(format!("bad radius_range ({r_min}, {r_max})")));
    }
    if params.samples < 32 {
        return Err(Error::InvalidParameter(format!("samples must be >= 32, got {}", params.samples)));
    }
    if !(0.0..1.0).contains(&params.angle_jitter) {
        return Err(Error::InvalidParameter(format!(
            "angle_jitter must be in [0, 1), got {}",
            params.angle_jitter
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reason = String::new();
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let n = params.control_points;
        let step = TAU / n as f64;
        let angles: Vec<f64> = (0..n)
            .map(|j| {
                let jitter = if params.angle_jitter > 0.0 {
                    rng.random_range(-0.5..0.5) * params.angle_jitter
                } else {
                    0.0
                };
                (j as f64 + jitter) * step
            })
            .collect();
        let radii: Vec<f64> =
            (0..n).map(|_| if r_max > r_min { rng.random_range(r_min..=r_max) } else { r_min }).collect();

        let dense = polar_spline(&angles, &radii, params.samples * 16);
        let points = resample_uniform(&dense, params.samples);
        match check_corridor(&points, params.width) {
            Ok(()) => {
                return Track::from_centerline(points, params.width, params.checkpoint_spacing, seed);
            }
            Err(r) => reason = r,
        }
    }
    Err(Error::GenerationFailed { seed, attempts: MAX_GENERATION_ATTEMPTS, reason })
}

/// Samples `r(φ)·(cos φ, sin φ)` for a periodic Catmull-Rom style Hermite
/// interpolation of the control radii. Returns an open loop (no repeated
/// closing point).
fn polar_spline(angles: &[f64], radii: &[f64], count: usize) -> Vec<Vec2> {
    let n = angles.len();
    let angle = |j: isize| -> f64 {
        let k = j.rem_euclid(n as isize) as usize;
        angles[k] + TAU * (j.div_euclid(n as isize)) as f64
    };
    let radius = |j: isize| radii[j.rem_euclid(n as isize) as usize];
    let slope = |j: isize| (radius(j + 1) - radius(j - 1)) / (angle(j + 1) - angle(j - 1));

    let start = angles[0];
    (0..count)
        .map(|i| {
            let phi = start + TAU * i as f64 / count as f64;
            // segment j such that angle(j) <= phi < angle(j+1)
            let mut j = 0isize;
            while angle(j + 1) <= phi {
                j += 1;
            }
            let (a0, a1) = (angle(j), angle(j + 1));
            let h = a1 - a0;
            let t = (phi - a0) / h;
            let (t2, t3) = (t * t, t * t * t);
            let r = (2.0 * t3 - 3.0 * t2 + 1.0) * radius(j)
                + (t3 - 2.0 * t2 + t) * h * slope(j)
                + (-2.0 * t3 + 3.0 * t2) * radius(j + 1)
                + (t3 - t2) * h * slope(j + 1);
            Vec2::new(r * phi.cos(), r * phi.sin())
        })
        .collect()
}

/// Resamples an open loop of points into `samples` points equally spaced by
/// arc length around the closed curve.
fn resample_uniform(dense: &[Vec2], samples: usize) -> Vec<Vec2> {
    let n = dense.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for i in 0..n {
        let next = dense[(i + 1) % n];
        cumulative.push(cumulative[i] + (next - dense[i]).norm());
    }
    let total = cumulative[n];
    let mut out = Vec::with_capacity(samples);
    let mut seg = 0;
    for k in 0..samples {
        let s = total * k as f64 / samples as f64;
        while cumulative[seg + 1] < s {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 { (s - cumulative[seg]) / len } else { 0.0 };
        let a = dense[seg];
        let b = dense[(seg + 1) % n];
        out.push(a + (b - a) * t);
    }
    out
}

fn segments_cross(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).perp(&(b - o));
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

/// Rejects centerlines that cross themselves, bend tighter than the lane
/// half-width, or bring two distant parts of the course within one lane width.
fn check_corridor(points: &[Vec2], half_width: f64) -> std::result::Result<(), String> {
    let n = points.len();
    let at = |i: usize| points[i % n];

    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(at(i), at(i + 1), at(j), at(j + 1)) {
                return Err(format!("centerline self-intersects at segments {i} and {j}"));
            }
        }
    }

    let spacing: f64 = (0..n).map(|i| (at(i + 1) - at(i)).norm()).sum::<f64>() / n as f64;
    let stride = ((half_width / spacing).ceil() as usize).max(1);
    for i in 0..n {
        let a = at(i + n - stride);
        let b = at(i);
        let c = at(i + stride);
        let radius = circumradius(a, b, c);
        if radius <= half_width {
            return Err(format!("bend radius {radius:.2} m at sample {i} is tighter than half-width"));
        }
    }

    let min_arc = PI * 2.0 * half_width;
    let min_arc_samples = (min_arc / spacing).ceil() as usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let sep = (j - i).min(n - (j - i));
            if sep <= min_arc_samples {
                continue;
            }
            if (points[i] - points[j]).norm() < 2.0 * half_width {
                return Err(format!("lane corridor overlaps itself near samples {i} and {j}"));
            }
        }
    }
    Ok(())
}

fn circumradius(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let area2 = (b - a).perp(&(c - a)).abs();
    if area2 == 0.0 {
        return f64::INFINITY;
    }
    (b - a).norm() * (c - b).norm() * (a - c).norm() / (2.0 * area2)
}

/// Signed curvature of the centerline around each sample, estimated from the
/// circle through samples `stride` apart. Positive bends left.
pub fn curvature_profile(track: &Track, stride: usize) -> Vec<f64> {
    let n = track.segment_count();
    let pts = track.centerline();
    (0..n)
        .map(|i| {
            let a = pts[(i + n - stride) % n];
            let b = pts[i];
            let c = pts[(i + stride) % n];
            let sign = (b - a).perp(&(c - b)).signum();
            sign / circumradius(a, b, c)
        })
        .collect()
}
