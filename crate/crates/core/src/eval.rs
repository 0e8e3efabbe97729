//! Evaluation protocol: lap scoring with checkpoint timeouts, per-track and
//! aggregate results, comparison tables and trajectory export.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oil::{mix_seed, rollout, trajectory_reward, RewardConfig};
use crate::sim::{Env, Track, VehicleKind};
use crate::teachers::Policy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub kind: VehicleKind,
    pub laps: usize,
    /// Seconds allowed to reach the next checkpoint.
    pub checkpoint_timeout: f64,
    /// Length of the per-checkpoint rollouts behind `reward`.
    pub reward_horizon: usize,
    pub reward: RewardConfig,
}

impl EvalConfig {
    pub fn for_kind(kind: VehicleKind) -> Self {
        match kind {
            VehicleKind::Car => EvalConfig {
                kind,
                laps: 1,
                checkpoint_timeout: 15.0,
                reward_horizon: 300,
                reward: RewardConfig::new(kind.into()),
            },
            VehicleKind::Uav => EvalConfig {
                kind,
                laps: 2,
                checkpoint_timeout: 10.0,
                reward_horizon: 200,
                reward: RewardConfig::new(kind.into()),
            },
        }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if self.laps == 0 {
            return Err(Error::InvalidParameter("laps must be >= 1".into()));
        }
        if !(self.checkpoint_timeout > 0.0) || self.checkpoint_timeout < dt {
            return Err(Error::InvalidParameter(format!(
                "checkpoint timeout must be at least one step, got {}",
                self.checkpoint_timeout
            )));
        }
        self.reward.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub track: usize,
    pub mean_abs_error: f64,
    pub completion_time: f64,
    pub checkpoints_passed: usize,
    pub checkpoints_total: usize,
    pub gates_passed_pct: f64,
    /// Timeout teleports.
    pub resets: usize,
    /// Terminal states (left the lane).
    pub crashes: usize,
    pub steps: usize,
    /// Mean trajectory reward of rollouts started at rest at each checkpoint.
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub name: String,
    pub kind: VehicleKind,
    pub laps: usize,
    pub tracks: Vec<TrackResult>,
    pub mean_abs_error: f64,
    pub completion_time: f64,
    pub gates_passed_pct: f64,
    pub resets: f64,
    pub crashes: f64,
    pub reward: f64,
}

impl EvalResult {
    pub fn from_tracks(name: &str, kind: VehicleKind, laps: usize, tracks: Vec<TrackResult>) -> Self {
        let n = tracks.len().max(1) as f64;
        let mean = |f: &dyn Fn(&TrackResult) -> f64| tracks.iter().map(f).sum::<f64>() / n;
        EvalResult {
            name: name.to_string(),
            kind,
            laps,
            mean_abs_error: mean(&|t| t.mean_abs_error),
            completion_time: mean(&|t| t.completion_time),
            gates_passed_pct: mean(&|t| t.gates_passed_pct),
            resets: mean(&|t| t.resets as f64),
            crashes: mean(&|t| t.crashes as f64),
            reward: mean(&|t| t.reward),
            tracks,
        }
    }

    /// True if no track produced a terminal state.
    pub fn crash_free(&self) -> bool {
        self.tracks.iter().all(|t| t.crashes == 0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EvalResult> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}

/// One simulated step of an evaluation run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub e: f64,
    pub arc_s: f64,
}

/// Runs the lap protocol on one track.
///
/// The vehicle starts at rest at `s = 0`. Targets are the checkpoints in
/// order, the lap finishing back at `s = 0`. Missing a target for
/// `checkpoint_timeout` teleports the vehicle there at rest (a reset; the
/// target is not counted as passed). Leaving the lane respawns it at rest at
/// the last target reached, without touching the timeout clock.
pub fn evaluate_track(
    env: &Env,
    track: &Track,
    index: usize,
    policy: &mut dyn Policy,
    cfg: &EvalConfig,
    mut record: Option<&mut Vec<TrajectoryRow>>,
) -> Result<TrackResult> {
    cfg.validate(env.dt)?;
    let length = track.total_length();
    let cps = track.checkpoints();
    let targets: Vec<f64> = (0..cfg.laps)
        .flat_map(|lap| {
            let base = lap as f64 * length;
            cps[1..].iter().map(move |&c| base + c).chain(std::iter::once(base + length))
        })
        .collect();
    let timeout_steps = (cfg.checkpoint_timeout / env.dt).round() as usize;

    policy.reset();
    let mut state = env.start_state(track, 0.0);
    let mut s = 0.0;
    let mut progress = 0.0;
    let mut last_reached = 0.0;
    let mut next = 0;
    let mut since_target = 0;
    let (mut passed, mut resets, mut crashes) = (0, 0, 0);
    let mut err_sum = 0.0;
    let mut steps = 0;
    while next < targets.len() {
        let obs = env.observe(track, &state, mix_seed(index as u64, steps as u64));
        let action = policy.act(&obs);
        if !action.is_finite() {
            return Err(Error::NonFiniteAction { track: index, step: steps });
        }
        let out = env.step(track, &state, &action);
        steps += 1;
        since_target += 1;
        err_sum += out.lateral_error.abs();
        progress += track.wrapped_delta(s, out.arc_progress);
        s = out.arc_progress;
        state = out.next_state;
        if let Some(rows) = record.as_deref_mut() {
            rows.push(TrajectoryRow {
                t: steps as f64 * env.dt,
                x: state.position.x,
                y: state.position.y,
                heading: state.heading,
                speed: state.speed(),
                e: out.lateral_error,
                arc_s: s,
            });
        }
        if out.terminal {
            crashes += 1;
            progress = last_reached;
            s = track.wrap(progress);
            state = env.start_state(track, s);
        } else {
            while next < targets.len() && progress >= targets[next] {
                last_reached = targets[next];
                passed += 1;
                next += 1;
                since_target = 0;
            }
        }
        if next < targets.len() && since_target >= timeout_steps {
            resets += 1;
            last_reached = targets[next];
            progress = last_reached;
            s = track.wrap(progress);
            state = env.start_state(track, s);
            next += 1;
            since_target = 0;
        }
    }

    let reward_starts = cps.iter().enumerate().map(|(i, &c)| {
        let start = env.start_state(track, c);
        let seed = mix_seed(index as u64 ^ 0xE7A1, i as u64);
        trajectory_reward(&rollout(env, track, policy, &start, cfg.reward_horizon, seed), &cfg.reward)
    });
    let reward = reward_starts.sum::<f64>() / cps.len() as f64;

    Ok(TrackResult {
        track: index,
        mean_abs_error: err_sum / steps.max(1) as f64,
        completion_time: steps as f64 * env.dt,
        checkpoints_passed: passed,
        checkpoints_total: targets.len(),
        gates_passed_pct: 100.0 * passed as f64 / targets.len() as f64,
        resets,
        crashes,
        steps,
        reward,
    })
}

pub fn run_evaluation(
    name: &str,
    env: &Env,
    tracks: &[Track],
    policy: &mut dyn Policy,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    if tracks.is_empty() {
        return Err(Error::InvalidParameter("no evaluation tracks".into()));
    }
    let per_track = tracks
        .iter()
        .enumerate()
        .map(|(i, t)| evaluate_track(env, t, i, policy, cfg, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult::from_tracks(name, cfg.kind, cfg.laps, per_track))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub mean_abs_error: f64,
    pub completion_time: f64,
    pub gates_passed_pct: f64,
    pub resets: f64,
    pub crashes: f64,
    pub reward: f64,
}

/// One row per result, in the order given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub kind: Option<VehicleKind>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(results: &[EvalResult]) -> ComparisonTable {
    ComparisonTable {
        kind: results.first().map(|r| r.kind),
        rows: results
            .iter()
            .map(|r| ComparisonRow {
                name: r.name.clone(),
                mean_abs_error: r.mean_abs_error,
                completion_time: r.completion_time,
                gates_passed_pct: r.gates_passed_pct,
                resets: r.resets,
                crashes: r.crashes,
                reward: r.reward,
            })
            .collect(),
    }
}

impl ComparisonTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::format(Path::new("<table>"), e))?;
        }
        if self.rows.is_empty() {
            w.write_record(["name", "mean_abs_error", "completion_time", "gates_passed_pct", "resets", "crashes", "reward"])
                .map_err(|e| Error::format(Path::new("<table>"), e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format(Path::new("<table>"), e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(6);
        let uav = self.kind == Some(VehicleKind::Uav);
        let score = if uav { "gates %" } else { "error m" };
        writeln!(f, "{:<width$}  {:>9}  {:>9}  {:>7}  {:>7}  {:>11}", "policy", score, "time s", "resets", "crashes", "reward")?;
        for r in &self.rows {
            let s = if uav { r.gates_passed_pct } else { r.mean_abs_error };
            writeln!(
                f,
                "{:<width$}  {:>9.3}  {:>9.2}  {:>7.2}  {:>7.2}  {:>11.2}",
                r.name, s, r.completion_time, r.resets, r.crashes, r.reward
            )?;
        }
        Ok(())
    }
}

/// Writes `t,x,y,heading,speed,e,arc_s` rows with a header line.
pub fn export_trajectory(rows: &[TrajectoryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    if rows.is_empty() {
        w.write_record(["t", "x", "y", "heading", "speed", "e", "arc_s"]).map_err(|e| Error::format(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::format(path, e))).collect()
}
