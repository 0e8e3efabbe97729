//! Reference trainers: behavior cloning, DAGGER and DDPG. All of them use the
//! same features, network and action clamping as the OIL learner.

mod ddpg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oil::{mix_seed, Learner};
use crate::policy::{train_on_dataset, Adam, Dataset, DEFAULT_BATCH_SIZE, DEFAULT_DROPOUT};
use crate::sim::{Env, Track, VehicleState};
use crate::teachers::{Policy, Teacher, TeacherSpec};

pub use ddpg::{
    critic_loss_and_grad, ddpg_dense_reward, soft_update, train_ddpg, DdpgAgent, DdpgConfig, DdpgLog, ReplayBuffer,
    Transition,
};

/// Shared settings of the supervised baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationParams {
    /// Simulator steps of data collection per iteration (BC has one iteration).
    pub steps_per_iteration: usize,
    /// Minibatch updates after each collection phase.
    pub updates_per_iteration: usize,
    pub episode_len: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
}

impl ImitationParams {
    pub fn new(steps_per_iteration: usize, episode_len: usize) -> Self {
        ImitationParams {
            steps_per_iteration,
            updates_per_iteration: steps_per_iteration,
            episode_len,
            batch_size: DEFAULT_BATCH_SIZE,
            dropout: DEFAULT_DROPOUT,
            learning_rate: Adam::DEFAULT_LR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_iteration == 0 || self.episode_len == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("imitation budgets must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// One record per collection-and-fit iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImitationLog {
    pub iteration: usize,
    pub steps_collected: usize,
    pub dataset_size: usize,
    /// Labels added this iteration, counted per teacher.
    pub label_sources: Vec<usize>,
    pub terminal_states: usize,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct ImitationOutcome {
    pub learner: Learner,
    pub dataset: Dataset,
    pub log: Vec<ImitationLog>,
}

/// Deterministic start of the `k`-th episode: tracks in turn, then the next
/// checkpoint on each pass.
pub(crate) fn episode_start(env: &Env, tracks: &[Track], k: usize) -> (usize, VehicleState) {
    let ti = k % tracks.len();
    let cps = tracks[ti].checkpoints();
    let s = cps[(k / tracks.len()) % cps.len()];
    (ti, env.start_state(&tracks[ti], s))
}

/// Drives `driver` for `steps` steps from `start`, storing each visited state
/// labeled by `labeler` (or by the driver itself). Leaving the lane respawns
/// at rest at the checkpoint behind and resets both policies.
#[allow(clippy::too_many_arguments)]
fn collect(
    env: &Env,
    track: &Track,
    start: VehicleState,
    driver: &mut dyn Policy,
    mut labeler: Option<&mut dyn Policy>,
    source: usize,
    steps: usize,
    data: &mut Dataset,
    noise_seed: u64,
) -> Result<usize> {
    driver.reset();
    if let Some(l) = labeler.as_deref_mut() {
        l.reset();
    }
    let mut state = start;
    let mut crashes = 0;
    for k in 0..steps {
        let obs = env.observe(track, &state, mix_seed(noise_seed, k as u64));
        let action = driver.act(&obs);
        let label = match labeler.as_deref_mut() {
            Some(l) => l.act(&obs),
            None => action,
        };
        data.push(&obs.features, &label.to_vec(), source)?;
        let out = env.step(track, &state, &action);
        if out.terminal {
            crashes += 1;
            state = env.start_state(track, track.checkpoint_behind(out.arc_progress));
            driver.reset();
            if let Some(l) = labeler.as_deref_mut() {
                l.reset();
            }
        } else {
            state = out.next_state;
        }
    }
    Ok(crashes)
}

fn fit(learner: &mut Learner, data: &Dataset, params: &ImitationParams) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..params.updates_per_iteration {
        total += train_on_dataset(
            &mut learner.net,
            &mut learner.adam,
            data,
            params.batch_size,
            params.dropout,
            &mut learner.rng,
        )?;
    }
    Ok(total / params.updates_per_iteration.max(1) as f64)
}

/// Teacher-driven collection with the step budget split evenly across the
/// teachers, episode by episode.
fn collect_teacher_data(
    env: &Env,
    tracks: &[Track],
    teachers: &mut [Box<dyn Policy>],
    params: &ImitationParams,
    data: &mut Dataset,
    seed: u64,
) -> Result<(Vec<usize>, usize)> {
    let per_teacher = params.steps_per_iteration / teachers.len();
    let extra = params.steps_per_iteration % teachers.len();
    let mut sources = vec![0; teachers.len()];
    let mut crashes = 0;
    for (i, teacher) in teachers.iter_mut().enumerate() {
        let mut left = per_teacher + usize::from(i < extra);
        let mut k = 0;
        while left > 0 {
            let n = left.min(params.episode_len);
            let (ti, start) = episode_start(env, tracks, k);
            let seed = mix_seed(seed, ((i as u64) << 32) | k as u64);
            crashes += collect(env, &tracks[ti], start, teacher.as_mut(), None, i, n, data, seed)?;
            sources[i] += n;
            left -= n;
            k += 1;
        }
    }
    Ok((sources, crashes))
}

fn check_inputs(tracks: &[Track], teachers: usize, params: &ImitationParams) -> Result<()> {
    params.validate()?;
    if tracks.is_empty() {
        return Err(Error::InvalidParameter("no training tracks".into()));
    }
    if teachers == 0 {
        return Err(Error::InvalidParameter("no teachers".into()));
    }
    Ok(())
}

/// Behavior cloning: regress teacher actions on teacher-visited states. With
/// several teachers their data is pooled without any selection.
pub fn train_bc(
    env: &Env,
    tracks: &[Track],
    teachers: &[TeacherSpec],
    params: &ImitationParams,
    seed: u64,
) -> Result<ImitationOutcome> {
    train_bc_from(env, tracks, &mut boxed(env, teachers), params, seed)
}

fn boxed(env: &Env, teachers: &[TeacherSpec]) -> Vec<Box<dyn Policy>> {
    teachers.iter().map(|s| Box::new(Teacher::new(s.clone(), env.kind())) as Box<dyn Policy>).collect()
}

/// Behavior cloning from arbitrary labeling policies.
pub fn train_bc_from(
    env: &Env,
    tracks: &[Track],
    teachers: &mut [Box<dyn Policy>],
    params: &ImitationParams,
    seed: u64,
) -> Result<ImitationOutcome> {
    check_inputs(tracks, teachers.len(), params)?;
    let mut learner = Learner::new(env, params.learning_rate, seed)?;
    let mut data = Dataset::new(env.feature_dim(), env.action_dim());
    let (label_sources, crashes) = collect_teacher_data(env, tracks, teachers, params, &mut data, seed)?;
    let mean_loss = fit(&mut learner, &data, params)?;
    let log = vec![ImitationLog {
        iteration: 1,
        steps_collected: params.steps_per_iteration,
        dataset_size: data.len(),
        label_sources,
        terminal_states: crashes,
        mean_loss,
    }];
    Ok(ImitationOutcome { learner, dataset: data, log })
}

/// DAGGER. Iteration 1 is behavior cloning; later iterations drive the
/// learner and label its states with the expert. With several teachers the
/// expert rotates per episode.
pub fn train_dagger(
    env: &Env,
    tracks: &[Track],
    teachers: &[TeacherSpec],
    iterations: usize,
    params: &ImitationParams,
    seed: u64,
) -> Result<ImitationOutcome> {
    train_dagger_with(env, tracks, teachers, iterations, params, seed, |_| {})
}

pub fn train_dagger_with(
    env: &Env,
    tracks: &[Track],
    teachers: &[TeacherSpec],
    iterations: usize,
    params: &ImitationParams,
    seed: u64,
    on_iteration: impl FnMut(&ImitationLog),
) -> Result<ImitationOutcome> {
    train_dagger_from(env, tracks, &mut boxed(env, teachers), iterations, params, seed, on_iteration)
}

/// DAGGER with arbitrary expert policies.
pub fn train_dagger_from(
    env: &Env,
    tracks: &[Track],
    experts: &mut [Box<dyn Policy>],
    iterations: usize,
    params: &ImitationParams,
    seed: u64,
    mut on_iteration: impl FnMut(&ImitationLog),
) -> Result<ImitationOutcome> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("DAGGER needs at least one iteration".into()));
    }
    let mut out = train_bc_from(env, tracks, experts, params, seed)?;
    on_iteration(&out.log[0]);
    let teachers = experts.len();
    let mut episode = 0usize;
    for it in 2..=iterations {
        let mut left = params.steps_per_iteration;
        let mut sources = vec![0; teachers];
        let mut crashes = 0;
        while left > 0 {
            let n = left.min(params.episode_len);
            let e = episode % teachers;
            let (ti, start) = episode_start(env, tracks, episode);
            let net = out.learner.net.clone();
            let mut driver = crate::policy::MlpPolicy::new(&net, env.kind());
            let seed = mix_seed(seed, ((it as u64) << 40) | episode as u64);
            crashes +=
                collect(env, &tracks[ti], start, &mut driver, Some(experts[e].as_mut()), e, n, &mut out.dataset, seed)?;
            sources[e] += n;
            left -= n;
            episode += 1;
        }
        let mean_loss = fit(&mut out.learner, &out.dataset, params)?;
        out.log.push(ImitationLog {
            iteration: it,
            steps_collected: params.steps_per_iteration,
            dataset_size: out.dataset.len(),
            label_sources: sources,
            terminal_states: crashes,
            mean_loss,
        });
        on_iteration(out.log.last().unwrap());
    }
    Ok(out)
}
