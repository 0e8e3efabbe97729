//! Observational imitation learning.
//!
//! Each observation round estimates the value of the learner and of every
//! teacher from the same start state, picks the best teacher as the critic,
//! and, while the learner is behind, rehearses: the learner drives, the critic
//! labels every visited state, and the labels are regressed with one Adam
//! minibatch per simulator step. The round ends by acting `J` steps with the
//! improved learner to reach the next start state.

mod reward;
mod rollout;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{control_dims, train_on_dataset, Adam, Dataset, Mlp, MlpPolicy, DEFAULT_BATCH_SIZE, DEFAULT_DROPOUT};
use crate::sim::{Env, Track, VehicleState};
use crate::teachers::{Policy, Teacher, TeacherSpec};

pub use reward::{
    driving_score, reward_driving, reward_uav, trajectory_reward, uav_score, RewardConfig, RewardMode,
};
pub use rollout::{estimate_value, mix_seed, rollout, PolicyId, Trajectory, TrajectoryStep, ValueEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonMode {
    Single,
    Multi,
}

impl std::str::FromStr for EpsilonMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "single" => Ok(EpsilonMode::Single),
            "multi" => Ok(EpsilonMode::Multi),
            o => Err(format!("unknown epsilon mode '{o}' (expected single or multi)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OilParams {
    /// Observation rounds `M`.
    pub rounds: usize,
    /// Rollout length `N`.
    pub horizon: usize,
    /// Rehearse episode cap `I`.
    pub max_episodes: usize,
    /// Act steps `J`.
    pub act_steps: usize,
    pub epsilon_mode: EpsilonMode,
    pub mc_rollouts: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub dataset_capacity: Option<usize>,
    /// Act steps without reaching a new checkpoint before the start state is
    /// moved to the next checkpoint. Mirrors the evaluation timeout.
    pub stall_steps: usize,
}

impl OilParams {
    pub fn car() -> Self {
        OilParams {
            rounds: 400,
            horizon: 300,
            max_episodes: 50,
            act_steps: 60,
            epsilon_mode: EpsilonMode::Multi,
            mc_rollouts: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            dropout: DEFAULT_DROPOUT,
            learning_rate: Adam::DEFAULT_LR,
            dataset_capacity: None,
            stall_steps: 300,
        }
    }

    pub fn uav() -> Self {
        OilParams { horizon: 200, stall_steps: 200, ..OilParams::car() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rounds", self.rounds),
            ("horizon", self.horizon),
            ("max_episodes", self.max_episodes),
            ("act_steps", self.act_steps),
            ("mc_rollouts", self.mc_rollouts),
            ("batch_size", self.batch_size),
            ("stall_steps", self.stall_steps),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Argmax of the values; ties go to the lowest index.
pub fn select_critical_teacher(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `V_learner − V_teacher`.
pub fn advantage(v_learner: f64, v_teacher: f64) -> f64 {
    v_learner - v_teacher
}

/// Rehearse stopping threshold: `−0.1·V*` with several teachers, `0` with one.
pub fn epsilon_threshold(mode: EpsilonMode, v_critical: f64) -> f64 {
    match mode {
        EpsilonMode::Multi => -0.1 * v_critical,
        EpsilonMode::Single => 0.0,
    }
}

/// The network being trained together with its optimizer and sampling RNG.
#[derive(Clone, Debug)]
pub struct Learner {
    pub net: Mlp,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(env: &Env, lr: f64, seed: u64) -> Result<Self> {
        let net = Mlp::init(&control_dims(env.feature_dim(), env.action_dim()), mix_seed(seed, 0x1417))?;
        Ok(Learner::from_net(net, lr, seed))
    }

    pub fn from_net(net: Mlp, lr: f64, seed: u64) -> Self {
        let adam = Adam::new(net.param_count(), lr);
        Learner { net, adam, rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xADA)) }
    }

    pub fn policy(&self, env: &Env) -> MlpPolicy<'_> {
        MlpPolicy::new(&self.net, env.kind())
    }
}

/// Everything rehearse needs besides the mutable learner and dataset.
pub struct RehearseSetup<'a> {
    pub env: &'a Env,
    pub track: &'a Track,
    pub critic_index: usize,
    pub start: VehicleState,
    pub params: &'a OilParams,
    pub reward: &'a RewardConfig,
    pub critic_value: f64,
    pub epsilon: f64,
    pub noise_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RehearseOutcome {
    pub episodes_used: usize,
    pub final_advantage: f64,
    pub final_learner_value: f64,
    pub labels_added: usize,
    pub mean_loss: f64,
}

/// Rehearse loop. Each episode is exactly `N` labeled learner steps from the
/// start state, respawning there after a terminal step. Stops once the
/// re-estimated advantage exceeds `epsilon` or after `I` episodes; at least
/// one episode always runs.
pub fn rehearse(
    setup: &RehearseSetup<'_>,
    critic: &mut dyn Policy,
    learner: &mut Learner,
    dataset: &mut Dataset,
) -> Result<RehearseOutcome> {
    let RehearseSetup { env, track, critic_index, start, params, reward, .. } = *setup;
    let mut episodes = 0;
    let mut labels = 0;
    let mut loss_sum = 0.0;
    let mut updates = 0usize;
    loop {
        episodes += 1;
        critic.reset();
        let mut state = start;
        for n in 0..params.horizon {
            let obs = env.observe(track, &state, mix_seed(setup.noise_seed ^ 0x5EED, (episodes * params.horizon + n) as u64));
            let action = learner.policy(env).act(&obs);
            let label = critic.act(&obs);
            dataset.push(&obs.features, &label.to_vec(), critic_index)?;
            labels += 1;
            loss_sum += train_on_dataset(
                &mut learner.net,
                &mut learner.adam,
                dataset,
                params.batch_size,
                params.dropout,
                &mut learner.rng,
            )?;
            updates += 1;
            let outcome = env.step(track, &state, &action);
            if outcome.terminal {
                state = start;
                critic.reset();
            } else {
                state = outcome.next_state;
            }
        }
        let v = estimate_value(
            env,
            track,
            &mut learner.policy(env),
            PolicyId::Learner,
            &start,
            params.horizon,
            reward,
            params.mc_rollouts,
            setup.noise_seed,
        )
        .value;
        let a = advantage(v, setup.critic_value);
        if a > setup.epsilon || episodes >= params.max_episodes {
            return Ok(RehearseOutcome {
                episodes_used: episodes,
                final_advantage: a,
                final_learner_value: v,
                labels_added: labels,
                mean_loss: loss_sum / updates.max(1) as f64,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActOutcome {
    pub state: VehicleState,
    /// Arc length advanced, negative if a respawn moved the vehicle back.
    pub progress: f64,
    pub respawned: bool,
    pub steps: usize,
}

/// Drives the learner `j` steps from `start`. A terminal step ends the act
/// phase at the checkpoint behind the crash, on the centerline and at rest.
pub fn act(env: &Env, track: &Track, policy: &mut dyn Policy, start: &VehicleState, j: usize, noise_seed: u64) -> Result<ActOutcome> {
    if j == 0 {
        return Err(Error::InvalidParameter("act steps J must be >= 1".into()));
    }
    policy.reset();
    let mut state = *start;
    let mut s = track.project(start.position).s;
    let mut progress = 0.0;
    for k in 0..j {
        let obs = env.observe(track, &state, mix_seed(noise_seed, k as u64));
        let action = policy.act(&obs);
        let out = env.step(track, &state, &action);
        progress += track.wrapped_delta(s, out.arc_progress);
        s = out.arc_progress;
        if out.terminal {
            let back = track.checkpoint_behind(s);
            progress += track.wrapped_delta(s, back);
            return Ok(ActOutcome { state: env.start_state(track, back), progress, respawned: true, steps: k + 1 });
        }
        state = out.next_state;
    }
    Ok(ActOutcome { state, progress, respawned: false, steps: j })
}

/// One record per observation round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub track: usize,
    pub s1_arc: f64,
    pub s1_speed: f64,
    pub learner_value: f64,
    pub teacher_values: Vec<f64>,
    pub critic: usize,
    pub advantage: f64,
    pub epsilon: f64,
    pub rehearsed: bool,
    pub episodes_used: usize,
    pub final_advantage: f64,
    pub dataset_size: usize,
    pub labels_added: usize,
    /// Labels added this round, counted per teacher.
    pub label_sources: Vec<usize>,
    pub mean_loss: f64,
    /// The learner made no checkpoint progress for too long and the next
    /// start state was moved one checkpoint ahead.
    #[serde(default)]
    pub skipped_ahead: bool,
    /// Act left the learner where every teacher crashes on its first step, so
    /// the round started from the checkpoint behind, at rest.
    #[serde(default)]
    pub restarted: bool,
}

impl RoundLog {
    /// Loop contract: without rehearsal the learner was not behind; with it,
    /// exactly one of "advantage cleared ε" and "episode cap hit with the
    /// advantage still at or below ε" holds.
    pub fn satisfies_contract(&self, max_episodes: usize) -> bool {
        let labels_ok = self.label_sources.iter().enumerate().all(|(i, &c)| i == self.critic || c == 0)
            && self.label_sources.iter().sum::<usize>() == self.labels_added;
        let critic_ok = self.teacher_values.iter().all(|&v| v <= self.teacher_values[self.critic])
            && self.teacher_values[..self.critic].iter().all(|&v| v < self.teacher_values[self.critic]);
        let loop_ok = if self.rehearsed {
            (self.final_advantage > self.epsilon)
                ^ (self.episodes_used == max_episodes && self.final_advantage <= self.epsilon)
        } else {
            self.advantage >= 0.0 && self.labels_added == 0
        };
        labels_ok && critic_ok && loop_ok
    }
}

/// Algorithm state across observation rounds.
pub struct OilTrainer<'a> {
    env: &'a Env,
    tracks: &'a [Track],
    teachers: Vec<TeacherSpec>,
    params: OilParams,
    reward: RewardConfig,
    seed: u64,
    learner: Learner,
    dataset: Dataset,
    track_index: usize,
    s1: VehicleState,
    lap_progress: f64,
    /// Furthest checkpoint reached this lap, in lap progress.
    frontier: f64,
    stalled_steps: usize,
    log: Vec<RoundLog>,
}

#[derive(Clone, Debug)]
pub struct OilOutcome {
    pub learner: Learner,
    pub dataset: Dataset,
    pub log: Vec<RoundLog>,
}

impl<'a> OilTrainer<'a> {
    pub fn new(
        env: &'a Env,
        tracks: &'a [Track],
        teachers: Vec<TeacherSpec>,
        params: OilParams,
        reward: RewardConfig,
        seed: u64,
    ) -> Result<Self> {
        let learner = Learner::new(env, params.learning_rate, seed)?;
        Self::with_learner(env, tracks, teachers, params, reward, seed, learner)
    }

    pub fn with_learner(
        env: &'a Env,
        tracks: &'a [Track],
        teachers: Vec<TeacherSpec>,
        params: OilParams,
        reward: RewardConfig,
        seed: u64,
        learner: Learner,
    ) -> Result<Self> {
        params.validate()?;
        reward.validate()?;
        if tracks.is_empty() {
            return Err(Error::InvalidParameter("no training tracks".into()));
        }
        if teachers.is_empty() {
            return Err(Error::InvalidParameter("no teachers".into()));
        }
        if learner.net.input_dim() != env.feature_dim() || learner.net.output_dim() != env.action_dim() {
            return Err(Error::DimensionMismatch { expected: env.feature_dim(), got: learner.net.input_dim() });
        }
        let dataset = Dataset::with_capacity_limit(env.feature_dim(), env.action_dim(), params.dataset_capacity);
        let s1 = env.start_state(&tracks[0], 0.0);
        Ok(OilTrainer {
            env,
            tracks,
            teachers,
            params,
            reward,
            seed,
            learner,
            dataset,
            track_index: 0,
            s1,
            lap_progress: 0.0,
            frontier: 0.0,
            stalled_steps: 0,
            log: Vec::new(),
        })
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn log(&self) -> &[RoundLog] {
        &self.log
    }

    pub fn current_start(&self) -> (usize, VehicleState) {
        (self.track_index, self.s1)
    }

    /// Teacher values from s1, and whether every teacher is terminal on its
    /// first step.
    fn teacher_values(&self, track: &Track, noise_seed: u64) -> (Vec<f64>, bool) {
        let (n, mc) = (self.params.horizon, self.params.mc_rollouts);
        let mut all_crash_at_once = true;
        let values = self
            .teachers
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut t = Teacher::new(spec.clone(), self.env.kind());
                let est = estimate_value(
                    self.env,
                    track,
                    &mut t,
                    PolicyId::Teacher(i),
                    &self.s1,
                    n,
                    &self.reward,
                    mc,
                    noise_seed,
                );
                if !(est.trajectory.terminal && est.trajectory.len() == 1) {
                    all_crash_at_once = false;
                }
                est.value
            })
            .collect();
        (values, all_crash_at_once)
    }

    /// Observe, rehearse if behind, act.
    pub fn run_round(&mut self) -> Result<&RoundLog> {
        let env = self.env;
        let track = &self.tracks[self.track_index];
        let round = self.log.len() + 1;
        let noise_seed = mix_seed(self.seed, round as u64);
        let (n, mc) = (self.params.horizon, self.params.mc_rollouts);

        let (mut teacher_values, mut doomed) = self.teacher_values(track, noise_seed);
        let restarted = doomed && self.s1.speed() > 0.0;
        if restarted {
            // no teacher survives a single step from where act left the learner: count it as a crash
            let s = track.project(self.s1.position).s;
            let back = track.checkpoint_behind(s);
            self.lap_progress += track.wrapped_delta(s, back);
            self.s1 = env.start_state(track, back);
            (teacher_values, doomed) = self.teacher_values(track, noise_seed);
        }
        if doomed {
            return Err(Error::DegenerateEnsemble);
        }
        let learner_value = estimate_value(
            env,
            track,
            &mut self.learner.policy(env),
            PolicyId::Learner,
            &self.s1,
            n,
            &self.reward,
            mc,
            noise_seed,
        )
        .value;

        let critic = select_critical_teacher(&teacher_values);
        let a = advantage(learner_value, teacher_values[critic]);
        let epsilon = epsilon_threshold(self.params.epsilon_mode, teacher_values[critic]);
        let before = self.dataset.total_added();

        let mut entry = RoundLog {
            round,
            track: self.track_index,
            s1_arc: track.project(self.s1.position).s,
            s1_speed: self.s1.speed(),
            learner_value,
            teacher_values: teacher_values.clone(),
            critic,
            advantage: a,
            epsilon,
            rehearsed: false,
            episodes_used: 0,
            final_advantage: a,
            dataset_size: self.dataset.len(),
            labels_added: 0,
            label_sources: vec![0; self.teachers.len()],
            restarted,
            mean_loss: 0.0,
            skipped_ahead: false,
        };

        if a < 0.0 {
            let setup = RehearseSetup {
                env,
                track,
                critic_index: critic,
                start: self.s1,
                params: &self.params,
                reward: &self.reward,
                critic_value: teacher_values[critic],
                epsilon,
                noise_seed,
            };
            let mut labeler = Teacher::new(self.teachers[critic].clone(), env.kind());
            let out = rehearse(&setup, &mut labeler, &mut self.learner, &mut self.dataset)?;
            entry.rehearsed = true;
            entry.episodes_used = out.episodes_used;
            entry.final_advantage = out.final_advantage;
            entry.labels_added = out.labels_added;
            entry.mean_loss = out.mean_loss;
            let added = (self.dataset.total_added() - before) as usize;
            let stored = self.dataset.len();
            for i in stored.saturating_sub(added)..stored {
                entry.label_sources[self.dataset.get(i).2] += 1;
            }
        }
        entry.dataset_size = self.dataset.len();

        let moved = act(
            env,
            track,
            &mut self.learner.policy(env),
            &self.s1,
            self.params.act_steps,
            mix_seed(noise_seed, 0xAC7),
        )?;
        self.lap_progress += moved.progress;
        self.s1 = moved.state;
        self.stalled_steps += moved.steps;
        let reached = track.checkpoints().iter().copied().filter(|&c| c <= self.lap_progress).fold(0.0, f64::max);
        if reached > self.frontier {
            self.frontier = reached;
            self.stalled_steps = 0;
        } else if self.stalled_steps >= self.params.stall_steps {
            let next = track.checkpoints().iter().copied().find(|&c| c > self.frontier).unwrap_or(track.total_length());
            self.lap_progress = next;
            self.frontier = next;
            self.stalled_steps = 0;
            self.s1 = env.start_state(track, next);
            entry.skipped_ahead = true;
        }
        if self.lap_progress >= track.total_length() {
            self.track_index = (self.track_index + 1) % self.tracks.len();
            self.lap_progress = 0.0;
            self.frontier = 0.0;
            self.stalled_steps = 0;
            self.s1 = env.start_state(&self.tracks[self.track_index], 0.0);
        }

        self.log.push(entry);
        Ok(self.log.last().unwrap())
    }

    pub fn run(mut self, mut on_round: impl FnMut(&RoundLog)) -> Result<OilOutcome> {
        for _ in 0..self.params.rounds {
            let entry = self.run_round()?;
            on_round(entry);
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> OilOutcome {
        OilOutcome { learner: self.learner, dataset: self.dataset, log: self.log }
    }
}

/// Runs the full training loop from a freshly initialized learner.
pub fn train_oil(
    env: &Env,
    tracks: &[Track],
    teachers: &[TeacherSpec],
    params: &OilParams,
    reward: &RewardConfig,
    seed: u64,
) -> Result<OilOutcome> {
    OilTrainer::new(env, tracks, teachers.to_vec(), params.clone(), *reward, seed)?.run(|_| {})
}
