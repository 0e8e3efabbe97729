use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::episode_start;
use crate::error::{Error, Result};
use crate::oil::mix_seed;
use crate::policy::{control_dims, Adam, Mlp, MlpPolicy, OutputHead, DEFAULT_BATCH_SIZE};
use crate::sim::{Env, Track};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpgConfig {
    pub e_norm: f64,
    pub v_norm: f64,
    pub beta: f64,
    pub r_penalty: f64,
    /// Car throttle held constant; steering is the only learned channel.
    pub fixed_throttle: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub noise_sigma: f64,
    /// Per-step multiplicative decay of the noise scale.
    pub noise_decay: f64,
    pub noise_min: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions gathered before the first update.
    pub warmup_steps: usize,
    pub episode_len: usize,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            e_norm: 15.0,
            v_norm: 800.0,
            beta: 0.0,
            r_penalty: -0.2,
            fixed_throttle: 0.5,
            actor_lr: Adam::DEFAULT_LR,
            critic_lr: 1e-3,
            tau: 0.005,
            gamma: 0.99,
            noise_sigma: 0.1,
            noise_decay: 0.99995,
            noise_min: 0.01,
            batch_size: DEFAULT_BATCH_SIZE,
            buffer_capacity: 100_000,
            warmup_steps: 1_000,
            episode_len: 300,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_norm > 0.0 && self.v_norm > 0.0) {
            return Err(Error::InvalidParameter("e_norm and v_norm must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter("tau and gamma must be in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.episode_len == 0 {
            return Err(Error::InvalidParameter("batch size, buffer capacity and episode length must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn head(&self) -> OutputHead {
        OutputHead::Tanh { fixed_throttle: Some(self.fixed_throttle) }
    }
}

/// Dense shaping reward: error reduction, closeness to the centerline and
/// (with `beta = 1`) forward speed; a flat penalty on leaving the lane.
pub fn ddpg_dense_reward(e_n: f64, e_next: f64, v_f: f64, terminal: bool, cfg: &DdpgConfig) -> f64 {
    if terminal {
        return cfg.r_penalty;
    }
    (e_n - e_next) / cfg.e_norm + 1.0 / (e_next + 1.0) + cfg.beta * v_f / cfg.v_norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions; the oldest is overwritten first.
#[derive(Clone, Debug, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity: capacity.max(1), items: Vec::new(), head: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Uniform with replacement.
    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}

/// `target ← τ·online + (1 − τ)·target`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

/// Mean squared TD error of `critic` over `(state ⊕ action, target)` pairs
/// and its parameter gradient.
pub fn critic_loss_and_grad(critic: &Mlp, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; critic.param_count()];
    let mut loss = 0.0;
    for (x, y) in batch {
        let cache = critic.forward_cached(x, vec![])?;
        let d = cache.output()[0] - y;
        loss += d * d * scale;
        critic.backward(&cache, &[2.0 * d * scale], &mut grads);
    }
    Ok((loss, grads))
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

#[derive(Clone, Debug)]
pub struct DdpgAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_adam: Adam,
    pub critic_adam: Adam,
    pub head: OutputHead,
}

impl DdpgAgent {
    pub fn new(env: &Env, cfg: &DdpgConfig, seed: u64) -> Result<Self> {
        let head = cfg.head();
        let act = head.output_dim(env.kind());
        let mut actor = Mlp::init(&control_dims(env.feature_dim(), act), mix_seed(seed, 0xAC))?;
        let last = actor.layer_count() - 1;
        let (w, _) = actor.layer_range(last);
        actor.params_mut()[w].iter_mut().for_each(|p| *p *= 0.01);
        let critic = Mlp::init(&control_dims(env.feature_dim() + act, 1), mix_seed(seed, 0xC1))?;
        Ok(DdpgAgent {
            actor_adam: Adam::new(actor.param_count(), cfg.actor_lr),
            critic_adam: Adam::new(critic.param_count(), cfg.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            head,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Squashed deterministic action of the online actor.
    pub fn learned_action(&self, net: &Mlp, features: &[f64]) -> Result<Vec<f64>> {
        Ok(net.forward(features)?.iter().map(|v| v.tanh()).collect())
    }

    pub fn policy(&self, env: &Env) -> MlpPolicy<'_> {
        MlpPolicy::with_head(&self.actor, env.kind(), self.head)
    }

    /// One critic step and one actor step on a uniform minibatch. Returns the
    /// critic loss and the mean Q of the actor's actions.
    pub fn update<R: Rng>(&mut self, buffer: &ReplayBuffer, cfg: &DdpgConfig, rng: &mut R) -> Result<(f64, f64)> {
        if buffer.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let idx = buffer.sample_indices(cfg.batch_size, rng);
        let mut batch = Vec::with_capacity(idx.len());
        for &i in &idx {
            let t = buffer.get(i);
            let mut y = t.reward;
            if !t.terminal {
                let a2 = self.learned_action(&self.actor_target, &t.next_state)?;
                y += cfg.gamma * self.critic_target.forward(&concat(&t.next_state, &a2))?[0];
            }
            batch.push((concat(&t.state, &t.action), y));
        }
        let (critic_loss, grads) = critic_loss_and_grad(&self.critic, &batch)?;
        if !critic_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { update: self.critic_adam.step + 1 });
        }
        self.critic_adam.apply(self.critic.params_mut(), &grads);

        let scale = 1.0 / idx.len() as f64;
        let n_state = self.actor.input_dim();
        let mut actor_grads = vec![0.0; self.actor.param_count()];
        let mut scratch = vec![0.0; self.critic.param_count()];
        let mut q_sum = 0.0;
        for &i in &idx {
            let s = &buffer.get(i).state;
            let a_cache = self.actor.forward_cached(s, vec![])?;
            let a: Vec<f64> = a_cache.output().iter().map(|v| v.tanh()).collect();
            let q_cache = self.critic.forward_cached(&concat(s, &a), vec![])?;
            q_sum += q_cache.output()[0];
            let d_in = self.critic.backward(&q_cache, &[-scale], &mut scratch);
            let d_pre: Vec<f64> = d_in[n_state..].iter().zip(&a).map(|(d, a)| d * (1.0 - a * a)).collect();
            self.actor.backward(&a_cache, &d_pre, &mut actor_grads);
        }
        if actor_grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { update: self.actor_adam.step + 1 });
        }
        self.actor_adam.apply(self.actor.params_mut(), &actor_grads);
        soft_update(&mut self.actor_target, &self.actor, cfg.tau);
        soft_update(&mut self.critic_target, &self.critic, cfg.tau);
        Ok((critic_loss, q_sum * scale))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpgLog {
    pub episode: usize,
    pub steps: usize,
    pub episode_return: f64,
    pub terminal: bool,
    pub critic_loss: f64,
    pub mean_q: f64,
    pub noise_sigma: f64,
}

/// Trains for `steps` simulator steps. Episodes rotate over tracks and
/// checkpoint starts and end early on leaving the lane.
pub fn train_ddpg(
    env: &Env,
    tracks: &[Track],
    cfg: &DdpgConfig,
    steps: usize,
    seed: u64,
    mut on_episode: impl FnMut(&DdpgLog),
) -> Result<(DdpgAgent, Vec<DdpgLog>)> {
    cfg.validate()?;
    if tracks.is_empty() {
        return Err(Error::InvalidParameter("no training tracks".into()));
    }
    let mut agent = DdpgAgent::new(env, cfg, seed)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xDD));
    let mut sigma = cfg.noise_sigma;
    let mut log = Vec::new();
    let mut done = 0usize;
    let mut episode = 0usize;
    while done < steps {
        let (ti, mut state) = episode_start(env, tracks, episode);
        let track = &tracks[ti];
        let mut e_n = track.project(state.position).e.abs();
        let (mut ret, mut terminal) = (0.0, false);
        let (mut loss_sum, mut q_sum, mut updates) = (0.0, 0.0, 0usize);
        let len = cfg.episode_len.min(steps - done);
        for k in 0..len {
            let obs = env.observe(track, &state, mix_seed(seed ^ episode as u64, k as u64));
            let mut a = agent.learned_action(&agent.actor, &obs.features)?;
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("positive sigma");
                a.iter_mut().for_each(|v| *v = (*v + noise.sample(&mut rng)).clamp(-1.0, 1.0));
            }
            let control = match agent.head {
                OutputHead::Tanh { fixed_throttle: Some(g) } if agent.action_dim() == 1 => {
                    crate::sim::ControlVector::Car { gas: g, steer: a[0] }
                }
                _ => crate::sim::ControlVector::from_slice(env.kind(), &a),
            };
            let out = env.step(track, &state, &control);
            let e_next = out.lateral_error.abs();
            let r = ddpg_dense_reward(e_n, e_next, out.forward_speed, out.terminal, cfg);
            let next_obs = env.observe(track, &out.next_state, mix_seed(seed ^ episode as u64, k as u64 + 1));
            buffer.push(Transition {
                state: obs.features,
                action: a,
                reward: r,
                next_state: next_obs.features,
                terminal: out.terminal,
            });
            ret += r;
            done += 1;
            sigma = (sigma * cfg.noise_decay).max(cfg.noise_min.min(cfg.noise_sigma));
            if buffer.len() >= cfg.warmup_steps.max(cfg.batch_size) {
                let (l, q) = agent.update(&buffer, cfg, &mut rng)?;
                loss_sum += l;
                q_sum += q;
                updates += 1;
            }
            if out.terminal {
                terminal = true;
                break;
            }
            state = out.next_state;
            e_n = e_next;
        }
        let entry = DdpgLog {
            episode,
            steps: done,
            episode_return: ret,
            terminal,
            critic_loss: loss_sum / updates.max(1) as f64,
            mean_q: q_sum / updates.max(1) as f64,
            noise_sigma: sigma,
        };
        on_episode(&entry);
        log.push(entry);
        episode += 1;
    }
    Ok((agent, log))
}
