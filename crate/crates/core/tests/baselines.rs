mod common;

use std::sync::{Arc, Mutex};

use common::{rail_env, stadium};
use oil_core::baselines::{
    train_bc, train_bc_from, train_dagger, train_dagger_from, train_ddpg, DdpgAgent, DdpgConfig, ImitationParams,
};
use oil_core::oil::{rehearse, Learner, OilParams, RehearseSetup, RewardConfig, RewardMode};
use oil_core::policy::{Dataset, Mlp, MlpPolicy};
use oil_core::sim::{
    generate_suite, ControlVector, Env, Plant, Track, TrackParams, VehicleKind, VehicleModel, VehicleState,
};
use oil_core::teachers::{make_default_ensemble, ConstantPolicy, Policy};

fn constants(actions: &[(f64, f64)]) -> Vec<Box<dyn Policy>> {
    actions
        .iter()
        .map(|&(gas, steer)| Box::new(ConstantPolicy(ControlVector::Car { gas, steer })) as Box<dyn Policy>)
        .collect()
}

fn probe(env: &Env, track: &Track, net: &Mlp) -> Vec<Vec<f64>> {
    [0.0, 150.0, 420.0, 800.0]
        .iter()
        .map(|&s| {
            let obs = env.observe(track, &env.start_state(track, s), 0);
            MlpPolicy::new(net, env.kind()).act(&obs).to_vec()
        })
        .collect()
}

fn fast_params(steps: usize) -> ImitationParams {
    ImitationParams { learning_rate: 1e-3, ..ImitationParams::new(steps, 200) }
}

#[test]
fn bc_regresses_to_constant_teacher() {
    let env = rail_env(6.0, VehicleKind::Car);
    let tracks = [stadium()];
    let out = train_bc_from(&env, &tracks, &mut constants(&[(0.7, -0.4)]), &fast_params(3000), 1).unwrap();
    for a in probe(&env, &tracks[0], &out.learner.net) {
        assert!((a[0] - 0.7).abs() < 0.05 && (a[1] + 0.4).abs() < 0.05, "{a:?}");
    }
}

#[test]
fn bc_pools_conflicting_teachers() {
    // steering does not affect the rail plant, so both teachers visit the same states
    let env = rail_env(6.0, VehicleKind::Car);
    let tracks = [stadium()];
    let out = train_bc_from(&env, &tracks, &mut constants(&[(0.5, 0.4), (0.5, -0.4)]), &fast_params(4000), 2).unwrap();
    assert_eq!(out.log[0].label_sources, vec![2000, 2000]);
    for a in probe(&env, &tracks[0], &out.learner.net) {
        assert!((a[0] - 0.5).abs() < 0.05 && a[1].abs() < 0.05, "{a:?}");
    }
}

#[test]
fn bc_is_deterministic() {
    let env = Env::for_kind(VehicleKind::Car);
    let (train, _) = generate_suite(3, 2, 0, &TrackParams::default()).unwrap();
    let teachers = make_default_ensemble(VehicleKind::Car);
    let params = ImitationParams::new(600, 150);
    let a = train_bc(&env, &train, &teachers, &params, 4).unwrap();
    let b = train_bc(&env, &train, &teachers, &params, 4).unwrap();
    assert_eq!(a.learner.net, b.learner.net);
    assert_eq!(a.log, b.log);
    let c = train_bc(&env, &train, &teachers, &params, 5).unwrap();
    assert_ne!(a.learner.net, c.learner.net);
}

#[test]
fn dagger_aggregates_and_starts_as_bc() {
    let env = Env::for_kind(VehicleKind::Car);
    let (train, _) = generate_suite(3, 2, 0, &TrackParams::default()).unwrap();
    let teachers = make_default_ensemble(VehicleKind::Car);
    let params = ImitationParams::new(500, 150);
    let mut sizes = Vec::new();
    let mut experts: Vec<Box<dyn Policy>> = teachers
        .iter()
        .map(|s| Box::new(oil_core::teachers::Teacher::new(s.clone(), VehicleKind::Car)) as Box<dyn Policy>)
        .collect();
    let out = train_dagger_from(&env, &train, &mut experts, 3, &params, 6, |l| sizes.push(l.dataset_size)).unwrap();
    assert_eq!(sizes, vec![500, 1000, 1500]);
    assert_eq!(out.dataset.len(), 1500);
    // later iterations label round-robin per episode
    assert!(out.log[1].label_sources.iter().filter(|&&c| c > 0).count() > 1);

    let one = train_dagger(&env, &train, &teachers, 1, &params, 6).unwrap();
    let bc = train_bc(&env, &train, &teachers, &params, 6).unwrap();
    assert_eq!(one.learner.net, bc.learner.net);
    assert_eq!(one.dataset, bc.dataset);
    assert!(train_dagger(&env, &train, &teachers, 0, &params, 6).is_err());
}

#[test]
fn baselines_and_oil_share_features() {
    let env = Env::for_kind(VehicleKind::Car);
    let track = stadium();
    let tracks = [track.clone()];
    let start = env.start_state(&track, 0.0);
    let want = env.observe(&track, &start, 0).features;

    let bc = train_bc_from(&env, &tracks, &mut constants(&[(0.3, 0.0)]), &ImitationParams::new(10, 10), 0).unwrap();
    assert_eq!(bc.dataset.get(0).0, want.as_slice());

    let params = OilParams { horizon: 5, max_episodes: 1, ..OilParams::car() };
    let reward = RewardConfig::new(RewardMode::Driving);
    let mut learner = Learner::new(&env, 1e-4, 0).unwrap();
    let mut data = Dataset::new(env.feature_dim(), env.action_dim());
    let setup = RehearseSetup {
        env: &env,
        track: &track,
        critic_index: 0,
        start,
        params: &params,
        reward: &reward,
        critic_value: 1e9,
        epsilon: 0.0,
        noise_seed: 0,
    };
    rehearse(&setup, &mut ConstantPolicy(ControlVector::zero(VehicleKind::Car)), &mut learner, &mut data).unwrap();
    assert_eq!(data.get(0).0, want.as_slice());

    let agent = DdpgAgent::new(&env, &DdpgConfig::default(), 0).unwrap();
    assert_eq!(agent.actor.input_dim(), want.len());
}

/// Car dynamics that record every applied action.
struct Recorder {
    inner: VehicleModel,
    seen: Mutex<Vec<ControlVector>>,
}

impl Plant for Recorder {
    fn kind(&self) -> VehicleKind {
        VehicleKind::Car
    }

    fn step(&self, track: &Track, state: &VehicleState, action: &ControlVector, dt: f64) -> VehicleState {
        self.seen.lock().unwrap().push(*action);
        self.inner.step(track, state, action, dt)
    }
}

#[test]
fn ddpg_car_holds_throttle() {
    let rec = Arc::new(Recorder { inner: VehicleModel::default_for(VehicleKind::Car), seen: Mutex::new(Vec::new()) });
    let env = Env::with_plant(rec.clone());
    let tracks = [stadium()];
    let cfg = DdpgConfig { warmup_steps: 100, episode_len: 200, ..DdpgConfig::default() };
    let (agent, log) = train_ddpg(&env, &tracks, &cfg, 600, 1, |_| {}).unwrap();
    assert_eq!(log.last().unwrap().steps, 600);
    let seen = rec.seen.lock().unwrap();
    assert_eq!(seen.len(), 600);
    assert!(seen.iter().all(|a| matches!(a, ControlVector::Car { gas, .. } if *gas == 0.5)));
    assert!(seen.iter().any(|a| matches!(a, ControlVector::Car { steer, .. } if *steer != 0.0)));
    assert_eq!(agent.action_dim(), 1);

    let obs = env.observe(&tracks[0], &env.start_state(&tracks[0], 70.0), 0);
    assert!(matches!(agent.policy(&env).act(&obs), ControlVector::Car { gas, .. } if gas == 0.5));
    assert!(agent.actor.is_finite() && agent.critic.is_finite());
}
