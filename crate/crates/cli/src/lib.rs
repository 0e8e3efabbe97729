//! Command implementations behind the `oil` binary: track generation,
//! training, evaluation, comparison and the ablation grid.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use oil_core::baselines::{train_bc, train_dagger_with, train_ddpg, DdpgConfig, ImitationParams};
use oil_core::eval::{compare, evaluate_track, export_trajectory, ComparisonTable, EvalConfig, EvalResult};
use oil_core::oil::{EpsilonMode, OilParams, OilTrainer, RewardConfig};
use oil_core::policy::{Checkpoint, OutputHead};
use oil_core::sim::{generate_suite, Env, Track, TrackParams, VehicleKind};
use oil_core::teachers::{make_default_ensemble, parse_teacher_subset, Policy, Teacher, TeacherSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Trainer {
    Oil,
    Bc,
    Dagger,
    Ddpg,
}

impl Trainer {
    pub fn name(self) -> &'static str {
        match self {
            Trainer::Oil => "oil",
            Trainer::Bc => "bc",
            Trainer::Dagger => "dagger",
            Trainer::Ddpg => "ddpg",
        }
    }
}

/// Every setting of a run. Loaded from a flat TOML file; unset keys take the
/// defaults below and command-line flags override both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vehicle: VehicleKind,
    pub trainer: Trainer,
    /// 1-based teacher list, e.g. `"1-5"` or `"1,3,4"`.
    pub teachers: String,
    pub seed: u64,
    /// Directory holding `train/` and `test/` track files.
    pub tracks: PathBuf,
    pub out: PathBuf,
    /// Simulator-step budget of the baseline trainers.
    pub steps: usize,
    pub rounds: usize,
    /// Rollout length `N`; 0 picks the vehicle default.
    pub horizon: usize,
    pub max_episodes: usize,
    pub act_steps: usize,
    /// `auto`, `single` or `multi`. Auto means single for one teacher.
    pub epsilon: String,
    pub mc_rollouts: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub dagger_iterations: usize,
    pub waypoint_noise: f64,
    pub ddpg_beta: f64,
    pub ddpg_critic_lr: f64,
    pub ddpg_tau: f64,
    pub ddpg_noise: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub track_control_points: usize,
    pub track_radius_min: f64,
    pub track_radius_max: f64,
    pub track_half_width: f64,
    pub checkpoint_spacing: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tp = TrackParams::default();
        let oil = OilParams::car();
        let ddpg = DdpgConfig::default();
        RunConfig {
            vehicle: VehicleKind::Car,
            trainer: Trainer::Oil,
            teachers: "1-5".into(),
            seed: 1,
            tracks: PathBuf::from("tracks"),
            out: PathBuf::from("runs/default"),
            steps: 60_000,
            rounds: oil.rounds,
            horizon: 0,
            max_episodes: oil.max_episodes,
            act_steps: oil.act_steps,
            epsilon: "auto".into(),
            mc_rollouts: oil.mc_rollouts,
            batch_size: oil.batch_size,
            dropout: oil.dropout,
            learning_rate: oil.learning_rate,
            dagger_iterations: 5,
            waypoint_noise: 0.0,
            ddpg_beta: ddpg.beta,
            ddpg_critic_lr: ddpg.critic_lr,
            ddpg_tau: ddpg.tau,
            ddpg_noise: ddpg.noise_sigma,
            train_count: 6,
            test_count: 4,
            track_control_points: tp.control_points,
            track_radius_min: tp.radius_range.0,
            track_radius_max: tp.radius_range.1,
            track_half_width: tp.width,
            checkpoint_spacing: tp.checkpoint_spacing,
        }
    }
}

/// Flags shared by every command.
#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Track directory (with train/ and test/ subdirectories).
    #[arg(long, global = true)]
    pub tracks: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vehicle: Option<VehicleKind>,
    #[arg(long, global = true, value_enum)]
    pub trainer: Option<Trainer>,
    /// Teacher subset, e.g. 1,3,4 or 1-5.
    #[arg(long, global = true)]
    pub teachers: Option<String>,
    /// Simulator-step budget for the baseline trainers.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Observation rounds M.
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    /// Rollout length N.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// auto, single or multi.
    #[arg(long, global = true)]
    pub epsilon: Option<String>,
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(args: &CommonArgs) -> Result<RunConfig> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text =
                    fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &args.$f { cfg.$f = v.clone(); } )* };
        }
        set!(seed, out, tracks, vehicle, trainer, teachers, steps, rounds, horizon, epsilon);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        parse_teacher_subset(&self.teachers, 5).map_err(anyhow::Error::msg)?;
        self.epsilon_mode()?;
        if self.rounds == 0 || self.max_episodes == 0 || self.act_steps == 0 || self.batch_size == 0 {
            bail!("rounds, max_episodes, act_steps and batch_size must be >= 1");
        }
        Ok(())
    }

    pub fn teacher_indices(&self) -> Result<Vec<usize>> {
        parse_teacher_subset(&self.teachers, 5).map_err(anyhow::Error::msg)
    }

    pub fn teacher_specs(&self) -> Result<Vec<TeacherSpec>> {
        let all = make_default_ensemble(self.vehicle);
        Ok(self.teacher_indices()?.into_iter().map(|i| all[i].clone()).collect())
    }

    pub fn epsilon_mode(&self) -> Result<EpsilonMode> {
        match self.epsilon.as_str() {
            "auto" => {
                let n = parse_teacher_subset(&self.teachers, 5).map_err(anyhow::Error::msg)?.len();
                Ok(if n == 1 { EpsilonMode::Single } else { EpsilonMode::Multi })
            }
            other => other.parse().map_err(anyhow::Error::msg),
        }
    }

    pub fn env(&self) -> Env {
        let mut env = Env::for_kind(self.vehicle);
        env.waypoint_noise = self.waypoint_noise;
        env
    }

    pub fn oil_params(&self) -> Result<OilParams> {
        let base = match self.vehicle {
            VehicleKind::Car => OilParams::car(),
            VehicleKind::Uav => OilParams::uav(),
        };
        Ok(OilParams {
            rounds: self.rounds,
            horizon: if self.horizon == 0 { base.horizon } else { self.horizon },
            max_episodes: self.max_episodes,
            act_steps: self.act_steps,
            epsilon_mode: self.epsilon_mode()?,
            mc_rollouts: self.mc_rollouts,
            batch_size: self.batch_size,
            dropout: self.dropout,
            learning_rate: self.learning_rate,
            dataset_capacity: None,
            stall_steps: base.stall_steps,
        })
    }

    pub fn imitation_params(&self, iterations: usize) -> Result<ImitationParams> {
        let horizon = self.oil_params()?.horizon;
        let mut p = ImitationParams::new((self.steps / iterations.max(1)).max(1), horizon);
        p.batch_size = self.batch_size;
        p.dropout = self.dropout;
        p.learning_rate = self.learning_rate;
        Ok(p)
    }

    pub fn ddpg_config(&self) -> DdpgConfig {
        DdpgConfig {
            beta: self.ddpg_beta,
            critic_lr: self.ddpg_critic_lr,
            tau: self.ddpg_tau,
            noise_sigma: self.ddpg_noise,
            batch_size: self.batch_size,
            ..DdpgConfig::default()
        }
    }

    pub fn track_params(&self) -> TrackParams {
        TrackParams {
            control_points: self.track_control_points,
            radius_range: (self.track_radius_min, self.track_radius_max),
            width: self.track_half_width,
            checkpoint_spacing: self.checkpoint_spacing,
            ..TrackParams::default()
        }
    }

    /// SHA-256 of the settings that influence results (the output directory
    /// is left out so reruns elsewhere hash the same).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { config_hash: self.hash(), seed: self.seed, tool_version: TOOL_VERSION.to_string() }
    }
}

/// Stamp carried by every artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn to_map(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("config_hash".to_string(), self.config_hash.clone()),
            ("seed".to_string(), self.seed.to_string()),
            ("tool_version".to_string(), self.tool_version.clone()),
        ])
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// Track files of one split, in file-name order.
pub fn load_track_dir(dir: &Path) -> Result<Vec<Track>> {
    if !dir.is_dir() {
        bail!("track directory {} does not exist (run gen-tracks first)", dir.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Track::load(p).map_err(anyhow::Error::from)).collect()
}

pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<Track>> {
    let tracks = load_track_dir(&cfg.tracks.join(split))?;
    if tracks.is_empty() {
        bail!("no {split} tracks in {}", cfg.tracks.join(split).display());
    }
    Ok(tracks)
}

/// Writes `<out>/train/track_XX.json` and `<out>/test/track_XX.json`.
pub fn cmd_gen_tracks(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (train, test) = generate_suite(cfg.seed, cfg.train_count, cfg.test_count, &cfg.track_params())?;
    let meta = cfg.provenance().to_map();
    let mut written = Vec::new();
    for (split, tracks) in [("train", &train), ("test", &test)] {
        let dir = out.join(split);
        ensure_dir(&dir)?;
        for (i, t) in tracks.iter().enumerate() {
            let mut file = t.to_file();
            file.meta = meta.clone();
            let path = dir.join(format!("track_{i:02}.json"));
            write_json(&path, &file)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// JSON-lines writer whose first line is the provenance header.
struct LogWriter {
    out: BufWriter<fs::File>,
    path: PathBuf,
}

impl LogWriter {
    fn create(path: &Path, header: &impl Serialize) -> Result<Self> {
        let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = LogWriter { out: BufWriter::new(f), path: path.to_path_buf() };
        w.line(header)?;
        Ok(w)
    }

    fn line(&mut self, v: &impl Serialize) -> Result<()> {
        serde_json::to_writer(&mut self.out, v)?;
        writeln!(self.out).with_context(|| format!("cannot write {}", self.path.display()))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().with_context(|| format!("cannot write {}", self.path.display()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogHeader {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub trainer: Trainer,
    pub vehicle: VehicleKind,
    pub teachers: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub config: RunConfig,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

/// Trains with the configured trainer. Writes `checkpoint.json`,
/// `train_log.jsonl` and `run.json` to the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cmd_train_with(cfg, |_| {})
}

/// Like [`cmd_train`], with a callback receiving each log line.
pub fn cmd_train_with(cfg: &RunConfig, mut progress: impl FnMut(&serde_json::Value)) -> Result<PathBuf> {
    let train = load_split(cfg, "train")?;
    let env = cfg.env();
    let teachers = cfg.teacher_specs()?;
    ensure_dir(&cfg.out)?;
    let prov = cfg.provenance();
    let log_path = cfg.out.join("train_log.jsonl");
    let header = LogHeader {
        provenance: prov.clone(),
        trainer: cfg.trainer,
        vehicle: cfg.vehicle,
        teachers: teachers.iter().map(|t| t.label.clone()).collect(),
    };
    let mut log = LogWriter::create(&log_path, &header)?;
    let mut emit = |log: &mut LogWriter, v: &dyn erased::Ser| -> Result<()> {
        let value = v.to_value()?;
        progress(&value);
        log.line(&value)
    };

    let (net, adam, head) = match cfg.trainer {
        Trainer::Oil => {
            let reward = RewardConfig::new(cfg.vehicle.into());
            let trainer = OilTrainer::new(&env, &train, teachers.clone(), cfg.oil_params()?, reward, cfg.seed)?;
            let mut err = None;
            let out = trainer.run(|r| {
                if err.is_none() {
                    err = emit(&mut log, r).err();
                }
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            (out.learner.net, out.learner.adam, OutputHead::Identity)
        }
        Trainer::Bc => {
            let out = train_bc(&env, &train, &teachers, &cfg.imitation_params(1)?, cfg.seed)?;
            for l in &out.log {
                emit(&mut log, l)?;
            }
            (out.learner.net, out.learner.adam, OutputHead::Identity)
        }
        Trainer::Dagger => {
            let iters = cfg.dagger_iterations.max(1);
            let mut lines = Vec::new();
            let out = train_dagger_with(&env, &train, &teachers, iters, &cfg.imitation_params(iters)?, cfg.seed, |l| {
                lines.push(l.clone())
            })?;
            for l in &lines {
                emit(&mut log, l)?;
            }
            (out.learner.net, out.learner.adam, OutputHead::Identity)
        }
        Trainer::Ddpg => {
            let dcfg = cfg.ddpg_config();
            let mut lines = Vec::new();
            let (agent, _) = train_ddpg(&env, &train, &dcfg, cfg.steps, cfg.seed, |l| lines.push(l.clone()))?;
            for l in &lines {
                emit(&mut log, l)?;
            }
            (agent.actor, agent.actor_adam, agent.head)
        }
    };
    log.finish()?;

    let mut ck = Checkpoint::new(cfg.vehicle, net, adam);
    ck.head = head;
    ck.meta = prov.to_map();
    ck.meta.insert("trainer".into(), cfg.trainer.name().into());
    ck.meta.insert("teachers".into(), cfg.teachers.clone());
    let ck_path = cfg.out.join("checkpoint.json");
    ck.save(&ck_path)?;
    write_json(
        &cfg.out.join("run.json"),
        &RunRecord { provenance: prov, config: cfg.clone(), checkpoint: ck_path.clone(), log: log_path },
    )?;
    Ok(ck_path)
}

mod erased {
    pub trait Ser {
        fn to_value(&self) -> serde_json::Result<serde_json::Value>;
    }

    impl<T: serde::Serialize> Ser for T {
        fn to_value(&self) -> serde_json::Result<serde_json::Value> {
            serde_json::to_value(self)
        }
    }
}

/// What to evaluate.
#[derive(Clone, Debug)]
pub enum EvalTarget {
    Checkpoint(PathBuf),
    /// 1-based teacher number of the default ensemble.
    Teacher(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalDocument {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub source: String,
    pub result: EvalResult,
}

/// Flattened per-track row of the CSV summary; `track = "mean"` holds the
/// aggregate.
#[derive(Serialize)]
struct EvalCsvRow<'a> {
    name: &'a str,
    track: String,
    mean_abs_error: f64,
    completion_time: f64,
    gates_passed_pct: f64,
    resets: f64,
    crashes: f64,
    reward: f64,
    config_hash: &'a str,
    seed: u64,
    tool_version: &'a str,
}

pub fn evaluate_on_tracks(
    name: &str,
    env: &Env,
    tracks: &[Track],
    policy: &mut dyn Policy,
    ecfg: &EvalConfig,
    trajectories: Option<&Path>,
) -> Result<EvalResult> {
    let mut per = Vec::new();
    for (i, t) in tracks.iter().enumerate() {
        let mut rows = Vec::new();
        per.push(evaluate_track(env, t, i, policy, ecfg, trajectories.map(|_| &mut rows))?);
        if let Some(dir) = trajectories {
            ensure_dir(dir)?;
            export_trajectory(&rows, &dir.join(format!("{name}_track_{i:02}.csv")))?;
        }
    }
    Ok(EvalResult::from_tracks(name, ecfg.kind, ecfg.laps, per))
}

/// Evaluates on the test split. Writes `eval.json` and `eval.csv`.
pub fn cmd_eval(cfg: &RunConfig, target: &EvalTarget, name: Option<&str>, trajectories: Option<&Path>) -> Result<EvalResult> {
    let test = load_split(cfg, "test")?;
    let env = cfg.env();
    let ecfg = EvalConfig::for_kind(cfg.vehicle);
    let (source, result) = match target {
        EvalTarget::Checkpoint(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.vehicle != cfg.vehicle {
                bail!("checkpoint {} is for a {}, not a {}", path.display(), ck.vehicle.name(), cfg.vehicle.name());
            }
            if ck.net.input_dim() != env.feature_dim() {
                bail!("checkpoint {} expects {} features, the simulator gives {}", path.display(), ck.net.input_dim(), env.feature_dim());
            }
            let label = name.map(str::to_string).unwrap_or_else(|| {
                ck.meta.get("trainer").cloned().unwrap_or_else(|| "learner".into())
            });
            let r = evaluate_on_tracks(&label, &env, &test, &mut ck.policy(), &ecfg, trajectories)?;
            (path.display().to_string(), r)
        }
        EvalTarget::Teacher(k) => {
            let all = make_default_ensemble(cfg.vehicle);
            if *k == 0 || *k > all.len() {
                bail!("teacher {k} out of range 1..={}", all.len());
            }
            let spec = all[k - 1].clone();
            let label = name.map(str::to_string).unwrap_or_else(|| spec.label.clone());
            let mut t = Teacher::new(spec, cfg.vehicle);
            let r = evaluate_on_tracks(&label, &env, &test, &mut t, &ecfg, trajectories)?;
            (format!("teacher {k}"), r)
        }
    };
    ensure_dir(&cfg.out)?;
    let prov = cfg.provenance();
    write_json(&cfg.out.join("eval.json"), &EvalDocument { provenance: prov.clone(), source, result: result.clone() })?;
    let csv_path = cfg.out.join("eval.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    let row = |track: String, t: (f64, f64, f64, f64, f64, f64)| EvalCsvRow {
        name: &result.name,
        track,
        mean_abs_error: t.0,
        completion_time: t.1,
        gates_passed_pct: t.2,
        resets: t.3,
        crashes: t.4,
        reward: t.5,
        config_hash: &prov.config_hash,
        seed: prov.seed,
        tool_version: &prov.tool_version,
    };
    for t in &result.tracks {
        w.serialize(row(
            t.track.to_string(),
            (t.mean_abs_error, t.completion_time, t.gates_passed_pct, t.resets as f64, t.crashes as f64, t.reward),
        ))?;
    }
    w.serialize(row(
        "mean".into(),
        (result.mean_abs_error, result.completion_time, result.gates_passed_pct, result.resets, result.crashes, result.reward),
    ))?;
    w.flush()?;
    Ok(result)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonDocument {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub inputs: Vec<PathBuf>,
    pub table: ComparisonTable,
}

#[derive(Serialize)]
struct ComparisonCsvRow<'a> {
    name: &'a str,
    mean_abs_error: f64,
    completion_time: f64,
    gates_passed_pct: f64,
    resets: f64,
    crashes: f64,
    reward: f64,
    config_hash: &'a str,
    seed: u64,
    tool_version: &'a str,
}

/// Reads eval documents (or directories holding `eval.json`) and writes
/// `comparison.json` and `comparison.csv`, rows in the order given.
pub fn cmd_compare(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<ComparisonTable> {
    if inputs.is_empty() {
        bail!("compare needs at least one eval result");
    }
    let mut results = Vec::new();
    for p in inputs {
        let path = if p.is_dir() { p.join("eval.json") } else { p.clone() };
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let doc: EvalDocument =
            serde_json::from_str(&text).with_context(|| format!("{} is not an eval result", path.display()))?;
        results.push(doc.result);
    }
    let table = compare(&results);
    ensure_dir(&cfg.out)?;
    write_json(
        &cfg.out.join("comparison.json"),
        &ComparisonDocument { provenance: cfg.provenance(), inputs: inputs.to_vec(), table: table.clone() },
    )?;
    let prov = cfg.provenance();
    let csv_path = cfg.out.join("comparison.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    for r in &table.rows {
        w.serialize(ComparisonCsvRow {
            name: &r.name,
            mean_abs_error: r.mean_abs_error,
            completion_time: r.completion_time,
            gates_passed_pct: r.gates_passed_pct,
            resets: r.resets,
            crashes: r.crashes,
            reward: r.reward,
            config_hash: &prov.config_hash,
            seed: prov.seed,
            tool_version: &prov.tool_version,
        })?;
    }
    w.flush()?;
    Ok(table)
}

/// One ablation cell: a rollout length and a teacher subset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationCell {
    pub horizon: usize,
    pub teachers: String,
}

impl AblationCell {
    pub fn dir_name(&self) -> String {
        format!("n{}_t{}", self.horizon, self.teachers.replace(',', "_").replace('-', "to"))
    }
}

/// Rows of the ablation table: every `N` with teachers 1-5, then the extra
/// subsets at `N = 300` (or the single `N` when only one is given).
pub fn ablation_grid(n_list: &[usize], extra_subsets: &[String]) -> Vec<AblationCell> {
    let mut cells: Vec<AblationCell> =
        n_list.iter().map(|&n| AblationCell { horizon: n, teachers: "1-5".into() }).collect();
    if n_list.len() > 1 {
        let n = if n_list.contains(&300) { 300 } else { n_list[n_list.len() / 2] };
        cells.extend(extra_subsets.iter().map(|s| AblationCell { horizon: n, teachers: s.clone() }));
    }
    cells
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub horizon: usize,
    pub teachers: String,
    pub mean_abs_error: f64,
    pub completion_time: f64,
    pub crashes: f64,
    pub reward: f64,
    pub rounds: usize,
    pub rehearsed_rounds: usize,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationTable {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub rows: Vec<AblationRow>,
}

impl std::fmt::Display for AblationTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<10} {:>6}  {:>9}  {:>9}  {:>7}  {:>11}", "teachers", "N", "error m", "time s", "crashes", "reward")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>6}  {:>9.3}  {:>9.2}  {:>7.2}  {:>11.2}",
                r.teachers, r.horizon, r.mean_abs_error, r.completion_time, r.crashes, r.reward
            )?;
        }
        Ok(())
    }
}

/// Trains and evaluates every grid cell with OIL. A cell whose
/// `result.json` already exists under the same config hash is reused.
pub fn cmd_ablate(cfg: &RunConfig, cells: &[AblationCell], mut progress: impl FnMut(&AblationRow)) -> Result<AblationTable> {
    let test = load_split(cfg, "test")?;
    let mut rows = Vec::new();
    for cell in cells {
        let mut cell_cfg = cfg.clone();
        cell_cfg.trainer = Trainer::Oil;
        cell_cfg.horizon = cell.horizon;
        cell_cfg.teachers = cell.teachers.clone();
        cell_cfg.epsilon = "auto".into();
        cell_cfg.out = cfg.out.join("cells").join(cell.dir_name());
        cell_cfg.validate()?;
        let hash = cell_cfg.hash();
        let result_path = cell_cfg.out.join("result.json");
        let cached = fs::read_to_string(&result_path)
            .ok()
            .and_then(|t| serde_json::from_str::<AblationRow>(&t).ok())
            .filter(|r| r.config_hash == hash);
        let row = match cached {
            Some(r) => r,
            None => {
                let ck_path = cmd_train(&cell_cfg)?;
                let ck = Checkpoint::load(&ck_path)?;
                let env = cell_cfg.env();
                let ecfg = EvalConfig::for_kind(cell_cfg.vehicle);
                let r = evaluate_on_tracks(&cell.dir_name(), &env, &test, &mut ck.policy(), &ecfg, None)?;
                let log = fs::read_to_string(cell_cfg.out.join("train_log.jsonl"))?;
                let rehearsed = log.lines().skip(1).filter(|l| l.contains("\"rehearsed\":true")).count();
                let row = AblationRow {
                    horizon: cell.horizon,
                    teachers: cell.teachers.clone(),
                    mean_abs_error: r.mean_abs_error,
                    completion_time: r.completion_time,
                    crashes: r.crashes,
                    reward: r.reward,
                    rounds: cell_cfg.rounds,
                    rehearsed_rounds: rehearsed,
                    config_hash: hash,
                    seed: cell_cfg.seed,
                    tool_version: TOOL_VERSION.into(),
                };
                write_json(&result_path, &row)?;
                row
            }
        };
        progress(&row);
        rows.push(row);
    }
    let table = AblationTable { provenance: cfg.provenance(), rows };
    ensure_dir(&cfg.out)?;
    write_json(&cfg.out.join("ablation.json"), &table)?;
    let mut w = csv::Writer::from_path(cfg.out.join("ablation.csv"))?;
    for r in &table.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(table)
}

#[derive(Debug, Parser)]
#[command(name = "oil", version, about = "Observational imitation learning lab")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training and test tracks.
    GenTracks {
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        test_count: Option<usize>,
    },
    /// Train a policy on the training tracks.
    Train,
    /// Evaluate a checkpoint or a teacher on the test tracks.
    Eval {
        #[arg(long, conflicts_with = "teacher", required_unless_present = "teacher")]
        checkpoint: Option<PathBuf>,
        /// Teacher number (1-based) of the default ensemble.
        #[arg(long)]
        teacher: Option<usize>,
        /// Row name in reports.
        #[arg(long)]
        name: Option<String>,
        /// Directory for per-track trajectory CSV files.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Tabulate several eval results.
    Compare {
        /// eval.json files or directories containing one.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Rollout-length and teacher-subset grid.
    Ablate {
        /// Comma-separated rollout lengths.
        #[arg(long = "n-list", alias = "N-list", value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        /// Semicolon-separated extra teacher subsets.
        #[arg(long, value_delimiter = ';')]
        subsets: Option<Vec<String>>,
    },
}

pub const DEFAULT_ABLATION_N: [usize; 4] = [60, 180, 300, 600];

pub fn default_ablation_subsets() -> Vec<String> {
    vec!["1,3,4".into(), "3".into()]
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::GenTracks { train_count, test_count } => {
            if let Some(n) = train_count {
                cfg.train_count = n;
            }
            if let Some(n) = test_count {
                cfg.test_count = n;
            }
            let out = cli.common.out.clone().unwrap_or_else(|| cfg.tracks.clone());
            let files = cmd_gen_tracks(&cfg, &out)?;
            println!("wrote {} track files to {}", files.len(), out.display());
        }
        Command::Train => {
            let verbose = cfg.trainer == Trainer::Oil;
            let ck = cmd_train_with(&cfg, |v| {
                if verbose {
                    if let Some(r) = v.get("round").and_then(|r| r.as_u64()) {
                        if r % 25 == 0 {
                            eprintln!("round {r}: dataset {}", v["dataset_size"]);
                        }
                    }
                }
            })?;
            println!("checkpoint written to {}", ck.display());
        }
        Command::Eval { checkpoint, teacher, name, trajectories } => {
            let target = match (checkpoint, teacher) {
                (Some(p), _) => EvalTarget::Checkpoint(p),
                (None, Some(k)) => EvalTarget::Teacher(k),
                (None, None) => bail!("eval needs --checkpoint or --teacher"),
            };
            let r = cmd_eval(&cfg, &target, name.as_deref(), trajectories.as_deref())?;
            print!("{}", compare(&[r]));
        }
        Command::Compare { inputs } => {
            let table = cmd_compare(&cfg, &inputs)?;
            print!("{table}");
        }
        Command::Ablate { n_list, subsets } => {
            let ns = n_list.unwrap_or_else(|| DEFAULT_ABLATION_N.to_vec());
            let extra = subsets.unwrap_or_else(default_ablation_subsets);
            for s in &extra {
                parse_teacher_subset(s, 5).map_err(anyhow::Error::msg)?;
            }
            let cells = ablation_grid(&ns, &extra);
            let table = cmd_ablate(&cfg, &cells, |r| eprintln!("cell N={} teachers={} done", r.horizon, r.teachers))?;
            print!("{table}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let g = ablation_grid(&DEFAULT_ABLATION_N, &default_ablation_subsets());
        assert_eq!(g.len(), 6);
        assert_eq!(g[4], AblationCell { horizon: 300, teachers: "1,3,4".into() });
        assert_eq!(ablation_grid(&[100], &default_ablation_subsets()).len(), 1);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig { out: "elsewhere".into(), ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 2, ..RunConfig::default() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn epsilon_auto() {
        let c = RunConfig { teachers: "3".into(), ..RunConfig::default() };
        assert_eq!(c.epsilon_mode().unwrap(), EpsilonMode::Single);
        assert_eq!(RunConfig::default().epsilon_mode().unwrap(), EpsilonMode::Multi);
    }
}
