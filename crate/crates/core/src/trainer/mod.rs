//! Training orchestration: the act-store-learn loop, evaluation, scripted
//! demonstrations and metrics.

pub mod config;
pub mod eval;
pub mod metrics;
pub mod pilot;
pub mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{AgentError, DdpgAgent, NoiseState};
use crate::env::{EnvError, RobotEnv, Transition};
use crate::geometry::WorldSpec;
use crate::neural::checkpoint::CheckpointError;
use crate::replay::demo_file::{read_demo_file, DemoFileError};
use crate::replay::{ReplayBuffer, ReplayError};
use crate::world_file::{load_world, WorldFileError};

pub use config::{Mode, RunConfig};
pub use eval::{evaluate, EvalReport, MissionOutcome, MissionReport};
pub use metrics::{MetricRow, MetricsWriter, MovingAverage};
pub use pilot::{pilot_demos, PilotConfig};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("metrics log: {0}")]
    Metrics(String),
    #[error("demo file was recorded in `{found}` but the run uses `{expected}`")]
    DemoWorldMismatch { expected: String, found: String },
    #[error("scripted pilot succeeded in {successes} of {episodes} episodes; the world is too hard for scripted demos")]
    PilotUnqualified { successes: usize, episodes: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Demo(#[from] DemoFileError),
    #[error(transparent)]
    World(#[from] WorldFileError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl TrainerError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        TrainerError::Io { path: path.to_path_buf(), source }
    }
}

/// Independent random streams of one run.
struct Streams {
    init: ChaCha8Rng,
    resets: ChaCha8Rng,
    explore: ChaCha8Rng,
    sample: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self { init: stream(1), resets: stream(2), explore: stream(3), sample: stream(4) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub report: EvalReport,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: DdpgAgent,
    pub evals: Vec<EvalPoint>,
    pub steps_run: u64,
    pub episodes: u64,
    /// Step of the first evaluation at or above `stop_at_success` (or 90% when unset).
    pub threshold_step: Option<u64>,
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub dir: Option<PathBuf>,
}

impl RunOutputs {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }
}

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.9;

pub fn load_run_world(cfg: &RunConfig) -> Result<WorldSpec<f64>, TrainerError> {
    Ok(load_world(&cfg.world)?)
}

/// Reads and checks the demonstration transitions a run needs.
pub fn load_demos(cfg: &RunConfig, world: &WorldSpec<f64>) -> Result<Vec<Transition>, TrainerError> {
    let Some(path) = &cfg.demo_file else { return Ok(Vec::new()) };
    let set = read_demo_file(path, &cfg.env, cfg.min_demos)?;
    if let Some(name) = &set.env_name {
        if *name != world.name {
            return Err(TrainerError::DemoWorldMismatch { expected: world.name.clone(), found: name.clone() });
        }
    }
    Ok(set.transitions())
}

/// Runs training, writing `metrics.csv`, `evals.jsonl` and checkpoints when
/// an output directory is given.
pub fn train(cfg: &RunConfig, outputs: &RunOutputs, metrics_sink: Option<&mut dyn Write>) -> Result<TrainOutcome, TrainerError> {
    let cfg = cfg.effective();
    cfg.validate()?;
    let world = load_run_world(&cfg)?;
    // Demonstrations are read and validated before any training work.
    let demos = load_demos(&cfg, &world)?;
    train_with(&cfg, world, demos, outputs, metrics_sink)
}

/// Training loop on an already loaded world and demonstration set.
pub fn train_with(
    cfg: &RunConfig,
    world: WorldSpec<f64>,
    demos: Vec<Transition>,
    outputs: &RunOutputs,
    mut metrics_sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome, TrainerError> {
    let cfg = cfg.effective();
    cfg.validate_params()?;
    let mut streams = Streams::new(cfg.seed);
    let mut agent = DdpgAgent::new(cfg.agent, &cfg.env, &mut streams.init)?;
    let mut buffer = ReplayBuffer::new(cfg.replay)?;
    for t in demos {
        buffer.push(t, true)?;
    }
    let mut env = RobotEnv::new(world.clone(), cfg.env)?;

    let mut file_metrics = match &outputs.dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| TrainerError::io(dir, e))?;
            let p = dir.join("metrics.csv");
            Some(MetricsWriter::new(BufWriter::new(File::create(&p).map_err(|e| TrainerError::io(&p, e))?)))
        }
        None => None,
    };
    let mut sink_metrics = metrics_sink.as_mut().map(|w| MetricsWriter::new(&mut **w));
    let mut evals_file = match &outputs.dir {
        Some(dir) => {
            let p = dir.join("evals.jsonl");
            Some(BufWriter::new(File::create(&p).map_err(|e| TrainerError::io(&p, e))?))
        }
        None => None,
    };

    let threshold = cfg.stop_at_success.unwrap_or(DEFAULT_SUCCESS_THRESHOLD);
    let mut noise = NoiseState::default();
    let mut obs = env.reset(streams.resets.next_u64())?;
    let mut episode = 0u64;
    let mut live = 0usize;
    let mut evals = Vec::new();
    let mut threshold_step = None;
    let mut steps_run = 0;

    for step in 1..=cfg.total_steps {
        let a = agent.select_action(&obs, &mut noise, true, &cfg.env, &mut streams.explore);
        let q = agent.q_value(&obs, a);
        let res = env.step(a)?;
        buffer.push(Transition { s: obs, a, r: res.reward, s_next: res.observation, done: res.reason.is_terminal(), demo: false }, false)?;
        live += 1;

        if live >= cfg.learning_starts && buffer.len() >= cfg.agent.batch_size {
            let beta = cfg.replay.beta_at(step, cfg.total_steps);
            let batch = buffer.sample(cfg.agent.batch_size, beta, &mut streams.sample)?;
            let report = agent.train_step(&batch)?;
            let (td, grads) = report.td_errors_for_priorities();
            buffer.update_priorities(&batch.keys, td, grads)?;
        }

        let row = MetricRow { step, reward: res.reward, q, episode, outcome: res.reason.as_str().to_string() };
        if let Some(w) = file_metrics.as_mut() {
            w.write(&row)?;
        }
        if let Some(w) = sink_metrics.as_mut() {
            w.write(&row)?;
        }

        if res.done {
            episode += 1;
            obs = env.reset(streams.resets.next_u64())?;
        } else {
            obs = res.observation;
        }
        steps_run = step;

        if step % cfg.eval_interval == 0 {
            let report = evaluate(&agent.actor, &world, &cfg.env, cfg.eval_missions, cfg.eval_seed)?;
            info!(
                "step {step}: {}/{} successes, {} collisions, noise scale {:.3}",
                report.successes,
                report.missions.len(),
                report.collisions,
                noise.scale
            );
            if let Some(f) = evals_file.as_mut() {
                let line = serde_json::json!({ "step": step, "report": &report });
                writeln!(f, "{line}").map_err(|e| TrainerError::io(Path::new("evals.jsonl"), e))?;
            }
            if let (Some(dir), true) = (&outputs.dir, cfg.checkpoint_every_eval) {
                agent.to_checkpoint(step).save(dir.join(format!("checkpoint_{step:08}.json")))?;
            }
            let reached = report.success_rate() >= threshold;
            evals.push(EvalPoint { step, report });
            if reached && threshold_step.is_none() {
                threshold_step = Some(step);
                if cfg.stop_at_success.is_some() {
                    break;
                }
            }
        }
    }

    if let Some(w) = file_metrics.as_mut() {
        w.flush()?;
    }
    if let Some(w) = sink_metrics.as_mut() {
        w.flush()?;
    }
    if let Some(f) = evals_file.as_mut() {
        f.flush().map_err(|e| TrainerError::io(Path::new("evals.jsonl"), e))?;
    }
    if let Some(dir) = &outputs.dir {
        agent.to_checkpoint(steps_run).save(dir.join("checkpoint_final.json"))?;
    }
    Ok(TrainOutcome { agent, evals, steps_run, episodes: episode, threshold_step })
}
