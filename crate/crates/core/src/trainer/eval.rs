//! Greedy evaluation over seeded missions.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor_critic::ActorNet;
use crate::env::{DoneReason, EnvConfig, EnvError, RobotEnv};
use crate::geometry::{Point, Pose, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissionOutcome {
    Success,
    Collision,
    Timeout,
}

impl MissionOutcome {
    fn from_reason(r: DoneReason) -> Self {
        match r {
            DoneReason::Arrival => MissionOutcome::Success,
            DoneReason::Collision => MissionOutcome::Collision,
            DoneReason::Timeout | DoneReason::Running => MissionOutcome::Timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub seed: u64,
    pub outcome: MissionOutcome,
    pub steps: usize,
    pub path_length: f64,
    pub mean_abs_av: f64,
    /// Mean |av_t - av_{t-1}| over consecutive steps of the mission.
    pub mean_abs_dav: f64,
    sum_abs_av: f64,
    sum_abs_dav: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub missions: Vec<MissionReport>,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    /// Per-step means pooled over all missions.
    pub mean_abs_av: f64,
    pub mean_abs_dav: f64,
}

impl EvalReport {
    pub fn from_missions(missions: Vec<MissionReport>) -> Self {
        let count = |o| missions.iter().filter(|m| m.outcome == o).count();
        let steps: usize = missions.iter().map(|m| m.steps).sum();
        let deltas: usize = missions.iter().map(|m| m.steps.saturating_sub(1)).sum();
        let sum_av: f64 = missions.iter().map(|m| m.sum_abs_av).sum();
        let sum_dav: f64 = missions.iter().map(|m| m.sum_abs_dav).sum();
        Self {
            successes: count(MissionOutcome::Success),
            collisions: count(MissionOutcome::Collision),
            timeouts: count(MissionOutcome::Timeout),
            mean_abs_av: if steps > 0 { sum_av / steps as f64 } else { 0.0 },
            mean_abs_dav: if deltas > 0 { sum_dav / deltas as f64 } else { 0.0 },
            missions,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.missions.is_empty() {
            0.0
        } else {
            self.successes as f64 / self.missions.len() as f64
        }
    }
}

/// Placement seed of mission `index` under base seed `base`.
pub fn mission_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// Runs the greedy policy until the episode ends.
pub fn run_mission(actor: &ActorNet<f64>, env: &mut RobotEnv, seed: u64) -> Result<MissionReport, EnvError> {
    let mut obs = *env.observation();
    let mut prev_pos = env.pose().position();
    let (mut path, mut sum_av, mut sum_dav) = (0.0, 0.0, 0.0);
    let mut prev_av: Option<f64> = None;
    loop {
        let a = actor.act(&obs).clamped(env.config());
        let res = env.step(a)?;
        let pos = env.pose().position();
        path += pos.distance(prev_pos);
        prev_pos = pos;
        sum_av += a.av.abs();
        if let Some(p) = prev_av {
            sum_dav += (a.av - p).abs();
        }
        prev_av = Some(a.av);
        obs = res.observation;
        if res.done {
            let steps = env.steps();
            return Ok(MissionReport {
                seed,
                outcome: MissionOutcome::from_reason(res.reason),
                steps,
                path_length: path,
                mean_abs_av: sum_av / steps as f64,
                mean_abs_dav: if steps > 1 { sum_dav / (steps - 1) as f64 } else { 0.0 },
                sum_abs_av: sum_av,
                sum_abs_dav: sum_dav,
            });
        }
    }
}

/// Mission from an explicit start pose and goal.
pub fn run_mission_from(
    actor: &ActorNet<f64>,
    world: &WorldSpec<f64>,
    cfg: &EnvConfig,
    pose: Pose<f64>,
    goal: Point<f64>,
) -> Result<MissionReport, EnvError> {
    let mut env = RobotEnv::new(world.clone(), *cfg)?;
    env.reset_with(pose, goal)?;
    run_mission(actor, &mut env, 0)
}

/// Evaluates `n_missions` seeded missions; each mission depends only on its own seed.
pub fn evaluate(actor: &ActorNet<f64>, world: &WorldSpec<f64>, cfg: &EnvConfig, n_missions: usize, seed: u64) -> Result<EvalReport, EnvError> {
    let mut env = RobotEnv::new(world.clone(), *cfg)?;
    let mut missions = Vec::with_capacity(n_missions);
    for i in 0..n_missions {
        let s = mission_seed(seed, i);
        env.reset(s)?;
        missions.push(run_mission(actor, &mut env, s)?);
    }
    Ok(EvalReport::from_missions(missions))
}
