//! Scripted demonstrator and offline re-scoring of demonstration files.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::env::{Action, DoneReason, EnvConfig, Observation, RobotEnv, Transition, N_BEAMS};
use crate::geometry::{beam_angle, WorldSpec};
use crate::replay::demo_file::DemoRecord;
use crate::reward::score_transition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotConfig {
    /// Half-width of the corridor swept by the robot; beams hitting inside it count as forward, meters.
    pub corridor_half_width: f64,
    /// A direction counts as free when its corridor is clear for this far
    /// (or up to the goal when it is closer), meters.
    pub avoid_distance: f64,
    /// Goal-bearing steering gain, 1/s.
    pub steer_gain: f64,
    /// Fraction of the angular limit the pilot uses.
    pub turn_fraction: f64,
    /// Front clearance at or below which the pilot stops and turns in place, meters.
    pub stop_clearance: f64,
    /// Front clearance at which the pilot reaches full speed, meters.
    pub full_speed_clearance: f64,
    pub qualification_episodes: usize,
    pub min_success_rate: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            corridor_half_width: 0.28,
            avoid_distance: 0.7,
            steer_gain: 2.0,
            turn_fraction: 0.75,
            stop_clearance: 0.3,
            full_speed_clearance: 1.2,
            qualification_episodes: 50,
            min_success_rate: 0.5,
        }
    }
}

/// Reactive goal-seeking controller that reads only the observation.
///
/// It heads for the goal bearing when the corridor toward it is free,
/// otherwise for the free beam direction closest to the goal bearing, and
/// turns in place toward the side with more clearance when nothing is free.
/// Speed scales with the free distance straight ahead.
#[derive(Debug, Clone)]
pub struct Pilot {
    pub config: PilotConfig,
}

impl Pilot {
    pub fn new(config: PilotConfig) -> Self {
        Self { config }
    }

    /// Distance along `direction` before the robot's corridor meets a beam hit.
    fn corridor_free(&self, hits: &[(f64, f64)], direction: f64) -> f64 {
        hits.iter()
            .filter_map(|&(angle, d)| {
                let rel = angle - direction;
                (rel.cos() > 0.0 && (d * rel.sin()).abs() <= self.config.corridor_half_width).then(|| d * rel.cos())
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `arena_diagonal` converts the normalized goal distance back to meters.
    pub fn act(&self, obs: &Observation, env: &EnvConfig, arena_diagonal: f64) -> Action {
        let p = &self.config;
        let hits: Vec<(f64, f64)> =
            obs.beams().iter().enumerate().map(|(i, &b)| (beam_angle(i, N_BEAMS, env.lidar_fov), b * env.lidar_range)).collect();
        let half_fov = env.lidar_fov / 2.0;
        let bearing = obs.goal_bearing() * PI;
        let need = p.avoid_distance.min(obs.goal_distance() * arena_diagonal);
        let front = self.corridor_free(&hits, 0.0);
        let turn_max = p.turn_fraction * env.a_vmax;

        let target = std::iter::once(bearing.clamp(-half_fov, half_fov))
            .chain(hits.iter().map(|h| h.0))
            .filter(|&dir| self.corridor_free(&hits, dir) >= need)
            .min_by(|a, b| (a - bearing).abs().total_cmp(&(b - bearing).abs()));
        let av = match target {
            Some(dir) => (p.steer_gain * dir).clamp(-turn_max, turn_max),
            None => {
                let side = |sign: f64| {
                    let v: Vec<f64> = hits.iter().filter(|h| h.0 * sign > 0.0).map(|h| h.1).collect();
                    v.iter().sum::<f64>() / v.len().max(1) as f64
                };
                if side(1.0) >= side(-1.0) {
                    turn_max
                } else {
                    -turn_max
                }
            }
        };
        let t = ((front - p.stop_clearance) / (p.full_speed_clearance - p.stop_clearance)).clamp(0.0, 1.0);
        Action::new(env.l_vmax * t, av)
    }
}

/// One pilot episode; returns its transitions and how it ended.
pub fn pilot_episode(env: &mut RobotEnv, seed: u64, pilot: &Pilot) -> Result<(Vec<Transition>, DoneReason), TrainerError> {
    let obs = env.reset(seed)?;
    pilot_rollout(env, obs, pilot)
}

/// Runs the pilot from the environment's current state until the episode ends.
pub fn pilot_rollout(env: &mut RobotEnv, mut obs: Observation, pilot: &Pilot) -> Result<(Vec<Transition>, DoneReason), TrainerError> {
    let mut out = Vec::new();
    loop {
        let a = pilot.act(&obs, env.config(), env.arena_diagonal());
        let res = env.step(a)?;
        out.push(Transition { s: obs, a: a.clamped(env.config()), r: res.reward, s_next: res.observation, done: res.reason.is_terminal(), demo: true });
        obs = res.observation;
        if res.done {
            return Ok((out, res.reason));
        }
    }
}

/// Collects exactly `n` pilot transitions, discarding episodes that end in a
/// collision. Fails when the pilot's success rate over the qualification
/// episodes falls below the configured minimum.
pub fn pilot_demos(world: &WorldSpec<f64>, cfg: &EnvConfig, n: usize, seed: u64, pilot_cfg: &PilotConfig) -> Result<Vec<Transition>, TrainerError> {
    let pilot = Pilot::new(*pilot_cfg);
    let mut env = RobotEnv::new(world.clone(), *cfg)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let (mut episodes, mut successes) = (0usize, 0usize);
    while out.len() < n || episodes < pilot_cfg.qualification_episodes {
        let (ts, reason) = pilot_episode(&mut env, seeds.next_u64(), &pilot)?;
        episodes += 1;
        if episodes <= pilot_cfg.qualification_episodes && reason == DoneReason::Arrival {
            successes += 1;
        }
        if episodes == pilot_cfg.qualification_episodes && (successes as f64) < pilot_cfg.min_success_rate * episodes as f64 {
            return Err(TrainerError::PilotUnqualified { successes, episodes });
        }
        if reason != DoneReason::Collision && out.len() < n {
            out.extend(ts);
        }
        if episodes > 100 * pilot_cfg.qualification_episodes.max(1) + n {
            return Err(TrainerError::PilotUnqualified { successes, episodes });
        }
    }
    out.truncate(n);
    Ok(out)
}

/// Re-scores every record from its stored fields. Returns the re-scored
/// records and the number whose reward changed.
pub fn rescore_records(records: &[DemoRecord], world: &WorldSpec<f64>, cfg: &EnvConfig) -> (Vec<DemoRecord>, usize) {
    let diagonal = world.diagonal();
    let mut changed = 0;
    let out = records
        .iter()
        .map(|rec| {
            let (r, _) = score_transition(&rec.s, Action::new(rec.a[0], rec.a[1]), &rec.s2, cfg, diagonal);
            if r.to_bits() != rec.r.to_bits() {
                changed += 1;
            }
            DemoRecord { r, ..rec.clone() }
        })
        .collect();
    (out, changed)
}
