//! Episodic differential-drive environment over a lidar-scanned world.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, GeometryError, Point, Pose, WorldSpec};
use crate::reward::{score_transition, RewardParts, StepDistances};

/// Number of lidar beams in an observation.
pub const N_BEAMS: usize = 24;
/// Observation length: beams, goal polar pair, previous action pair.
pub const OBS_DIM: usize = N_BEAMS + 4;
pub const ACTION_DIM: usize = 2;

const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("could not place robot and goal after {0} attempts; check spawn/goal regions")]
    PlacementFailed(usize),
    #[error("step called on a finished episode; call reset first")]
    EpisodeDone,
    #[error("step called before reset")]
    NotReset,
    #[error("non-finite action ({lv}, {av})")]
    NonFiniteAction { lv: f64, av: f64 },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Velocity command: linear `lv` (m/s) and angular `av` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub lv: f64,
    pub av: f64,
}

impl Action {
    pub const ZERO: Action = Action { lv: 0.0, av: 0.0 };

    pub fn new(lv: f64, av: f64) -> Self {
        Self { lv, av }
    }

    /// Clamps into `[0, l_vmax] x [-a_vmax, a_vmax]`.
    pub fn clamped(self, cfg: &EnvConfig) -> Self {
        Self { lv: self.lv.clamp(0.0, cfg.l_vmax), av: self.av.clamp(-cfg.a_vmax, cfg.a_vmax) }
    }

    pub fn is_within(&self, cfg: &EnvConfig) -> bool {
        (0.0..=cfg.l_vmax).contains(&self.lv) && self.av.abs() <= cfg.a_vmax
    }

    /// Both components scaled to unit range: `(lv / l_vmax, av / a_vmax)`.
    pub fn normalized(&self, cfg: &EnvConfig) -> [f64; 2] {
        [self.lv / cfg.l_vmax, self.av / cfg.a_vmax]
    }

    pub fn from_normalized(n: [f64; 2], cfg: &EnvConfig) -> Self {
        Self { lv: n[0] * cfg.l_vmax, av: n[1] * cfg.a_vmax }
    }
}

/// Fixed-layout state vector fed to the networks.
///
/// `[0..24]` normalized beams, `[24]` goal distance over arena diagonal,
/// `[25]` body-frame goal bearing over pi, `[26..28]` previous action normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(#[serde(with = "obs_array")] pub [f64; OBS_DIM]);

mod obs_array {
    use super::OBS_DIM;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; OBS_DIM], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; OBS_DIM], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let n = v.len();
        v.try_into().map_err(|_| D::Error::invalid_length(n, &"28 observation entries"))
    }
}

impl Default for Observation {
    fn default() -> Self {
        Self([0.0; OBS_DIM])
    }
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn beams(&self) -> &[f64] {
        &self.0[..N_BEAMS]
    }

    pub fn goal_distance(&self) -> f64 {
        self.0[N_BEAMS]
    }

    pub fn goal_bearing(&self) -> f64 {
        self.0[N_BEAMS + 1]
    }

    pub fn prev_action(&self) -> [f64; 2] {
        [self.0[N_BEAMS + 2], self.0[N_BEAMS + 3]]
    }

    /// Checks every entry against its documented range.
    pub fn check_ranges(&self) -> Result<(), String> {
        let within = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        for (i, &b) in self.beams().iter().enumerate() {
            if !(b.is_finite() && b > 0.0 && b <= 1.0) {
                return Err(format!("beam {i} = {b} outside (0, 1]"));
            }
        }
        let checks = [
            (N_BEAMS, 0.0, 1.0),
            (N_BEAMS + 1, -1.0, 1.0),
            (N_BEAMS + 2, 0.0, 1.0),
            (N_BEAMS + 3, -1.0, 1.0),
        ];
        for (i, lo, hi) in checks {
            if !within(self.0[i], lo, hi) {
                return Err(format!("entry {i} = {} outside [{lo}, {hi}]", self.0[i]));
            }
        }
        Ok(())
    }
}

/// Environment parameters. Distances in metres, velocities in m/s and rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub dt: f64,
    pub l_vmax: f64,
    pub l_vmin: f64,
    pub a_vmax: f64,
    pub d_gmin: f64,
    pub d_romin: f64,
    pub r_body: f64,
    pub r_arrival: f64,
    pub r_collision: f64,
    pub r_ap: f64,
    pub r_lp: f64,
    /// Scale on signed goal progress.
    pub c_g: f64,
    pub max_episode_steps: usize,
    pub lidar_fov: f64,
    pub lidar_range: f64,
    /// Extra clearance beyond the body radius required at placement.
    pub placement_margin: f64,
    pub min_start_goal_separation: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            l_vmax: 0.26,
            l_vmin: 0.05,
            a_vmax: 1.82,
            d_gmin: 0.3,
            d_romin: 0.25,
            r_body: 0.22,
            r_arrival: 100.0,
            r_collision: -10.0,
            r_ap: -0.5,
            r_lp: -0.5,
            c_g: 1.0,
            max_episode_steps: 500,
            lidar_fov: PI,
            lidar_range: 3.5,
            placement_margin: 0.1,
            min_start_goal_separation: 1.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("dt", self.dt),
            ("l_vmax", self.l_vmax),
            ("a_vmax", self.a_vmax),
            ("d_gmin", self.d_gmin),
            ("d_romin", self.d_romin),
            ("r_body", self.r_body),
            ("r_arrival", self.r_arrival),
            ("lidar_fov", self.lidar_fov),
            ("lidar_range", self.lidar_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("r_collision", self.r_collision), ("r_ap", self.r_ap), ("r_lp", self.r_lp)] {
            if !(v < 0.0) {
                return Err(EnvError::InvalidConfig(format!("{name} must be negative, got {v}")));
            }
        }
        if !(self.l_vmin < self.l_vmax) {
            return Err(EnvError::InvalidConfig("l_vmin must be below l_vmax".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(EnvError::InvalidConfig("max_episode_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    Running,
    Arrival,
    Collision,
    Timeout,
}

impl DoneReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DoneReason::Running => "running",
            DoneReason::Arrival => "arrival",
            DoneReason::Collision => "collision",
            DoneReason::Timeout => "timeout",
        }
    }

    /// True for outcomes that end the task itself (not a step cap).
    pub fn is_terminal(&self) -> bool {
        matches!(self, DoneReason::Arrival | DoneReason::Collision)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub parts: RewardParts,
    pub done: bool,
    pub reason: DoneReason,
}

/// One `(s, a, r, s', done)` experience.
///
/// `done` marks true terminals (arrival or collision); episodes cut by the step
/// cap keep `done = false` so the critic still bootstraps through them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Observation,
    pub a: Action,
    pub r: f64,
    pub s_next: Observation,
    pub done: bool,
    pub demo: bool,
}

/// Differential-drive robot in a static world.
#[derive(Debug, Clone)]
pub struct RobotEnv {
    world: WorldSpec<f64>,
    config: EnvConfig,
    diagonal: f64,
    pose: Pose<f64>,
    goal: Point<f64>,
    prev_action: Action,
    scan: Vec<f64>,
    obs: Observation,
    steps: usize,
    state: EpisodeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EpisodeState {
    Fresh,
    Active,
    Done,
}

impl RobotEnv {
    pub fn new(world: WorldSpec<f64>, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        world.validate()?;
        let diagonal = world.diagonal();
        Ok(Self {
            world,
            config,
            diagonal,
            pose: Pose::default(),
            goal: Point::default(),
            prev_action: Action::ZERO,
            scan: vec![0.0; N_BEAMS],
            obs: Observation::default(),
            steps: 0,
            state: EpisodeState::Fresh,
        })
    }

    pub fn world(&self) -> &WorldSpec<f64> {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn arena_diagonal(&self) -> f64 {
        self.diagonal
    }

    pub fn pose(&self) -> Pose<f64> {
        self.pose
    }

    pub fn goal(&self) -> Point<f64> {
        self.goal
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    /// Raw beam distances of the latest scan, in metres.
    pub fn scan(&self) -> &[f64] {
        &self.scan
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.state == EpisodeState::Done
    }

    /// Goal distance (m) and body-frame bearing (rad).
    pub fn goal_polar(&self) -> (f64, f64) {
        let d = self.goal.sub(self.pose.position());
        (d.norm(), wrap_angle(d.y.atan2(d.x) - self.pose.heading))
    }

    /// Starts an episode with robot pose and goal sampled from the world regions.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let need = self.config.r_body + self.config.placement_margin;
        let sample = |rng: &mut ChaCha8Rng, region: &crate::geometry::Aabb<f64>| {
            Point::new(rng.random_range(region.min.x..=region.max.x), rng.random_range(region.min.y..=region.max.y))
        };
        for _ in 0..PLACEMENT_ATTEMPTS {
            let start = sample(&mut rng, &self.world.spawn_region);
            let heading = rng.random_range(-PI..PI);
            let goal = sample(&mut rng, &self.world.goal_region);
            if self.world.min_clearance(start) > need
                && self.world.min_clearance(goal) > need
                && start.distance(goal) >= self.config.min_start_goal_separation
            {
                return self.start_episode(Pose::new(start.x, start.y, heading), goal);
            }
        }
        Err(EnvError::PlacementFailed(PLACEMENT_ATTEMPTS))
    }

    /// Starts an episode from an explicit pose and goal (no placement rules applied
    /// beyond both points lying inside the bounds).
    pub fn reset_with(&mut self, pose: Pose<f64>, goal: Point<f64>) -> Result<Observation, EnvError> {
        if !self.world.bounds.contains(pose.position()) || !self.world.bounds.contains(goal) {
            return Err(EnvError::InvalidPlacement("pose and goal must lie inside the bounds".into()));
        }
        self.start_episode(Pose::new(pose.x, pose.y, pose.heading), goal)
    }

    fn start_episode(&mut self, pose: Pose<f64>, goal: Point<f64>) -> Result<Observation, EnvError> {
        self.pose = pose;
        self.goal = goal;
        self.prev_action = Action::ZERO;
        self.steps = 0;
        self.refresh_observation()?;
        self.state = EpisodeState::Active;
        Ok(self.obs)
    }

    fn refresh_observation(&mut self) -> Result<(), EnvError> {
        let cfg = &self.config;
        self.scan = self.world.lidar_scan(&self.pose, N_BEAMS, cfg.lidar_fov, cfg.lidar_range)?;
        let (d_goal, bearing) = self.goal_polar();
        let mut v = [0.0; OBS_DIM];
        for (slot, &d) in v.iter_mut().zip(&self.scan) {
            *slot = d.min(cfg.lidar_range) / cfg.lidar_range;
        }
        v[N_BEAMS] = d_goal / self.diagonal;
        v[N_BEAMS + 1] = bearing / PI;
        let [lv, av] = self.prev_action.normalized(cfg);
        v[N_BEAMS + 2] = lv;
        v[N_BEAMS + 3] = av;
        self.obs = Observation(v);
        Ok(())
    }

    /// Applies `action` for one control period.
    ///
    /// The command is clamped to the velocity limits before integration.
    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        match self.state {
            EpisodeState::Fresh => return Err(EnvError::NotReset),
            EpisodeState::Done => return Err(EnvError::EpisodeDone),
            EpisodeState::Active => {}
        }
        if !(action.lv.is_finite() && action.av.is_finite()) {
            return Err(EnvError::NonFiniteAction { lv: action.lv, av: action.av });
        }
        let action = action.clamped(&self.config);
        let dt = self.config.dt;
        let h = self.pose.heading;
        let prev_obs = self.obs;
        self.pose = Pose::new(
            self.pose.x + action.lv * h.cos() * dt,
            self.pose.y + action.lv * h.sin() * dt,
            h + action.av * dt,
        );
        self.prev_action = action;
        self.steps += 1;
        self.refresh_observation()?;

        let (reward, parts) = score_transition(&prev_obs, action, &self.obs, &self.config, self.diagonal);
        let d = StepDistances::from_observations(&prev_obs, &self.obs, &self.config, self.diagonal);
        let reason = if d.d_obstacle < self.config.d_romin {
            DoneReason::Collision
        } else if d.d_goal < self.config.d_gmin {
            DoneReason::Arrival
        } else if self.steps >= self.config.max_episode_steps {
            DoneReason::Timeout
        } else {
            DoneReason::Running
        };
        let done = reason != DoneReason::Running;
        if done {
            self.state = EpisodeState::Done;
        }
        Ok(StepResult { observation: self.obs, reward, parts, done, reason })
    }
}
