//! Shaped navigation reward: goal progress, obstacle proximity and velocity penalties.

use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, Observation, N_BEAMS};

/// The four additive reward terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardParts {
    /// Arrival bonus or signed goal progress.
    pub goal: f64,
    /// Obstacle proximity penalty.
    pub collision: f64,
    /// Penalty for sharp turning.
    pub angular: f64,
    /// Penalty for creeping.
    pub linear: f64,
}

impl RewardParts {
    /// Sum in a fixed order so every caller gets bit-identical totals.
    #[inline]
    pub fn total(&self) -> f64 {
        self.goal + self.collision + self.angular + self.linear
    }
}

/// Total reward and its parts for one step.
///
/// `d_goal_prev` and `d_goal` are the goal distances before and after the step;
/// `d_obstacle` is the closest obstacle distance after the step.
pub fn compute_reward(d_goal_prev: f64, d_goal: f64, d_obstacle: f64, action: Action, cfg: &EnvConfig) -> (f64, RewardParts) {
    let goal = if d_goal < cfg.d_gmin { cfg.r_arrival } else { cfg.c_g * (d_goal_prev - d_goal) };
    let collision = if d_obstacle < cfg.d_romin {
        2.0 * cfg.r_collision
    } else if d_obstacle < 2.0 * cfg.d_romin {
        cfg.r_collision
    } else {
        0.0
    };
    let angular = if action.av.abs() > 0.8 * cfg.a_vmax.abs() { cfg.r_ap } else { 0.0 };
    let linear = if action.lv < cfg.l_vmin { cfg.r_lp } else { 0.0 };
    let parts = RewardParts { goal, collision, angular, linear };
    (parts.total(), parts)
}

/// Distances the reward depends on, recovered from a pair of observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDistances {
    pub d_goal_prev: f64,
    pub d_goal: f64,
    pub d_obstacle: f64,
}

impl StepDistances {
    pub fn from_observations(s: &Observation, s_next: &Observation, cfg: &EnvConfig, arena_diagonal: f64) -> Self {
        let nearest = s_next.beams().iter().copied().fold(f64::INFINITY, f64::min);
        debug_assert_eq!(s_next.beams().len(), N_BEAMS);
        Self {
            d_goal_prev: s.goal_distance() * arena_diagonal,
            d_goal: s_next.goal_distance() * arena_diagonal,
            d_obstacle: nearest * cfg.lidar_range,
        }
    }
}

/// Scores a transition from its stored fields alone.
///
/// The environment scores every live step through this function, so a recorded
/// transition can always be re-scored offline to the identical value.
pub fn score_transition(s: &Observation, action: Action, s_next: &Observation, cfg: &EnvConfig, arena_diagonal: f64) -> (f64, RewardParts) {
    let d = StepDistances::from_observations(s, s_next, cfg, arena_diagonal);
    compute_reward(d.d_goal_prev, d.d_goal, d.d_obstacle, action, cfg)
}
