//! Mapless lidar navigation: a 2D differential-drive simulator and a DDPG agent
//! that learns from mixed demonstration and self-collected experience through
//! prioritized replay.
//!
//! The geometry and network code is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix the double-precision types the rest of the stack uses.

pub mod actor_critic;
pub mod agent;
pub mod env;
pub mod neural;
pub mod geometry;
pub mod replay;
pub mod reward;
pub mod scalar;
pub mod trainer;
pub mod world_file;

pub use env::{Action, DoneReason, EnvConfig, EnvError, Observation, RobotEnv, StepResult, Transition, OBS_DIM};
pub use reward::{compute_reward, score_transition, RewardParts};
pub use scalar::Scalar;

pub type Point = geometry::Point<f64>;
pub type Pose = geometry::Pose<f64>;
pub type Shape = geometry::Shape<f64>;
pub type Aabb = geometry::Aabb<f64>;
pub type World = geometry::WorldSpec<f64>;
