//! Synchronous tele-operation session: owns the environment and the
//! recording sink, applies the latest command on every tick.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use navlearn::env::{Action, DoneReason, EnvConfig, EnvError, RobotEnv, Transition};
use navlearn::geometry::WorldSpec;
use navlearn::replay::demo_file::DemoWriter;
use navlearn::RewardParts;

use crate::protocol::{ActionMsg, ClientMessage, Frame, GoalMsg, PoseMsg};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("demo file: {0}")]
    Io(#[from] std::io::Error),
    #[error("recording requested but the service has no demo output")]
    NoSink,
    #[error("non-finite command")]
    NonFinite,
}

/// What a handled command asks the transport to send back.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    None,
    Saved { demo_count: usize },
}

pub struct SessionCore {
    env: RobotEnv,
    env_name: String,
    seeds: ChaCha8Rng,
    command: Action,
    last_seq: Option<u64>,
    tick: u64,
    episode: u64,
    cumulative: f64,
    recording: bool,
    paused: bool,
    sink: Option<DemoWriter<Box<dyn Write + Send>>>,
    last_reward: (f64, RewardParts),
    last_reason: DoneReason,
}

impl SessionCore {
    pub fn new(world: WorldSpec<f64>, cfg: EnvConfig, seed: u64, sink: Option<Box<dyn Write + Send>>) -> Result<Self, SessionError> {
        let env_name = world.name.clone();
        let mut s = Self {
            env: RobotEnv::new(world, cfg)?,
            sink: sink.map(|w| DemoWriter::new(w, &env_name)),
            env_name,
            seeds: ChaCha8Rng::seed_from_u64(seed),
            command: Action::ZERO,
            last_seq: None,
            tick: 0,
            episode: 0,
            cumulative: 0.0,
            recording: false,
            paused: false,
            last_reward: (0.0, RewardParts::default()),
            last_reason: DoneReason::Running,
        };
        s.start_episode()?;
        Ok(s)
    }

    fn start_episode(&mut self) -> Result<(), SessionError> {
        self.env.reset(self.seeds.next_u64())?;
        self.cumulative = 0.0;
        self.command = Action::ZERO;
        self.last_reward = (0.0, RewardParts::default());
        self.last_reason = DoneReason::Running;
        Ok(())
    }

    pub fn env(&self) -> &RobotEnv {
        &self.env
    }

    pub fn env_name(&self) -> &str {
        &self.env_name
    }

    pub fn command(&self) -> Action {
        self.command
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn demo_count(&self) -> usize {
        self.sink.as_ref().map_or(0, |s| s.written())
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Result<Reply, SessionError> {
        match msg {
            ClientMessage::Cmd { lv, av, seq } => {
                if !(lv.is_finite() && av.is_finite()) {
                    return Err(SessionError::NonFinite);
                }
                if self.last_seq.is_some_and(|last| seq <= last) {
                    return Ok(Reply::None);
                }
                self.last_seq = Some(seq);
                self.command = Action::new(lv, av).clamped(self.env.config());
            }
            ClientMessage::Reset {} => {
                self.episode += 1;
                self.start_episode()?;
            }
            ClientMessage::Record { on } => {
                if on && self.sink.is_none() {
                    return Err(SessionError::NoSink);
                }
                self.recording = on;
            }
            ClientMessage::Save {} => {
                if let Some(s) = self.sink.as_mut() {
                    s.flush()?;
                }
                return Ok(Reply::Saved { demo_count: self.demo_count() });
            }
        }
        Ok(Reply::None)
    }

    /// A controller disconnected: stop stepping until one returns.
    pub fn pause(&mut self) {
        self.paused = true;
    }

    pub fn resume(&mut self) {
        self.paused = false;
    }

    /// The disconnect grace period ran out: close the episode and start a
    /// fresh one. Nothing is in flight between ticks, so nothing is recorded.
    pub fn expire(&mut self) -> Result<(), SessionError> {
        self.episode += 1;
        self.last_seq = None;
        self.start_episode()
    }

    /// Steps the simulation once with the held command. Returns `None` while paused.
    pub fn tick(&mut self) -> Result<Option<Frame>, SessionError> {
        if self.paused {
            return Ok(None);
        }
        if self.env.is_done() {
            self.episode += 1;
            self.start_episode()?;
        }
        let s = *self.env.observation();
        let a = self.command;
        let res = self.env.step(a)?;
        self.tick += 1;
        self.cumulative += res.reward;
        self.last_reward = (res.reward, res.parts);
        self.last_reason = res.reason;
        if self.recording {
            if let Some(sink) = self.sink.as_mut() {
                sink.write(&Transition { s, a, r: res.reward, s_next: res.observation, done: res.reason.is_terminal(), demo: true })?;
            }
        }
        Ok(Some(self.frame()))
    }

    pub fn frame(&self) -> Frame {
        let pose = self.env.pose();
        let (distance, bearing) = self.env.goal_polar();
        let goal = self.env.goal();
        Frame {
            tick: self.tick,
            episode: self.episode,
            pose: PoseMsg { x: pose.x, y: pose.y, heading: pose.heading },
            beams: self.env.scan().to_vec(),
            goal: GoalMsg { distance, bearing },
            goal_position: [goal.x, goal.y],
            last_action: ActionMsg::from(self.command),
            reward: self.last_reward.0,
            parts: self.last_reward.1,
            cumulative_reward: self.cumulative,
            done: self.last_reason != DoneReason::Running,
            reason: self.last_reason.as_str().to_string(),
            recording: self.recording,
            paused: self.paused,
            demo_count: self.demo_count(),
        }
    }

    /// Flushes and releases the recording sink.
    pub fn finish(mut self) -> Result<Option<Box<dyn Write + Send>>, SessionError> {
        match self.sink.take() {
            Some(mut s) => {
                s.flush()?;
                Ok(Some(s.into_inner()))
            }
            None => Ok(None),
        }
    }
}
