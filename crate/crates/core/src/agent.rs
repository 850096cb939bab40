//! DDPG learner: exploration, importance-weighted critic updates, actor
//! ascent through the critic's action gradient, and soft target tracking.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor_critic::{ActionScale, ActorNet, CriticNet, NetworkConfig};
use crate::env::{Action, EnvConfig, Observation, ACTION_DIM, OBS_DIM};
use crate::neural::checkpoint::{Checkpoint, CheckpointError};
use crate::neural::{AdamConfig, AdamState, NeuralError};
use crate::replay::SampledBatch;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NeuralError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Linear-velocity noise std (m/s) at full scale.
    pub sigma_lv: f64,
    /// Angular-velocity noise std (rad/s) at full scale.
    pub sigma_av: f64,
    /// Multiplicative decay of the noise scale per exploratory step.
    pub decay: f64,
    /// Lowest noise scale, as a fraction of the initial one.
    pub floor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_lv: 0.05, sigma_av: 0.4, decay: 0.99995, floor: 0.1 }
    }
}

impl NoiseConfig {
    /// Steps until the decaying scale first reaches the floor.
    pub fn steps_to_floor(&self) -> u64 {
        if self.floor >= 1.0 {
            return 0;
        }
        (self.floor.ln() / self.decay.ln()).ceil() as u64
    }
}

/// Current exploration-noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseState {
    pub scale: f64,
    pub steps: u64,
}

impl Default for NoiseState {
    fn default() -> Self {
        Self { scale: 1.0, steps: 0 }
    }
}

impl NoiseState {
    pub fn advance(&mut self, cfg: &NoiseConfig) {
        self.scale = (self.scale * cfg.decay).max(cfg.floor);
        self.steps += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Weight of `z^2 / 2` on the actor's unsquashed outputs; keeps them off
    /// the flat tails of sigmoid and tanh.
    pub preactivation_penalty: f64,
    pub noise: NoiseConfig,
    pub network: NetworkConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.001,
            batch_size: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            preactivation_penalty: 0.0,
            noise: NoiseConfig::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.preactivation_penalty >= 0.0 && self.preactivation_penalty.is_finite()) {
            return bad("preactivation penalty must be finite and non-negative");
        }
        if self.batch_size == 0 || self.network.hidden == 0 {
            return bad("batch size and hidden width must be positive");
        }
        let n = &self.noise;
        if !(n.sigma_lv >= 0.0 && n.sigma_av >= 0.0 && n.decay > 0.0 && n.decay <= 1.0 && n.floor >= 0.0 && n.floor <= 1.0) {
            return bad("noise parameters out of range");
        }
        Ok(())
    }
}

/// Values produced by one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStepReport {
    /// Importance-weighted mean squared TD error before the update.
    pub critic_loss: f64,
    /// Mean Q(s, mu(s)) under the updated critic, before the actor step.
    pub actor_objective: f64,
    /// `y_i - Q(s_i, a_i)` for each batch item.
    pub td_errors: Vec<f64>,
    /// dQ/d(normalized action) at each stored `(s_i, a_i)`.
    pub action_grads: Vec<[f64; 2]>,
    /// Squared norms of `action_grads`.
    pub action_grad_sq: Vec<f64>,
    /// Mean Q(s_i, a_i) of the batch before the update.
    pub mean_q: f64,
}

impl TrainStepReport {
    /// The exact inputs the step computed for priority refresh.
    pub fn td_errors_for_priorities(&self) -> (&[f64], &[[f64; 2]]) {
        (&self.td_errors, &self.action_grads)
    }
}

/// DDPG agent with online and target copies of both networks.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: AgentConfig,
    pub scale: ActionScale,
    pub actor: ActorNet<f64>,
    pub critic: CriticNet<f64>,
    pub target_actor: ActorNet<f64>,
    pub target_critic: CriticNet<f64>,
    actor_opt: AdamState<f64>,
    critic_state_opt: AdamState<f64>,
    critic_trunk_opt: AdamState<f64>,
    train_steps: u64,
}

fn batch_arrays(batch: &SampledBatch, scale: &ActionScale) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array1<f64>, Array1<f64>) {
    let n = batch.len();
    let mut s = Array2::zeros((n, OBS_DIM));
    let mut s2 = Array2::zeros((n, OBS_DIM));
    let mut a = Array2::zeros((n, ACTION_DIM));
    let mut r = Array1::zeros(n);
    let mut not_done = Array1::zeros(n);
    for (i, t) in batch.transitions.iter().enumerate() {
        s.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s.0));
        s2.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s_next.0));
        let na = scale.normalize(t.a);
        a[[i, 0]] = na[0];
        a[[i, 1]] = na[1];
        r[i] = t.r;
        not_done[i] = if t.done { 0.0 } else { 1.0 };
    }
    (s, a, s2, r, not_done)
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, env: &EnvConfig, rng: &mut R) -> Result<Self, AgentError> {
        config.validate()?;
        let scale = ActionScale::from(env);
        let actor = ActorNet::new(&config.network, scale, rng)?;
        let critic = CriticNet::new(&config.network, rng)?;
        Ok(Self::assemble(config, scale, actor, critic))
    }

    /// Builds an agent around given networks; targets start as copies.
    pub fn assemble(config: AgentConfig, scale: ActionScale, actor: ActorNet<f64>, critic: CriticNet<f64>) -> Self {
        let actor_opt = AdamState::new(&actor.net, AdamConfig::with_lr(config.actor_lr));
        let critic_state_opt = AdamState::new(&critic.state_layer, AdamConfig::with_lr(config.critic_lr));
        let critic_trunk_opt = AdamState::new(&critic.trunk, AdamConfig::with_lr(config.critic_lr));
        Self {
            config,
            scale,
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_state_opt,
            critic_trunk_opt,
            train_steps: 0,
        }
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Greedy action, or greedy plus clamped Gaussian noise when exploring.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        obs: &Observation,
        noise: &mut NoiseState,
        explore: bool,
        env: &EnvConfig,
        rng: &mut R,
    ) -> Action {
        let a = self.actor.act(obs);
        if !explore {
            return a;
        }
        let n = &self.config.noise;
        let lv = Normal::new(0.0, n.sigma_lv * noise.scale).map_or(0.0, |d| d.sample(rng));
        let av = Normal::new(0.0, n.sigma_av * noise.scale).map_or(0.0, |d| d.sample(rng));
        noise.advance(n);
        Action::new(a.lv + lv, a.av + av).clamped(env)
    }

    pub fn q_value(&self, obs: &Observation, action: Action) -> f64 {
        self.critic.q_value(obs, action, &self.scale)
    }

    /// One critic step, one actor step and one soft update of both targets.
    pub fn train_step(&mut self, batch: &SampledBatch) -> Result<TrainStepReport, AgentError> {
        let n = batch.len();
        if n == 0 {
            return Err(AgentError::EmptyBatch);
        }
        let cfg = self.config;
        let (s, a, s2, r, not_done) = batch_arrays(batch, &self.scale);
        let w = Array1::from(batch.weights.clone());

        let a2 = self.target_actor.normalized_actions(s2.view())?;
        let q2 = self.target_critic.predict(s2.view(), a2.view())?.column(0).to_owned();
        let y = &r + &(&not_done * &q2 * cfg.gamma);

        let (q, cache) = self.critic.forward(s.view(), a.view())?;
        let q = q.column(0).to_owned();
        let td = &y - &q;
        let critic_loss = (&w * &td * &td).sum() / n as f64;
        if !critic_loss.is_finite() {
            return Err(AgentError::Diverged(self.snapshot(critic_loss, &td)));
        }

        // dQ/da at the stored actions, for priorities.
        let ones = Array2::from_elem((n, 1), 1.0);
        let d_merged = self.critic.trunk.backward_input(cache.trunk_cache(), ones.view())?;
        let h = self.critic.hidden();
        let grads_sa = d_merged.slice(s![.., h..]).to_owned();

        let dq = (&w * &td).mapv(|v| -2.0 * v / n as f64).insert_axis(Axis(1));
        let (critic_grads, _) = self.critic.backward(&cache, dq.view())?;
        self.critic_state_opt.step(&mut self.critic.state_layer, &critic_grads.state_layer)?;
        self.critic_trunk_opt.step(&mut self.critic.trunk, &critic_grads.trunk)?;

        let (mu, actor_cache) = self.actor.forward(s.view())?;
        let (q_mu, mu_cache) = self.critic.forward(s.view(), mu.view())?;
        let actor_objective = q_mu.sum() / n as f64;
        let d_mu = self.critic.trunk.backward_input(mu_cache.trunk_cache(), ones.view())?;
        let ascent = d_mu.slice(s![.., h..]).mapv(|g| -g / n as f64);
        let actor_grads = if cfg.preactivation_penalty > 0.0 {
            let raw = actor_cache.raw().mapv(|z| cfg.preactivation_penalty * z / n as f64);
            self.actor.backward_with_raw(&actor_cache, ascent.view(), Some(raw.view()))?
        } else {
            self.actor.backward(&actor_cache, ascent.view())?
        };
        self.actor_opt.step(&mut self.actor.net, &actor_grads)?;

        self.target_critic.soft_update_from(&self.critic, cfg.tau)?;
        self.target_actor.soft_update_from(&self.actor, cfg.tau)?;
        self.train_steps += 1;

        let action_grads: Vec<[f64; 2]> = grads_sa.rows().into_iter().map(|g| [g[0], g[1]]).collect();
        Ok(TrainStepReport {
            critic_loss,
            actor_objective,
            td_errors: td.to_vec(),
            action_grad_sq: action_grads.iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect(),
            action_grads,
            mean_q: q.mean().unwrap_or(0.0),
        })
    }

    fn snapshot(&self, loss: f64, td: &Array1<f64>) -> String {
        let worst = td.iter().copied().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        format!(
            "critic loss {loss} at train step {}; max |td| {worst}; actor finite: {}; critic finite: {}",
            self.train_steps,
            self.actor.net.is_finite(),
            self.critic.state_layer.is_finite() && self.critic.trunk.is_finite()
        )
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint<f64> {
        let mut ck = Checkpoint::new(step);
        ck.insert_net("actor", &self.actor.net);
        ck.insert_net("critic.state", &self.critic.state_layer);
        ck.insert_net("critic.trunk", &self.critic.trunk);
        ck.insert_net("target_actor", &self.target_actor.net);
        ck.insert_net("target_critic.state", &self.target_critic.state_layer);
        ck.insert_net("target_critic.trunk", &self.target_critic.trunk);
        ck.insert_adam("actor", &self.actor_opt, &self.actor.net);
        ck.insert_adam("critic.state", &self.critic_state_opt, &self.critic.state_layer);
        ck.insert_adam("critic.trunk", &self.critic_trunk_opt, &self.critic.trunk);
        ck.meta.insert("agent".into(), serde_json::to_value(self.config).expect("config encodes"));
        ck.meta.insert("action_scale".into(), serde_json::to_value(self.scale).expect("scale encodes"));
        ck.meta.insert("train_steps".into(), self.train_steps.into());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<f64>) -> Result<Self, AgentError> {
        let meta = |key: &str| ck.meta.get(key).cloned().ok_or_else(|| CheckpointError::Missing(format!("meta.{key}")));
        let malformed = |key: &str, e: serde_json::Error| CheckpointError::Malformed { name: format!("meta.{key}"), reason: e.to_string() };
        let config: AgentConfig = serde_json::from_value(meta("agent")?).map_err(|e| malformed("agent", e))?;
        let scale: ActionScale = serde_json::from_value(meta("action_scale")?).map_err(|e| malformed("action_scale", e))?;
        let train_steps = meta("train_steps")?.as_u64().unwrap_or(0);
        let actor = ActorNet::from_net(ck.net("actor")?, scale)?;
        let critic = CriticNet::from_parts(ck.net("critic.state")?, ck.net("critic.trunk")?)?;
        Ok(Self {
            config,
            scale,
            target_actor: ActorNet::from_net(ck.net("target_actor")?, scale)?,
            target_critic: CriticNet::from_parts(ck.net("target_critic.state")?, ck.net("target_critic.trunk")?)?,
            actor_opt: ck.adam("actor", &actor.net)?,
            critic_state_opt: ck.adam("critic.state", &critic.state_layer)?,
            critic_trunk_opt: ck.adam("critic.trunk", &critic.trunk)?,
            actor,
            critic,
            train_steps,
        })
    }
}
