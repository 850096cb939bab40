//! Actor and critic networks for the 28-dimensional navigation state.
//!
//! The actor is a linear-output dense stack whose two outputs are squashed by
//! a sigmoid (linear velocity) and a tanh (angular velocity). The critic
//! processes the state through one dense layer, appends the normalized action
//! to that layer's output, and continues through two more dense layers to a
//! linear Q head.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, Observation, ACTION_DIM, OBS_DIM};
use crate::neural::{mlp_specs, sigmoid, Activation, DenseNet, ForwardCache, Gradients, LayerSpec, NeuralError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Width of every hidden layer.
    pub hidden: usize,
    /// Output layers start in `U(-final_init, final_init)`.
    pub final_init: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden: 500, final_init: 3e-3 }
    }
}

/// Velocity limits used to scale the actor's squashed outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScale {
    pub l_vmax: f64,
    pub a_vmax: f64,
}

impl From<&EnvConfig> for ActionScale {
    fn from(cfg: &EnvConfig) -> Self {
        Self { l_vmax: cfg.l_vmax, a_vmax: cfg.a_vmax }
    }
}

impl ActionScale {
    pub fn to_action(&self, normalized: [f64; 2]) -> Action {
        Action::new(normalized[0] * self.l_vmax, normalized[1] * self.a_vmax)
    }

    pub fn normalize(&self, a: Action) -> [f64; 2] {
        [a.lv / self.l_vmax, a.av / self.a_vmax]
    }
}

pub(crate) fn obs_row<T: Scalar>(obs: &Observation) -> Array2<T> {
    Array2::from_shape_fn((1, OBS_DIM), |(_, j)| T::lit(obs.0[j]))
}

/// Deterministic policy `state -> (sigmoid(y0), tanh(y1))`, scaled to velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet<T> {
    pub net: DenseNet<T>,
    pub scale: ActionScale,
}

/// Intermediates from [`ActorNet::forward`].
#[derive(Debug, Clone)]
pub struct ActorCache<T> {
    net: ForwardCache<T>,
    raw: Array2<T>,
    squashed: Array2<T>,
}

impl<T> ActorCache<T> {
    /// Outputs before the sigmoid and tanh squashing.
    pub fn raw(&self) -> &Array2<T> {
        &self.raw
    }
}

impl<T: Scalar> ActorNet<T> {
    pub fn specs(hidden: usize) -> Vec<LayerSpec> {
        mlp_specs(&[OBS_DIM, hidden, hidden, hidden, ACTION_DIM], Activation::Relu, Activation::Linear)
    }

    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, scale: ActionScale, rng: &mut R) -> Result<Self, NeuralError> {
        Ok(Self { net: DenseNet::init(&Self::specs(cfg.hidden), cfg.final_init, rng)?, scale })
    }

    pub fn from_net(net: DenseNet<T>, scale: ActionScale) -> Result<Self, NeuralError> {
        if net.in_dim() != OBS_DIM || net.out_dim() != ACTION_DIM {
            return Err(NeuralError::ShapeMismatch(format!("actor must map {OBS_DIM} -> {ACTION_DIM}")));
        }
        Ok(Self { net, scale })
    }

    fn squash(y: &Array2<T>) -> Array2<T> {
        let mut out = y.clone();
        out.column_mut(0).mapv_inplace(sigmoid);
        out.column_mut(1).mapv_inplace(|v| v.tanh());
        out
    }

    /// Normalized actions for a batch of states, one per row.
    pub fn normalized_actions(&self, states: ArrayView2<T>) -> Result<Array2<T>, NeuralError> {
        Ok(Self::squash(&self.net.predict(states)?))
    }

    pub fn forward(&self, states: ArrayView2<T>) -> Result<(Array2<T>, ActorCache<T>), NeuralError> {
        let (y, net) = self.net.forward(states)?;
        let squashed = Self::squash(&y);
        Ok((squashed.clone(), ActorCache { net, raw: y, squashed }))
    }

    /// Parameter gradients of `sum(grad * normalized_action)`.
    pub fn backward(&self, cache: &ActorCache<T>, action_grad: ArrayView2<T>) -> Result<Gradients<T>, NeuralError> {
        self.backward_with_raw(cache, action_grad, None)
    }

    /// As [`ActorNet::backward`], plus `raw_grad` applied directly to the
    /// unsquashed outputs.
    pub fn backward_with_raw(
        &self,
        cache: &ActorCache<T>,
        action_grad: ArrayView2<T>,
        raw_grad: Option<ArrayView2<T>>,
    ) -> Result<Gradients<T>, NeuralError> {
        if action_grad.dim() != cache.squashed.dim() {
            return Err(NeuralError::OutputGradShape { expected: cache.squashed.dim(), got: action_grad.dim() });
        }
        let mut dy = action_grad.to_owned();
        for (mut row, a) in dy.rows_mut().into_iter().zip(cache.squashed.rows()) {
            row[0] *= a[0] * (T::one() - a[0]);
            row[1] *= T::one() - a[1] * a[1];
        }
        if let Some(g) = raw_grad {
            if g.dim() != dy.dim() {
                return Err(NeuralError::OutputGradShape { expected: dy.dim(), got: g.dim() });
            }
            dy += &g;
        }
        Ok(self.net.backward(&cache.net, dy.view())?.0)
    }

    /// Velocity command for one observation.
    pub fn act(&self, obs: &Observation) -> Action {
        let y = self
            .net
            .predict(obs_row::<T>(obs).view())
            .expect("actor input width is fixed by construction");
        let l = sigmoid(y[[0, 0]]).as_f64();
        let a = y[[0, 1]].tanh().as_f64();
        self.scale.to_action([l, a])
    }

    pub fn soft_update_from(&mut self, source: &Self, tau: T) -> Result<(), NeuralError> {
        self.net.soft_update_from(&source.net, tau)
    }
}

/// Q(s, a) with the action merged after the first state layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet<T> {
    /// State layer: `28 -> hidden`, relu.
    pub state_layer: DenseNet<T>,
    /// `(hidden + 2) -> hidden -> hidden -> 1`.
    pub trunk: DenseNet<T>,
}

#[derive(Debug, Clone)]
pub struct CriticCache<T> {
    state: ForwardCache<T>,
    trunk: ForwardCache<T>,
    hidden: usize,
}

impl<T> CriticCache<T> {
    pub fn trunk_cache(&self) -> &ForwardCache<T> {
        &self.trunk
    }
}

/// Gradients for both parts of a [`CriticNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct CriticGrads<T> {
    pub state_layer: Gradients<T>,
    pub trunk: Gradients<T>,
}

impl<T: Scalar> CriticGrads<T> {
    pub fn scale(&mut self, k: T) {
        self.state_layer.scale(k);
        self.trunk.scale(k);
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut v = self.state_layer.flatten();
        v.extend(self.trunk.flatten());
        v
    }
}

/// Input gradients of the critic, split by input.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticInputGrads<T> {
    pub state: Array2<T>,
    pub action: Array2<T>,
}

impl<T: Scalar> CriticNet<T> {
    pub fn state_specs(hidden: usize) -> Vec<LayerSpec> {
        vec![LayerSpec::new(OBS_DIM, hidden, Activation::Relu)]
    }

    pub fn trunk_specs(hidden: usize) -> Vec<LayerSpec> {
        mlp_specs(&[hidden + ACTION_DIM, hidden, hidden, 1], Activation::Relu, Activation::Linear)
    }

    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self, NeuralError> {
        let state_layer = DenseNet::init(&Self::state_specs(cfg.hidden), 1.0 / (OBS_DIM as f64).sqrt(), rng)?;
        let trunk = DenseNet::init(&Self::trunk_specs(cfg.hidden), cfg.final_init, rng)?;
        Ok(Self { state_layer, trunk })
    }

    pub fn zeros(hidden: usize) -> Result<Self, NeuralError> {
        Ok(Self { state_layer: DenseNet::zeros(&Self::state_specs(hidden))?, trunk: DenseNet::zeros(&Self::trunk_specs(hidden))? })
    }

    pub fn from_parts(state_layer: DenseNet<T>, trunk: DenseNet<T>) -> Result<Self, NeuralError> {
        let h = state_layer.out_dim();
        if state_layer.in_dim() != OBS_DIM || trunk.in_dim() != h + ACTION_DIM || trunk.out_dim() != 1 {
            return Err(NeuralError::ShapeMismatch("critic parts do not fit the merge wiring".into()));
        }
        Ok(Self { state_layer, trunk })
    }

    pub fn hidden(&self) -> usize {
        self.state_layer.out_dim()
    }

    fn check_actions(&self, states: &ArrayView2<T>, actions: &ArrayView2<T>) -> Result<(), NeuralError> {
        if actions.ncols() != ACTION_DIM {
            return Err(NeuralError::InputDim { expected: ACTION_DIM, got: actions.ncols() });
        }
        if actions.nrows() != states.nrows() {
            return Err(NeuralError::ShapeMismatch("state and action batches differ in length".into()));
        }
        Ok(())
    }

    /// Q for each `(state, normalized action)` row pair; shape `N x 1`.
    pub fn predict(&self, states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Array2<T>, NeuralError> {
        self.check_actions(&states, &actions)?;
        let h = self.state_layer.predict(states)?;
        let merged = concatenate![Axis(1), h, actions];
        self.trunk.predict(merged.view())
    }

    pub fn forward(&self, states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<(Array2<T>, CriticCache<T>), NeuralError> {
        self.check_actions(&states, &actions)?;
        let (h, state) = self.state_layer.forward(states)?;
        let merged = concatenate![Axis(1), h, actions];
        let (q, trunk) = self.trunk.forward(merged.view())?;
        Ok((q, CriticCache { state, trunk, hidden: self.hidden() }))
    }

    /// Parameter and input gradients of `sum(q_grad * Q)`.
    pub fn backward(&self, cache: &CriticCache<T>, q_grad: ArrayView2<T>) -> Result<(CriticGrads<T>, CriticInputGrads<T>), NeuralError> {
        let (trunk, d_merged) = self.trunk.backward(&cache.trunk, q_grad)?;
        let h = cache.hidden;
        let (state_layer, d_state) = self.state_layer.backward(&cache.state, d_merged.slice(s![.., ..h]))?;
        let action = d_merged.slice(s![.., h..]).to_owned();
        Ok((CriticGrads { state_layer, trunk }, CriticInputGrads { state: d_state, action }))
    }

    /// dQ/d(normalized action) for each row; shape `N x 2`.
    pub fn action_gradients(&self, states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Array2<T>, NeuralError> {
        let (q, cache) = self.forward(states, actions)?;
        let ones = Array2::from_elem(q.raw_dim(), T::one());
        // Only the trunk is needed: the action enters after the state layer.
        let d_merged = self.trunk.backward_input(&cache.trunk, ones.view())?;
        Ok(d_merged.slice(s![.., cache.hidden..]).to_owned())
    }

    pub fn q_value(&self, obs: &Observation, action: Action, scale: &ActionScale) -> T {
        let a = scale.normalize(action);
        let actions = Array2::from_shape_fn((1, ACTION_DIM), |(_, j)| T::lit(a[j]));
        self.predict(obs_row::<T>(obs).view(), actions.view()).expect("critic input widths are fixed by construction")[[0, 0]]
    }

    /// dQ/d(lv / l_vmax, av / a_vmax) at one state-action pair.
    pub fn q_grad_action(&self, obs: &Observation, action: Action, scale: &ActionScale) -> [T; 2] {
        let a = scale.normalize(action);
        let actions = Array2::from_shape_fn((1, ACTION_DIM), |(_, j)| T::lit(a[j]));
        let g = self
            .action_gradients(obs_row::<T>(obs).view(), actions.view())
            .expect("critic input widths are fixed by construction");
        [g[[0, 0]], g[[0, 1]]]
    }

    pub fn soft_update_from(&mut self, source: &Self, tau: T) -> Result<(), NeuralError> {
        self.state_layer.soft_update_from(&source.state_layer, tau)?;
        self.trunk.soft_update_from(&source.trunk, tau)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T, NeuralError> {
        Ok(self.state_layer.max_abs_diff(&other.state_layer)?.max(self.trunk.max_abs_diff(&other.trunk)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scale() -> ActionScale {
        ActionScale::from(&EnvConfig::default())
    }

    fn obs(seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = [0.0; OBS_DIM];
        for x in v.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        Observation(v)
    }

    #[test]
    fn zero_head_gives_mid_range_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut actor = ActorNet::<f64>::new(&NetworkConfig { hidden: 8, final_init: 3e-3 }, scale(), &mut rng).unwrap();
        let last = actor.net.layers_mut().last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        let a = actor.act(&obs(1));
        assert_eq!(a, Action::new(0.5 * scale().l_vmax, 0.0));
    }

    #[test]
    fn actions_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut actor = ActorNet::<f64>::new(&NetworkConfig { hidden: 8, final_init: 3e-3 }, scale(), &mut rng).unwrap();
        for l in actor.net.layers_mut() {
            l.weight.mapv_inplace(|w| w * 300.0);
        }
        let cfg = EnvConfig::default();
        for k in 0..200 {
            let a = actor.act(&obs(k));
            assert!(a.is_within(&cfg), "{a:?}");
        }
    }

    #[test]
    fn zero_critic() {
        let critic = CriticNet::<f64>::zeros(8).unwrap();
        assert_eq!(critic.q_value(&obs(2), Action::new(0.1, 0.3), &scale()), 0.0);
        assert_eq!(critic.q_grad_action(&obs(2), Action::new(0.1, 0.3), &scale()), [0.0, 0.0]);
    }

    #[test]
    fn critic_ignoring_action_has_zero_action_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut critic = CriticNet::<f64>::new(&NetworkConfig { hidden: 8, final_init: 0.5 }, &mut rng).unwrap();
        let h = critic.hidden();
        let first = &mut critic.trunk.layers_mut()[0];
        first.weight.slice_mut(s![.., h..]).fill(0.0);
        assert_eq!(critic.q_grad_action(&obs(3), Action::new(0.2, -1.0), &scale()), [0.0, 0.0]);
    }

    #[test]
    fn action_changes_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let critic = CriticNet::<f64>::new(&NetworkConfig { hidden: 16, final_init: 0.5 }, &mut rng).unwrap();
        let o = obs(5);
        let q1 = critic.q_value(&o, Action::new(0.05, -1.0), &scale());
        let q2 = critic.q_value(&o, Action::new(0.25, 1.0), &scale());
        assert!((q1 - q2).abs() > 0.0);
    }

    #[test]
    fn batch_shape_errors() {
        let critic = CriticNet::<f64>::zeros(4).unwrap();
        let s = Array2::<f64>::zeros((3, OBS_DIM));
        assert!(critic.predict(s.view(), Array2::zeros((2, 2)).view()).is_err());
        assert!(critic.predict(s.view(), Array2::zeros((3, 3)).view()).is_err());
    }
}
