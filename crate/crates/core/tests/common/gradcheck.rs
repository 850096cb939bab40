//! Analytic gradients against five-point finite differences.

use navlearn::actor_critic::{ActionScale, ActorNet, CriticNet, NetworkConfig};
use navlearn::neural::{mlp_specs, Activation, DenseNet};
use navlearn::{Action, Observation, OBS_DIM};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-6;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Five-point central differences of `f` over each coordinate of `x`.
fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut at = |probe: &mut Vec<f64>, i: usize, v: f64| {
        probe[i] = v;
        f(probe)
    };
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            let p2 = at(&mut probe, i, orig + 2.0 * H);
            let p1 = at(&mut probe, i, orig + H);
            let m1 = at(&mut probe, i, orig - H);
            let m2 = at(&mut probe, i, orig - 2.0 * H);
            probe[i] = orig;
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * H)
        })
        .collect()
}

/// Smallest |pre-activation| over the relu units of a forward pass.
fn relu_margin(net: &DenseNet<f64>, x: &Array2<f64>) -> (f64, Array2<f64>) {
    let mut a = x.clone();
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        let z = a.dot(&layer.weight.t()) + &layer.bias;
        if layer.spec.activation == Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        }
        a = z.mapv(|v| layer.spec.activation.apply(v));
    }
    (margin, a)
}

/// Keeps finite differences from stepping across a relu kink.
const KINK_MARGIN: f64 = 1e-2;

fn weighted_sum(a: &Array2<f64>, g: &Array2<f64>) -> f64 {
    (a * g).sum()
}

fn random_observation(rng: &mut ChaCha8Rng) -> Observation {
    let mut v = [0.0; OBS_DIM];
    for (i, x) in v.iter_mut().enumerate() {
        *x = match i {
            25 | 27 => rng.random_range(-1.0..1.0),
            _ => rng.random_range(0.01..1.0),
        };
    }
    Observation(v)
}

/// Dense stacks of random depth, width and activations.
pub fn check_dense_nets(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = [Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Linear];
    let mut worst = 0.0f64;
    for _ in 0..n {
        let depth = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=16)).collect();
        let hidden = acts[rng.random_range(0..4)];
        let output = acts[rng.random_range(0..4)];
        let net = DenseNet::<f64>::init(&mlp_specs(&dims, hidden, output), 0.5, &mut rng).unwrap();
        let batch = rng.random_range(1..=4);
        let x = loop {
            let x = random_matrix(batch, dims[0], &mut rng);
            if relu_margin(&net, &x).0 > KINK_MARGIN {
                break x;
            }
        };
        let g = random_matrix(batch, dims[depth], &mut rng);

        let (_, cache) = net.forward(x.view()).unwrap();
        let (grads, dx) = net.backward(&cache, g.view()).unwrap();

        let params = net.flat_params();
        let mut probe = net.clone();
        let fd = numeric_grad(&params, |p| {
            probe.set_flat_params(p).unwrap();
            weighted_sum(&probe.predict(x.view()).unwrap(), &g)
        });
        worst = worst.max(rel_err(&grads.flatten(), &fd));

        let xs: Vec<f64> = x.iter().copied().collect();
        let fd_x = numeric_grad(&xs, |v| {
            let xi = Array2::from_shape_vec(x.raw_dim(), v.to_vec()).unwrap();
            weighted_sum(&net.predict(xi.view()).unwrap(), &g)
        });
        worst = worst.max(rel_err(&dx.iter().copied().collect::<Vec<_>>(), &fd_x));
    }
    worst
}

pub fn check_actor_critic(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = NetworkConfig { hidden: 16, final_init: 0.3 };
    let scale = ActionScale { l_vmax: 0.26, a_vmax: 1.82 };
    let mut worst = 0.0f64;
    for _ in 0..n {
        let actor = ActorNet::<f64>::new(&cfg, scale, &mut rng).unwrap();
        let critic = CriticNet::<f64>::new(&cfg, &mut rng).unwrap();
        let batch = rng.random_range(1..=3);
        let (s, a) = loop {
            let s = random_matrix(batch, OBS_DIM, &mut rng).mapv(f64::abs);
            let a = random_matrix(batch, 2, &mut rng);
            let (m_actor, _) = relu_margin(&actor.net, &s);
            let (m_state, h) = relu_margin(&critic.state_layer, &s);
            let merged = ndarray::concatenate![ndarray::Axis(1), h, a];
            let (m_trunk, _) = relu_margin(&critic.trunk, &merged);
            if m_actor.min(m_state).min(m_trunk) > KINK_MARGIN {
                break (s, a);
            }
        };

        let g = random_matrix(batch, 2, &mut rng);
        let (_, cache) = actor.forward(s.view()).unwrap();
        let grads = actor.backward(&cache, g.view()).unwrap();
        let mut probe = actor.clone();
        let fd = numeric_grad(&actor.net.flat_params(), |p| {
            probe.net.set_flat_params(p).unwrap();
            weighted_sum(&probe.normalized_actions(s.view()).unwrap(), &g)
        });
        worst = worst.max(rel_err(&grads.flatten(), &fd));

        let gq = random_matrix(batch, 1, &mut rng);
        let (_, cache) = critic.forward(s.view(), a.view()).unwrap();
        let (grads, inputs) = critic.backward(&cache, gq.view()).unwrap();
        let mut params = critic.state_layer.flat_params();
        let split = params.len();
        params.extend(critic.trunk.flat_params());
        let mut probe = critic.clone();
        let fd = numeric_grad(&params, |p| {
            probe.state_layer.set_flat_params(&p[..split]).unwrap();
            probe.trunk.set_flat_params(&p[split..]).unwrap();
            weighted_sum(&probe.predict(s.view(), a.view()).unwrap(), &gq)
        });
        worst = worst.max(rel_err(&grads.flatten(), &fd));

        let av: Vec<f64> = a.iter().copied().collect();
        let fd_a = numeric_grad(&av, |v| {
            let ai = Array2::from_shape_vec(a.raw_dim(), v.to_vec()).unwrap();
            weighted_sum(&critic.predict(s.view(), ai.view()).unwrap(), &gq)
        });
        worst = worst.max(rel_err(&inputs.action.iter().copied().collect::<Vec<_>>(), &fd_a));

        let (obs, act) = loop {
            let obs = random_observation(&mut rng);
            let act = Action::new(rng.random_range(0.0..0.26), rng.random_range(-1.82..1.82));
            let row = Array2::from_shape_vec((1, OBS_DIM), obs.0.to_vec()).unwrap();
            let n = scale.normalize(act);
            let (m_state, h) = relu_margin(&critic.state_layer, &row);
            let merged = ndarray::concatenate![ndarray::Axis(1), h, Array2::from_shape_vec((1, 2), n.to_vec()).unwrap()];
            if m_state.min(relu_margin(&critic.trunk, &merged).0) > KINK_MARGIN {
                break (obs, act);
            }
        };
        let analytic = critic.q_grad_action(&obs, act, &scale);
        let n = scale.normalize(act);
        let fd_q = numeric_grad(&n, |v| critic.q_value(&obs, scale.to_action([v[0], v[1]]), &scale));
        worst = worst.max(rel_err(&analytic, &fd_q));
    }
    worst
}

