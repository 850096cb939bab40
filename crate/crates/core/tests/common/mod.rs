//! Independent oracles shared by the integration suites.
//!
//! Nothing here calls into the code paths it checks: shapes are measured with
//! their own signed-distance functions and rewards are re-derived from the
//! case table.

#![allow(dead_code)]

pub mod gradcheck;

use navlearn::geometry::{Aabb, Point, Shape, WorldSpec};
use navlearn::{compute_reward, Action, EnvConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn pt(x: f64, y: f64) -> Point<f64> {
    Point::new(x, y)
}

/// Random arena with one to six obstacles of every kind.
pub fn random_scene<R: Rng>(rng: &mut R) -> WorldSpec<f64> {
    let half = rng.random_range(1.5..4.0);
    let bounds = Aabb::from_coords(-half, -half, half, half);
    let n = rng.random_range(1..=6);
    let mut obstacles = Vec::with_capacity(n);
    for _ in 0..n {
        let c = pt(rng.random_range(-half..half), rng.random_range(-half..half));
        let shape = match rng.random_range(0..3) {
            0 => Shape::circle(c, rng.random_range(0.05..0.8)),
            1 => {
                let (w, h) = (rng.random_range(0.05..1.2), rng.random_range(0.05..1.2));
                Shape::rect(c, pt(c.x + w, c.y + h))
            }
            _ => {
                let len = rng.random_range(0.1..2.0);
                let ang: f64 = rng.random_range(-3.2..3.2);
                Shape::segment(c, pt(c.x + len * ang.cos(), c.y + len * ang.sin()))
            }
        };
        obstacles.push(shape.unwrap());
    }
    WorldSpec::new("scene", bounds, bounds, bounds, obstacles).unwrap()
}

/// Distance from `p` to the shape surface, negative inside solids.
pub fn signed_distance(shape: &Shape<f64>, p: Point<f64>) -> f64 {
    match *shape {
        Shape::Circle { center, radius } => ((p.x - center.x).powi(2) + (p.y - center.y).powi(2)).sqrt() - radius,
        Shape::Rect { min, max } => {
            let cx = (min.x + max.x) / 2.0;
            let cy = (min.y + max.y) / 2.0;
            let dx = (p.x - cx).abs() - (max.x - min.x) / 2.0;
            let dy = (p.y - cy).abs() - (max.y - min.y) / 2.0;
            let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
            outside + dx.max(dy).min(0.0)
        }
        Shape::Segment { a, b } => {
            let (vx, vy) = (b.x - a.x, b.y - a.y);
            let t = (((p.x - a.x) * vx + (p.y - a.y) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
            ((p.x - a.x - t * vx).powi(2) + (p.y - a.y - t * vy).powi(2)).sqrt()
        }
    }
}

/// Signed distance to the nearest surface of the whole scene; walls bound it from inside.
pub fn scene_distance(world: &WorldSpec<f64>, p: Point<f64>) -> f64 {
    let b = &world.bounds;
    let wall = (p.x - b.min.x).min(b.max.x - p.x).min(p.y - b.min.y).min(b.max.y - p.y);
    world.obstacles.iter().fold(wall, |d, s| d.min(signed_distance(s, p)))
}

/// Ray marching at a fixed step. A sample counts as a hit when it lies inside a
/// solid, beyond a wall, or within half a step of a thin segment.
pub fn march(world: &WorldSpec<f64>, origin: Point<f64>, angle: f64, max_range: f64, step: f64) -> f64 {
    let (dx, dy) = (angle.cos(), angle.sin());
    let n = (max_range / step).ceil() as usize;
    for k in 1..=n {
        let t = k as f64 * step;
        let p = pt(origin.x + t * dx, origin.y + t * dy);
        let b = &world.bounds;
        if p.x <= b.min.x || p.x >= b.max.x || p.y <= b.min.y || p.y >= b.max.y {
            return t.min(max_range);
        }
        let hit = world.obstacles.iter().any(|s| match s {
            Shape::Segment { .. } => signed_distance(s, p) <= step / 2.0,
            _ => signed_distance(s, p) <= 0.0,
        });
        if hit {
            return t.min(max_range);
        }
    }
    max_range
}

/// Smallest hit distance over `n` evenly spaced rays.
pub fn sweep_clearance(world: &WorldSpec<f64>, p: Point<f64>, n: usize) -> f64 {
    (0..n)
        .map(|i| world.raycast(p, std::f64::consts::TAU * i as f64 / n as f64, 1e9).unwrap())
        .fold(f64::INFINITY, f64::min)
}

/// Test-side reading of the reward case table, term by term.
pub fn reward_table(d_prev: f64, d_now: f64, d_obs: f64, lv: f64, av: f64, c: &EnvConfig) -> [f64; 4] {
    let arrived = d_now < c.d_gmin;
    let goal_term = match arrived {
        true => c.r_arrival,
        false => (d_prev - d_now) * c.c_g,
    };
    let obstacle_term = match (d_obs < c.d_romin, d_obs < 2.0 * c.d_romin) {
        (true, _) => c.r_collision * 2.0,
        (false, true) => c.r_collision,
        (false, false) => 0.0,
    };
    let turn_term = if av.abs() > c.a_vmax.abs() * 0.8 { c.r_ap } else { 0.0 };
    let creep_term = if lv < c.l_vmin { c.r_lp } else { 0.0 };
    [goal_term, obstacle_term, turn_term, creep_term]
}

pub fn action(lv: f64, av: f64) -> Action {
    Action::new(lv, av)
}

/// Draws either a threshold value, a value one ulp away from it, or a uniform value.
fn near(rng: &mut ChaCha8Rng, edges: &[f64], lo: f64, hi: f64) -> f64 {
    match rng.random_range(0..4) {
        0 => edges[rng.random_range(0..edges.len())],
        1 => {
            let e = edges[rng.random_range(0..edges.len())];
            if rng.random_bool(0.5) { e.next_up() } else { e.next_down() }
        }
        _ => rng.random_range(lo..hi),
    }
}

pub fn reward_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for i in 0..n {
        let c = if i % 2 == 0 {
            EnvConfig::default()
        } else {
            EnvConfig { r_collision: -0.2, c_g: 5.0, r_arrival: 30.0, ..EnvConfig::default() }
        };
        let d_prev = rng.random_range(0.0..6.0);
        let d_now = near(&mut rng, &[c.d_gmin], 0.0, 6.0);
        let d_obs = near(&mut rng, &[c.d_romin, 2.0 * c.d_romin], 0.0, 3.5);
        let lv = near(&mut rng, &[c.l_vmin, 0.0, c.l_vmax], 0.0, c.l_vmax);
        let av = near(&mut rng, &[0.8 * c.a_vmax, -0.8 * c.a_vmax], -c.a_vmax, c.a_vmax);
        let (total, parts) = compute_reward(d_prev, d_now, d_obs, Action::new(lv, av), &c);
        let expect = reward_table(d_prev, d_now, d_obs, lv, av, &c);
        let got = [parts.goal, parts.collision, parts.angular, parts.linear];
        let sum = expect[0] + expect[1] + expect[2] + expect[3];
        if got.map(f64::to_bits) != expect.map(f64::to_bits) || total.to_bits() != sum.to_bits() {
            bad += 1;
        }
    }
    bad
}

pub mod per {
    use navlearn::replay::{compute_priority, importance_weight, PerConfig, ReplayBuffer};
    use navlearn::{Action, Observation, Transition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 99% chi-square quantiles for 1, 7 and 63 degrees of freedom.
    pub const CHI2_99: [(usize, f64); 3] = [(2, 6.634_896_601), (8, 18.475_306_907), (64, 92.010_023_614)];

    pub fn tagged(tag: f64) -> Transition {
        let mut s = Observation::default();
        s.0[0] = tag;
        Transition { s, a: Action::ZERO, r: tag, s_next: s, done: false, demo: false }
    }

    /// Chi-square statistic of `draws` stratified samples against `p^alpha / sum`.
    pub fn chi_square(priorities: &[f64], draws: usize, seed: u64) -> f64 {
        let cfg = PerConfig { capacity: priorities.len() + 1, lambda: 0.0, ..PerConfig::default() };
        let mut buf = ReplayBuffer::new(cfg).unwrap();
        for i in 0..priorities.len() {
            buf.push(tagged(i as f64), false).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = priorities.len();
        let seed_batch = buf.sample(n, 0.4, &mut rng).unwrap();
        let mut keys = seed_batch.keys.clone();
        keys.sort_by_key(|k| k.index);
        keys.dedup_by_key(|k| k.index);
        assert_eq!(keys.len(), n, "stratified first batch touches every slot");
        let tds: Vec<f64> = keys.iter().map(|k| (priorities[k.index] - cfg.eps).sqrt()).collect();
        buf.update_priorities(&keys, &tds, &vec![[0.0, 0.0]; n]).unwrap();

        let masses: Vec<f64> = priorities.iter().map(|p| p.powf(cfg.alpha)).collect();
        let total: f64 = masses.iter().sum();
        let mut counts = vec![0usize; n];
        let batches = draws / n;
        for _ in 0..batches {
            for k in buf.sample(n, 0.4, &mut rng).unwrap().keys {
                counts[k.index] += 1;
            }
        }
        let m = (batches * n) as f64;
        counts.iter().zip(&masses).map(|(&c, &w)| {
            let e = m * w / total;
            (c as f64 - e).powi(2) / e
        }).sum()
    }

    /// Largest relative gap between the buffer's weights and `(1/(N P))^beta`.
    pub fn weight_formula_gap(trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let p: f64 = rng.random_range(1e-6..1.0);
            let n: usize = rng.random_range(1..=512);
            let beta: f64 = rng.random_range(0.0..1.0);
            let direct = (1.0 / (n as f64 * p)).powf(beta);
            worst = worst.max((importance_weight(p, n, beta) - direct).abs() / direct);
        }
        worst
    }

    /// Runs `ops` mixed pushes, samples and updates over a small buffer with
    /// pinned demonstrations; returns the number of demos that changed.
    pub fn demo_churn(ops: usize, seed: u64) -> usize {
        let cfg = PerConfig { capacity: 2_000, rebuild_interval: 5_000, ..PerConfig::default() };
        let mut buf = ReplayBuffer::new(cfg).unwrap();
        let demos: Vec<Transition> = (0..500).map(|i| tagged(-1.0 - i as f64)).collect();
        for d in &demos {
            buf.push(*d, true).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut done = 0;
        let mut tag = 0.0;
        while done < ops {
            match rng.random_range(0..4) {
                0 | 1 => {
                    tag += 1.0;
                    buf.push(tagged(tag), false).unwrap();
                    done += 1;
                }
                _ => {
                    let b = buf.sample(32, 0.7, &mut rng).unwrap();
                    let tds: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let grads: Vec<[f64; 2]> = (0..b.len()).map(|_| [rng.random_range(-1.0..1.0), 0.0]).collect();
                    buf.update_priorities(&b.keys, &tds, &grads).unwrap();
                    done += 2;
                }
            }
        }
        let mut changed = 0;
        for (i, d) in demos.iter().enumerate() {
            let mut expect = *d;
            expect.demo = true;
            let floor = compute_priority(0.0, [0.0, 0.0], true, &cfg).unwrap();
            if buf.get(i) != Some(&expect) || buf.priority(i).is_none_or(|p| p < floor) {
                changed += 1;
            }
        }
        changed + buf.demo_count().abs_diff(demos.len())
    }
}

pub mod learning {
    use navlearn::actor_critic::NetworkConfig;
    use navlearn::agent::{AgentConfig, DdpgAgent};
    use navlearn::replay::SampledBatch;
    use navlearn::{Action, EnvConfig, Observation, Transition, OBS_DIM};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_transition(rng: &mut ChaCha8Rng, done: bool) -> Transition {
        let mut obs = || {
            let mut v = [0.0; OBS_DIM];
            for (i, x) in v.iter_mut().enumerate() {
                *x = if i == 25 || i == 27 { rng.random_range(-1.0..1.0) } else { rng.random_range(0.05..1.0) };
            }
            Observation(v)
        };
        let (s, s_next) = (obs(), obs());
        let a = Action::new(rng.random_range(0.0..0.26), rng.random_range(-1.82..1.82));
        Transition { s, a, r: rng.random_range(-1.0..1.0), s_next, done, demo: false }
    }

    fn config(hidden: usize, actor_lr: f64, critic_lr: f64) -> AgentConfig {
        AgentConfig { actor_lr, critic_lr, network: NetworkConfig { hidden, final_init: 3e-3 }, ..AgentConfig::default() }
    }

    /// Train steps on one repeated terminal transition until its squared TD
    /// error drops below `target`; `None` if it never does within `limit`.
    pub fn overfit_steps(seed: u64, limit: usize, target: f64) -> Option<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut agent = DdpgAgent::new(config(64, 1e-4, 1e-3), &EnvConfig::default(), &mut rng).unwrap();
        let batch = SampledBatch::uniform(vec![random_transition(&mut rng, true)]);
        (1..=limit).find(|_| {
            let td = agent.train_step(&batch).unwrap().td_errors[0];
            td * td < target
        })
    }

    fn mean_q(agent: &DdpgAgent, states: &Array2<f64>, actions: &Array2<f64>) -> f64 {
        agent.critic.predict(states.view(), actions.view()).unwrap().mean().unwrap()
    }

    /// Counts trials in which one actor update raises the mean Q of the
    /// policy's actions under the critic that produced the gradient.
    pub fn ascent_successes(trials: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = EnvConfig::default();
        (0..trials)
            .filter(|_| {
                let mut agent = DdpgAgent::new(config(16, 1e-6, 1e-3), &env, &mut rng).unwrap();
                let ts: Vec<Transition> = (0..16).map(|_| random_transition(&mut rng, false)).collect();
                let states = Array2::from_shape_fn((ts.len(), OBS_DIM), |(i, j)| ts[i].s.0[j]);
                let before = agent.actor.clone();
                agent.train_step(&SampledBatch::uniform(ts)).unwrap();
                let old = before.normalized_actions(states.view()).unwrap();
                let new = agent.actor.normalized_actions(states.view()).unwrap();
                mean_q(&agent, &states, &new) > mean_q(&agent, &states, &old)
            })
            .count()
    }
}

pub mod runs {
    use navlearn::actor_critic::NetworkConfig;
    use navlearn::trainer::{pilot_demos, train_with, Mode, PilotConfig, RunConfig, RunOutputs};
    use navlearn::world_file::builtin_world;

    /// A short run at width 16 that still exercises evaluation and replay.
    pub fn short_config(mode: Mode, seed: u64) -> RunConfig {
        let mut cfg = RunConfig {
            world: "env1_desk".into(),
            mode,
            seed,
            total_steps: 600,
            eval_interval: 300,
            eval_missions: 2,
            min_demos: 200,
            ..RunConfig::default()
        };
        cfg.agent.network = NetworkConfig { hidden: 16, final_init: 3e-3 };
        cfg.agent.batch_size = 16;
        cfg.env.placement_margin = 0.2;
        cfg
    }

    /// Metrics bytes of one short run.
    pub fn metrics_bytes(cfg: &RunConfig) -> Vec<u8> {
        let world = builtin_world::<f64>(&cfg.world).unwrap();
        let demos = match cfg.mode {
            Mode::Proposed => pilot_demos(&world, &cfg.env, 200, 9, &PilotConfig::default()).unwrap(),
            Mode::BaselineDdpg => Vec::new(),
        };
        let mut out = Vec::new();
        train_with(cfg, world, demos, &RunOutputs::default(), Some(&mut out)).unwrap();
        out
    }
}
