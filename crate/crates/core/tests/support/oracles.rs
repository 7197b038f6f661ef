//! Independent reference computations written directly from the formulas,
//! with plain scalar loops and no calls into the code paths they check.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vipguard_core::marl::{actor_objective_grad, critic_input, Algorithm, Batch, CriticLayout, CriticObs};
use vipguard_core::nn::{Activation, GradBundle, Mlp};
use vipguard_core::threat::bodyguard_reward;
use vipguard_core::{ThreatParams, Vec2};

use super::gen::threat_scene_from;

// ---------------------------------------------------------------- reward ---

/// Bodyguard reward from raw coordinates:
/// `-1 + prod_b (1 - exp(-gain * |vip - b| / scale)) + band + utterance`.
pub fn reward_oracle(
    vip: (f64, f64),
    guard: (f64, f64),
    bystanders: &[(f64, f64)],
    utterance: &[f64],
    p: &ThreatParams,
) -> f64 {
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut product = 1.0;
    for &b in bystanders {
        let level = (-(p.threat_gain * dist(vip, b)) / p.threat_scale).exp();
        product *= 1.0 - level;
    }
    let g = dist(vip, guard);
    let band = if g >= p.min_distance && g <= p.safe_distance { 0.0 } else { -1.0 };
    let mut spoke = false;
    for &u in utterance {
        if u.abs() > p.utterance_threshold {
            spoke = true;
        }
    }
    let speech = if spoke { p.utterance_penalty } else { 0.0 };
    -1.0 + product + band + speech
}

/// `1 - prod (1 - TL_b)` from raw threat levels.
pub fn instantaneous_oracle(levels: &[f64]) -> f64 {
    let mut product = 1.0;
    for &l in levels {
        product *= 1.0 - l;
    }
    1.0 - product
}

pub struct RewardSweep {
    pub states: usize,
    pub max_abs_diff: f64,
    /// States evaluated per bystander count 0..=10.
    pub per_k: [usize; 11],
}

/// Compares `bodyguard_reward(..).total` with [`reward_oracle`] on `states`
/// seeded random scenes cycling through 0..=10 bystanders.
pub fn reward_sweep(states: usize, seed: u64) -> RewardSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_diff: f64 = 0.0;
    let mut per_k = [0; 11];
    for s in 0..states {
        let k = s % 11;
        per_k[k] += 1;
        let mut point = || (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let vip = point();
        let guard = point();
        let bystanders: Vec<(f64, f64)> = (0..k).map(|_| point()).collect();
        let c = rng.random_range(0..=3usize);
        let utterance: Vec<f64> = (0..c)
            .map(|_| match rng.random_range(0..3) {
                0 => 0.0,
                1 => rng.random_range(-1e-6..1e-6),
                _ => rng.random_range(-1.0..1.0),
            })
            .collect();
        let params = ThreatParams {
            threat_gain: rng.random_range(0.5..2.0),
            threat_scale: rng.random_range(0.1..1.0),
            ..ThreatParams::default()
        };
        let v = |p: (f64, f64)| Vec2::new(p.0, p.1);
        let pts: Vec<Vec2> = bystanders.iter().map(|&b| v(b)).collect();
        let scene = threat_scene_from(v(vip), v(guard), &pts, utterance.clone(), params.clone());
        let got = bodyguard_reward(&scene.state, 1, &scene.action, &scene.roles, &scene.params)
            .expect("valid bodyguard")
            .total;
        let want = reward_oracle(vip, guard, &bystanders, &utterance, &params);
        max_abs_diff = max_abs_diff.max((got - want).abs());
    }
    RewardSweep {
        states,
        max_abs_diff,
        per_k,
    }
}

// --------------------------------------------------------------- physics ---

/// Contact magnitude for a gap `g` (negative when overlapping):
/// `contact_force * margin * ln(1 + exp(-g / margin))`.
pub fn contact_magnitude_oracle(gap: f64, margin: f64, contact_force: f64) -> f64 {
    contact_force * margin * (1.0 + (-gap / margin).exp()).ln()
}

// ------------------------------------------------------------- gradients ---

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale; central
/// differences cannot resolve relative error below roughly `1e-10 / |g|`.
pub const FD_SCALE_FLOOR: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_SCALE_FLOOR)
}

/// Parameter gradients flattened in `Mlp::params` order.
pub fn flat_param_grads(g: &GradBundle) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn nudged(net: &Mlp, coord: usize, delta: f64) -> Mlp {
    let mut n = net.clone();
    *n.params_mut().nth(coord).expect("coordinate in range") += delta;
    n
}

/// Central difference of `f` with respect to parameter `coord` of `net`.
pub fn central_difference(net: &Mlp, coord: usize, f: impl Fn(&Mlp) -> f64) -> f64 {
    (f(&nudged(net, coord, FD_STEP)) - f(&nudged(net, coord, -FD_STEP))) / (2.0 * FD_STEP)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

fn random_sizes(rng: &mut ChaCha8Rng, input: usize, output: usize) -> Vec<usize> {
    let hidden = rng.random_range(1..=3);
    std::iter::once(input)
        .chain((0..hidden).map(|_| rng.random_range(1..=8)))
        .chain(std::iter::once(output))
        .collect()
}

fn pick_coords(rng: &mut ChaCha8Rng, n_params: usize, want: usize) -> Vec<usize> {
    (0..want).map(|_| rng.random_range(0..n_params)).collect()
}

#[derive(Debug, Default)]
pub struct GradientSweep {
    pub architectures: usize,
    pub coordinates: usize,
    pub max_relative_error: f64,
}

impl GradientSweep {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.coordinates += 1;
        self.max_relative_error = self.max_relative_error.max(relative_error(analytic, numeric));
    }

    pub fn merge(&mut self, other: GradientSweep) {
        self.architectures += other.architectures;
        self.coordinates += other.coordinates;
        self.max_relative_error = self.max_relative_error.max(other.max_relative_error);
    }
}

/// Parameter and input gradients of `L = sum(dy * net(x))` for random nets.
pub fn mlp_gradient_sweep(architectures: usize, coords_per_arch: usize, seed: u64) -> GradientSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = GradientSweep::default();
    for _ in 0..architectures {
        let input = rng.random_range(1..=6);
        let output = rng.random_range(1..=3);
        let sizes = random_sizes(&mut rng, input, output);
        let act = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Identity };
        let net = Mlp::init(&sizes, act, rng.random()).expect("valid sizes");
        let batch = rng.random_range(1..=4);
        let x = random_matrix(&mut rng, batch, input, 1.5);
        let dy = random_matrix(&mut rng, batch, output, 1.0);
        let loss = |n: &Mlp, x: &Array2<f64>| {
            let (y, _) = n.forward_batch(x.view()).expect("shapes match");
            (&y * &dy).sum()
        };
        let (_, cache) = net.forward_batch(x.view()).expect("shapes match");
        let grads = net.backward(&cache, dy.view()).expect("cache matches");
        let flat = flat_param_grads(&grads);
        for coord in pick_coords(&mut rng, net.param_count(), coords_per_arch) {
            let numeric = central_difference(&net, coord, |n| loss(n, &x));
            sweep.record(flat[coord], numeric);
        }
        // Input gradient on one coordinate.
        let (r, c) = (rng.random_range(0..batch), rng.random_range(0..input));
        let mut plus = x.clone();
        plus[[r, c]] += FD_STEP;
        let mut minus = x.clone();
        minus[[r, c]] -= FD_STEP;
        let numeric = (loss(&net, &plus) - loss(&net, &minus)) / (2.0 * FD_STEP);
        sweep.record(grads.input[[r, c]], numeric);
        sweep.architectures += 1;
    }
    sweep
}

/// Gradient of the critic regression loss `mean (Q(x) - y)^2` with fixed targets.
pub fn critic_loss_gradient_sweep(architectures: usize, coords_per_arch: usize, seed: u64) -> GradientSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = GradientSweep::default();
    for _ in 0..architectures {
        let input = rng.random_range(2..=10);
        let sizes = random_sizes(&mut rng, input, 1);
        let critic = Mlp::init(&sizes, Activation::Identity, rng.random()).expect("valid sizes");
        let b = rng.random_range(1..=6);
        let x = random_matrix(&mut rng, b, input, 1.0);
        let y: Vec<f64> = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        let loss = |n: &Mlp| {
            let q = n.predict_batch(x.view()).expect("shapes match");
            (0..b).map(|r| (q[[r, 0]] - y[r]).powi(2)).sum::<f64>() / b as f64
        };
        let (q, cache) = critic.forward_batch(x.view()).expect("shapes match");
        let dq = Array2::from_shape_fn((b, 1), |(r, _)| 2.0 * (q[[r, 0]] - y[r]) / b as f64);
        let flat = flat_param_grads(&critic.backward(&cache, dq.view()).expect("cache matches"));
        for coord in pick_coords(&mut rng, critic.param_count(), coords_per_arch) {
            sweep.record(flat[coord], central_difference(&critic, coord, loss));
        }
        sweep.architectures += 1;
    }
    sweep
}

pub fn random_batch(rng: &mut ChaCha8Rng, layout: &CriticLayout, b: usize) -> Batch {
    let n = layout.n_agents;
    Batch {
        observations: (0..n).map(|_| random_matrix(rng, b, layout.obs_dim, 1.0)).collect(),
        actions: (0..n).map(|_| random_matrix(rng, b, layout.act_dim, 1.0)).collect(),
        rewards: random_matrix(rng, b, n, 1.0),
        next_observations: (0..n).map(|_| random_matrix(rng, b, layout.obs_dim, 1.0)).collect(),
        done: Array1::from_shape_fn(b, |_| if rng.random_bool(0.2) { 1.0 } else { 0.0 }),
    }
}

/// Scalar re-evaluation of an MLP row: hidden layers through tanh, the last
/// layer left as its raw pre-activation.
fn scalar_preactivation(net: &Mlp, row: &[f64]) -> Vec<f64> {
    let layers = net.layers();
    let mut x = row.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let (outs, ins) = layer.weight.dim();
        let mut next = vec![0.0; outs];
        for (o, v) in next.iter_mut().enumerate() {
            *v = layer.bias[o] + (0..ins).map(|k| layer.weight[[o, k]] * x[k]).sum::<f64>();
            if l + 1 < layers.len() {
                *v = v.tanh();
            }
        }
        x = next;
    }
    x
}

/// Gradient of `J(theta) = mean_b Q(.., pi_theta(s_i), ..) - penalty *
/// mean(z^2)` through a random critic, across random layouts (MADDPG
/// all/own, DDPG) and random pre-activation penalties. `J` is re-evaluated
/// row by row with scalar loops.
pub fn actor_chain_gradient_sweep(architectures: usize, coords_per_arch: usize, seed: u64) -> GradientSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = GradientSweep::default();
    for _ in 0..architectures {
        let layout = CriticLayout {
            algorithm: if rng.random_bool(0.5) { Algorithm::Maddpg } else { Algorithm::Ddpg },
            critic_obs: if rng.random_bool(0.5) { CriticObs::All } else { CriticObs::Own },
            n_agents: rng.random_range(1..=3),
            obs_dim: rng.random_range(1..=5),
            act_dim: rng.random_range(1..=3),
        };
        let i = rng.random_range(0..layout.n_agents);
        let penalty = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.5) };
        let actor = Mlp::init(&random_sizes(&mut rng, layout.obs_dim, layout.act_dim), Activation::Tanh, rng.random())
            .expect("valid sizes");
        let critic = Mlp::init(&random_sizes(&mut rng, layout.input_dim(), 1), Activation::Identity, rng.random())
            .expect("valid sizes");
        let b = rng.random_range(1..=5);
        let batch = random_batch(&mut rng, &layout, b);
        let objective = |a: &Mlp| {
            let (mut q_sum, mut z_sq) = (0.0, 0.0);
            for r in 0..b {
                let z = scalar_preactivation(a, batch.observations[i].row(r).as_slice().expect("contiguous"));
                z_sq += z.iter().map(|v| v * v).sum::<f64>();
                let own: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
                let obs: Vec<Vec<f64>> = batch.observations.iter().map(|m| m.row(r).to_vec()).collect();
                let mut acts: Vec<Vec<f64>> = batch.actions.iter().map(|m| m.row(r).to_vec()).collect();
                acts[i] = own;
                let obs_refs: Vec<&[f64]> = obs.iter().map(|v| v.as_slice()).collect();
                let act_refs: Vec<&[f64]> = acts.iter().map(|v| v.as_slice()).collect();
                let input = critic_input(&layout, i, &obs_refs, &act_refs).expect("shapes match");
                q_sum += scalar_preactivation(&critic, &input)[0];
            }
            q_sum / b as f64 - penalty * z_sq / (b * layout.act_dim) as f64
        };
        let (_, grads) = actor_objective_grad(&actor, &critic, &layout, i, &batch, penalty).expect("shapes match");
        let flat = flat_param_grads(&grads);
        for coord in pick_coords(&mut rng, actor.param_count(), coords_per_arch) {
            sweep.record(flat[coord], central_difference(&actor, coord, objective));
        }
        sweep.architectures += 1;
    }
    sweep
}
