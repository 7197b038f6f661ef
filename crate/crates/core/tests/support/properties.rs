//! Invariants of the simulator, the reward, the networks and the learners,
//! each checked over deterministic random cases.

use ndarray::Array2;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vipguard_core::harness::Baseline;
use vipguard_core::marl::{train, Algorithm, ReplayBuffer, TrainConfig, Transition};
use vipguard_core::nn::{soft_update, Activation, Adam, AdamConfig, Mlp};
use vipguard_core::rng::rng_from_seed;
use vipguard_core::threat::{bodyguard_reward, instantaneous_threat, safety_product};
use vipguard_core::world::{observe, pairwise_contact_force, step_world};
use vipguard_core::{run_episode, AgentAction, EntityState, PhysicsConfig, ScenarioConfig, Vec2, WorldState};

use super::gen::{self, runner, state_bits};
use super::oracles::{actor_chain_gradient_sweep, mlp_gradient_sweep, FD_TOLERANCE};

pub const CASES: u32 = 1000;

pub struct Property {
    pub module: &'static str,
    pub name: &'static str,
    /// `Ok` carries a one-line summary of what was checked.
    pub check: fn() -> Result<String, String>,
}

pub fn all() -> Vec<Property> {
    macro_rules! p {
        ($module:literal, $name:ident) => {
            Property {
                module: $module,
                name: stringify!($name),
                check: $name,
            }
        };
    }
    vec![
        p!("world_sim", step_is_deterministic),
        p!("world_sim", landmarks_never_move),
        p!("world_sim", speed_is_clamped),
        p!("world_sim", observation_length_is_constant),
        p!("world_sim", zero_input_is_a_fixed_point),
        p!("world_sim", contact_force_is_antisymmetric),
        p!("world_sim", observation_is_translation_invariant),
        p!("scenario", roles_partition_agents),
        p!("scenario", episodes_keep_waypoints_valid_and_scripted_agents_silent),
        p!("threat_reward", reward_is_bounded),
        p!("threat_reward", residual_is_monotone_in_distance),
        p!("threat_reward", residual_is_permutation_invariant),
        p!("threat_reward", breakdown_identity_is_exact),
        p!("threat_reward", instantaneous_threat_is_negated_residual),
        p!("neural", gradients_match_finite_differences),
        p!("neural", forward_is_pure),
        p!("neural", soft_update_is_affine),
        p!("neural", finite_inputs_give_finite_outputs),
        p!("marl", replay_ring_keeps_the_newest),
        p!("marl", sampling_is_uniform),
        p!("marl", single_bodyguard_maddpg_equals_ddpg),
        p!("marl", unit_tau_copies_live_networks),
        p!("marl", training_leaves_configs_untouched),
    ]
}

pub fn find(name: &str) -> Property {
    all()
        .into_iter()
        .find(|p| p.name == name)
        .unwrap_or_else(|| panic!("no property named {name}"))
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

fn run_cases<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<String, String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map(|()| format!("{cases} cases"))
        .map_err(|e| e.to_string())
}

// ------------------------------------------------------------- world_sim ---

fn step_is_deterministic() -> Result<String, String> {
    run_cases(CASES, (gen::world_and_actions(8, 5), gen::physics()), |((s, a), cfg)| {
        let x = step_world(&s, &a, &cfg).map_err(|e| fail(e.to_string()))?;
        let y = step_world(&s, &a, &cfg).map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(state_bits(&x), state_bits(&y));
        Ok(())
    })
}

fn landmarks_never_move() -> Result<String, String> {
    let strategy = (gen::world_and_actions(8, 6), gen::physics(), 1..6usize);
    run_cases(CASES, strategy, |((s, a), cfg, steps)| {
        let mut cur = s.clone();
        for _ in 0..steps {
            cur = step_world(&cur, &a, &cfg).map_err(|e| fail(e.to_string()))?;
            for (before, after) in s.landmarks.iter().zip(&cur.landmarks) {
                prop_assert_eq!(before.position.x.to_bits(), after.position.x.to_bits());
                prop_assert_eq!(before.position.y.to_bits(), after.position.y.to_bits());
            }
        }
        Ok(())
    })
}

fn speed_is_clamped() -> Result<String, String> {
    run_cases(CASES, (gen::world_and_actions(8, 3), gen::physics()), |((s, a), cfg)| {
        let next = step_world(&s, &a, &cfg).map_err(|e| fail(e.to_string()))?;
        let max = cfg.max_speed.expect("generated with a limit");
        for e in next.agents.iter().filter(|e| e.movable) {
            prop_assert!(e.velocity.norm() <= max + 1e-12, "speed {} > {max}", e.velocity.norm());
        }
        Ok(())
    })
}

fn observation_length_is_constant() -> Result<String, String> {
    let strategy = (gen::world_and_actions(7, 6), 1..4usize);
    run_cases(CASES, strategy, |((s, a), steps)| {
        let want = (s.n_agents() + s.n_landmarks()) * 4 + s.n_agents() * s.c_dim();
        let mut cur = s;
        for _ in 0..=steps {
            for i in 0..cur.n_agents() {
                let obs = observe(&cur, i).map_err(|e| fail(e.to_string()))?;
                prop_assert_eq!(obs.len(), want);
                prop_assert_eq!(obs.relative_position(i), Vec2::ZERO);
            }
            cur = step_world(&cur, &a, &PhysicsConfig::default()).map_err(|e| fail(e.to_string()))?;
        }
        Ok(())
    })
}

/// Agents on a jittered 4x4 grid, 0.7 apart, far beyond contact range.
fn separated_world() -> impl Strategy<Value = WorldState> {
    (1..=16usize, vec(gen::landmark(), 0..5), vec(gen::vec2(-0.1, 0.1), 16), 0..=2usize).prop_map(
        |(n, landmarks, jitter, c)| {
            let agents = (0..n)
                .map(|k| {
                    let cell = Vec2::new(-1.05 + 0.7 * (k % 4) as f64, -1.05 + 0.7 * (k / 4) as f64);
                    EntityState::at(cell + jitter[k], 0.05, 1.0, true)
                })
                .collect();
            WorldState {
                agents,
                landmarks,
                utterances: vec![vec![0.0; c]; n],
                step_index: 3,
            }
        },
    )
}

fn zero_input_is_a_fixed_point() -> Result<String, String> {
    run_cases(CASES, (separated_world(), gen::physics()), |(s, cfg)| {
        let actions = vec![AgentAction::zero(s.c_dim()); s.n_agents()];
        let next = step_world(&s, &actions, &cfg).map_err(|e| fail(e.to_string()))?;
        let mut expected = s.clone();
        expected.step_index += 1;
        prop_assert_eq!(state_bits(&next), state_bits(&expected));
        Ok(())
    })
}

fn contact_force_is_antisymmetric() -> Result<String, String> {
    let pair = (gen::agent(), gen::vec2(-0.15, 0.15), 0.02..0.1f64);
    run_cases(CASES, pair, |(a, offset, rb)| {
        let b = EntityState {
            position: a.position + offset,
            radius: rb,
            ..a.clone()
        };
        let cfg = PhysicsConfig::default();
        let ab = pairwise_contact_force(&a, &b, &cfg);
        let ba = pairwise_contact_force(&b, &a, &cfg);
        prop_assert_eq!(ab.x.to_bits(), (-ba.x).to_bits());
        prop_assert_eq!(ab.y.to_bits(), (-ba.y).to_bits());
        Ok(())
    })
}

fn observation_is_translation_invariant() -> Result<String, String> {
    run_cases(CASES, (gen::world_and_actions(6, 4), gen::vec2(-5.0, 5.0)), |((s, _), shift)| {
        let mut moved = s.clone();
        for e in moved.agents.iter_mut().chain(moved.landmarks.iter_mut()) {
            e.position += shift;
        }
        for i in 0..s.n_agents() {
            let a = observe(&s, i).map_err(|e| fail(e.to_string()))?;
            let b = observe(&moved, i).map_err(|e| fail(e.to_string()))?;
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
        Ok(())
    })
}

// -------------------------------------------------------------- scenario ---

fn scenario_config() -> impl Strategy<Value = ScenarioConfig> {
    (1..=4usize, 0..=10usize, 1..=12usize, 1..=30usize, 0..=2usize, any::<u64>()).prop_map(|(g, b, m, t, c, seed)| {
        ScenarioConfig {
            n_bodyguards: g,
            n_bystanders: b,
            n_landmarks: m,
            horizon: t,
            c_dim: c,
            seed,
            ..ScenarioConfig::default()
        }
    })
}

fn roles_partition_agents() -> Result<String, String> {
    run_cases(CASES, scenario_config(), |cfg| {
        let (state, roles) = vipguard_core::build_scenario(&cfg).map_err(|e| fail(e.to_string()))?;
        let mut all: Vec<usize> = std::iter::once(roles.vip_index)
            .chain(roles.bodyguard_indices.iter().copied())
            .chain(roles.bystander_indices.iter().copied())
            .collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..state.n_agents()).collect::<Vec<_>>());
        prop_assert_eq!(roles.vip_index, 0);
        prop_assert!(roles.bystander_waypoints.iter().all(|&w| w < cfg.n_landmarks));
        Ok(())
    })
}

fn episodes_keep_waypoints_valid_and_scripted_agents_silent() -> Result<String, String> {
    run_cases(200, (scenario_config(), any::<u64>()), |(cfg, seed)| {
        let before = cfg.clone();
        let mut controller = Baseline::Random.controller(seed);
        let trace = run_episode(&cfg, controller.as_mut(), seed).map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(&cfg, &before);
        prop_assert_eq!(trace.records.len(), cfg.horizon);
        let scripted: Vec<usize> = std::iter::once(trace.roles.vip_index)
            .chain(trace.roles.bystander_indices.iter().copied())
            .collect();
        for r in &trace.records {
            for &a in &scripted {
                prop_assert!(r.actions[a].utterance.iter().all(|&u| u == 0.0));
            }
        }
        prop_assert!(trace.roles.bystander_waypoints.iter().all(|&w| w < cfg.n_landmarks));
        Ok(())
    })
}

// --------------------------------------------------------- threat_reward ---

fn reward_is_bounded() -> Result<String, String> {
    run_cases(CASES, gen::threat_scene(), |sc| {
        let r = bodyguard_reward(&sc.state, 1, &sc.action, &sc.roles, &sc.params).map_err(|e| fail(e.to_string()))?;
        let lo = -2.0 + sc.params.utterance_penalty;
        prop_assert!(r.total >= lo && r.total <= 0.0, "total {} outside [{lo}, 0]", r.total);
        Ok(())
    })
}

fn residual_is_monotone_in_distance() -> Result<String, String> {
    let strategy = (gen::threat_scene(), 1.0001..3.0f64, any::<prop::sample::Index>());
    run_cases(CASES, strategy, |(sc, stretch, which)| {
        let k = sc.roles.bystander_indices.len();
        if k == 0 {
            return Ok(());
        }
        let b = sc.roles.bystander_indices[which.index(k)];
        let vip = sc.state.agents[0].position;
        let mut farther = sc.state.clone();
        farther.agents[b].position = vip + (sc.state.agents[b].position - vip) * stretch;
        let near = safety_product(&sc.state, &sc.roles, &sc.params);
        let far = safety_product(&farther, &sc.roles, &sc.params);
        prop_assert!(far >= near, "moving bystander {b} away lowered the residual: {near} -> {far}");
        Ok(())
    })
}

fn residual_is_permutation_invariant() -> Result<String, String> {
    run_cases(CASES, (gen::threat_scene(), any::<u64>()), |(sc, seed)| {
        let mut permuted = sc.roles.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(permuted.bystander_indices.as_mut_slice(), &mut rng);
        let a = safety_product(&sc.state, &sc.roles, &sc.params);
        let b = safety_product(&sc.state, &permuted, &sc.params);
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        Ok(())
    })
}

fn breakdown_identity_is_exact() -> Result<String, String> {
    run_cases(CASES, gen::threat_scene(), |sc| {
        let r = bodyguard_reward(&sc.state, 1, &sc.action, &sc.roles, &sc.params).map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(r.total, r.residual_threat_term + r.band_penalty + r.utterance_penalty);
        Ok(())
    })
}

fn instantaneous_threat_is_negated_residual() -> Result<String, String> {
    run_cases(CASES, gen::threat_scene(), |sc| {
        let r = bodyguard_reward(&sc.state, 1, &sc.action, &sc.roles, &sc.params).map_err(|e| fail(e.to_string()))?;
        let inst = instantaneous_threat(&sc.state, &sc.roles, &sc.params);
        let identity = 1.0 - (1.0 + r.residual_threat_term);
        prop_assert!((inst - identity).abs() <= 4.0 * f64::EPSILON, "{inst} vs {identity}");
        Ok(())
    })
}

// ---------------------------------------------------------------- neural ---

fn mlp_strategy() -> impl Strategy<Value = Mlp> {
    (1..=5usize, vec(1..=8usize, 0..=3), 1..=3usize, any::<bool>(), any::<u64>()).prop_map(|(i, hidden, o, tanh, seed)| {
        let sizes: Vec<usize> = std::iter::once(i).chain(hidden).chain(std::iter::once(o)).collect();
        let act = if tanh { Activation::Tanh } else { Activation::Identity };
        Mlp::init(&sizes, act, seed).expect("valid sizes")
    })
}

fn net_and_input(scale: f64) -> impl Strategy<Value = (Mlp, Array2<f64>)> {
    (mlp_strategy(), 1..=4usize).prop_flat_map(move |(net, b)| {
        let d = net.input_dim();
        (Just(net), vec(-scale..scale, b * d)).prop_map(move |(net, xs)| {
            let x = Array2::from_shape_vec((b, d), xs).expect("sized");
            (net, x)
        })
    })
}

fn gradients_match_finite_differences() -> Result<String, String> {
    let mut sweep = mlp_gradient_sweep(20, 10, 11);
    sweep.merge(actor_chain_gradient_sweep(10, 10, 12));
    if sweep.architectures >= 5 && sweep.max_relative_error < FD_TOLERANCE {
        Ok(format!(
            "{} architectures, {} coordinates, max relative error {:.2e}",
            sweep.architectures, sweep.coordinates, sweep.max_relative_error
        ))
    } else {
        Err(format!("max relative error {:.3e} over {} architectures", sweep.max_relative_error, sweep.architectures))
    }
}

fn forward_is_pure() -> Result<String, String> {
    run_cases(CASES, net_and_input(2.0), |(net, x)| {
        let before = net.clone();
        let (a, _) = net.forward_batch(x.view()).map_err(|e| fail(e.to_string()))?;
        let (b, _) = net.forward_batch(x.view()).map_err(|e| fail(e.to_string()))?;
        prop_assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        prop_assert_eq!(net, before);
        Ok(())
    })
}

fn soft_update_is_affine() -> Result<String, String> {
    let strategy = (mlp_strategy(), any::<u64>(), 0.0..=1.0f64);
    run_cases(CASES, strategy, |(target, seed, tau)| {
        let source = Mlp::init(&target.sizes(), target.output_activation(), seed).map_err(|e| fail(e.to_string()))?;
        let mut twice = target.clone();
        soft_update(&mut twice, &source, tau).map_err(|e| fail(e.to_string()))?;
        soft_update(&mut twice, &source, 0.0).map_err(|e| fail(e.to_string()))?;
        let mut once = target.clone();
        soft_update(&mut once, &source, tau).map_err(|e| fail(e.to_string()))?;
        prop_assert!(twice.params().zip(once.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        for ((t, s), o) in target.params().zip(source.params()).zip(once.params()) {
            prop_assert!((o - ((1.0 - tau) * t + tau * s)).abs() <= 1e-15);
        }
        Ok(())
    })
}

fn finite_inputs_give_finite_outputs() -> Result<String, String> {
    run_cases(CASES, (net_and_input(1e3), any::<u64>()), |((mut net, x), seed)| {
        let (y, cache) = net.forward_batch(x.view()).map_err(|e| fail(e.to_string()))?;
        prop_assert!(y.iter().all(|v| v.is_finite()));
        let dy = Array2::from_elem(y.raw_dim(), 1e3);
        let grads = net.backward(&cache, dy.view()).map_err(|e| fail(e.to_string()))?;
        prop_assert!(grads.is_finite());
        let mut opt = Adam::new(&net, AdamConfig::default());
        opt.step(&mut net, &grads).map_err(|e| fail(e.to_string()))?;
        prop_assert!(net.is_finite());
        let other = Mlp::init(&net.sizes(), net.output_activation(), seed).map_err(|e| fail(e.to_string()))?;
        soft_update(&mut net, &other, 0.3).map_err(|e| fail(e.to_string()))?;
        prop_assert!(net.is_finite());
        Ok(())
    })
}

// ------------------------------------------------------------------ marl ---

fn sentinel(v: u64) -> Transition {
    Transition {
        observations: vec![vec![v as f64]],
        actions: vec![vec![0.0, 0.0]],
        rewards: vec![v as f64],
        next_observations: vec![vec![v as f64 + 0.5]],
        done: false,
    }
}

fn replay_ring_keeps_the_newest() -> Result<String, String> {
    run_cases(CASES, (1..=50usize, 0..=120usize), |(capacity, extra)| {
        let mut buf = ReplayBuffer::new(capacity).map_err(|e| fail(e.to_string()))?;
        let total = (capacity + extra) as u64;
        for v in 0..total {
            buf.push(sentinel(v));
        }
        prop_assert_eq!(buf.len(), capacity);
        let mut held: Vec<u64> = buf.iter().map(|t| t.rewards[0] as u64).collect();
        held.sort_unstable();
        let newest: Vec<u64> = (total - capacity as u64..total).collect();
        prop_assert_eq!(held, newest);
        Ok(())
    })
}

/// Chi-square statistic of `draws` sampled indices over `cells` buckets,
/// drawn in batches of `cells`.
pub fn sampling_chi_square(cells: usize, draws: usize, seed: u64) -> f64 {
    let mut buf = ReplayBuffer::new(cells).expect("positive capacity");
    for v in 0..cells as u64 {
        buf.push(sentinel(v));
    }
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0usize; cells];
    for _ in 0..draws / cells {
        for i in buf.sample_indices(cells, &mut rng).expect("batch fits the buffer") {
            counts[i] += 1;
        }
    }
    let expected = draws as f64 / cells as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Upper 0.001 quantile of the chi-square distribution with 99 degrees of freedom.
pub const CHI_SQUARE_99_P001: f64 = 148.230;

fn sampling_is_uniform() -> Result<String, String> {
    let stat = sampling_chi_square(100, 100_000, 5);
    if stat < CHI_SQUARE_99_P001 {
        Ok(format!("chi-square {stat:.2} < {CHI_SQUARE_99_P001} (99 dof, 1e5 draws)"))
    } else {
        Err(format!("chi-square {stat:.2} >= {CHI_SQUARE_99_P001}"))
    }
}

fn small_scenario(bodyguards: usize) -> ScenarioConfig {
    ScenarioConfig {
        n_bodyguards: bodyguards,
        n_bystanders: 2,
        n_landmarks: 3,
        ..ScenarioConfig::default()
    }
}

fn small_training(episodes: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        episodes,
        batch_size: 64,
        update_every: 25,
        hidden_layers: vec![16, 16],
        buffer_capacity: 10_000,
        seed,
        ..TrainConfig::default()
    }
}

fn single_bodyguard_maddpg_equals_ddpg() -> Result<String, String> {
    let scn = small_scenario(1);
    for seed in 0..3 {
        let cfg = small_training(40, seed);
        let (m_bundle, m_log) = train(&scn, &cfg).map_err(|e| e.to_string())?;
        let ddpg = TrainConfig {
            algorithm: Algorithm::Ddpg,
            ..cfg
        };
        let (d_bundle, d_log) = train(&scn, &ddpg).map_err(|e| e.to_string())?;
        if m_log != d_log {
            return Err(format!("seed {seed}: training logs differ"));
        }
        if m_bundle.agents != d_bundle.agents {
            return Err(format!("seed {seed}: trained networks differ"));
        }
        if m_log.iter().all(|r| r.critic_loss.is_none()) {
            return Err(format!("seed {seed}: no updates happened"));
        }
    }
    Ok("3 seeds x 40 episodes, identical logs and parameters".into())
}

fn unit_tau_copies_live_networks() -> Result<String, String> {
    let scn = small_scenario(2);
    let cases = [0usize, 3, 5, 8, 12];
    for (k, &episodes) in cases.iter().enumerate() {
        let (mut bundle, _) = train(&scn, &small_training(episodes, k as u64)).map_err(|e| e.to_string())?;
        bundle.soft_update_all(1.0).map_err(|e| e.to_string())?;
        for a in &bundle.agents {
            if a.target_actor != a.actor || a.target_critic != a.critic {
                return Err(format!("after {episodes} episodes: targets differ from live networks"));
            }
        }
    }
    Ok(format!("{} training checkpoints", cases.len()))
}

fn training_leaves_configs_untouched() -> Result<String, String> {
    let scn = small_scenario(2);
    let cfg = small_training(6, 9);
    let (scn_before, cfg_before) = (scn.clone(), cfg.clone());
    train(&scn, &cfg).map_err(|e| e.to_string())?;
    if scn != scn_before || scn.digest() != scn_before.digest() || cfg != cfg_before {
        return Err("configuration changed during training".into());
    }
    Ok("scenario, physics and training configs unchanged".into())
}
