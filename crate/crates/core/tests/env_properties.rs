use coop_maddpg::env::{Action, ParticleWorld, Vec2, WorldConfig, WorldState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random-action rollout over `steps` steps, resetting at episode ends.
fn rollout(world: &ParticleWorld, seed: u64, steps: usize) -> Vec<(WorldState, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut state, _) = world.reset(rng.random()).unwrap();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let actions: Vec<Action> = (0..world.num_agents())
            .map(|_| Action::ALL[rng.random_range(0..4)])
            .collect();
        let outcome = world.step(&state, &actions).unwrap();
        out.push((outcome.state.clone(), outcome.rewards));
        state = if outcome.done {
            world.reset(rng.random()).unwrap().0
        } else {
            outcome.state
        };
    }
    out
}

#[test]
fn ten_thousand_random_steps_per_seed() {
    let world = ParticleWorld::new(WorldConfig::default()).unwrap();
    let cfg = world.config().clone();
    for seed in 0..5 {
        let first = rollout(&world, seed, 10_000);
        let second = rollout(&world, seed, 10_000);
        assert_eq!(first.len(), second.len());
        for ((s1, r1), (s2, r2)) in first.iter().zip(&second) {
            // bitwise, including signed zeros
            let bits = |s: &WorldState| {
                s.agents()
                    .chain(&s.obstacles)
                    .flat_map(|e| [e.position.x, e.position.y, e.velocity.x, e.velocity.y])
                    .map(f64::to_bits)
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(s1), bits(s2));
            assert_eq!(
                r1.iter().map(|r| r.to_bits()).collect::<Vec<_>>(),
                r2.iter().map(|r| r.to_bits()).collect::<Vec<_>>()
            );
        }

        let mut episode_obstacles = None;
        for (state, rewards) in &first {
            for (i, agent) in state.agents().enumerate() {
                assert!(agent.velocity.norm() <= cfg.max_speed_of(i), "seed {seed}: speed bound");
            }
            if state.step == 1 {
                episode_obstacles = Some(state.obstacles.clone());
            }
            if let Some(obs) = &episode_obstacles {
                assert_eq!(&state.obstacles, obs, "obstacles moved");
            }
            assert!(state.obstacles.iter().all(|o| o.velocity == Vec2::ZERO));
            assert!(rewards.iter().all(|r| r.is_finite()));
        }
    }
}

fn translated(state: &WorldState, offset: Vec2) -> WorldState {
    let mut s = state.clone();
    for e in s.red.iter_mut().chain(&mut s.green).chain(&mut s.obstacles) {
        e.position = e.position + offset;
    }
    s.water = s.water + offset;
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shaping_is_translation_covariant(
        seed in any::<u64>(),
        dx in -50.0f64..50.0,
        dy in -50.0f64..50.0,
    ) {
        let world = ParticleWorld::new(WorldConfig { boundary_scale: 0.0, ..WorldConfig::default() }).unwrap();
        let (state, _) = world.reset(seed).unwrap();
        let moved = translated(&state, Vec2::new(dx, dy));
        let a = world.compute_rewards(&state);
        let b = world.compute_rewards(&moved);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn collision_is_symmetric(
        seed in any::<u64>(),
        jitter in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 6),
    ) {
        let world = ParticleWorld::new(WorldConfig::default()).unwrap();
        let (mut state, _) = world.reset(seed).unwrap();
        // squeeze agents together so collisions actually occur
        for (i, (jx, jy)) in jitter.iter().enumerate() {
            state.agent_mut(i).position = Vec2::new(*jx, *jy);
        }
        let n = world.num_agents();
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(world.colliding(&state, a, b), world.colliding(&state, b, a));
            }
        }
    }

    #[test]
    fn speed_bound_holds_after_any_step(
        seed in any::<u64>(),
        vx in -20.0f64..20.0,
        vy in -20.0f64..20.0,
        action in 0usize..4,
    ) {
        let world = ParticleWorld::new(WorldConfig::default()).unwrap();
        let (mut state, _) = world.reset(seed).unwrap();
        for i in 0..world.num_agents() {
            state.agent_mut(i).velocity = Vec2::new(vx, vy);
        }
        let actions = vec![Action::ALL[action]; world.num_agents()];
        let next = world.step(&state, &actions).unwrap().state;
        for (i, agent) in next.agents().enumerate() {
            prop_assert!(agent.velocity.norm() <= world.config().max_speed_of(i));
        }
    }
}
