use namo_core::env::grid::{cell_center, wall_layer};
use namo_core::env::obs::{ACTION_OFFSET, BV_OFFSET, RP_OFFSET};
use namo_core::env::*;
use namo_core::math::Vec2;
use namo_core::physics::{box_body, robot_body, Action, ActionLimits, ContactReport, Pose2D, WorldState, MAX_BOXES};
use namo_core::scene::{builtin_map, builtin_map_ids, Rect, SpawnConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

const ROOM: Rect = Rect::new(-3.0, -3.0, 3.0, 3.0);

fn quiet() -> EnvConfig {
    EnvConfig { noise: NoiseConfig::NONE, ..EnvConfig::default() }
}

fn env(map: &str, cfg: EnvConfig) -> NamoEnv {
    NamoEnv::new(Arc::new(builtin_map(map).unwrap()), cfg)
}

fn ctx() -> RewardContext {
    RewardContext { limits: ActionLimits::default(), goal_radius: 0.3, room_diagonal: 6.0 * 2f64.sqrt() }
}

#[test]
fn observation_shapes_hold_for_every_map_and_lambda() {
    assert_eq!(VECTOR_LEN, 2 + 5 * 6 + 5 * 40 + 5 * 2);
    assert_eq!(VECTOR_LEN, 242);
    for id in builtin_map_ids() {
        let mut e = env(id, EnvConfig::default());
        for (k, lambda) in [0.0, 0.6, 1.0].into_iter().enumerate() {
            let o = e.reset(&SpawnConfig::with_lambda(lambda), k as u64).unwrap();
            assert_eq!(o.vector.len(), 242);
            assert_eq!(o.grid.len(), 48 * 48);
            let r = e.step(Action::new(0.5, 0.2)).unwrap();
            assert_eq!(r.observation.vector.len(), 242);
            assert_eq!(r.observation.grid.len(), 48 * 48);
            assert!(r.observation.vector.iter().chain(&r.observation.grid).all(|v| v.abs() <= 1.0));
        }
    }
}

#[test]
fn lambda_zero_reset_has_zero_box_block_even_with_noise() {
    let mut e = env("c", EnvConfig::default());
    for seed in 0..20 {
        let o = e.reset(&SpawnConfig::with_lambda(0.0), seed).unwrap();
        assert!(o.vector[BV_OFFSET..BV_OFFSET + 200].iter().all(|&v| v == 0.0));
        let r = e.step(Action::new(1.0, 0.0)).unwrap();
        assert!(r.observation.vector[BV_OFFSET..BV_OFFSET + 200].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn equal_seeds_give_identical_observations() {
    let mut a = env("h", EnvConfig::default());
    let mut b = env("h", EnvConfig::default());
    let spawn = SpawnConfig::with_lambda(0.8);
    assert_eq!(a.reset(&spawn, 77).unwrap(), b.reset(&spawn, 77).unwrap());
    for k in 0..10 {
        let act = Action::new(0.8, if k % 2 == 0 { 0.5 } else { -0.5 });
        assert_eq!(a.step(act).unwrap().observation, b.step(act).unwrap().observation);
    }
}

#[test]
fn reset_replicates_the_first_frame() {
    let mut e = env("d", quiet());
    let o = e.reset(&SpawnConfig::with_lambda(1.0), 3).unwrap();
    for f in 1..5 {
        assert_eq!(o.vector[RP_OFFSET..RP_OFFSET + 6], o.vector[RP_OFFSET + f * 6..RP_OFFSET + f * 6 + 6]);
        assert_eq!(o.vector[BV_OFFSET..BV_OFFSET + 40], o.vector[BV_OFFSET + f * 40..BV_OFFSET + f * 40 + 40]);
    }
    assert!(o.vector[ACTION_OFFSET..].iter().all(|&v| v == 0.0));
}

#[test]
fn history_shifts_by_one_frame() {
    let mut e = env("c", EnvConfig::default());
    e.reset(&SpawnConfig::with_lambda(0.6), 5).unwrap();
    let mut prev = e.clean_observation();
    for k in 0..30 {
        if e.status().done {
            break;
        }
        e.step(Action::new(0.9, 0.3 * (k as f64).sin())).unwrap();
        let next = e.clean_observation();
        for (off, len) in [(RP_OFFSET, 6), (BV_OFFSET, 40), (ACTION_OFFSET, 2)] {
            assert_eq!(next.vector[off..off + 4 * len], prev.vector[off + len..off + 5 * len]);
        }
        prev = next;
    }
}

/// Independent oracle: test every cell center against the box directly.
#[test]
fn axis_aligned_box_covers_a_5x5_block() {
    // cell centers sit at -3 + (k + 0.5) * 0.125; 0.0625 is one of them
    let c = 0.0625;
    let mut boxes = vec![None; MAX_BOXES];
    boxes[0] = Some(box_body(Pose2D::new(c, c, 0.0)));
    let world = WorldState::new(robot_body(Pose2D::new(-2.0, -2.0, 0.0)), boxes, vec![]);
    let g = rasterize_grid(&world, Vec2::new(2.0, 2.0), &ROOM, 0.3);
    assert_eq!(g.count(CellLabel::Box), 25);
    let mut oracle = 0;
    for r in 0..48 {
        for col in 0..48 {
            let p = cell_center(&ROOM, r, col);
            let inside = (p.x - c).abs() <= 0.3 && (p.y - c).abs() <= 0.3;
            oracle += inside as usize;
            assert_eq!(inside, g.get(r, col) == CellLabel::Box, "cell {r},{col}");
        }
    }
    assert_eq!(oracle, 25);
}

#[test]
fn empty_room_shows_only_walls_goal_and_robot() {
    let mut e = env("c", quiet());
    e.reset(&SpawnConfig::with_lambda(0.0), 1).unwrap();
    let g = e.semantic_grid();
    assert_eq!(g.count(CellLabel::Box), 0);
    assert!(g.count(CellLabel::Wall) > 0 && g.count(CellLabel::Goal) > 0 && g.count(CellLabel::Robot) > 0);
    // boundary rows are walls
    assert!((0..48).all(|c| g.get(0, c) == CellLabel::Wall && g.get(47, c) == CellLabel::Wall));
}

#[test]
fn walls_thinner_than_a_cell_still_rasterize_as_a_continuous_line() {
    let m = builtin_map("g").unwrap();
    let cells = wall_layer(&m.room_bounds, &m.walls);
    let w = &m.walls[4];
    for k in 0..=40 {
        let p = w.a + (w.b - w.a) * (k as f64 / 40.0);
        let col = ((p.x + 3.0) / 0.125).floor().clamp(0.0, 47.0) as usize;
        let row = ((3.0 - p.y) / 0.125).floor().clamp(0.0, 47.0) as usize;
        assert_eq!(cells[row * 48 + col], CellLabel::Wall);
    }
}

#[test]
fn robot_occupies_at_least_one_cell_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5000 {
        let p = Pose2D::new(rng.gen_range(-2.6..2.6), rng.gen_range(-2.6..2.6), rng.gen_range(-3.2..3.2));
        let world = WorldState::new(robot_body(p), vec![None; MAX_BOXES], vec![]);
        let g = rasterize_grid(&world, Vec2::new(10.0, 10.0), &ROOM, 0.3);
        assert!(g.count(CellLabel::Robot) >= 1);
    }
}

#[test]
fn grid_priority_robot_over_box_over_wall_over_goal() {
    let mut boxes = vec![None; MAX_BOXES];
    boxes[0] = Some(box_body(Pose2D::new(0.0, 0.0, 0.0)));
    let walls = vec![namo_core::physics::Wall::new(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), 0.1)];
    let world = WorldState::new(robot_body(Pose2D::new(0.0, 0.1, 0.0)), boxes, walls);
    let g = rasterize_grid(&world, Vec2::new(0.5, 0.0), &ROOM, 0.6);
    let at = |x: f64, y: f64| g.get(((3.0 - y) / 0.125) as usize, ((x + 3.0) / 0.125) as usize);
    assert_eq!(at(0.0625, 0.0625), CellLabel::Robot);
    assert_eq!(at(0.1875, -0.1875), CellLabel::Box);
    assert_eq!(at(0.6875, 0.0625), CellLabel::Wall);
    assert_eq!(at(0.6875, 0.3125), CellLabel::Goal);
}

fn frame_at(robot: Pose2D) -> Frame {
    let w = WorldState::new(robot_body(robot), vec![None; MAX_BOXES], vec![]);
    Frame::capture(&w, Action::default())
}

#[test]
fn all_zero_inputs_give_zero_vector() {
    let norm = Normalizer::new(&ROOM, ActionLimits::default());
    let hist: Vec<_> = (0..5).map(|_| frame_at(Pose2D::default())).collect();
    let mut v = vec![1.0; VECTOR_LEN];
    build_vector(Vec2::ZERO, &hist, &norm, &mut v).unwrap();
    assert!(v.iter().all(|&x| x == 0.0));
}

#[test]
fn corner_position_normalizes_to_one() {
    let norm = Normalizer::new(&ROOM, ActionLimits::default());
    let hist: Vec<_> = (0..5).map(|_| frame_at(Pose2D::new(3.0, 3.0, 0.0))).collect();
    let mut v = vec![0.0; VECTOR_LEN];
    build_vector(Vec2::ZERO, &hist, &norm, &mut v).unwrap();
    for f in 0..5 {
        assert_eq!(v[RP_OFFSET + 6 * f], 1.0);
        assert_eq!(v[RP_OFFSET + 6 * f + 1], 1.0);
    }
}

#[test]
fn wrong_history_length_is_rejected() {
    let norm = Normalizer::new(&ROOM, ActionLimits::default());
    let hist: Vec<_> = (0..4).map(|_| frame_at(Pose2D::default())).collect();
    let mut v = vec![0.0; VECTOR_LEN];
    assert!(build_vector(Vec2::ZERO, &hist, &norm, &mut v).is_err());
}

fn at_rest(p: Pose2D, t: f64) -> WorldState {
    let mut w = WorldState::new(robot_body(p), vec![None; MAX_BOXES], vec![]);
    w.time = t;
    w
}

#[test]
fn reward_at_rest_far_from_goal_is_time_penalty_only() {
    let prev = at_rest(Pose2D::new(-3.0, -3.0, 0.0), 0.0);
    let next = at_rest(Pose2D::new(-3.0, -3.0, 0.0), 1.0 / 3.0);
    let r = compute_reward(&prev, &next, Action::default(), &ContactReport::default(), Vec2::new(3.0, 3.0), &ctx());
    assert_eq!(r.total, -1.0);
    assert_eq!(r.time, -1.0);
}

#[test]
fn reward_on_success_step() {
    let prev = at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0);
    let next = at_rest(Pose2D::new(0.0, 0.0, 0.0), 1.0 / 3.0);
    let goal = Vec2::new(0.2, 0.0);
    let r = compute_reward(&prev, &next, Action::default(), &ContactReport::default(), goal, &ctx());
    let dist = (1.0 - 0.2 / (6.0 * 2f64.sqrt())) * 0.1;
    assert_eq!(r.goal, 10.0);
    assert!((r.total - (10.0 - 1.0 + dist)).abs() < 1e-12);
}

#[test]
fn driving_at_full_speed_toward_goal_earns_full_progress() {
    let dt = 1.0 / 3.0;
    let prev = at_rest(Pose2D::new(-2.0, 0.0, 0.0), 0.0);
    let mut next = at_rest(Pose2D::new(-2.0 + dt, 0.0, 0.0), dt);
    next.robot.linear_velocity = Vec2::new(1.0, 0.0);
    let r = compute_reward(&prev, &next, Action::new(1.0, 0.0), &ContactReport::default(), Vec2::new(2.0, 0.0), &ctx());
    assert!((r.progress - 1.0).abs() < 1e-12);
    assert_eq!(r.vel_offset, 0.0);
    assert!((r.vel_effort + 0.05).abs() < 1e-12);
}

#[test]
fn collision_terms_follow_contacts() {
    let prev = at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0);
    let next = at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.3);
    let contacts = ContactReport { robot_wall_contact: true, robot_box_contacts: vec![2], ..Default::default() };
    let r = compute_reward(&prev, &next, Action::default(), &contacts, Vec2::new(2.0, 2.0), &ctx());
    assert_eq!(r.wall_collision, -0.2);
    assert_eq!(r.box_collision, -0.1);
}

#[test]
fn reaching_the_goal_ends_the_episode_with_success() {
    let mut e = env("c", quiet());
    e.reset(&SpawnConfig::with_lambda(0.0), 0).unwrap();
    let mut st = e.state().unwrap().clone();
    let p = st.world.robot.pose.position();
    st.scene.goal = p + Vec2::new(0.2, 0.0);
    e.restore(st);
    let r = e.step(Action::new(-0.5, 1.5)).unwrap();
    assert_eq!(r.status.outcome, Outcome::Success);
    assert!(r.status.done);
    assert_eq!(r.reward.goal, 10.0);
    assert_eq!(e.step(Action::default()).unwrap_err(), EnvError::EpisodeFinished);
}

#[test]
fn idle_episode_times_out_at_exactly_135_steps() {
    let mut e = env("c", quiet());
    e.reset(&SpawnConfig::with_lambda(0.0), 2).unwrap();
    for k in 1..=135u32 {
        let r = e.step(Action::default()).unwrap();
        assert_eq!(r.status.steps_elapsed, k);
        assert_eq!(r.reward.wall_collision, 0.0);
        assert_eq!(r.reward.box_collision, 0.0);
        if k < 135 {
            assert_eq!(r.status.outcome, Outcome::Running);
        } else {
            assert_eq!(r.status.outcome, Outcome::Timeout);
        }
    }
    assert!(e.step(Action::default()).is_err());
}

#[test]
fn non_finite_actions_are_rejected() {
    let mut e = env("c", quiet());
    e.reset(&SpawnConfig::with_lambda(0.0), 2).unwrap();
    assert!(matches!(e.step(Action::new(f64::NAN, 0.0)), Err(EnvError::Physics(_))));
}

#[test]
fn zero_sigma_noise_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let orig: Vec<f32> = (0..100).map(|i| (i as f32 / 100.0) - 0.5).collect();
    let mut v = orig.clone();
    apply_vector_noise(&mut v, &[false; 100], 0.0, &mut rng);
    apply_grid_noise(&mut v, 0.0, &mut rng);
    assert_eq!(v, orig);
    let a = Action::new(0.3, -0.7);
    assert_eq!(apply_action_noise(a, 0.0, &ActionLimits::default(), &mut rng), a);
}

#[test]
fn vector_noise_has_the_configured_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let base = 0.25f32;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..n {
        let mut v = [base];
        apply_vector_noise(&mut v, &[false], 0.01, &mut rng);
        let d = (v[0] - base) as f64;
        sum += d;
        sq += d * d;
    }
    let mean = sum / n as f64;
    let var = sq / n as f64 - mean * mean;
    assert!((var - 1e-4).abs() < 5e-6, "variance {var}");
}

#[test]
fn vector_and_grid_noise_are_uncorrelated() {
    let mut e = env("c", EnvConfig::default());
    let spawn = SpawnConfig::with_lambda(0.0);
    let clean = {
        e.reset(&spawn, 0).unwrap();
        e.clean_observation()
    };
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let mut v = clean.vector.clone();
        let mut g = clean.grid.clone();
        apply_vector_noise(&mut v, &[false; VECTOR_LEN], 0.01, &mut rng);
        apply_grid_noise(&mut g, 0.02, &mut rng);
        // pair interior entries only so clamping does not bias the estimate
        for (i, (&a, &b)) in v.iter().zip(&g).enumerate() {
            if clean.vector[i].abs() < 0.9 && clean.grid[i].abs() < 0.9 {
                let x = (a - clean.vector[i]) as f64;
                let y = (b - clean.grid[i]) as f64;
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
                sxy += x * y;
                n += 1.0;
            }
        }
    }
    let cov = sxy / n - sx / n * sy / n;
    let corr = cov / ((sxx / n - (sx / n).powi(2)).sqrt() * (syy / n - (sy / n).powi(2)).sqrt());
    assert!(corr.abs() < 0.01, "correlation {corr} over {n} pairs");
}

#[test]
fn noiseless_trajectories_are_deterministic() {
    let run = || {
        let mut e = env("f", quiet());
        e.reset(&SpawnConfig::with_lambda(1.0), 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = vec![];
        while !e.status().done {
            let r = e.step(Action::new(rng.gen_range(-0.5..1.0), rng.gen_range(-1.5..1.5))).unwrap();
            out.push((r.observation, r.reward));
        }
        out
    };
    assert_eq!(run(), run());
}

/// 10^5 random transitions across maps; every weighted term within range.
#[test]
fn reward_terms_stay_within_their_ranges() {
    let ids: Vec<_> = builtin_map_ids().collect();
    let bounds = RewardBreakdown::bounds();
    let total: usize = (0..40u64)
        .into_par_iter()
        .map(|chunk| {
            let id = ids[chunk as usize % ids.len()];
            let mut e = env(id, EnvConfig::default());
            let mut rng = ChaCha8Rng::seed_from_u64(chunk);
            let mut n = 0;
            let mut seed = chunk * 1000;
            while n < 2500 {
                if e.state().is_none_or(|s| s.status.done) {
                    seed += 1;
                    e.reset(&SpawnConfig::with_lambda(rng.gen_range(0.0..1.0)), seed).unwrap();
                }
                let r = e.step(Action::new(rng.gen_range(-0.5..1.0), rng.gen_range(-1.5..1.5))).unwrap();
                for (t, (lo, hi)) in r.reward.terms().iter().zip(bounds) {
                    assert!(*t >= lo - 1e-12 && *t <= hi + 1e-12, "term {t} outside [{lo}, {hi}]");
                }
                assert!((r.reward.total - r.reward.terms().iter().sum::<f64>()).abs() < 1e-12);
                assert!(r.status.steps_elapsed <= 135);
                n += 1;
            }
            n
        })
        .sum();
    assert_eq!(total, 100_000);
}
