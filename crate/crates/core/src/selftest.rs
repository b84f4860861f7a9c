//! Quick built-in consistency checks: gradients against finite differences,
//! closed-form oracles, and physics properties.

use crate::agent::{clipped_surrogate, compute_advantages, loss_and_grads, sample, LossBatch, LossConfig, ObsBatch, PolicyNetwork};
use crate::env::{Observation, GRID_CELLS, VECTOR_LEN};
use crate::math::Vec2;
use crate::nn::{grad_check, Mode};
use crate::physics::{box_body, robot_body, step_world, Action, PhysicsParams, Pose2D, Wall, WorldState, MAX_BOXES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        network_gradients(seed),
        advantage_oracle(seed),
        clip_points(),
        push_penetration(seed),
        physics_determinism(seed),
    ]
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_observation(rng: &mut impl Rng) -> Observation {
    const CODES: [f32; 5] = [0.0, -1.0, 0.5, -0.5, 1.0];
    Observation {
        vector: (0..VECTOR_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        grid: (0..GRID_CELLS).map(|_| CODES[rng.gen_range(0..5)]).collect(),
    }
}

pub fn network_gradients(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = PolicyNetwork::<f64>::new(&mut rng);
    for idx in [net.layers.mean.w, net.layers.value.w] {
        net.params.tensors[idx].data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
    let obs: Vec<Observation> = (0..4).map(|_| random_observation(&mut rng)).collect();
    let obs = ObsBatch::from_observations(obs.iter());
    let out = net.infer(&obs);
    let (actions, old_log_prob) = out
        .mean
        .iter()
        .map(|m| {
            let (a, lp) = sample(m, &out.log_std, &mut rng);
            (a, lp + rng.gen_range(-0.1..0.1))
        })
        .unzip();
    let batch = LossBatch {
        obs,
        actions,
        old_log_prob,
        advantages: (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        returns: (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    };
    let cfg = LossConfig::default();
    let (_, grads, _) = loss_and_grads(&net, &net.params, &batch, &cfg, Mode::Train);
    let report = grad_check(
        &net.params,
        &grads,
        |p| loss_and_grads(&net, p, &batch, &cfg, Mode::Train).0.total,
        100,
        1e-5,
        1e-4,
        &mut rng,
    );
    check("network gradients", report.passed(), format!("{} probes, max relative error {:.2e}", report.probes.len(), report.max_rel_error))
}

pub fn advantage_oracle(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let gamma = rng.gen_range(0.8..1.0);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
        let boot = rng.gen_range(-5.0..5.0);
        let (adv, _) = compute_advantages(&r, &v, &d, boot, gamma);
        for t in 0..n {
            // forward sum up to the episode end or the horizon
            let mut g = 0.0;
            let mut k = t;
            let mut disc = 1.0;
            loop {
                g += disc * r[k];
                disc *= gamma;
                if d[k] {
                    break;
                }
                k += 1;
                if k == n {
                    g += disc * boot;
                    break;
                }
            }
            worst = worst.max((g - v[t] - adv[t]).abs());
        }
    }
    check("advantage oracle", worst < 1e-9, format!("max error {worst:.2e}"))
}

pub fn clip_points() -> Check {
    let a = clipped_surrogate(1.5, 0.2, 1.0);
    let b = clipped_surrogate(0.5, 0.2, -1.0);
    check("clip loss points", a == 1.2 && b == -0.8, format!("{a}, {b}"))
}

fn push_scenario(seed: u64, steps: usize) -> (f64, Vec<WorldState>) {
    let p = PhysicsParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = [(-3.0, -3.0), (3.0, -3.0), (3.0, 3.0), (-3.0, 3.0)];
    let mut walls: Vec<Wall> = (0..4)
        .map(|i| Wall::new(Vec2::new(c[i].0, c[i].1), Vec2::new(c[(i + 1) % 4].0, c[(i + 1) % 4].1), 0.1))
        .collect();
    walls.push(Wall::new(Vec2::new(-3.0, 0.5), Vec2::new(-0.7, 0.5), 0.1));
    walls.push(Wall::new(Vec2::new(0.7, 0.5), Vec2::new(3.0, 0.5), 0.1));
    let robot = robot_body(Pose2D::new(rng.gen_range(-1.0..1.0), -1.9, rng.gen_range(0.8..2.3)));
    let mut w = WorldState::new(robot, vec![None; MAX_BOXES], walls);
    let mut placed = 0;
    for _ in 0..200 {
        if placed == 4 {
            break;
        }
        let cand = Pose2D::new(rng.gen_range(-1.5..1.5), rng.gen_range(-0.9..1.6), rng.gen_range(-PI..PI));
        w.boxes[placed] = Some(box_body(cand));
        if w.max_penetration() == 0.0 {
            placed += 1;
        } else {
            w.boxes[placed] = None;
        }
    }
    let mut worst: f64 = 0.0;
    let mut traj = Vec::with_capacity(steps);
    let mut a = Action::new(1.0, 0.0);
    for k in 0..steps {
        if k % 20 == 0 {
            a = Action::new(rng.gen_range(0.2..1.0), rng.gen_range(-0.8..0.8));
        }
        match step_world(&mut w, a, &p) {
            Ok(r) => worst = worst.max(r.max_penetration),
            Err(_) => return (f64::INFINITY, traj),
        }
        traj.push(w.clone());
    }
    (worst, traj)
}

pub fn push_penetration(seed: u64) -> Check {
    let worst = (0..100u64).into_par_iter().map(|s| push_scenario(seed.wrapping_add(s), 120).0).reduce(|| 0.0, f64::max);
    check("push penetration", worst <= 0.01, format!("max penetration {:.4} m over 100 scenarios", worst))
}

pub fn physics_determinism(seed: u64) -> Check {
    let serial: Vec<_> = (0..4u64).map(|s| push_scenario(seed.wrapping_add(s), 60).1).collect();
    let parallel: Vec<_> = (0..4u64).into_par_iter().map(|s| push_scenario(seed.wrapping_add(s), 60).1).collect();
    check("physics determinism", serial == parallel, "serial and parallel trajectories compared".into())
}
