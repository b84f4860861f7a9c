//! End-to-end acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p namo-core --test acceptance`. Pass criterion
//! numbers as arguments to run a subset, e.g. `-- 1 2 7`.

use namo_core::agent::*;
use namo_core::env::{EnvConfig, NamoEnv, NoiseConfig, Observation, GRID_CELLS, GRID_SIZE, VECTOR_LEN};
use namo_core::eval::{evaluate, EvalConfig, EvalReport, NetworkPolicy};
use namo_core::io::{read_checkpoint, write_checkpoint};
use namo_core::nn::{Mode, ParamSet, Tape, Tensor};
use namo_core::physics::{box_body, robot_body, step_world, Action, PhysicsParams, Pose2D, Wall, WorldState, MAX_BOXES};
use namo_core::math::Vec2;
use namo_core::scene::{builtin_map, generate_scene, CurriculumState, SlotKind, SpawnConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_obs(rng: &mut impl Rng) -> Observation {
    const CODES: [f32; 5] = [0.0, -1.0, 0.5, -0.5, 1.0];
    Observation {
        vector: (0..VECTOR_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        grid: (0..GRID_CELLS).map(|_| CODES[rng.gen_range(0..5)]).collect(),
    }
}

// ---------------------------------------------------------------- 1

fn observation_shapes() -> Outcome {
    let map = Arc::new(builtin_map("c").unwrap());
    let mut env = NamoEnv::new(map, EnvConfig::default());
    let obs = env.reset(&SpawnConfig::with_lambda(1.0), 3).unwrap();
    let next = env.step(Action::new(0.5, 0.2)).unwrap().observation;
    for o in [&obs, &next] {
        if o.vector.len() != 242 || o.grid.len() != 48 * 48 || GRID_SIZE != 48 {
            return Err(format!("vector {} grid {}", o.vector.len(), o.grid.len()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = PolicyNetwork::<f32>::new(&mut rng);
    let b = 5;
    let obs: Vec<Observation> = (0..b).map(|_| random_obs(&mut rng)).collect();
    let batch = ObsBatch::<f32>::from_observations(obs.iter());
    let l = &net.layers;
    let mut tape = Tape::new();
    let g = tape.input(batch.grid.clone());
    let c1 = l.conv1.forward(&mut tape, &net.params, g);
    let s1 = tape.value(c1).shape.clone();
    let r1 = tape.relu(c1);
    let (n1, _, _) = l.bn1.forward(&mut tape, &net.params, r1, Mode::Train, &net.bn[0]);
    let c2 = l.conv2.forward(&mut tape, &net.params, n1);
    let s2 = tape.value(c2).shape.clone();
    ensure(
        s1 == vec![b, 11, 11, 16] && s2 == vec![b, 4, 4, 32],
        format!("vector 242, grid 48x48, conv1 {s1:?}, conv2 {s2:?}"),
    )
}

// ---------------------------------------------------------------- 2

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = PolicyNetwork::<f64>::new(&mut rng);
    for idx in [net.layers.mean.w, net.layers.value.w] {
        net.params.tensors[idx].data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
    net.params.tensors[net.layers.log_std].data = vec![-0.3, 0.2];
    let n = 4;
    let obs: Vec<Observation> = (0..n).map(|_| random_obs(&mut rng)).collect();
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
        advantages: (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        returns: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    };
    let cfg = LossConfig::default();
    let loss = |p: &ParamSet<f64>| loss_and_grads(&net, p, &batch, &cfg, Mode::Train).0.total;
    let (_, grads, _) = loss_and_grads(&net, &net.params, &batch, &cfg, Mode::Train);

    // round-robin over tensors so every layer is probed
    let h = 1e-5;
    let probes = 240;
    let tensors = net.params.tensors.len();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut p = net.params.clone();
    for k in 0..probes {
        let t = k % tensors;
        let i = rng.gen_range(0..p.tensors[t].len());
        let x = p.tensors[t].data[i];
        p.tensors[t].data[i] = x + h;
        let up = loss(&p);
        p.tensors[t].data[i] = x - h;
        let down = loss(&p);
        p.tensors[t].data[i] = x;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[t].data[i];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        if rel > worst {
            worst = rel;
            worst_at = format!("{}[{i}]", net.params.names[t]);
        }
    }
    let elapsed = t0.elapsed();
    ensure(
        worst < 1e-4 && elapsed < Duration::from_secs(120),
        format!("{probes} probes over {tensors} tensors, max relative error {worst:.2e} at {worst_at}, {:.1}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 3

fn advantage_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..60);
        let gamma = rng.gen_range(0.5..1.0);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.08)).collect();
        let boot = rng.gen_range(-5.0..5.0);
        let (adv, ret) = compute_advantages(&r, &v, &d, boot, gamma);
        for t in 0..n {
            // explicit sum until the first termination at or after t
            let mut g = 0.0;
            let mut truncated = true;
            for k in t..n {
                g += gamma.powi((k - t) as i32) * r[k];
                if d[k] {
                    truncated = false;
                    break;
                }
            }
            if truncated {
                g += gamma.powi((n - t) as i32) * boot;
            }
            worst = worst.max((g - v[t] - adv[t]).abs()).max((g - ret[t]).abs());
        }
    }
    ensure(worst < 1e-6, format!("1000 rollouts, max error {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn clipped_objective() -> Outcome {
    let a = clipped_surrogate(1.5, 0.2, 1.0);
    let b = clipped_surrogate(0.5, 0.2, -1.0);
    if (a - 1.2).abs() > 1e-12 || (b + 0.8).abs() > 1e-12 {
        return Err(format!("clip points {a}, {b}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = PolicyNetwork::<f64>::new(&mut rng);
    let n = 6;
    let obs: Vec<Observation> = (0..n).map(|_| random_obs(&mut rng)).collect();
    let obs = ObsBatch::from_observations(obs.iter());
    let out = net.infer(&obs);
    let mut actions = Vec::new();
    let mut old = Vec::new();
    for m in &out.mean {
        let (a, lp) = sample(m, &out.log_std, &mut rng);
        actions.push(a);
        old.push(lp);
    }
    let advantages: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let batch = LossBatch { obs, actions, old_log_prob: old, advantages, returns: vec![0.0; n] };
    let cfg = LossConfig { entropy_coef: 0.0, value_coef: 0.0, ..LossConfig::default() };
    let (_, grads, _) = loss_and_grads(&net, &net.params, &batch, &cfg, Mode::Eval);

    // -(1/N) sum A grad log pi, seeded at the mean head
    let mut tape = Tape::new();
    let fwd = net.forward(&mut tape, &batch.obs, Mode::Eval);
    let means = tape.value(fwd.mean).data.clone();
    let ls = net.log_std();
    let mut seed = vec![0.0; n * 2];
    let mut d_ls = [0.0; 2];
    for i in 0..n {
        for d in 0..2 {
            let diff = batch.actions[i][d] - means[i * 2 + d];
            let var = (2.0 * ls[d]).exp();
            seed[i * 2 + d] = -batch.advantages[i] * diff / var / n as f64;
            d_ls[d] -= batch.advantages[i] * (diff * diff / var - 1.0) / n as f64;
        }
    }
    let pg = tape.backward(&[(fwd.mean, Tensor::from_vec(&[n, 2], seed))], &net.params.shapes());
    let mut worst: f64 = 0.0;
    for (t, (g, p)) in grads.iter().zip(&pg).enumerate() {
        if t == net.layers.log_std {
            for d in 0..2 {
                worst = worst.max((g.data[d] - d_ls[d]).abs());
            }
            continue;
        }
        for (x, y) in g.data.iter().zip(&p.data) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst < 1e-5, format!("clip(1.5)=1.2, clip(0.5)=-0.8, policy-gradient max difference {worst:.2e}"))
}

// ---------------------------------------------------------------- 5

fn corners(c: (f64, f64), theta: f64, h: (f64, f64)) -> [(f64, f64); 4] {
    let (s, co) = theta.sin_cos();
    [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(sx, sy)| {
        let (lx, ly) = (sx * h.0, sy * h.1);
        (c.0 + co * lx - s * ly, c.1 + s * lx + co * ly)
    })
}

/// Separating-axis overlap depth of two convex quads (0 when disjoint).
fn overlap_depth(a: &[(f64, f64); 4], b: &[(f64, f64); 4]) -> f64 {
    let mut depth = f64::INFINITY;
    for poly in [a, b] {
        for i in 0..4 {
            let (p, q) = (poly[i], poly[(i + 1) % 4]);
            let (nx, ny) = (q.1 - p.1, p.0 - q.0);
            let len = (nx * nx + ny * ny).sqrt();
            let proj = |pts: &[(f64, f64); 4]| {
                pts.iter().map(|v| (v.0 * nx + v.1 * ny) / len).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                })
            };
            let (a0, a1) = proj(a);
            let (b0, b1) = proj(b);
            let o = a1.min(b1) - a0.max(b0);
            if o <= 0.0 {
                return 0.0;
            }
            depth = depth.min(o);
        }
    }
    depth
}

fn wall_quad(w: &Wall) -> [(f64, f64); 4] {
    let (dx, dy) = (w.b.x - w.a.x, w.b.y - w.a.y);
    let len = (dx * dx + dy * dy).sqrt();
    let r = 0.5 * w.thickness;
    corners((0.5 * (w.a.x + w.b.x), 0.5 * (w.a.y + w.b.y)), dy.atan2(dx), (0.5 * len + r, r))
}

fn body_quad(b: &namo_core::physics::RigidBody2D) -> [(f64, f64); 4] {
    corners((b.pose.x, b.pose.y), b.pose.theta, (b.half_extents.x, b.half_extents.y))
}

fn world_penetration(w: &WorldState) -> f64 {
    let walls: Vec<_> = w.walls.iter().map(wall_quad).collect();
    let mut bodies = vec![body_quad(&w.robot)];
    bodies.extend(w.boxes.iter().flatten().map(body_quad));
    let mut worst: f64 = 0.0;
    for (i, a) in bodies.iter().enumerate() {
        for b in &bodies[i + 1..] {
            worst = worst.max(overlap_depth(a, b));
        }
        for wq in &walls {
            worst = worst.max(overlap_depth(a, wq));
        }
    }
    worst
}

fn push_world(rng: &mut ChaCha8Rng) -> WorldState {
    let c = [(-3.0, -3.0), (3.0, -3.0), (3.0, 3.0), (-3.0, 3.0)];
    let mut walls: Vec<Wall> = (0..4)
        .map(|i| Wall::new(Vec2::new(c[i].0, c[i].1), Vec2::new(c[(i + 1) % 4].0, c[(i + 1) % 4].1), 0.1))
        .collect();
    walls.push(Wall::new(Vec2::new(-3.0, 0.6), Vec2::new(-0.8, 0.6), 0.1));
    walls.push(Wall::new(Vec2::new(0.8, 0.6), Vec2::new(3.0, 0.6), 0.1));
    let robot = robot_body(Pose2D::new(rng.gen_range(-1.0..1.0), -2.0, rng.gen_range(0.6..2.5)));
    let mut w = WorldState::new(robot, vec![None; MAX_BOXES], walls);
    let mut placed = 0;
    for _ in 0..300 {
        if placed == MAX_BOXES {
            break;
        }
        let cand = Pose2D::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.2..2.2), rng.gen_range(-PI..PI));
        w.boxes[placed] = Some(box_body(cand));
        if world_penetration(&w) == 0.0 {
            placed += 1;
        } else {
            w.boxes[placed] = None;
        }
    }
    w
}

/// Drives into the boxes; returns (max penetration, final world).
fn push_run(seed: u64, substeps: usize) -> (f64, WorldState) {
    let p = PhysicsParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = push_world(&mut rng);
    let mut worst: f64 = 0.0;
    let mut a = Action::new(1.0, 0.0);
    for k in 0..substeps {
        if k % 30 == 0 {
            a = Action::new(rng.gen_range(0.3..1.0), rng.gen_range(-0.6..0.6));
        }
        step_world(&mut w, a, &p).unwrap();
        worst = worst.max(world_penetration(&w));
    }
    (worst, w)
}

fn push_physics() -> Outcome {
    let t0 = Instant::now();
    let worst = (0..1000u64).into_par_iter().map(|s| push_run(5000 + s, 240).0).reduce(|| 0.0, f64::max);

    // statics: walls never move, an idle robot among resting boxes stays put
    let p = PhysicsParams::default();
    let mut statics_ok = true;
    for s in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + s);
        let start = push_world(&mut rng);
        let mut w = start.clone();
        for _ in 0..120 {
            step_world(&mut w, Action::new(0.0, 0.0), &p).unwrap();
        }
        statics_ok &= w.walls == start.walls && w.boxes == start.boxes && w.robot.pose == start.robot.pose;
    }
    statics_ok &= push_run(7, 240).1.walls == push_world(&mut ChaCha8Rng::seed_from_u64(7)).walls;

    let serial: Vec<WorldState> = (0..16u64).map(|s| push_run(5000 + s, 240).1).collect();
    let parallel: Vec<WorldState> = (0..16u64).into_par_iter().map(|s| push_run(5000 + s, 240).1).collect();
    let bits = |w: &WorldState| -> Vec<u64> {
        std::iter::once(&w.robot)
            .chain(w.boxes.iter().flatten())
            .flat_map(|b| [b.pose.x, b.pose.y, b.pose.theta, b.linear_velocity.x, b.linear_velocity.y, b.angular_velocity])
            .map(f64::to_bits)
            .collect()
    };
    let bitwise = serial.iter().zip(&parallel).all(|(a, b)| bits(a) == bits(b));
    let elapsed = t0.elapsed();
    ensure(
        worst <= 0.01 && statics_ok && bitwise && elapsed < Duration::from_secs(300),
        format!(
            "1000 scenarios, max penetration {:.2} mm, statics {}, bitwise repeat {}, {:.0}s",
            worst * 1000.0,
            statics_ok,
            bitwise,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn spawn_statistics() -> Outcome {
    let map = builtin_map("c").unwrap();
    let n = 100_000usize;
    let mut report = Vec::new();
    let mut ok = true;
    for lambda in [0.0, 0.4, 1.0] {
        let cfg = SpawnConfig::with_lambda(lambda);
        let scenes: Vec<_> = (0..n as u64)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xACCE);
                generate_scene(&map, &cfg, &mut rng).unwrap()
            })
            .collect();
        let mut drawn = [0usize; MAX_BOXES];
        let mut challenging = [0usize; MAX_BOXES];
        let mut placed = 0usize;
        for sc in &scenes {
            for (i, k) in sc.slot_kinds.iter().enumerate() {
                drawn[i] += (*k != SlotKind::Absent) as usize;
                challenging[i] += (*k == SlotKind::Challenging) as usize;
            }
            placed += sc.boxes_present();
        }
        for i in 0..MAX_BOXES {
            let pres = drawn[i] as f64 / n as f64;
            let chal = challenging[i] as f64 / n as f64;
            let want_chal = lambda * (1.0 - cfg.p[i]);
            ok &= (pres - lambda).abs() <= 0.02 && (chal - want_chal).abs() <= 0.02;
        }
        if lambda == 0.0 {
            ok &= placed == 0;
        }
        let mean_draw = drawn.iter().sum::<usize>() as f64 / (n * MAX_BOXES) as f64;
        report.push(format!(
            "lambda {lambda}: drawn {mean_draw:.3}, placed {:.3}",
            placed as f64 / (n * MAX_BOXES) as f64
        ));
    }
    ensure(ok, format!("1e5 scenes each; {}", report.join("; ")))
}

// ---------------------------------------------------------------- 7

fn curriculum_schedule() -> Outcome {
    let mut c = CurriculumState::with_defaults(["c"]);
    let mut seen = vec![c.lambda("c").unwrap()];
    for i in 0..5000 {
        if let Some(l) = c.update("c", i % 20 != 0) {
            seen.push(l);
        }
    }
    let want = [0.2, 0.4, 0.6, 0.8, 1.0];
    let ok = seen.len() == want.len() && seen.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12);
    ensure(ok && c.lambda("c") == Some(1.0), format!("lambda sequence {seen:.1?}"))
}

// ---------------------------------------------------------------- 8

const TRAIN_UPDATES: u64 = 3000;

struct Trained {
    net: PolicyNetwork<f32>,
    completion: f64,
    updates: u64,
    seconds: f64,
}

static TRAINED: OnceLock<Trained> = OnceLock::new();

fn trained() -> &'static Trained {
    TRAINED.get_or_init(|| {
        let t0 = Instant::now();
        let setup = TrainSetup {
            train: TrainConfig { envs: 64, updates: TRAIN_UPDATES, ..TrainConfig::default() },
            env: EnvConfig::default(),
            spawn: SpawnConfig::default(),
            maps: vec![Arc::new(builtin_map("c").unwrap())],
            lambda: Some(0.2),
            seed: 1,
        };
        let window = setup.train.rolling_window;
        let mut tr = Trainer::new(setup).unwrap();
        let mut last = None;
        while tr.updates_done() < TRAIN_UPDATES {
            let m = tr.train_iteration().unwrap();
            if m.update.is_multiple_of(50) {
                eprintln!("  update {:4} completion {:.3} lr {:.1e} ({:.0}s)", m.update, m.completion_rate, m.lr, t0.elapsed().as_secs_f64());
            }
            let done = m.rolling_episodes >= window && m.completion_rate >= 0.7;
            last = Some(m);
            if done {
                break;
            }
        }
        let m = last.unwrap();
        Trained { net: tr.net.clone(), completion: m.completion_rate, updates: m.update, seconds: t0.elapsed().as_secs_f64() }
    })
}

fn scaled_training() -> Outcome {
    let t = trained();
    ensure(
        t.completion >= 0.7 && t.seconds <= 4.0 * 3600.0,
        format!("map c, lambda 0.2: rolling completion {:.3} after {} updates ({:.0}s)", t.completion, t.updates, t.seconds),
    )
}

// ---------------------------------------------------------------- 9, 10

fn sweep() -> EvalReport {
    let t = trained();
    let cfg = EvalConfig {
        maps: vec!["c".into()],
        lambdas: vec![0.0, 0.2, 0.4],
        scenes: 300,
        deterministic: true,
        noise: NoiseConfig::NONE,
        seed: 11,
        batch: 64,
    };
    let mut policy = NetworkPolicy { net: t.net.clone(), deterministic: true };
    let maps = vec![Arc::new(builtin_map("c").unwrap())];
    evaluate(&mut policy, &maps, &EnvConfig::default(), &SpawnConfig::default(), &cfg).unwrap()
}

static SWEEP: OnceLock<EvalReport> = OnceLock::new();

fn density_trend() -> Outcome {
    let cells = SWEEP.get_or_init(sweep);
    let rates: Vec<f64> = cells.cells.iter().map(|c| c.completion_rate).collect();
    let ok = rates.windows(2).all(|w| w[1] <= w[0] + 0.05);
    ensure(ok, format!("completion at lambda 0/0.2/0.4: {rates:.3?}"))
}

fn evaluation_consistency() -> Outcome {
    let first = SWEEP.get_or_init(sweep);
    let again = sweep();
    let identical = *first == again;
    let counts = first.cells.iter().all(|c| c.successes + c.timeouts == c.scenes);
    let pushed = first.episodes.iter().all(|e| e.boxes_pushed <= e.boxes_present);
    ensure(identical && counts && pushed, format!("{} episodes; repeat identical {identical}, counts sum {counts}, pushed <= present {pushed}", first.episodes.len()))
}

// ---------------------------------------------------------------- 11

fn resume_determinism() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let setup = TrainSetup {
            train: TrainConfig { envs: 4, horizon: 16, minibatch: 32, epochs: 2, updates: 200, ..TrainConfig::default() },
            env: EnvConfig { max_steps: 30, ..EnvConfig::default() },
            spawn: SpawnConfig::default(),
            maps: vec![Arc::new(builtin_map("c").unwrap())],
            lambda: None,
            seed: 21,
        };
        let mut full = Trainer::new(setup.clone()).unwrap();
        let expected: Vec<_> = (0..200).map(|_| full.train_iteration().unwrap()).collect();

        let mut first = Trainer::new(setup.clone()).unwrap();
        let mut got: Vec<_> = (0..100).map(|_| first.train_iteration().unwrap()).collect();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &first.snapshot()).unwrap();
        drop(first);
        let snap = read_checkpoint(&mut bytes.as_slice()).unwrap();
        let mut resumed = Trainer::new(setup).unwrap();
        resumed.restore(&snap).unwrap();
        got.extend((0..100).map(|_| resumed.train_iteration().unwrap()));
        let first_diff = got.iter().zip(&expected).position(|(a, b)| a != b);
        let params_equal = resumed.net.params == full.net.params;
        ensure(
            first_diff.is_none() && params_equal,
            format!("200 updates, checkpoint {} bytes at 100, first differing update {first_diff:?}, params equal {params_equal}", bytes.len()),
        )
    })
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "observation and network shapes", observation_shapes),
        (2, "gradient check", gradient_check),
        (3, "advantage oracle", advantage_oracle),
        (4, "clipped objective", clipped_objective),
        (5, "push physics", push_physics),
        (6, "spawn statistics", spawn_statistics),
        (7, "curriculum schedule", curriculum_schedule),
        (8, "scaled training", scaled_training),
        (9, "density trend", density_trend),
        (10, "evaluation consistency", evaluation_consistency),
        (11, "resume determinism", resume_determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {n} ({name}): {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
