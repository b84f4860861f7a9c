use image::RgbImage;
use namo_cli::render::{render_log, Canvas, Scene, BOX};
use namo_core::env::{EnvConfig, NamoEnv};
use namo_core::io::TrajectoryLog;
use namo_core::physics::{box_body, robot_body, Action, Pose2D};
use namo_core::scene::{builtin_map, SpawnConfig};
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

fn namo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_namo"))
        .args(args)
        .current_dir(dir)
        .env("NAMO_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Robot placed behind a single box and driven straight into it.
fn push_log() -> TrajectoryLog {
    let map = Arc::new(builtin_map("c").unwrap());
    let mut env = NamoEnv::new(map, EnvConfig { max_steps: 12, ..EnvConfig::default() });
    env.reset(&SpawnConfig::with_lambda(0.0), 1).unwrap();
    let mut st = env.state().unwrap().clone();
    st.world.robot = robot_body(Pose2D::new(0.0, -2.2, std::f64::consts::FRAC_PI_2));
    st.world.boxes.iter_mut().for_each(|b| *b = None);
    st.world.boxes[0] = Some(box_body(Pose2D::new(0.0, -1.4, 0.0)));
    env.restore(st);
    let mut log = TrajectoryLog::start(&env, None);
    loop {
        let a = Action::new(1.0, 0.0);
        let r = env.step(a).unwrap();
        log.push(&env, a, &r);
        if r.status.done {
            return log;
        }
    }
}

fn box_centroid(img: &RgbImage) -> (f64, f64) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for (x, y, p) in img.enumerate_pixels() {
        if *p == BOX {
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            n += 1.0;
        }
    }
    assert!(n > 0.0, "no box pixels");
    (sx / n, sy / n)
}

#[test]
fn rendered_box_follows_logged_pose() {
    let log = push_log();
    let map = builtin_map("c").unwrap();
    let scene = Scene { map: &map, log: &log };
    let canvas = Canvas::new(map.room_bounds);
    let first = box_centroid(&scene.frame(0));
    let last_frame = scene.frame(log.records.len());
    let last = box_centroid(&last_frame);
    let logged = log.records.last().unwrap().boxes[0].unwrap();
    let expect = canvas.to_pixel(logged.position());
    assert!((last.0 - expect.0).abs() < 1.5 && (last.1 - expect.1).abs() < 1.5, "{last:?} vs {expect:?}");
    let start = canvas.to_pixel(log.header.boxes[0].unwrap().position());
    assert!((first.0 - start.0).abs() < 1.5 && (first.1 - start.1).abs() < 1.5);
    // pushed upward on screen by more than 10 cm
    let moved = logged.y - log.header.boxes[0].unwrap().y;
    assert!(moved > 0.1, "box moved {moved} m");
    assert!(first.1 - last.1 > 0.1 * 512.0 / 6.0);
}

#[test]
fn rendering_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let log = push_log();
    let a = render_log(&log, &dir.path().join("a")).unwrap();
    let b = render_log(&log, &dir.path().join("b")).unwrap();
    assert_eq!(a.len(), log.records.len() + 2);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let img = image::open(&a[0]).unwrap();
    assert_eq!((img.width(), img.height()), (512, 512));
}

#[test]
fn train_resume_eval_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = namo(&["train", "--map", "c", "--lambda", "0.4", "--envs", "2", "--updates", "2", "--seed", "3", "--out", "run"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("run/last.ckpt").is_file());
    let o = namo(
        &["train", "--map", "c", "--lambda", "0.4", "--envs", "2", "--updates", "3", "--seed", "3", "--out", "run", "--checkpoint", "run/last.ckpt"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(d.join("run/metrics.jsonl")).unwrap();
    let updates: Vec<u64> =
        metrics.lines().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["update"].as_u64().unwrap()).collect();
    assert_eq!(updates, vec![1, 2, 3]);

    let o = namo(
        &["eval", "--checkpoint", "run/last.ckpt", "--map", "c", "--lambda", "0.0", "--lambda", "0.4", "--scenes", "3", "--out", "ev", "--logs", "1"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(d.join("ev/eval.csv")).unwrap(), csv);
    let again = namo(&["eval", "--checkpoint", "run/last.ckpt", "--map", "c", "--lambda", "0.0", "--lambda", "0.4", "--scenes", "3", "--out", "ev2"], d);
    assert_eq!(stdout(&again), csv);

    let o = namo(&["render", "--log", "ev/trajectories/c_0.4_000.jsonl", "--out", "frames"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("frames/summary.png").is_file());
    assert!(d.join("frames/frame_0000.png").is_file());
}

#[test]
fn corrupt_log_names_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut buf = Vec::new();
    push_log().write(&mut buf).unwrap();
    let mut lines: Vec<String> = String::from_utf8(buf).unwrap().lines().map(String::from).collect();
    lines[4] = "not json".into();
    std::fs::write(dir.path().join("bad.jsonl"), lines.join("\n")).unwrap();
    let o = namo(&["render", "--log", "bad.jsonl", "--out", "f"], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5 (record 3)"), "{err}");
}

#[test]
fn inspect_map_reports_document() {
    let dir = tempfile::tempdir().unwrap();
    let o = namo(&["inspect-map", "--map", "c", "--out", "c.png"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["document"]["id"], "c");
    assert!(v["reachable_fraction"].as_f64().unwrap() > 0.3);
    assert!(dir.path().join("c.png").is_file());
}

#[test]
fn errors_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = namo(&["train", "--envs", "0", "--map", "c"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.envs"));
    let o = namo(&["eval", "--map", "c"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--checkpoint"));
    std::fs::write(dir.path().join("bad.toml"), "[train]\nepochs = \"two\"\n").unwrap();
    let o = namo(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.epochs"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = namo(&["selftest"], dir.path());
    let out = stdout(&o);
    assert!(o.status.success(), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{out}");
}
