use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use namo_core::agent::{TrainSetup, Trainer, UpdateMetrics};
use namo_core::eval::{evaluate, record_episode, to_csv, NetworkPolicy};
use namo_core::io::{load_checkpoint, resolve_map, save_checkpoint, RunConfig, TrajectoryLog};
use namo_core::selftest;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use namo_cli::render;

/// Navigation among movable obstacles: training, evaluation and rendering.
#[derive(Parser)]
#[command(name = "namo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy, writing metrics and checkpoints to the output directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint over maps and obstacle densities.
    Eval(EvalArgs),
    /// Render a trajectory log to PNG frames.
    Render(RenderArgs),
    /// Describe a map and optionally draw it.
    InspectMap(InspectArgs),
    /// Run the built-in gradient, oracle and physics checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Resume from this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Map id or map file; repeat for several maps.
    #[arg(long = "map")]
    maps: Vec<String>,
    /// Fixed obstacle density instead of the curriculum.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    envs: Option<usize>,
    #[arg(long)]
    updates: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "map")]
    maps: Vec<String>,
    /// Obstacle density; repeat to sweep.
    #[arg(long = "lambda")]
    lambdas: Vec<f64>,
    #[arg(long)]
    scenes: Option<usize>,
    /// Use the mean action instead of sampling.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<bool>,
    /// Also write trajectory logs for the first N scenes of every cell.
    #[arg(long, default_value_t = 0)]
    logs: usize,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    map: String,
    /// Write a PNG of the map here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|_| run(cli)) {
        // reader went away, e.g. `namo eval ... | head`
        if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("NAMO_THREADS") {
        let n: usize = v.parse().with_context(|| format!("NAMO_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => {
            let file = File::open(&a.log).with_context(|| format!("opening {}", a.log.display()))?;
            let log = TrajectoryLog::read(BufReader::new(file)).with_context(|| format!("reading {}", a.log.display()))?;
            let written = render::render_log(&log, &a.out)?;
            println!("wrote {} images to {}", written.len(), a.out.display());
            Ok(())
        }
        Command::InspectMap(a) => inspect_map(a),
        Command::Selftest(a) => {
            let mut failed = 0;
            for c in selftest::run_all(a.seed) {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += !c.passed as usize;
            }
            if failed > 0 {
                bail!("{failed} check(s) failed");
            }
            Ok(())
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.eval.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if !a.maps.is_empty() {
        cfg.maps = a.maps.clone();
    }
    if a.lambda.is_some() {
        cfg.lambda = a.lambda;
    }
    if let Some(e) = a.envs {
        cfg.train.envs = e;
    }
    if let Some(u) = a.updates {
        cfg.train.updates = u;
    }
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint.clone();
    }
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;

    let setup = TrainSetup {
        train: cfg.train.clone(),
        env: cfg.env.clone(),
        spawn: cfg.spawn.clone(),
        maps: cfg.resolve_maps()?,
        lambda: cfg.lambda,
        seed: cfg.seed,
    };
    let mut trainer = Trainer::new(setup)?;
    if let Some(p) = &cfg.checkpoint {
        let snap = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
        trainer.restore(&snap)?;
        log::info!("resumed from {} at update {}", p.display(), trainer.updates_done());
    }

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).context("installing signal handler")?;
    }
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = BufWriter::new(File::options().create(true).append(true).open(&metrics_path)?);
    let last = out.join("last.ckpt");
    let best_path = out.join("best.ckpt");
    let mut best = f64::NEG_INFINITY;
    let t0 = Instant::now();
    while trainer.updates_done() < cfg.train.updates {
        let m = trainer.train_iteration()?;
        serde_json::to_writer(&mut metrics, &m)?;
        metrics.write_all(b"\n")?;
        if m.rolling_episodes >= cfg.train.rolling_window && m.completion_rate > best {
            best = m.completion_rate;
            save_checkpoint(&best_path, &trainer.snapshot())?;
        }
        if m.update % cfg.checkpoint_every == 0 {
            metrics.flush()?;
            save_checkpoint(&last, &trainer.snapshot())?;
        }
        if m.update % 10 == 0 || m.update == 1 {
            report(&m, t0);
        }
        if stop.load(Ordering::SeqCst) {
            metrics.flush()?;
            save_checkpoint(&last, &trainer.snapshot())?;
            log::warn!("interrupted at update {}; checkpoint written to {}", m.update, last.display());
            std::process::exit(130);
        }
    }
    metrics.flush()?;
    save_checkpoint(&last, &trainer.snapshot())?;
    println!("finished {} updates; checkpoint {}", trainer.updates_done(), last.display());
    Ok(())
}

fn report(m: &UpdateMetrics, t0: Instant) {
    let lambdas: Vec<String> = m.lambda.iter().map(|(k, v)| format!("{k}:{v:.1}")).collect();
    log::info!(
        "update {:5} {:7.0}s reward {:7.3} completion {:.3} ({} eps) kl {:.4} lr {:.2e} lambda [{}]",
        m.update,
        t0.elapsed().as_secs_f64(),
        m.mean_reward,
        m.completion_rate,
        m.rolling_episodes,
        m.kl,
        m.lr,
        lambdas.join(" ")
    );
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if !a.maps.is_empty() {
        cfg.eval.maps = a.maps.clone();
    }
    if !a.lambdas.is_empty() {
        cfg.eval.lambdas = a.lambdas.clone();
    }
    if let Some(s) = a.scenes {
        cfg.eval.scenes = s;
    }
    if let Some(d) = a.deterministic {
        cfg.eval.deterministic = d;
    }
    cfg.eval.validate()?;
    let snap = load_checkpoint(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let net = snap.policy()?;
    let maps = cfg
        .eval
        .maps
        .iter()
        .map(|m| resolve_map(m).map(Arc::new).map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    let mut policy = NetworkPolicy { net, deterministic: cfg.eval.deterministic };
    let report = evaluate(&mut policy, &maps, &cfg.env, &cfg.spawn, &cfg.eval)?;
    let csv = to_csv(&report.cells);
    std::io::stdout().lock().write_all(csv.as_bytes())?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("eval.csv"), &csv)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("eval.json"))?), &report)?;
    if a.logs > 0 {
        let env_cfg = namo_core::env::EnvConfig { noise: cfg.eval.noise, ..cfg.env.clone() };
        let dir = out.join("trajectories");
        std::fs::create_dir_all(&dir)?;
        for map in &maps {
            for &lambda in &cfg.eval.lambdas {
                let spawn = namo_core::scene::SpawnConfig { lambda, ..cfg.spawn.clone() };
                let seeds =
                    report.episodes.iter().filter(|e| e.map == map.id && e.lambda == lambda).take(a.logs).map(|e| e.seed);
                for (k, seed) in seeds.enumerate() {
                    let log = record_episode(&mut policy, map.clone(), &env_cfg, &spawn, seed, Some(snap.meta.config_hash.clone()))?;
                    write_log(&dir.join(format!("{}_{lambda:.1}_{k:03}.jsonl", map.id)), &log)?;
                }
            }
        }
    }
    Ok(())
}

fn write_log(path: &Path, log: &TrajectoryLog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    log.write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn inspect_map(a: InspectArgs) -> Result<()> {
    let map = resolve_map(&a.map).map_err(anyhow::Error::msg)?;
    let free = map.reachable_mask.iter().filter(|&&f| f).count();
    let summary = serde_json::json!({
        "document": map.document(),
        "walls": map.walls.len(),
        "reachable_fraction": free as f64 / map.reachable_mask.len().max(1) as f64,
    });
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary)?)?;
    if let Some(out) = a.out {
        render::render_map(&map).save(&out).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
