//! Subcommand implementations. Every output artifact starts with a `# `
//! reproducibility header carrying the effective config and seed; CSV
//! bodies are pure functions of the inputs.

use crate::config::RunConfig;
use crate::render::render_svg;
use crate::trajectory::{trajectory_from_csv, trajectory_to_csv};
use anyhow::{anyhow, bail, Context, Result};
use sitegrid_core::checkpoint::{load_checkpoint_file, save_checkpoint_file};
use sitegrid_core::ddqn::{EpisodeSource, Trainer};
use sitegrid_core::eval::{
    monte_carlo_eval, run_episode_traced, sweep, EvalReport, EvalSetup, Policy, QPolicy,
    RandomPolicy,
};
use sitegrid_core::net::{NetShape, QNetwork};
use sitegrid_core::rng::{derive_seed, tags};
use sitegrid_core::scenario::Scenario;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn echo_comment(cfg: &RunConfig, kind: &str) -> String {
    let mut out = format!("# sitegrid {kind} v1\n");
    for line in cfg.echo().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Generates one scenario from the config and seed and writes it to
/// `<out>/scenario.txt`.
pub fn cmd_gen(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let map = cfg.load_map()?;
    let scenario = Scenario::generate(&map, &cfg.scenario, cfg.seed)?;
    let path = out_dir.join("scenario.txt");
    std::fs::write(&path, scenario.to_text())?;
    Ok(path)
}

/// Artifacts produced by a training run.
pub struct TrainArtifacts {
    pub final_checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub periodic_checkpoints: Vec<PathBuf>,
}

/// Trains for `total_steps`, writing periodic checkpoints, a final
/// checkpoint, and a metrics CSV with one row per finished episode.
pub fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let map = cfg.load_map()?;
    let source = EpisodeSource::new(map, cfg.scenario.clone(), cfg.reward, cfg.channel, cfg.seed);
    let mut trainer = Trainer::new(source, cfg.obs, cfg.arch, cfg.train)?;

    let mut metrics = echo_comment(cfg, "train metrics");
    metrics.push_str("step,loss,episode_reward,episode_crar\n");
    let mut episode_losses: Vec<f64> = Vec::new();
    let mut periodic = Vec::new();
    for step in 0..cfg.train.total_steps {
        let log = trainer
            .train_step()
            .with_context(|| format!("training aborted at step {step}"))?;
        if let Some(l) = log.loss {
            episode_losses.push(l);
        }
        if let Some(ep) = log.episode {
            let mean_loss = if episode_losses.is_empty() {
                String::new()
            } else {
                let m = episode_losses.iter().sum::<f64>() / episode_losses.len() as f64;
                m.to_string()
            };
            let _ = writeln!(
                metrics,
                "{},{},{},{}",
                ep.end_step, mean_loss, ep.reward_sum, ep.crar
            );
            episode_losses.clear();
        }
        if (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.train.total_steps {
            let p = out_dir.join(format!("checkpoint_{:08}.ckpt", step + 1));
            save_checkpoint_file(&trainer.online, &cfg.echo(), &p)?;
            periodic.push(p);
        }
    }
    let final_checkpoint = out_dir.join("checkpoint_final.ckpt");
    save_checkpoint_file(&trainer.online, &cfg.echo(), &final_checkpoint)?;
    let metrics_csv = out_dir.join("metrics.csv");
    std::fs::write(&metrics_csv, metrics)?;
    Ok(TrainArtifacts {
        final_checkpoint,
        metrics_csv,
        periodic_checkpoints: periodic,
    })
}

/// Renders an evaluation report as CSV: one row per episode plus a final
/// summary row.
pub fn report_to_csv(report: &EvalReport, cfg: &RunConfig) -> String {
    let mut out = echo_comment(cfg, "eval report");
    out.push_str("episode,seed,success,cr,crar,steps_used,reward_sum\n");
    for (i, e) in report.episodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i,
            derive_seed(report.seed, tags::EPISODE, i as u64),
            e.success as u8,
            e.cr,
            e.crar,
            e.steps_used,
            e.reward_sum
        );
    }
    let _ = writeln!(
        out,
        "mean,,{},{},{},,",
        report.success_rate, report.mean_cr, report.mean_crar
    );
    out
}

/// Loads a checkpoint and verifies it matches the configured architecture
/// and observation shapes.
pub fn load_policy_net(cfg: &RunConfig, checkpoint: &Path) -> Result<QNetwork> {
    let map = cfg.load_map()?;
    let (net, _echo) = load_checkpoint_file(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let want_shape = NetShape::from_obs(&cfg.obs, map.size());
    if net.arch != cfg.arch || net.shape != want_shape {
        bail!(
            "checkpoint does not match the config: checkpoint arch {:?} shape {:?}, config arch {:?} shape {:?}",
            net.arch,
            net.shape,
            cfg.arch,
            want_shape
        );
    }
    Ok(net)
}

/// Monte Carlo evaluation of a checkpointed policy (or the random
/// baseline), writing `eval.csv` and optionally the first `trace_n`
/// episode trajectories plus their scenarios.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    random_policy: bool,
    episodes: Option<usize>,
    trace_n: usize,
    out_dir: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let map = cfg.load_map()?;
    let n = episodes.unwrap_or(cfg.eval_episodes);
    let setup = EvalSetup {
        reward: cfg.reward,
        channel: cfg.channel,
        obs: cfg.obs,
    };
    let net = match (random_policy, checkpoint) {
        (true, _) => None,
        (false, Some(p)) => Some(load_policy_net(cfg, p)?),
        (false, None) => bail!("eval needs --checkpoint PATH or --random-policy"),
    };
    let mut policy: Box<dyn Policy> = match &net {
        Some(net) => Box::new(QPolicy { net }),
        None => Box::new(RandomPolicy),
    };

    let report = monte_carlo_eval(policy.as_mut(), &map, &cfg.scenario, &setup, n, cfg.seed)?;
    let path = out_dir.join("eval.csv");
    std::fs::write(&path, report_to_csv(&report, cfg))?;

    for i in 0..trace_n.min(n) {
        let scenario = Scenario::generate(
            &map,
            &cfg.scenario,
            derive_seed(cfg.seed, tags::SCENARIO, i as u64),
        )?;
        let (_result, trajectory) = run_episode_traced(
            policy.as_mut(),
            &scenario,
            &setup,
            derive_seed(cfg.seed, tags::EPISODE, i as u64),
        )?;
        std::fs::write(
            out_dir.join(format!("trace_{i:03}.csv")),
            trajectory_to_csv(&trajectory, &cfg.echo()),
        )?;
        std::fs::write(
            out_dir.join(format!("scenario_{i:03}.txt")),
            scenario.to_text(),
        )?;
    }
    Ok(path)
}

/// Trains and evaluates one agent per (proj, port) cell and writes the
/// sweep table. The wall-clock column is informational and not covered by
/// the byte-identity contract.
pub fn cmd_sweep(
    cfg: &RunConfig,
    proj_values: &[usize],
    port_values: &[usize],
    out_dir: &Path,
) -> Result<PathBuf> {
    if proj_values.is_empty() || port_values.is_empty() {
        bail!("sweep needs nonempty --proj and --port lists");
    }
    std::fs::create_dir_all(out_dir)?;
    let map = cfg.load_map()?;
    let mut train_cfg = cfg.train;
    train_cfg.total_steps = cfg.sweep_train_steps;
    train_cfg.temp_decay_steps = cfg.sweep_train_steps * 4 / 5;
    let cells = sweep(
        &map,
        &cfg.scenario,
        cfg.reward,
        cfg.channel,
        cfg.arch,
        &train_cfg,
        proj_values,
        port_values,
        cfg.sweep_agents,
        cfg.sweep_eval_episodes,
        cfg.seed,
    )?;
    let mut out = echo_comment(cfg, "sweep");
    out.push_str("proj,port,flatten_arch,flatten_eq19,mean_crar,success_rate,agents,train_seconds\n");
    for c in &cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3}",
            c.proj,
            c.port,
            c.flatten_arch,
            c.flatten_eq19.map(|v| v.to_string()).unwrap_or_default(),
            c.mean_crar,
            c.success_rate,
            c.agents,
            c.train_seconds
        );
    }
    let path = out_dir.join("sweep.csv");
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Renders a scenario file plus a trajectory file to an SVG image.
pub fn cmd_render(scenario_path: &Path, trajectory_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let scenario_text = std::fs::read_to_string(scenario_path)
        .with_context(|| format!("reading scenario {}", scenario_path.display()))?;
    let scenario = Scenario::parse(&scenario_text)
        .map_err(|e| anyhow!("scenario {}: {e}", scenario_path.display()))?;
    let trajectory_text = std::fs::read_to_string(trajectory_path)
        .with_context(|| format!("reading trajectory {}", trajectory_path.display()))?;
    let trajectory = trajectory_from_csv(&trajectory_text)?;
    let echo = format!(
        "scenario = {}\ntrajectory = {}\nseed = {}",
        scenario_path.display(),
        trajectory_path.display(),
        scenario.cfg.seed
    );
    let svg = render_svg(&scenario, &trajectory, &echo)?;
    let path = out_dir.join("render.svg");
    std::fs::write(&path, svg)?;
    Ok(path)
}

/// Tabulates the literal-formula and architecture-derived flatten sizes
/// for a (proj, port) grid at the configured map size and architecture.
pub fn cmd_sizecalc(cfg: &RunConfig, proj_values: &[usize], port_values: &[usize]) -> Result<String> {
    let map = cfg.load_map()?;
    let c = map.size();
    let a = &cfg.arch;
    let mut out = format!(
        "flatten sizes at C = {c}, n_k = {}, n_c = {}, s_k = {}\n",
        a.n_k, a.n_c, a.s_k
    );
    let _ = writeln!(out, "{:>6} {:>6} {:>10} {:>10}", "proj", "port", "eq19", "arch");
    let mut flagged = false;
    for &proj in proj_values {
        for &port in port_values {
            let obs = sitegrid_core::obs::ObsConfig { proj, port };
            let eq19 = sitegrid_core::obs::flatten_size_eq19(&obs, c, a.n_c, a.n_k, a.s_k);
            let arch = sitegrid_core::obs::actual_flatten_size(&obs, c, a.n_c, a.n_k, a.s_k);
            let zero_term = eq19
                .as_ref()
                .map(|_| proj == a.n_k * (a.s_k / 2))
                .unwrap_or(false);
            let fmt = |r: Result<usize, sitegrid_core::obs::ObsError>| match r {
                Ok(v) => v.to_string(),
                Err(_) => "err".to_string(),
            };
            let mark = if zero_term || arch.is_err() || eq19.is_err() {
                flagged = true;
                " *"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:>6} {:>6} {:>10} {:>10}{mark}",
                proj,
                port,
                fmt(eq19),
                fmt(arch)
            );
        }
    }
    if flagged {
        out.push_str("* degenerate cell: zero or invalid spatial term\n");
    }
    Ok(out)
}
