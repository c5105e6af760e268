// Scratch learning trial for picking desk-scale training configs.
// Usage: bench_scratch <mode> <lr> <batch> <steps> <seed> <r_dec> <gamma> [rate] [floor]
use sitegrid_core::ddqn::{EpisodeSource, TrainConfig, Trainer};
use sitegrid_core::env::{default_channel_params, default_reward_params, ChannelParams};
use sitegrid_core::eval::{monte_carlo_eval, EvalSetup, QPolicy, RandomPolicy};
use sitegrid_core::map::builtin_map;
use sitegrid_core::net::ArchConfig;
use sitegrid_core::obs::ObsConfig;
use sitegrid_core::scenario::{ScenarioConfig, TaskMode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = if args[1] == "dh" { TaskMode::Dh } else { TaskMode::Cra };
    let lr: f64 = args[2].parse().unwrap();
    let batch: usize = args[3].parse().unwrap();
    let steps: usize = args[4].parse().unwrap();
    let seed: u64 = args[5].parse().unwrap();
    let r_dec: f64 = args[6].parse().unwrap();
    let gamma: f64 = args[7].parse().unwrap();
    let rate: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(5.0);
    let floor: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(0.25);

    let map = builtin_map("desk16").unwrap();
    let scenario_cfg = ScenarioConfig {
        mode,
        budget_range: (20, 40),
        cra_shape_count_range: (2, 5),
        cra_coverage_range: (0.2, 0.5),
        dh_device_count_range: (3, 5),
        dh_data_range: (5.0, 10.0),
        seed: 0,
    };
    let mut reward = default_reward_params(mode);
    reward.r_dec = r_dec;
    let channel = match mode {
        TaskMode::Cra => default_channel_params(),
        TaskMode::Dh => ChannelParams {
            reference_rate: rate,
            rate_floor: floor,
            ..default_channel_params()
        },
    };
    let obs = ObsConfig { proj: 9, port: 3 };
    let arch = ArchConfig {
        n_c: 8,
        hidden_sizes: [64, 64, 64],
        ..ArchConfig::default()
    };
    let cfg = TrainConfig {
        batch_size: batch,
        replay_capacity: 20_000,
        learning_rate: lr,
        gamma,
        ..TrainConfig::new(steps, seed)
    };
    let source = EpisodeSource::new(map.clone(), scenario_cfg.clone(), reward, channel, seed);
    let mut trainer = Trainer::new(source, obs, arch, cfg).unwrap();

    let t0 = std::time::Instant::now();
    let mut window: Vec<(f64, f64, bool)> = Vec::new();
    let mut losses: Vec<f64> = Vec::new();
    for step in 0..steps {
        let log = trainer.train_step().unwrap();
        if let Some(l) = log.loss {
            losses.push(l);
        }
        if let Some(ep) = log.episode {
            window.push((ep.crar, ep.cr, ep.success));
        }
        if (step + 1) % 15000 == 0 {
            let n = window.len().max(1) as f64;
            let crar = window.iter().map(|w| w.0).sum::<f64>() / n;
            let cr = window.iter().map(|w| w.1).sum::<f64>() / n;
            let succ = window.iter().filter(|w| w.2).count() as f64 / n;
            let loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
            println!(
                "step {:>6}: crar {:.3} cr {:.3} succ {:.3} loss {:.4} eps {} ({:.1} min)",
                step + 1,
                crar,
                cr,
                succ,
                loss,
                window.len(),
                t0.elapsed().as_secs_f64() / 60.0
            );
            window.clear();
            losses.clear();
        }
    }

    let setup = EvalSetup { reward, channel, obs };
    let mut policy = QPolicy { net: &trainer.online };
    let trained = monte_carlo_eval(&mut policy, &map, &scenario_cfg, &setup, 200, 777).unwrap();
    let baseline = monte_carlo_eval(&mut RandomPolicy, &map, &scenario_cfg, &setup, 200, 777).unwrap();
    println!(
        "TRAINED: succ {:.3} cr {:.3} crar {:.3} | RANDOM: succ {:.3} cr {:.3} crar {:.3} | total {:.1} min",
        trained.success_rate,
        trained.mean_cr,
        trained.mean_crar,
        baseline.success_rate,
        baseline.mean_cr,
        baseline.mean_crar,
        t0.elapsed().as_secs_f64() / 60.0
    );
}
