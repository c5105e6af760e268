//! Flat `key = value` run configuration covering every tunable, with
//! strict unknown-key rejection and a canonical echo that is embedded in
//! every output artifact.

use anyhow::{anyhow, bail, Context, Result};
use sitegrid_core::env::{ChannelParams, RewardParams};
use sitegrid_core::map::{builtin_map, PortfolioMap};
use sitegrid_core::net::ArchConfig;
use sitegrid_core::obs::ObsConfig;
use sitegrid_core::scenario::{ScenarioConfig, TaskMode};
use sitegrid_core::ddqn::TrainConfig;
use std::collections::BTreeMap;
use std::path::Path;

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: TaskMode,
    /// `builtin:<name>` or a map file path.
    pub map_ref: String,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub obs: ObsConfig,
    pub reward: RewardParams,
    pub channel: ChannelParams,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub eval_episodes: usize,
    pub checkpoint_every: usize,
    pub sweep_agents: usize,
    pub sweep_train_steps: usize,
    pub sweep_eval_episodes: usize,
}

struct Raw {
    kv: BTreeMap<String, String>,
    used: std::collections::BTreeSet<String>,
}

impl Raw {
    fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let _ = self.used.insert(key.to_string());
        match self.kv.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| anyhow!("config key {key}: bad value {v:?}: {e}")),
        }
    }

    fn get_str(&mut self, key: &str, default: &str) -> String {
        let _ = self.used.insert(key.to_string());
        self.kv
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Parses the `key = value` grammar: one pair per line, `#` lines are
    /// comments, unknown keys are a hard error.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                bail!("config line {}: duplicate key {}", i + 1, k.trim());
            }
        }
        let mut raw = Raw {
            kv,
            used: Default::default(),
        };

        let mode_s = raw.get_str("mode", "cra");
        let mode = TaskMode::parse(&mode_s)
            .ok_or_else(|| anyhow!("config key mode: expected cra or dh, got {mode_s:?}"))?;
        let map_ref = raw.get_str("map", "builtin:site32");
        let seed: u64 = raw.get("seed", 0u64)?;

        let scenario = ScenarioConfig {
            mode,
            budget_range: (raw.get("budget_min", 50u32)?, raw.get("budget_max", 150u32)?),
            cra_shape_count_range: (
                raw.get("cra_shapes_min", 3u32)?,
                raw.get("cra_shapes_max", 8u32)?,
            ),
            cra_coverage_range: (
                raw.get("cra_cover_min", 0.2f64)?,
                raw.get("cra_cover_max", 0.5f64)?,
            ),
            dh_device_count_range: (
                raw.get("dh_devices_min", 3u32)?,
                raw.get("dh_devices_max", 10u32)?,
            ),
            dh_data_range: (raw.get("dh_data_min", 5.0f64)?, raw.get("dh_data_max", 20.0f64)?),
            seed,
        };
        scenario
            .validate()
            .map_err(|e| anyhow!("invalid scenario config: {e}"))?;

        let obs = ObsConfig {
            proj: raw.get("proj", 17usize)?,
            port: raw.get("port", 3usize)?,
        };

        // Default progress reward depends on the mode: per covered cell for
        // CRA, per data unit for DH.
        let default_r_c = match mode {
            TaskMode::Cra => 0.4,
            TaskMode::Dh => 0.2,
        };
        let reward = RewardParams {
            r_c: raw.get("r_c", default_r_c)?,
            r_sc: raw.get("r_sc", -1.0f64)?,
            r_dec: raw.get("r_dec", -5.0f64)?,
            r_delay: raw.get("r_delay", -0.1f64)?,
        };
        reward.validate().map_err(|e| anyhow!("invalid reward config: {e}"))?;

        let channel = ChannelParams {
            alpha_los: raw.get("alpha_los", 2.3f64)?,
            alpha_nlos: raw.get("alpha_nlos", 3.6f64)?,
            shadow_sigma: raw.get("shadow_sigma", 2.0f64)?,
            reference_rate: raw.get("reference_rate", 1.0f64)?,
            rate_floor: raw.get("rate_floor", 0.05f64)?,
        };
        channel
            .validate()
            .map_err(|e| anyhow!("invalid channel config: {e}"))?;

        let hidden_s = raw.get_str("hidden", "256,256,256");
        let hidden: Vec<usize> = hidden_s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|e| anyhow!("config key hidden: {e}"))?;
        if hidden.len() != 3 {
            bail!("config key hidden: expected exactly 3 comma-separated sizes");
        }
        let arch = ArchConfig {
            n_k: raw.get("n_k", 2usize)?,
            n_c: raw.get("n_c", 16usize)?,
            s_k: raw.get("s_k", 5usize)?,
            hidden_sizes: [hidden[0], hidden[1], hidden[2]],
            action_count: sitegrid_core::env::ACTION_COUNT,
        };
        arch.validate().map_err(|e| anyhow!("invalid architecture: {e}"))?;

        let total_steps: usize = raw.get("total_steps", 10_000usize)?;
        let temp_decay: usize = raw.get("temp_decay_steps", 0usize)?;
        let train = TrainConfig {
            gamma: raw.get("gamma", 0.95f64)?,
            tau: raw.get("tau", 0.005f64)?,
            learning_rate: raw.get("learning_rate", 3e-3f64)?,
            batch_size: raw.get("batch_size", 128usize)?,
            replay_capacity: raw.get("replay_capacity", 50_000usize)?,
            temp_initial: raw.get("temp_initial", 1.0f64)?,
            temp_final: raw.get("temp_final", 0.1f64)?,
            // 0 means auto: decay over the first 80% of training.
            temp_decay_steps: if temp_decay == 0 {
                total_steps * 4 / 5
            } else {
                temp_decay
            },
            total_steps,
            grad_clip: raw.get("grad_clip", 10.0f64)?,
            seed,
        };
        train.validate().map_err(|e| anyhow!("invalid training config: {e}"))?;

        let checkpoint_every_raw: usize = raw.get("checkpoint_every", 0usize)?;
        let checkpoint_every = if checkpoint_every_raw == 0 {
            (total_steps / 10).max(1)
        } else {
            checkpoint_every_raw
        };
        let eval_episodes: usize = raw.get("eval_episodes", 1000usize)?;
        let sweep_agents: usize = raw.get("sweep_agents", 1usize)?;
        let sweep_train_steps_raw: usize = raw.get("sweep_train_steps", 0usize)?;
        let sweep_eval_raw: usize = raw.get("sweep_eval_episodes", 0usize)?;

        let unknown: Vec<&String> = raw.kv.keys().filter(|k| !raw.used.contains(*k)).collect();
        if !unknown.is_empty() {
            bail!(
                "unknown config key(s): {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }

        Ok(RunConfig {
            mode,
            map_ref,
            seed,
            scenario,
            obs,
            reward,
            channel,
            arch,
            train,
            eval_episodes,
            checkpoint_every,
            sweep_agents,
            sweep_train_steps: if sweep_train_steps_raw == 0 {
                total_steps
            } else {
                sweep_train_steps_raw
            },
            sweep_eval_episodes: if sweep_eval_raw == 0 {
                eval_episodes
            } else {
                sweep_eval_raw
            },
        })
    }

    /// Overrides the seed everywhere it is mirrored.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.seed = seed;
        self.scenario.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Loads the configured map: `builtin:<name>` or a file path.
    pub fn load_map(&self) -> Result<PortfolioMap> {
        if let Some(name) = self.map_ref.strip_prefix("builtin:") {
            return builtin_map(name)
                .ok_or_else(|| anyhow!("unknown builtin map {name:?} (have desk16, site32, site50)"));
        }
        let text = std::fs::read_to_string(&self.map_ref)
            .with_context(|| format!("reading map {}", self.map_ref))?;
        PortfolioMap::parse(&text).map_err(|e| anyhow!("map {}: {e}", self.map_ref))
    }

    /// Canonical `key = value` echo of the effective configuration, in a
    /// fixed key order. Embedded into every output artifact.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("mode", self.mode.as_str().to_string());
        kv("map", self.map_ref.clone());
        kv("seed", self.seed.to_string());
        kv("budget_min", self.scenario.budget_range.0.to_string());
        kv("budget_max", self.scenario.budget_range.1.to_string());
        kv("cra_shapes_min", self.scenario.cra_shape_count_range.0.to_string());
        kv("cra_shapes_max", self.scenario.cra_shape_count_range.1.to_string());
        kv("cra_cover_min", self.scenario.cra_coverage_range.0.to_string());
        kv("cra_cover_max", self.scenario.cra_coverage_range.1.to_string());
        kv("dh_devices_min", self.scenario.dh_device_count_range.0.to_string());
        kv("dh_devices_max", self.scenario.dh_device_count_range.1.to_string());
        kv("dh_data_min", self.scenario.dh_data_range.0.to_string());
        kv("dh_data_max", self.scenario.dh_data_range.1.to_string());
        kv("proj", self.obs.proj.to_string());
        kv("port", self.obs.port.to_string());
        kv("r_c", self.reward.r_c.to_string());
        kv("r_sc", self.reward.r_sc.to_string());
        kv("r_dec", self.reward.r_dec.to_string());
        kv("r_delay", self.reward.r_delay.to_string());
        kv("alpha_los", self.channel.alpha_los.to_string());
        kv("alpha_nlos", self.channel.alpha_nlos.to_string());
        kv("shadow_sigma", self.channel.shadow_sigma.to_string());
        kv("reference_rate", self.channel.reference_rate.to_string());
        kv("rate_floor", self.channel.rate_floor.to_string());
        kv("n_k", self.arch.n_k.to_string());
        kv("n_c", self.arch.n_c.to_string());
        kv("s_k", self.arch.s_k.to_string());
        kv(
            "hidden",
            format!(
                "{},{},{}",
                self.arch.hidden_sizes[0], self.arch.hidden_sizes[1], self.arch.hidden_sizes[2]
            ),
        );
        kv("gamma", self.train.gamma.to_string());
        kv("tau", self.train.tau.to_string());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("replay_capacity", self.train.replay_capacity.to_string());
        kv("temp_initial", self.train.temp_initial.to_string());
        kv("temp_final", self.train.temp_final.to_string());
        kv("temp_decay_steps", self.train.temp_decay_steps.to_string());
        kv("total_steps", self.train.total_steps.to_string());
        kv("grad_clip", self.train.grad_clip.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("sweep_agents", self.sweep_agents.to_string());
        kv("sweep_train_steps", self.sweep_train_steps.to_string());
        kv("sweep_eval_episodes", self.sweep_eval_episodes.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_echo_reparses() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.mode, TaskMode::Cra);
        assert_eq!(cfg.obs.proj, 17);
        assert_eq!(cfg.reward.r_c, 0.4);
        assert_eq!(cfg.train.temp_decay_steps, 8000);
        assert_eq!(cfg.checkpoint_every, 1000);
        // The echo is itself a valid config that reproduces the values.
        let again = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(again.echo(), cfg.echo());
    }

    #[test]
    fn dh_mode_switches_r_c_default() {
        let cfg = RunConfig::parse("mode = dh\n").unwrap();
        assert_eq!(cfg.reward.r_c, 0.2);
        let cfg = RunConfig::parse("mode = dh\nr_c = 0.7\n").unwrap();
        assert_eq!(cfg.reward.r_c, 0.7);
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let err = RunConfig::parse("proj = 9\nprojj = 9\n").unwrap_err();
        assert!(err.to_string().contains("projj"), "{err}");
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::parse("# a comment\n\nproj = 9\n").unwrap();
        assert_eq!(cfg.obs.proj, 9);
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(RunConfig::parse("proj = 9\nproj = 11\n").is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = RunConfig::parse("gamma = fast\n").unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = RunConfig::parse("mode = walk\n").unwrap_err();
        assert!(err.to_string().contains("mode"), "{err}");
    }

    #[test]
    fn seed_override_propagates() {
        let cfg = RunConfig::parse("seed = 5\n").unwrap().with_seed(9);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scenario.seed, 9);
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn builtin_maps_load() {
        let cfg = RunConfig::parse("map = builtin:desk16\n").unwrap();
        assert_eq!(cfg.load_map().unwrap().size(), 16);
        let cfg = RunConfig::parse("map = builtin:nowhere\n").unwrap();
        assert!(cfg.load_map().is_err());
    }
}
