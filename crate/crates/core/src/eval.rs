//! Evaluation harness: episode rollout, Monte Carlo metric estimation,
//! baseline policies, an exhaustive small-instance oracle, and the
//! (proj, port) parameter sweep.

use crate::ddqn::{act, ActMode, EpisodeSource, TrainConfig, TrainError, Trainer};
use crate::env::{Action, ChannelParams, Env, RewardComponents, RewardParams, ACTION_COUNT};
use crate::map::{Cell, PortfolioMap};
use crate::net::{ArchConfig, NetError, NetInput, QNetwork};
use crate::obs::{
    actual_flatten_size, assemble_observation, flatten_size_eq19, ObsConfig, ObsError, ObsNorm,
    Observation,
};
use crate::rng::{derive_seed, rng_from, tags, Rng};
use crate::scenario::{Scenario, ScenarioConfig, ScenarioError};
use rand::Rng as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Obs(#[from] ObsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Step(#[from] crate::env::StepError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("oracle precondition violated: {0}")]
    Oracle(String),
}

/// Parameters shared by every episode of an evaluation.
#[derive(Clone, Copy, Debug)]
pub struct EvalSetup {
    pub reward: RewardParams,
    pub channel: ChannelParams,
    pub obs: ObsConfig,
}

/// A decision rule over observations.
pub trait Policy {
    /// Called at the start of every episode.
    fn reset(&mut self) {}
    fn select(&mut self, obs: &Observation, rng: &mut Rng) -> Result<Action, EvalError>;
}

/// Uniform over the six actions.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn select(&mut self, _obs: &Observation, rng: &mut Rng) -> Result<Action, EvalError> {
        Ok(Action::from_ordinal(rng.random_range(0..ACTION_COUNT)).unwrap())
    }
}

/// Greedy argmax over a trained Q-network.
pub struct QPolicy<'a> {
    pub net: &'a QNetwork,
}

impl Policy for QPolicy<'_> {
    fn select(&mut self, obs: &Observation, rng: &mut Rng) -> Result<Action, EvalError> {
        let input = NetInput::from_observation(obs);
        let a = act(self.net, &input, ActMode::Exploit, rng)?;
        Ok(Action::from_ordinal(a).unwrap())
    }
}

/// Plays a fixed action sequence, holding once it runs out.
pub struct ScriptedPolicy {
    actions: Vec<Action>,
    next: usize,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<Action>) -> ScriptedPolicy {
        ScriptedPolicy { actions, next: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn reset(&mut self) {
        self.next = 0;
    }

    fn select(&mut self, _obs: &Observation, _rng: &mut Rng) -> Result<Action, EvalError> {
        let a = self.actions.get(self.next).copied().unwrap_or(Action::Hold);
        self.next += 1;
        Ok(a)
    }
}

/// Outcome of one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub cr: f64,
    pub crar: f64,
    pub steps_used: u32,
    pub reward_sum: f64,
}

impl EpisodeResult {
    fn from_env(env: &Env) -> EpisodeResult {
        EpisodeResult {
            success: env.state.success,
            cr: env.cr(),
            crar: env.crar(),
            steps_used: env.steps_used,
            reward_sum: env.reward_sum,
        }
    }
}

/// One recorded step of a trajectory (post-step position).
#[derive(Clone, Copy, Debug)]
pub struct TraceStep {
    pub index: u32,
    pub position: Cell,
    pub action: Action,
    pub components: RewardComponents,
    pub budget_left: u32,
    /// Cumulative covered cells / collected data after this step.
    pub progress_total: f64,
    pub comm_device: Option<usize>,
    pub terminal: bool,
}

/// A full episode trace for rendering.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub start: Cell,
    pub steps: Vec<TraceStep>,
}

fn env_observation(env: &Env, obs: &ObsConfig) -> Result<Observation, ObsError> {
    assemble_observation(
        &env.map,
        &env.target_layer(),
        &env.state,
        obs,
        &ObsNorm {
            target_scale: env.target_scale(),
            budget_scale: env.budget_scale(),
        },
    )
}

/// Rolls a policy to termination. Fully deterministic in
/// (policy, scenario, seed).
pub fn run_episode(
    policy: &mut dyn Policy,
    scenario: &Scenario,
    setup: &EvalSetup,
    seed: u64,
) -> Result<EpisodeResult, EvalError> {
    let (result, _) = run_episode_inner(policy, scenario, setup, seed, false)?;
    Ok(result)
}

/// As [`run_episode`], additionally recording the trajectory.
pub fn run_episode_traced(
    policy: &mut dyn Policy,
    scenario: &Scenario,
    setup: &EvalSetup,
    seed: u64,
) -> Result<(EpisodeResult, Trajectory), EvalError> {
    let (result, trace) = run_episode_inner(policy, scenario, setup, seed, true)?;
    Ok((result, trace.expect("trace requested")))
}

fn run_episode_inner(
    policy: &mut dyn Policy,
    scenario: &Scenario,
    setup: &EvalSetup,
    seed: u64,
    record: bool,
) -> Result<(EpisodeResult, Option<Trajectory>), EvalError> {
    let mut env = Env::new(scenario, setup.reward, setup.channel, seed);
    let mut trace = record.then(|| Trajectory {
        start: env.state.position,
        steps: Vec::new(),
    });
    policy.reset();
    let mut rng = rng_from(derive_seed(seed, tags::POLICY, 1));
    let mut index = 0u32;
    while !env.is_terminal() {
        let obs = env_observation(&env, &setup.obs)?;
        let action = policy.select(&obs, &mut rng)?;
        let outcome = env.step(action)?;
        if let Some(t) = trace.as_mut() {
            t.steps.push(TraceStep {
                index,
                position: env.state.position,
                action,
                components: outcome.components,
                budget_left: env.state.budget,
                progress_total: env.progress_sum,
                comm_device: outcome.comm_device,
                terminal: env.is_terminal(),
            });
        }
        index += 1;
    }
    Ok((EpisodeResult::from_env(&env), trace))
}

/// Aggregated Monte Carlo results.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeResult>,
    pub success_rate: f64,
    pub mean_cr: f64,
    pub mean_crar: f64,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<EpisodeResult>, seed: u64) -> EvalReport {
        let n = episodes.len().max(1) as f64;
        let success_rate = episodes.iter().filter(|e| e.success).count() as f64 / n;
        let mean_cr = episodes.iter().map(|e| e.cr).sum::<f64>() / n;
        let mean_crar = episodes.iter().map(|e| e.crar).sum::<f64>() / n;
        EvalReport {
            episodes,
            success_rate,
            mean_cr,
            mean_crar,
            seed,
        }
    }
}

/// Runs `n` episodes on freshly generated scenarios with derived seeds and
/// aggregates the metrics.
pub fn monte_carlo_eval(
    policy: &mut dyn Policy,
    map: &PortfolioMap,
    scenario_cfg: &ScenarioConfig,
    setup: &EvalSetup,
    n: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n {
        let scenario =
            Scenario::generate(map, scenario_cfg, derive_seed(seed, tags::SCENARIO, i as u64))?;
        let result = run_episode(
            policy,
            &scenario,
            setup,
            derive_seed(seed, tags::EPISODE, i as u64),
        )?;
        episodes.push(result);
    }
    Ok(EvalReport::from_episodes(episodes, seed))
}

/// The oracle's best-found value: maximal CRAR, ties broken by fewer steps.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    pub crar: f64,
    pub steps: u32,
    pub actions: Vec<Action>,
}

/// Budget bound above which 6^budget enumeration is refused.
pub const ORACLE_MAX_BUDGET: u32 = 10;

/// Brute-force maximization of CRAR over all action sequences. Requires
/// deterministic dynamics: the channel must have shadow fading disabled.
pub fn exhaustive_oracle(
    scenario: &Scenario,
    setup: &EvalSetup,
    seed: u64,
) -> Result<OracleOutcome, EvalError> {
    if setup.channel.shadow_sigma != 0.0 {
        return Err(EvalError::Oracle(
            "shadow fading must be disabled (shadow_sigma = 0)".into(),
        ));
    }
    let env = Env::new(scenario, setup.reward, setup.channel, seed);
    if env.state.budget > ORACLE_MAX_BUDGET {
        return Err(EvalError::Oracle(format!(
            "budget {} exceeds the enumerable bound {ORACLE_MAX_BUDGET}",
            env.state.budget
        )));
    }
    let mut best = OracleOutcome {
        crar: 0.0,
        steps: 0,
        actions: Vec::new(),
    };
    if env.is_terminal() {
        return Ok(best);
    }
    let mut found_terminal = false;
    let mut stack = Vec::new();
    search(&env, &mut stack, &mut best, &mut found_terminal)?;
    Ok(best)
}

fn search(
    env: &Env,
    stack: &mut Vec<Action>,
    best: &mut OracleOutcome,
    found: &mut bool,
) -> Result<(), EvalError> {
    for action in Action::ALL {
        let mut child = env.clone();
        let _ = child.step(action)?;
        stack.push(action);
        if child.is_terminal() {
            let crar = child.crar();
            let steps = child.steps_used;
            let better = !*found
                || crar > best.crar
                || (crar == best.crar && steps < best.steps);
            if better {
                *best = OracleOutcome {
                    crar,
                    steps,
                    actions: stack.clone(),
                };
                *found = true;
            }
        } else {
            search(&child, stack, best, found)?;
        }
        let _ = stack.pop();
    }
    Ok(())
}

/// One cell of the (proj, port) sweep.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub proj: usize,
    pub port: usize,
    pub flatten_arch: usize,
    /// Literal formula value; absent when the formula rejects the cell.
    pub flatten_eq19: Option<usize>,
    pub mean_crar: f64,
    pub success_rate: f64,
    pub agents: usize,
    /// Training wall-clock for the cell (not part of any determinism
    /// contract).
    pub train_seconds: f64,
}

/// Trains and evaluates one agent per (agent index, cell) and tabulates
/// flatten sizes, metrics and wall time for every (proj, port) pair.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    map: &PortfolioMap,
    scenario_cfg: &ScenarioConfig,
    reward: RewardParams,
    channel: ChannelParams,
    arch: ArchConfig,
    train_template: &TrainConfig,
    proj_values: &[usize],
    port_values: &[usize],
    agents_per_cell: usize,
    eval_episodes: usize,
    seed: u64,
) -> Result<Vec<SweepCell>, EvalError> {
    let mut cells = Vec::with_capacity(proj_values.len() * port_values.len());
    for (ci, &proj) in proj_values.iter().enumerate() {
        for (cj, &port) in port_values.iter().enumerate() {
            let obs = ObsConfig { proj, port };
            obs.validate(map.size())?;
            let flatten_arch =
                actual_flatten_size(&obs, map.size(), arch.n_c, arch.n_k, arch.s_k)?;
            let flatten_eq19 =
                flatten_size_eq19(&obs, map.size(), arch.n_c, arch.n_k, arch.s_k).ok();
            let cell_tag = (ci * port_values.len() + cj) as u64;
            let start = std::time::Instant::now();
            let mut reports = Vec::with_capacity(agents_per_cell);
            for a in 0..agents_per_cell {
                let agent_seed = derive_seed(seed, tags::SWEEP, cell_tag * 1000 + a as u64);
                let mut cfg = *train_template;
                cfg.seed = agent_seed;
                let source = EpisodeSource::new(
                    map.clone(),
                    scenario_cfg.clone(),
                    reward,
                    channel,
                    agent_seed,
                );
                let mut trainer = Trainer::new(source, obs, arch, cfg)?;
                for _ in 0..cfg.total_steps {
                    let _ = trainer.train_step()?;
                }
                let setup = EvalSetup {
                    reward,
                    channel,
                    obs,
                };
                let mut policy = QPolicy {
                    net: &trainer.online,
                };
                reports.push(monte_carlo_eval(
                    &mut policy,
                    map,
                    scenario_cfg,
                    &setup,
                    eval_episodes,
                    derive_seed(agent_seed, tags::SWEEP, 1),
                )?);
            }
            let train_seconds = start.elapsed().as_secs_f64();
            let n = reports.len().max(1) as f64;
            cells.push(SweepCell {
                proj,
                port,
                flatten_arch,
                flatten_eq19,
                mean_crar: reports.iter().map(|r| r.mean_crar).sum::<f64>() / n,
                success_rate: reports.iter().map(|r| r.success_rate).sum::<f64>() / n,
                agents: agents_per_cell,
                train_seconds,
            });
        }
    }
    Ok(cells)
}
