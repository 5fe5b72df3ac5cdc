//! The act / insert / sample / learn loop for one run, online or offline.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::variant::VariantSpec;
use crate::envs::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::learner::{
    argmax, c51_loss_and_grad, c51_project, td_loss_and_grad, ApproximatorKind, Architecture,
    CategoricalSupport, Head, Learner, QFunction, StateAction, Workspace,
};
use crate::nstep::{assemble, NStepSample, TargetSpec};
use crate::optim::OptimizerConfig;
use crate::replay::Transition;
use crate::sampler::{PriorityConfig, ReplayMemory};
use crate::schedule::{default_warmup, EpsilonSchedule, ReplayControl, ReplayMode, ReplayRatio};

/// Learner and evaluation hyperparameters shared by every variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub approximator: ApproximatorKind,
    pub hidden: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync: u64,
    pub adam_lr: f64,
    pub adam_eps: f64,
    pub rmsprop_lr: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub per_alpha: f64,
    pub per_beta: f64,
    pub priority_floor: f64,
    pub atoms: usize,
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    /// Fraction of the expected environment steps over which epsilon decays.
    pub epsilon_fraction: f64,
    /// Evaluation points over the gradient budget.
    pub iterations: u64,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    /// Fraction of trailing iterations averaged into the final score.
    pub final_fraction: f64,
    /// Score episodes by discounted (rather than plain) return.
    pub discounted_eval: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            approximator: ApproximatorKind::Mlp,
            hidden: 64,
            target_sync: 200,
            adam_lr: 1e-3,
            adam_eps: 1e-8,
            rmsprop_lr: 2.5e-3,
            rmsprop_decay: 0.95,
            rmsprop_eps: 1e-5,
            per_alpha: 0.5,
            per_beta: 0.5,
            priority_floor: 1e-3,
            atoms: 51,
            epsilon_start: 1.0,
            epsilon_final: 0.05,
            epsilon_fraction: 0.1,
            iterations: 20,
            eval_episodes: 5,
            eval_epsilon: 0.001,
            final_fraction: 0.1,
            discounted_eval: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(
                    format!("agent.{key}"),
                    format!("{v} not in [0, 1]"),
                ))
            }
        };
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("agent.{key}"), format!("{v} must be > 0")))
            }
        };
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(
                "agent.gamma",
                format!("{} not in [0, 1)", self.gamma),
            ));
        }
        positive("batch_size", self.batch_size as f64)?;
        positive("target_sync", self.target_sync as f64)?;
        positive("adam_lr", self.adam_lr)?;
        positive("adam_eps", self.adam_eps)?;
        positive("rmsprop_lr", self.rmsprop_lr)?;
        positive("rmsprop_eps", self.rmsprop_eps)?;
        positive("priority_floor", self.priority_floor)?;
        positive("iterations", self.iterations as f64)?;
        positive("eval_episodes", self.eval_episodes as f64)?;
        positive("final_fraction", self.final_fraction)?;
        if self.approximator == ApproximatorKind::Mlp {
            positive("hidden", self.hidden as f64)?;
        }
        if self.atoms < 2 {
            return Err(Error::config("agent.atoms", "must be >= 2"));
        }
        if !(self.per_alpha >= 0.0) {
            return Err(Error::config("agent.per_alpha", "must be >= 0"));
        }
        unit("rmsprop_decay", self.rmsprop_decay)?;
        unit("per_beta", self.per_beta)?;
        unit("epsilon_start", self.epsilon_start)?;
        unit("epsilon_final", self.epsilon_final)?;
        unit("epsilon_fraction", self.epsilon_fraction)?;
        unit("eval_epsilon", self.eval_epsilon)?;
        unit("final_fraction", self.final_fraction)?;
        Ok(())
    }

    pub fn optimizer(&self, variant: &VariantSpec) -> OptimizerConfig {
        if variant.use_adam {
            OptimizerConfig::Adam {
                lr: self.adam_lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: self.adam_eps,
            }
        } else {
            OptimizerConfig::RmsProp {
                lr: self.rmsprop_lr,
                decay: self.rmsprop_decay,
                eps: self.rmsprop_eps,
            }
        }
    }

    pub fn priority(&self) -> PriorityConfig {
        PriorityConfig {
            alpha: self.per_alpha,
            beta: self.per_beta,
            priority_floor: self.priority_floor,
        }
    }

    pub fn architecture(
        &self,
        variant: &VariantSpec,
        env: &EnvSpec,
        obs_dim: usize,
        actions: usize,
    ) -> Result<Architecture> {
        let head = if variant.use_c51 {
            let (lo, hi) = env.return_range();
            Head::Categorical(CategoricalSupport::new(lo, hi, self.atoms)?)
        } else {
            Head::Scalar
        };
        Ok(Architecture {
            kind: self.approximator,
            obs_dim,
            hidden: self.hidden,
            actions,
            head,
        })
    }
}

/// Replay capacity and how the replay ratio is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaySettings {
    pub mode: ReplayMode,
    pub capacity: u64,
    /// Gradient updates per environment step (`fixed_ratio` mode).
    pub ratio: f64,
    /// Oldest-policy age in gradient steps (`fixed_oldest` mode).
    pub oldest_age: u64,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self {
            mode: ReplayMode::FixedRatio,
            capacity: 5_000,
            ratio: 0.25,
            oldest_age: 1_250,
        }
    }
}

impl ReplaySettings {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::config("replay.capacity", "must be > 0"));
        }
        match self.mode {
            ReplayMode::FixedRatio => {
                ReplayRatio::from_f64(self.ratio)
                    .map_err(|_| Error::config("replay.ratio", format!("{} must be > 0", self.ratio)))?;
            }
            ReplayMode::FixedOldest => {
                if self.oldest_age == 0 {
                    return Err(Error::config("replay.oldest_age", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn with_capacity(self, capacity: u64) -> Self {
        Self { capacity, ..self }
    }

    pub fn effective_ratio(&self) -> Result<ReplayRatio> {
        match self.mode {
            ReplayMode::FixedRatio => ReplayRatio::from_f64(self.ratio),
            ReplayMode::FixedOldest => crate::schedule::ratio_from(self.capacity, self.oldest_age),
        }
    }

    /// Steady-state oldest-policy age, `ratio * capacity`.
    pub fn effective_oldest_age(&self) -> Result<f64> {
        Ok(match self.mode {
            ReplayMode::FixedRatio => self.effective_ratio()?.as_f64() * self.capacity as f64,
            ReplayMode::FixedOldest => self.oldest_age as f64,
        })
    }

    pub fn control(&self, warmup: u64) -> Result<ReplayControl> {
        Ok(match self.mode {
            ReplayMode::FixedRatio => {
                ReplayControl::fixed_ratio(self.capacity, self.effective_ratio()?, warmup)
            }
            ReplayMode::FixedOldest => ReplayControl::fixed_oldest(self.capacity, self.oldest_age, warmup)?,
        })
    }
}

/// Everything needed to execute one run deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub variant: VariantSpec,
    pub env: EnvSpec,
    pub replay: ReplaySettings,
    pub agent: AgentConfig,
    /// Total gradient updates.
    pub budget: u64,
    /// Seed index within the study (reported).
    pub seed: u64,
    /// Seed actually used to initialise the run's random streams.
    pub run_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub variant_spec: VariantSpec,
    pub env: String,
    pub env_spec: EnvSpec,
    pub capacity: u64,
    pub oldest_age: f64,
    pub ratio: f64,
    pub seed: u64,
    pub run_seed: u64,
    pub offline: bool,
    /// Evaluation return at each iteration.
    pub returns: Vec<f64>,
    /// Mean of the trailing `final_fraction` of `returns`; `None` when the run
    /// diverged or has no evaluations.
    pub final_score: Option<f64>,
    pub env_steps: u64,
    pub gradient_steps: u64,
    pub diverged: Option<String>,
}

/// Random streams of a run, all derived from `run_seed`.
mod stream {
    pub const INIT: u64 = 1;
    pub const ACT: u64 = 2;
    pub const SAMPLE: u64 = 3;
    pub const ENV: u64 = 4;
    pub const EVAL: u64 = 5;
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn final_score(returns: &[f64], fraction: f64) -> Option<f64> {
    if returns.is_empty() {
        return None;
    }
    let k = ((returns.len() as f64 * fraction).ceil() as usize).clamp(1, returns.len());
    let tail = &returns[returns.len() - k..];
    Some(tail.iter().sum::<f64>() / k as f64)
}

/// Online learner state for one run.
pub struct Agent {
    learner: Learner,
    memory: ReplayMemory,
    target: TargetSpec,
    config: AgentConfig,
    sample_rng: ChaCha8Rng,
    ws: Workspace,
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl Agent {
    pub fn new(
        variant: &VariantSpec,
        env: &EnvSpec,
        obs_dim: usize,
        actions: usize,
        capacity: usize,
        config: &AgentConfig,
        run_seed: u64,
    ) -> Result<Self> {
        let arch = config.architecture(variant, env, obs_dim, actions)?;
        let online = QFunction::init(arch, &mut stream_rng(run_seed, stream::INIT))?;
        let learner = Learner::new(online, config.optimizer(variant), config.target_sync)?;
        let target = variant.target_spec(config.gamma)?;
        let memory = ReplayMemory::new(
            capacity,
            target.horizon(),
            variant.use_per.then(|| config.priority()),
        )?;
        Ok(Self {
            learner,
            memory,
            target,
            config: config.clone(),
            sample_rng: stream_rng(run_seed, stream::SAMPLE),
            ws: Workspace::default(),
            values: Vec::new(),
            probs: Vec::new(),
        })
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn gradient_steps(&self) -> u64 {
        self.learner.gradient_steps()
    }

    pub fn insert(&mut self, t: Transition) -> u64 {
        self.memory.insert(t)
    }

    /// Epsilon-greedy action under the online network.
    pub fn act<R: Rng + ?Sized>(&mut self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        Ok(self.act_traced(state, epsilon, rng)?.0)
    }

    /// Like [`Agent::act`], also reporting whether the action was the random one.
    pub fn act_traced<R: Rng + ?Sized>(
        &mut self,
        state: &[f64],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(usize, bool)> {
        // Both draws are always made so the stream layout does not depend on epsilon.
        let explore = rng.gen::<f64>() < epsilon;
        let random = rng.gen_range(0..self.learner.online().architecture().actions);
        if explore {
            return Ok((random, true));
        }
        self.learner
            .online()
            .action_values_into(state, &mut self.ws, &mut self.values, &mut self.probs)?;
        Ok((argmax(&self.values), false))
    }

    /// One sampled minibatch update.
    pub fn train_step(&mut self) -> Result<f64> {
        let batch = self.memory.sample(self.config.batch_size, &mut self.sample_rng)?;
        let samples = batch
            .indices
            .iter()
            .map(|&i| assemble(self.memory.buffer(), i, &self.target))
            .collect::<Result<Vec<NStepSample>>>()?;
        let pairs: Vec<StateAction<'_>> = samples
            .iter()
            .map(|s| StateAction {
                state: &s.state,
                action: s.action,
            })
            .collect();
        let target_net = self.learner.target();
        let out = match target_net.architecture().head {
            Head::Scalar => {
                let mut targets = Vec::with_capacity(samples.len());
                for s in &samples {
                    let y = match &s.bootstrap {
                        Some(b) => {
                            target_net.forward(&b.state, &mut self.ws)?;
                            let max = self.ws.outputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            s.reward + b.discount * max
                        }
                        None => s.reward,
                    };
                    targets.push(y);
                }
                td_loss_and_grad(self.learner.online(), &pairs, &targets, &batch.is_weights)?
            }
            Head::Categorical(support) => {
                let k = support.atoms;
                let mut projected = Vec::with_capacity(samples.len() * k);
                let uniform = vec![1.0 / k as f64; k];
                for s in &samples {
                    let row = match &s.bootstrap {
                        Some(b) => {
                            target_net.action_values_into(
                                &b.state,
                                &mut self.ws,
                                &mut self.values,
                                &mut self.probs,
                            )?;
                            let a = argmax(&self.values);
                            c51_project(&support, &self.probs[a * k..(a + 1) * k], s.reward, b.discount)
                        }
                        None => c51_project(&support, &uniform, s.reward, 0.0),
                    };
                    projected.extend(row);
                }
                c51_loss_and_grad(self.learner.online(), &pairs, &projected, &batch.is_weights)?
            }
        };
        drop(pairs);
        self.learner.apply_gradient(&out.gradient)?;
        self.memory.update_priorities(&batch.indices, &out.per_sample)?;
        Ok(out.loss)
    }

    /// Mean episode return of the current online network, learning disabled.
    pub fn evaluate<R: Rng + ?Sized>(&mut self, env: &mut dyn Environment, rng: &mut R) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..self.config.eval_episodes {
            let mut obs = env.reset();
            let mut discount = 1.0;
            let mut ret = 0.0;
            loop {
                let a = self.act(&obs, self.config.eval_epsilon, rng)?;
                let out = env.step(a)?;
                ret += discount * out.reward;
                if self.config.discounted_eval {
                    discount *= self.config.gamma;
                }
                if out.done() {
                    break;
                }
                obs = out.observation;
            }
            total += ret;
        }
        Ok(total / self.config.eval_episodes as f64)
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence(_) | Error::NonFinite(_))
}

fn base_result(spec: &RunSpec, offline: bool) -> Result<RunResult> {
    Ok(RunResult {
        variant: spec.variant.label(),
        variant_spec: spec.variant,
        env: spec.env.label(),
        env_spec: spec.env,
        capacity: spec.replay.capacity,
        oldest_age: spec.replay.effective_oldest_age()?,
        ratio: spec.replay.effective_ratio()?.as_f64(),
        seed: spec.seed,
        run_seed: spec.run_seed,
        offline,
        returns: Vec::new(),
        final_score: None,
        env_steps: 0,
        gradient_steps: 0,
        diverged: None,
    })
}

/// Runs one online agent to its gradient budget.
pub fn run_agent(spec: &RunSpec) -> Result<RunResult> {
    run_agent_logged(spec, None)
}

/// Like [`run_agent`], additionally appending every generated transition to `log`.
pub fn run_agent_logged(spec: &RunSpec, mut log: Option<&mut Vec<Transition>>) -> Result<RunResult> {
    spec.variant.validate()?;
    spec.env.validate()?;
    spec.replay.validate()?;
    spec.agent.validate()?;
    let mut result = base_result(spec, false)?;
    let mut env_seeds = stream_rng(spec.run_seed, stream::ENV);
    let mut env = spec.env.build(env_seeds.next_u64())?;
    let mut eval_env = spec.env.build(env_seeds.next_u64())?;
    let mut act_rng = stream_rng(spec.run_seed, stream::ACT);
    let mut eval_rng = stream_rng(spec.run_seed, stream::EVAL);

    let capacity = spec.replay.capacity as usize;
    let warmup = default_warmup(spec.agent.batch_size, capacity);
    let mut control = spec.replay.control(warmup)?;
    let ratio = control.ratio();
    let expected_env_steps = warmup as f64 + spec.budget as f64 / ratio.as_f64();
    let eps = EpsilonSchedule {
        start: spec.agent.epsilon_start,
        end: spec.agent.epsilon_final,
        horizon: ((expected_env_steps * spec.agent.epsilon_fraction) as u64).max(1),
    };
    let eval_period = (spec.budget / spec.agent.iterations).max(1);

    let mut agent = Agent::new(
        &spec.variant,
        &spec.env,
        env.observation_dim(),
        env.action_count(),
        capacity,
        &spec.agent,
        spec.run_seed,
    )?;

    let mut obs = env.reset();
    let mut episode_id = 0u64;
    let mut env_steps = 0u64;
    'outer: while agent.gradient_steps() < spec.budget {
        let action = agent.act(&obs, eps.value(env_steps), &mut act_rng)?;
        let out = env.step(action)?;
        let t = Transition {
            state: obs.clone(),
            action,
            reward: out.reward,
            next_state: out.observation.clone(),
            terminal: out.terminal,
            truncated: out.truncated,
            policy_stamp: agent.gradient_steps(),
            env_step: env_steps,
            episode_id,
        };
        if let Some(log) = log.as_deref_mut() {
            log.push(t.clone());
        }
        agent.insert(t);
        env_steps += 1;
        obs = if out.done() {
            episode_id += 1;
            env.reset()
        } else {
            out.observation
        };
        if !control.warmed_up(agent.memory().len() as u64) {
            continue;
        }
        for _ in 0..control.updates_due() {
            if agent.gradient_steps() >= spec.budget {
                break;
            }
            match agent.train_step() {
                Ok(_) => {}
                Err(e) if is_divergence(&e) => {
                    result.diverged = Some(e.to_string());
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
            if agent.gradient_steps() % eval_period == 0 {
                result
                    .returns
                    .push(agent.evaluate(eval_env.as_mut(), &mut eval_rng)?);
            }
        }
    }
    result.env_steps = env_steps;
    result.gradient_steps = agent.gradient_steps();
    if result.diverged.is_none() {
        result.final_score = final_score(&result.returns, spec.agent.final_fraction);
    }
    Ok(result)
}

/// Trains on a fixed dataset only. The environment is used solely to evaluate
/// the frozen policy; the first evaluation happens before any update.
pub fn offline_train(dataset: &Dataset, spec: &RunSpec) -> Result<RunResult> {
    spec.variant.validate()?;
    spec.agent.validate()?;
    if dataset.transitions.is_empty() {
        return Err(Error::Dataset {
            record: 0,
            message: "dataset is empty".into(),
        });
    }
    let mut spec = spec.clone();
    spec.replay.capacity = dataset.transitions.len() as u64;
    let mut result = base_result(&spec, true)?;
    let mut env_seeds = stream_rng(spec.run_seed, stream::ENV);
    env_seeds.next_u64();
    let mut eval_env = spec.env.build(env_seeds.next_u64())?;
    if eval_env.observation_dim() != dataset.obs_dim || eval_env.action_count() != dataset.actions {
        return Err(Error::Dataset {
            record: 0,
            message: format!(
                "dataset shape ({}, {}) does not match environment ({}, {})",
                dataset.obs_dim,
                dataset.actions,
                eval_env.observation_dim(),
                eval_env.action_count()
            ),
        });
    }
    let mut eval_rng = stream_rng(spec.run_seed, stream::EVAL);
    let mut agent = Agent::new(
        &spec.variant,
        &spec.env,
        dataset.obs_dim,
        dataset.actions,
        dataset.transitions.len(),
        &spec.agent,
        spec.run_seed,
    )?;
    for t in &dataset.transitions {
        agent.insert(t.clone());
    }
    let eval_period = (spec.budget / spec.agent.iterations).max(1);
    result
        .returns
        .push(agent.evaluate(eval_env.as_mut(), &mut eval_rng)?);
    while agent.gradient_steps() < spec.budget {
        match agent.train_step() {
            Ok(_) => {}
            Err(e) if is_divergence(&e) => {
                result.diverged = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
        if agent.gradient_steps() % eval_period == 0 {
            result
                .returns
                .push(agent.evaluate(eval_env.as_mut(), &mut eval_rng)?);
        }
    }
    result.gradient_steps = agent.gradient_steps();
    if result.diverged.is_none() {
        result.final_score = final_score(&result.returns, spec.agent.final_fraction);
    }
    Ok(result)
}

/// Runs an online agent and keeps its complete transition log as a dataset.
pub fn collect_dataset(spec: &RunSpec) -> Result<(RunResult, Dataset)> {
    let mut log = Vec::new();
    let result = run_agent_logged(spec, Some(&mut log))?;
    let env = spec.env.build(0)?;
    Ok((
        result,
        Dataset {
            obs_dim: env.observation_dim(),
            actions: env.action_count(),
            transitions: log,
        },
    ))
}
