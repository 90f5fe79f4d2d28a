//! Online training loop: blended-MPC action selection, planner-generated
//! value targets, replay, Q updates and λ scheduling, plus the seeded
//! validation protocol shared by all agents.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blending::BlendConfig;
use crate::cartpole::{self, CartpoleEnv};
use crate::error::{Error, Result};
use crate::mdp::EnvModel;
use crate::mppi::{ControlPlan, MppiConfig, PlanOutcome, ValueFn, ZeroValue, plan_action};
use crate::qnet::{AdamState, QNetwork, adam_step};
use crate::replay::{ReplayBuffer, TargetSample};
use crate::seeding::{Stream, combine, stream_rng};

/// Swing-up success: the pole stays within this angle of upright...
pub const SUCCESS_ANGLE: f64 = 0.2;
/// ...for this many final steps of an episode.
pub const SUCCESS_WINDOW: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaScheduleKind {
    Constant,
    SublinearDecay,
}

/// λ over training steps. The sublinear decay is
/// `λ_t = λ0 / (1 + κ·sqrt(t))` with κ solved so that `λ_T = λ_final`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub kind: LambdaScheduleKind,
    pub lambda0: f64,
    pub lambda_final: f64,
    pub total_steps: u64,
    pub kappa: f64,
}

impl LambdaSchedule {
    pub fn constant(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid_arg(format!("lambda must lie in [0,1], got {lambda}")));
        }
        Ok(Self {
            kind: LambdaScheduleKind::Constant,
            lambda0: lambda,
            lambda_final: lambda,
            total_steps: 0,
            kappa: 0.0,
        })
    }

    pub fn sublinear(lambda0: f64, lambda_final: f64, total_steps: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda0) || !(0.0..=1.0).contains(&lambda_final) {
            return Err(Error::invalid_arg("lambda endpoints must lie in [0,1]"));
        }
        if lambda_final > lambda0 {
            return Err(Error::invalid_arg("sublinear decay needs lambda_final <= lambda0"));
        }
        if lambda_final <= 0.0 {
            return Err(Error::invalid_arg("sublinear decay needs lambda_final > 0"));
        }
        if total_steps == 0 {
            return Err(Error::invalid_arg("schedule needs total_steps >= 1"));
        }
        let kappa = (lambda0 / lambda_final - 1.0) / (total_steps as f64).sqrt();
        Ok(Self {
            kind: LambdaScheduleKind::SublinearDecay,
            lambda0,
            lambda_final,
            total_steps,
            kappa,
        })
    }

    pub fn lambda_at(&self, t: u64) -> f64 {
        match self.kind {
            LambdaScheduleKind::Constant => self.lambda0,
            LambdaScheduleKind::SublinearDecay => {
                self.lambda0 / (1.0 + self.kappa * (t as f64).sqrt())
            }
        }
    }
}

/// Everything one training run needs. `planner_env` is what the planner
/// believes; `true_env` is what actions are executed on.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub true_env: CartpoleEnv,
    pub planner_env: CartpoleEnv,
    pub mppi: MppiConfig,
    pub schedule: LambdaSchedule,
    pub episode_steps: usize,
    pub total_steps: u64,
    pub validation_interval: u64,
    pub validation_episodes: usize,
    pub buffer_capacity: usize,
    /// Minibatch size K.
    pub batch_size: usize,
    /// Minibatches per update N.
    pub minibatch_count: usize,
    /// Update every `t_update` environment steps.
    pub update_frequency: u64,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
    pub train_seed: u64,
    pub validation_seed: u64,
    /// Store planner values from action selection as targets (the practical
    /// online mode). When false, targets are recomputed from scratch at
    /// update time by fresh planner invocations.
    pub online_targets: bool,
    /// False for pure-MPC agents: no Q-network, no updates, value fixed at 0.
    pub learning_enabled: bool,
    /// Keep per-step records for fidelity tests (costly; off by default).
    pub record_transitions: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.mppi.validate()?;
        self.true_env.params.validate()?;
        self.planner_env.params.validate()?;
        if self.episode_steps == 0
            || self.total_steps == 0
            || self.validation_interval == 0
            || self.validation_episodes == 0
            || self.buffer_capacity == 0
            || self.batch_size == 0
            || self.minibatch_count == 0
            || self.update_frequency == 0
        {
            return Err(Error::invalid_arg("all trainer counts must be positive"));
        }
        if self.total_steps % self.validation_interval != 0 {
            return Err(Error::invalid_arg(
                "validation_interval must divide total_steps so the curve grid is regular",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid_arg("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// One validation row of the learning curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub lambda: f64,
    pub mean_reward: f64,
    pub stderr: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub mean_reward: f64,
    pub stderr: f64,
    pub success_rate: f64,
    pub episode_rewards: Vec<f64>,
}

/// Record of one stored target, kept when `record_transitions` is on so the
/// online-mode targets can be recomputed offline and compared exactly.
#[derive(Clone, Debug)]
pub struct TargetRecord {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub cost: f64,
    pub next_state: Vec<f64>,
    /// Warm-start plan the bootstrap planning call started from.
    pub warm_plan: ControlPlan,
    /// Q parameters the bootstrap planning call saw.
    pub net_snapshot: QNetwork,
    pub stream: Stream,
    pub stream_index: u64,
    pub lambda: f64,
    pub stored_target: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainDiagnostics {
    pub executed_actions: Vec<Vec<f64>>,
    pub target_records: Vec<TargetRecord>,
    pub planner_underflow_events: u64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub points: Vec<CurvePoint>,
    pub net: Option<QNetwork>,
    pub diagnostics: TrainDiagnostics,
}

/// Hook invoked at each validation point (checkpointing lives behind this).
pub trait TrainObserver {
    fn on_validation(
        &mut self,
        step: u64,
        lambda: f64,
        net: Option<&QNetwork>,
        report: &ValidationReport,
    ) -> Result<()>;
}

/// No-op observer.
pub struct NullObserver;

impl TrainObserver for NullObserver {
    fn on_validation(&mut self, _: u64, _: f64, _: Option<&QNetwork>, _: &ValidationReport) -> Result<()> {
        Ok(())
    }
}

/// Planner-bootstrapped value target: `cost + γ · (optimized blended value
/// from next_state)`.
pub fn compute_target(
    cost: f64,
    next_state: &[f64],
    warm_plan: ControlPlan,
    model: &dyn EnvModel,
    value_fn: &dyn ValueFn,
    cfg: &MppiConfig,
    blend: &BlendConfig,
    rng: &mut dyn Rng,
) -> Result<f64> {
    let out = plan_action(next_state, warm_plan, model, value_fn, cfg, blend, rng)?;
    Ok(cost + blend.gamma * out.value)
}

/// Runs the seeded validation protocol: `n_episodes` episodes from start
/// states drawn from `validation_seed` alone, planner noise drawn from
/// `noise_key`, actions executed on the true environment. Reward is the
/// negated summed cost of an episode.
#[allow(clippy::too_many_arguments)]
pub fn validate(
    true_env: &CartpoleEnv,
    planner_env: &CartpoleEnv,
    value_fn: &dyn ValueFn,
    lambda: f64,
    mppi: &MppiConfig,
    episode_steps: usize,
    n_episodes: usize,
    validation_seed: u64,
    noise_key: u64,
) -> Result<ValidationReport> {
    let blend = mppi.blend(lambda)?;
    let episodes: Result<Vec<(f64, bool)>> = (0..n_episodes)
        .into_par_iter()
        .map(|ep| {
            let start = cartpole::reset(&mut stream_rng(validation_seed, Stream::ValidationStart, ep as u64));
            let mut rng = stream_rng(noise_key, Stream::ValidationNoise, ep as u64);
            let mut state = start.to_vec();
            let mut plan = ControlPlan::zeros(mppi.horizon, 1);
            let mut total_cost = 0.0;
            let mut upright_tail = 0usize;
            for _ in 0..episode_steps {
                let out =
                    plan_action(&state, plan, planner_env, value_fn, mppi, &blend, &mut rng)?;
                total_cost += true_env.cost(&state, &out.action);
                let next = true_env.step(&state, &out.action, &mut rng);
                if !next.iter().all(|v| v.is_finite()) {
                    return Err(Error::DivergedRollout { step: 0 });
                }
                if cartpole::wrap_angle(next[1]).abs() < SUCCESS_ANGLE {
                    upright_tail += 1;
                } else {
                    upright_tail = 0;
                }
                state = next;
                plan = out.plan.shifted();
            }
            Ok((-total_cost, upright_tail >= SUCCESS_WINDOW))
        })
        .collect();
    let episodes = episodes?;
    let rewards: Vec<f64> = episodes.iter().map(|(r, _)| *r).collect();
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let stderr = if rewards.len() > 1 {
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let success_rate = episodes.iter().filter(|(_, s)| *s).count() as f64 / n;
    Ok(ValidationReport { mean_reward: mean, stderr, success_rate, episode_rewards: rewards })
}

struct Pending {
    obs: Vec<f64>,
    action: Vec<f64>,
    cost: f64,
    next_state: Vec<f64>,
}

/// Transition payload for the recompute-at-update-time target mode.
#[derive(Clone, Debug)]
struct TransitionSample {
    obs: Vec<f64>,
    action: Vec<f64>,
    cost: f64,
    next_state: Vec<f64>,
}

/// Runs one seeded training run and reports the validation curve.
pub fn train(config: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    config.validate()?;
    let seed = config.train_seed;
    let gamma = config.mppi.gamma;
    let zero_value = ZeroValue;

    let mut qnet = if config.learning_enabled {
        Some(QNetwork::new(4, 1, &config.hidden_layers, &mut stream_rng(seed, Stream::WeightInit, 0)))
    } else {
        None
    };
    let mut adam = qnet.as_ref().map(|n| AdamState::new(n, config.learning_rate));
    let mut target_buffer: ReplayBuffer<TargetSample> = ReplayBuffer::new(config.buffer_capacity);
    let mut transition_buffer: ReplayBuffer<TransitionSample> =
        ReplayBuffer::new(config.buffer_capacity);
    let mut replay_rng = stream_rng(seed, Stream::Replay, 0);
    let mut recompute_count: u64 = 0;

    let mut diagnostics = TrainDiagnostics::default();
    let mut points = Vec::new();

    let mut episode: u64 = 0;
    let mut state = cartpole::reset(&mut stream_rng(seed, Stream::EnvReset, episode)).to_vec();
    let mut plan = ControlPlan::zeros(config.mppi.horizon, 1);
    let mut pending: Option<Pending> = None;

    for t in 0..config.total_steps {
        if t > 0 && t % config.episode_steps as u64 == 0 {
            // Label the last transition of the finished episode with one
            // extra planning call from its terminal state.
            if config.learning_enabled {
                if let Some(p) = pending.take() {
                    let lambda = config.schedule.lambda_at(t);
                    let blend = config.mppi.blend(lambda)?;
                    if config.online_targets {
                        let mut brng = stream_rng(seed, Stream::BoundaryPlan, episode);
                        let warm = plan.clone();
                        let y = compute_target(
                            p.cost,
                            &p.next_state,
                            warm.clone(),
                            &config.planner_env,
                            qnet.as_ref().unwrap(),
                            &config.mppi,
                            &blend,
                            &mut brng,
                        )?;
                        store_target(
                            config,
                            &mut target_buffer,
                            &mut diagnostics,
                            p,
                            warm,
                            qnet.as_ref().unwrap(),
                            Stream::BoundaryPlan,
                            episode,
                            lambda,
                            y,
                        )?;
                    } else {
                        transition_buffer.push(TransitionSample {
                            obs: p.obs,
                            action: p.action,
                            cost: p.cost,
                            next_state: p.next_state,
                        });
                    }
                }
            }
            episode += 1;
            state = cartpole::reset(&mut stream_rng(seed, Stream::EnvReset, episode)).to_vec();
            plan = ControlPlan::zeros(config.mppi.horizon, 1);
            pending = None;
        }

        let lambda = config.schedule.lambda_at(t);
        let blend = config.mppi.blend(lambda)?;
        let value_fn: &dyn ValueFn = match &qnet {
            Some(n) => n,
            None => &zero_value,
        };

        let warm_plan = plan;
        let recorded_warm =
            if config.record_transitions { Some(warm_plan.clone()) } else { None };
        let mut prng = stream_rng(seed, Stream::PlannerNoise, t);
        let out: PlanOutcome = plan_action(
            &state,
            warm_plan,
            &config.planner_env,
            value_fn,
            &config.mppi,
            &blend,
            &mut prng,
        )?;
        if out.diagnostics.underflow_fallback {
            diagnostics.planner_underflow_events += 1;
        }

        // The planning call from s_t just produced the bootstrap value for
        // the transition that ended in s_t.
        if config.learning_enabled {
            if let Some(p) = pending.take() {
                if config.online_targets {
                    let y = p.cost + gamma * out.value;
                    store_target(
                        config,
                        &mut target_buffer,
                        &mut diagnostics,
                        p,
                        recorded_warm.clone().unwrap_or_else(|| ControlPlan::zeros(0, 0)),
                        qnet.as_ref().unwrap(),
                        Stream::PlannerNoise,
                        t,
                        lambda,
                        y,
                    )?;
                } else {
                    transition_buffer.push(TransitionSample {
                        obs: p.obs,
                        action: p.action,
                        cost: p.cost,
                        next_state: p.next_state,
                    });
                }
            }
        }

        let action = out.action;
        let cost = config.true_env.cost(&state, &action);
        let next = config.true_env.step(&state, &action, &mut prng);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::TrainDiverged {
                step: t,
                reason: "environment produced a non-finite state".into(),
            });
        }
        if config.record_transitions {
            diagnostics.executed_actions.push(action.clone());
        }
        pending = Some(Pending {
            obs: state.clone(),
            action,
            cost,
            next_state: next.clone(),
        });

        if config.learning_enabled && (t + 1) % config.update_frequency == 0 {
            let (net, adam_state) = (qnet.as_mut().unwrap(), adam.as_mut().unwrap());
            for _ in 0..config.minibatch_count {
                let batch: Vec<(Vec<f64>, Vec<f64>, f64)> = if config.online_targets {
                    if target_buffer.is_empty() {
                        break;
                    }
                    target_buffer
                        .sample(config.batch_size, &mut replay_rng)?
                        .into_iter()
                        .map(|s| (s.obs, s.action, s.target))
                        .collect()
                } else {
                    if transition_buffer.is_empty() {
                        break;
                    }
                    let transitions =
                        transition_buffer.sample(config.batch_size, &mut replay_rng)?;
                    let mut batch = Vec::with_capacity(transitions.len());
                    for tr in transitions {
                        let mut rrng = stream_rng(seed, Stream::TargetRecompute, recompute_count);
                        recompute_count += 1;
                        let y = compute_target(
                            tr.cost,
                            &tr.next_state,
                            ControlPlan::zeros(config.mppi.horizon, 1),
                            &config.planner_env,
                            net,
                            &config.mppi,
                            &blend,
                            &mut rrng,
                        )?;
                        batch.push((tr.obs, tr.action, y));
                    }
                    batch
                };
                let (loss, grads) = net.loss_and_grad(&batch)?;
                if !loss.is_finite() {
                    return Err(Error::TrainDiverged {
                        step: t,
                        reason: format!("non-finite training loss {loss}"),
                    });
                }
                adam_step(net, adam_state, &grads)?;
            }
        }

        if (t + 1) % config.validation_interval == 0 {
            let value_fn: &dyn ValueFn = match &qnet {
                Some(n) => n,
                None => &zero_value,
            };
            let report = validate(
                &config.true_env,
                &config.planner_env,
                value_fn,
                lambda,
                &config.mppi,
                config.episode_steps,
                config.validation_episodes,
                config.validation_seed,
                combine(config.validation_seed, seed),
            )?;
            points.push(CurvePoint {
                step: t + 1,
                lambda,
                mean_reward: report.mean_reward,
                stderr: report.stderr,
                success_rate: report.success_rate,
            });
            observer.on_validation(t + 1, lambda, qnet.as_ref(), &report)?;
        }

        state = next;
        plan = out.plan.shifted();
    }

    Ok(TrainOutcome { points, net: qnet, diagnostics })
}

#[allow(clippy::too_many_arguments)]
fn store_target(
    config: &TrainConfig,
    buffer: &mut ReplayBuffer<TargetSample>,
    diagnostics: &mut TrainDiagnostics,
    pending: Pending,
    warm_plan: ControlPlan,
    net: &QNetwork,
    stream: Stream,
    stream_index: u64,
    lambda: f64,
    target: f64,
) -> Result<()> {
    if !target.is_finite() {
        return Err(Error::TrainDiverged {
            step: stream_index,
            reason: format!("non-finite value target {target}"),
        });
    }
    if config.record_transitions {
        diagnostics.target_records.push(TargetRecord {
            obs: pending.obs.clone(),
            action: pending.action.clone(),
            cost: pending.cost,
            next_state: pending.next_state.clone(),
            warm_plan,
            net_snapshot: net.clone(),
            stream,
            stream_index,
            lambda,
            stored_target: target,
        });
    }
    buffer.push(TargetSample { obs: pending.obs, action: pending.action, target });
    Ok(())
}
