//! Sampling-based MPC: perturb a mean control sequence with filtered Gaussian
//! noise, roll every particle through the planning model, score each rollout
//! with the λ-blended estimator, and move the mean toward the softmin-weighted
//! particle average. The first action of the optimized mean is executed and
//! the rest is shifted forward as the next step's warm start.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blending::{BlendConfig, blended_q_telescoped};
use crate::error::{Error, Result};
use crate::mdp::{EnvModel, rollout};

/// Terminal/terminal-free value estimate consulted along planned rollouts.
pub trait ValueFn: Send + Sync {
    fn q(&self, obs: &[f64], action: &[f64]) -> f64;
}

/// The all-zero value function (plain MPC).
pub struct ZeroValue;

impl ValueFn for ZeroValue {
    fn q(&self, _obs: &[f64], _action: &[f64]) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiConfig {
    pub horizon: usize,
    pub n_particles: usize,
    /// Per-dimension sampling variance of the control noise.
    pub covariance: f64,
    /// Softmin temperature β.
    pub temperature: f64,
    /// Mean-update step size in (0, 1].
    pub step_size: f64,
    /// Autoregressive noise filter: `n_t = c0·ε_t + c1·n_{t-1} + c2·n_{t-2}`.
    pub filter_coeffs: [f64; 3],
    pub gamma: f64,
    /// Sample/evaluate/update passes per control step.
    pub n_iters: usize,
    /// Execute a noise-perturbed sample instead of the optimized mean.
    pub execute_noisy: bool,
    /// Sampled particles are clamped to this range per dimension, keeping the
    /// softmin-averaged plan inside the actuated region.
    pub action_bounds: (f64, f64),
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            horizon: 32,
            n_particles: 60,
            covariance: 0.45,
            temperature: 0.1,
            step_size: 1.0,
            filter_coeffs: [1.0, 0.0, 0.0],
            gamma: 0.99,
            n_iters: 1,
            execute_noisy: false,
            action_bounds: (-1.0, 1.0),
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.n_particles == 0 || self.n_iters == 0 {
            return Err(Error::invalid_arg("horizon, n_particles and n_iters must be positive"));
        }
        if !(self.covariance > 0.0) {
            return Err(Error::invalid_arg(format!("covariance must be positive, got {}", self.covariance)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid_arg(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::invalid_arg(format!("step_size must lie in (0,1], got {}", self.step_size)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid_arg(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.filter_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid_arg("filter coefficients must be finite"));
        }
        if !(self.action_bounds.0 < self.action_bounds.1) {
            return Err(Error::invalid_arg(format!(
                "action bounds out of order: {:?}",
                self.action_bounds
            )));
        }
        Ok(())
    }

    pub fn blend(&self, lambda: f64) -> Result<BlendConfig> {
        BlendConfig::new(lambda, self.horizon, self.gamma)
    }
}

/// Mean control sequence, one action vector per horizon step.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPlan {
    pub actions: Vec<Vec<f64>>,
}

impl ControlPlan {
    pub fn zeros(horizon: usize, action_dim: usize) -> Self {
        Self { actions: vec![vec![0.0; action_dim]; horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Warm start for the next step: drop the first action, append a copy of
    /// the last.
    pub fn shifted(&self) -> Self {
        let mut actions: Vec<Vec<f64>> = self.actions[1..].to_vec();
        if let Some(last) = self.actions.last() {
            actions.push(last.clone());
        }
        Self { actions }
    }
}

/// Warm-start shift as a free function, see [`ControlPlan::shifted`].
pub fn shift_plan(plan: &ControlPlan) -> ControlPlan {
    plan.shifted()
}

/// Draws `n_particles` control sequences around the plan mean. Noise is
/// filtered per dimension by the 3-tap autoregressive filter of the config;
/// `[1, 0, 0]` leaves it white. Each sampled action is clamped to
/// `cfg.action_bounds` so plans cannot drift into the saturated region where
/// the cost landscape carries no signal.
pub fn sample_controls(
    plan: &ControlPlan,
    cfg: &MppiConfig,
    rng: &mut dyn Rng,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if plan.horizon() != cfg.horizon {
        return Err(Error::LengthMismatch {
            what: "control plan",
            expected: cfg.horizon,
            got: plan.horizon(),
        });
    }
    let action_dim = plan.actions.first().map(|a| a.len()).unwrap_or(0);
    let normal = Normal::new(0.0, cfg.covariance.sqrt())
        .map_err(|e| Error::invalid_arg(format!("bad noise distribution: {e}")))?;
    let [c0, c1, c2] = cfg.filter_coeffs;
    let mut particles = Vec::with_capacity(cfg.n_particles);
    for _ in 0..cfg.n_particles {
        let mut seq = Vec::with_capacity(cfg.horizon);
        let mut prev1 = vec![0.0; action_dim];
        let mut prev2 = vec![0.0; action_dim];
        for t in 0..cfg.horizon {
            let mut action = Vec::with_capacity(action_dim);
            for d in 0..action_dim {
                let eps: f64 = normal.sample(rng);
                let n = c0 * eps + c1 * prev1[d] + c2 * prev2[d];
                prev2[d] = prev1[d];
                prev1[d] = n;
                action
                    .push((plan.actions[t][d] + n).clamp(cfg.action_bounds.0, cfg.action_bounds.1));
            }
            seq.push(action);
        }
        particles.push(seq);
    }
    Ok(particles)
}

/// Rolls `controls` through the planning model from `state` and scores the
/// rollout with the λ-blended estimator. The value estimate along the rollout
/// uses the action taken at each simulated step; the terminal pair reuses the
/// final action.
pub fn evaluate_particle(
    model: &dyn EnvModel,
    state: &[f64],
    controls: &[Vec<f64>],
    value: &dyn ValueFn,
    blend: &BlendConfig,
    rng: &mut dyn Rng,
) -> Result<f64> {
    if controls.len() != blend.horizon {
        return Err(Error::LengthMismatch {
            what: "particle controls",
            expected: blend.horizon,
            got: controls.len(),
        });
    }
    let traj = rollout(model, state, controls, rng)?;
    let h = traj.steps();
    let mut q_hat = Vec::with_capacity(h + 1);
    for i in 0..h {
        q_hat.push(value.q(&traj.states[i], &traj.actions[i]));
    }
    q_hat.push(value.q(&traj.states[h], &traj.actions[h - 1]));
    blended_q_telescoped(&traj, &q_hat, blend.lambda, blend.gamma)
}

/// Softmin weights with min-cost baseline subtraction. Returns the weights
/// and whether the normalizer collapsed (in which case all weight is put on
/// the arg-min particle).
pub fn softmin_weights(costs: &[f64], temperature: f64) -> (Vec<f64>, bool) {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> =
        costs.iter().map(|c| (-(c - min) / temperature).exp()).collect();
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        let argmin = costs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        weights.iter_mut().for_each(|w| *w = 0.0);
        weights[argmin] = 1.0;
        return (weights, true);
    }
    weights.iter_mut().for_each(|w| *w /= sum);
    (weights, false)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateDiagnostics {
    /// Softmin normalizer collapsed and the arg-min particle was used.
    pub underflow_fallback: bool,
}

/// Moves the plan mean toward the weight-averaged particles:
/// `new = (1-step_size)·old + step_size·Σ_k w_k·particle_k`.
pub fn update_plan(
    plan: &ControlPlan,
    particles: &[Vec<Vec<f64>>],
    costs: &[f64],
    cfg: &MppiConfig,
) -> Result<(ControlPlan, UpdateDiagnostics)> {
    if particles.len() != costs.len() || particles.is_empty() {
        return Err(Error::LengthMismatch {
            what: "particle costs",
            expected: particles.len(),
            got: costs.len(),
        });
    }
    let (weights, underflow) = softmin_weights(costs, cfg.temperature);
    let action_dim = plan.actions.first().map(|a| a.len()).unwrap_or(0);
    let mut actions = Vec::with_capacity(plan.horizon());
    for t in 0..plan.horizon() {
        let mut avg = vec![0.0; action_dim];
        for (k, particle) in particles.iter().enumerate() {
            let w = weights[k];
            for d in 0..action_dim {
                avg[d] += w * particle[t][d];
            }
        }
        let mut blended = Vec::with_capacity(action_dim);
        for d in 0..action_dim {
            blended.push((1.0 - cfg.step_size) * plan.actions[t][d] + cfg.step_size * avg[d]);
        }
        actions.push(blended);
    }
    Ok((ControlPlan { actions }, UpdateDiagnostics { underflow_fallback: underflow }))
}

/// Result of one receding-horizon planning call.
#[derive(Clone, Debug)]
pub struct PlanOutcome {
    /// Action to execute now.
    pub action: Vec<f64>,
    /// Blended value of the optimized plan from the current state; doubles as
    /// the bootstrap value for target generation.
    pub value: f64,
    /// Optimized mean sequence (not yet shifted).
    pub plan: ControlPlan,
    pub diagnostics: UpdateDiagnostics,
}

/// One full planning step: `n_iters` rounds of sample → evaluate → update,
/// then the optimized mean is scored once to produce `value`.
///
/// Particle evaluation fans out across threads; results are reduced in fixed
/// particle order, so outcomes are bit-identical regardless of thread count.
pub fn plan_action(
    state: &[f64],
    plan: ControlPlan,
    model: &dyn EnvModel,
    value_fn: &dyn ValueFn,
    cfg: &MppiConfig,
    blend: &BlendConfig,
    rng: &mut dyn Rng,
) -> Result<PlanOutcome> {
    cfg.validate()?;
    blend.validate()?;
    if blend.horizon != cfg.horizon {
        return Err(Error::LengthMismatch {
            what: "blend horizon",
            expected: cfg.horizon,
            got: blend.horizon,
        });
    }
    if plan.horizon() != cfg.horizon {
        return Err(Error::LengthMismatch {
            what: "warm-start plan",
            expected: cfg.horizon,
            got: plan.horizon(),
        });
    }
    let mut plan = plan;
    let mut diagnostics = UpdateDiagnostics::default();
    for _ in 0..cfg.n_iters {
        let particles = sample_controls(&plan, cfg, rng)?;
        // Per-particle RNGs are derived up front so the parallel evaluation
        // consumes the caller's stream deterministically.
        let particle_seeds: Vec<u64> = (0..particles.len()).map(|_| rng.next_u64()).collect();
        let values: Result<Vec<f64>> = particles
            .par_iter()
            .zip(particle_seeds)
            .with_min_len(8)
            .map(|(controls, seed)| {
                let mut prng = ChaCha8Rng::seed_from_u64(seed);
                evaluate_particle(model, state, controls, value_fn, blend, &mut prng)
            })
            .collect();
        let values = values?;
        let (updated, diag) = update_plan(&plan, &particles, &values, cfg)?;
        plan = updated;
        diagnostics.underflow_fallback |= diag.underflow_fallback;
    }
    let value = evaluate_particle(model, state, &plan.actions, value_fn, blend, rng)?;
    let action = if cfg.execute_noisy {
        let normal = Normal::new(0.0, cfg.covariance.sqrt())
            .map_err(|e| Error::invalid_arg(format!("bad noise distribution: {e}")))?;
        plan.actions[0].iter().map(|a| a + normal.sample(rng)).collect()
    } else {
        plan.actions[0].clone()
    };
    Ok(PlanOutcome { action, value, plan, diagnostics })
}
