//! Core MDP abstractions: environment models over flat `f64` vectors,
//! trajectories, discounted returns, one-step disadvantages, and a
//! brute-force Monte-Carlo Q oracle used by tests.
//!
//! Everything here treats per-step values as COSTS to minimize; the harness
//! reports reward = -cost at the boundary.

use rand::Rng;

use crate::error::{Error, Result};

/// Dynamics plus cost over flat state/action vectors. Implementations must be
/// pure given their inputs (any stochasticity drawn from the passed RNG), so
/// rollouts may run concurrently.
pub trait EnvModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Next state for `(state, action)`.
    fn step(&self, state: &[f64], action: &[f64], rng: &mut dyn Rng) -> Vec<f64>;
    /// Per-step cost of `(state, action)`.
    fn cost(&self, state: &[f64], action: &[f64]) -> f64;
}

/// Static description of the decision process: dimensions, discount, episode
/// length and cost range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdpSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    /// Steps per episode.
    pub horizon_episode: usize,
    /// Known (c_min, c_max) cost range.
    pub cost_bounds: (f64, f64),
}

impl MdpSpec {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        gamma: f64,
        horizon_episode: usize,
        cost_bounds: (f64, f64),
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::invalid_arg("state_dim and action_dim must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid_arg(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if horizon_episode == 0 {
            return Err(Error::invalid_arg("horizon_episode must be positive"));
        }
        if cost_bounds.0 > cost_bounds.1 {
            return Err(Error::invalid_arg(format!(
                "cost bounds out of order: {} > {}",
                cost_bounds.0, cost_bounds.1
            )));
        }
        Ok(Self { state_dim, action_dim, gamma, horizon_episode, cost_bounds })
    }
}

/// A rollout sample: `T+1` states, `T` actions, `T` costs.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
}

impl Trajectory {
    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    /// Checks the length invariant `|states| = |actions|+1 = |costs|+1`.
    pub fn check_lengths(&self) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(Error::LengthMismatch {
                what: "trajectory states",
                expected: self.actions.len() + 1,
                got: self.states.len(),
            });
        }
        if self.costs.len() != self.actions.len() {
            return Err(Error::LengthMismatch {
                what: "trajectory costs",
                expected: self.actions.len(),
                got: self.costs.len(),
            });
        }
        Ok(())
    }
}

/// Inputs of the one-step disadvantage `c + γ·Q̂(s',a') − Q̂(s,a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisadvantageSample {
    /// Step cost `c(s,a)`.
    pub c: f64,
    /// Value estimate at the current pair.
    pub q_curr: f64,
    /// Value estimate at the successor pair.
    pub q_next: f64,
    pub gamma: f64,
}

/// One-step disadvantage with respect to the potential `Q̂`.
pub fn disadvantage(sample: &DisadvantageSample) -> f64 {
    sample.c + sample.gamma * sample.q_next - sample.q_curr
}

/// Runs `controls` through `model` from `start_state`, collecting states and
/// per-step costs. Deterministic given `(model, start_state, controls, rng seed)`.
pub fn rollout(
    model: &dyn EnvModel,
    start_state: &[f64],
    controls: &[Vec<f64>],
    rng: &mut dyn Rng,
) -> Result<Trajectory> {
    if controls.is_empty() {
        return Err(Error::invalid_arg("rollout needs at least one control"));
    }
    if !start_state.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid_arg("rollout start state must be finite"));
    }
    let steps = controls.len();
    let mut states = Vec::with_capacity(steps + 1);
    let mut costs = Vec::with_capacity(steps);
    states.push(start_state.to_vec());
    for (i, action) in controls.iter().enumerate() {
        let current = &states[i];
        costs.push(model.cost(current, action));
        let next = model.step(current, action, rng);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::DivergedRollout { step: i });
        }
        states.push(next);
    }
    Ok(Trajectory { states, actions: controls.to_vec(), costs })
}

/// `Σ_i γ^i costs[i] + γ^T · terminal_value`, evaluated backward so that the
/// λ=1 blended recursion reproduces it bit-for-bit.
pub fn discounted_return(traj: &Trajectory, gamma: f64, terminal_value: f64) -> f64 {
    discounted_return_costs(&traj.costs, gamma, terminal_value)
}

/// Slice form of [`discounted_return`].
pub fn discounted_return_costs(costs: &[f64], gamma: f64, terminal_value: f64) -> f64 {
    let mut acc = terminal_value;
    for &c in costs.iter().rev() {
        acc = c + gamma * acc;
    }
    acc
}

/// Monte-Carlo estimate with its standard error. `tail_weight` is the γ^T
/// factor left on whatever lies beyond the truncation horizon; multiply it by
/// a cost bound for an explicit truncation error budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub tail_weight: f64,
}

/// Brute-force Q oracle: the sample mean of `n_samples` truncated discounted
/// returns of (take `action`, then follow `policy` for `truncate_t - 1` more
/// steps). Test oracle; not used by the planner.
pub fn monte_carlo_q<P>(
    model: &dyn EnvModel,
    state: &[f64],
    action: &[f64],
    mut policy: P,
    gamma: f64,
    n_samples: usize,
    truncate_t: usize,
    rng: &mut dyn Rng,
) -> Result<McEstimate>
where
    P: FnMut(&[f64], &mut dyn Rng) -> Vec<f64>,
{
    if n_samples == 0 {
        return Err(Error::invalid_arg("monte_carlo_q needs n_samples >= 1"));
    }
    if truncate_t == 0 {
        return Err(Error::invalid_arg("monte_carlo_q needs truncate_t >= 1"));
    }
    let mut returns = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut s = state.to_vec();
        let mut discount = 1.0;
        let mut total = 0.0;
        for t in 0..truncate_t {
            let a = if t == 0 { action.to_vec() } else { policy(&s, rng) };
            total += discount * model.cost(&s, &a);
            discount *= gamma;
            s = model.step(&s, &a, rng);
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let stderr = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { mean, stderr, tail_weight: gamma.powi(truncate_t as i32) })
}
