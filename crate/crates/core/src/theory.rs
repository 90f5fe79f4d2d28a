//! Closed-form evaluators of performance bounds for finite-horizon planning
//! with an approximate model and an approximate terminal value function.
//!
//! `alpha` bounds both the per-pair total-variation error of the transition
//! model and the absolute cost error; `epsilon` bounds the sup-norm error of
//! the learned value function. The evaluators compute the bound values; the
//! accompanying tests check them empirically against exact tabular planning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs shared by the bound evaluators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Model error level (transition total-variation and cost error share it).
    pub alpha: f64,
    /// Value-function sup error.
    pub epsilon: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.epsilon >= 0.0) {
            return Err(Error::invalid_arg("alpha and epsilon must be nonnegative"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid_arg(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid_arg("horizon must be at least 1"));
        }
        if self.c_min > self.c_max || self.v_min > self.v_max {
            return Err(Error::invalid_arg("cost/value ranges out of order"));
        }
        Ok(())
    }
}

/// Additive pieces of [`h_step_bound`], before the overall factor of two.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HStepBoundParts {
    /// Model error accumulating over the cost segment of the horizon.
    pub model_cost: f64,
    /// Model error hitting the terminal value.
    pub model_value: f64,
    /// Plain per-step cost error.
    pub cost_error: f64,
    /// Terminal value-function error.
    pub value_error: f64,
}

impl HStepBoundParts {
    pub fn total(&self) -> f64 {
        2.0 * (self.model_cost + self.model_value + self.cost_error + self.value_error)
    }
}

/// Performance loss of the H-step greedy policy under model error `alpha` and
/// value error `epsilon`, split into its additive parts.
pub fn h_step_bound_parts(inputs: &BoundInputs) -> Result<HStepBoundParts> {
    inputs.validate()?;
    let g = inputs.gamma;
    let h = inputs.horizon as i32;
    let gh = g.powi(h);
    let ghm1 = g.powi(h - 1);
    let alpha_h = inputs.alpha * inputs.horizon as f64;
    let c_half_range = (inputs.c_max - inputs.c_min) / 2.0;
    let v_half_range = (inputs.v_max - inputs.v_min) / 2.0;
    Ok(HStepBoundParts {
        model_cost: g * (1.0 - ghm1) / ((1.0 - gh) * (1.0 - g)) * alpha_h * c_half_range,
        model_value: gh * alpha_h / (1.0 - gh) * v_half_range,
        cost_error: inputs.alpha / (1.0 - g),
        value_error: gh * inputs.epsilon / (1.0 - gh),
    })
}

/// Total of [`h_step_bound_parts`].
pub fn h_step_bound(inputs: &BoundInputs) -> Result<f64> {
    Ok(h_step_bound_parts(inputs)?.total())
}

/// Performance loss of the one-step greedy policy:
/// `2(γε + α + γα(V_max-V_min)/2)/(1-γ)`.
pub fn one_step_bound(alpha: f64, epsilon: f64, gamma: f64, v_min: f64, v_max: f64) -> f64 {
    2.0 * (gamma * epsilon + alpha + gamma * alpha * (v_max - v_min) / 2.0) / (1.0 - gamma)
}

/// Horizon minimizing the planning-loss trade-off:
/// `H* = ε / ((1-γ)(ε + α(V_max-V_min)/4))`.
pub fn optimal_horizon(
    epsilon: f64,
    alpha: f64,
    gamma: f64,
    v_min: f64,
    v_max: f64,
) -> Result<f64> {
    if !(epsilon >= 0.0 && alpha >= 0.0) {
        return Err(Error::invalid_arg("alpha and epsilon must be nonnegative"));
    }
    let denom_inner = epsilon + alpha * (v_max - v_min) / 4.0;
    if denom_inner == 0.0 {
        return Err(Error::invalid_arg(
            "optimal horizon is undefined when epsilon and alpha·(v_max-v_min) are both zero",
        ));
    }
    Ok(epsilon / ((1.0 - gamma) * denom_inner))
}

/// Gap between running one policy on the true and on the approximate MDP for
/// H steps with a shared terminal function.
pub fn simulation_gap_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let g = inputs.gamma;
    let h = inputs.horizon as i32;
    let gh = g.powi(h);
    let ghm1 = g.powi(h - 1);
    let alpha_h = inputs.alpha * inputs.horizon as f64;
    Ok(g * (1.0 - ghm1) / (1.0 - g) * alpha_h * (inputs.c_max - inputs.c_min) / 2.0
        + gh * alpha_h * (inputs.v_max - inputs.v_min) / 2.0
        + (1.0 - gh) / (1.0 - g) * inputs.alpha)
}

/// One row of the horizon trade-off table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TradeoffRow {
    pub horizon: usize,
    pub bound: f64,
    pub parts: HStepBoundParts,
}

/// [`h_step_bound`] tabulated over a horizon range, with the arg-min row.
#[derive(Clone, Debug)]
pub struct TradeoffCurve {
    pub rows: Vec<TradeoffRow>,
    pub argmin_horizon: usize,
}

pub fn bound_tradeoff_curve(
    inputs: &BoundInputs,
    horizons: impl IntoIterator<Item = usize>,
) -> Result<TradeoffCurve> {
    let mut rows = Vec::new();
    for h in horizons {
        let parts = h_step_bound_parts(&BoundInputs { horizon: h, ..*inputs })?;
        rows.push(TradeoffRow { horizon: h, bound: parts.total(), parts });
    }
    if rows.is_empty() {
        return Err(Error::invalid_arg("horizon range must be non-empty"));
    }
    let argmin_horizon = rows
        .iter()
        .min_by(|a, b| a.bound.total_cmp(&b.bound))
        .map(|r| r.horizon)
        .unwrap();
    Ok(TradeoffCurve { rows, argmin_horizon })
}
