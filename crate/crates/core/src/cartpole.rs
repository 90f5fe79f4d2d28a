//! Cartpole swing-up environment: frictionless cart-pole dynamics integrated
//! with semi-implicit Euler, a quadratic swing-up cost, and a bias-injected
//! parameter variant for planner/model mismatch experiments.
//!
//! Angle convention: `theta = 0` is upright, wrapped to `(-pi, pi]`.

use std::f64::consts::{PI, TAU};

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::EnvModel;

/// Physical parameters. `pole_length` is the pivot-to-center-of-mass
/// distance of a uniform pole.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleParams {
    pub mass_cart: f64,
    pub mass_pole: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub force_limit: f64,
    pub substeps: u32,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            mass_cart: 1.0,
            mass_pole: 0.1,
            pole_length: 0.5,
            gravity: 9.81,
            dt: 0.03,
            force_limit: 10.0,
            substeps: 3,
        }
    }
}

impl CartpoleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass_cart", self.mass_cart),
            ("mass_pole", self.mass_pole),
            ("pole_length", self.pole_length),
            ("gravity", self.gravity),
            ("dt", self.dt),
            ("force_limit", self.force_limit),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid_arg(format!("cartpole {name} must be positive, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(Error::invalid_arg("cartpole substeps must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartpoleState {
    pub x: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl CartpoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.theta, self.v, self.omega]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { x: s[0], theta: s[1], v: s[2], omega: s[3] }
    }
}

/// Reading of the velocity terms in the swing-up cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityCostForm {
    /// `0.01 v^2 + 0.01 w^2` (keeps the cost nonnegative).
    #[default]
    Squared,
    /// `0.01 v + 0.01 w` (sign-indefinite).
    Linear,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta;
    while t > PI {
        t -= TAU;
    }
    while t <= -PI {
        t += TAU;
    }
    t
}

/// One control step: the action is clamped to `[-1, 1]`, scaled by
/// `force_limit`, and the frictionless cart-pole equations are integrated
/// with semi-implicit Euler over `substeps` sub-intervals of `dt`.
pub fn step(state: CartpoleState, action: f64, params: &CartpoleParams) -> CartpoleState {
    let force = action.clamp(-1.0, 1.0) * params.force_limit;
    let m_c = params.mass_cart;
    let m_p = params.mass_pole;
    let l = params.pole_length;
    let g = params.gravity;
    let total = m_c + m_p;
    let h = params.dt / params.substeps as f64;

    let mut x = state.x;
    let mut theta = state.theta;
    let mut v = state.v;
    let mut omega = state.omega;
    for _ in 0..params.substeps {
        let sin = theta.sin();
        let cos = theta.cos();
        let temp = (force + m_p * l * omega * omega * sin) / total;
        let theta_acc = (g * sin - cos * temp) / (l * (4.0 / 3.0 - m_p * cos * cos / total));
        let x_acc = temp - m_p * l * theta_acc * cos / total;
        v += x_acc * h;
        omega += theta_acc * h;
        x += v * h;
        theta += omega * h;
    }
    CartpoleState { x, theta: wrap_angle(theta), v, omega }
}

/// Swing-up cost `x^2 + theta^2 + 0.01 v-term + 0.01 w-term + 0.01 a^2`,
/// with the angle wrapped before squaring and the action clamped like in
/// [`step`].
pub fn cost(state: CartpoleState, action: f64) -> f64 {
    cost_with(state, action, VelocityCostForm::Squared)
}

pub fn cost_with(state: CartpoleState, action: f64, form: VelocityCostForm) -> f64 {
    let a = action.clamp(-1.0, 1.0);
    let theta = wrap_angle(state.theta);
    let velocity_terms = match form {
        VelocityCostForm::Squared => 0.01 * state.v * state.v + 0.01 * state.omega * state.omega,
        VelocityCostForm::Linear => 0.01 * state.v + 0.01 * state.omega,
    };
    state.x * state.x + theta * theta + velocity_terms + 0.01 * a * a
}

/// Scales both masses by `(1 + b)`; everything else is untouched. `b` must be
/// greater than -1 so masses stay physical.
pub fn bias(params: &CartpoleParams, b: f64) -> Result<CartpoleParams> {
    if !(b > -1.0) {
        return Err(Error::invalid_arg(format!(
            "bias factor must exceed -1 (masses must stay positive), got {b}"
        )));
    }
    Ok(CartpoleParams {
        mass_cart: (1.0 + b) * params.mass_cart,
        mass_pole: (1.0 + b) * params.mass_pole,
        ..*params
    })
}

/// Random episode start: `x ~ U(-1,1)`, `theta ~ U(-pi,pi)`, small random
/// velocities.
pub fn reset(rng: &mut dyn Rng) -> CartpoleState {
    CartpoleState {
        x: rng.random_range(-1.0..1.0),
        theta: rng.random_range(-PI..PI),
        v: rng.random_range(-0.05..0.05),
        omega: rng.random_range(-0.05..0.05),
    }
}

/// Total mechanical energy (uniform-rod pole, potential zero at the pivot
/// height). Used to measure integrator drift.
pub fn energy(state: &CartpoleState, params: &CartpoleParams) -> f64 {
    let m_c = params.mass_cart;
    let m_p = params.mass_pole;
    let l = params.pole_length;
    let g = params.gravity;
    0.5 * (m_c + m_p) * state.v * state.v
        + m_p * l * state.omega * state.v * state.theta.cos()
        + (2.0 / 3.0) * m_p * l * l * state.omega * state.omega
        + m_p * g * l * state.theta.cos()
}

/// The cartpole as an [`EnvModel`] over `[x, theta, v, omega]` vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CartpoleEnv {
    pub params: CartpoleParams,
    pub cost_form: VelocityCostForm,
}

impl CartpoleEnv {
    pub fn new(params: CartpoleParams, cost_form: VelocityCostForm) -> Self {
        Self { params, cost_form }
    }

    /// Same cost form, masses biased by `b`.
    pub fn biased(&self, b: f64) -> Result<Self> {
        Ok(Self { params: bias(&self.params, b)?, cost_form: self.cost_form })
    }
}

impl EnvModel for CartpoleEnv {
    fn state_dim(&self) -> usize {
        4
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn step(&self, state: &[f64], action: &[f64], _rng: &mut dyn Rng) -> Vec<f64> {
        step(CartpoleState::from_slice(state), action[0], &self.params).to_vec()
    }
    fn cost(&self, state: &[f64], action: &[f64]) -> f64 {
        cost_with(CartpoleState::from_slice(state), action[0], self.cost_form)
    }
}
