//! The λ-blended Q-estimator.
//!
//! Three algebraically equivalent forms are provided:
//!
//! - [`blended_q_recursive`]: the defining recursion
//!   `Q^λ_i = (1-λ)·Q̂_i + λ·(c_i + γ·Q^λ_{i+1})`, base `Q^λ_H = Q̂_H`.
//! - [`blended_q_weighted`]: the convex combination of all horizon estimates
//!   with weights `(1-λ)λ^i` and `λ^H` on the full-horizon estimate.
//! - [`blended_q_telescoped`]: the one-pass disadvantage form
//!   `Q̂_0 + Σ_i γ^i λ^{i+1} · (c_i + γ·Q̂_{i+1} - Q̂_i)`.
//!
//! The correction weight in the telescoped form is `γ^i λ^{i+1}` (one λ per
//! recursion unrolling, including step 0); with that weight all three forms
//! agree to roundoff, λ=0 returns `Q̂(s_0,a_0)` exactly, and λ=1 recovers the
//! plain H-horizon return with terminal `Q̂`.

use crate::error::{Error, Result};
use crate::mdp::Trajectory;

/// Blending parameters: λ, the lookahead horizon, and the discount.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendConfig {
    pub lambda: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl BlendConfig {
    pub fn new(lambda: f64, horizon: usize, gamma: f64) -> Result<Self> {
        let cfg = Self { lambda, horizon, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid_arg(format!("lambda must lie in [0,1], got {}", self.lambda)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid_arg("blend horizon must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid_arg(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        Ok(())
    }
}

/// The k-horizon estimates `Q^φ_0 … Q^φ_H` for one (state, action); entry 0
/// is the plain value estimate `Q̂(s,a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonEstimates {
    pub q_by_horizon: Vec<f64>,
}

impl HorizonEstimates {
    pub fn new(q_by_horizon: Vec<f64>) -> Result<Self> {
        if q_by_horizon.is_empty() {
            return Err(Error::invalid_arg("horizon estimates need at least the 0-horizon entry"));
        }
        Ok(Self { q_by_horizon })
    }

    /// Builds all `H+1` partial-return estimates of a single rollout:
    /// `Q^φ_k = Σ_{i<k} γ^i c_i + γ^k q_hat[k]`.
    pub fn from_partial_returns(costs: &[f64], q_hat: &[f64], gamma: f64) -> Result<Self> {
        check_lengths(costs, q_hat)?;
        let h = costs.len();
        let mut q_by_horizon = Vec::with_capacity(h + 1);
        let mut partial = 0.0;
        let mut discount = 1.0;
        for k in 0..=h {
            q_by_horizon.push(partial + discount * q_hat[k]);
            if k < h {
                partial += discount * costs[k];
                discount *= gamma;
            }
        }
        Ok(Self { q_by_horizon })
    }

    pub fn horizon(&self) -> usize {
        self.q_by_horizon.len() - 1
    }
}

/// Two-point convex combination of a model-free estimate and the full-horizon
/// planner estimate.
pub fn naive_blend(q_model_free: f64, q_mpc_h: f64, lambda: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&lambda));
    (1.0 - lambda) * q_model_free + lambda * q_mpc_h
}

/// Weights of the horizon estimates: `(1-λ)λ^i` for `i < H` and `λ^H` last.
/// They are nonnegative and sum to one for every λ in [0,1].
pub fn blend_weights(lambda: f64, horizon: usize) -> Vec<f64> {
    debug_assert!(horizon >= 1);
    let mut weights = Vec::with_capacity(horizon + 1);
    let mut pow = 1.0;
    for _ in 0..horizon {
        weights.push((1.0 - lambda) * pow);
        pow *= lambda;
    }
    weights.push(pow);
    weights
}

/// Dot product of [`blend_weights`] with the horizon estimates.
pub fn blended_q_weighted(est: &HorizonEstimates, lambda: f64) -> f64 {
    let weights = blend_weights(lambda, est.horizon().max(1));
    if est.horizon() == 0 {
        // Degenerate single-entry case: all weight on Q^φ_0.
        return est.q_by_horizon[0];
    }
    weights.iter().zip(&est.q_by_horizon).map(|(w, q)| w * q).sum()
}

/// Telescoped one-pass form over a rollout's costs: see the module docs for
/// the exact weighting.
pub fn blended_q_telescoped(
    traj: &Trajectory,
    q_hat: &[f64],
    lambda: f64,
    gamma: f64,
) -> Result<f64> {
    blended_q_telescoped_costs(&traj.costs, q_hat, lambda, gamma)
}

/// Slice form of [`blended_q_telescoped`]. `q_hat[i]` is `Q̂(s_i, a_i)` for
/// `i = 0..=H` where `H = costs.len()`.
pub fn blended_q_telescoped_costs(
    costs: &[f64],
    q_hat: &[f64],
    lambda: f64,
    gamma: f64,
) -> Result<f64> {
    check_lengths(costs, q_hat)?;
    let mut total = q_hat[0];
    let mut weight = lambda;
    for (i, &c) in costs.iter().enumerate() {
        total += weight * (c + gamma * q_hat[i + 1] - q_hat[i]);
        weight *= gamma * lambda;
    }
    Ok(total)
}

/// Direct evaluation of the defining recursion, back to front. Serves as an
/// independent oracle for the other two forms.
pub fn blended_q_recursive(costs: &[f64], q_hat: &[f64], lambda: f64, gamma: f64) -> Result<f64> {
    check_lengths(costs, q_hat)?;
    let h = costs.len();
    let mut value = q_hat[h];
    for i in (0..h).rev() {
        value = (1.0 - lambda) * q_hat[i] + lambda * (costs[i] + gamma * value);
    }
    Ok(value)
}

fn check_lengths(costs: &[f64], q_hat: &[f64]) -> Result<()> {
    if costs.is_empty() {
        return Err(Error::invalid_arg("blended estimate needs at least one step"));
    }
    if q_hat.len() != costs.len() + 1 {
        return Err(Error::LengthMismatch {
            what: "q_hat values",
            expected: costs.len() + 1,
            got: q_hat.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::discounted_return_costs;
    use crate::seeding::{Stream, stream_rng};
    use rand::RngExt;

    fn random_instance(rng: &mut impl RngExt, max_h: usize) -> (Vec<f64>, Vec<f64>) {
        let h = rng.random_range(1..=max_h);
        let costs: Vec<f64> = (0..h).map(|_| rng.random_range(-5.0..5.0)).collect();
        let q_hat: Vec<f64> = (0..=h).map(|_| rng.random_range(-20.0..20.0)).collect();
        (costs, q_hat)
    }

    #[test]
    fn naive_blend_endpoints_and_midpoint() {
        assert_eq!(naive_blend(2.0, 4.0, 0.0), 2.0);
        assert_eq!(naive_blend(2.0, 4.0, 1.0), 4.0);
        assert!((naive_blend(2.0, 4.0, 0.25) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn blend_weights_sum_to_one_exactly_at_endpoints() {
        assert_eq!(blend_weights(0.0, 5), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(blend_weights(1.0, 5), vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn blend_weights_sum_to_one() {
        let mut rng = stream_rng(31, Stream::Scratch, 0);
        for _ in 0..10_000 {
            let lambda: f64 = rng.random_range(0.0..=1.0);
            let h = rng.random_range(1..=128usize);
            let w = blend_weights(lambda, h);
            assert_eq!(w.len(), h + 1);
            assert!(w.iter().all(|&x| x >= 0.0));
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at lambda={lambda}, h={h}");
        }
    }

    #[test]
    fn weighted_form_is_constant_when_estimates_agree() {
        let est = HorizonEstimates::new(vec![3.5; 9]).unwrap();
        for lambda in [0.0, 0.1, 0.5, 0.9, 1.0] {
            assert!((blended_q_weighted(&est, lambda) - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_form_endpoints() {
        let est = HorizonEstimates::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(blended_q_weighted(&est, 0.0), 1.0);
        assert_eq!(blended_q_weighted(&est, 1.0), 4.0);
    }

    #[test]
    fn telescoped_endpoints() {
        let costs = vec![0.3, -0.2, 1.1];
        let q_hat = vec![4.0, 3.0, -1.0, 2.0];
        let gamma = 0.97;
        // λ=0: every correction term vanishes.
        assert_eq!(blended_q_telescoped_costs(&costs, &q_hat, 0.0, gamma).unwrap(), q_hat[0]);
        // λ=1: the H-horizon return with terminal q_hat[H].
        let full = blended_q_telescoped_costs(&costs, &q_hat, 1.0, gamma).unwrap();
        let expected = discounted_return_costs(&costs, gamma, q_hat[3]);
        assert!((full - expected).abs() < 1e-12);
    }

    #[test]
    fn recursive_endpoints_are_bit_exact() {
        let mut rng = stream_rng(37, Stream::Scratch, 0);
        for _ in 0..100 {
            let (costs, q_hat) = random_instance(&mut rng, 32);
            let gamma: f64 = rng.random_range(0.5..1.0);
            assert_eq!(blended_q_recursive(&costs, &q_hat, 0.0, gamma).unwrap(), q_hat[0]);
            assert_eq!(
                blended_q_recursive(&costs, &q_hat, 1.0, gamma).unwrap(),
                discounted_return_costs(&costs, gamma, q_hat[costs.len()])
            );
        }
    }

    #[test]
    fn recursive_hand_cases() {
        // One unrolling step.
        let lambda = 0.4;
        let got = blended_q_recursive(&[2.0], &[5.0, 7.0], lambda, 0.9).unwrap();
        let expected = (1.0 - lambda) * 5.0 + lambda * (2.0 + 0.9 * 7.0);
        assert!((got - expected).abs() < 1e-15);

        // λ=1, H=2, c=[1,1], terminal 10, γ=0.9: 1 + 0.9·(1 + 0.9·10) = 10.
        let got = blended_q_recursive(&[1.0, 1.0], &[0.0, 0.0, 10.0], 1.0, 0.9).unwrap();
        assert_eq!(got, 10.0);
        assert_eq!(got, discounted_return_costs(&[1.0, 1.0], 0.9, 10.0));
    }

    #[test]
    fn three_forms_agree_on_random_instances() {
        let mut rng = stream_rng(41, Stream::Scratch, 0);
        for trial in 0..1000 {
            let (costs, q_hat) = random_instance(&mut rng, 64);
            let lambda = [0.0, 0.25, 0.5, 0.8, 0.95, 1.0][trial % 6];
            let gamma = if trial % 2 == 0 { 0.9 } else { 0.99 };
            let rec = blended_q_recursive(&costs, &q_hat, lambda, gamma).unwrap();
            let tel = blended_q_telescoped_costs(&costs, &q_hat, lambda, gamma).unwrap();
            let est = HorizonEstimates::from_partial_returns(&costs, &q_hat, gamma).unwrap();
            let wgt = blended_q_weighted(&est, lambda);
            assert!((rec - tel).abs() < 1e-9, "recursive {rec} vs telescoped {tel}");
            assert!((rec - wgt).abs() < 1e-9, "recursive {rec} vs weighted {wgt}");
        }
    }

    #[test]
    fn specific_cross_form_instance() {
        // 8-step rollout, λ=0.7, γ=0.99.
        let mut rng = stream_rng(43, Stream::Scratch, 0);
        let costs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q_hat: Vec<f64> = (0..=8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let tel = blended_q_telescoped_costs(&costs, &q_hat, 0.7, 0.99).unwrap();
        let est = HorizonEstimates::from_partial_returns(&costs, &q_hat, 0.99).unwrap();
        let wgt = blended_q_weighted(&est, 0.7);
        assert!((tel - wgt).abs() < 1e-10);
    }

    #[test]
    fn three_step_chain_weighted_vs_telescoped() {
        let costs = vec![1.0, 0.5, -0.25];
        let q_hat = vec![2.0, 1.5, 1.0, 0.5];
        let gamma = 0.9;
        let est = HorizonEstimates::from_partial_returns(&costs, &q_hat, gamma).unwrap();
        let wgt = blended_q_weighted(&est, 0.5);
        let tel = blended_q_telescoped_costs(&costs, &q_hat, 0.5, gamma).unwrap();
        assert!((wgt - tel).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(blended_q_telescoped_costs(&[1.0], &[1.0], 0.5, 0.9).is_err());
        assert!(blended_q_recursive(&[1.0, 2.0], &[1.0, 2.0], 0.5, 0.9).is_err());
        assert!(blended_q_telescoped_costs(&[], &[1.0], 0.5, 0.9).is_err());
    }

    #[test]
    fn blend_config_validation() {
        assert!(BlendConfig::new(0.5, 8, 0.99).is_ok());
        assert!(BlendConfig::new(-0.1, 8, 0.99).is_err());
        assert!(BlendConfig::new(1.1, 8, 0.99).is_err());
        assert!(BlendConfig::new(0.5, 0, 0.99).is_err());
        assert!(BlendConfig::new(0.5, 8, 1.0).is_err());
    }
}
