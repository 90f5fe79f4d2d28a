//! Tiny exact tabular MDP solvers. These exist as oracles for tests and for
//! the empirical-dominance checks of the performance bounds; they are not a
//! general-purpose planning toolkit.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::mdp::EnvModel;

/// Finite MDP with dense transitions `p[s][a][s']` and costs `cost[s][a]`.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub p: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        p: Vec<Vec<Vec<f64>>>,
        cost: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid_arg(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if p.len() != n_states || cost.len() != n_states {
            return Err(Error::invalid_arg("transition/cost tables must have n_states rows"));
        }
        for s in 0..n_states {
            if p[s].len() != n_actions || cost[s].len() != n_actions {
                return Err(Error::invalid_arg("each state needs n_actions entries"));
            }
            for a in 0..n_actions {
                if p[s][a].len() != n_states {
                    return Err(Error::invalid_arg("transition rows must have n_states columns"));
                }
                let sum: f64 = p[s][a].iter().sum();
                if (sum - 1.0).abs() > 1e-9 || p[s][a].iter().any(|&q| q < 0.0) {
                    return Err(Error::invalid_arg(format!(
                        "p[{s}][{a}] is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        Ok(Self { n_states, n_actions, p, cost, gamma })
    }

    /// Uniform random MDP with costs in `[c_min, c_max]`.
    pub fn random(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        c_range: (f64, f64),
        rng: &mut dyn Rng,
    ) -> Self {
        let mut p = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
        let mut cost = vec![vec![0.0; n_actions]; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let mut row: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                p[s][a] = row;
                cost[s][a] = rng.random_range(c_range.0..=c_range.1);
            }
        }
        Self { n_states, n_actions, p, cost, gamma }
    }

    /// Optimal (cost-minimizing) values by value iteration.
    pub fn optimal_values(&self, tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        loop {
            let mut next = vec![0.0; self.n_states];
            let mut delta: f64 = 0.0;
            for s in 0..self.n_states {
                let best = (0..self.n_actions)
                    .map(|a| self.backup(s, a, &v))
                    .fold(f64::INFINITY, f64::min);
                delta = delta.max((best - v[s]).abs());
                next[s] = best;
            }
            v = next;
            if delta < tol {
                return v;
            }
        }
    }

    /// Exact `V^π` for a deterministic policy.
    pub fn policy_values(&self, policy: &[usize], tol: f64) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let mut v = vec![0.0; self.n_states];
        loop {
            let mut delta: f64 = 0.0;
            let mut next = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                let val = self.backup(s, policy[s], &v);
                delta = delta.max((val - v[s]).abs());
                next[s] = val;
            }
            v = next;
            if delta < tol {
                return Ok(v);
            }
        }
    }

    /// Exact `Q^π[s][a]` for a deterministic policy.
    pub fn policy_q_values(&self, policy: &[usize], tol: f64) -> Result<Vec<Vec<f64>>> {
        let v = self.policy_values(policy, tol)?;
        let mut q = vec![vec![0.0; self.n_actions]; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                q[s][a] = self.backup(s, a, &v);
            }
        }
        Ok(q)
    }

    /// Exact H-step expected cost of `policy` with terminal function
    /// `terminal`: `E[Σ_{i<H} γ^i c(s_i, π(s_i)) + γ^H terminal(s_H)]` per
    /// start state, by backward induction.
    pub fn h_step_cost(&self, policy: &[usize], terminal: &[f64], h: usize) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        if terminal.len() != self.n_states {
            return Err(Error::LengthMismatch {
                what: "terminal function",
                expected: self.n_states,
                got: terminal.len(),
            });
        }
        let mut j = terminal.to_vec();
        for _ in 0..h {
            let mut next = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                next[s] = self.backup(s, policy[s], &j);
            }
            j = next;
        }
        Ok(j)
    }

    /// A perturbed copy: every transition row is mixed toward a random
    /// distribution and every cost is shifted, both by at most `level`.
    /// Measure the perturbation actually achieved with
    /// [`TabularMdp::transition_gap`] / [`TabularMdp::cost_gap`].
    pub fn perturbed(&self, level: f64, rng: &mut dyn Rng) -> Self {
        let mut out = self.clone();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut u: Vec<f64> = (0..self.n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
                let sum: f64 = u.iter().sum();
                u.iter_mut().for_each(|v| *v /= sum);
                // ||(1-eps) p + eps u - p||_1 = eps ||u - p||_1 <= 2 eps
                let eps = rng.random_range(0.0..=(level / 2.0));
                for sp in 0..self.n_states {
                    out.p[s][a][sp] = (1.0 - eps) * self.p[s][a][sp] + eps * u[sp];
                }
                out.cost[s][a] = self.cost[s][a] + rng.random_range(-level..=level);
            }
        }
        out
    }

    /// `max_{s,a} ||p̂(·|s,a) − p(·|s,a)||_1`.
    pub fn transition_gap(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let d: f64 = (0..self.n_states)
                    .map(|sp| (self.p[s][a][sp] - other.p[s][a][sp]).abs())
                    .sum();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// `max_{s,a} |ĉ(s,a) − c(s,a)|`.
    pub fn cost_gap(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                worst = worst.max((self.cost[s][a] - other.cost[s][a]).abs());
            }
        }
        worst
    }

    pub fn cost_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.cost {
            for &c in row {
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        (lo, hi)
    }

    /// Wraps the MDP as a vector-valued [`EnvModel`] (state and action are
    /// single-element index vectors).
    pub fn as_env(&self) -> TabularEnvModel<'_> {
        TabularEnvModel { mdp: self }
    }

    fn backup(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let mut acc = self.cost[s][a];
        let row = &self.p[s][a];
        for sp in 0..self.n_states {
            acc += self.gamma * row[sp] * v[sp];
        }
        acc
    }

    fn check_policy(&self, policy: &[usize]) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::LengthMismatch {
                what: "policy",
                expected: self.n_states,
                got: policy.len(),
            });
        }
        if policy.iter().any(|&a| a >= self.n_actions) {
            return Err(Error::invalid_arg("policy action index out of range"));
        }
        Ok(())
    }
}

pub struct TabularEnvModel<'a> {
    mdp: &'a TabularMdp,
}

impl EnvModel for TabularEnvModel<'_> {
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn step(&self, state: &[f64], action: &[f64], rng: &mut dyn Rng) -> Vec<f64> {
        let s = state[0] as usize;
        let a = action[0] as usize;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = &self.mdp.p[s][a];
        for (sp, &q) in row.iter().enumerate() {
            acc += q;
            if u < acc {
                return vec![sp as f64];
            }
        }
        vec![(self.mdp.n_states - 1) as f64]
    }
    fn cost(&self, state: &[f64], action: &[f64]) -> f64 {
        self.mdp.cost[state[0] as usize][action[0] as usize]
    }
}
