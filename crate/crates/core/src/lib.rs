//! Sampling-based model-predictive control with λ-blended learned value
//! estimates.
//!
//! The crate provides, roughly bottom-up:
//!
//! - [`mdp`]: trajectories, discounted returns, one-step disadvantages and a
//!   Monte-Carlo Q oracle over a generic [`mdp::EnvModel`].
//! - [`cartpole`]: a cartpole swing-up environment with a bias-injected
//!   parameter variant for planner/model mismatch studies.
//! - [`blending`]: the λ-blended Q-estimator in its recursive, weighted and
//!   telescoped forms, plus the blend-weight vector.
//! - [`mppi`]: a path-integral style sampling MPC loop that optimizes the
//!   blended objective, with warm-starting and noise filtering.
//! - [`qnet`] / [`replay`]: a hand-rolled feed-forward Q-network with Adam,
//!   binary checkpoints, and a FIFO replay buffer.
//! - [`trainer`]: the online training loop that blends planner estimates with
//!   the learned Q-function and decays λ over time.
//! - [`theory`]: closed-form evaluators of the planning performance bounds.
//! - [`tabular`]: tiny exact tabular MDP solvers used as test oracles.
//! - [`harness`]: experiment configs, seeded runs, sweeps and CSV artifacts.

pub mod blending;
pub mod cartpole;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod mppi;
pub mod qnet;
pub mod replay;
pub mod seeding;
pub mod tabular;
pub mod theory;
pub mod trainer;

pub use blending::{BlendConfig, HorizonEstimates};
pub use cartpole::{CartpoleEnv, CartpoleParams, CartpoleState};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, LearningCurve};
pub use mdp::{DisadvantageSample, EnvModel, MdpSpec, Trajectory};
pub use mppi::{ControlPlan, MppiConfig, ValueFn, ZeroValue};
pub use qnet::{AdamState, QNetwork};
pub use replay::ReplayBuffer;
pub use theory::BoundInputs;
pub use trainer::{LambdaSchedule, TrainConfig};
