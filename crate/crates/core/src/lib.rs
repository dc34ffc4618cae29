//! Group-fair planning in finite-horizon tabular MDPs.
//!
//! A learner chooses mixtures of policies to maximize expected reward while a
//! regulator enforces that every group of states collects at least a
//! threshold `α` of reward. The two play a zero-sum game over the Lagrangian
//!
//! ```text
//! U(D, λ) = (1/H) [ V^tot(D) + Σ_g λ^g (V^g(D) − α) ],   λ ≥ 0, ‖λ‖₁ ≤ C
//! ```
//!
//! and the averaged play approximates a minimax equilibrium.
//!
//! * [`mdp`]: environments, policies, exact and sampled evaluation, planning.
//! * [`groups`]: group functions, separator sets, linear-optimization oracles.
//! * [`regulator`]: multiplier best responses and FTPL-style regulators.
//! * [`game`]: fictitious play, best-response/no-regret dynamics, diagnostics.
//! * [`envs`]: preferential-attachment graph walks and random instances.
//! * [`harness`]: file-based experiment commands behind the `fairmdp` binary.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envs;
pub mod error;
pub mod game;
pub mod groups;
pub mod harness;
pub mod mdp;
pub mod regulator;
pub mod rng;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use game::{
    equilibrium_check, fairfict_err_canc, fairfict_rl, lagrangian_l, morl_brnr, objective_u, regulator_regret,
    solve_minimax_alpha, EquilibriumReport, GameTranscript, RegulatorKind, SolverConfig,
};
pub use groups::{Context, GroupFunction, GroupSet, SeparatorSet};
pub use mdp::{GroupValues, Policy, PolicyMixture, TabularMdp};
pub use regulator::LagrangeWeights;
