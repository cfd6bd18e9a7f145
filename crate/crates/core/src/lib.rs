//! Backdoor-adjusted soft actor-critic (DoSAC) for confounded continuous control.
//!
//! The crate has three layers:
//!
//! - an exact finite-domain causal oracle ([`tabular_scm`]) that computes
//!   observational, interventional, and backdoor-adjusted action
//!   distributions by full enumeration, plus entropy-regularized policy
//!   iteration on confounder-free instances;
//! - the learning stack ([`nn`], [`policy`], [`critic`], [`agent`]): small
//!   MLPs with hand-written reverse-mode gradients, a pseudo-past
//!   reconstructor feeding an interventional actor, twin soft Q critics,
//!   and the replay/update/training loop for both `dosac` and the plain
//!   `sac` baseline;
//! - desk-scale experiments ([`envs`], [`harness`]): point-mass and
//!   pendulum environments, an additive action-confounder wrapper, and the
//!   seeded multi-run experiment driver behind the `dosac` CLI.

pub mod agent;
pub mod checkpoint;
pub mod critic;
pub mod envs;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod tabular_scm;
