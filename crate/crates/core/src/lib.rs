//! Value-incentivized actor-critic (VAC) for online reinforcement learning on
//! linear MDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: finite MDPs, their one-hot linear embeddings, exact dynamic
//!   programming, visitation distributions, rollouts and the discounted
//!   occupancy sampler.
//! * [`approx`]: the linear Q-function class and log-linear policy class,
//!   their norm balls and projections.
//! * [`objective`]: the transition dataset, the VAC loss with its closed-form
//!   inner least-squares fit, the regularised objective and its gradients,
//!   and the MEX loss used as a baseline.
//! * [`solver`]: alternating projected gradient ascent on the joint
//!   objective.
//! * [`agents`]: the online loops (episodic and discounted VAC, baselines)
//!   and theory-derived hyperparameters.
//! * [`verify`]: executable checks of the structural identities the method
//!   rests on.
//!
//! Step indices are zero-based throughout: an episodic instance with horizon
//! `H` has steps `0..H`, and step `H` is the terminal boundary where every
//! Q-function is zero.

pub mod agents;
pub mod approx;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod mdp;
pub mod objective;
pub mod rng;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;
