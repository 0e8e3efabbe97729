//! Observational imitation learning laboratory.
//!
//! A deterministic 2D driving/flying simulator, an ensemble of imperfect PID
//! teachers, a small MLP control policy trained with hand-written backprop and
//! Adam, the observe/rehearse/act training loop that imitates only the
//! currently best teacher, imitation and RL baselines, and an evaluation
//! harness with checkpoint-timeout resets.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod oil;
pub mod policy;
pub mod sim;
pub mod teachers;

pub use error::{Error, Result};
