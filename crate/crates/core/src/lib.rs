//! Policy optimization for continuous control.
//!
//! The crate bundles everything needed to train PPO-style agents on small
//! vector-state control tasks without an external tensor library:
//!
//! - [`nn`]: dense tanh networks with hand-written reverse-mode gradients and Adam.
//! - [`distributions`]: Gaussian, Laplace and Gumbel action distributions plus the
//!   uniform mean perturbation used by robust policy optimization (RPO).
//! - [`envs`]: Pendulum, continuous CartPole and a 2-d point mass.
//! - [`rollout`]: on-policy experience collection and generalized advantage estimation.
//! - [`trainer`]: the clipped-surrogate update loop with the optional mean perturbation.
//! - [`augmentation`]: random amplitude scaling (RAD) and augmentation-consistency
//!   regularization (DRAC).
//! - [`experiment`]: seed sweeps, CSV metrics, aggregation and SVG charts.

pub mod augmentation;
pub mod distributions;
pub mod envs;
mod error;
pub mod experiment;
pub mod nn;
pub mod rollout;
pub mod trainer;

pub use error::{Error, Result};
