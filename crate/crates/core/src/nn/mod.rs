//! Small dense networks with exact reverse-mode gradients.
//!
//! Everything here works on `f64` and row-major `Vec<f64>` storage. Networks
//! are tanh MLPs with a linear output layer, which is all the actor and
//! critic need.

mod adam;
mod init;
mod mlp;
mod store;

pub use adam::{Adam, AdamConfig};
pub use init::orthogonal_init;
pub use mlp::{Dense, ForwardCache, Mlp};
pub use store::{Gradients, ParameterStore, Parameters};
