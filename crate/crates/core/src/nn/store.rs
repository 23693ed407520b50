use std::f64::consts::SQRT_2;

use rand::Rng;

use super::mlp::Mlp;
use crate::{Error, Result};

/// Anything made of flat `f64` tensors that an optimizer can walk over.
///
/// Implementors must return tensors in a stable order so that two values
/// produced by `zeros_like` line up element for element.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn add_assign(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            assert_eq!(dst.len(), src.len(), "parameter shapes diverged");
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
}

impl Parameters for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }

    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Mlp::zeros_like(self)
    }
}

/// Every trainable parameter of an agent: the actor's mean network, a
/// state-independent log-scale vector, and the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub critic: Mlp,
}

/// Loss gradients share the store's layout.
pub type Gradients = ParameterStore;

impl ParameterStore {
    /// Orthogonally initialized actor and critic with the given hidden widths.
    ///
    /// Hidden layers use gain √2, the mean head 0.01 and the value head 1.0.
    /// The log-scale vector starts at zero (unit scale).
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "network widths must be positive (obs {obs_dim}, act {act_dim}, hidden {hidden:?})"
            )));
        }
        let widths = |out: usize| {
            std::iter::once(obs_dim)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(out))
                .collect::<Vec<_>>()
        };
        let critic = Mlp::orthogonal(&widths(1), SQRT_2, 1.0, rng);
        let actor = Mlp::orthogonal(&widths(act_dim), SQRT_2, 0.01, rng);
        Ok(Self {
            actor,
            log_std: vec![0.0; act_dim],
            critic,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Tensor names in the order used by [`Parameters::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mlp_names = |prefix: &str, net: &Mlp| {
            (0..net.layers().len())
                .flat_map(|k| [format!("{prefix}.{k}.weight"), format!("{prefix}.{k}.bias")])
                .collect::<Vec<_>>()
        };
        let mut names = mlp_names("actor", &self.actor);
        names.push("log_std".into());
        names.extend(mlp_names("critic", &self.critic));
        names
    }
}

impl Parameters for ParameterStore {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.actor.tensors();
        t.push(&self.log_std);
        t.extend(self.critic.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.actor.tensors_mut();
        t.push(&mut self.log_std);
        t.extend(self.critic.tensors_mut());
        t
    }

    fn zeros_like(&self) -> Self {
        Self {
            actor: self.actor.zeros_like(),
            log_std: vec![0.0; self.log_std.len()],
            critic: self.critic.zeros_like(),
        }
    }
}
