//! On-policy experience collection and generalized advantage estimation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::{DistParams, Family};
use crate::envs::{Environment, Spaces};
use crate::nn::ParameterStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lam: f64,
}

impl GaeConfig {
    pub fn new(gamma: f64, lam: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lam) {
            return Err(Error::Config(format!("gamma and lambda must lie in [0, 1], got {gamma} and {lam}")));
        }
        Ok(Self { gamma, lam })
    }
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self { gamma: 0.99, lam: 0.95 }
    }
}

/// GAE for a single trajectory segment.
///
/// `dones[t]` marks that the transition at `t` ended an episode, so neither
/// the next value nor later advantages leak across it. `bootstrap` is the
/// value of the state following the last transition.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, cfg: GaeConfig) -> Vec<f64> {
    assert!(rewards.len() == values.len() && rewards.len() == dones.len());
    let mut adv = vec![0.0; rewards.len()];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..rewards.len()).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + cfg.gamma * next_value * live - values[t];
        next_adv = delta + cfg.gamma * cfg.lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    adv
}

/// Advantages rescaled to zero mean and unit (sample) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdvantages {
    pub values: Vec<f64>,
    /// Input had (numerically) zero spread; all outputs are ~0.
    pub degenerate: bool,
}

pub const ADVANTAGE_EPS: f64 = 1e-8;

pub fn normalize_advantages(advantages: &[f64]) -> Result<NormalizedAdvantages> {
    let n = advantages.len();
    if n < 2 {
        return Err(Error::Config(format!("advantage normalization needs at least 2 samples, got {n}")));
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let values = advantages.iter().map(|a| (a - mean) / (std + ADVANTAGE_EPS)).collect();
    Ok(NormalizedAdvantages {
        values,
        degenerate: std <= 1e-12 * mean.abs().max(1.0),
    })
}

/// Experience from `num_steps` steps of `num_envs` environments.
///
/// Flat index `t * num_envs + e` addresses step `t` of slot `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    num_steps: usize,
    num_envs: usize,
    obs_dim: usize,
    act_dim: usize,
    len: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    bootstrap_values: Vec<f64>,
    advantages: Option<Vec<f64>>,
    returns: Option<Vec<f64>>,
}

/// One transition as pushed into the buffer.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub done: bool,
    pub log_prob: f64,
    pub value: f64,
}

impl RolloutBuffer {
    pub fn new(num_steps: usize, num_envs: usize, obs_dim: usize, act_dim: usize) -> Self {
        let cap = num_steps * num_envs;
        Self {
            num_steps,
            num_envs,
            obs_dim,
            act_dim,
            len: 0,
            states: Vec::with_capacity(cap * obs_dim),
            actions: Vec::with_capacity(cap * act_dim),
            rewards: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
            log_probs: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            bootstrap_values: vec![0.0; num_envs],
            advantages: None,
            returns: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.num_steps * self.num_envs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_envs(&self) -> usize {
        self.num_envs
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn push(&mut self, tr: Transition<'_>) -> Result<()> {
        if self.len == self.capacity() {
            return Err(Error::Usage("rollout buffer is full".into()));
        }
        if tr.state.len() != self.obs_dim || tr.action.len() != self.act_dim {
            return Err(Error::Dimension {
                context: "rollout transition",
                expected: self.obs_dim + self.act_dim,
                got: tr.state.len() + tr.action.len(),
            });
        }
        self.states.extend_from_slice(tr.state);
        self.actions.extend_from_slice(tr.action);
        self.rewards.push(tr.reward);
        self.dones.push(tr.done);
        self.log_probs.push(tr.log_prob);
        self.values.push(tr.value);
        self.len += 1;
        self.advantages = None;
        self.returns = None;
        Ok(())
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn state_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn dones(&self) -> &[bool] {
        &self.dones
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bootstrap_values(&self) -> &[f64] {
        &self.bootstrap_values
    }

    /// `None` until [`RolloutBuffer::compute_gae`] has run.
    pub fn advantages(&self) -> Option<&[f64]> {
        self.advantages.as_deref()
    }

    pub fn returns(&self) -> Option<&[f64]> {
        self.returns.as_deref()
    }

    pub fn is_finalized(&self) -> bool {
        self.advantages.is_some()
    }

    /// Fills advantages and returns. `bootstrap_values[e]` is `V(s_T)` for slot `e`.
    pub fn compute_gae(&mut self, cfg: GaeConfig, bootstrap_values: &[f64]) -> Result<()> {
        if self.len != self.capacity() {
            return Err(Error::Usage(format!(
                "GAE needs a full buffer ({} of {} transitions stored)",
                self.len,
                self.capacity()
            )));
        }
        if bootstrap_values.len() != self.num_envs {
            return Err(Error::Dimension {
                context: "bootstrap values",
                expected: self.num_envs,
                got: bootstrap_values.len(),
            });
        }
        self.bootstrap_values = bootstrap_values.to_vec();
        let mut adv = vec![0.0; self.len];
        let slot = |v: &[f64], e: usize| v.iter().skip(e).step_by(self.num_envs).copied().collect::<Vec<_>>();
        for e in 0..self.num_envs {
            let rewards = slot(&self.rewards, e);
            let values = slot(&self.values, e);
            let dones: Vec<bool> = self.dones.iter().skip(e).step_by(self.num_envs).copied().collect();
            let a = gae(&rewards, &values, &dones, bootstrap_values[e], cfg);
            for (t, x) in a.into_iter().enumerate() {
                adv[t * self.num_envs + e] = x;
            }
        }
        self.returns = Some(adv.iter().zip(&self.values).map(|(a, v)| a + v).collect());
        self.advantages = Some(adv);
        Ok(())
    }

    /// Replaces the advantage and return targets of a full buffer.
    pub fn set_targets(&mut self, advantages: Vec<f64>, returns: Vec<f64>) -> Result<()> {
        if self.len != self.capacity() {
            return Err(Error::Usage("targets need a full buffer".into()));
        }
        for (context, got) in [("advantages", advantages.len()), ("returns", returns.len())] {
            if got != self.len {
                return Err(Error::Dimension {
                    context,
                    expected: self.len,
                    got,
                });
            }
        }
        self.advantages = Some(advantages);
        self.returns = Some(returns);
        Ok(())
    }
}

/// Environments stepped in lockstep, each with its own reset stream.
pub struct VecEnv {
    envs: Vec<Box<dyn Environment>>,
    reset_rngs: Vec<ChaCha8Rng>,
    obs: Vec<Vec<f64>>,
    running_return: Vec<f64>,
    running_len: Vec<usize>,
}

/// Episodes that finished during one [`collect`] call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStats {
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
}

impl EpisodeStats {
    pub fn mean_return(&self) -> Option<f64> {
        (!self.returns.is_empty()).then(|| self.returns.iter().sum::<f64>() / self.returns.len() as f64)
    }
}

impl VecEnv {
    pub fn new(factory: &dyn Fn() -> Box<dyn Environment>, num_envs: usize, seed: u64) -> Result<Self> {
        if num_envs == 0 {
            return Err(Error::Config("need at least one environment".into()));
        }
        let mut envs: Vec<_> = (0..num_envs).map(|_| factory()).collect();
        let mut reset_rngs: Vec<_> = (0..num_envs)
            .map(|e| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(e as u64 + 1);
                r
            })
            .collect();
        let obs = envs
            .iter_mut()
            .zip(&mut reset_rngs)
            .map(|(env, rng)| env.reset(rng))
            .collect();
        Ok(Self {
            envs,
            reset_rngs,
            obs,
            running_return: vec![0.0; num_envs],
            running_len: vec![0; num_envs],
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn spaces(&self) -> Spaces {
        self.envs[0].spaces()
    }

    /// Current observation of every slot.
    pub fn observations(&self) -> &[Vec<f64>] {
        &self.obs
    }
}

/// Runs the current (unperturbed) policy for `num_steps` steps in every slot.
///
/// Finished episodes are reset immediately; their returns are reported in
/// the returned [`EpisodeStats`]. The buffer is not yet finalized, but its
/// bootstrap values are set so that [`RolloutBuffer::compute_gae`] can be
/// called with [`RolloutBuffer::bootstrap_values`].
pub fn collect<R: Rng + ?Sized>(
    store: &ParameterStore,
    family: Family,
    envs: &mut VecEnv,
    num_steps: usize,
    rng: &mut R,
) -> Result<(RolloutBuffer, EpisodeStats)> {
    let spaces = envs.spaces();
    if spaces.obs_dim != store.obs_dim() || spaces.action_dim != store.act_dim() {
        return Err(Error::Config(format!(
            "network expects obs {} / act {}, environment provides {} / {}",
            store.obs_dim(),
            store.act_dim(),
            spaces.obs_dim,
            spaces.action_dim
        )));
    }
    let mut buf = RolloutBuffer::new(num_steps, envs.len(), spaces.obs_dim, spaces.action_dim);
    let mut stats = EpisodeStats::default();

    for _ in 0..num_steps {
        for e in 0..envs.len() {
            let state = std::mem::take(&mut envs.obs[e]);
            let loc = store.actor.predict(&state)?;
            let dist = DistParams::from_log_scale(family, loc, &store.log_std)?;
            let action = dist.sample(rng);
            let log_prob = dist.log_prob(&action)?.total;
            let value = store.critic.predict(&state)?[0];

            let step = envs.envs[e].step(&action)?;
            buf.push(Transition {
                state: &state,
                action: &action,
                reward: step.reward,
                done: step.done,
                log_prob,
                value,
            })?;

            envs.running_return[e] += step.reward;
            envs.running_len[e] += 1;
            envs.obs[e] = if step.done {
                stats.returns.push(envs.running_return[e]);
                stats.lengths.push(envs.running_len[e]);
                envs.running_return[e] = 0.0;
                envs.running_len[e] = 0;
                envs.envs[e].reset(&mut envs.reset_rngs[e])
            } else {
                step.observation
            };
        }
    }

    buf.bootstrap_values = envs
        .obs
        .iter()
        .map(|o| store.critic.predict(o).map(|v| v[0]))
        .collect::<Result<_>>()?;
    Ok((buf, stats))
}
