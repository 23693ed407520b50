//! Clipped-surrogate policy optimization with an optional perturbed mean.
//!
//! Each iteration collects `num_steps × num_envs` transitions with the
//! unperturbed policy, computes GAE targets, and runs `update_epochs` passes
//! of minibatch Adam steps. With RPO enabled the distribution location is
//! shifted by fresh `U(-α, α)` noise every time a state's log-probability is
//! recomputed during the update; the stored (old) log-probabilities are never
//! perturbed.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augmentation::{self, AugConfig, AugMode};
use crate::distributions::{DistParams, Family, PerturbSpec};
use crate::envs::Environment;
use crate::nn::{Adam, AdamConfig, ForwardCache, Gradients, ParameterStore, Parameters};
use crate::rollout::{self, EpisodeStats, GaeConfig, RolloutBuffer, VecEnv};
use crate::{Error, Result};

/// Entropy coefficients compared against RPO.
pub const ENT_COEF_PRESETS: [f64; 6] = [0.0, 0.01, 0.05, 0.5, 1.0, 10.0];

/// Default half-width of the mean perturbation.
pub const DEFAULT_RPO_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    #[default]
    Rpo,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::Rpo => "rpo",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(Algo::Ppo),
            "rpo" => Ok(Algo::Rpo),
            other => Err(Error::Usage(format!("unknown algorithm {other:?} (expected ppo or rpo)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_timesteps: usize,
    pub num_steps: usize,
    pub num_envs: usize,
    pub learning_rate: f64,
    /// Linearly decay the learning rate to zero over the run.
    pub anneal_lr: bool,
    pub gamma: f64,
    pub lam: f64,
    pub num_minibatches: usize,
    pub update_epochs: usize,
    pub clip_coef: f64,
    pub clip_value_loss: bool,
    pub value_coef: f64,
    pub ent_coef: f64,
    pub algo: Algo,
    /// Half-width of the location noise; only read when `algo` is RPO.
    pub rpo_alpha: f64,
    /// Draw the location noise once per stored state and reuse it across
    /// epochs instead of redrawing on every visit.
    pub cache_perturbation: bool,
    pub dist_family: Family,
    pub aug: AugConfig,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Record wall-clock seconds in metric rows (zero when off).
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_timesteps: 1_000_000,
            num_steps: 2048,
            num_envs: 1,
            learning_rate: 3e-4,
            anneal_lr: false,
            gamma: 0.99,
            lam: 0.95,
            num_minibatches: 32,
            update_epochs: 10,
            clip_coef: 0.2,
            clip_value_loss: true,
            value_coef: 0.5,
            ent_coef: 0.0,
            algo: Algo::Rpo,
            rpo_alpha: DEFAULT_RPO_ALPHA,
            cache_perturbation: false,
            dist_family: Family::Gaussian,
            aug: AugConfig::default(),
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            seed: 1,
            timing: true,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.num_steps * self.num_envs
    }

    pub fn minibatch_size(&self) -> usize {
        self.batch_size() / self.num_minibatches
    }

    pub fn num_iterations(&self) -> usize {
        self.total_timesteps / self.batch_size()
    }

    /// The perturbation in effect, `None` for plain PPO.
    pub fn perturbation(&self) -> Option<PerturbSpec> {
        match self.algo {
            Algo::Ppo => None,
            Algo::Rpo => Some(PerturbSpec::new(self.rpo_alpha).expect("validated")),
        }
    }

    // Negated comparisons reject NaN along with out-of-range values.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_steps == 0 || self.num_envs == 0 {
            return bad("num_steps and num_envs must be positive".into());
        }
        if self.num_minibatches == 0 || !self.batch_size().is_multiple_of(self.num_minibatches) {
            return bad(format!(
                "num_minibatches ({}) must divide the batch size ({})",
                self.num_minibatches,
                self.batch_size()
            ));
        }
        if self.minibatch_size() < 2 {
            return bad("minibatches need at least 2 samples for advantage normalization".into());
        }
        if self.total_timesteps < self.batch_size() {
            return bad(format!(
                "total_timesteps ({}) is smaller than one rollout ({})",
                self.total_timesteps,
                self.batch_size()
            ));
        }
        if !(self.clip_coef > 0.0) {
            return bad(format!("clip coefficient must be positive, got {}", self.clip_coef));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.max_grad_norm > 0.0) {
            return bad(format!("max_grad_norm must be positive, got {}", self.max_grad_norm));
        }
        if !(self.ent_coef.is_finite() && self.value_coef.is_finite()) {
            return bad("loss coefficients must be finite".into());
        }
        if self.hidden.is_empty() {
            return bad("need at least one hidden layer".into());
        }
        GaeConfig::new(self.gamma, self.lam)?;
        PerturbSpec::new(self.rpo_alpha)?;
        self.aug.validate(self.dist_family)
    }

    /// Short, filesystem-safe label for this algorithm variant.
    pub fn variant_name(&self) -> String {
        let mut name = format!("{}-{}", self.algo, self.dist_family);
        if self.algo == Algo::Rpo {
            name.push_str(&format!("-a{}", self.rpo_alpha));
        }
        if self.ent_coef != 0.0 {
            name.push_str(&format!("-ent{}", self.ent_coef));
        }
        if self.aug.mode != AugMode::None {
            name.push_str(&format!("-{}", self.aug.mode));
        }
        name
    }
}

/// Diagnostics averaged over all minibatches of one update phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy_bonus: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub drac_loss: f64,
    /// Mean probability ratio of the very first minibatch (before any step).
    pub initial_ratio_mean: f64,
    /// Approximate KL of the very first minibatch.
    pub initial_approx_kl: f64,
    /// Minibatches whose advantages had zero spread.
    pub degenerate_minibatches: usize,
}

/// One logged iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub global_step: u64,
    /// Mean undiscounted return of episodes finished this iteration; NaN if none finished.
    pub episodic_return_mean: f64,
    pub policy_entropy: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub wall_time_s: f64,
}

/// Policy loss `-mean(min(ρA, clip(ρ, 1-ε, 1+ε)A))` and its gradient with
/// respect to each new log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grad_logp: Vec<f64>,
    pub ratios: Vec<f64>,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

pub fn policy_loss(new_logp: &[f64], old_logp: &[f64], advantages: &[f64], clip_coef: f64) -> Result<PolicyLoss> {
    let n = new_logp.len();
    if old_logp.len() != n || advantages.len() != n {
        return Err(Error::Dimension {
            context: "policy loss inputs",
            expected: n,
            got: old_logp.len().min(advantages.len()),
        });
    }
    let inv_n = 1.0 / n as f64;
    let (lo, hi) = (1.0 - clip_coef, 1.0 + clip_coef);
    let mut out = PolicyLoss {
        loss: 0.0,
        grad_logp: vec![0.0; n],
        ratios: vec![0.0; n],
        approx_kl: 0.0,
        clip_fraction: 0.0,
    };
    for i in 0..n {
        let log_ratio = new_logp[i] - old_logp[i];
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite(format!(
                "probability ratio at sample {i}: new log-prob {}, old log-prob {}",
                new_logp[i], old_logp[i]
            )));
        }
        let a = advantages[i];
        let unclipped = -a * ratio;
        let clipped = -a * ratio.clamp(lo, hi);
        out.loss += unclipped.max(clipped) * inv_n;
        // The ratio only carries gradient when the unclipped branch is active.
        if unclipped >= clipped || (lo..=hi).contains(&ratio) {
            out.grad_logp[i] = -a * ratio * inv_n;
        }
        out.ratios[i] = ratio;
        out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
        if (ratio - 1.0).abs() > clip_coef {
            out.clip_fraction += inv_n;
        }
    }
    Ok(out)
}

/// Value loss, optionally clipped around the values seen at collection time,
/// and its gradient with respect to each new value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueLoss {
    pub loss: f64,
    pub grad_value: Vec<f64>,
}

pub fn value_loss(new_values: &[f64], old_values: &[f64], returns: &[f64], clip_coef: f64, clipped: bool) -> Result<ValueLoss> {
    let n = new_values.len();
    if old_values.len() != n || returns.len() != n {
        return Err(Error::Dimension {
            context: "value loss inputs",
            expected: n,
            got: old_values.len().min(returns.len()),
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut out = ValueLoss {
        loss: 0.0,
        grad_value: vec![0.0; n],
    };
    for i in 0..n {
        let (v, r) = (new_values[i], returns[i]);
        let err = v - r;
        if !clipped {
            out.loss += 0.5 * err * err * inv_n;
            out.grad_value[i] = err * inv_n;
            continue;
        }
        let delta = v - old_values[i];
        let v_clip = old_values[i] + delta.clamp(-clip_coef, clip_coef);
        let err_clip = v_clip - r;
        if err * err >= err_clip * err_clip {
            out.loss += 0.5 * err * err * inv_n;
            out.grad_value[i] = err * inv_n;
        } else {
            out.loss += 0.5 * err_clip * err_clip * inv_n;
            if delta.abs() < clip_coef {
                out.grad_value[i] = err_clip * inv_n;
            }
        }
    }
    Ok(out)
}

/// Mean over states of the summed per-dimension entropy.
pub fn logged_entropy(batch: &[DistParams]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("entropy of an empty batch".into()));
    }
    Ok(batch.iter().map(DistParams::entropy).sum::<f64>() / batch.len() as f64)
}

/// Unperturbed action distributions of `store` at each buffered state.
pub fn dist_params_batch(store: &ParameterStore, family: Family, buffer: &RolloutBuffer) -> Result<Vec<DistParams>> {
    (0..buffer.len())
        .map(|i| DistParams::from_log_scale(family, store.actor.predict(buffer.state(i))?, &store.log_std))
        .collect()
}

/// Independent random streams used during an update phase.
#[derive(Debug, Clone)]
pub struct UpdateRngs {
    pub shuffle: ChaCha8Rng,
    pub perturb: ChaCha8Rng,
    pub aug: ChaCha8Rng,
}

impl UpdateRngs {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            shuffle: stream(seed, 2),
            perturb: stream(seed, 3),
            aug: stream(seed, 4),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Scales `grads` so its global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        grads.scale(coef);
    }
    norm
}

/// One minibatch of stored experience, ready for a loss evaluation.
#[derive(Debug, Clone)]
pub struct Minibatch<'a> {
    pub states: Vec<&'a [f64]>,
    pub actions: Vec<&'a [f64]>,
    pub old_log_probs: Vec<f64>,
    pub old_values: Vec<f64>,
    /// Already normalized.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Location offsets, sample-major (`len × act_dim`); `None` leaves the
    /// location unperturbed.
    pub loc_noise: Option<Vec<f64>>,
}

impl Minibatch<'_> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Scalar pieces of a minibatch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchLoss {
    /// `policy + value_coef · value − ent_coef · entropy`
    pub total: f64,
    pub policy: PolicyLoss,
    pub value: ValueLoss,
    /// Mean summed entropy of the unperturbed distributions.
    pub entropy: f64,
}

/// Total clipped-surrogate loss of `store` on `mb` and its gradient with
/// respect to every parameter.
pub fn minibatch_loss(
    store: &ParameterStore,
    family: Family,
    mb: &Minibatch<'_>,
    cfg: &TrainConfig,
) -> Result<(MinibatchLoss, Gradients)> {
    let n = mb.len();
    let act_dim = store.act_dim();
    for (context, got) in [
        ("minibatch actions", mb.actions.len()),
        ("minibatch old log-probs", mb.old_log_probs.len()),
        ("minibatch old values", mb.old_values.len()),
        ("minibatch advantages", mb.advantages.len()),
        ("minibatch returns", mb.returns.len()),
    ] {
        if got != n {
            return Err(Error::Dimension { context, expected: n, got });
        }
    }
    if let Some(noise) = &mb.loc_noise {
        if noise.len() != n * act_dim {
            return Err(Error::Dimension {
                context: "location noise",
                expected: n * act_dim,
                got: noise.len(),
            });
        }
    }

    let scale: Vec<f64> = store.log_std.iter().map(|s| s.exp()).collect();
    let mut new_logp = Vec::with_capacity(n);
    let mut new_values = Vec::with_capacity(n);
    let mut entropy_sum = 0.0;
    let mut caches: Vec<(ForwardCache, ForwardCache)> = Vec::with_capacity(n);
    let mut dlogp_dloc = vec![0.0; n * act_dim];
    let mut dlogp_dlogstd = vec![0.0; n * act_dim];

    for k in 0..n {
        let (state, action) = (mb.states[k], mb.actions[k]);
        if action.len() != act_dim {
            return Err(Error::Dimension {
                context: "minibatch action",
                expected: act_dim,
                got: action.len(),
            });
        }
        let actor_cache = store.actor.forward(state)?;
        let critic_cache = store.critic.forward(state)?;
        let mut logp = 0.0;
        for j in 0..act_dim {
            let mut loc = actor_cache.output()[j];
            if let Some(noise) = &mb.loc_noise {
                loc += noise[k * act_dim + j];
            }
            let sd = scale[j];
            logp += family.log_density(loc, sd, action[j]);
            let (g_loc, g_scale) = family.log_density_grad(loc, sd, action[j]);
            dlogp_dloc[k * act_dim + j] = g_loc;
            dlogp_dlogstd[k * act_dim + j] = g_scale * sd;
            entropy_sum += family.entropy(sd);
        }
        new_logp.push(logp);
        new_values.push(critic_cache.output()[0]);
        caches.push((actor_cache, critic_cache));
    }

    let policy = policy_loss(&new_logp, &mb.old_log_probs, &mb.advantages, cfg.clip_coef)?;
    let value = value_loss(&new_values, &mb.old_values, &mb.returns, cfg.clip_coef, cfg.clip_value_loss)?;
    let entropy = entropy_sum / n as f64;
    let total = policy.loss + cfg.value_coef * value.loss - cfg.ent_coef * entropy;

    let mut grads: Gradients = store.zeros_like();
    let mut d_loc = vec![0.0; act_dim];
    for (k, (actor_cache, critic_cache)) in caches.iter().enumerate() {
        let g = policy.grad_logp[k];
        let row = k * act_dim..(k + 1) * act_dim;
        for (d, dl) in d_loc.iter_mut().zip(&dlogp_dloc[row.clone()]) {
            *d = g * dl;
        }
        store.actor.accumulate_backward(actor_cache, &d_loc, &mut grads.actor)?;
        for (gs, d) in grads.log_std.iter_mut().zip(&dlogp_dlogstd[row]) {
            *gs += g * d;
        }
        let gv = cfg.value_coef * value.grad_value[k];
        store.critic.accumulate_backward(critic_cache, &[gv], &mut grads.critic)?;
    }
    let ent_grad = family.entropy_grad_log_scale();
    grads.log_std.iter_mut().for_each(|g| *g -= cfg.ent_coef * ent_grad);

    Ok((
        MinibatchLoss {
            total,
            policy,
            value,
            entropy,
        },
        grads,
    ))
}

/// Runs the update epochs over a finalized buffer.
pub fn update(
    store: &mut ParameterStore,
    adam: &mut Adam<ParameterStore>,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    rngs: &mut UpdateRngs,
) -> Result<LossReport> {
    let (Some(advantages), Some(returns)) = (buffer.advantages(), buffer.returns()) else {
        return Err(Error::Usage("update needs a buffer with computed advantages".into()));
    };
    if buffer.len() != cfg.batch_size() {
        return Err(Error::Dimension {
            context: "update batch",
            expected: cfg.batch_size(),
            got: buffer.len(),
        });
    }
    let family = cfg.dist_family;
    let perturb = cfg.perturbation();
    let act_dim = store.act_dim();
    let mb_size = cfg.minibatch_size();

    // Noise reused across epochs when caching is on.
    let cached_noise: Option<Vec<f64>> = match perturb {
        Some(spec) if cfg.cache_perturbation => Some(
            (0..buffer.len() * act_dim)
                .map(|_| spec.draw(&mut rngs.perturb))
                .collect(),
        ),
        _ => None,
    };

    let mut report = LossReport::default();
    let mut minibatches = 0usize;
    let mut indices: Vec<usize> = (0..buffer.len()).collect();

    for _epoch in 0..cfg.update_epochs {
        indices.shuffle(&mut rngs.shuffle);
        for idx in indices.chunks_exact(mb_size) {
            let loc_noise = perturb.map(|spec| match &cached_noise {
                Some(noise) => idx
                    .iter()
                    .flat_map(|&i| noise[i * act_dim..(i + 1) * act_dim].iter().copied())
                    .collect(),
                None => (0..idx.len() * act_dim).map(|_| spec.draw(&mut rngs.perturb)).collect(),
            });
            let raw_adv: Vec<f64> = idx.iter().map(|&i| advantages[i]).collect();
            let norm = rollout::normalize_advantages(&raw_adv)?;
            if norm.degenerate {
                report.degenerate_minibatches += 1;
            }
            let mb = Minibatch {
                states: idx.iter().map(|&i| buffer.state(i)).collect(),
                actions: idx.iter().map(|&i| buffer.action(i)).collect(),
                old_log_probs: idx.iter().map(|&i| buffer.log_probs()[i]).collect(),
                old_values: idx.iter().map(|&i| buffer.values()[i]).collect(),
                advantages: norm.values,
                returns: idx.iter().map(|&i| returns[i]).collect(),
                loc_noise,
            };
            let (parts, mut grads) = minibatch_loss(store, family, &mb, cfg)?;
            let mut loss = parts.total;

            if cfg.aug.mode == AugMode::Drac {
                let drac = augmentation::drac_regularizer(store, family, &mb.states, &cfg.aug, &mut rngs.aug, &mut grads)?;
                loss += drac;
                report.drac_loss += drac;
            }

            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {loss} (policy {}, value {}, entropy {}) at minibatch {minibatches}",
                    parts.policy.loss, parts.value.loss, parts.entropy
                )));
            }
            clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.step(store, &grads);
            if !store.is_finite() {
                return Err(Error::NonFinite(format!("parameters after minibatch {minibatches}")));
            }

            if minibatches == 0 {
                report.initial_ratio_mean = parts.policy.ratios.iter().sum::<f64>() / mb_size as f64;
                report.initial_approx_kl = parts.policy.approx_kl;
            }
            report.policy_loss += parts.policy.loss;
            report.value_loss += parts.value.loss;
            report.entropy_bonus += parts.entropy;
            report.approx_kl += parts.policy.approx_kl;
            report.clip_fraction += parts.policy.clip_fraction;
            minibatches += 1;
        }
    }

    if minibatches > 0 {
        let m = minibatches as f64;
        report.policy_loss /= m;
        report.value_loss /= m;
        report.entropy_bonus /= m;
        report.approx_kl /= m;
        report.clip_fraction /= m;
        report.drac_loss /= m;
    }
    Ok(report)
}

/// A training run that can be stepped one iteration at a time.
pub struct Trainer {
    cfg: TrainConfig,
    store: ParameterStore,
    adam: Adam<ParameterStore>,
    envs: VecEnv,
    action_rng: ChaCha8Rng,
    update_rngs: UpdateRngs,
    iteration: usize,
    global_step: u64,
    started: Instant,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, env_factory: &dyn Fn() -> Box<dyn Environment>) -> Result<Self> {
        cfg.validate()?;
        let envs = VecEnv::new(env_factory, cfg.num_envs, cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
        let spaces = envs.spaces();
        let store = ParameterStore::new(spaces.obs_dim, spaces.action_dim, &cfg.hidden, &mut stream(cfg.seed, 0))?;
        let adam = Adam::new(
            &store,
            AdamConfig {
                learning_rate: cfg.learning_rate,
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            action_rng: stream(cfg.seed, 1),
            update_rngs: UpdateRngs::from_seed(cfg.seed),
            cfg,
            store,
            adam,
            envs,
            iteration: 0,
            global_step: 0,
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    /// Direct access for warm starts; the optimizer state is left as is.
    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParameterStore {
        self.store
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.num_iterations()
    }

    /// Collects a rollout and finalizes its GAE targets without updating.
    pub fn collect(&mut self) -> Result<(RolloutBuffer, EpisodeStats)> {
        let (mut buffer, stats) = rollout::collect(
            &self.store,
            self.cfg.dist_family,
            &mut self.envs,
            self.cfg.num_steps,
            &mut self.action_rng,
        )?;
        let bootstrap = buffer.bootstrap_values().to_vec();
        buffer.compute_gae(GaeConfig::new(self.cfg.gamma, self.cfg.lam)?, &bootstrap)?;
        Ok((buffer, stats))
    }

    /// Runs the update epochs on an already finalized buffer.
    pub fn update(&mut self, buffer: &RolloutBuffer) -> Result<LossReport> {
        update(&mut self.store, &mut self.adam, buffer, &self.cfg, &mut self.update_rngs)
    }

    /// One full collect → GAE → update cycle.
    pub fn iterate(&mut self) -> Result<(MetricRow, LossReport)> {
        if self.cfg.anneal_lr {
            let frac = 1.0 - self.iteration as f64 / self.cfg.num_iterations() as f64;
            self.adam.set_learning_rate(frac * self.cfg.learning_rate);
        }
        let (mut buffer, stats) = self.collect()?;
        if self.cfg.aug.mode == AugMode::Rad {
            augmentation::rad_update_hook(&mut buffer, &self.cfg.aug, &mut self.update_rngs.aug);
        }
        let report = self.update(&buffer)?;
        self.iteration += 1;
        self.global_step += buffer.len() as u64;

        let entropy = logged_entropy(&dist_params_batch(&self.store, self.cfg.dist_family, &buffer)?)?;
        let row = MetricRow {
            global_step: self.global_step,
            episodic_return_mean: stats.mean_return().unwrap_or(f64::NAN),
            policy_entropy: entropy,
            policy_loss: report.policy_loss,
            value_loss: report.value_loss,
            approx_kl: report.approx_kl,
            clip_fraction: report.clip_fraction,
            wall_time_s: if self.cfg.timing {
                self.started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        Ok((row, report))
    }
}

/// Final parameters and every logged row of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub store: ParameterStore,
    pub history: Vec<MetricRow>,
}

/// Trains until `total_timesteps` are consumed, handing each row to `sink`
/// as soon as it is produced.
pub fn train(
    cfg: &TrainConfig,
    env_factory: &dyn Fn() -> Box<dyn Environment>,
    sink: &mut dyn FnMut(&MetricRow) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone(), env_factory)?;
    let mut history = Vec::with_capacity(cfg.num_iterations());
    while !trainer.is_done() {
        let (row, _) = trainer.iterate()?;
        sink(&row)?;
        history.push(row);
    }
    Ok(TrainOutcome {
        store: trainer.into_store(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ratio_gives_negative_mean_advantage() {
        let adv = [0.5, -1.5, 2.0];
        let pl = policy_loss(&[-1.0, 0.3, 2.0], &[-1.0, 0.3, 2.0], &adv, 0.2).unwrap();
        assert!((pl.loss - (-(0.5 - 1.5 + 2.0) / 3.0)).abs() < 1e-15);
        assert_eq!(pl.clip_fraction, 0.0);
        assert_eq!(pl.approx_kl, 0.0);
    }

    #[test]
    fn clip_examples() {
        let pl = policy_loss(&[1.5f64.ln()], &[0.0], &[1.0], 0.2).unwrap();
        assert!((pl.loss - (-1.2)).abs() < 1e-12);
        assert_eq!(pl.grad_logp, vec![0.0]);

        let pl = policy_loss(&[0.5f64.ln()], &[0.0], &[-1.0], 0.2).unwrap();
        assert!((pl.loss - 0.8).abs() < 1e-12);
        assert_eq!(pl.grad_logp, vec![0.0]);

        // Pessimistic branch keeps the gradient when the ratio moved the wrong way.
        let pl = policy_loss(&[1.5f64.ln()], &[0.0], &[-1.0], 0.2).unwrap();
        assert!((pl.loss - 1.5).abs() < 1e-12);
        assert!((pl.grad_logp[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_ratio_aborts() {
        assert!(matches!(
            policy_loss(&[1000.0], &[0.0], &[1.0], 0.2),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(value_loss(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], 0.2, true).unwrap().loss, 0.0);
        let vl = value_loss(&[2.0], &[0.0], &[0.0], 0.2, true).unwrap();
        assert!((vl.loss - 2.0).abs() < 1e-15);
        let vl = value_loss(&[1.0, 3.0], &[0.0, 0.0], &[0.0, 0.0], 0.2, false).unwrap();
        assert!((vl.loss - 2.5).abs() < 1e-15);
    }

    #[test]
    fn value_clip_blocks_gradient_past_the_band() {
        // v moved 1.0 past old towards nothing useful; clipped error is larger.
        let vl = value_loss(&[1.0], &[0.0], &[5.0], 0.2, true).unwrap();
        assert!((vl.loss - 0.5 * 4.8 * 4.8).abs() < 1e-12);
        assert_eq!(vl.grad_value, vec![0.0]);
    }

    fn finite_difference_check(new_logp: &[f64], old: &[f64], adv: &[f64]) {
        let pl = policy_loss(new_logp, old, adv, 0.2).unwrap();
        let h = 1e-7;
        for i in 0..new_logp.len() {
            let mut up = new_logp.to_vec();
            let mut dn = new_logp.to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (policy_loss(&up, old, adv, 0.2).unwrap().loss - policy_loss(&dn, old, adv, 0.2).unwrap().loss)
                / (2.0 * h);
            assert!((fd - pl.grad_logp[i]).abs() < 1e-6, "sample {i}: {fd} vs {}", pl.grad_logp[i]);
        }
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        finite_difference_check(&[0.1, -0.3, 0.05, 0.4, -0.01], &[0.0; 5], &[1.0, -0.5, 2.0, -1.0, 0.3]);
    }

    #[test]
    fn logged_entropy_examples() {
        let g = |scale: Vec<f64>| DistParams::new(Family::Gaussian, vec![0.7; scale.len()], scale).unwrap();
        assert!((logged_entropy(&[g(vec![1.0]), g(vec![1.0])]).unwrap() - 1.418_939).abs() < 1e-6);
        assert!((logged_entropy(&[g(vec![1.0, 1.0])]).unwrap() - 2.837_877).abs() < 1e-6);
        let e = std::f64::consts::E;
        assert!((logged_entropy(&[g(vec![e])]).unwrap() - 2.418_939).abs() < 1e-6);
        assert!(logged_entropy(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            num_minibatches: 3,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            clip_coef: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            total_timesteps: 100,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn iteration_count() {
        let c = TrainConfig {
            total_timesteps: 2048,
            ..TrainConfig::default()
        };
        assert_eq!(c.num_iterations(), 1);
        assert_eq!(c.minibatch_size(), 64);
    }

    #[test]
    fn variant_names() {
        let mut c = TrainConfig::default();
        assert_eq!(c.variant_name(), "rpo-gaussian-a0.5");
        c.algo = Algo::Ppo;
        assert_eq!(c.variant_name(), "ppo-gaussian");
        c.algo = Algo::Rpo;
        c.ent_coef = 0.01;
        c.aug.mode = AugMode::Rad;
        assert_eq!(c.variant_name(), "rpo-gaussian-a0.5-ent0.01-rad");
    }

    #[test]
    fn grad_clip_caps_norm() {
        let mut g = vec![3.0, 4.0];
        let before = clip_grad_norm(&mut g, 0.5);
        assert_eq!(before, 5.0);
        assert!((g.global_norm() - 0.5).abs() < 1e-6);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
