//! Observation augmentation baselines layered on the PPO update.
//!
//! RAD rescales every stored observation by one random factor before the
//! update epochs. DRAC leaves the data alone and instead adds a consistency
//! penalty between the policy/value on clean and rescaled observations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::Family;
use crate::nn::{Gradients, ParameterStore};
use crate::rollout::RolloutBuffer;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AugMode {
    #[default]
    None,
    Rad,
    Drac,
}

impl AugMode {
    pub fn name(self) -> &'static str {
        match self {
            AugMode::None => "none",
            AugMode::Rad => "rad",
            AugMode::Drac => "drac",
        }
    }
}

impl fmt::Display for AugMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AugMode::None),
            "rad" => Ok(AugMode::Rad),
            "drac" => Ok(AugMode::Drac),
            other => Err(Error::Usage(format!("unknown augmentation {other:?} (expected none, rad or drac)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    pub mode: AugMode,
    pub scale_low: f64,
    pub scale_high: f64,
    /// Weight of the DRAC consistency penalty.
    pub drac_coef: f64,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            mode: AugMode::None,
            scale_low: 0.6,
            scale_high: 1.2,
            drac_coef: 0.1,
        }
    }
}

impl AugConfig {
    pub fn validate(&self, family: Family) -> Result<()> {
        if !(self.scale_low > 0.0 && self.scale_low <= self.scale_high && self.scale_high.is_finite()) {
            return Err(Error::Config(format!(
                "amplitude bounds need 0 < low <= high, got [{}, {}]",
                self.scale_low, self.scale_high
            )));
        }
        if !(self.drac_coef >= 0.0 && self.drac_coef.is_finite()) {
            return Err(Error::Config(format!("drac coefficient must be >= 0, got {}", self.drac_coef)));
        }
        if self.mode == AugMode::Drac && !family.has_closed_form_kl() {
            return Err(Error::Config(format!("DRAC needs a closed-form KL, which {family} does not provide")));
        }
        Ok(())
    }

    fn draw_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale_low + (self.scale_high - self.scale_low) * rng.random::<f64>()
    }
}

/// Multiplies the whole state by one factor `u ~ U(low, high)`.
pub fn random_amplitude_scale<R: Rng + ?Sized>(state: &[f64], cfg: &AugConfig, rng: &mut R) -> Vec<f64> {
    let u = cfg.draw_factor(rng);
    state.iter().map(|x| x * u).collect()
}

/// Replaces every stored state with its amplitude-scaled version. Old
/// log-probabilities stay as collected.
pub fn rad_update_hook<R: Rng + ?Sized>(buffer: &mut RolloutBuffer, cfg: &AugConfig, rng: &mut R) {
    for i in 0..buffer.len() {
        let u = cfg.draw_factor(rng);
        buffer.state_mut(i).iter_mut().for_each(|x| *x *= u);
    }
}

/// DRAC consistency penalty over a minibatch of states.
///
/// `κ · [mean KL(π(·|s) ‖ π(·|aug s)) + mean (V(s) − V(aug s))²]`. The clean
/// branch is treated as a constant; gradients (already scaled by κ) are
/// added into `grads` through the augmented branch only. Returns the
/// penalty value.
pub fn drac_regularizer<R: Rng + ?Sized>(
    store: &ParameterStore,
    family: Family,
    states: &[&[f64]],
    cfg: &AugConfig,
    rng: &mut R,
    grads: &mut Gradients,
) -> Result<f64> {
    if states.is_empty() {
        return Ok(0.0);
    }
    if !family.has_closed_form_kl() {
        return Err(Error::Config(format!("DRAC needs a closed-form KL, which {family} does not provide")));
    }
    let n = states.len() as f64;
    let kappa = cfg.drac_coef;
    let scale: Vec<f64> = store.log_std.iter().map(|s| s.exp()).collect();
    let (mut kl_sum, mut sq_sum) = (0.0, 0.0);

    for &s in states {
        let aug = random_amplitude_scale(s, cfg, rng);
        let clean_loc = store.actor.predict(s)?;
        let clean_v = store.critic.predict(s)?[0];
        let actor_cache = store.actor.forward(&aug)?;
        let critic_cache = store.critic.forward(&aug)?;

        let mut d_loc = vec![0.0; scale.len()];
        for (j, (&mp, &mq)) in clean_loc.iter().zip(actor_cache.output()).enumerate() {
            let sd = scale[j];
            kl_sum += family.kl(mp, sd, mq, sd).expect("checked above");
            let (gm, gs) = family.kl_grad_q(mp, sd, mq, sd).expect("checked above");
            d_loc[j] = kappa * gm / n;
            grads.log_std[j] += kappa * gs * sd / n;
        }
        store.actor.accumulate_backward(&actor_cache, &d_loc, &mut grads.actor)?;

        let diff = critic_cache.output()[0] - clean_v;
        sq_sum += diff * diff;
        store
            .critic
            .accumulate_backward(&critic_cache, &[kappa * 2.0 * diff / n], &mut grads.critic)?;
    }
    Ok(kappa * (kl_sum / n + sq_sum / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Parameters;
    use crate::rollout::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds(lo: f64, hi: f64) -> AugConfig {
        AugConfig {
            scale_low: lo,
            scale_high: hi,
            ..AugConfig::default()
        }
    }

    #[test]
    fn unit_bounds_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = [0.3, -1.7, 2.0];
        assert_eq!(random_amplitude_scale(&s, &bounds(1.0, 1.0), &mut rng), s.to_vec());
    }

    #[test]
    fn zero_state_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = random_amplitude_scale(&[0.0; 4], &AugConfig::default(), &mut rng);
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mean_factor_is_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = AugConfig::default();
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let o = random_amplitude_scale(&[1.0, 1.0], &cfg, &mut rng);
            assert_eq!(o[0], o[1]);
            sum[0] += o[0];
            sum[1] += o[1];
        }
        for s in sum {
            assert!((s / n as f64 - 0.9).abs() < 0.005);
        }
    }

    fn buffer_with(states: &[[f64; 3]]) -> RolloutBuffer {
        let mut b = RolloutBuffer::new(states.len(), 1, 3, 1);
        for s in states {
            b.push(Transition {
                state: s,
                action: &[0.0],
                reward: 0.0,
                done: false,
                log_prob: -1.0,
                value: 0.0,
            })
            .unwrap();
        }
        b
    }

    #[test]
    fn rad_hook_scales_each_state_by_one_factor() {
        let states = [[1.0, 2.0, -3.0], [0.5, 0.5, 4.0], [0.0, 0.0, 0.0]];
        let mut b = buffer_with(&states);
        rad_update_hook(&mut b, &AugConfig::default(), &mut ChaCha8Rng::seed_from_u64(2));
        for (i, s) in states.iter().enumerate() {
            let aug = b.state(i);
            if s.iter().all(|&x| x == 0.0) {
                assert!(aug.iter().all(|&x| x == 0.0));
                continue;
            }
            let u = aug[0] / s[0];
            assert!((0.6..=1.2).contains(&u));
            for (a, x) in aug.iter().zip(s) {
                assert!((a - u * x).abs() < 1e-12);
            }
        }
        assert_eq!(b.log_probs(), &[-1.0; 3]);
    }

    #[test]
    fn rad_is_seed_deterministic() {
        let states = [[1.0, 2.0, -3.0], [0.5, 0.5, 4.0]];
        let mut a = buffer_with(&states);
        let mut b = buffer_with(&states);
        rad_update_hook(&mut a, &AugConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        rad_update_hook(&mut b, &AugConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    fn store() -> ParameterStore {
        ParameterStore::new(3, 2, &[8, 8], &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    #[test]
    fn drac_is_zero_at_identity() {
        let st = store();
        let mut g = st.zeros_like();
        let s = [[0.2, -0.4, 1.0], [1.5, 0.0, -2.0]];
        let refs: Vec<&[f64]> = s.iter().map(|x| x.as_slice()).collect();
        let cfg = AugConfig {
            mode: AugMode::Drac,
            ..bounds(1.0, 1.0)
        };
        let loss = drac_regularizer(&st, Family::Gaussian, &refs, &cfg, &mut ChaCha8Rng::seed_from_u64(0), &mut g)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn drac_rejects_gumbel() {
        let cfg = AugConfig {
            mode: AugMode::Drac,
            ..AugConfig::default()
        };
        assert!(cfg.validate(Family::Gumbel).is_err());
        assert!(cfg.validate(Family::Gaussian).is_ok());
    }

    #[test]
    fn bad_bounds_are_rejected() {
        assert!(bounds(0.0, 1.0).validate(Family::Gaussian).is_err());
        assert!(bounds(1.2, 0.6).validate(Family::Gaussian).is_err());
    }

    #[test]
    fn names_parse() {
        for m in [AugMode::None, AugMode::Rad, AugMode::Drac] {
            assert_eq!(m.name().parse::<AugMode>().unwrap(), m);
        }
    }

    /// Penalty with the clean branch frozen at `clean` and the augmented
    /// branch evaluated with `live`, written out directly.
    fn frozen_clean_penalty(
        clean: &ParameterStore,
        live: &ParameterStore,
        family: Family,
        states: &[Vec<f64>],
        augmented: &[Vec<f64>],
        kappa: f64,
    ) -> f64 {
        let n = states.len() as f64;
        let mut total = 0.0;
        for (s, a) in states.iter().zip(augmented) {
            let p = clean.actor.predict(s).unwrap();
            let q = live.actor.predict(a).unwrap();
            for j in 0..p.len() {
                let (sp, sq) = (clean.log_std[j].exp(), live.log_std[j].exp());
                total += family.kl(p[j], sp, q[j], sq).unwrap() / n;
            }
            let dv = clean.critic.predict(s).unwrap()[0] - live.critic.predict(a).unwrap()[0];
            total += dv * dv / n;
        }
        kappa * total
    }

    #[test]
    fn drac_gradient_matches_finite_differences() {
        for family in [Family::Gaussian, Family::Laplace] {
            let mut st = store();
            st.log_std = vec![0.3, -0.2];
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let states: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let cfg = AugConfig {
                mode: AugMode::Drac,
                drac_coef: 0.7,
                ..AugConfig::default()
            };
            let mut aug_rng = ChaCha8Rng::seed_from_u64(3);
            // Replay the draws the regularizer will make.
            let mut replay = aug_rng.clone();
            let augmented: Vec<Vec<f64>> = states
                .iter()
                .map(|s| random_amplitude_scale(s, &cfg, &mut replay))
                .collect();

            let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
            let mut grads = st.zeros_like();
            let value = drac_regularizer(&st, family, &refs, &cfg, &mut aug_rng, &mut grads).unwrap();
            let direct = frozen_clean_penalty(&st, &st, family, &states, &augmented, cfg.drac_coef);
            assert!((value - direct).abs() < 1e-12, "{family}: {value} vs {direct}");
            assert!(value > 0.0);

            let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
            let h = 1e-6;
            for k in 0..analytic.len() {
                let bump = |delta: f64| {
                    let mut live = st.clone();
                    let mut seen = 0;
                    for t in live.tensors_mut() {
                        if k < seen + t.len() {
                            t[k - seen] += delta;
                            break;
                        }
                        seen += t.len();
                    }
                    frozen_clean_penalty(&st, &live, family, &states, &augmented, cfg.drac_coef)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
                assert!(err < 1e-5, "{family} parameter {k}: analytic {} vs fd {fd}", analytic[k]);
            }
        }
    }
}
