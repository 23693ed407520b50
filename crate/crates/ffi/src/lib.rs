//! C ABI over `rpolab`.
//!
//! Every fallible entry point returns an [`RpolabStatus`]; on failure the
//! message is kept per thread and read back with
//! [`rpolab_last_error_message`]. Trainers are opaque heap handles owned by
//! the caller and released with [`rpolab_trainer_free`]. Panics never cross
//! the boundary.
//!
//! Enum-typed arguments are taken as `uint32_t` so that out-of-range values
//! from C are rejected instead of being undefined behaviour.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rpolab::distributions::{effective_density_gaussian_uniform, DistParams, Family};
use rpolab::envs::EnvKind;
use rpolab::rollout::{gae, GaeConfig};
use rpolab::trainer::{Algo, TrainConfig, Trainer};
use rpolab::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpolabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    /// The trainer has consumed its timestep budget.
    Finished = 5,
    Internal = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpolabEnv {
    Pendulum = 0,
    CartPole = 1,
    PointMass = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpolabAlgo {
    Ppo = 0,
    Rpo = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpolabFamily {
    Gaussian = 0,
    Laplace = 1,
    Gumbel = 2,
}

/// Subset of the training configuration exposed to C. Start from
/// [`rpolab_train_config_default`] and override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpolabTrainConfig {
    /// One of `RpolabEnv`.
    pub env: u32,
    /// One of `RpolabAlgo`.
    pub algo: u32,
    /// One of `RpolabFamily`.
    pub family: u32,
    pub rpo_alpha: f64,
    pub ent_coef: f64,
    pub learning_rate: f64,
    pub total_timesteps: u64,
    pub num_steps: u64,
    pub seed: u64,
}

/// Metrics of one training iteration. `episodic_return_mean` is NaN when no
/// episode finished during the iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RpolabMetrics {
    pub global_step: u64,
    pub episodic_return_mean: f64,
    pub policy_entropy: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Opaque trainer handle.
pub struct RpolabTrainer {
    trainer: Trainer,
    obs_dim: usize,
    action_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RpolabStatus, message: impl Into<String>) -> RpolabStatus {
    set_error(message.into());
    status
}

fn status_of(err: &Error) -> RpolabStatus {
    match err {
        Error::Dimension { .. } => RpolabStatus::DimensionMismatch,
        Error::NonFinite(_) => RpolabStatus::NonFinite,
        Error::Config(_) | Error::Usage(_) => RpolabStatus::InvalidArgument,
        _ => RpolabStatus::Internal,
    }
}

/// Runs `body` with the thread's last error cleared, converting errors and
/// panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), RpolabStatus>) -> RpolabStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RpolabStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(RpolabStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: rpolab::Result<T>) -> Result<T, RpolabStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), RpolabStatus> {
    if p.is_null() {
        Err(fail(RpolabStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Borrows `len` elements; a null pointer is accepted only when `len == 0`.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], RpolabStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], RpolabStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn env_of(v: u32) -> Result<EnvKind, RpolabStatus> {
    match v {
        0 => Ok(EnvKind::Pendulum),
        1 => Ok(EnvKind::CartPole),
        2 => Ok(EnvKind::PointMass),
        _ => Err(fail(RpolabStatus::InvalidArgument, format!("unknown environment {v}"))),
    }
}

fn algo_of(v: u32) -> Result<Algo, RpolabStatus> {
    match v {
        0 => Ok(Algo::Ppo),
        1 => Ok(Algo::Rpo),
        _ => Err(fail(RpolabStatus::InvalidArgument, format!("unknown algorithm {v}"))),
    }
}

fn family_of(v: u32) -> Result<Family, RpolabStatus> {
    match v {
        0 => Ok(Family::Gaussian),
        1 => Ok(Family::Laplace),
        2 => Ok(Family::Gumbel),
        _ => Err(fail(RpolabStatus::InvalidArgument, format!("unknown distribution family {v}"))),
    }
}

fn to_usize(v: u64, name: &str) -> Result<usize, RpolabStatus> {
    usize::try_from(v).map_err(|_| fail(RpolabStatus::InvalidArgument, format!("{name} does not fit in size_t")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rpolab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the calling thread's last error message, excluding
/// the terminating NUL; zero when the last call succeeded.
#[no_mangle]
pub extern "C" fn rpolab_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message into `buf`, truncating to `len - 1` bytes
/// and always NUL-terminating when `len > 0`. Returns the number of bytes
/// written, excluding the NUL.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes, or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn rpolab_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let borrowed = e.borrow();
        let bytes = borrowed.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Fills `out` with the library defaults: Pendulum, RPO with α = 0.5,
/// Gaussian policy, one million timesteps, seed 1.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rpolab_train_config_default(out: *mut RpolabTrainConfig) -> RpolabStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = TrainConfig::default();
        out.write(RpolabTrainConfig {
            env: RpolabEnv::Pendulum as u32,
            algo: RpolabAlgo::Rpo as u32,
            family: RpolabFamily::Gaussian as u32,
            rpo_alpha: d.rpo_alpha,
            ent_coef: d.ent_coef,
            learning_rate: d.learning_rate,
            total_timesteps: d.total_timesteps as u64,
            num_steps: d.num_steps as u64,
            seed: d.seed,
        });
        Ok(())
    })
}

/// Creates a trainer. On success `*out` owns a handle that must be released
/// with `rpolab_trainer_free`; on failure `*out` is set to null.
///
/// # Safety
/// `config` must point to a valid config and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rpolab_trainer_new(
    config: *const RpolabTrainConfig,
    out: *mut *mut RpolabTrainer,
) -> RpolabStatus {
    guard(|| {
        non_null(out, "out")?;
        out.write(ptr::null_mut());
        non_null(config, "config")?;
        let c = *config;
        let env = env_of(c.env)?;
        let cfg = TrainConfig {
            algo: algo_of(c.algo)?,
            dist_family: family_of(c.family)?,
            rpo_alpha: c.rpo_alpha,
            ent_coef: c.ent_coef,
            learning_rate: c.learning_rate,
            total_timesteps: to_usize(c.total_timesteps, "total_timesteps")?,
            num_steps: to_usize(c.num_steps, "num_steps")?,
            seed: c.seed,
            timing: false,
            ..TrainConfig::default()
        };
        let spaces = env.spaces();
        let trainer = lift(Trainer::new(cfg, &|| env.make()))?;
        out.write(Box::into_raw(Box::new(RpolabTrainer {
            trainer,
            obs_dim: spaces.obs_dim,
            action_dim: spaces.action_dim,
        })));
        Ok(())
    })
}

/// Releases a trainer. Null is ignored.
///
/// # Safety
/// `trainer` must be null or a handle from `rpolab_trainer_new` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn rpolab_trainer_free(trainer: *mut RpolabTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Observation and action dimensions of the trainer's environment.
///
/// # Safety
/// `trainer` must be a live handle; the output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rpolab_trainer_dims(
    trainer: *const RpolabTrainer,
    obs_dim: *mut usize,
    action_dim: *mut usize,
) -> RpolabStatus {
    guard(|| {
        non_null(trainer, "trainer")?;
        non_null(obs_dim, "obs_dim")?;
        non_null(action_dim, "action_dim")?;
        obs_dim.write((*trainer).obs_dim);
        action_dim.write((*trainer).action_dim);
        Ok(())
    })
}

/// Runs one collect and update cycle. Returns `RPOLAB_STATUS_FINISHED`
/// without touching the trainer once the timestep budget is spent.
/// `metrics` may be null.
///
/// # Safety
/// `trainer` must be a live handle; `metrics` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rpolab_trainer_iterate(trainer: *mut RpolabTrainer, metrics: *mut RpolabMetrics) -> RpolabStatus {
    guard(|| {
        non_null(trainer, "trainer")?;
        let t = &mut (*trainer).trainer;
        if t.is_done() {
            return Err(fail(RpolabStatus::Finished, "timestep budget exhausted"));
        }
        let (row, _) = lift(t.iterate())?;
        if !metrics.is_null() {
            metrics.write(RpolabMetrics {
                global_step: row.global_step,
                episodic_return_mean: row.episodic_return_mean,
                policy_entropy: row.policy_entropy,
                policy_loss: row.policy_loss,
                value_loss: row.value_loss,
                approx_kl: row.approx_kl,
                clip_fraction: row.clip_fraction,
            });
        }
        Ok(())
    })
}

/// Non-zero once the timestep budget is spent.
///
/// # Safety
/// `trainer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rpolab_trainer_is_done(trainer: *const RpolabTrainer) -> bool {
    !trainer.is_null() && (*trainer).trainer.is_done()
}

/// Deterministic action: the policy location for one observation.
///
/// # Safety
/// `trainer` must be a live handle; `obs` must hold `obs_len` values and
/// `action` must have room for `action_len` values.
#[no_mangle]
pub unsafe extern "C" fn rpolab_trainer_policy_mean(
    trainer: *const RpolabTrainer,
    obs: *const f64,
    obs_len: usize,
    action: *mut f64,
    action_len: usize,
) -> RpolabStatus {
    guard(|| {
        non_null(trainer, "trainer")?;
        let h = &*trainer;
        if obs_len != h.obs_dim || action_len != h.action_dim {
            return Err(fail(
                RpolabStatus::DimensionMismatch,
                format!(
                    "expected observation {} and action {}, got {obs_len} and {action_len}",
                    h.obs_dim, h.action_dim
                ),
            ));
        }
        let obs = slice(obs, obs_len, "obs")?;
        let out = slice_mut(action, action_len, "action")?;
        out.copy_from_slice(&lift(h.trainer.store().actor.predict(obs))?);
        Ok(())
    })
}

unsafe fn dist_from(family: u32, loc: *const f64, scale: *const f64, dim: usize) -> Result<DistParams, RpolabStatus> {
    let family = family_of(family)?;
    let loc = slice(loc, dim, "loc")?.to_vec();
    let scale = slice(scale, dim, "scale")?.to_vec();
    lift(DistParams::new(family, loc, scale))
}

/// Summed log-density of a factorized distribution at `action`.
///
/// # Safety
/// `loc`, `scale` and `action` must each hold `dim` values; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rpolab_log_prob(
    family: u32,
    loc: *const f64,
    scale: *const f64,
    action: *const f64,
    dim: usize,
    out: *mut f64,
) -> RpolabStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = dist_from(family, loc, scale, dim)?;
        let lp = lift(d.log_prob(slice(action, dim, "action")?))?;
        out.write(lp.total);
        Ok(())
    })
}

/// Entropy of a factorized distribution.
///
/// # Safety
/// `scale` must hold `dim` values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rpolab_entropy(family: u32, scale: *const f64, dim: usize, out: *mut f64) -> RpolabStatus {
    guard(|| {
        non_null(out, "out")?;
        let loc = vec![0.0; dim];
        let d = dist_from(family, loc.as_ptr(), scale, dim)?;
        out.write(d.entropy());
        Ok(())
    })
}

/// Density at `a` of N(μ + z, σ²) with z ~ U(−α, α) marginalized out.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rpolab_effective_density(mu: f64, sigma: f64, alpha: f64, a: f64, out: *mut f64) -> RpolabStatus {
    guard(|| {
        non_null(out, "out")?;
        if !(sigma > 0.0 && alpha > 0.0) || ![mu, sigma, alpha, a].iter().all(|v| v.is_finite()) {
            return Err(fail(
                RpolabStatus::InvalidArgument,
                "effective density needs finite inputs with sigma > 0 and alpha > 0",
            ));
        }
        out.write(effective_density_gaussian_uniform(mu, sigma, alpha, a));
        Ok(())
    })
}

/// Generalized advantage estimates for one trajectory segment. `dones[t]`
/// non-zero marks that the episode ended after step `t`; `bootstrap` is the
/// value of the state following the last step.
///
/// # Safety
/// `rewards`, `values`, `dones` and `advantages` must each hold `len` values.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rpolab_gae(
    rewards: *const f64,
    values: *const f64,
    dones: *const u8,
    len: usize,
    bootstrap: f64,
    gamma: f64,
    lam: f64,
    advantages: *mut f64,
) -> RpolabStatus {
    guard(|| {
        let cfg = lift(GaeConfig::new(gamma, lam))?;
        let rewards = slice(rewards, len, "rewards")?;
        let values = slice(values, len, "values")?;
        let dones: Vec<bool> = slice(dones, len, "dones")?.iter().map(|&d| d != 0).collect();
        let out = slice_mut(advantages, len, "advantages")?;
        out.copy_from_slice(&gae(rewards, values, &dones, bootstrap, cfg));
        Ok(())
    })
}
