#ifndef RPOLAB_H
#define RPOLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RpolabAlgo {
  RPOLAB_ALGO_PPO = 0,
  RPOLAB_ALGO_RPO = 1,
} RpolabAlgo;

typedef enum RpolabEnv {
  RPOLAB_ENV_PENDULUM = 0,
  RPOLAB_ENV_CART_POLE = 1,
  RPOLAB_ENV_POINT_MASS = 2,
} RpolabEnv;

typedef enum RpolabFamily {
  RPOLAB_FAMILY_GAUSSIAN = 0,
  RPOLAB_FAMILY_LAPLACE = 1,
  RPOLAB_FAMILY_GUMBEL = 2,
} RpolabFamily;

// Result code of every fallible call.
typedef enum RpolabStatus {
  RPOLAB_STATUS_OK = 0,
  RPOLAB_STATUS_NULL_POINTER = 1,
  RPOLAB_STATUS_INVALID_ARGUMENT = 2,
  RPOLAB_STATUS_DIMENSION_MISMATCH = 3,
  RPOLAB_STATUS_NON_FINITE = 4,
  // The trainer has consumed its timestep budget.
  RPOLAB_STATUS_FINISHED = 5,
  RPOLAB_STATUS_INTERNAL = 6,
  RPOLAB_STATUS_PANIC = 7,
} RpolabStatus;

// Opaque trainer handle.
typedef struct RpolabTrainer RpolabTrainer;

// Subset of the training configuration exposed to C. Start from
// [`rpolab_train_config_default`] and override fields.
typedef struct RpolabTrainConfig {
  // One of `RpolabEnv`.
  uint32_t env;
  // One of `RpolabAlgo`.
  uint32_t algo;
  // One of `RpolabFamily`.
  uint32_t family;
  double rpo_alpha;
  double ent_coef;
  double learning_rate;
  uint64_t total_timesteps;
  uint64_t num_steps;
  uint64_t seed;
} RpolabTrainConfig;

// Metrics of one training iteration. `episodic_return_mean` is NaN when no
// episode finished during the iteration.
typedef struct RpolabMetrics {
  uint64_t global_step;
  double episodic_return_mean;
  double policy_entropy;
  double policy_loss;
  double value_loss;
  double approx_kl;
  double clip_fraction;
} RpolabMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rpolab_version(void);

// Length in bytes of the calling thread's last error message, excluding
// the terminating NUL; zero when the last call succeeded.
size_t rpolab_last_error_length(void);

// Copies the last error message into `buf`, truncating to `len - 1` bytes
// and always NUL-terminating when `len > 0`. Returns the number of bytes
// written, excluding the NUL.
//
// # Safety
// `buf` must be valid for `len` bytes of writes, or null with `len == 0`.
size_t rpolab_last_error_message(char *buf, size_t len);

// Fills `out` with the library defaults: Pendulum, RPO with α = 0.5,
// Gaussian policy, one million timesteps, seed 1.
//
// # Safety
// `out` must be valid for writes.
enum RpolabStatus rpolab_train_config_default(struct RpolabTrainConfig *out);

// Creates a trainer. On success `*out` owns a handle that must be released
// with `rpolab_trainer_free`; on failure `*out` is set to null.
//
// # Safety
// `config` must point to a valid config and `out` must be valid for writes.
enum RpolabStatus rpolab_trainer_new(const struct RpolabTrainConfig *config,
                                     struct RpolabTrainer **out);

// Releases a trainer. Null is ignored.
//
// # Safety
// `trainer` must be null or a handle from `rpolab_trainer_new` that has not
// been freed.
void rpolab_trainer_free(struct RpolabTrainer *trainer);

// Observation and action dimensions of the trainer's environment.
//
// # Safety
// `trainer` must be a live handle; the output pointers must be valid for writes.
enum RpolabStatus rpolab_trainer_dims(const struct RpolabTrainer *trainer,
                                      size_t *obs_dim,
                                      size_t *action_dim);

// Runs one collect and update cycle. Returns `RPOLAB_STATUS_FINISHED`
// without touching the trainer once the timestep budget is spent.
// `metrics` may be null.
//
// # Safety
// `trainer` must be a live handle; `metrics` must be null or valid for writes.
enum RpolabStatus rpolab_trainer_iterate(struct RpolabTrainer *trainer,
                                         struct RpolabMetrics *metrics);

// Non-zero once the timestep budget is spent.
//
// # Safety
// `trainer` must be null or a live handle.
bool rpolab_trainer_is_done(const struct RpolabTrainer *trainer);

// Deterministic action: the policy location for one observation.
//
// # Safety
// `trainer` must be a live handle; `obs` must hold `obs_len` values and
// `action` must have room for `action_len` values.
enum RpolabStatus rpolab_trainer_policy_mean(const struct RpolabTrainer *trainer,
                                             const double *obs,
                                             size_t obs_len,
                                             double *action,
                                             size_t action_len);

// Summed log-density of a factorized distribution at `action`.
//
// # Safety
// `loc`, `scale` and `action` must each hold `dim` values; `out` must be
// valid for writes.
enum RpolabStatus rpolab_log_prob(uint32_t family,
                                  const double *loc,
                                  const double *scale,
                                  const double *action,
                                  size_t dim,
                                  double *out);

// Entropy of a factorized distribution.
//
// # Safety
// `scale` must hold `dim` values; `out` must be valid for writes.
enum RpolabStatus rpolab_entropy(uint32_t family, const double *scale, size_t dim, double *out);

// Density at `a` of N(μ + z, σ²) with z ~ U(−α, α) marginalized out.
//
// # Safety
// `out` must be valid for writes.
enum RpolabStatus rpolab_effective_density(double mu,
                                           double sigma,
                                           double alpha,
                                           double a,
                                           double *out);

// Generalized advantage estimates for one trajectory segment. `dones[t]`
// non-zero marks that the episode ended after step `t`; `bootstrap` is the
// value of the state following the last step.
//
// # Safety
// `rewards`, `values`, `dones` and `advantages` must each hold `len` values.
enum RpolabStatus rpolab_gae(const double *rewards,
                             const double *values,
                             const uint8_t *dones,
                             size_t len,
                             double bootstrap,
                             double gamma,
                             double lam,
                             double *advantages);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RPOLAB_H */
