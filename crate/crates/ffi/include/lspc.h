#ifndef LSPC_H
#define LSPC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LspcStatus {
  LSPC_STATUS_OK = 0,
  // A required pointer argument was null.
  LSPC_STATUS_NULL_ARGUMENT = 1,
  // Bad shape, configuration or identifier.
  LSPC_STATUS_INVALID_INPUT = 2,
  // File system or format error.
  LSPC_STATUS_IO = 3,
  // A non-finite value appeared.
  LSPC_STATUS_NUMERIC = 4,
  // A Rust panic was caught at the boundary.
  LSPC_STATUS_INTERNAL = 5,
} LspcStatus;

typedef enum LspcPolicy {
  LSPC_POLICY_LSPC_S = 0,
  LSPC_POLICY_LSPC_O = 1,
  LSPC_POLICY_CVAE = 2,
} LspcPolicy;

// Offline transition dataset.
typedef struct LspcDataset LspcDataset;

// Trained critics and policy networks loaded from a checkpoint directory.
typedef struct LspcModel LspcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful call. Valid until the next `lspc_*` call on the same thread.
const char *lspc_last_error(void);

// Library version as a static NUL-terminated string.
const char *lspc_version(void);

// Rolls out a scripted behavior on `env_id` until `n_transitions` are stored.
//
// # Safety
// `env_id` and `behavior` must be NUL-terminated strings; `out` must be
// valid for writes.
enum LspcStatus lspc_dataset_collect(const char *env_id,
                                     const char *behavior,
                                     size_t n_transitions,
                                     uint64_t seed,
                                     struct LspcDataset **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum LspcStatus lspc_dataset_load(const char *path, struct LspcDataset **out);

// # Safety
// `ds` must be a live handle; `path` a NUL-terminated string.
enum LspcStatus lspc_dataset_save(const struct LspcDataset *ds, const char *path);

// Number of transitions, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t lspc_dataset_len(const struct LspcDataset *ds);

// # Safety
// `ds` must be null or a handle not yet freed.
void lspc_dataset_free(struct LspcDataset *ds);

// Trains on `ds` with a JSON config (same keys as the CLI config file)
// and writes the checkpoint directory `out_dir`.
//
// # Safety
// `ds` must be a live handle; the strings NUL-terminated.
enum LspcStatus lspc_train(const struct LspcDataset *ds,
                           const char *config_json,
                           const char *out_dir);

// # Safety
// `dir` must be a NUL-terminated string; `out` valid for writes.
enum LspcStatus lspc_model_load(const char *dir, struct LspcModel **out);

// # Safety
// `model` must be a live handle; the output pointers valid for writes.
enum LspcStatus lspc_model_dims(const struct LspcModel *model,
                                size_t *state_dim,
                                size_t *action_dim);

// Samples one action. Stochastic policies draw from the stream keyed by
// `(seed, index)`, so equal arguments give equal actions.
//
// # Safety
// `model` must be a live handle; `state` must point to `state_len`
// readable doubles and `action` to `action_len` writable doubles.
enum LspcStatus lspc_model_act(const struct LspcModel *model,
                               enum LspcPolicy policy,
                               const double *state,
                               size_t state_len,
                               uint64_t seed,
                               uint64_t index,
                               double *action,
                               size_t action_len);

// # Safety
// `model` must be null or a handle not yet freed.
void lspc_model_free(struct LspcModel *model);

// Asymmetric squared loss `|xi - 1(u < 0)| * u^2`.
double lspc_expectile_loss(double u, double xi);

// Derivative of [`lspc_expectile_loss`] with respect to `u`.
double lspc_expectile_grad(double u, double xi);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSPC_H */
