#ifndef MRE_H
#define MRE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MreStage {
  MRE_STAGE_SIMULATE = 0,
  MRE_STAGE_INFER = 1,
  MRE_STAGE_TRAIN_SURROGATE = 2,
  MRE_STAGE_PREDICT = 3,
  MRE_STAGE_REPORT = 4,
} MreStage;

// Matches the exit codes of the `mre` binary where they overlap.
typedef enum MreStatus {
  MRE_STATUS_OK = 0,
  MRE_STATUS_FAILURE = 1,
  MRE_STATUS_CONFIG = 2,
  MRE_STATUS_NUMERICAL = 3,
  MRE_STATUS_PIPELINE_ORDER = 4,
  MRE_STATUS_INVALID_ARGUMENT = 5,
  MRE_STATUS_PANIC = 6,
} MreStatus;

// Opaque.
typedef struct MreRectified MreRectified;

// Opaque.
typedef struct MreSurrogate MreSurrogate;

// Opaque.
typedef struct MreWorkspace MreWorkspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread; do not free.
const char *mre_last_error(void);

// Opens an artifact directory for `config_path`. `out_dir` may be NULL to
// use the directory named by the config; `seed` overrides the config seed
// when `has_seed` is true.
//
// # Safety
// String arguments are NULL or NUL-terminated; `out` is writable.
enum MreStatus mre_workspace_open(const char *config_path,
                                  const char *out_dir,
                                  bool has_seed,
                                  uint64_t seed,
                                  struct MreWorkspace **out);

// Runs one stage. `basis_path` (NULL for none) is the alternate mesh for
// `Predict`.
//
// # Safety
// `ws` comes from `mre_workspace_open`; `basis_path` is NULL or NUL-terminated.
enum MreStatus mre_workspace_run(const struct MreWorkspace *ws,
                                 enum MreStage stage,
                                 const char *basis_path);

// # Safety
// `ws` is NULL or comes from `mre_workspace_open` and is not used again.
void mre_workspace_free(struct MreWorkspace *ws);

// Loads a `surrogate.json` artifact.
//
// # Safety
// `path` is NUL-terminated; `out` is writable.
enum MreStatus mre_surrogate_load(const char *path, struct MreSurrogate **out);

// Number of modes `m`, 0 for NULL.
//
// # Safety
// `s` is NULL or a live handle.
uintptr_t mre_surrogate_modes(const struct MreSurrogate *s);

// `eta[m] = surrogate(q[m], q_dot[m])`.
//
// # Safety
// `s` is a live handle; each array holds `m` doubles.
enum MreStatus mre_surrogate_evaluate(const struct MreSurrogate *s,
                                      const double *q,
                                      const double *q_dot,
                                      uintptr_t m,
                                      double *eta);

// # Safety
// `s` is NULL or comes from `mre_surrogate_load` and is not used again.
void mre_surrogate_free(struct MreSurrogate *s);

// Nominal modal model from a `basis.json` artifact with the surrogate in
// the loop. The surrogate is copied; its handle stays owned by the caller.
//
// # Safety
// `basis_path` is NUL-terminated; `s` is a live handle; `out` is writable.
enum MreStatus mre_rectified_new(const char *basis_path,
                                 const struct MreSurrogate *s,
                                 struct MreRectified **out);

// Integrates from rest under the modal load `p` (`m x steps`, column
// major: sample `k` occupies `p[k*m .. k*m + m]`). Writes `q` in the same
// layout and, when `extrapolation` is not NULL, the share of samples
// outside the training range.
//
// # Safety
// `r` is a live handle; `p` and `q` hold `m * steps` doubles.
enum MreStatus mre_rectified_predict(const struct MreRectified *r,
                                     const double *p,
                                     uintptr_t m,
                                     uintptr_t steps,
                                     double dt,
                                     uintptr_t substeps,
                                     double *q,
                                     double *extrapolation);

// # Safety
// `r` is NULL or comes from `mre_rectified_new` and is not used again.
void mre_rectified_free(struct MreRectified *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRE_H */
