#ifndef PDSPLIT_H
#define PDSPLIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. `PDS_OK` is zero; everything else is a failure.
typedef enum PdsStatus {
  PDS_OK = 0,
  PDS_NULL_POINTER = 1,
  PDS_INVALID_UTF8 = 2,
  PDS_BAD_JSON = 3,
  PDS_INVALID_PARAMETER = 4,
  PDS_STEPSIZE_CONDITION = 5,
  PDS_DIMENSION_MISMATCH = 6,
  PDS_DIVERGED = 7,
  PDS_BUFFER_TOO_SMALL = 8,
  PDS_OUT_OF_RANGE = 9,
  PDS_SOLVER_ERROR = 10,
  PDS_PANIC = 11,
} PdsStatus;

// A problem instance, either composite or decentralized.
typedef struct PdsProblem PdsProblem;

// The trace of one finished run.
typedef struct PdsRun PdsRun;

// One logged iteration. Quantities that were not computed are NaN.
typedef struct PdsRecord {
  uint64_t k;
  double objective;
  double duality_gap;
  double kkt_primal;
  double kkt_dual;
  double dist_to_oracle;
  double sigma_sq;
  uint64_t wall_ns;
} PdsRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pds_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL, or
// 0 when there is no error.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t pds_last_error_message(char *buf, size_t len);

// Generates a synthetic instance from a benchmark-problem JSON object, e.g.
// `{"kind":"fused_lasso","n":100,"p":50,"seed":7,"lambda":0.1,"lambda1":5}`.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
enum PdsStatus pds_problem_generate(const char *json, struct PdsProblem **out);

// Builds a composite problem from a serialized `ProblemSpec`.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
enum PdsStatus pds_problem_from_spec(const char *json, struct PdsProblem **out);

// Primal and dual dimensions. For a decentralized problem the primal
// dimension is that of the stacked node copies and the dual equals it.
//
// # Safety
// `problem` must be a live handle; the output pointers may be null.
enum PdsStatus pds_problem_dims(const struct PdsProblem *problem, size_t *primal, size_t *dual);

// # Safety
// `problem` must be null or a handle from this library not freed before.
void pds_problem_free(struct PdsProblem *problem);

// Runs a solver with a `RunConfig` JSON object, e.g.
// `{"solver":"pd3o","iters":1000,"estimator":{"kind":"lsvrg","p":0.1}}`.
// A run that diverges still produces a handle; check
// [`pds_run_diverged`].
//
// # Safety
// `problem` must be a live handle, `config` a valid C string and `out` a
// valid pointer.
enum PdsStatus pds_run(const struct PdsProblem *problem, const char *config, struct PdsRun **out);

// Number of logged records (at least 1: the initial point).
//
// # Safety
// `run` must be null or a live handle.
size_t pds_run_len(const struct PdsRun *run);

// Whether the run stopped on divergence; writes the iteration if so.
//
// # Safety
// `run` must be null or a live handle; `iteration` may be null.
bool pds_run_diverged(const struct PdsRun *run, uint64_t *iteration);

// # Safety
// `run` must be a live handle and `out` a valid pointer.
enum PdsStatus pds_run_record(const struct PdsRun *run, size_t index, struct PdsRecord *out);

// Copies the final primal iterate into `buf`. `len` must equal the primal
// dimension.
//
// # Safety
// `run` must be a live handle and `buf` point to `len` writable doubles.
enum PdsStatus pds_run_primal(const struct PdsRun *run, double *buf, size_t len);

// Resolved stepsizes of the run.
//
// # Safety
// `run` must be a live handle; the output pointers may be null.
enum PdsStatus pds_run_steps(const struct PdsRun *run, double *gamma, double *tau);

// # Safety
// `run` must be null or a handle from this library not freed before.
void pds_run_free(struct PdsRun *run);

// Runs a certification suite (`"identities"`, `"estimators"`, `"rates"`,
// `"solvers"`, `"infrastructure"` or `"all"`) and reports the counts.
//
// # Safety
// `suite` must be a valid C string; the output pointers may be null.
enum PdsStatus pds_certify(const char *suite, size_t *passed, size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDSPLIT_H */
