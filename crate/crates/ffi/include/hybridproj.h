#ifndef HYBRIDPROJ_H
#define HYBRIDPROJ_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum HpMode {
  HP_MODE_ALGORITHM1 = 1,
  HP_MODE_ALGORITHM2 = 2,
} HpMode;

typedef enum HpStatus {
  HP_STATUS_OK = 0,
  HP_STATUS_NULL_POINTER = 1,
  HP_STATUS_INVALID_ARGUMENT = 2,
  HP_STATUS_INVALID_CONFIG = 3,
  HP_STATUS_INVALID_MODEL = 4,
  HP_STATUS_CONVERGENCE_FAILURE = 5,
  HP_STATUS_INFEASIBLE = 6,
  HP_STATUS_UNSUPPORTED = 7,
  HP_STATUS_DETERMINISM_VIOLATION = 8,
  HP_STATUS_IO = 9,
  HP_STATUS_PANIC = 10,
} HpStatus;

typedef enum HpStopReason {
  HP_STOP_REASON_REFERENCE = 0,
  HP_STOP_REASON_RESIDUAL = 1,
  HP_STOP_REASON_BUDGET = 2,
  HP_STOP_REASON_TIME_BUDGET = 3,
} HpStopReason;

// A configured problem: family, schedule, solver options and start point.
typedef struct HpProblem HpProblem;

// Result of [`hp_solve`].
typedef struct HpReport HpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or null. Valid until the next failing call.
const char *hp_last_error(void);

// Library version as a static NUL-terminated string.
const char *hp_version(void);

// The benchmark family with `n_ops` bifunctions and `n_maps` maps, its
// default schedule, `x0 = 1`, `algorithm2` mode and a 1000-iteration budget.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum HpStatus hp_problem_section4(size_t n_ops, size_t n_maps, struct HpProblem **out);

// Builds a problem from a run-config JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum HpStatus hp_problem_from_json(const char *json, struct HpProblem **out);

// # Safety
// `problem` must come from a constructor above and not be used afterwards.
void hp_problem_free(struct HpProblem *problem);

// # Safety
// `problem` must be a live handle.
size_t hp_problem_dim(const struct HpProblem *problem);

// # Safety
// `problem` must be a live handle.
enum HpStatus hp_problem_set_workers(struct HpProblem *problem, size_t workers);

// # Safety
// `problem` must be a live handle.
enum HpStatus hp_problem_set_max_iter(struct HpProblem *problem, size_t max_iter);

// # Safety
// `problem` must be a live handle.
enum HpStatus hp_problem_set_mode(struct HpProblem *problem, enum HpMode mode);

// # Safety
// `problem` must be a live handle.
enum HpStatus hp_problem_set_record_history(struct HpProblem *problem, bool on);

// Replaces the starting point.
//
// # Safety
// `problem` must be a live handle; `x0` must point to `len` doubles.
enum HpStatus hp_problem_set_x0(struct HpProblem *problem, const double *x0, size_t len);

// Stop once `||x_n - P_F(x0)|| <= tol` (needs a family with a known solution set).
//
// # Safety
// `problem` must be a live handle.
enum HpStatus hp_problem_stop_at_solution(struct HpProblem *problem, double tol);

// Stop once all residual maxima are `<= tol`.
//
// # Safety
// `problem` must be a live handle.
enum HpStatus hp_problem_stop_at_residual(struct HpProblem *problem, double tol);

// Runs the solver.
//
// # Safety
// `problem` must be a live handle; `out` must be writable.
enum HpStatus hp_solve(const struct HpProblem *problem, struct HpReport **out);

// Runs a config document end to end (artifacts go to its output dir, if any).
//
// # Safety
// `json` must be NUL-terminated; `out` must be writable.
enum HpStatus hp_run_json(const char *json, struct HpReport **out);

// # Safety
// `report` must come from [`hp_solve`] or [`hp_run_json`] and not be used afterwards.
void hp_report_free(struct HpReport *report);

// # Safety
// `report` must be a live handle.
size_t hp_report_dim(const struct HpReport *report);

// Copies the final iterate into `out` (`len` must equal the dimension).
//
// # Safety
// `report` must be a live handle; `out` must point to `len` writable doubles.
enum HpStatus hp_report_x(const struct HpReport *report, double *out, size_t len);

// # Safety
// `report` must be a live handle.
size_t hp_report_iterations(const struct HpReport *report);

// # Safety
// `report` must be a live handle.
enum HpStopReason hp_report_stop_reason(const struct HpReport *report);

// # Safety
// `report` must be a live handle.
double hp_report_wall_time_ms(const struct HpReport *report);

// Number of recorded history rows.
//
// # Safety
// `report` must be a live handle.
size_t hp_report_history_len(const struct HpReport *report);

// `||x_{k+1}||` and the residual maxima `(y, z, S)` of history row `k`.
//
// # Safety
// `report` must be a live handle; `out` must point to 4 writable doubles.
enum HpStatus hp_report_history_row(const struct HpReport *report, size_t k, double *out);

// Run summary as a JSON string; release it with [`hp_string_free`].
//
// # Safety
// `report` must be a live handle.
char *hp_report_summary_json(const struct HpReport *report);

// # Safety
// `s` must come from this library and not be used afterwards.
void hp_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HYBRIDPROJ_H */
