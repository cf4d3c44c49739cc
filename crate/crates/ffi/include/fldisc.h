#ifndef FLDISC_H
#define FLDISC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FldStatus {
  FLD_STATUS_OK = 0,
  FLD_STATUS_NULL_POINTER = 1,
  FLD_STATUS_INVALID_ARGUMENT = 2,
  FLD_STATUS_DIMENSION = 3,
  /**
   * The state left the chart of the linearizing coordinates.
   */
  FLD_STATUS_DOMAIN = 4,
  FLD_STATUS_SINGULAR = 5,
  /**
   * Newton or an inversion did not converge.
   */
  FLD_STATUS_NUMERIC = 6,
  FLD_STATUS_IO = 7,
  FLD_STATUS_PANIC = 8,
} FldStatus;

typedef enum FldVerdict {
  FLD_VERDICT_LINEARIZABLE = 0,
  FLD_VERDICT_LINEARIZABLE_CONSISTENT = 1,
  FLD_VERDICT_NOT_LINEARIZABLE = 2,
  FLD_VERDICT_INCONCLUSIVE = 3,
} FldVerdict;

/**
 * Opaque scenario: a preset together with a discretization scheme.
 */
typedef struct FldScenario FldScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a scenario from a preset name (`"unicycle"`), a map kind
 * (`"explicit-euler"`, `"implicit-euler"`, `"midpoint"`), the lifting flag
 * and the step size. On success `*out` receives a handle to free with
 * [`fld_scenario_free`].
 *
 * # Safety
 * `preset` and `map` must be NUL-terminated strings; `out` must be writable.
 */
enum FldStatus fld_scenario_new(const char *preset,
                                const char *map,
                                bool lifted,
                                double h,
                                struct FldScenario **out);

/**
 * # Safety
 * `s` must be null or a handle from [`fld_scenario_new`] not yet freed.
 */
void fld_scenario_free(struct FldScenario *s);

/**
 * State and input dimensions of the extended system.
 *
 * # Safety
 * `s` must be a live handle; `state_dim` and `input_dim` must be writable.
 */
enum FldStatus fld_scenario_dims(const struct FldScenario *s, size_t *state_dim, size_t *input_dim);

/**
 * Copies the preset initial state into `out`.
 *
 * # Safety
 * `s` must be a live handle; `out` must hold `out_len` doubles.
 */
enum FldStatus fld_scenario_initial_state(const struct FldScenario *s, double *out, size_t out_len);

/**
 * One step `ξ_{k+1} = F̄_h(ξ_k, μ_k)`.
 *
 * # Safety
 * `s` must be a live handle; the arrays must hold the given counts.
 */
enum FldStatus fld_scenario_step(const struct FldScenario *s,
                                 const double *xi,
                                 size_t xi_len,
                                 const double *mu,
                                 size_t mu_len,
                                 double *out,
                                 size_t out_len);

/**
 * Linearizing feedback `μ = α̃(ξ) + β̃(ξ)v`.
 *
 * # Safety
 * `s` must be a live handle; the arrays must hold the given counts.
 */
enum FldStatus fld_scenario_feedback(const struct FldScenario *s,
                                     const double *xi,
                                     size_t xi_len,
                                     const double *v,
                                     size_t v_len,
                                     double *mu_out,
                                     size_t mu_len);

/**
 * Linearizing coordinates `z = Φ(ξ)`.
 *
 * # Safety
 * `s` must be a live handle; the arrays must hold the given counts.
 */
enum FldStatus fld_scenario_phi(const struct FldScenario *s,
                                const double *xi,
                                size_t xi_len,
                                double *z_out,
                                size_t z_len);

/**
 * `ξ = Φ⁻¹(z)`.
 *
 * # Safety
 * `s` must be a live handle; the arrays must hold the given counts.
 */
enum FldStatus fld_scenario_phi_inverse(const struct FldScenario *s,
                                        const double *z,
                                        size_t z_len,
                                        double *xi_out,
                                        size_t xi_len);

/**
 * Closed-loop run over `[0, horizon]` from the preset initial state with
 * the preset gains. Writes the `(steps + 1) × state_dim` states row by row
 * into `states_out` (may be null) and the maximum distance to the
 * continuous closed loop into `max_error` (may be null). `*steps_out`
 * receives the number of steps.
 *
 * # Safety
 * `s` must be a live handle; non-null outputs must be writable, with
 * `states_out` holding `states_len` doubles.
 */
enum FldStatus fld_scenario_simulate(const struct FldScenario *s,
                                     double horizon,
                                     double *states_out,
                                     size_t states_len,
                                     size_t *steps_out,
                                     double *max_error);

/**
 * Worst `‖Φ(ξ_{k+1}) − A_h Φ(ξ_k) − B_h v_k‖` over `steps` closed-loop steps.
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum FldStatus fld_scenario_linearity_residual(const struct FldScenario *s,
                                               size_t steps,
                                               double *out);

/**
 * Discrete linearizability audit of the scenario's step map on seeded
 * sample points. `json_out` (may be null) receives the report, to be
 * released with [`fld_string_free`].
 *
 * # Safety
 * `s` must be a live handle; `verdict` must be writable; `json_out` must
 * be null or writable.
 */
enum FldStatus fld_scenario_audit(const struct FldScenario *s,
                                  uint64_t seed,
                                  enum FldVerdict *verdict,
                                  char **json_out);

/**
 * # Safety
 * `p` must be null or a string returned by this library, not yet freed.
 */
void fld_string_free(char *p);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fld_last_error(void);

/**
 * Library version as a static string.
 */
const char *fld_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLDISC_H */
