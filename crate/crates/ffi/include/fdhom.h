#ifndef FDHOM_H
#define FDHOM_H

/* Generated by cbindgen from the fdhom-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum {
  FdhomStatus_Ok = 0,
  FdhomStatus_NullPointer = 1,
  FdhomStatus_InvalidUtf8 = 2,
  FdhomStatus_ConfigError = 3,
  FdhomStatus_RunError = 4,
  FdhomStatus_Panic = 5,
} FdhomStatus;

/**
 * Opaque parsed experiment configuration.
 */
typedef struct FdhomConfig FdhomConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread; empty when the
 * last call succeeded. Borrowed pointer, do not free.
 */
const char *fdhom_last_error(void);

/**
 * Library version as a static NUL-terminated string, e.g. "0.1.0".
 */
const char *fdhom_version(void);

/**
 * Parse a TOML experiment configuration into an opaque handle.
 *
 * # Safety
 * `toml_text` must be a valid NUL-terminated string; `out` must point to
 * writable storage for one pointer.
 */
FdhomStatus fdhom_config_parse(const char *toml_text, FdhomConfig **out);

/**
 * Release a configuration handle. Accepts null.
 *
 * # Safety
 * `config` must originate from `fdhom_config_parse` and not be freed twice.
 */
void fdhom_config_free(FdhomConfig *config);

/**
 * Run an experiment, writing CSV/JSON artifacts under `out_dir`.
 * `kind`: 0 = check, 1 = cell_solve, 2 = homogenize, 3 = stochastic,
 * 4 = gamma.
 *
 * # Safety
 * `config` must be a live handle from `fdhom_config_parse`; `out_dir` a
 * valid NUL-terminated path.
 */
FdhomStatus fdhom_run(const FdhomConfig *config, uint32_t kind, const char *out_dir);

/**
 * Effective volume density at scalar argument `xi` for the config's
 * integrand pair (1D): writes the extrapolated limit and its tail spread.
 *
 * # Safety
 * `config` must be a live handle; `out_limit`/`out_spread` must be valid.
 */
FdhomStatus fdhom_volume_cell_limit(const FdhomConfig *config,
                                    double xi,
                                    double *out_limit,
                                    double *out_spread);

/**
 * Effective surface density at scalar jump amplitude `zeta` (1D, normal +1).
 *
 * # Safety
 * Same contract as `fdhom_volume_cell_limit`.
 */
FdhomStatus fdhom_surface_cell_limit(const FdhomConfig *config,
                                     double zeta,
                                     double *out_limit,
                                     double *out_spread);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FDHOM_H */
