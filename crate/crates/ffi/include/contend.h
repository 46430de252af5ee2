#ifndef CONTEND_H
#define CONTEND_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CONTEND_OK 0

/**
 * A required pointer argument was null.
 */
#define CONTEND_ERR_NULL 1

/**
 * A string argument was not valid UTF-8.
 */
#define CONTEND_ERR_UTF8 2

/**
 * A file could not be read or written.
 */
#define CONTEND_ERR_IO 3

/**
 * Scenario text could not be parsed or named unknown entities.
 */
#define CONTEND_ERR_PARSE 4

/**
 * The scenario parsed but broke an invariant.
 */
#define CONTEND_ERR_INVALID 5

/**
 * The simulation or a numeric routine failed.
 */
#define CONTEND_ERR_COMPUTE 6

/**
 * An index or enumeration value was out of range.
 */
#define CONTEND_ERR_RANGE 7

/**
 * Internal error; the library panicked.
 */
#define CONTEND_ERR_PANIC 8

#define CONTEND_FORMAT_TABLE 0

#define CONTEND_FORMAT_DOCUMENT 1

/**
 * Opaque scenario handle.
 */
typedef struct ContendScenario ContendScenario;

/**
 * Opaque simulation trace handle.
 */
typedef struct ContendTrace ContendTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null if none. The
 * pointer stays valid until the next failing call on the thread.
 */
const char *contend_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *contend_version(void);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_scenario` writable.
 */
int32_t contend_scenario_load(const char *path, struct ContendScenario **out_scenario);

/**
 * Parses and validates scenario text.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out_scenario` writable.
 */
int32_t contend_scenario_parse(const char *source, struct ContendScenario **out_scenario);

/**
 * Loads one of the scenarios shipped with the library by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out_scenario` writable.
 */
int32_t contend_scenario_bundled(const char *name, struct ContendScenario **out_scenario);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void contend_scenario_free(struct ContendScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle and `out_apps` writable.
 */
int32_t contend_scenario_num_apps(const struct ContendScenario *scenario, size_t *out_apps);

/**
 * # Safety
 * `scenario` must be a live handle and `out_resources` writable.
 */
int32_t contend_scenario_num_resources(const struct ContendScenario *scenario,
                                       size_t *out_resources);

/**
 * Simulates up to `horizon` periods.
 *
 * # Safety
 * `scenario` must be a live handle and `out_trace` writable.
 */
int32_t contend_run(const struct ContendScenario *scenario,
                    uint64_t horizon,
                    uint64_t seed,
                    struct ContendTrace **out_trace);

/**
 * Releases a trace. Null is ignored.
 *
 * # Safety
 * `trace` must come from this library and not be used afterwards.
 */
void contend_trace_free(struct ContendTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle and `out_periods` writable.
 */
int32_t contend_trace_num_periods(const struct ContendTrace *trace, size_t *out_periods);

/**
 * Resource index held by `app` in `period`, or -1 when it holds none.
 *
 * # Safety
 * `trace` must be a live handle and `out_resource` writable.
 */
int32_t contend_trace_assignment(const struct ContendTrace *trace,
                                 size_t period,
                                 size_t app,
                                 int64_t *out_resource);

/**
 * Payoff of `app` in `period`: realized valuation minus payment.
 *
 * # Safety
 * `trace` must be a live handle and `out_payoff` writable.
 */
int32_t contend_trace_payoff(const struct ContendTrace *trace,
                             size_t period,
                             size_t app,
                             double *out_payoff);

/**
 * Auctioneer revenue over the whole trace.
 *
 * # Safety
 * `trace` must be a live handle and `out_revenue` writable.
 */
int32_t contend_trace_revenue(const struct ContendTrace *trace, double *out_revenue);

/**
 * Writes the trace as a table (`CONTEND_FORMAT_TABLE`) or document
 * (`CONTEND_FORMAT_DOCUMENT`).
 *
 * # Safety
 * `trace` must be a live handle and `path` a NUL-terminated string.
 */
int32_t contend_trace_write(const struct ContendTrace *trace, const char *path, uint32_t format);

/**
 * Exhaustive welfare optimum for `apps × resources` valuations given row by
 * row. Writes each application's resource index (-1 for none) to
 * `out_assignment`, which must hold `apps` entries.
 *
 * # Safety
 * `values` must hold `apps * resources` doubles, `slots` `resources`
 * integers, and both out-pointers must be writable.
 */
int32_t contend_brute_force(const double *values,
                            size_t apps,
                            size_t resources,
                            const uint32_t *slots,
                            int64_t *out_assignment,
                            double *out_total);

/**
 * Symmetric equilibrium bid for `n` bidders, `m` slots and valuation `v`.
 *
 * # Safety
 * `out_bid` must be writable.
 */
int32_t contend_equilibrium_bid(uint32_t n, uint32_t m, double v, double *out_bid);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTEND_H */
