#ifndef GREENWOOD_H
#define GREENWOOD_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Status codes returned by every fallible function.
typedef enum GwStatus {
  GW_STATUS_OK = 0,
  GW_STATUS_NULL_POINTER = 1,
  GW_STATUS_INVALID_ARGUMENT = 2,
  GW_STATUS_INVALID_SAMPLE = 3,
  GW_STATUS_MISSING_ENTRY = 4,
  GW_STATUS_IO = 5,
  GW_STATUS_FORMAT = 6,
  GW_STATUS_PANIC = 7,
} GwStatus;

// Tail of a quantile table entry.
typedef enum GwSide {
  GW_SIDE_UPPER = 0,
  GW_SIDE_LOWER = 1,
} GwSide;

typedef enum GwTestKind {
  GW_TEST_KIND_MG1 = 0,
  GW_TEST_KIND_MG2 = 1,
  GW_TEST_KIND_MG3_GPD = 2,
  GW_TEST_KIND_MG4_STUDENT_T = 3,
  GW_TEST_KIND_MG_TWO_SIDED = 4,
  GW_TEST_KIND_JARQUE_BERA = 5,
  GW_TEST_KIND_KOLMOGOROV_SMIRNOV = 6,
} GwTestKind;

// Opaque quantile table.
typedef struct GwQuantileTable GwQuantileTable;

// Outcome of one test. Unused thresholds are NaN.
typedef struct GwTestResult {
  double statistic;
  double lower_threshold;
  double upper_threshold;
  size_t n;
  bool reject;
} GwTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gw_version(void);

// Static description of a status code.
const char *gw_status_string(enum GwStatus status);

// Message of the last failure on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *gw_last_error_message(void);

// Modified Greenwood statistic of `len` values.
//
// # Safety
// `values` must point to `len` readable doubles and `out` to one writable
// double.
enum GwStatus gw_modified_greenwood(const double *values, size_t len, double *out);

// Classical Greenwood statistic of `len` strictly positive values.
//
// # Safety
// As for `gw_modified_greenwood`.
enum GwStatus gw_classical_greenwood(const double *values, size_t len, double *out);

// Fills `out` with `len` draws from `spec`, reproducibly for a given
// `(seed, stream)`.
//
// # Safety
// `spec` must be a NUL-terminated string and `out` must point to `len`
// writable doubles.
enum GwStatus gw_sample(const char *spec, uint64_t seed, uint64_t stream, double *out, size_t len);

// Loads a quantile table JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum GwStatus gw_table_load(const char *path, struct GwQuantileTable **out);

// Simulates `m` null statistics for each of the `ns_len` sample sizes and
// records the quantile for `(c, side)`.
//
// # Safety
// `spec` must be a NUL-terminated string, `ns` must point to `ns_len`
// sizes and `out` must be a writable pointer.
enum GwStatus gw_table_build(const char *spec,
                             const size_t *ns,
                             size_t ns_len,
                             double c,
                             enum GwSide side,
                             size_t m,
                             uint64_t seed,
                             struct GwQuantileTable **out);

// Writes `table` as JSON, replacing `path` atomically.
//
// # Safety
// `table` must come from this library and `path` must be a NUL-terminated
// string.
enum GwStatus gw_table_save(const struct GwQuantileTable *table, const char *path);

// Number of entries in `table`; 0 for a null handle.
//
// # Safety
// `table` must be null or come from this library.
size_t gw_table_len(const struct GwQuantileTable *table);

// Critical value for `(spec, n, c, side)`.
//
// # Safety
// `table` must come from this library, `spec` must be a NUL-terminated
// string and `out` must point to one writable double.
enum GwStatus gw_table_critical_value(const struct GwQuantileTable *table,
                                      const char *spec,
                                      size_t n,
                                      double c,
                                      enum GwSide side,
                                      double *out);

// Releases a table. Null is ignored.
//
// # Safety
// `table` must be null or a handle from this library not yet freed.
void gw_table_free(struct GwQuantileTable *table);

// Runs one test at level `c`. `null_spec` is required for the two-sided
// test and ignored otherwise; `table` may be null for the JB and KS tests.
//
// # Safety
// Pointers must be null or valid as described; `values` must point to
// `len` readable doubles and `out` to one writable result.
enum GwStatus gw_test_run(const struct GwQuantileTable *table,
                          enum GwTestKind kind,
                          const char *null_spec,
                          double c,
                          const double *values,
                          size_t len,
                          struct GwTestResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GREENWOOD_H */
