/*
 * C API for the finite-element-interpolated network solver library.
 *
 * All functions return a feinn_status; on failure, feinn_last_error() gives a
 * human-readable message (thread-local, valid until the next failing call on
 * the same thread). Objects are opaque handles released with their _free
 * function. The library is safe to use from multiple threads as long as each
 * handle is confined to one thread.
 */
#ifndef FEINN_H
#define FEINN_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum feinn_status {
  FEINN_OK = 0,
  FEINN_ERR_INVALID_ARGUMENT = 1, /* bad value or failed validation */
  FEINN_ERR_PARSE = 2,            /* malformed config or mesh text */
  FEINN_ERR_NUMERIC = 3,          /* solver/numeric failure */
  FEINN_ERR_IO = 4,               /* file system failure */
  FEINN_ERR_INTERNAL = 5
} feinn_status;

typedef struct feinn_config feinn_config; /* parsed experiment configuration */
typedef struct feinn_report feinn_report; /* results of a run */

const char* feinn_version(void);
const char* feinn_last_error(void);

/* Configuration: load from file or text, override individual keys, validate.
 * Validation failures report every offending key in feinn_last_error(). */
feinn_status feinn_config_load(const char* path, feinn_config** out);
feinn_status feinn_config_parse(const char* text, feinn_config** out);
feinn_status feinn_config_set(feinn_config* config, const char* section, const char* key, const char* value);
feinn_status feinn_config_validate(const feinn_config* config);
void feinn_config_free(feinn_config* config);

/* Runs the configured experiment, writing CSV reports to the configured
 * output directory. The report lists every file written plus a short text
 * summary (rate fits, seed statistics). */
feinn_status feinn_run(const feinn_config* config, feinn_report** out);

size_t feinn_report_file_count(const feinn_report* report);
const char* feinn_report_file_path(const feinn_report* report, size_t index);
const char* feinn_report_summary(const feinn_report* report);
/* 1 when some seeds failed numerically while others completed. */
int feinn_report_partial_failure(const feinn_report* report);
void feinn_report_free(feinn_report* report);

#ifdef __cplusplus
}
#endif

#endif /* FEINN_H */
