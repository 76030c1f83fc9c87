/* C interface to the ensemble data-assimilation engine.
 *
 * All entry points return ENDA_OK (0) on success or a nonzero error
 * code; when errbuf is non-NULL the failure message is copied into it
 * (truncated to errlen, always NUL-terminated). Handles are opaque and
 * must be released with their matching _free function.
 */
#ifndef ENDA_H
#define ENDA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define ENDA_OK 0
#define ENDA_ERR_INVALID 1 /* bad arguments or configuration */
#define ENDA_ERR_RUNTIME 2 /* I/O failures, divergence, internal errors */

typedef struct enda_config enda_config;

const char* enda_version(void);

/* Empty configuration; populate with enda_config_set. */
enda_config* enda_config_create(void);

/* Parses a `key = value` text file ('#' comments). On success *out owns
 * a new handle. */
int enda_config_load(const char* path, enda_config** out, char* errbuf,
                     size_t errlen);

/* Inserts or overrides one entry. */
int enda_config_set(enda_config* cfg, const char* key, const char* value,
                    char* errbuf, size_t errlen);

void enda_config_free(enda_config* cfg);

/* Runs an assimilation-cycle experiment. Unknown configuration keys are
 * rejected. If the model diverges the run stops, partial outputs are
 * kept, and *aborted_cycle (when non-NULL) receives the failing cycle
 * index; it is 0 on a clean run. */
int enda_cycle_run(const enda_config* cfg, uint64_t* aborted_cycle,
                   char* errbuf, size_t errlen);

/* Re-forecasts archived analysis ensembles and writes a lead-time score
 * table (forecast.* keys select the archive and range). */
int enda_forecast_run(const enda_config* cfg, char* errbuf, size_t errlen);

/* Writes the free nature trajectory truth_c0..truth_cN to output.dir. */
int enda_nature_run(const enda_config* cfg, char* errbuf, size_t errlen);

/* Samples the configured network against archived truth snapshots and
 * writes one observation CSV (synth.* keys). */
int enda_synth_obs_run(const enda_config* cfg, char* errbuf, size_t errlen);

/* Thins an observation CSV onto the configured grid. Writes the kept
 * subset to out_obs_path and, when report_path is non-NULL, a per-grid
 * density report. */
int enda_thin_file(const enda_config* cfg, const char* in_obs_path,
                   const char* out_obs_path, const char* report_path,
                   char* errbuf, size_t errlen);

/* Scores a gridded state snapshot against a truth snapshot (both path
 * bases without extension) and writes var,level_hpa,rmse rows to
 * out_csv. Paths ending in .txt are treated as ring states. */
int enda_metrics_files(const char* state_path, const char* truth_path,
                       const char* out_csv, char* errbuf, size_t errlen);

/* Great-circle distance in km on the reference sphere. */
double enda_great_circle_km(double lat1_deg, double lon1_deg, double lat2_deg,
                            double lon2_deg);

#ifdef __cplusplus
}
#endif

#endif /* ENDA_H */
