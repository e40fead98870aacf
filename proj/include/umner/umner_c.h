/* C interface to the U-MNER library: opaque handles, status codes, and
 * caller-freed strings. Every function is synchronous and thread-compatible
 * (error state is thread-local). */
#ifndef UMNER_C_H
#define UMNER_C_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum umner_status {
  UMNER_OK = 0,
  UMNER_ERR_IO = 1,
  UMNER_ERR_FORMAT = 2,
  UMNER_ERR_SHAPE = 3,
  UMNER_ERR_CONFIG = 4,
  UMNER_ERR_CONTRACT = 5,
  UMNER_ERR_DOMAIN = 6,
  UMNER_ERR_INTERNAL = 7
} umner_status;

/* Message for the most recent failing call on this thread; never NULL. */
const char* umner_last_error(void);

/* Frees any string returned through an out-parameter. */
void umner_string_free(char* s);

const char* umner_version(void);

/* ---- run configuration (opaque) ---- */

typedef struct umner_run umner_run;

/* Loads a `key = value` config file. */
umner_status umner_run_open(const char* config_path, umner_run** out);

/* Overrides one config entry (same keys as the file). */
umner_status umner_run_set(umner_run* run, const char* key, const char* value);

void umner_run_close(umner_run* run);

/* ---- commands ---- */

/* Trains per the run config; writes the checkpoint and optional metrics file.
 * On success *metrics_out holds the metrics document (free with
 * umner_string_free). */
umner_status umner_train(umner_run* run, char** metrics_out);

umner_status umner_evaluate(const char* checkpoint, const char* data,
                            const char* features_dir, const char* metrics_path_or_null,
                            char** metrics_out);

umner_status umner_predict(const char* checkpoint, const char* data,
                           const char* features_dir, const char* out_path);

/* Entity-distribution table over one or more dataset files. */
umner_status umner_stats(const char* const* data_paths, int n_paths, char** table_out);

/* Cohen's kappa of a square confusion-matrix CSV. */
umner_status umner_kappa(const char* csv_path, double* kappa_out);

/* Finite-difference check of every parameter group on a small fixed model.
 * inject_fault != 0 deliberately corrupts one backward rule (negative
 * control). *pass_out is 1 on pass. */
umner_status umner_gradcheck(unsigned long long seed, int inject_fault,
                             char** report_out, int* pass_out);

#ifdef __cplusplus
}
#endif

#endif /* UMNER_C_H */
