#include "umner/umner_c.h"

#include <cstring>
#include <string>

#include "umner/error.h"
#include "umner/run.h"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

umner_status status_of(umner::ErrorKind kind) {
  using umner::ErrorKind;
  switch (kind) {
    case ErrorKind::Io: return UMNER_ERR_IO;
    case ErrorKind::Format: return UMNER_ERR_FORMAT;
    case ErrorKind::Shape: return UMNER_ERR_SHAPE;
    case ErrorKind::Config: return UMNER_ERR_CONFIG;
    case ErrorKind::Contract: return UMNER_ERR_CONTRACT;
    case ErrorKind::Domain: return UMNER_ERR_DOMAIN;
  }
  return UMNER_ERR_INTERNAL;
}

template <typename Fn>
umner_status guarded(Fn&& fn) {
  try {
    fn();
    return UMNER_OK;
  } catch (const umner::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UMNER_ERR_INTERNAL;
  }
}

}  // namespace

struct umner_run {
  umner::RunConfig config;
};

extern "C" {

const char* umner_last_error(void) { return g_last_error.c_str(); }

void umner_string_free(char* s) { delete[] s; }

const char* umner_version(void) { return "1.0.0"; }

umner_status umner_run_open(const char* config_path, umner_run** out) {
  if (!config_path || !out) {
    g_last_error = "umner_run_open: null argument";
    return UMNER_ERR_CONTRACT;
  }
  *out = nullptr;
  return guarded([&] {
    auto run = new umner_run{umner::load_run_config(config_path)};
    *out = run;
  });
}

umner_status umner_run_set(umner_run* run, const char* key, const char* value) {
  if (!run || !key || !value) {
    g_last_error = "umner_run_set: null argument";
    return UMNER_ERR_CONTRACT;
  }
  return guarded([&] { umner::apply_config_line(run->config, key, value); });
}

void umner_run_close(umner_run* run) { delete run; }

umner_status umner_train(umner_run* run, char** metrics_out) {
  if (!run) {
    g_last_error = "umner_train: null run";
    return UMNER_ERR_CONTRACT;
  }
  return guarded([&] {
    umner::TrainResult result = umner::train_run(run->config);
    if (metrics_out) *metrics_out = dup_string(result.metrics);
  });
}

umner_status umner_evaluate(const char* checkpoint, const char* data,
                            const char* features_dir, const char* metrics_path_or_null,
                            char** metrics_out) {
  if (!checkpoint || !data || !features_dir) {
    g_last_error = "umner_evaluate: null argument";
    return UMNER_ERR_CONTRACT;
  }
  return guarded([&] {
    umner::EvalResult result = umner::evaluate_run(
        checkpoint, data, features_dir,
        metrics_path_or_null ? metrics_path_or_null : "");
    if (metrics_out) *metrics_out = dup_string(result.metrics);
  });
}

umner_status umner_predict(const char* checkpoint, const char* data,
                           const char* features_dir, const char* out_path) {
  if (!checkpoint || !data || !features_dir || !out_path) {
    g_last_error = "umner_predict: null argument";
    return UMNER_ERR_CONTRACT;
  }
  return guarded([&] { umner::predict_run(checkpoint, data, features_dir, out_path); });
}

umner_status umner_stats(const char* const* data_paths, int n_paths, char** table_out) {
  if (!data_paths || n_paths < 1) {
    g_last_error = "umner_stats: at least one data file required";
    return UMNER_ERR_CONTRACT;
  }
  return guarded([&] {
    std::vector<std::string> paths(data_paths, data_paths + n_paths);
    std::string table = umner::stats_run(paths);
    if (table_out) *table_out = dup_string(table);
  });
}

umner_status umner_kappa(const char* csv_path, double* kappa_out) {
  if (!csv_path || !kappa_out) {
    g_last_error = "umner_kappa: null argument";
    return UMNER_ERR_CONTRACT;
  }
  return guarded([&] { *kappa_out = umner::kappa_run(csv_path); });
}

umner_status umner_gradcheck(unsigned long long seed, int inject_fault,
                             char** report_out, int* pass_out) {
  return guarded([&] {
    umner::GradCheckRun run = umner::gradcheck_run(seed, inject_fault != 0);
    if (report_out) *report_out = dup_string(run.report);
    if (pass_out) *pass_out = run.passed ? 1 : 0;
  });
}

}  // extern "C"
