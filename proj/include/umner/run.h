#pragma once

#include <string>
#include <vector>

#include "umner/model.h"

namespace umner {

// Model configuration plus file locations for one command invocation.
struct RunConfig {
  ModelConfig model;
  std::string train_data;
  std::string val_data;       // defaults to train_data
  std::string features_dir;
  std::string checkpoint_out = "model.umnr";
  std::string metrics_out;
  double early_stop_f1 = -1.0;  // >= 0 stops once val F1 reaches the value
};

// `key = value` lines, `#` comments, unknown keys rejected.
RunConfig load_run_config(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

struct TrainResult {
  std::string metrics;       // MetricsDocument text
  double final_val_f1 = 0.0; // percent
  std::vector<double> loss_curve;
};

TrainResult train_run(const RunConfig& cfg);

struct EvalResult {
  std::string metrics;
  EvaluationReport report;
};

EvalResult evaluate_run(const std::string& checkpoint, const std::string& data,
                        const std::string& features_dir, const std::string& metrics_out);

void predict_run(const std::string& checkpoint, const std::string& data,
                 const std::string& features_dir, const std::string& out_path);

std::string stats_run(const std::vector<std::string>& data_paths);

double kappa_run(const std::string& csv_path);

struct GradCheckRun {
  std::string report;
  bool passed = false;
  double max_rel_error = 0.0;
};

GradCheckRun gradcheck_run(unsigned long long seed, bool inject_fault);

// MetricsDocument rendering shared by train/eval.
std::string render_metrics(const EvaluationReport& report,
                           const std::vector<double>& loss_curve,
                           std::size_t parameter_count, double wall_seconds,
                           const ModelConfig& config);

}  // namespace umner
