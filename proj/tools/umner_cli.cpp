// Command-line front end; talks to the library exclusively through the C API.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "umner/umner_c.h"

namespace {

int fail(umner_status status) {
  std::fprintf(stderr, "umner: error: %s\n", umner_last_error());
  return int(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-MNER: multimodal named entity recognition toolkit"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  std::string config_path;
  bool no_self_attn = false, no_cross_modal = false, no_visual_gate = false,
       text_only = false, bio_mask = false;
  train->add_option("--config", config_path, "Run configuration file")->required();
  train->add_flag("--no-self-attn", no_self_attn, "Ablation: drop the self-attention layer");
  train->add_flag("--no-cross-modal", no_cross_modal,
                  "Ablation: replace cross-modal fusion with mean-pooled visual features");
  train->add_flag("--no-visual-gate", no_visual_gate, "Ablation: fix the visual gate to 1");
  train->add_flag("--text-only", text_only, "Ablation: zero visual pathway");
  train->add_flag("--bio-mask", bio_mask, "Hard BIO transition constraints");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on labeled data");
  std::string ckpt, data, features, metrics_out;
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data, "Labeled dataset")->required();
  eval->add_option("--features", features, "Visual feature directory")->required();
  eval->add_option("--metrics-out", metrics_out, "Write the metrics document here");

  // predict
  auto* predict = app.add_subcommand("predict", "Decode a dataset and write predictions");
  std::string out_path;
  predict->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  predict->add_option("--data", data, "Input dataset (labels optional)")->required();
  predict->add_option("--features", features, "Visual feature directory")->required();
  predict->add_option("--out", out_path, "Predictions output file")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Entity distribution per split");
  std::vector<std::string> data_files;
  stats->add_option("--data", data_files, "Dataset files")->required()->expected(-1);

  // kappa
  auto* kappa = app.add_subcommand("kappa", "Cohen's kappa of a confusion-matrix CSV");
  std::string matrix_path;
  kappa->add_option("--matrix", matrix_path, "CSV confusion matrix")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  unsigned long long seed = 7;
  bool inject_fault = false;
  gradcheck->add_option("--seed", seed, "RNG seed");
  gradcheck->add_flag("--inject-fault", inject_fault,
                      "Corrupt one backward rule (negative control)");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    umner_run* run = nullptr;
    umner_status st = umner_run_open(config_path.c_str(), &run);
    if (st != UMNER_OK) return fail(st);
    auto set = [&](const char* key, const char* value) {
      if (st == UMNER_OK) st = umner_run_set(run, key, value);
    };
    if (no_self_attn) set("use_self_attention", "false");
    if (no_cross_modal) set("use_cross_modal", "false");
    if (no_visual_gate) set("use_visual_gate", "false");
    if (text_only) set("text_only", "true");
    if (bio_mask) set("bio_mask", "true");
    if (st != UMNER_OK) {
      umner_run_close(run);
      return fail(st);
    }
    char* metrics = nullptr;
    st = umner_train(run, &metrics);
    umner_run_close(run);
    if (st != UMNER_OK) return fail(st);
    std::fputs(metrics, stdout);
    umner_string_free(metrics);
    return 0;
  }

  if (eval->parsed()) {
    char* metrics = nullptr;
    umner_status st =
        umner_evaluate(ckpt.c_str(), data.c_str(), features.c_str(),
                       metrics_out.empty() ? nullptr : metrics_out.c_str(), &metrics);
    if (st != UMNER_OK) return fail(st);
    std::fputs(metrics, stdout);
    umner_string_free(metrics);
    return 0;
  }

  if (predict->parsed()) {
    umner_status st =
        umner_predict(ckpt.c_str(), data.c_str(), features.c_str(), out_path.c_str());
    if (st != UMNER_OK) return fail(st);
    return 0;
  }

  if (stats->parsed()) {
    std::vector<const char*> paths;
    for (const auto& p : data_files) paths.push_back(p.c_str());
    char* table = nullptr;
    umner_status st = umner_stats(paths.data(), int(paths.size()), &table);
    if (st != UMNER_OK) return fail(st);
    std::fputs(table, stdout);
    umner_string_free(table);
    return 0;
  }

  if (kappa->parsed()) {
    double value = 0.0;
    umner_status st = umner_kappa(matrix_path.c_str(), &value);
    if (st != UMNER_OK) return fail(st);
    std::printf("%.4f\n", value);
    return 0;
  }

  if (gradcheck->parsed()) {
    char* report = nullptr;
    int pass = 0;
    umner_status st = umner_gradcheck(seed, inject_fault ? 1 : 0, &report, &pass);
    if (st != UMNER_OK) return fail(st);
    std::fputs(report, stdout);
    umner_string_free(report);
    return pass ? 0 : 1;
  }

  return 0;
}
