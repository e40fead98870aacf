#pragma once

#include <optional>
#include <string>
#include <vector>

#include "umner/attention.h"
#include "umner/bilstm_crf.h"
#include "umner/corpus.h"
#include "umner/features.h"
#include "umner/gate.h"
#include "umner/tensor.h"

namespace umner {

struct ModelConfig {
  int d = 64;             // model dim
  int heads = 12;         // cross-modal attention heads
  int lstm_hidden = 64;   // per-direction BiLSTM size
  int vocab_size = 4;     // filled from training data
  int visual_rows = 49;
  int visual_dims = 2048;
  double dropout = 0.1;
  int max_length = 128;
  double learning_rate = 5e-5;
  int batch_size = 16;
  int epochs = 1;
  unsigned long long seed = 42;

  // ablation toggles
  bool use_self_attention = true;
  bool use_cross_modal = true;
  bool use_visual_gate = true;
  bool text_only = false;

  bool bio_mask = false;  // hard BIO transition constraints at decode/score time

  void validate() const;

  // packing for the checkpoint metadata tensor
  std::vector<double> pack() const;
  static ModelConfig unpack(const std::vector<double>& values);
};

enum class RunMode { Train, Eval };

// The assembled network: owns the parameter map and the wiring for the full
// model and every ablation variant.
class UmnerModel {
 public:
  // Fresh initialization from a seed.
  UmnerModel(ModelConfig config, Vocabulary vocab);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterMap& params() { return params_; }
  const ParameterMap& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  // Emission scores (L x n) over real tokens. Train mode applies dropout
  // using the internal RNG; eval mode is deterministic.
  Tensor forward(const TokenSequence& seq, const VisualFeatureGrid& grid, RunMode mode,
                 ForwardTrace* trace = nullptr);

  Tensor sentence_nll(const TokenSequence& seq, const VisualFeatureGrid& grid,
                      RunMode mode);

  // Mean of per-sentence NLL over the batch.
  Tensor batch_loss(const std::vector<const TokenSequence*>& seqs,
                    const std::vector<const VisualFeatureGrid*>& grids, RunMode mode);

  std::vector<std::string> predict_labels(const TokenSequence& seq,
                                          const VisualFeatureGrid& grid);

  const CrfParams& crf() const { return crf_; }

  void save_checkpoint(const std::string& path) const;
  static UmnerModel load_checkpoint(const std::string& path);

  // Reseeds the dropout RNG (training determinism).
  void reseed(unsigned long long seed) { rng_.seed(seed); }

 private:
  struct BindOnly {};
  UmnerModel(ModelConfig config, Vocabulary vocab, BindOnly);
  void allocate(bool fresh, std::mt19937_64& rng);
  std::vector<int> gold_indices(const TokenSequence& seq) const;
  TokenSequence truncated(const TokenSequence& seq) const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParameterMap params_;
  std::mt19937_64 rng_;

  Tensor embedding_;
  Tensor positions_;
  Tensor w_u_;
  std::optional<AttentionParams> sa_;
  std::optional<AttentionParams> cmt_first_;
  std::optional<AttentionParams> cmt_coupled_;
  std::optional<AttentionParams> cmt_word_visual_;
  std::optional<GateParams> gate_;
  LstmParams lstm_;
  CrfParams crf_;
};

// Low-level checkpoint container (exact wire format; see save/load).
struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};
void write_checkpoint_file(const std::string& path,
                           const std::vector<CheckpointTensor>& tensors);
std::vector<CheckpointTensor> read_checkpoint_file(const std::string& path);

}  // namespace umner
