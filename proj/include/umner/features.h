#pragma once

#include <map>
#include <string>
#include <vector>

#include "umner/tensor.h"

namespace umner {

struct TokenSequence {
  std::string image_id;
  std::vector<std::string> tokens;
  std::vector<std::string> labels;  // empty labels permitted in prediction inputs
};

// Token -> dense index map with the four reserved entries.
class Vocabulary {
 public:
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens_in_order);

  // Builds from a corpus; reserved tokens get the first four indices.
  static Vocabulary build(const std::vector<TokenSequence>& data);

  int index_of(const std::string& token) const;  // [UNK] for unseen
  int pad() const { return 0; }
  int unk() const { return 1; }
  int cls() const { return 2; }
  int sep() const { return 3; }
  int size() const { return static_cast<int>(ordered_.size()); }
  const std::vector<std::string>& tokens() const { return ordered_; }

 private:
  std::vector<std::string> ordered_;
  std::map<std::string, int> index_;
};

// R x D block-feature matrix standing in for a fixed image backbone output.
struct VisualFeatureGrid {
  int rows = 0;  // R, default 49
  int dims = 0;  // D, default 2048
  std::vector<double> values;  // row-major, R*D

  double at(int r, int d) const { return values[std::size_t(r) * dims + d]; }
};

// Binary grid format: magic "VFT1", u32le R, u32le D, then R*D f32le row-major.
VisualFeatureGrid read_vfeat(const std::string& path);
void write_vfeat(const std::string& path, const VisualFeatureGrid& grid);

// Loads <image_id>.vfeat from dir; missing file yields an all-zero rows x dims
// grid and logs a warning to stderr.
VisualFeatureGrid load_visual_features(const std::string& image_id, const std::string& dir,
                                       int fallback_rows, int fallback_dims);

// Word + learned absolute position embeddings, with [CLS]/[SEP] framing.
// Output is d x (n+2); column 0 is [CLS], column n+1 is [SEP].
Tensor embed_tokens(const TokenSequence& seq, const Vocabulary& vocab, const Tensor& table,
                    const Tensor& position_table);

// V = W_u^T U, one column per visual block: output d x R.
Tensor project_visual(const VisualFeatureGrid& grid, const Tensor& w_u);

}  // namespace umner
