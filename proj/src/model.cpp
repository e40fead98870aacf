#include "umner/model.h"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>

#include "umner/error.h"

namespace umner {

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw format_error(path + ": truncated checkpoint");
  return uint32_t(buf[0]) | uint32_t(buf[1]) << 8 | uint32_t(buf[2]) << 16 |
         uint32_t(buf[3]) << 24;
}

void write_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(buf), 8);
}

double read_f64(std::istream& in, const std::string& path) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw format_error(path + ": truncated checkpoint");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= uint64_t(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

Tensor ones_row(int n) { return Tensor::full({1, n}, 1.0); }

}  // namespace

void ModelConfig::validate() const {
  if (d < 2) throw config_error("d must be >= 2");
  if (heads < 1 || d % heads != 0)
    throw config_error("heads (" + std::to_string(heads) + ") must divide d (" +
                       std::to_string(d) + ")");
  if (lstm_hidden < 1) throw config_error("lstm_hidden must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0, 1)");
  if (max_length < 2) throw config_error("max_length must be >= 2");
  if (visual_rows < 1 || visual_dims < 1)
    throw config_error("visual grid dimensions must be positive");
  if (batch_size < 1) throw config_error("batch_size must be positive");
}

std::vector<double> ModelConfig::pack() const {
  return {double(d),
          double(heads),
          double(lstm_hidden),
          double(vocab_size),
          double(visual_rows),
          double(visual_dims),
          dropout,
          double(max_length),
          learning_rate,
          double(batch_size),
          double(epochs),
          double(seed),
          use_self_attention ? 1.0 : 0.0,
          use_cross_modal ? 1.0 : 0.0,
          use_visual_gate ? 1.0 : 0.0,
          text_only ? 1.0 : 0.0,
          bio_mask ? 1.0 : 0.0};
}

ModelConfig ModelConfig::unpack(const std::vector<double>& v) {
  if (v.size() != 17) throw format_error("checkpoint config block has wrong length");
  ModelConfig c;
  c.d = int(v[0]);
  c.heads = int(v[1]);
  c.lstm_hidden = int(v[2]);
  c.vocab_size = int(v[3]);
  c.visual_rows = int(v[4]);
  c.visual_dims = int(v[5]);
  c.dropout = v[6];
  c.max_length = int(v[7]);
  c.learning_rate = v[8];
  c.batch_size = int(v[9]);
  c.epochs = int(v[10]);
  c.seed = (unsigned long long)(v[11]);
  c.use_self_attention = v[12] != 0.0;
  c.use_cross_modal = v[13] != 0.0;
  c.use_visual_gate = v[14] != 0.0;
  c.text_only = v[15] != 0.0;
  c.bio_mask = v[16] != 0.0;
  return c;
}

UmnerModel::UmnerModel(ModelConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.vocab_size = vocab_.size();
  config_.validate();
  std::mt19937_64 init_rng(config_.seed);
  allocate(true, init_rng);
  rng_.seed(config_.seed + 1);
}

UmnerModel::UmnerModel(ModelConfig config, Vocabulary vocab, BindOnly)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  rng_.seed(config_.seed + 1);
}

void UmnerModel::allocate(bool fresh, std::mt19937_64& rng) {
  const int d = config_.d;
  // embeddings: U(-0.1, 0.1) words, learned absolute positions
  if (fresh) {
    embedding_ = Tensor::uniform({config_.vocab_size, d}, 0.1, rng);
    positions_ = Tensor::uniform({config_.max_length + 2, d}, 0.1, rng);
    params_.add("embed.table", embedding_);
    params_.add("embed.positions", positions_);
  } else {
    embedding_ = params_.get("embed.table");
    positions_ = params_.get("embed.positions");
  }

  if (config_.use_self_attention) {
    sa_ = fresh ? make_attention_params(params_, "self_attn", d, config_.heads, rng)
                : bind_attention_params(params_, "self_attn", d, config_.heads);
  }

  if (!config_.text_only) {
    if (fresh) {
      w_u_ = Tensor::xavier(config_.visual_dims, d, rng);
      params_.add("visual.w_u", w_u_);
    } else {
      w_u_ = params_.get("visual.w_u");
    }
    if (config_.use_cross_modal) {
      if (fresh) {
        cmt_first_ = make_attention_params(params_, "cmt_first", d, config_.heads, rng);
        cmt_coupled_ = make_attention_params(params_, "cmt_coupled", d, config_.heads, rng);
        cmt_word_visual_ =
            make_attention_params(params_, "cmt_word_visual", d, config_.heads, rng);
      } else {
        cmt_first_ = bind_attention_params(params_, "cmt_first", d, config_.heads);
        cmt_coupled_ = bind_attention_params(params_, "cmt_coupled", d, config_.heads);
        cmt_word_visual_ = bind_attention_params(params_, "cmt_word_visual", d, config_.heads);
      }
    }
    if (config_.use_visual_gate) {
      gate_ = fresh ? make_gate_params(params_, "gate", d, rng)
                    : bind_gate_params(params_, "gate");
    }
  }

  lstm_ = fresh ? make_lstm_params(params_, "bilstm", 2 * d, config_.lstm_hidden, rng)
                : bind_lstm_params(params_, "bilstm", 2 * d, config_.lstm_hidden);
  crf_ = fresh ? make_crf_params(params_, "crf", kNumTags, 2 * config_.lstm_hidden, rng)
               : bind_crf_params(params_, "crf", kNumTags, 2 * config_.lstm_hidden);
  if (config_.bio_mask) crf_.forbidden = bio_hard_mask(kNumTags);
}

TokenSequence UmnerModel::truncated(const TokenSequence& seq) const {
  if (int(seq.tokens.size()) <= config_.max_length) return seq;
  std::cerr << "warning: truncating sentence of " << seq.tokens.size() << " tokens to "
            << config_.max_length << "\n";
  TokenSequence t = seq;
  t.tokens.resize(config_.max_length);
  if (!t.labels.empty()) t.labels.resize(config_.max_length);
  return t;
}

Tensor UmnerModel::forward(const TokenSequence& raw, const VisualFeatureGrid& grid,
                           RunMode mode, ForwardTrace* trace) {
  TokenSequence seq = truncated(raw);
  DropoutEnv drop{config_.dropout, mode == RunMode::Train, &rng_};

  Tensor c = embed_tokens(seq, vocab_, embedding_, positions_);
  if (drop.train && drop.rate > 0.0) c = dropout(c, drop.rate, true, rng_);

  Tensor r = config_.use_self_attention ? self_attention_layer(c, *sa_, drop, trace) : c;

  Tensor h;
  if (config_.text_only) {
    h = fuse(r, Tensor::zeros({config_.d, r.cols()}));
  } else {
    if (grid.rows != config_.visual_rows || grid.dims != config_.visual_dims)
      throw shape_error("forward: visual grid " + std::to_string(grid.rows) + "x" +
                        std::to_string(grid.dims) + " vs configured " +
                        std::to_string(config_.visual_rows) + "x" +
                        std::to_string(config_.visual_dims));
    Tensor v = project_visual(grid, w_u_);
    Tensor a, qv;
    if (config_.use_cross_modal) {
      ImageAwareOutputs ia = image_aware_words(r, v, *cmt_first_, *cmt_coupled_, drop, trace);
      a = ia.a;
      qv = word_aware_visual(r, v, *cmt_word_visual_, drop, trace);
    } else {
      a = r;
      // per-token broadcast of the mean-pooled projected visual columns
      Tensor mean = scale(matmul(v, Tensor::full({v.cols(), 1}, 1.0)), 1.0 / v.cols());
      qv = matmul(mean, ones_row(r.cols()));
    }
    Tensor b;
    if (config_.use_visual_gate) {
      Tensor g = visual_gate(a, qv, *gate_, trace);
      b = apply_gate(g, qv);
    } else {
      b = qv;  // g == 1
    }
    h = fuse(a, b);
  }

  Tensor hidden = bilstm_forward(h, lstm_);
  return emissions(hidden, crf_);
}

std::vector<int> UmnerModel::gold_indices(const TokenSequence& seq) const {
  std::vector<int> y;
  y.reserve(seq.labels.size());
  for (const auto& l : seq.labels) y.push_back(tag_index(l));
  return y;
}

Tensor UmnerModel::sentence_nll(const TokenSequence& raw, const VisualFeatureGrid& grid,
                                RunMode mode) {
  TokenSequence seq = truncated(raw);
  if (seq.labels.size() != seq.tokens.size())
    throw contract_error("sentence_nll: sentence has no gold labels");
  Tensor e = forward(seq, grid, mode);
  return crf_nll(e, crf_, gold_indices(seq));
}

Tensor UmnerModel::batch_loss(const std::vector<const TokenSequence*>& seqs,
                              const std::vector<const VisualFeatureGrid*>& grids,
                              RunMode mode) {
  if (seqs.empty() || seqs.size() != grids.size())
    throw contract_error("batch_loss: empty or misaligned batch");
  Tensor total;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    Tensor nll = sentence_nll(*seqs[i], *grids[i], mode);
    total = i == 0 ? nll : add(total, nll);
  }
  return scale(total, 1.0 / double(seqs.size()));
}

std::vector<std::string> UmnerModel::predict_labels(const TokenSequence& seq,
                                                    const VisualFeatureGrid& grid) {
  Tensor e = forward(seq, grid, RunMode::Eval);
  std::vector<int> y = viterbi_decode(e, crf_);
  std::vector<std::string> out;
  out.reserve(y.size());
  for (int l : y) out.push_back(tag_set()[l]);
  // truncated tail, if any, falls back to O
  while (out.size() < seq.tokens.size()) out.push_back("O");
  return out;
}

// ---- checkpoint ----

void write_checkpoint_file(const std::string& path,
                           const std::vector<CheckpointTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path + ": cannot open for writing");
  out.write("UMNR", 4);
  write_u32(out, 1);  // version
  write_u32(out, uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    write_u32(out, uint32_t(t.name.size()));
    out.write(t.name.data(), std::streamsize(t.name.size()));
    write_u32(out, uint32_t(t.shape.size()));
    for (int d : t.shape) write_u32(out, uint32_t(d));
    for (double v : t.values) write_f64(out, v);
  }
  if (!out) throw io_error(path + ": write failed");
}

std::vector<CheckpointTensor> read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "UMNR", 4) != 0)
    throw format_error(path + ": bad checkpoint magic (expected UMNR)");
  uint32_t version = read_u32(in, path);
  if (version != 1)
    throw format_error(path + ": unsupported checkpoint version " + std::to_string(version));
  uint32_t count = read_u32(in, path);
  std::vector<CheckpointTensor> tensors(count);
  for (auto& t : tensors) {
    uint32_t name_len = read_u32(in, path);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (!in) throw format_error(path + ": truncated checkpoint");
    uint32_t rank = read_u32(in, path);
    std::size_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint32_t dim = read_u32(in, path);
      t.shape.push_back(int(dim));
      n *= dim;
    }
    t.values.resize(n);
    for (auto& v : t.values) v = read_f64(in, path);
  }
  return tensors;
}

void UmnerModel::save_checkpoint(const std::string& path) const {
  std::vector<CheckpointTensor> tensors;
  {
    CheckpointTensor meta;
    meta.name = "meta.config";
    meta.values = config_.pack();
    meta.shape = {int(meta.values.size())};
    tensors.push_back(std::move(meta));
  }
  {
    // vocabulary as newline-joined UTF-8 bytes
    CheckpointTensor meta;
    meta.name = "meta.vocab";
    std::string joined;
    for (const auto& tok : vocab_.tokens()) {
      joined += tok;
      joined += '\n';
    }
    meta.values.reserve(joined.size());
    for (unsigned char ch : joined) meta.values.push_back(double(ch));
    meta.shape = {int(meta.values.size())};
    tensors.push_back(std::move(meta));
  }
  for (const auto& name : params_.names()) {
    const Tensor& t = params_.get(name);
    tensors.push_back({name, t.shape(), t.values()});
  }
  write_checkpoint_file(path, tensors);
}

UmnerModel UmnerModel::load_checkpoint(const std::string& path) {
  auto tensors = read_checkpoint_file(path);
  ModelConfig config;
  std::vector<std::string> vocab_tokens;
  bool have_config = false, have_vocab = false;
  for (const auto& t : tensors) {
    if (t.name == "meta.config") {
      config = ModelConfig::unpack(t.values);
      have_config = true;
    } else if (t.name == "meta.vocab") {
      std::string joined;
      joined.reserve(t.values.size());
      for (double v : t.values) joined += char(int(v));
      std::string cur;
      for (char ch : joined) {
        if (ch == '\n') {
          vocab_tokens.push_back(cur);
          cur.clear();
        } else {
          cur += ch;
        }
      }
      have_vocab = true;
    }
  }
  if (!have_config || !have_vocab)
    throw format_error(path + ": checkpoint lacks meta.config/meta.vocab entries");

  UmnerModel model(config, Vocabulary(vocab_tokens), BindOnly{});
  for (const auto& t : tensors) {
    if (t.name == "meta.config" || t.name == "meta.vocab") continue;
    model.params_.add(t.name, Tensor::from_values(t.shape, t.values, true));
  }
  std::mt19937_64 unused(0);
  model.allocate(false, unused);
  return model;
}

}  // namespace umner
