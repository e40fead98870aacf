#include "umner/features.h"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "umner/error.h"

namespace umner {

namespace {

const std::vector<std::string> kReserved = {Vocabulary::kPad, Vocabulary::kUnk,
                                            Vocabulary::kCls, Vocabulary::kSep};

uint32_t read_u32le(std::istream& in, const std::string& path, std::size_t offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in)
    throw format_error(path + ": truncated at byte offset " + std::to_string(offset));
  return uint32_t(buf[0]) | uint32_t(buf[1]) << 8 | uint32_t(buf[2]) << 16 |
         uint32_t(buf[3]) << 24;
}

void write_u32le(std::ostream& out, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(kReserved) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens_in_order) {
  for (std::size_t i = 0; i < kReserved.size(); ++i)
    if (i >= tokens_in_order.size() || tokens_in_order[i] != kReserved[i])
      throw contract_error("vocabulary must start with the reserved tokens");
  ordered_ = tokens_in_order;
  for (std::size_t i = 0; i < ordered_.size(); ++i) {
    if (!index_.emplace(ordered_[i], int(i)).second)
      throw contract_error("duplicate vocabulary token: " + ordered_[i]);
  }
}

Vocabulary Vocabulary::build(const std::vector<TokenSequence>& data) {
  std::vector<std::string> ordered = kReserved;
  std::map<std::string, int> seen;
  for (const auto& r : kReserved) seen[r] = 1;
  for (const auto& seq : data)
    for (const auto& tok : seq.tokens)
      if (seen.emplace(tok, 1).second) ordered.push_back(tok);
  return Vocabulary(ordered);
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk() : it->second;
}

VisualFeatureGrid read_vfeat(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "VFT1", 4) != 0)
    throw format_error(path + ": bad magic at byte offset 0 (expected VFT1)");
  VisualFeatureGrid grid;
  grid.rows = int(read_u32le(in, path, 4));
  grid.dims = int(read_u32le(in, path, 8));
  if (grid.rows < 1 || grid.dims < 1)
    throw format_error(path + ": non-positive grid dimensions in header");
  std::size_t count = std::size_t(grid.rows) * grid.dims;
  grid.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in)
      throw format_error(path + ": truncated payload at byte offset " +
                         std::to_string(12 + i * 4));
    uint32_t bits = uint32_t(buf[0]) | uint32_t(buf[1]) << 8 | uint32_t(buf[2]) << 16 |
                    uint32_t(buf[3]) << 24;
    float f;
    std::memcpy(&f, &bits, 4);
    grid.values[i] = double(f);
  }
  return grid;
}

void write_vfeat(const std::string& path, const VisualFeatureGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path + ": cannot open for writing");
  out.write("VFT1", 4);
  write_u32le(out, uint32_t(grid.rows));
  write_u32le(out, uint32_t(grid.dims));
  for (double v : grid.values) {
    float f = float(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32le(out, bits);
  }
  if (!out) throw io_error(path + ": write failed");
}

VisualFeatureGrid load_visual_features(const std::string& image_id, const std::string& dir,
                                       int fallback_rows, int fallback_dims) {
  std::filesystem::path p = std::filesystem::path(dir) / (image_id + ".vfeat");
  if (!std::filesystem::exists(p)) {
    std::cerr << "warning: missing visual features for image '" << image_id
              << "', using zero grid\n";
    VisualFeatureGrid grid;
    grid.rows = fallback_rows;
    grid.dims = fallback_dims;
    grid.values.assign(std::size_t(fallback_rows) * fallback_dims, 0.0);
    return grid;
  }
  return read_vfeat(p.string());
}

Tensor embed_tokens(const TokenSequence& seq, const Vocabulary& vocab, const Tensor& table,
                    const Tensor& position_table) {
  if (seq.tokens.empty()) throw contract_error("embed_tokens: empty sentence");
  int n = int(seq.tokens.size());
  int d = table.cols();
  if (table.rows() != vocab.size())
    throw shape_error("embed_tokens: table rows " + std::to_string(table.rows()) +
                      " vs vocabulary size " + std::to_string(vocab.size()));
  if (position_table.cols() != d || position_table.rows() < n + 2)
    throw shape_error("embed_tokens: position table too small for sentence length " +
                      std::to_string(n));

  std::vector<int> ids;
  ids.reserve(n + 2);
  ids.push_back(vocab.cls());
  for (const auto& tok : seq.tokens) ids.push_back(vocab.index_of(tok));
  ids.push_back(vocab.sep());

  int cols = n + 2;
  std::vector<double> out(std::size_t(d) * cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < d; ++i)
      out[std::size_t(i) * cols + j] = table.at(ids[j], i) + position_table.at(j, i);

  auto tn = table.node();
  auto pn = position_table.node();
  auto result = std::make_shared<Tensor::Node>();
  result->shape = {d, cols};
  result->data = std::move(out);
  result->requires_grad = table.requires_grad() || position_table.requires_grad();
  if (result->requires_grad) {
    result->grad.assign(result->data.size(), 0.0);
    result->parents = {tn, pn};
    result->backward = [tn, pn, ids, d, cols](Tensor::Node& self) {
      for (int j = 0; j < cols; ++j)
        for (int i = 0; i < d; ++i) {
          double g = self.grad[std::size_t(i) * cols + j];
          if (tn->requires_grad) tn->grad[std::size_t(ids[j]) * d + i] += g;
          if (pn->requires_grad) pn->grad[std::size_t(j) * d + i] += g;
        }
    };
  }
  return Tensor(result);
}

Tensor project_visual(const VisualFeatureGrid& grid, const Tensor& w_u) {
  if (w_u.rows() != grid.dims)
    throw shape_error("project_visual: grid dims " + std::to_string(grid.dims) +
                      " vs projection rows " + std::to_string(w_u.rows()));
  // V column i = w_u^T u_i, i.e. V = w_u^T U^T with U as R x D.
  Tensor u = Tensor::from_values({grid.rows, grid.dims}, grid.values);
  return matmul(transpose(w_u), transpose(u));
}

}  // namespace umner
