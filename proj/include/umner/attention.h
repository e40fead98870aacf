#pragma once

#include <string>
#include <vector>

#include "umner/tensor.h"

namespace umner {

// Per-layer attention weights: m heads of (d/m x d) query/key/value
// projections, a d x d output projection, a d -> 4d -> d FFN, and two
// layer-norm gain/bias pairs.
struct AttentionParams {
  int heads = 0;
  int d = 0;
  std::vector<Tensor> w_q;  // per head, (d/m) x d
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
  Tensor w_out;             // d x d
  Tensor ffn_w1;            // 4d x d
  Tensor ffn_b1;            // 4d x 1
  Tensor ffn_w2;            // d x 4d
  Tensor ffn_b2;            // d x 1
  Tensor ln1_gain, ln1_bias;  // d
  Tensor ln2_gain, ln2_bias;  // d
};

// Creates a parameter set and registers every tensor under `prefix.` names.
AttentionParams make_attention_params(ParameterMap& params, const std::string& prefix,
                                      int d, int heads, std::mt19937_64& rng);

// Rebinds an AttentionParams view onto tensors already present in `params`.
AttentionParams bind_attention_params(const ParameterMap& params, const std::string& prefix,
                                      int d, int heads);

// Instrumentation for normalization/bound invariants on live forward passes.
struct ForwardTrace {
  std::vector<double> softmax_row_sums;
  double gate_min = 1.0;
  double gate_max = 0.0;
  bool gate_seen = false;
};

struct DropoutEnv {
  double rate = 0.0;
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

// Multi-head cross-modal attention: queries from q_src (d x p), keys/values
// from kv_src (d x q); per-head softmax over the kv axis, heads concatenated
// and projected. Output d x p.
Tensor mh_cross_attention(const Tensor& q_src, const Tensor& kv_src,
                          const AttentionParams& params, ForwardTrace* trace = nullptr);

// LN(q + MH-CA(q, kv)) then LN(. + FFN(.)), residuals on the query stream.
Tensor cmt_layer(const Tensor& q_stream, const Tensor& kv_stream,
                 const AttentionParams& params, const DropoutEnv& drop = {},
                 ForwardTrace* trace = nullptr);

// Self-attention transformer layer: same skeleton with Q = K = V source.
Tensor self_attention_layer(const Tensor& c, const AttentionParams& params,
                            const DropoutEnv& drop = {}, ForwardTrace* trace = nullptr);

// Coupled pass: P = cmt(V, R), then A = cmt(R, P). Returns {A, P}.
struct ImageAwareOutputs {
  Tensor a;  // d x (n+2)
  Tensor p;  // d x blocks
};
ImageAwareOutputs image_aware_words(const Tensor& r, const Tensor& v,
                                    const AttentionParams& first,
                                    const AttentionParams& coupled,
                                    const DropoutEnv& drop = {},
                                    ForwardTrace* trace = nullptr);

// Qv = cmt(R, V): per-token summaries of the most relevant visual blocks.
Tensor word_aware_visual(const Tensor& r, const Tensor& v, const AttentionParams& params,
                         const DropoutEnv& drop = {}, ForwardTrace* trace = nullptr);

}  // namespace umner
