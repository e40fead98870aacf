#include "umner/attention.h"

#include <cmath>

#include "umner/error.h"

namespace umner {

namespace {

void check_heads(int d, int heads) {
  if (heads < 1 || d % heads != 0)
    throw shape_error("attention: head count " + std::to_string(heads) +
                      " must divide model dim " + std::to_string(d));
}

Tensor apply_drop(const Tensor& x, const DropoutEnv& drop) {
  if (!drop.train || drop.rate == 0.0 || drop.rng == nullptr) return x;
  return dropout(x, drop.rate, true, *drop.rng);
}

// Per-token layer norm on a d x tokens matrix (features down the rows).
Tensor ln_tokens(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  return transpose(layer_norm(transpose(x), gain, bias));
}

Tensor ffn(const Tensor& x, const AttentionParams& p, const DropoutEnv& drop) {
  Tensor h = relu(add_col_broadcast(matmul(p.ffn_w1, x), p.ffn_b1));
  h = apply_drop(h, drop);
  return add_col_broadcast(matmul(p.ffn_w2, h), p.ffn_b2);
}

}  // namespace

AttentionParams make_attention_params(ParameterMap& params, const std::string& prefix,
                                      int d, int heads, std::mt19937_64& rng) {
  check_heads(d, heads);
  int dh = d / heads;
  AttentionParams p;
  p.heads = heads;
  p.d = d;
  for (int i = 0; i < heads; ++i) {
    std::string h = prefix + ".head" + std::to_string(i);
    p.w_q.push_back(Tensor::xavier(dh, d, rng));
    p.w_k.push_back(Tensor::xavier(dh, d, rng));
    p.w_v.push_back(Tensor::xavier(dh, d, rng));
    params.add(h + ".w_q", p.w_q.back());
    params.add(h + ".w_k", p.w_k.back());
    params.add(h + ".w_v", p.w_v.back());
  }
  p.w_out = Tensor::xavier(d, d, rng);
  p.ffn_w1 = Tensor::xavier(4 * d, d, rng);
  p.ffn_b1 = Tensor::zeros({4 * d, 1}, true);
  p.ffn_w2 = Tensor::xavier(d, 4 * d, rng);
  p.ffn_b2 = Tensor::zeros({d, 1}, true);
  p.ln1_gain = Tensor::full({d}, 1.0, true);
  p.ln1_bias = Tensor::zeros({d}, true);
  p.ln2_gain = Tensor::full({d}, 1.0, true);
  p.ln2_bias = Tensor::zeros({d}, true);
  params.add(prefix + ".w_out", p.w_out);
  params.add(prefix + ".ffn_w1", p.ffn_w1);
  params.add(prefix + ".ffn_b1", p.ffn_b1);
  params.add(prefix + ".ffn_w2", p.ffn_w2);
  params.add(prefix + ".ffn_b2", p.ffn_b2);
  params.add(prefix + ".ln1_gain", p.ln1_gain);
  params.add(prefix + ".ln1_bias", p.ln1_bias);
  params.add(prefix + ".ln2_gain", p.ln2_gain);
  params.add(prefix + ".ln2_bias", p.ln2_bias);
  return p;
}

AttentionParams bind_attention_params(const ParameterMap& params, const std::string& prefix,
                                      int d, int heads) {
  check_heads(d, heads);
  AttentionParams p;
  p.heads = heads;
  p.d = d;
  for (int i = 0; i < heads; ++i) {
    std::string h = prefix + ".head" + std::to_string(i);
    p.w_q.push_back(params.get(h + ".w_q"));
    p.w_k.push_back(params.get(h + ".w_k"));
    p.w_v.push_back(params.get(h + ".w_v"));
  }
  p.w_out = params.get(prefix + ".w_out");
  p.ffn_w1 = params.get(prefix + ".ffn_w1");
  p.ffn_b1 = params.get(prefix + ".ffn_b1");
  p.ffn_w2 = params.get(prefix + ".ffn_w2");
  p.ffn_b2 = params.get(prefix + ".ffn_b2");
  p.ln1_gain = params.get(prefix + ".ln1_gain");
  p.ln1_bias = params.get(prefix + ".ln1_bias");
  p.ln2_gain = params.get(prefix + ".ln2_gain");
  p.ln2_bias = params.get(prefix + ".ln2_bias");
  return p;
}

Tensor mh_cross_attention(const Tensor& q_src, const Tensor& kv_src,
                          const AttentionParams& params, ForwardTrace* trace) {
  if (q_src.rows() != params.d || kv_src.rows() != params.d)
    throw shape_error("mh_cross_attention: stream dim " + std::to_string(q_src.rows()) +
                      "/" + std::to_string(kv_src.rows()) + " vs model dim " +
                      std::to_string(params.d));
  double inv_scale = 1.0 / std::sqrt(double(params.d) / params.heads);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(params.heads);
  for (int i = 0; i < params.heads; ++i) {
    Tensor q = matmul(params.w_q[i], q_src);    // (d/m) x p
    Tensor k = matmul(params.w_k[i], kv_src);   // (d/m) x q
    Tensor v = matmul(params.w_v[i], kv_src);   // (d/m) x q
    Tensor scores = scale(matmul(transpose(q), k), inv_scale);  // p x q
    Tensor weights = softmax_rows(scores);
    if (trace) {
      int p = weights.rows(), qn = weights.cols();
      for (int r = 0; r < p; ++r) {
        double s = 0.0;
        for (int c = 0; c < qn; ++c) s += weights.at(r, c);
        trace->softmax_row_sums.push_back(s);
      }
    }
    head_outputs.push_back(matmul(v, transpose(weights)));  // (d/m) x p
  }
  Tensor concat = head_outputs[0];
  for (std::size_t i = 1; i < head_outputs.size(); ++i)
    concat = concat_rows(concat, head_outputs[i]);  // d x p
  return matmul(params.w_out, concat);
}

Tensor cmt_layer(const Tensor& q_stream, const Tensor& kv_stream,
                 const AttentionParams& params, const DropoutEnv& drop,
                 ForwardTrace* trace) {
  Tensor attn = apply_drop(mh_cross_attention(q_stream, kv_stream, params, trace), drop);
  Tensor mid = ln_tokens(add(q_stream, attn), params.ln1_gain, params.ln1_bias);
  Tensor fed = apply_drop(ffn(mid, params, drop), drop);
  return ln_tokens(add(mid, fed), params.ln2_gain, params.ln2_bias);
}

Tensor self_attention_layer(const Tensor& c, const AttentionParams& params,
                            const DropoutEnv& drop, ForwardTrace* trace) {
  return cmt_layer(c, c, params, drop, trace);
}

ImageAwareOutputs image_aware_words(const Tensor& r, const Tensor& v,
                                    const AttentionParams& first,
                                    const AttentionParams& coupled,
                                    const DropoutEnv& drop, ForwardTrace* trace) {
  ImageAwareOutputs out;
  out.p = cmt_layer(v, r, first, drop, trace);
  out.a = cmt_layer(r, out.p, coupled, drop, trace);
  return out;
}

Tensor word_aware_visual(const Tensor& r, const Tensor& v, const AttentionParams& params,
                         const DropoutEnv& drop, ForwardTrace* trace) {
  return cmt_layer(r, v, params, drop, trace);
}

}  // namespace umner
