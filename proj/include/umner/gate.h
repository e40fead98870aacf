#pragma once

#include "umner/attention.h"
#include "umner/tensor.h"

namespace umner {

struct GateParams {
  Tensor w_a;  // d x d
  Tensor w_q;  // d x d
};

GateParams make_gate_params(ParameterMap& params, const std::string& prefix, int d,
                            std::mt19937_64& rng);
GateParams bind_gate_params(const ParameterMap& params, const std::string& prefix);

// g = sigmoid(W_a^T A + W_q^T Qv); entries strictly in (0, 1). No bias term,
// so zero weights give g == 0.5.
Tensor visual_gate(const Tensor& a, const Tensor& qv, const GateParams& p,
                   ForwardTrace* trace = nullptr);

// B = g (Hadamard) Qv
Tensor apply_gate(const Tensor& g, const Tensor& qv);

// h_i = Concat(a_i, b_i): output 2d x tokens.
Tensor fuse(const Tensor& a, const Tensor& b);

}  // namespace umner
