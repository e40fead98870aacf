#include "umner/gate.h"

#include <algorithm>

#include "umner/error.h"

namespace umner {

GateParams make_gate_params(ParameterMap& params, const std::string& prefix, int d,
                            std::mt19937_64& rng) {
  GateParams p;
  p.w_a = Tensor::xavier(d, d, rng);
  p.w_q = Tensor::xavier(d, d, rng);
  params.add(prefix + ".w_a", p.w_a);
  params.add(prefix + ".w_q", p.w_q);
  return p;
}

GateParams bind_gate_params(const ParameterMap& params, const std::string& prefix) {
  GateParams p;
  p.w_a = params.get(prefix + ".w_a");
  p.w_q = params.get(prefix + ".w_q");
  return p;
}

Tensor visual_gate(const Tensor& a, const Tensor& qv, const GateParams& p,
                   ForwardTrace* trace) {
  if (a.shape() != qv.shape())
    throw shape_error("visual_gate: A and Qv shapes differ");
  Tensor pre = add(matmul(transpose(p.w_a), a), matmul(transpose(p.w_q), qv));
  Tensor g = sigmoid(pre);
  if (trace) {
    for (double x : g.values()) {
      trace->gate_min = std::min(trace->gate_min, x);
      trace->gate_max = std::max(trace->gate_max, x);
    }
    trace->gate_seen = true;
  }
  return g;
}

Tensor apply_gate(const Tensor& g, const Tensor& qv) {
  if (g.shape() != qv.shape()) throw shape_error("apply_gate: shape mismatch");
  return mul(g, qv);
}

Tensor fuse(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw shape_error("fuse: token counts differ, " + std::to_string(a.cols()) + " vs " +
                      std::to_string(b.cols()));
  return concat_rows(a, b);
}

}  // namespace umner
