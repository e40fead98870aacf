#include "umner/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace umner {

namespace testing_hooks {
bool corrupt_matmul_backward = false;
}

namespace {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw shape_error("tensor dimensions must be positive");
    n *= std::size_t(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

std::shared_ptr<Tensor::Node> make_node(std::vector<int> shape, std::vector<double> data,
                                        bool requires_grad) {
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->data.size(), 0.0);
  return n;
}

// Result node whose requires_grad is inherited from its parents.
std::shared_ptr<Tensor::Node> make_result(std::vector<int> shape, std::vector<double> data,
                                          std::vector<std::shared_ptr<Tensor::Node>> parents,
                                          std::function<void(Tensor::Node&)> bw) {
  bool track = false;
  for (const auto& p : parents) track = track || p->requires_grad;
  auto n = make_node(std::move(shape), std::move(data), track);
  if (track) {
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::size_t n = shape_product(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  std::size_t n = shape_product(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_product(shape) != values.size())
    throw shape_error("from_values: data length " + std::to_string(values.size()) +
                      " does not match shape " + shape_str(shape));
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(std::vector<int> shape, double limit, std::mt19937_64& rng,
                       bool requires_grad) {
  std::size_t n = shape_product(shape);
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> data(n);
  for (auto& x : data) x = dist(rng);
  return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::xavier(int rows, int cols, std::mt19937_64& rng, bool requires_grad) {
  double limit = std::sqrt(6.0 / double(rows + cols));
  return uniform({rows, cols}, limit, rng, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw contract_error("item(): tensor is not scalar, size " +
                                        std::to_string(size()));
  return node_->data[0];
}

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(std::size_t(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = av[std::size_t(i) * k + p];
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j)
        out[std::size_t(i) * n + j] += aip * bv[std::size_t(p) * n + j];
    }
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_result(
      {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](Tensor::Node& self) {
        const auto& g = self.grad;
        double fudge = testing_hooks::corrupt_matmul_backward ? 1.01 : 1.0;
        if (an->requires_grad) {
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              double acc = 0.0;
              for (int j = 0; j < n; ++j)
                acc += g[std::size_t(i) * n + j] * bn->data[std::size_t(p) * n + j];
              an->grad[std::size_t(i) * k + p] += fudge * acc;
            }
        }
        if (bn->requires_grad) {
          for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j) {
              double acc = 0.0;
              for (int i = 0; i < m; ++i)
                acc += an->data[std::size_t(i) * k + p] * g[std::size_t(i) * n + j];
              bn->grad[std::size_t(p) * n + j] += acc;
            }
        }
      }));
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw shape_error("transpose: rank-2 tensor required");
  int m = a.rows(), n = a.cols();
  std::vector<double> out(std::size_t(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[std::size_t(j) * m + i] = a.at(i, j);
  auto an = a.node();
  return Tensor(make_result({n, m}, std::move(out), {an}, [an, m, n](Tensor::Node& self) {
    if (!an->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        an->grad[std::size_t(i) * n + j] += self.grad[std::size_t(j) * m + i];
  }));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_result(a.shape(), std::move(out), {an, bn}, [an, bn](Tensor::Node& self) {
    for (std::size_t i = 0; i < self.size(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i];
      if (bn->requires_grad) bn->grad[i] += self.grad[i];
    }
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_result(a.shape(), std::move(out), {an, bn}, [an, bn](Tensor::Node& self) {
    for (std::size_t i = 0; i < self.size(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i];
      if (bn->requires_grad) bn->grad[i] -= self.grad[i];
    }
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_result(a.shape(), std::move(out), {an, bn}, [an, bn](Tensor::Node& self) {
    for (std::size_t i = 0; i < self.size(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i] * bn->data[i];
      if (bn->requires_grad) bn->grad[i] += self.grad[i] * an->data[i];
    }
  }));
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  auto an = a.node();
  return Tensor(make_result(a.shape(), std::move(out), {an}, [an, s](Tensor::Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * s;
  }));
}

Tensor add_col_broadcast(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rows() != a.rows() || b.cols() != 1)
    throw shape_error("add_col_broadcast: " + shape_str(a.shape()) + " + " +
                      shape_str(b.shape()));
  int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[std::size_t(i) * n + j] = a.at(i, j) + b.at(i);
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_result({m, n}, std::move(out), {an, bn}, [an, bn, m, n](Tensor::Node& self) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double g = self.grad[std::size_t(i) * n + j];
        if (an->requires_grad) an->grad[std::size_t(i) * n + j] += g;
        if (bn->requires_grad) bn->grad[i] += g;
      }
  }));
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  if (top.rank() != 2 || bottom.rank() != 2 || top.cols() != bottom.cols())
    throw shape_error("concat_rows: column mismatch " + shape_str(top.shape()) + " / " +
                      shape_str(bottom.shape()));
  int m1 = top.rows(), m2 = bottom.rows(), n = top.cols();
  std::vector<double> out;
  out.reserve(top.size() + bottom.size());
  out.insert(out.end(), top.values().begin(), top.values().end());
  out.insert(out.end(), bottom.values().begin(), bottom.values().end());
  auto tn = top.node();
  auto bn = bottom.node();
  return Tensor(make_result({m1 + m2, n}, std::move(out), {tn, bn},
                            [tn, bn, m1, m2, n](Tensor::Node& self) {
    std::size_t split = std::size_t(m1) * n;
    if (tn->requires_grad)
      for (std::size_t i = 0; i < split; ++i) tn->grad[i] += self.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < std::size_t(m2) * n; ++i)
        bn->grad[i] += self.grad[split + i];
  }));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw contract_error("concat_cols: empty part list");
  int m = parts.front().rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != m)
      throw shape_error("concat_cols: row mismatch");
    total += p.cols();
  }
  std::vector<double> out(std::size_t(m) * total);
  std::vector<std::shared_ptr<Tensor::Node>> nodes;
  int off = 0;
  for (const auto& p : parts) {
    int pc = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < pc; ++j)
        out[std::size_t(i) * total + off + j] = p.at(i, j);
    nodes.push_back(p.node());
    off += pc;
  }
  return Tensor(make_result({m, total}, std::move(out), nodes,
                            [nodes, m, total](Tensor::Node& self) {
    int off = 0;
    for (const auto& pn : nodes) {
      int pc = pn->shape[1];
      if (pn->requires_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < pc; ++j)
            pn->grad[std::size_t(i) * pc + j] +=
                self.grad[std::size_t(i) * total + off + j];
      off += pc;
    }
  }));
}

Tensor slice_cols(const Tensor& a, int start, int count) {
  if (a.rank() != 2 || start < 0 || count < 1 || start + count > a.cols())
    throw shape_error("slice_cols: range [" + std::to_string(start) + ", " +
                      std::to_string(start + count) + ") out of " + shape_str(a.shape()));
  int m = a.rows(), n = a.cols();
  std::vector<double> out(std::size_t(m) * count);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j)
      out[std::size_t(i) * count + j] = a.at(i, start + j);
  auto an = a.node();
  return Tensor(make_result({m, count}, std::move(out), {an},
                            [an, m, n, start, count](Tensor::Node& self) {
    if (!an->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < count; ++j)
        an->grad[std::size_t(i) * n + start + j] += self.grad[std::size_t(i) * count + j];
  }));
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto an = a.node();
  return Tensor(make_result({1}, {s}, {an}, [an](Tensor::Node& self) {
    if (!an->requires_grad) return;
    for (auto& g : an->grad) g += self.grad[0];
  }));
}

Tensor elementwise(const Tensor& a, Activation fn) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.values()[i];
    switch (fn) {
      case Activation::Sigmoid: out[i] = 1.0 / (1.0 + std::exp(-x)); break;
      case Activation::Tanh: out[i] = std::tanh(x); break;
      case Activation::Relu: out[i] = x > 0.0 ? x : 0.0; break;
    }
  }
  auto an = a.node();
  return Tensor(make_result(a.shape(), std::move(out), {an}, [an, fn](Tensor::Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < self.size(); ++i) {
      double y = self.data[i];
      double d = 0.0;
      switch (fn) {
        case Activation::Sigmoid: d = y * (1.0 - y); break;
        case Activation::Tanh: d = 1.0 - y * y; break;
        case Activation::Relu: d = an->data[i] > 0.0 ? 1.0 : 0.0; break;
      }
      an->grad[i] += self.grad[i] * d;
    }
  }));
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) throw shape_error("softmax_rows: rank-2 tensor required");
  int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(a.at(i, j) - mx);
      out[std::size_t(i) * n + j] = e;
      z += e;
    }
    for (int j = 0; j < n; ++j) out[std::size_t(i) * n + j] /= z;
  }
  auto an = a.node();
  return Tensor(make_result({m, n}, std::move(out), {an}, [an, m, n](Tensor::Node& self) {
    if (!an->requires_grad) return;
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j)
        dot += self.grad[std::size_t(i) * n + j] * self.data[std::size_t(i) * n + j];
      for (int j = 0; j < n; ++j) {
        double y = self.data[std::size_t(i) * n + j];
        an->grad[std::size_t(i) * n + j] += y * (self.grad[std::size_t(i) * n + j] - dot);
      }
    }
  }));
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (a.rank() != 2) throw shape_error("layer_norm: rank-2 tensor required");
  int m = a.rows(), n = a.cols();
  if (n < 2) throw contract_error("layer_norm: row length must be >= 2");
  if (eps <= 0.0) throw contract_error("layer_norm: eps must be positive");
  if (int(gain.size()) != n || int(bias.size()) != n)
    throw shape_error("layer_norm: gain/bias length " + std::to_string(gain.size()) + "/" +
                      std::to_string(bias.size()) + " vs row length " + std::to_string(n));
  std::vector<double> out(a.size());
  std::vector<double> means(m), istds(m);
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += a.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = a.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    double istd = 1.0 / std::sqrt(var + eps);
    means[i] = mean;
    istds[i] = istd;
    for (int j = 0; j < n; ++j)
      out[std::size_t(i) * n + j] = (a.at(i, j) - mean) * istd * gain.at(j) + bias.at(j);
  }
  auto an = a.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return Tensor(make_result({m, n}, std::move(out), {an, gn, bn},
                            [an, gn, bn, m, n, means, istds](Tensor::Node& self) {
    for (int i = 0; i < m; ++i) {
      double mean = means[i], istd = istds[i];
      // xhat_j = (x_j - mean) * istd
      double g_dot_xhat = 0.0, g_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        double xhat = (an->data[std::size_t(i) * n + j] - mean) * istd;
        double gy = self.grad[std::size_t(i) * n + j] * gn->data[j];
        g_dot_xhat += gy * xhat;
        g_sum += gy;
        if (gn->requires_grad) gn->grad[j] += self.grad[std::size_t(i) * n + j] * xhat;
        if (bn->requires_grad) bn->grad[j] += self.grad[std::size_t(i) * n + j];
      }
      if (an->requires_grad) {
        for (int j = 0; j < n; ++j) {
          double xhat = (an->data[std::size_t(i) * n + j] - mean) * istd;
          double gy = self.grad[std::size_t(i) * n + j] * gn->data[j];
          an->grad[std::size_t(i) * n + j] +=
              istd * (gy - g_sum / n - xhat * g_dot_xhat / n);
        }
      }
    }
  }));
}

Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw contract_error("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double keep = 1.0 - rate;
  std::vector<double> mask(a.size());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = dist(rng) < keep ? 1.0 / keep : 0.0;
    out[i] = a.values()[i] * mask[i];
  }
  auto an = a.node();
  return Tensor(make_result(a.shape(), std::move(out), {an},
                            [an, mask = std::move(mask)](Tensor::Node& self) {
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * mask[i];
  }));
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw contract_error("backward: loss must be scalar, got size " +
                         std::to_string(loss.size()));
  auto root = loss.node();
  if (!root->requires_grad) return;

  // iterative post-order topological sort
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> visited;
  std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    Tensor::Node* node = stack.back().first;
    std::size_t idx = stack.back().second;
    if (idx < node->parents.size()) {
      stack.back().second++;
      Tensor::Node* p = node->parents[idx].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, std::size_t(0));
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

// ---- ParameterMap / Adam ----

void ParameterMap::add(const std::string& name, Tensor t) {
  if (by_name_.count(name)) throw contract_error("duplicate parameter name: " + name);
  names_.push_back(name);
  by_name_.emplace(name, std::move(t));
}

Tensor& ParameterMap::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw contract_error("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterMap::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw contract_error("unknown parameter: " + name);
  return it->second;
}

bool ParameterMap::contains(const std::string& name) const { return by_name_.count(name) > 0; }

void ParameterMap::zero_grad() {
  for (const auto& n : names_) get(n).zero_grad();
}

std::size_t ParameterMap::scalar_count() const {
  std::size_t total = 0;
  for (const auto& n : names_) total += get(n).size();
  return total;
}

AdamOptimizer::AdamOptimizer(ParameterMap& params, AdamConfig cfg)
    : params_(params), cfg_(cfg) {
  for (const auto& name : params.names()) {
    std::size_t sz = params.get(name).size();
    m_[name].assign(sz, 0.0);
    v_[name].assign(sz, 0.0);
  }
}

void AdamOptimizer::step() {
  ++step_count_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_count_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_count_));
  for (const auto& name : params_.names()) {
    Tensor& p = params_.get(name);
    if (!p.has_grad())
      throw contract_error("adam_step: parameter '" + name + "' has no gradient");
    auto& m = m_[name];
    auto& v = v_[name];
    auto& data = p.mutable_values();
    const auto& g = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

// ---- grad check ----

GradCheckReport grad_check(ParameterMap& params, const std::function<Tensor()>& build_loss,
                           double eps, double tol) {
  params.zero_grad();
  Tensor loss = build_loss();
  backward(loss);

  // snapshot analytic gradients before perturbing
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& name : params.names()) analytic[name] = params.get(name).grad();

  GradCheckReport report;
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    auto& data = p.mutable_values();
    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t i = 0; i < data.size(); ++i) {
      double saved = data[i];
      data[i] = saved + eps;
      double up = build_loss().item();
      data[i] = saved - eps;
      double down = build_loss().item();
      data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        entry.finite = false;
        continue;
      }
      double fd = (up - down) / (2.0 * eps);
      double ad = analytic[name][i];
      double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(fd - ad) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    if (!entry.finite) report.max_rel_error = std::numeric_limits<double>::infinity();
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= tol &&
                  std::all_of(report.entries.begin(), report.entries.end(),
                              [](const GradCheckEntry& e) { return e.finite; });
  return report;
}

}  // namespace umner
