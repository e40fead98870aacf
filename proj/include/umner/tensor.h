#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "umner/error.h"

namespace umner {

// Dense double-precision tensor (rank 1 or 2) participating in a reverse-mode
// autodiff tape. Values are immutable once an op has consumed them; gradients
// accumulate into `grad`. A graph belongs to one logical thread.
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  // pulls node.grad into parents

    std::size_t size() const { return data.size(); }
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // U(-limit, limit)
  static Tensor uniform(std::vector<int> shape, double limit, std::mt19937_64& rng,
                        bool requires_grad = true);
  // Xavier/Glorot uniform for a fan_in x fan_out projection.
  static Tensor xavier(int rows, int cols, std::mt19937_64& rng,
                       bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int rows() const { return node_->shape.at(0); }
  int cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->data; }
  std::vector<double>& mutable_values() { return node_->data; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  double at(int i) const { return node_->data.at(i); }
  double at(int r, int c) const { return node_->data.at(std::size_t(r) * cols() + c); }
  double item() const;

  void zero_grad();
  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// ---- ops (all pure; backward rules registered on the result) ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& a, double s);
// Adds column vector b (m x 1) to every column of a (m x n).
Tensor add_col_broadcast(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int start, int count);
Tensor sum_all(const Tensor& a);

enum class Activation { Sigmoid, Tanh, Relu };
Tensor elementwise(const Tensor& a, Activation fn);
inline Tensor sigmoid(const Tensor& a) { return elementwise(a, Activation::Sigmoid); }
inline Tensor tanh_act(const Tensor& a) { return elementwise(a, Activation::Tanh); }
inline Tensor relu(const Tensor& a) { return elementwise(a, Activation::Relu); }

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& a);

// Row-wise layer normalization: each row to mean 0 / unit variance (with eps),
// then scaled by gain and shifted by bias (both length n).
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-6);

// Inverted dropout; identity when train == false or rate == 0.
Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937_64& rng);

// Runs reverse-mode accumulation from a scalar loss into every tracked tensor.
void backward(const Tensor& loss);

// ---- parameters & optimizer ----

// Named collection of learnable tensors with stable iteration order.
class ParameterMap {
 public:
  void add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count() const;

  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> by_name_;
};

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(ParameterMap& params, AdamConfig cfg);
  void step();
  long step_count() const { return step_count_; }

 private:
  ParameterMap& params_;
  AdamConfig cfg_;
  long step_count_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

// ---- gradient checking ----

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central-difference check of d(loss)/d(param) for every entry of every
// parameter. `build_loss` must rebuild the loss graph from current values.
GradCheckReport grad_check(ParameterMap& params,
                           const std::function<Tensor()>& build_loss,
                           double eps = 1e-4, double tol = 1e-4);

namespace testing_hooks {
// Negative-control switch: corrupts the matmul backward rule.
extern bool corrupt_matmul_backward;
}  // namespace testing_hooks

}  // namespace umner
