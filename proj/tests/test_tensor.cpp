#include <doctest.h>

#include <cmath>
#include <random>

#include "umner/tensor.h"

using namespace umner;

TEST_CASE("matmul identity") {
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from_values({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(eye, b);
  CHECK(c.values() == b.values());
}

TEST_CASE("matmul hand arithmetic") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_values({2, 1}, {5, 6});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(17));
  CHECK(c.at(1, 0) == doctest::Approx(39));
}

TEST_CASE("matmul zero annihilator") {
  Tensor z = Tensor::zeros({2, 3});
  std::mt19937_64 rng(1);
  Tensor b = Tensor::uniform({3, 4}, 2.0, rng, false);
  Tensor c = matmul(z, b);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 4);
  for (double v : c.values()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), Error);
}

TEST_CASE("matmul associativity on random matrices") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = Tensor::uniform({3, 4}, 1.0, rng, false);
    Tensor b = Tensor::uniform({4, 5}, 1.0, rng, false);
    Tensor c = Tensor::uniform({5, 2}, 1.0, rng, false);
    Tensor left = matmul(matmul(a, b), c);
    Tensor right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i)
      CHECK(std::abs(left.values()[i] - right.values()[i]) < 1e-9);
  }
}

TEST_CASE("softmax uniform logits") {
  Tensor x = Tensor::from_values({1, 3}, {0, 0, 0});
  Tensor y = softmax_rows(x);
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("softmax closed form") {
  Tensor x = Tensor::from_values({1, 2}, {0.0, std::log(2.0)});
  Tensor y = softmax_rows(x);
  CHECK(y.at(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(y.at(0, 1) == doctest::Approx(2.0 / 3));
}

TEST_CASE("softmax shift invariance") {
  for (double c : {-17.5, 0.25, 300.0}) {
    Tensor base = Tensor::from_values({1, 2}, {0.0, 1.0});
    Tensor shifted = Tensor::from_values({1, 2}, {c, c + 1.0});
    Tensor a = softmax_rows(base);
    Tensor b = softmax_rows(shifted);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows sum to one on wide random inputs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = Tensor::uniform({4, 6}, 50.0, rng, false);
    Tensor y = softmax_rows(x);
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int c = 0; c < 6; ++c) s += y.at(r, c);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("elementwise fixed points") {
  Tensor zero = Tensor::from_values({1, 1}, {0.0});
  CHECK(sigmoid(zero).at(0) == doctest::Approx(0.5));
  CHECK(tanh_act(zero).at(0) == doctest::Approx(0.0));

  Tensor big = Tensor::from_values({1, 2}, {20.0, -20.0});
  Tensor s = sigmoid(big);
  CHECK(std::abs(s.at(0, 0) - 1.0) < 1e-8);
  CHECK(std::abs(s.at(0, 1)) < 1e-8);
  for (double v : s.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("layer_norm constant row collapses to bias") {
  Tensor x = Tensor::from_values({1, 4}, {3, 3, 3, 3});
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias = Tensor::zeros({4});
  Tensor y = layer_norm(x, gain, bias);
  for (double v : y.values()) CHECK(std::abs(v) < 1e-3);

  Tensor b2 = Tensor::full({4}, 2.5);
  Tensor g0 = Tensor::zeros({4});
  Tensor y2 = layer_norm(Tensor::from_values({1, 4}, {9, -3, 1, 0}), g0, b2);
  for (double v : y2.values()) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("layer_norm already normalized row") {
  Tensor x = Tensor::from_values({1, 2}, {1, -1});
  Tensor y = layer_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}));
  CHECK(y.at(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(y.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("backward on linear and quadratic losses") {
  Tensor w = Tensor::from_values({1, 2}, {1, 2}, true);
  Tensor loss = sum_all(w);
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(1.0));
  CHECK(w.grad()[1] == doctest::Approx(1.0));

  w.zero_grad();
  Tensor loss2 = sum_all(mul(w, w));
  backward(loss2);
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));

  // zeroing and re-running reproduces identical gradients
  w.zero_grad();
  backward(sum_all(mul(w, w)));
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("untracked input gets no gradient") {
  Tensor x = Tensor::from_values({1, 2}, {1, 2}, false);
  Tensor loss = sum_all(mul(x, x));
  backward(loss);
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor w = Tensor::from_values({1, 2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(w, w)), Error);
}

TEST_CASE("adam zero gradient is a fixed point") {
  ParameterMap params;
  params.add("w", Tensor::from_values({1, 2}, {1.0, -2.0}, true));
  params.zero_grad();
  AdamOptimizer opt(params, {0.1, 0.9, 0.999, 1e-8});
  opt.step();
  CHECK(params.get("w").at(0) == doctest::Approx(1.0));
  CHECK(params.get("w").at(1) == doctest::Approx(-2.0));
}

TEST_CASE("adam one-step closed form") {
  // mhat = g, vhat = g^2; update = lr * g / (|g| + eps) = ~lr
  ParameterMap params;
  params.add("w", Tensor::from_values({1}, {1.0}, true));
  Tensor loss = sum_all(params.get("w"));
  backward(loss);
  AdamOptimizer opt(params, {0.1, 0.9, 0.999, 1e-8});
  opt.step();
  CHECK(params.get("w").at(0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam determinism across identical runs") {
  auto run = []() {
    std::mt19937_64 rng(5);
    ParameterMap params;
    params.add("w", Tensor::uniform({3, 3}, 1.0, rng));
    AdamOptimizer opt(params, {0.01, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 5; ++i) {
      params.zero_grad();
      backward(sum_all(mul(params.get("w"), params.get("w"))));
      opt.step();
    }
    return params.get("w").values();
  };
  CHECK(run() == run());
}

TEST_CASE("adam reports the missing-gradient parameter") {
  ParameterMap params;
  params.add("never_used", Tensor(Tensor::from_values({1}, {0.0}, false)));
  AdamOptimizer opt(params, {});
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("never_used"), Error);
}

TEST_CASE("grad_check exact on quadratic") {
  std::mt19937_64 rng(11);
  ParameterMap params;
  params.add("w", Tensor::uniform({2, 3}, 1.0, rng));
  auto build = [&]() { return sum_all(mul(params.get("w"), params.get("w"))); };
  GradCheckReport report = grad_check(params, build, 1e-4, 1e-8);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad_check catches a corrupted backward rule") {
  std::mt19937_64 rng(12);
  ParameterMap params;
  params.add("w", Tensor::uniform({2, 2}, 1.0, rng));
  Tensor x = Tensor::uniform({2, 2}, 1.0, rng, false);
  auto build = [&]() { return sum_all(mul(matmul(params.get("w"), x), matmul(params.get("w"), x))); };
  testing_hooks::corrupt_matmul_backward = true;
  GradCheckReport report = grad_check(params, build, 1e-4, 1e-4);
  testing_hooks::corrupt_matmul_backward = false;
  CHECK_FALSE(report.passed);
}

TEST_CASE("layer ops gradients match central differences") {
  std::mt19937_64 rng(13);
  ParameterMap params;
  params.add("a", Tensor::uniform({3, 4}, 1.0, rng));
  params.add("gain", Tensor::uniform({4}, 1.0, rng));
  params.add("bias", Tensor::uniform({4}, 1.0, rng));
  params.add("w", Tensor::uniform({4, 3}, 1.0, rng));

  SUBCASE("softmax + matmul") {
    auto build = [&]() {
      return sum_all(mul(softmax_rows(matmul(params.get("a"), params.get("w"))),
                         softmax_rows(matmul(params.get("a"), params.get("w")))));
    };
    CHECK(grad_check(params, build, 1e-4, 1e-4).passed);
  }
  SUBCASE("layer_norm") {
    auto build = [&]() {
      Tensor y = layer_norm(params.get("a"), params.get("gain"), params.get("bias"));
      return sum_all(mul(y, y));
    };
    CHECK(grad_check(params, build, 1e-4, 1e-4).passed);
  }
  SUBCASE("activations and broadcasts") {
    auto build = [&]() {
      Tensor h = sigmoid(params.get("a"));
      h = add(h, tanh_act(params.get("a")));
      h = mul(h, relu(params.get("a")));
      h = add_col_broadcast(h, slice_cols(params.get("a"), 0, 1));
      return sum_all(h);
    };
    CHECK(grad_check(params, build, 1e-4, 1e-4).passed);
  }
  SUBCASE("concat and slice") {
    auto build = [&]() {
      Tensor a = params.get("a");
      Tensor both = concat_rows(a, scale(a, 2.0));
      Tensor cols = concat_cols({slice_cols(both, 1, 2), slice_cols(both, 0, 1)});
      return sum_all(mul(cols, cols));
    };
    CHECK(grad_check(params, build, 1e-4, 1e-4).passed);
  }
}

TEST_CASE("ops are pure: repeated evaluation is bit-identical") {
  std::mt19937_64 rng(21);
  Tensor a = Tensor::uniform({4, 4}, 3.0, rng, false);
  Tensor b = Tensor::uniform({4, 4}, 3.0, rng, false);
  auto once = [&]() {
    return softmax_rows(matmul(elementwise(a, Activation::Tanh), b)).values();
  };
  CHECK(once() == once());
}

TEST_CASE("dropout eval mode is the identity, train mode rescales") {
  std::mt19937_64 rng(31);
  Tensor x = Tensor::full({10, 10}, 1.0);
  Tensor same = dropout(x, 0.5, false, rng);
  CHECK(same.values() == x.values());
  Tensor dropped = dropout(x, 0.5, true, rng);
  int zeros = 0;
  for (double v : dropped.values()) {
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    if (v == 0.0) ++zeros;
  }
  CHECK(zeros > 10);
  CHECK(zeros < 90);
}
