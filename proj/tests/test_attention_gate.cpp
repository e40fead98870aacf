#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "umner/attention.h"
#include "umner/gate.h"

using namespace umner;

namespace {

constexpr int kDim = 4;
constexpr int kHeads = 2;

struct Fixture {
  ParameterMap params;
  std::mt19937_64 rng{99};
  AttentionParams attn;
  Fixture() { attn = make_attention_params(params, "attn", kDim, kHeads, rng); }
};

Tensor random_stream(int d, int cols, std::mt19937_64& rng) {
  return Tensor::uniform({d, cols}, 1.0, rng, false);
}

}  // namespace

TEST_CASE("mh_cross_attention output takes the query position count") {
  Fixture f;
  Tensor queries = random_stream(kDim, 7, f.rng);
  Tensor kv = random_stream(kDim, 3, f.rng);
  Tensor out = mh_cross_attention(queries, kv, f.attn);
  CHECK(out.rows() == kDim);
  CHECK(out.cols() == 7);
}

TEST_CASE("single key forces attention weight one") {
  Fixture f;
  Tensor queries = random_stream(kDim, 3, f.rng);
  Tensor kv = random_stream(kDim, 1, f.rng);
  ForwardTrace trace;
  Tensor out = mh_cross_attention(queries, kv, f.attn, &trace);
  for (double s : trace.softmax_row_sums) CHECK(s == doctest::Approx(1.0));

  // every query receives the same attended value: W' concat_i (W_i^V kv)
  std::vector<Tensor> head_vals;
  for (int i = 0; i < kHeads; ++i) head_vals.push_back(matmul(f.attn.w_v[i], kv));
  Tensor expect = matmul(f.attn.w_out, concat_rows(head_vals[0], head_vals[1]));
  for (int j = 0; j < out.cols(); ++j)
    for (int i = 0; i < kDim; ++i)
      CHECK(out.at(i, j) == doctest::Approx(expect.at(i, 0)).epsilon(1e-10));
}

TEST_CASE("identical kv columns give uniform attention") {
  Fixture f;
  Tensor queries = random_stream(kDim, 2, f.rng);
  Tensor one = random_stream(kDim, 1, f.rng);
  std::vector<double> rep;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < 5; ++j) rep.push_back(one.at(i, 0));
  Tensor kv = Tensor::from_values({kDim, 5}, rep);

  Tensor out = mh_cross_attention(queries, kv, f.attn);
  std::vector<Tensor> head_vals;
  for (int i = 0; i < kHeads; ++i) head_vals.push_back(matmul(f.attn.w_v[i], one));
  Tensor expect = matmul(f.attn.w_out, concat_rows(head_vals[0], head_vals[1]));
  for (int j = 0; j < out.cols(); ++j)
    for (int i = 0; i < kDim; ++i)
      CHECK(out.at(i, j) == doctest::Approx(expect.at(i, 0)).epsilon(1e-10));
}

TEST_CASE("attention weight rows sum to one on random streams") {
  Fixture f;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor q = random_stream(kDim, 5, f.rng);
    Tensor kv = random_stream(kDim, 6, f.rng);
    ForwardTrace trace;
    mh_cross_attention(q, kv, f.attn, &trace);
    REQUIRE(!trace.softmax_row_sums.empty());
    for (double s : trace.softmax_row_sums) CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("cmt_layer shape contract and residual-only path") {
  Fixture f;
  Tensor q = random_stream(kDim, 6, f.rng);
  Tensor kv = random_stream(kDim, 9, f.rng);
  Tensor out = cmt_layer(q, kv, f.attn);
  CHECK(out.rows() == kDim);
  CHECK(out.cols() == 6);

  // zero attention + zero FFN weights: output = LN(LN(q))
  ParameterMap zp;
  std::mt19937_64 zr(1);
  AttentionParams zero = make_attention_params(zp, "z", kDim, kHeads, zr);
  for (auto& t : zero.w_v) std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
  std::fill(zero.ffn_w2.mutable_values().begin(), zero.ffn_w2.mutable_values().end(), 0.0);
  std::fill(zero.ffn_b2.mutable_values().begin(), zero.ffn_b2.mutable_values().end(), 0.0);
  Tensor res = cmt_layer(q, kv, zero);
  Tensor ln = transpose(layer_norm(transpose(q), zero.ln1_gain, zero.ln1_bias));
  Tensor lnln = transpose(layer_norm(transpose(ln), zero.ln2_gain, zero.ln2_bias));
  for (std::size_t i = 0; i < res.size(); ++i)
    CHECK(res.values()[i] == doctest::Approx(lnln.values()[i]).epsilon(1e-10));
}

TEST_CASE("self_attention_layer preserves shape; single column attends to itself") {
  Fixture f;
  Tensor c = random_stream(kDim, 5, f.rng);
  Tensor out = self_attention_layer(c, f.attn);
  CHECK(out.rows() == kDim);
  CHECK(out.cols() == 5);

  Tensor single = random_stream(kDim, 1, f.rng);
  ForwardTrace trace;
  Tensor o1 = self_attention_layer(single, f.attn, {}, &trace);
  for (double s : trace.softmax_row_sums) CHECK(s == doctest::Approx(1.0));
  CHECK(o1.cols() == 1);
}

TEST_CASE("image_aware_words aligns A to tokens and P to blocks") {
  Fixture f;
  std::mt19937_64 rng2(5);
  ParameterMap p2;
  AttentionParams coupled = make_attention_params(p2, "c", kDim, kHeads, rng2);
  Tensor r = random_stream(kDim, 6, f.rng);   // n+2 = 6
  Tensor v = random_stream(kDim, 9, f.rng);   // blocks = 9
  ImageAwareOutputs out = image_aware_words(r, v, f.attn, coupled);
  CHECK(out.a.cols() == 6);
  CHECK(out.a.rows() == kDim);
  CHECK(out.p.cols() == 9);

  // zero visual input still yields a finite, well-formed A
  Tensor vz = Tensor::zeros({kDim, 9});
  ImageAwareOutputs oz = image_aware_words(r, vz, f.attn, coupled);
  CHECK(oz.a.cols() == 6);
  for (double x : oz.a.values()) CHECK(std::isfinite(x));
}

TEST_CASE("word_aware_visual keeps token alignment") {
  Fixture f;
  Tensor r = random_stream(kDim, 4, f.rng);
  Tensor v = random_stream(kDim, 9, f.rng);
  Tensor qv = word_aware_visual(r, v, f.attn);
  CHECK(qv.rows() == kDim);
  CHECK(qv.cols() == 4);
}

TEST_CASE("permuting visual blocks leaves A unchanged") {
  Fixture f;
  std::mt19937_64 rng2(6);
  ParameterMap p2;
  AttentionParams coupled = make_attention_params(p2, "c", kDim, kHeads, rng2);
  Tensor r = random_stream(kDim, 5, f.rng);
  Tensor v = random_stream(kDim, 8, f.rng);

  std::vector<int> perm = {3, 1, 7, 0, 6, 2, 5, 4};
  std::vector<double> pv(v.size());
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < 8; ++j) pv[std::size_t(i) * 8 + j] = v.at(i, perm[j]);
  Tensor v_perm = Tensor::from_values({kDim, 8}, pv);

  Tensor a1 = image_aware_words(r, v, f.attn, coupled).a;
  Tensor a2 = image_aware_words(r, v_perm, f.attn, coupled).a;
  double max_delta = 0.0;
  for (std::size_t i = 0; i < a1.size(); ++i)
    max_delta = std::max(max_delta, std::abs(a1.values()[i] - a2.values()[i]));
  CHECK(max_delta <= 1e-9);
}

TEST_CASE("end-to-end attention-stack gradients match finite differences") {
  std::mt19937_64 rng(77);
  ParameterMap params;
  AttentionParams sa = make_attention_params(params, "sa", kDim, kHeads, rng);
  AttentionParams first = make_attention_params(params, "first", kDim, kHeads, rng);
  AttentionParams coupled = make_attention_params(params, "coupled", kDim, kHeads, rng);
  AttentionParams wav = make_attention_params(params, "wav", kDim, kHeads, rng);
  Tensor c = Tensor::uniform({kDim, 4}, 1.0, rng, false);
  Tensor v = Tensor::uniform({kDim, 3}, 1.0, rng, false);

  auto build = [&]() {
    Tensor r = self_attention_layer(c, sa);
    ImageAwareOutputs ia = image_aware_words(r, v, first, coupled);
    Tensor qv = word_aware_visual(r, v, wav);
    Tensor joined = add(ia.a, qv);
    return sum_all(mul(joined, joined));
  };
  GradCheckReport report = grad_check(params, build, 1e-4, 1e-4);
  CHECK(report.passed);
}

// ---- gate ----

TEST_CASE("visual gate is 0.5 at zero weights and always in (0,1)") {
  GateParams p;
  p.w_a = Tensor::zeros({2, 2});
  p.w_q = Tensor::zeros({2, 2});
  std::mt19937_64 rng(3);
  Tensor a = Tensor::uniform({2, 5}, 3.0, rng, false);
  Tensor qv = Tensor::uniform({2, 5}, 3.0, rng, false);
  ForwardTrace trace;
  Tensor g = visual_gate(a, qv, p, &trace);
  for (double x : g.values()) CHECK(x == doctest::Approx(0.5));
  CHECK(trace.gate_min > 0.0);
  CHECK(trace.gate_max < 1.0);
}

TEST_CASE("saturated negative gate crushes the visual pathway") {
  GateParams p;
  p.w_a = Tensor::from_values({1, 1}, {-50.0});
  p.w_q = Tensor::from_values({1, 1}, {-50.0});
  Tensor a = Tensor::full({1, 3}, 1.0);
  Tensor qv = Tensor::full({1, 3}, 1.0);
  Tensor g = visual_gate(a, qv, p);
  for (double x : g.values()) {
    CHECK(x <= 1e-8);
    CHECK(x > 0.0);
  }
  Tensor b = apply_gate(g, qv);
  for (double x : b.values()) CHECK(std::abs(x) <= 1e-8);
}

TEST_CASE("gate closed form on the 1x1 case") {
  GateParams p;
  p.w_a = Tensor::from_values({1, 1}, {1.0});
  p.w_q = Tensor::from_values({1, 1}, {1.0});
  Tensor a = Tensor::from_values({1, 1}, {1.0});
  Tensor qv = Tensor::from_values({1, 1}, {1.0});
  Tensor g = visual_gate(a, qv, p);
  CHECK(g.at(0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  CHECK(g.at(0) == doctest::Approx(0.8808).epsilon(1e-4));
}

TEST_CASE("gate monotonicity in the pre-activation") {
  std::mt19937_64 rng(9);
  GateParams p;
  p.w_a = Tensor::from_values({1, 1}, {1.0});
  p.w_q = Tensor::from_values({1, 1}, {0.0});
  double prev = 0.0;
  for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    Tensor g = visual_gate(Tensor::from_values({1, 1}, {x}),
                           Tensor::from_values({1, 1}, {0.0}), p);
    if (x > -2.0) CHECK(g.at(0) > prev);
    prev = g.at(0);
  }
}

TEST_CASE("apply_gate and fuse definitions") {
  Tensor g = Tensor::full({2, 3}, 0.5);
  std::mt19937_64 rng(4);
  Tensor qv = Tensor::uniform({2, 3}, 1.0, rng, false);
  Tensor b = apply_gate(g, qv);
  for (std::size_t i = 0; i < b.size(); ++i)
    CHECK(b.values()[i] == doctest::Approx(qv.values()[i] / 2.0));

  Tensor zero = apply_gate(g, Tensor::zeros({2, 3}));
  for (double x : zero.values()) CHECK(x == 0.0);

  Tensor a = Tensor::from_values({2, 1}, {1, 2});
  Tensor bb = Tensor::from_values({2, 1}, {3, 4});
  Tensor h = fuse(a, bb);
  CHECK(h.rows() == 4);
  CHECK(h.cols() == 1);
  CHECK(h.at(0, 0) == 1);
  CHECK(h.at(1, 0) == 2);
  CHECK(h.at(2, 0) == 3);
  CHECK(h.at(3, 0) == 4);

  // zero B leaves the lower half zero
  Tensor h2 = fuse(a, Tensor::zeros({2, 1}));
  CHECK(h2.at(2, 0) == 0.0);
  CHECK(h2.at(3, 0) == 0.0);

  CHECK_THROWS_AS(fuse(a, Tensor::zeros({2, 2})), Error);
}
