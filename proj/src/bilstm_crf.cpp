#include "umner/bilstm_crf.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "umner/error.h"

namespace umner {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const std::vector<double>& xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

LstmDirection make_direction(ParameterMap& params, const std::string& prefix, int input,
                             int hidden, std::mt19937_64& rng) {
  LstmDirection d;
  auto mat = [&](const char* name, int r, int c) {
    Tensor t = Tensor::xavier(r, c, rng);
    params.add(prefix + "." + name, t);
    return t;
  };
  auto bias = [&](const char* name) {
    Tensor t = Tensor::zeros({hidden, 1}, true);
    params.add(prefix + "." + name, t);
    return t;
  };
  d.w_i = mat("w_i", hidden, input);
  d.w_f = mat("w_f", hidden, input);
  d.w_o = mat("w_o", hidden, input);
  d.w_g = mat("w_g", hidden, input);
  d.u_i = mat("u_i", hidden, hidden);
  d.u_f = mat("u_f", hidden, hidden);
  d.u_o = mat("u_o", hidden, hidden);
  d.u_g = mat("u_g", hidden, hidden);
  d.b_i = bias("b_i");
  d.b_f = bias("b_f");
  d.b_o = bias("b_o");
  d.b_g = bias("b_g");
  return d;
}

LstmDirection bind_direction(const ParameterMap& params, const std::string& prefix) {
  LstmDirection d;
  d.w_i = params.get(prefix + ".w_i");
  d.w_f = params.get(prefix + ".w_f");
  d.w_o = params.get(prefix + ".w_o");
  d.w_g = params.get(prefix + ".w_g");
  d.u_i = params.get(prefix + ".u_i");
  d.u_f = params.get(prefix + ".u_f");
  d.u_o = params.get(prefix + ".u_o");
  d.u_g = params.get(prefix + ".u_g");
  d.b_i = params.get(prefix + ".b_i");
  d.b_f = params.get(prefix + ".b_f");
  d.b_o = params.get(prefix + ".b_o");
  d.b_g = params.get(prefix + ".b_g");
  return d;
}

// One direction over the given column order; returns hidden states in input order.
std::vector<Tensor> run_direction(const Tensor& x, const LstmDirection& p, int hidden,
                                  bool reversed) {
  int steps = x.cols();
  Tensor h_prev = Tensor::zeros({hidden, 1});
  Tensor c_prev = Tensor::zeros({hidden, 1});
  std::vector<Tensor> out(steps);
  for (int s = 0; s < steps; ++s) {
    int t = reversed ? steps - 1 - s : s;
    Tensor xt = slice_cols(x, t, 1);
    Tensor i = sigmoid(add(add(matmul(p.w_i, xt), matmul(p.u_i, h_prev)), p.b_i));
    Tensor f = sigmoid(add(add(matmul(p.w_f, xt), matmul(p.u_f, h_prev)), p.b_f));
    Tensor o = sigmoid(add(add(matmul(p.w_o, xt), matmul(p.u_o, h_prev)), p.b_o));
    Tensor g = tanh_act(add(add(matmul(p.w_g, xt), matmul(p.u_g, h_prev)), p.b_g));
    Tensor c = add(mul(f, c_prev), mul(i, g));
    Tensor h = mul(o, tanh_act(c));
    out[t] = h;
    h_prev = h;
    c_prev = c;
  }
  return out;
}

void check_labels(const std::vector<int>& y, int num_labels) {
  if (y.empty()) throw contract_error("crf: empty label sequence");
  for (int l : y)
    if (l < 0 || l >= num_labels)
      throw contract_error("crf: invalid label index " + std::to_string(l));
}

}  // namespace

const std::vector<std::string>& tag_set() {
  static const std::vector<std::string> tags = {"O",     "B-PER",  "I-PER",
                                                "B-LOC", "I-LOC",  "B-ORG",
                                                "I-ORG", "B-MISC", "I-MISC"};
  return tags;
}

int tag_index(const std::string& tag) {
  const auto& tags = tag_set();
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == tag) return int(i);
  throw format_error("unknown tag: " + tag);
}

bool is_valid_tag(const std::string& tag) {
  const auto& tags = tag_set();
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

LstmParams make_lstm_params(ParameterMap& params, const std::string& prefix, int input,
                            int hidden, std::mt19937_64& rng) {
  if (hidden < 1) throw shape_error("lstm: hidden size must be positive");
  LstmParams p;
  p.input = input;
  p.hidden = hidden;
  p.fwd = make_direction(params, prefix + ".fwd", input, hidden, rng);
  p.bwd = make_direction(params, prefix + ".bwd", input, hidden, rng);
  return p;
}

LstmParams bind_lstm_params(const ParameterMap& params, const std::string& prefix,
                            int input, int hidden) {
  LstmParams p;
  p.input = input;
  p.hidden = hidden;
  p.fwd = bind_direction(params, prefix + ".fwd");
  p.bwd = bind_direction(params, prefix + ".bwd");
  return p;
}

Tensor bilstm_forward(const Tensor& h, const LstmParams& p) {
  if (h.rows() != p.input)
    throw shape_error("bilstm_forward: input dim " + std::to_string(h.rows()) +
                      " vs expected " + std::to_string(p.input));
  std::vector<Tensor> fwd = run_direction(h, p.fwd, p.hidden, false);
  std::vector<Tensor> bwd = run_direction(h, p.bwd, p.hidden, true);
  std::vector<Tensor> cols;
  cols.reserve(h.cols());
  for (int t = 0; t < h.cols(); ++t) cols.push_back(concat_rows(fwd[t], bwd[t]));
  return concat_cols(cols);
}

CrfParams make_crf_params(ParameterMap& params, const std::string& prefix, int num_labels,
                          int hidden, std::mt19937_64& rng) {
  CrfParams p;
  p.num_labels = num_labels;
  p.transitions = Tensor::uniform({num_labels + 2, num_labels + 2}, 0.1, rng);
  p.emission_w = Tensor::xavier(num_labels, hidden, rng);
  params.add(prefix + ".transitions", p.transitions);
  params.add(prefix + ".emission_w", p.emission_w);
  return p;
}

CrfParams bind_crf_params(const ParameterMap& params, const std::string& prefix,
                          int num_labels, int hidden) {
  CrfParams p;
  p.num_labels = num_labels;
  p.transitions = params.get(prefix + ".transitions");
  p.emission_w = params.get(prefix + ".emission_w");
  if (p.transitions.rows() != num_labels + 2 || p.emission_w.rows() != num_labels ||
      p.emission_w.cols() != hidden)
    throw shape_error("crf: stored parameter shapes disagree with configuration");
  return p;
}

std::vector<std::vector<bool>> bio_hard_mask(int num_labels) {
  const auto& tags = tag_set();
  int n = num_labels + 2;
  std::vector<std::vector<bool>> mask(n, std::vector<bool>(n, false));
  auto entity_of = [&](int l) { return tags[l].substr(2); };
  for (int to = 0; to < num_labels; ++to) {
    if (tags[to][0] != 'I') continue;
    // I-X may only follow B-X or I-X
    mask[num_labels][to] = true;  // START -> I-X
    for (int from = 0; from < num_labels; ++from) {
      bool ok = tags[from][0] != 'O' && entity_of(from) == entity_of(to);
      if (!ok) mask[from][to] = true;
    }
  }
  return mask;
}

Tensor emissions(const Tensor& hidden, const CrfParams& crf) {
  if (hidden.cols() < 3)
    throw shape_error("emissions: need at least one real token between [CLS] and [SEP]");
  if (crf.emission_w.cols() != hidden.rows())
    throw shape_error("emissions: hidden dim " + std::to_string(hidden.rows()) +
                      " vs emission weights " + std::to_string(crf.emission_w.cols()));
  return matmul(crf.emission_w, slice_cols(hidden, 1, hidden.cols() - 2));
}

Tensor crf_score(const Tensor& e, const CrfParams& crf, const std::vector<int>& y) {
  int L = crf.num_labels;
  int n = e.cols();
  check_labels(y, L);
  if (int(y.size()) != n)
    throw contract_error("crf_score: label count " + std::to_string(y.size()) +
                         " vs emission columns " + std::to_string(n));
  const int START = crf.start_tag(), STOP = crf.stop_tag();
  const auto& T = crf.transitions;

  bool blocked = crf.is_forbidden(START, y[0]) || crf.is_forbidden(y[n - 1], STOP);
  for (int t = 0; t + 1 < n; ++t)
    blocked = blocked || crf.is_forbidden(y[t], y[t + 1]);

  double value;
  if (blocked) {
    value = kNegInf;
  } else {
    value = T.at(START, y[0]) + T.at(y[n - 1], STOP);
    for (int t = 0; t < n; ++t) value += e.at(y[t], t);
    for (int t = 0; t + 1 < n; ++t) value += T.at(y[t], y[t + 1]);
  }

  auto en = e.node();
  auto tn = T.node();
  auto result = std::make_shared<Tensor::Node>();
  result->shape = {1};
  result->data = {value};
  result->requires_grad = en->requires_grad || tn->requires_grad;
  if (result->requires_grad && !blocked) {
    result->grad.assign(1, 0.0);
    result->parents = {en, tn};
    int Lp2 = L + 2;
    result->backward = [en, tn, y, n, START, STOP, Lp2](Tensor::Node& self) {
      double g = self.grad[0];
      if (en->requires_grad)
        for (int t = 0; t < n; ++t) en->grad[std::size_t(y[t]) * n + t] += g;
      if (tn->requires_grad) {
        tn->grad[std::size_t(START) * Lp2 + y[0]] += g;
        tn->grad[std::size_t(y[n - 1]) * Lp2 + STOP] += g;
        for (int t = 0; t + 1 < n; ++t)
          tn->grad[std::size_t(y[t]) * Lp2 + y[t + 1]] += g;
      }
    };
  } else if (result->requires_grad) {
    result->grad.assign(1, 0.0);
  }
  return Tensor(result);
}

Tensor crf_log_partition(const Tensor& e, const CrfParams& crf) {
  int L = crf.num_labels;
  int n = e.cols();
  if (e.rows() != L)
    throw shape_error("crf_log_partition: emission rows " + std::to_string(e.rows()) +
                      " vs label count " + std::to_string(L));
  const int START = crf.start_tag(), STOP = crf.stop_tag();
  const auto& T = crf.transitions;

  // alpha[t][l]: log-sum of prefix scores ending at position t with label l.
  std::vector<std::vector<double>> alpha(n, std::vector<double>(L, kNegInf));
  for (int l = 0; l < L; ++l)
    if (!crf.is_forbidden(START, l)) alpha[0][l] = T.at(START, l) + e.at(l, 0);
  std::vector<double> terms;
  for (int t = 1; t < n; ++t)
    for (int b = 0; b < L; ++b) {
      terms.clear();
      for (int a = 0; a < L; ++a)
        if (!crf.is_forbidden(a, b) && alpha[t - 1][a] != kNegInf)
          terms.push_back(alpha[t - 1][a] + T.at(a, b));
      double lse = logsumexp(terms);
      alpha[t][b] = lse == kNegInf ? kNegInf : lse + e.at(b, t);
    }
  terms.clear();
  for (int l = 0; l < L; ++l)
    if (!crf.is_forbidden(l, STOP) && alpha[n - 1][l] != kNegInf)
      terms.push_back(alpha[n - 1][l] + T.at(l, STOP));
  double log_z = logsumexp(terms);

  // beta[t][l]: log-sum of suffix scores given label l at position t
  // (excluding e at position t).
  std::vector<std::vector<double>> beta(n, std::vector<double>(L, kNegInf));
  for (int l = 0; l < L; ++l)
    if (!crf.is_forbidden(l, STOP)) beta[n - 1][l] = T.at(l, STOP);
  for (int t = n - 2; t >= 0; --t)
    for (int a = 0; a < L; ++a) {
      terms.clear();
      for (int b = 0; b < L; ++b)
        if (!crf.is_forbidden(a, b) && beta[t + 1][b] != kNegInf)
          terms.push_back(T.at(a, b) + e.at(b, t + 1) + beta[t + 1][b]);
      beta[t][a] = logsumexp(terms);
    }

  auto en = e.node();
  auto tn = T.node();
  CrfParams crf_copy = crf;  // mask + values snapshot for the backward pass
  auto result = std::make_shared<Tensor::Node>();
  result->shape = {1};
  result->data = {log_z};
  result->requires_grad = en->requires_grad || tn->requires_grad;
  if (result->requires_grad) {
    result->grad.assign(1, 0.0);
    result->parents = {en, tn};
    int Lp2 = L + 2;
    result->backward = [en, tn, alpha, beta, log_z, n, L, Lp2, START, STOP,
                        crf_copy](Tensor::Node& self) {
      double g = self.grad[0];
      const auto& T = crf_copy.transitions;
      // unary marginals
      for (int t = 0; t < n; ++t)
        for (int l = 0; l < L; ++l) {
          if (alpha[t][l] == kNegInf || beta[t][l] == kNegInf) continue;
          double marg = std::exp(alpha[t][l] + beta[t][l] - log_z);
          if (en->requires_grad) en->grad[std::size_t(l) * n + t] += g * marg;
          if (tn->requires_grad) {
            if (t == 0) tn->grad[std::size_t(START) * Lp2 + l] += g * marg;
            if (t == n - 1) tn->grad[std::size_t(l) * Lp2 + STOP] += g * marg;
          }
        }
      // pairwise marginals
      if (tn->requires_grad) {
        for (int t = 0; t + 1 < n; ++t)
          for (int a = 0; a < L; ++a) {
            if (alpha[t][a] == kNegInf) continue;
            for (int b = 0; b < L; ++b) {
              if (crf_copy.is_forbidden(a, b) || beta[t + 1][b] == kNegInf) continue;
              double lp = alpha[t][a] + T.at(a, b) +
                          en->data[std::size_t(b) * n + t + 1] + beta[t + 1][b] - log_z;
              tn->grad[std::size_t(a) * Lp2 + b] += g * std::exp(lp);
            }
          }
      }
    };
  }
  return Tensor(result);
}

Tensor crf_nll(const Tensor& e, const CrfParams& crf, const std::vector<int>& y) {
  return sub(crf_log_partition(e, crf), crf_score(e, crf, y));
}

std::vector<int> viterbi_decode(const Tensor& e, const CrfParams& crf) {
  int L = crf.num_labels;
  int n = e.cols();
  if (n < 1) throw contract_error("viterbi_decode: empty emission matrix");
  const int START = crf.start_tag(), STOP = crf.stop_tag();
  const auto& T = crf.transitions;

  // delta[t][l]: best suffix score from position t given label l, including
  // e(l, t) and the trailing STOP transition. Backward DP so the forward
  // greedy pass below yields the lexicographically smallest argmax.
  std::vector<std::vector<double>> delta(n, std::vector<double>(L, kNegInf));
  for (int l = 0; l < L; ++l)
    if (!crf.is_forbidden(l, STOP)) delta[n - 1][l] = e.at(l, n - 1) + T.at(l, STOP);
  for (int t = n - 2; t >= 0; --t)
    for (int a = 0; a < L; ++a) {
      double best = kNegInf;
      for (int b = 0; b < L; ++b) {
        if (crf.is_forbidden(a, b) || delta[t + 1][b] == kNegInf) continue;
        best = std::max(best, T.at(a, b) + delta[t + 1][b]);
      }
      if (best != kNegInf) delta[t][a] = e.at(a, t) + best;
    }

  std::vector<int> y(n);
  double best = kNegInf;
  int pick = -1;
  for (int l = 0; l < L; ++l) {
    if (crf.is_forbidden(START, l) || delta[0][l] == kNegInf) continue;
    double s = T.at(START, l) + delta[0][l];
    if (s > best) {
      best = s;
      pick = l;
    }
  }
  if (pick < 0) throw domain_error("viterbi_decode: no admissible path");
  y[0] = pick;
  for (int t = 1; t < n; ++t) {
    int prev = y[t - 1];
    best = kNegInf;
    pick = -1;
    for (int b = 0; b < L; ++b) {
      if (crf.is_forbidden(prev, b) || delta[t][b] == kNegInf) continue;
      double s = T.at(prev, b) + delta[t][b];
      if (s > best) {
        best = s;
        pick = b;
      }
    }
    y[t] = pick;
  }
  return y;
}

}  // namespace umner
