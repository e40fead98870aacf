#pragma once

#include <string>
#include <vector>

#include "umner/tensor.h"

namespace umner {

// Fixed BIO tag inventory; index order is stable across runs.
const std::vector<std::string>& tag_set();
int tag_index(const std::string& tag);  // throws on unknown tag
bool is_valid_tag(const std::string& tag);
constexpr int kNumTags = 9;

// Per-direction LSTM weights; gates ordered input, forget, output, candidate.
struct LstmDirection {
  Tensor w_i, w_f, w_o, w_g;  // hidden x input
  Tensor u_i, u_f, u_o, u_g;  // hidden x hidden
  Tensor b_i, b_f, b_o, b_g;  // hidden x 1
};

struct LstmParams {
  int input = 0;
  int hidden = 0;
  LstmDirection fwd;
  LstmDirection bwd;
};

LstmParams make_lstm_params(ParameterMap& params, const std::string& prefix, int input,
                            int hidden, std::mt19937_64& rng);
LstmParams bind_lstm_params(const ParameterMap& params, const std::string& prefix,
                            int input, int hidden);

// Concatenated forward/backward hidden states per position; zero initial state.
// Input 2d x T, output 2*hidden x T.
Tensor bilstm_forward(const Tensor& h, const LstmParams& p);

// Linear-chain CRF over L real tags with virtual START/STOP boundaries.
struct CrfParams {
  int num_labels = 0;
  Tensor transitions;  // (L+2) x (L+2); row = from, col = to
  Tensor emission_w;   // L x hidden
  // Optional hard constraints: forbidden[from][to] removes a transition from
  // every path (effective score -inf).
  std::vector<std::vector<bool>> forbidden;

  int start_tag() const { return num_labels; }
  int stop_tag() const { return num_labels + 1; }
  bool is_forbidden(int from, int to) const {
    return !forbidden.empty() && forbidden[from][to];
  }
};

CrfParams make_crf_params(ParameterMap& params, const std::string& prefix, int num_labels,
                          int hidden, std::mt19937_64& rng);
CrfParams bind_crf_params(const ParameterMap& params, const std::string& prefix,
                          int num_labels, int hidden);

// BIO structural constraints (orphan I-X after O or a different type, and
// START -> I-X) as a hard mask over the transition table.
std::vector<std::vector<bool>> bio_hard_mask(int num_labels);

// Emission scores for real tokens: entry (l, i) = W_l . hidden column.
// `hidden` covers positions 0..n+1; the [CLS]/[SEP] columns are dropped.
Tensor emissions(const Tensor& hidden, const CrfParams& crf);

// Path score: T(START,y1) + sum e(y_i,i) + sum T(y_i,y_{i+1}) + T(yn,STOP).
Tensor crf_score(const Tensor& e, const CrfParams& crf, const std::vector<int>& y);

// log sum over all L^n paths of exp(score), forward algorithm in log space.
Tensor crf_log_partition(const Tensor& e, const CrfParams& crf);

// crf_log_partition - crf_score; nonnegative.
Tensor crf_nll(const Tensor& e, const CrfParams& crf, const std::vector<int>& y);

// Max-score path; exact ties resolved to the lexicographically smallest
// label-index sequence.
std::vector<int> viterbi_decode(const Tensor& e, const CrfParams& crf);

}  // namespace umner
