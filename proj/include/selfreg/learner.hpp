#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfreg/nn.hpp"
#include "selfreg/optimizer.hpp"

namespace selfreg {

struct LearnerConfig {
  int src_vocab_size = 0;
  int trg_vocab_size = 0;
  int embed_dim = 32;
  int hidden_dim = 48;
  double p_att = 0.1;
  int max_decode_len = 24;
  int beam_width = 5;
  OptimizerConfig optimizer;

  void validate() const;
};

// Toy encoder-decoder: bidirectional LSTM encoder, LSTM decoder initialised
// through a bridge layer, global attention (score = h_dec . W_att enc_j), a
// tanh combination layer and a softmax output layer.
struct LearnerParams {
  nn::MatrixXd src_emb;  // src_vocab x E
  nn::MatrixXd trg_emb;  // trg_vocab x E
  nn::LstmWeights enc_fwd, enc_bwd, dec;
  nn::MatrixXd bridge_W, bridge_b;  // H x 2H, H x 1
  nn::MatrixXd att_W;               // H x 2H
  nn::MatrixXd comb_W, comb_b;      // H x 3H, H x 1
  nn::MatrixXd out_W, out_b;        // trg_vocab x H, trg_vocab x 1

  static LearnerParams init(const LearnerConfig& cfg, Rng& rng);
  static LearnerParams zeros_like(const LearnerParams& p);

  int embed_dim() const { return static_cast<int>(src_emb.cols()); }
  int hidden_dim() const { return dec.hidden(); }
  int src_vocab_size() const { return static_cast<int>(src_emb.rows()); }
  int trg_vocab_size() const { return static_cast<int>(out_W.rows()); }

  void visit(const nn::BlockVisitor& f);
  void visit(const nn::ConstBlockVisitor& f) const;
};

using LearnerOptimizerState = AdamState<LearnerParams>;

struct Hypothesis {
  std::vector<int> ids;  // without EOS
  // One entry per generated step: one per id plus the EOS step when finished.
  std::vector<double> token_logprobs;
  double score = 0.0;
  bool finished = false;  // EOS-terminated, otherwise truncated at max length
  std::string surface;

  bool operator==(const Hypothesis&) const = default;
};

// Per-token weights f_t of the supervised gradient, plus the weight of the
// end-of-sentence step.
struct TokenWeights {
  std::vector<double> f;
  double eos = 1.0;

  static TokenWeights ones(std::size_t n) { return {std::vector<double>(n, 1.0), 1.0}; }
  static TokenWeights zeros(std::size_t n) { return {std::vector<double>(n, 0.0), 0.0}; }
};

// Attention dropout; the mask is a deterministic function of (prob, seed, shape).
struct DropoutSpec {
  double prob = 0.0;
  std::uint64_t seed = 0;
};

// Keep-mask (steps x src_len) with entries zeroed independently with
// probability `prob`. A row that would be entirely zero is kept whole.
nn::MatrixXd attention_mask(const DropoutSpec& d, int steps, int src_len);

// log p(y_t | x; y_<t) for every target token, followed by the EOS step when
// append_eos is set. Teacher forcing with a BOS prefix.
std::vector<double> token_logprobs(const LearnerParams& params, std::span<const int> x, std::span<const int> y,
                                   const std::optional<DropoutSpec>& dropout, bool append_eos = true);

// Full output distributions at every teacher-forced step (|y| + 1 of them).
std::vector<nn::VectorXd> step_distributions(const LearnerParams& params, std::span<const int> x,
                                             std::span<const int> y, const std::optional<DropoutSpec>& dropout);

Hypothesis greedy_decode(const LearnerParams& params, std::span<const int> x, int max_len);
Hypothesis beam_search(const LearnerParams& params, std::span<const int> x, int width, int max_len);

// -sum_t f_t log p(y_t | x; y_<t) under the (fixed) dropout mask.
double weighted_nll(const LearnerParams& params, std::span<const int> x, std::span<const int> y,
                    const TokenWeights& weights, const std::optional<DropoutSpec>& dropout);

// Exact gradient of weighted_nll.
LearnerParams grad_supervised(const LearnerParams& params, std::span<const int> x, std::span<const int> y,
                              const TokenWeights& weights, const std::optional<DropoutSpec>& dropout,
                              double* loss = nullptr);

// Mean entropy of p(. | x; hyp_<t) over the hypothesis steps.
double avg_token_entropy(const LearnerParams& params, std::span<const int> x, const Hypothesis& hyp);

}  // namespace selfreg
