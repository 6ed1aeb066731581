#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfreg/common.hpp"
#include "selfreg/corpus.hpp"
#include "selfreg/learner.hpp"
#include "selfreg/vocab.hpp"

namespace selfreg {

struct MarkingResult {
  std::vector<bool> marked;
  int n_marked = 0;
  bool operator==(const MarkingResult&) const = default;
};

// What the teacher hands back for one item: a training target, per-token
// weights, whether the decoder is weakened by attention dropout, and the cost.
struct FeedbackResponse {
  FeedbackType type = FeedbackType::None;
  std::vector<int> target;
  TokenWeights weights;
  double dropout_prob = 0.0;  // > 0 only for SelfSup
  double cost = 0.0;
};

// (|hyp| - LCS) + (|ref| - LCS) over UTF-8 code points.
int char_edit_cost(std::string_view hyp, std::string_view ref);

// Marks every longest common contiguous substring occurrence in the
// hypothesis, scanning left to right without overlap. Tokens compare by text.
MarkingResult mark_correct(std::span<const std::string> hyp, std::span<const std::string> ref);
MarkingResult mark_correct(const Sequence& hyp, const Sequence& ref);

using PregenTargets = std::map<int, Hypothesis>;

// Beam hypotheses decoded once with the initial learner.
PregenTargets pregenerate_targets(const LearnerParams& params0, std::span<const ParallelExample> corpus,
                                  const Vocabulary& trg_vocab, Scheme scheme, int beam_width, int max_len);

void save_pregen(const std::filesystem::path& path, const PregenTargets& targets);
PregenTargets load_pregen(const std::filesystem::path& path);

const Hypothesis& pregen_lookup(const PregenTargets& targets, int id);

// Simulated teacher. The hypothesis must be the pre-generated one.
FeedbackResponse provide_feedback(FeedbackType type, const ParallelExample& example, const Hypothesis& hyp,
                                  Scheme scheme, double p_att);

// Response for a Weak submission with explicit marks (used by the service).
FeedbackResponse weak_response(const Hypothesis& hyp, const std::vector<bool>& marked);
FeedbackResponse full_response(const Sequence& correction, double cost);
FeedbackResponse zero_cost_response(FeedbackType type, const Hypothesis& hyp, double p_att);

}  // namespace selfreg
