#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "selfreg/corpus.hpp"
#include "selfreg/learner.hpp"

namespace selfreg {

struct DecodeMode {
  int beam_width = 0;  // 0 = greedy

  static DecodeMode greedy() { return {0}; }
  static DecodeMode beam(int width) { return {width}; }
  bool is_greedy() const { return beam_width == 0; }
  std::string to_string() const;  // "greedy" | "beam(5)"
  static DecodeMode parse(const std::string& s);
  bool operator==(const DecodeMode&) const = default;
};

struct EvalReport {
  double bleu = 0.0;
  double word_edit_rate = 0.0;
  int n_sentences = 0;
  DecodeMode decode_mode;

  nlohmann::json to_json() const;
  bool operator==(const EvalReport&) const = default;
};

// Corpus BLEU-4 in [0, 100]: geometric mean of modified n-gram precisions
// times the brevity penalty. Orders 2-4 use add-one smoothing on numerator and
// denominator. UNK tokens in references never match.
double corpus_bleu(std::span<const std::vector<int>> hypotheses, std::span<const std::vector<int>> references);
double corpus_bleu(std::span<const Sequence> hypotheses, std::span<const Sequence> references);

// Word-level Levenshtein distance over reference length (no block shifts).
double word_edit_rate(std::span<const int> hypothesis, std::span<const int> reference);
int word_edit_distance(std::span<const int> hypothesis, std::span<const int> reference);

Hypothesis decode(const LearnerParams& params, std::span<const int> x, DecodeMode mode, int max_len);

// Decodes every dev source and scores the corpus. Pure in (params, dev, mode).
EvalReport evaluate(const LearnerParams& params, std::span<const ParallelExample> dev, DecodeMode mode,
                    int max_len);

}  // namespace selfreg
