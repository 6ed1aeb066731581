#include "selfreg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "selfreg/parallel.hpp"
#include "selfreg/vocab.hpp"

namespace selfreg {

std::string DecodeMode::to_string() const {
  return is_greedy() ? std::string("greedy") : "beam(" + std::to_string(beam_width) + ")";
}

DecodeMode DecodeMode::parse(const std::string& s) {
  if (s == "greedy") return greedy();
  if (s.rfind("beam(", 0) == 0 && s.back() == ')') {
    int w = std::stoi(s.substr(5, s.size() - 6));
    if (w < 1) throw Error("beam width must be >= 1");
    return beam(w);
  }
  throw Error("unknown decode mode '" + s + "'");
}

nlohmann::json EvalReport::to_json() const {
  return {{"bleu", bleu},
          {"word_edit_rate", word_edit_rate},
          {"n_sentences", n_sentences},
          {"decode_mode", decode_mode.to_string()}};
}

namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts count_ngrams(std::span<const int> seq, int n) {
  NgramCounts out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= seq.size(); ++i)
    ++out[std::vector<int>(seq.begin() + static_cast<long>(i), seq.begin() + static_cast<long>(i) + n)];
  return out;
}

}  // namespace

double corpus_bleu(std::span<const std::vector<int>> hypotheses, std::span<const std::vector<int>> references) {
  if (hypotheses.size() != references.size())
    throw Error("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw Error("corpus_bleu needs at least one sentence pair");

  std::array<double, kMaxOrder> matches{}, totals{};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const auto& hyp = hypotheses[k];
    std::vector<int> ref = references[k];
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (ref[i] == Vocabulary::kUnk) ref[i] = -1 - static_cast<int>(i);
    hyp_len += static_cast<double>(hyp.size());
    ref_len += static_cast<double>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      auto h = count_ngrams(hyp, n);
      auto r = count_ngrams(ref, n);
      for (const auto& [gram, c] : h) {
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(c, it->second);
        totals[n - 1] += c;
      }
    }
  }
  if (hyp_len == 0 || matches[0] == 0) return 0.0;
  double log_prec = std::log(matches[0] / totals[0]);
  for (int n = 2; n <= kMaxOrder; ++n) log_prec += std::log((matches[n - 1] + 1.0) / (totals[n - 1] + 1.0));
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return std::clamp(100.0 * bp * std::exp(log_prec / kMaxOrder), 0.0, 100.0);
}

double corpus_bleu(std::span<const Sequence> hypotheses, std::span<const Sequence> references) {
  std::vector<std::vector<int>> h, r;
  for (const auto& s : hypotheses) h.push_back(s.ids);
  for (const auto& s : references) r.push_back(s.ids);
  return corpus_bleu(h, r);
}

int word_edit_distance(std::span<const int> hyp, std::span<const int> ref) {
  std::vector<int> prev(ref.size() + 1), cur(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= ref.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

double word_edit_rate(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) throw Error("word_edit_rate: empty reference");
  return static_cast<double>(word_edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

Hypothesis decode(const LearnerParams& params, std::span<const int> x, DecodeMode mode, int max_len) {
  return mode.is_greedy() ? greedy_decode(params, x, max_len) : beam_search(params, x, mode.beam_width, max_len);
}

EvalReport evaluate(const LearnerParams& params, std::span<const ParallelExample> dev, DecodeMode mode,
                    int max_len) {
  if (dev.empty()) throw Error("evaluate: empty dev set");
  std::vector<std::vector<int>> hyps(dev.size()), refs(dev.size());
  parallel_for(dev.size(), [&](std::size_t i) { hyps[i] = decode(params, dev[i].source.ids, mode, max_len).ids; });
  double edits = 0, ref_words = 0;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    refs[i] = dev[i].reference.ids;
    edits += word_edit_distance(hyps[i], refs[i]);
    ref_words += static_cast<double>(refs[i].size());
  }
  EvalReport r;
  r.bleu = corpus_bleu(hyps, refs);
  r.word_edit_rate = edits / ref_words;
  r.n_sentences = static_cast<int>(dev.size());
  r.decode_mode = mode;
  return r;
}

}  // namespace selfreg
