#include "selfreg/feedback.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "selfreg/parallel.hpp"

namespace selfreg {

int char_edit_cost(std::string_view hyp, std::string_view ref) {
  const auto a = split_tokens(hyp, Scheme::Character);
  const auto b = split_tokens(ref, Scheme::Character);
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const int lcs = prev[b.size()];
  return static_cast<int>(a.size() + b.size()) - 2 * lcs;
}

MarkingResult mark_correct(std::span<const std::string> hyp, std::span<const std::string> ref) {
  MarkingResult out;
  out.marked.assign(hyp.size(), false);
  // run[i][j]: length of the common run ending at hyp[i-1], ref[j-1]
  std::vector<std::vector<int>> run(hyp.size() + 1, std::vector<int>(ref.size() + 1, 0));
  int longest = 0;
  for (std::size_t i = 1; i <= hyp.size(); ++i)
    for (std::size_t j = 1; j <= ref.size(); ++j)
      if (hyp[i - 1] == ref[j - 1]) {
        run[i][j] = run[i - 1][j - 1] + 1;
        longest = std::max(longest, run[i][j]);
      }
  if (longest == 0) return out;

  // Start positions in hyp of length-L windows that occur somewhere in ref.
  std::vector<bool> starts(hyp.size(), false);
  for (std::size_t i = 1; i <= hyp.size(); ++i)
    for (std::size_t j = 1; j <= ref.size(); ++j)
      if (run[i][j] >= longest) starts[i - static_cast<std::size_t>(longest)] = true;

  std::size_t i = 0;
  while (i < hyp.size()) {
    if (starts[i]) {
      for (int k = 0; k < longest; ++k) out.marked[i + static_cast<std::size_t>(k)] = true;
      out.n_marked += longest;
      i += static_cast<std::size_t>(longest);
    } else {
      ++i;
    }
  }
  return out;
}

MarkingResult mark_correct(const Sequence& hyp, const Sequence& ref) {
  const auto h = split_tokens(hyp.surface, hyp.scheme);
  const auto r = split_tokens(ref.surface, ref.scheme);
  return mark_correct(h, r);
}

PregenTargets pregenerate_targets(const LearnerParams& params0, std::span<const ParallelExample> corpus,
                                  const Vocabulary& trg_vocab, Scheme scheme, int beam_width, int max_len) {
  std::vector<Hypothesis> hyps(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    hyps[i] = beam_search(params0, corpus[i].source.ids, beam_width, max_len);
    hyps[i].surface = detokenize(hyps[i].ids, trg_vocab, scheme).surface;
  });
  PregenTargets out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!out.emplace(corpus[i].id, std::move(hyps[i])).second)
      throw Error("duplicate example id " + std::to_string(corpus[i].id));
  }
  return out;
}

void save_pregen(const std::filesystem::path& path, const PregenTargets& targets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [id, h] : targets) {
    nlohmann::json j = {{"id", id},
                        {"ids", h.ids},
                        {"surface", h.surface},
                        {"token_logprobs", h.token_logprobs},
                        {"score", h.score},
                        {"finished", h.finished}};
    out << j.dump() << '\n';
  }
}

PregenTargets load_pregen(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  PregenTargets out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Hypothesis h;
      h.ids = j.at("ids").get<std::vector<int>>();
      h.surface = j.at("surface").get<std::string>();
      h.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
      h.score = j.at("score").get<double>();
      h.finished = j.at("finished").get<bool>();
      out[j.at("id").get<int>()] = std::move(h);
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

const Hypothesis& pregen_lookup(const PregenTargets& targets, int id) {
  auto it = targets.find(id);
  if (it == targets.end()) throw Error("no pre-generated target for example id " + std::to_string(id));
  return it->second;
}

FeedbackResponse weak_response(const Hypothesis& hyp, const std::vector<bool>& marked) {
  if (marked.size() != hyp.ids.size())
    throw Error("marking has " + std::to_string(marked.size()) + " entries, hypothesis has " +
                std::to_string(hyp.ids.size()) + " tokens");
  FeedbackResponse r;
  r.type = FeedbackType::Weak;
  r.target = hyp.ids;
  r.weights.f.resize(marked.size());
  int n = 0;
  for (std::size_t t = 0; t < marked.size(); ++t) {
    r.weights.f[t] = marked[t] ? 1.0 : 0.0;
    n += marked[t] ? 1 : 0;
  }
  // The end of a finished hypothesis counts as correct when its last word is.
  r.weights.eos = hyp.finished && !marked.empty() && marked.back() ? 1.0 : 0.0;
  r.cost = n;
  return r;
}

FeedbackResponse full_response(const Sequence& correction, double cost) {
  FeedbackResponse r;
  r.type = FeedbackType::Full;
  r.target = correction.ids;
  r.weights = TokenWeights::ones(correction.ids.size());
  r.cost = cost;
  return r;
}

FeedbackResponse zero_cost_response(FeedbackType type, const Hypothesis& hyp, double p_att) {
  FeedbackResponse r;
  r.type = type;
  r.target = hyp.ids;
  if (type == FeedbackType::SelfSup) {
    r.weights = TokenWeights::ones(hyp.ids.size());
    r.weights.eos = hyp.finished ? 1.0 : 0.0;
    r.dropout_prob = p_att;
  } else if (type == FeedbackType::None) {
    r.weights = TokenWeights::zeros(hyp.ids.size());
  } else {
    throw Error("feedback type '" + std::string(to_string(type)) + "' has a non-zero cost");
  }
  return r;
}

FeedbackResponse provide_feedback(FeedbackType type, const ParallelExample& example, const Hypothesis& hyp,
                                  Scheme scheme, double p_att) {
  switch (type) {
    case FeedbackType::Full:
      return full_response(example.reference, char_edit_cost(hyp.surface, example.reference.surface));
    case FeedbackType::Weak: {
      Sequence h{hyp.ids, hyp.surface, scheme};
      return weak_response(hyp, mark_correct(h, example.reference).marked);
    }
    case FeedbackType::SelfSup:
    case FeedbackType::None:
      return zero_cost_response(type, hyp, p_att);
  }
  throw Error("unknown feedback type");
}

}  // namespace selfreg
