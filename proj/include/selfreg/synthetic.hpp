#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "selfreg/config.hpp"
#include "selfreg/corpus.hpp"

namespace selfreg {

// A lexicon-plus-reordering transducer standing in for a translation domain.
// References are exact; a domain shift is a change of lexicon entries and of
// the source token distribution.
struct SyntheticTaskSpec {
  std::vector<std::string> source_tokens;  // support of the source distribution
  std::vector<double> token_weights;       // unnormalized, aligned with source_tokens
  std::map<std::string, std::string> lexicon;
  // Tokens that are moved right past the next `reorder_window` tokens.
  std::set<std::string> movers;
  int reorder_window = 0;
  int domain_id = 0;
  std::uint64_t seed = 0;
  int min_len = 3;
  int max_len = 10;

  void validate() const;
};

// Documented keys of a synthetic spec file.
struct SyntheticConfig {
  int lexicon_size = 200;
  int reorder_window = 1;
  int domain_id = 0;
  std::uint64_t seed = 1;
  // Fraction of lexicon entries that domain_id > 0 remaps to domain-specific targets.
  double shift_fraction = 0.3;
  // Zipf exponent of the source token distribution (ranked per domain).
  double zipf = 1.0;
  int min_len = 4;
  int max_len = 10;

  static SyntheticConfig from(const KvConfig& kv);
  static const std::set<std::string>& keys();
};

// Pseudo-word for lexicon entry `index`: `digits` syllables, one per decimal
// digit. Domain > 0 rotates the syllables and appends a domain marker, so a
// shifted entry shares little surface with the general-domain word.
std::string synthetic_word(std::size_t index, std::size_t digits, int domain);

SyntheticTaskSpec make_domain_spec(const SyntheticConfig& cfg);

// Applies the reordering rule and the lexicon to one source sentence.
std::vector<std::string> transduce(const SyntheticTaskSpec& spec, std::span<const std::string> source);

// Ids are 0..n-1; identical (spec, n) yields identical output.
std::vector<TextPair> gen_synthetic(const SyntheticTaskSpec& spec, int n);

struct DomainCorpus {
  std::vector<TextPair> train, dev, test;
  std::vector<TextPair> lexicon;  // one (source word, target word) pair per entry
};

// Splits of one domain. Each domain draws sentences from its own data stream
// derived from (cfg.seed, domain_id); ids restart at 0 in every split.
DomainCorpus generate_domain(const SyntheticConfig& cfg, int n_train, int n_dev, int n_test);

}  // namespace selfreg
