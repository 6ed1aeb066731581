#include "selfreg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "selfreg/common.hpp"

namespace selfreg {

void SyntheticTaskSpec::validate() const {
  if (source_tokens.empty()) throw Error("synthetic spec has no source tokens");
  if (token_weights.size() != source_tokens.size()) throw Error("synthetic spec weights misaligned");
  for (const auto& t : source_tokens)
    if (!lexicon.count(t)) throw Error("lexicon has no entry for source token '" + t + "'");
  if (reorder_window < 0) throw Error("reorder_window must be >= 0");
  if (min_len < 1 || max_len < min_len) throw Error("invalid sentence length range");
}

const std::set<std::string>& SyntheticConfig::keys() {
  static const std::set<std::string> k = {"lexicon_size", "reorder_window", "domain_id", "seed",
                                          "shift_fraction", "zipf", "min_len", "max_len"};
  return k;
}

SyntheticConfig SyntheticConfig::from(const KvConfig& kv) {
  SyntheticConfig c;
  c.lexicon_size = static_cast<int>(kv.get_int("lexicon_size", c.lexicon_size));
  c.reorder_window = static_cast<int>(kv.get_int("reorder_window", c.reorder_window));
  c.domain_id = static_cast<int>(kv.get_int("domain_id", c.domain_id));
  c.seed = kv.get_u64("seed", c.seed);
  c.shift_fraction = kv.get_double("shift_fraction", c.shift_fraction);
  c.zipf = kv.get_double("zipf", c.zipf);
  c.min_len = static_cast<int>(kv.get_int("min_len", c.min_len));
  c.max_len = static_cast<int>(kv.get_int("max_len", c.max_len));
  return c;
}

namespace {

constexpr const char* kSyllables[10] = {"ka", "lo", "mi", "ne", "ru", "so", "ti", "ve", "ba", "du"};
constexpr const char* kMarkers[8] = {"zu", "xa", "qe", "wi", "yo", "fu", "ja", "ho"};

}  // namespace

std::string synthetic_word(std::size_t index, std::size_t digits, int domain) {
  if (domain < 0) throw Error("domain must be >= 0");
  std::string out;
  std::vector<std::size_t> d(digits, 0);
  for (std::size_t k = digits, v = index; k-- > 0; v /= 10) d[k] = v % 10;
  for (std::size_t k = 0; k < digits; ++k)
    out += kSyllables[(d[k] + 3 * static_cast<std::size_t>(domain) * (k + 1)) % 10];
  if (domain > 0) {
    // Marker syllables spell the domain id in base 8, so domains never collide.
    std::string marker;
    for (auto v = static_cast<std::size_t>(domain); v > 0; v /= 8) marker = kMarkers[v % 8] + marker;
    out += marker;
  }
  return out;
}

SyntheticTaskSpec make_domain_spec(const SyntheticConfig& cfg) {
  if (cfg.lexicon_size < 1) throw Error("lexicon_size must be >= 1");
  if (cfg.shift_fraction < 0 || cfg.shift_fraction > 1) throw Error("shift_fraction must be in [0,1]");
  const auto n = static_cast<std::size_t>(cfg.lexicon_size);
  std::size_t digits = 1;
  for (std::size_t cap = 10; cap < n; cap *= 10) ++digits;

  SyntheticTaskSpec spec;
  spec.reorder_window = cfg.reorder_window;
  spec.domain_id = cfg.domain_id;
  spec.seed = cfg.seed;
  spec.min_len = cfg.min_len;
  spec.max_len = cfg.max_len;

  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::vector<std::size_t> shifted;
  if (cfg.domain_id != 0) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(cfg.domain_id), "domain-lexicon"));
    std::shuffle(rank.begin(), rank.end(), rng);
    shifted.assign(rank.begin(), rank.begin() + static_cast<long>(std::lround(cfg.shift_fraction * n)));
    std::shuffle(rank.begin(), rank.end(), rng);
  }
  std::set<std::size_t> shifted_set(shifted.begin(), shifted.end());

  for (std::size_t r = 0; r < n; ++r) {
    std::size_t i = rank[r];
    std::string src = "w" + std::to_string(i);
    std::string trg = synthetic_word(i, digits, shifted_set.count(i) ? cfg.domain_id : 0);
    spec.source_tokens.push_back(src);
    spec.token_weights.push_back(1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf));
    spec.lexicon[src] = trg;
    if (i % 5 == 0) spec.movers.insert(src);
  }
  spec.validate();
  return spec;
}

std::vector<std::string> transduce(const SyntheticTaskSpec& spec, std::span<const std::string> source) {
  std::vector<std::string> order(source.begin(), source.end());
  const auto n = order.size();
  const auto w = static_cast<std::size_t>(spec.reorder_window);
  for (std::size_t i = 0; i < n;) {
    if (w > 0 && spec.movers.count(order[i]) && i + 1 < n) {
      std::size_t k = std::min(w, n - 1 - i);
      std::rotate(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(i + 1),
                  order.begin() + static_cast<long>(i + k + 1));
      i += k + 1;
    } else {
      ++i;
    }
  }
  std::vector<std::string> out;
  out.reserve(n);
  for (const auto& t : order) {
    auto it = spec.lexicon.find(t);
    if (it == spec.lexicon.end()) throw Error("lexicon has no entry for '" + t + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<TextPair> gen_synthetic(const SyntheticTaskSpec& spec, int n) {
  if (n < 1) throw Error("gen_synthetic needs n >= 1");
  spec.validate();
  Rng rng(derive_seed(spec.seed, "data"));
  std::discrete_distribution<std::size_t> pick(spec.token_weights.begin(), spec.token_weights.end());
  std::uniform_int_distribution<int> len(spec.min_len, spec.max_len);
  std::vector<TextPair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    std::vector<std::string> src(static_cast<std::size_t>(len(rng)));
    for (auto& t : src) t = spec.source_tokens[pick(rng)];
    auto trg = transduce(spec, src);
    out.push_back({k, join_tokens(src, Scheme::Whitespace), join_tokens(trg, Scheme::Whitespace)});
  }
  return out;
}

DomainCorpus generate_domain(const SyntheticConfig& cfg, int n_train, int n_dev, int n_test) {
  if (n_train < 0 || n_dev < 0 || n_test < 0) throw Error("split sizes must be >= 0");
  auto spec = make_domain_spec(cfg);
  spec.seed = derive_seed(derive_seed(cfg.seed, "data"), static_cast<std::uint64_t>(cfg.domain_id), 0);
  auto all = gen_synthetic(spec, n_train + n_dev + n_test);
  DomainCorpus out;
  auto take = [&](int from, int n) {
    std::vector<TextPair> v(all.begin() + from, all.begin() + from + n);
    for (std::size_t k = 0; k < v.size(); ++k) v[k].id = static_cast<int>(k);
    return v;
  };
  out.train = take(0, n_train);
  out.dev = take(n_train, n_dev);
  out.test = take(n_train + n_dev, n_test);
  // Entries in index order, independent of the domain's frequency ranking.
  std::vector<std::pair<int, std::string>> entries;
  for (const auto& [src, trg] : spec.lexicon) entries.emplace_back(std::stoi(src.substr(1)), src);
  std::sort(entries.begin(), entries.end());
  for (const auto& [i, src] : entries) out.lexicon.push_back({i, src, spec.lexicon.at(src)});
  return out;
}

}  // namespace selfreg
