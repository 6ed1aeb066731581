#include "selfreg/corpus.hpp"

#include <fstream>

#include "selfreg/common.hpp"

namespace selfreg {

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

}  // namespace

ParallelText load_parallel(const std::filesystem::path& source_path,
                           const std::filesystem::path& target_path) {
  auto src = read_lines(source_path);
  auto trg = read_lines(target_path);
  if (src.size() != trg.size()) {
    throw Error("line count mismatch: '" + source_path.string() + "' has " + std::to_string(src.size()) +
                " lines, '" + target_path.string() + "' has " + std::to_string(trg.size()));
  }
  ParallelText out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (blank(src[i]) || blank(trg[i])) {
      ++out.skipped_blank;
      continue;
    }
    out.pairs.push_back({static_cast<int>(i), std::move(src[i]), std::move(trg[i])});
  }
  return out;
}

void write_parallel(const std::filesystem::path& source_path, const std::filesystem::path& target_path,
                    const std::vector<TextPair>& pairs) {
  std::ofstream s(source_path), t(target_path);
  if (!s) throw Error("cannot write '" + source_path.string() + "'");
  if (!t) throw Error("cannot write '" + target_path.string() + "'");
  for (const auto& p : pairs) {
    s << p.source << '\n';
    t << p.target << '\n';
  }
}

std::vector<ParallelExample> make_examples(const std::vector<TextPair>& pairs, Scheme scheme,
                                           const Vocabulary& src_vocab, const Vocabulary& trg_vocab) {
  std::vector<ParallelExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs)
    out.push_back({p.id, tokenize(p.source, scheme, src_vocab), tokenize(p.target, scheme, trg_vocab)});
  return out;
}

}  // namespace selfreg
