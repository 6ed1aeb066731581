#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "selfreg/vocab.hpp"

namespace selfreg {

struct TextPair {
  int id = 0;
  std::string source;
  std::string target;
  bool operator==(const TextPair&) const = default;
};

struct ParallelExample {
  int id = 0;
  Sequence source;
  Sequence reference;
};

struct ParallelText {
  std::vector<TextPair> pairs;
  int skipped_blank = 0;
};

// Line i of each file forms pair i (id = line index). Pairs where either side
// is blank are skipped and counted.
ParallelText load_parallel(const std::filesystem::path& source_path,
                           const std::filesystem::path& target_path);

void write_parallel(const std::filesystem::path& source_path, const std::filesystem::path& target_path,
                    const std::vector<TextPair>& pairs);

std::vector<ParallelExample> make_examples(const std::vector<TextPair>& pairs, Scheme scheme,
                                           const Vocabulary& src_vocab, const Vocabulary& trg_vocab);

}  // namespace selfreg
