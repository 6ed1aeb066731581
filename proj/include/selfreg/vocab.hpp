#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace selfreg {

enum class Scheme { Whitespace, Character };

std::string_view to_string(Scheme s);
Scheme parse_scheme(std::string_view name);

// Splits text into surface tokens. Character scheme splits on UTF-8 code
// points and keeps spaces as tokens.
std::vector<std::string> split_tokens(std::string_view text, Scheme scheme);
std::string join_tokens(std::span<const std::string> tokens, Scheme scheme);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  static Vocabulary from_tokens(std::span<const std::string> tokens);
  static Vocabulary from_texts(std::span<const std::string> texts, Scheme scheme);

  // Returns the id of tok, inserting it if absent.
  int add(std::string_view tok);
  // UNK for out-of-vocabulary tokens.
  int id(std::string_view tok) const;
  bool contains(std::string_view tok) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct Sequence {
  std::vector<int> ids;
  std::string surface;
  Scheme scheme = Scheme::Whitespace;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const Sequence&) const = default;
};

// No BOS/EOS is inserted; decoders add them.
Sequence tokenize(std::string_view text, Scheme scheme, const Vocabulary& vocab);
// Builds a sequence from ids, rendering the surface from the vocabulary.
Sequence detokenize(std::span<const int> ids, const Vocabulary& vocab, Scheme scheme);

}  // namespace selfreg
