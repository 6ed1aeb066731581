#include "selfreg/vocab.hpp"

#include "selfreg/common.hpp"

namespace selfreg {

std::string_view to_string(Scheme s) { return s == Scheme::Whitespace ? "whitespace" : "character"; }

Scheme parse_scheme(std::string_view name) {
  if (name == "whitespace") return Scheme::Whitespace;
  if (name == "character") return Scheme::Character;
  throw Error("unknown tokenization scheme '" + std::string(name) + "'");
}

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;  // stray continuation byte, treated as its own symbol
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

}  // namespace

std::vector<std::string> split_tokens(std::string_view text, Scheme scheme) {
  std::vector<std::string> out;
  if (scheme == Scheme::Whitespace) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      std::size_t j = i;
      while (j < text.size() && !is_space(text[j])) ++j;
      if (j > i) out.emplace_back(text.substr(i, j - i));
      i = j;
    }
    return out;
  }
  for (std::size_t i = 0; i < text.size();) {
    std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    if (text[i] != '\n' && text[i] != '\r') out.emplace_back(text.substr(i, n));
    i += n;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens, Scheme scheme) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (scheme == Scheme::Whitespace && i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<unk>", "<s>", "</s>"}) add(s);
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

Vocabulary Vocabulary::from_texts(std::span<const std::string> texts, Scheme scheme) {
  Vocabulary v;
  for (const auto& text : texts)
    for (const auto& t : split_tokens(text, scheme)) v.add(t);
  return v;
}

int Vocabulary::add(std::string_view tok) {
  auto it = token_to_id_.find(std::string(tok));
  if (it != token_to_id_.end()) return it->second;
  int id = size();
  token_to_id_.emplace(std::string(tok), id);
  id_to_token_.emplace_back(tok);
  return id;
}

int Vocabulary::id(std::string_view tok) const {
  auto it = token_to_id_.find(std::string(tok));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view tok) const { return token_to_id_.count(std::string(tok)) > 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id " + std::to_string(id) + " out of vocabulary range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

Sequence tokenize(std::string_view text, Scheme scheme, const Vocabulary& vocab) {
  auto toks = split_tokens(text, scheme);
  if (toks.empty()) throw Error("empty input");
  Sequence seq;
  seq.scheme = scheme;
  seq.ids.reserve(toks.size());
  for (const auto& t : toks) seq.ids.push_back(vocab.id(t));
  seq.surface = join_tokens(toks, scheme);
  return seq;
}

Sequence detokenize(std::span<const int> ids, const Vocabulary& vocab, Scheme scheme) {
  Sequence seq;
  seq.scheme = scheme;
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int id : ids) {
    seq.ids.push_back(id);
    toks.push_back(vocab.token(id));
  }
  seq.surface = join_tokens(toks, scheme);
  return seq;
}

}  // namespace selfreg
