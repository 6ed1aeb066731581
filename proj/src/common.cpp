#include "selfreg/common.hpp"

#include <sstream>

namespace selfreg {

std::string_view to_string(FeedbackType t) {
  switch (t) {
    case FeedbackType::Full:
      return "full";
    case FeedbackType::Weak:
      return "weak";
    case FeedbackType::SelfSup:
      return "self";
    case FeedbackType::None:
      return "none";
  }
  throw Error("unknown feedback type");
}

FeedbackType parse_feedback_type(std::string_view name) {
  if (name == "full" || name == "Full") return FeedbackType::Full;
  if (name == "weak" || name == "Weak") return FeedbackType::Weak;
  if (name == "self" || name == "SelfSup" || name == "selfsup") return FeedbackType::SelfSup;
  if (name == "none" || name == "None") return FeedbackType::None;
  throw Error("unknown feedback type '" + std::string(name) + "'");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(base ^ splitmix64(h));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(base ^ splitmix64(a)) ^ (b * 0x9e3779b97f4a7c15ULL + 1));
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw Error("corrupt RNG state");
  return rng;
}

}  // namespace selfreg
