#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace selfreg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FeedbackType : std::uint8_t { Full = 0, Weak = 1, SelfSup = 2, None = 3 };

inline constexpr std::array<FeedbackType, 4> kAllFeedbackTypes = {
    FeedbackType::Full, FeedbackType::Weak, FeedbackType::SelfSup, FeedbackType::None};

inline constexpr std::size_t index_of(FeedbackType t) { return static_cast<std::size_t>(t); }

// Lowercase names used in logs, configs and the wire protocol.
std::string_view to_string(FeedbackType t);
FeedbackType parse_feedback_type(std::string_view name);

using Rng = std::mt19937_64;

// Seeds for named sub-streams ("data", "learner-init", "sampling", ...) so that
// every component draws from its own reproducible generator.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);

std::string rng_to_string(const Rng& rng);
Rng rng_from_string(const std::string& state);

}  // namespace selfreg
