#pragma once

#include <array>
#include <cstdint>

#include "selfreg/common.hpp"

namespace selfreg {

// Cumulative teacher effort. Units mix character edits and word clicks.
struct CostLedger {
  double total = 0.0;
  std::array<double, 4> per_type{};
  std::array<std::int64_t, 4> per_type_counts{};

  double cost(FeedbackType t) const { return per_type[index_of(t)]; }
  std::int64_t count(FeedbackType t) const { return per_type_counts[index_of(t)]; }
  bool operator==(const CostLedger&) const = default;
};

// Throws on negative cost.
CostLedger ledger_add(CostLedger ledger, FeedbackType type, double cost);

}  // namespace selfreg
