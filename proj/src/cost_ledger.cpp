#include "selfreg/cost_ledger.hpp"

#include <cmath>
#include <string>

namespace selfreg {

CostLedger ledger_add(CostLedger ledger, FeedbackType type, double cost) {
  if (!(cost >= 0.0) || !std::isfinite(cost))
    throw Error("feedback cost must be a finite nonnegative number, got " + std::to_string(cost));
  ledger.total += cost;
  ledger.per_type[index_of(type)] += cost;
  ledger.per_type_counts[index_of(type)] += 1;
  return ledger;
}

}  // namespace selfreg
