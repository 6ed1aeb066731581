#pragma once

#include <span>
#include <vector>

#include "selfreg/loop.hpp"

namespace selfreg {

struct CurvePoint {
  double cost = 0.0;
  double bleu = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

// (0, initial BLEU) followed by one point per iteration.
std::vector<CurvePoint> curve_of(const RunLog& log);

// Step interpolation: BLEU of the last point whose cost is <= `cost`. Costs
// are non-decreasing, so among equal-cost points the latest wins.
double bleu_at_cost(std::span<const CurvePoint> curve, double cost);

// Mean of a(c) - b(c) over `grid` evenly spaced costs in [0, min(max cost of
// a, max cost of b)]. Positive means a is better at equal cost on average.
double mean_bleu_gap(std::span<const CurvePoint> a, std::span<const CurvePoint> b, int grid = 200);

// Best BLEU seen at or below `max_cost` (the initial point included), i.e.
// what best-model selection delivers on that budget.
double best_bleu_within(std::span<const CurvePoint> curve, double max_cost);

}  // namespace selfreg
