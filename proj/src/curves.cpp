#include "selfreg/curves.hpp"

#include <algorithm>

namespace selfreg {

std::vector<CurvePoint> curve_of(const RunLog& log) {
  std::vector<CurvePoint> out{{0.0, log.initial_val_bleu()}};
  for (const auto& r : log.records) out.push_back({r.cumulative_cost, r.val_bleu});
  return out;
}

double bleu_at_cost(std::span<const CurvePoint> curve, double cost) {
  if (curve.empty()) throw Error("empty curve");
  if (cost < curve.front().cost) throw Error("cost below the start of the curve");
  // First point with cost > `cost`; the one before it is the answer.
  auto it = std::upper_bound(curve.begin(), curve.end(), cost,
                             [](double c, const CurvePoint& p) { return c < p.cost; });
  return std::prev(it)->bleu;
}

double mean_bleu_gap(std::span<const CurvePoint> a, std::span<const CurvePoint> b, int grid) {
  if (a.empty() || b.empty()) throw Error("empty curve");
  if (grid < 1) throw Error("grid must be >= 1");
  const double hi = std::min(a.back().cost, b.back().cost);
  if (grid == 1 || hi <= 0.0) return bleu_at_cost(a, 0.0) - bleu_at_cost(b, 0.0);
  double sum = 0.0;
  for (int k = 0; k < grid; ++k) {
    const double c = hi * static_cast<double>(k) / static_cast<double>(grid - 1);
    sum += bleu_at_cost(a, c) - bleu_at_cost(b, c);
  }
  return sum / static_cast<double>(grid);
}

double best_bleu_within(std::span<const CurvePoint> curve, double max_cost) {
  if (curve.empty()) throw Error("empty curve");
  double best = curve.front().bleu;
  for (const auto& p : curve)
    if (p.cost <= max_cost) best = std::max(best, p.bleu);
  return best;
}

}  // namespace selfreg
