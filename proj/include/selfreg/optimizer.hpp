#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selfreg/nn.hpp"

namespace selfreg {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

// Flattened (name, block) view of any parameter struct exposing visit().
template <class Params>
std::vector<std::pair<std::string, nn::MatrixXd*>> block_list(Params& p) {
  std::vector<std::pair<std::string, nn::MatrixXd*>> out;
  p.visit([&](const std::string& name, nn::MatrixXd& m) { out.emplace_back(name, &m); });
  return out;
}

template <class Params>
std::vector<std::pair<std::string, const nn::MatrixXd*>> block_list(const Params& p) {
  std::vector<std::pair<std::string, const nn::MatrixXd*>> out;
  p.visit([&](const std::string& name, const nn::MatrixXd& m) { out.emplace_back(name, &m); });
  return out;
}

// First and second moment accumulators, shaped like the parameters.
template <class Params>
struct AdamState {
  Params m;
  Params v;
  long step = 0;

  static AdamState zeros_like(const Params& p) { return {Params::zeros_like(p), Params::zeros_like(p), 0}; }
};

// Throws naming the first block that holds a NaN or infinity.
template <class Params>
void check_finite(const Params& g, std::string_view what) {
  for (const auto& [name, m] : block_list(g))
    if (!m->allFinite()) throw Error(std::string(what) + ": non-finite entry in block '" + name + "'");
}

// Mean of equally-shaped gradients, summed in list order.
template <class Params>
Params mean_gradient(std::span<const Params> grads) {
  if (grads.empty()) throw Error("mean_gradient needs at least one gradient");
  Params acc = grads[0];
  auto dst = block_list(acc);
  for (std::size_t k = 1; k < grads.size(); ++k) {
    auto src = block_list(grads[k]);
    if (src.size() != dst.size()) throw Error("gradient shape mismatch");
    for (std::size_t b = 0; b < dst.size(); ++b) {
      if (src[b].second->rows() != dst[b].second->rows() || src[b].second->cols() != dst[b].second->cols())
        throw Error("gradient shape mismatch in block '" + dst[b].first + "'");
      *dst[b].second += *src[b].second;
    }
  }
  if (grads.size() > 1)
    for (auto& [name, m] : dst) *m /= static_cast<double>(grads.size());
  return acc;
}

// One descent step on `grad`.
template <class Params>
void optimizer_step(Params& params, AdamState<Params>& state, const Params& grad, const OptimizerConfig& cfg) {
  check_finite(grad, "gradient");
  auto p = block_list(params);
  auto g = block_list(grad);
  if (cfg.kind == OptimizerKind::Sgd) {
    for (std::size_t b = 0; b < p.size(); ++b) *p[b].second -= cfg.learning_rate * *g[b].second;
    ++state.step;
    return;
  }
  auto m = block_list(state.m);
  auto v = block_list(state.v);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < p.size(); ++b) {
    auto& mb = *m[b].second;
    auto& vb = *v[b].second;
    const auto& gb = *g[b].second;
    mb = cfg.beta1 * mb + (1.0 - cfg.beta1) * gb;
    vb = cfg.beta2 * vb + (1.0 - cfg.beta2) * gb.cwiseProduct(gb);
    p[b].second->array() -=
        cfg.learning_rate * (mb.array() / bc1) / ((vb.array() / bc2).sqrt() + cfg.epsilon);
  }
}

// Averages the gradients and applies one optimizer step.
template <class Params>
void accumulate_and_update(Params& params, AdamState<Params>& state, std::span<const Params> grads,
                           const OptimizerConfig& cfg) {
  for (const auto& g : grads) check_finite(g, "gradient");
  optimizer_step(params, state, mean_gradient(grads), cfg);
}

}  // namespace selfreg
