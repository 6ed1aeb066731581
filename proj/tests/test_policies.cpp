#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "selfreg/policies.hpp"
#include "test_util.hpp"

using namespace selfreg;
using namespace selfreg::testing;

namespace {

RegulatorConfig tiny_regulator_config(const ActionSet& actions = ActionSet::reg3()) {
  RegulatorConfig cfg;
  cfg.encoder_hidden = 4;
  cfg.state_hidden = 5;
  cfg.action_set = actions;
  return cfg;
}

RegulatorParams tiny_regulator(std::uint64_t seed, double scale, const ActionSet& actions = ActionSet::reg3()) {
  auto learner = random_params(tiny_config(), seed, 1.0);
  Rng rng(seed + 1);
  auto p = RegulatorParams::init(tiny_regulator_config(actions), learner, rng);
  p.visit([&](const std::string&, nn::MatrixXd& m) { m *= scale; });
  return p;
}

RegulatorInput random_input(const RegulatorParams& p, Rng& rng, int src_len, int hyp_len) {
  RegulatorInput in;
  in.source = random_ids(rng, src_len, 16);
  in.hypothesis = random_ids(rng, hyp_len, 16);
  std::uniform_real_distribution<double> u(-0.8, 0.8), pos(0.1, 1.0);
  in.state = RegulatorState::initial(p);
  for (auto& v : in.state.h) v = u(rng);
  for (auto& v : in.state.c) v = u(rng);
  for (auto& v : in.state.prev_distribution) v = pos(rng);
  in.state.prev_distribution /= in.state.prev_distribution.sum();
  return in;
}

std::vector<RegulatorSample> random_batch(const RegulatorParams& p, Rng& rng, int n) {
  std::vector<RegulatorSample> batch;
  std::uniform_int_distribution<int> act(0, p.num_actions() - 1), cost(0, 30);
  for (int i = 0; i < n; ++i)
    batch.push_back({random_input(p, rng, 1 + i % 4, i % 3), act(rng), static_cast<double>(cost(rng))});
  batch[0].input.hypothesis.clear();  // empty hypotheses are legal
  return batch;
}

double objective(const RegulatorParams& p, std::span<const RegulatorSample> batch, double delta, double alpha) {
  double s = 0.0;
  for (const auto& b : batch) s += regulator_logprob(p, b.input, b.action_index) / (b.cost + alpha);
  return delta * s / static_cast<double>(batch.size());
}

double mean_logprob(const RegulatorParams& p, std::span<const RegulatorSample> batch) {
  double s = 0.0;
  for (const auto& b : batch) s += regulator_logprob(p, b.input, b.action_index);
  return s / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("ActionSet presets and parsing") {
  CHECK(ActionSet::parse("Reg2").actions == std::vector<FeedbackType>{FeedbackType::Full, FeedbackType::Weak});
  CHECK(ActionSet::parse("reg4").size() == 4);
  CHECK(ActionSet::parse("full, self").actions == std::vector<FeedbackType>{FeedbackType::Full, FeedbackType::SelfSup});
  CHECK_THROWS_AS(ActionSet::parse("full,full"), Error);
  CHECK_THROWS_AS(ActionSet::parse(""), Error);
  CHECK_THROWS_AS(ActionSet::parse("partial"), Error);
}

TEST_CASE("regulator_decide") {
  Rng data(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = tiny_regulator(seed, 3.0);
    auto x = random_ids(data, 5, 16), y = random_ids(data, 4, 16);
    auto st1 = RegulatorState::initial(p), st2 = st1;
    Rng r1(seed), r2(seed);
    auto d1 = regulator_decide(p, ActionSet::reg3(), st1, x, y, r1);
    auto d2 = regulator_decide(p, ActionSet::reg3(), st2, x, y, r2);
    CHECK(d1.action == d2.action);
    CHECK(d1.distribution == d2.distribution);
    CHECK(st1 == st2);
    CHECK(std::accumulate(d1.distribution.begin(), d1.distribution.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d1.logprob == doctest::Approx(std::log(d1.distribution[static_cast<std::size_t>(d1.action_index)])));
    CHECK(d1.logprob <= 0.0);
    CHECK(ActionSet::reg3().actions[static_cast<std::size_t>(d1.action_index)] == d1.action);
    // The state carries forward: the next decision sees the new state.
    CHECK(st1.prev_distribution.sum() == doctest::Approx(1.0));
    CHECK_FALSE(st1 == RegulatorState::initial(p));
  }
  ActionSet single{"full-only", {FeedbackType::Full}};
  auto p1 = tiny_regulator(4, 2.0, single);
  auto st = RegulatorState::initial(p1);
  Rng rng(1);
  auto d = regulator_decide(p1, single, st, std::vector<int>{4, 5}, std::vector<int>{6}, rng);
  CHECK(d.action == FeedbackType::Full);
  CHECK(d.logprob == 0.0);
  CHECK_THROWS_AS(regulator_decide(p1, ActionSet::reg3(), st, std::vector<int>{4}, std::vector<int>{}, rng), Error);
}

TEST_CASE("reward") {
  CHECK(reward(0.5, 9, 1) == 0.05);
  CHECK(reward(0.0, 40, 1) == 0.0);
  CHECK(reward(0.2, 0, 1) == 0.2);
  CHECK(reward(-0.3, 2, 1) < 0.0);
  CHECK_THROWS_AS(reward(0.1, -1, 1), Error);
  CHECK_THROWS_AS(reward(0.1, 1, 0), Error);
}

TEST_CASE("regulator_grad: finite differences, zero and linearity in delta") {
  auto p = tiny_regulator(7, 3.0);
  Rng rng(11);
  auto batch = random_batch(p, rng, 5);
  const double delta = 0.7, alpha = 1.0;
  auto g = regulator_grad(p, batch, delta, alpha);
  auto check = finite_difference_check<RegulatorParams>(
      p, g, [&](const RegulatorParams& q) { return objective(q, batch, delta, alpha); }, 1e-5, 1e-6);
  CHECK(check.checked > 500);
  CHECK(check.max_rel_error < 1e-4);

  CHECK(max_abs(regulator_grad(p, batch, 0.0, alpha)) == 0.0);
  auto g3 = regulator_grad(p, batch, 3.0 * delta, alpha);
  auto scaled = g;
  scaled.visit([](const std::string&, nn::MatrixXd& m) { m *= 3.0; });
  CHECK(max_abs_diff(g3, scaled) <= 1e-12 * std::max(1.0, max_abs(g3)));
  CHECK_THROWS_AS(regulator_grad(p, std::vector<RegulatorSample>{}, 1.0, 1.0), Error);
}

TEST_CASE("regulator_grad: one ascent step moves sampled log-probabilities with the sign of delta") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = tiny_regulator(20 + seed, 2.0);
    Rng rng(seed);
    auto batch = random_batch(p, rng, 8);
    const double before = mean_logprob(p, batch);
    for (double delta : {0.5, -0.5}) {
      auto g = regulator_grad(p, batch, delta, 1.0);
      auto q = p;
      auto s = RegulatorOptimizerState::zeros_like(q);
      g.visit([](const std::string&, nn::MatrixXd& m) { m = -m; });
      optimizer_step(q, s, g, OptimizerConfig{OptimizerKind::Sgd, 1e-2});
      const double after = mean_logprob(q, batch);
      if (delta > 0)
        CHECK(after >= before);
      else
        CHECK(after <= before);
    }
  }
}

TEST_CASE("bandit_choose") {
  Rng rng(2024);
  SUBCASE("cold start pulls each arm once in enum order") {
    auto s = BanditState::make(ActionSet{"x", {FeedbackType::SelfSup, FeedbackType::Full, FeedbackType::Weak}}, 0.0);
    CHECK(bandit_choose(s, rng) == FeedbackType::Full);
    CHECK(bandit_choose(s, rng) == FeedbackType::Weak);
    CHECK(bandit_choose(s, rng) == FeedbackType::SelfSup);
    CHECK(bandit_choose(s, rng) == FeedbackType::Full);  // all Q tie at 0
  }
  SUBCASE("epsilon 0 always exploits") {
    auto s = BanditState::make(ActionSet::reg3(), 0.0);
    s.chosen = {1, 1, 1};
    s.q = {0.1, 0.4, 0.2};
    for (int k = 0; k < 200; ++k) CHECK(bandit_choose(s, rng) == FeedbackType::Weak);
  }
  SUBCASE("epsilon 0.25, three arms") {
    auto s = BanditState::make(ActionSet::reg3(), 0.25);
    s.chosen = {1, 1, 1};
    s.q = {0.1, 0.05, 0.3};
    std::array<int, 3> hits{};
    const int n = 10000;
    for (int k = 0; k < n; ++k) ++hits[static_cast<std::size_t>(s.index(bandit_choose(s, rng)))];
    CHECK(std::abs(hits[2] / double(n) - 0.75) <= 0.02);
    CHECK(std::abs(hits[0] / double(n) - 0.125) <= 0.02);
    CHECK(std::abs(hits[1] / double(n) - 0.125) <= 0.02);
  }
  SUBCASE("epsilon 1, four arms explores the others uniformly") {
    auto s = BanditState::make(ActionSet::reg4(), 1.0);
    s.chosen = {1, 1, 1, 1};
    s.q = {0.0, 0.9, 0.1, 0.2};
    std::array<int, 4> hits{};
    const int n = 10000;
    for (int k = 0; k < n; ++k) ++hits[static_cast<std::size_t>(s.index(bandit_choose(s, rng)))];
    CHECK(hits[1] == 0);
    for (int a : {0, 2, 3}) CHECK(std::abs(hits[static_cast<std::size_t>(a)] / double(n) - 1.0 / 3.0) <= 0.02);
  }
}

TEST_CASE("bandit_update") {
  auto s = BanditState::make(ActionSet::reg3(), 0.1);
  for (double r : {1.0, 0.0, 1.0}) bandit_update(s, FeedbackType::Weak, r);
  CHECK(s.q[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.pulls[1] == 3);
  bandit_update(s, FeedbackType::Full, 0.37);
  CHECK(s.q[0] == 0.37);
  CHECK_THROWS_AS(bandit_update(s, FeedbackType::None, 1.0), Error);

  Rng rng(9);
  std::vector<double> rewards(50);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& r : rewards) r = u(rng);
  auto a = BanditState::make(ActionSet::reg2(), 0.1), b = a;
  for (double r : rewards) bandit_update(a, FeedbackType::Full, r);
  std::shuffle(rewards.begin(), rewards.end(), rng);
  for (double r : rewards) bandit_update(b, FeedbackType::Full, r);
  CHECK(a.q[0] == doctest::Approx(b.q[0]).epsilon(1e-12));
  CHECK(a.q[0] == doctest::Approx(std::accumulate(rewards.begin(), rewards.end(), 0.0) / 50).epsilon(1e-12));
}

TEST_CASE("uncertainty_select") {
  std::vector<double> e{0.1, 0.9, 0.5, 0.7};
  CHECK(uncertainty_select(e, 0.5) == std::vector<std::size_t>{1, 3});
  CHECK(uncertainty_select(e, 1.0) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(uncertainty_select(e, 0.0).empty());
  CHECK(uncertainty_select(e, 0.3) == std::vector<std::size_t>{1, 3});  // ceil(1.2) = 2
  std::vector<double> ties{0.5, 0.5, 0.5};
  CHECK(uncertainty_select(ties, 0.5) == std::vector<std::size_t>{0, 1});
  // 0.3 * 10 is 3.0000000000000004 in floating point; still 3 items.
  CHECK(uncertainty_select(std::vector<double>(10, 1.0), 0.3).size() == 3);
  CHECK_THROWS_AS(uncertainty_select(e, 1.5), Error);
}
