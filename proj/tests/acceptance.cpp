// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "selfreg/checkpoint.hpp"
#include "selfreg/cli.hpp"
#include "selfreg/curves.hpp"
#include "selfreg/feedback.hpp"
#include "selfreg/loop.hpp"
#include "selfreg/synthetic.hpp"
#include "test_util.hpp"

using namespace selfreg;
using namespace selfreg::testing;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

std::string num(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

void report(const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

// Runs one check, turning an escaped exception into a failure line.
template <class F>
void criterion(const std::string& name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

// ---------------------------------------------------------------- learner

void gradient_check() {
  const auto t0 = clk::now();
  auto p = random_params(tiny_config(16, 8), 42, 2.0);
  const std::vector<int> x{4, 9, 13, 6, 11}, y{5, 7, 12, 8};
  struct Mode {
    const char* name;
    TokenWeights w;
    std::optional<DropoutSpec> drop;
  };
  const std::vector<Mode> modes = {
      {"full", TokenWeights::ones(4), std::nullopt},
      {"weak", TokenWeights{{1, 0, 1, 1}, 0.0}, std::nullopt},
      {"self", TokenWeights::ones(4), DropoutSpec{0.4, 77}},
      {"none", TokenWeights::zeros(4), std::nullopt},
  };
  double worst = 0.0;
  std::size_t coords = 0;
  for (const auto& m : modes) {
    auto g = grad_supervised(p, x, y, m.w, m.drop);
    auto c = finite_difference_check<LearnerParams>(
        p, g, [&](const LearnerParams& q) { return weighted_nll(q, x, y, m.w, m.drop); });
    worst = std::max(worst, c.max_rel_error);
    coords += c.checked;
  }
  // The dropout mode must actually drop something, or it checks nothing new.
  const auto mask = attention_mask(DropoutSpec{0.4, 77}, 5, 5);
  const bool masked = mask.minCoeff() == 0.0;
  const double secs = seconds_since(t0);
  report("gradient-finite-differences", worst < 1e-4 && masked && secs < 60,
         "max rel err " + num(worst, 3) + " over " + std::to_string(coords) + " coords, 4 modes, " + num(secs, 3) +
             " s");
}

void mode_identities() {
  auto p = random_params(tiny_config(16, 8), 8, 2.0);
  const std::vector<int> x{4, 5, 6, 9};
  Hypothesis hyp;
  hyp.ids = {7, 8, 9, 10};
  hyp.surface = "a b c d";
  hyp.finished = true;
  const OptimizerConfig sgd{OptimizerKind::Sgd, 0.1};

  auto step = [&](const FeedbackResponse& r, int j) {
    auto q = p;
    auto s = LearnerOptimizerState::zeros_like(q);
    std::optional<DropoutSpec> d;
    if (r.dropout_prob > 0.0 || r.type == FeedbackType::SelfSup) d = DropoutSpec{r.dropout_prob, 100u + j};
    std::vector<LearnerParams> g{grad_supervised(p, x, r.target, r.weights, d)};
    accumulate_and_update<LearnerParams>(q, s, g, sgd);
    return q;
  };
  Sequence ref;
  ref.ids = hyp.ids;
  ref.surface = hyp.surface;
  const auto full = step(full_response(ref, 0.0), 0);
  const auto weak = step(weak_response(hyp, std::vector<bool>(4, true)), 0);
  const auto self0 = step(zero_cost_response(FeedbackType::SelfSup, hyp, 0.0), 0);
  const auto none = step(zero_cost_response(FeedbackType::None, hyp, 0.1), 0);
  const double d_weak = max_abs_diff(full, weak), d_self = max_abs_diff(full, self0), d_none = max_abs_diff(p, none);
  report("mode-identities", d_weak <= 1e-9 && d_self <= 1e-9 && d_none == 0.0,
         "SGD step |weak(all marked)-full| " + num(d_weak, 3) + ", |self(p_att=0)-full on hyp| " + num(d_self, 3) +
             ", |none-theta| " + num(d_none, 3));
}

// ---------------------------------------------------------------- costs

void cost_oracles() {
  Rng rng(2718);
  const std::vector<std::string> alphabet{"a", "b", "c", " ", "\xc3\xa9"};
  int edit_mismatch = 0;
  for (int k = 0; k < 1000; ++k) {
    auto a = oracle::random_string(rng, 12, alphabet), b = oracle::random_string(rng, 12, alphabet);
    if (char_edit_cost(a, b) !=
        oracle::insert_delete_distance(split_tokens(a, Scheme::Character), split_tokens(b, Scheme::Character)))
      ++edit_mismatch;
  }
  int mark_mismatch = 0;
  for (int k = 0; k < 1000; ++k) {
    auto h = oracle::random_words(rng, 0, 10, 4), r = oracle::random_words(rng, 0, 10, 4);
    if (mark_correct(h, r).marked != oracle::marking(h, r)) ++mark_mismatch;
  }
  const int table = mark_correct(split_tokens(fixtures::kWeakHyp, Scheme::Whitespace),
                                 split_tokens(fixtures::kWeakRef, Scheme::Whitespace))
                        .n_marked;
  report("cost-oracles", edit_mismatch == 0 && mark_mismatch == 0 && table == 9,
         "char edit mismatches " + std::to_string(edit_mismatch) + "/1000, marking mismatches " +
             std::to_string(mark_mismatch) + "/1000, weak table example marks " + std::to_string(table));
}

// ---------------------------------------------------------------- regulator

RegulatorParams tiny_regulator(std::uint64_t seed, double scale) {
  RegulatorConfig cfg;
  cfg.encoder_hidden = 4;
  cfg.state_hidden = 5;
  auto learner = random_params(tiny_config(), seed, 1.0);
  Rng rng(seed + 1);
  auto p = RegulatorParams::init(cfg, learner, rng);
  p.visit([&](const std::string&, nn::MatrixXd& m) { m *= scale; });
  return p;
}

std::vector<RegulatorSample> random_batch(const RegulatorParams& p, Rng& rng, int n) {
  std::vector<RegulatorSample> batch;
  std::uniform_int_distribution<int> act(0, p.num_actions() - 1), cost(0, 30);
  std::uniform_real_distribution<double> u(-0.8, 0.8), pos(0.1, 1.0);
  for (int i = 0; i < n; ++i) {
    RegulatorInput in;
    in.source = random_ids(rng, 1 + i % 4, 16);
    in.hypothesis = random_ids(rng, i % 3, 16);
    in.state = RegulatorState::initial(p);
    for (auto& v : in.state.h) v = u(rng);
    for (auto& v : in.state.c) v = u(rng);
    for (auto& v : in.state.prev_distribution) v = pos(rng);
    in.state.prev_distribution /= in.state.prev_distribution.sum();
    batch.push_back({in, act(rng), static_cast<double>(cost(rng))});
  }
  return batch;
}

double mean_logprob(const RegulatorParams& p, std::span<const RegulatorSample> batch) {
  double s = 0.0;
  for (const auto& b : batch) s += regulator_logprob(p, b.input, b.action_index);
  return s / static_cast<double>(batch.size());
}

void reward_and_update() {
  const double r = reward(0.5, 9, 1);
  auto p = tiny_regulator(7, 3.0);
  Rng rng(11);
  auto batch = random_batch(p, rng, 6);
  const double delta = 0.7, alpha = 1.0;
  auto g = regulator_grad(p, batch, delta, alpha);
  auto fd = finite_difference_check<RegulatorParams>(
      p, g,
      [&](const RegulatorParams& q) {
        double s = 0.0;
        for (const auto& b : batch) s += regulator_logprob(q, b.input, b.action_index) / (b.cost + alpha);
        return delta * s / static_cast<double>(batch.size());
      },
      1e-5, 1e-6);
  // Ascent with a positive improvement over random draws. The literal check
  // is the plain batch mean with mixed per-item costs; equal costs and the
  // cost-weighted objective are reported next to it.
  int plain = 0, equal_cost = 0, weighted = 0;
  auto weighted_mean = [](const RegulatorParams& q, std::span<const RegulatorSample> b) {
    double s = 0.0;
    for (const auto& x : b) s += regulator_logprob(q, x.input, x.action_index) / (x.cost + 1.0);
    return s / static_cast<double>(b.size());
  };
  auto ascend = [](RegulatorParams q, std::span<const RegulatorSample> b) {
    auto grad = regulator_grad(q, b, 0.5, 1.0);
    grad.visit([](const std::string&, nn::MatrixXd& m) { m = -m; });  // optimizer minimizes
    auto s = RegulatorOptimizerState::zeros_like(q);
    optimizer_step(q, s, grad, OptimizerConfig{OptimizerKind::Sgd, 1e-3});
    return q;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto q = tiny_regulator(30 + seed, 2.0);
    Rng r2(seed);
    auto b = random_batch(q, r2, 8);
    auto stepped = ascend(q, b);
    if (mean_logprob(stepped, b) >= mean_logprob(q, b)) ++plain;
    if (weighted_mean(stepped, b) >= weighted_mean(q, b)) ++weighted;
    auto same = b;
    for (auto& x : same) x.cost = 4.0;
    if (mean_logprob(ascend(q, same), same) >= mean_logprob(q, same)) ++equal_cost;
  }
  report("reward-and-update", r == 0.05 && fd.max_rel_error < 1e-4 && plain == 10,
         "reward(0.5, 9, 1) = " + num(r, 17) + ", regulator grad max rel err " + num(fd.max_rel_error, 3) +
             ", ascent step kept batch-mean log-prob non-decreasing in " + std::to_string(plain) +
             "/10 draws (equal costs " + std::to_string(equal_cost) + "/10, cost-weighted mean " +
             std::to_string(weighted) + "/10)");
}

// ---------------------------------------------------------------- bandit

void bandit_statistics(const RunResult& eg_run, const EpsilonGreedyPolicy& eg, double alpha) {
  Rng rng(4242);
  auto s = BanditState::make(ActionSet::reg3(), 0.25);
  s.chosen = {1, 1, 1};
  s.q = {0.1, 0.05, 0.3};
  int best = 0;
  for (int k = 0; k < 10000; ++k)
    if (bandit_choose(s, rng) == FeedbackType::SelfSup) ++best;
  const double freq = best / 10000.0;

  // Offline replay of the logged rewards of a real run.
  std::map<FeedbackType, std::pair<double, long>> replay;
  for (const auto& rec : eg_run.log.records)
    for (const auto& it : rec.items) {
      auto& [sum, n] = replay[it.action];
      sum += reward(rec.delta, it.cost, alpha);
      ++n;
    }
  // Same summation order as the incremental update is not guaranteed, so the
  // replay recomputes the incremental mean itself.
  std::map<FeedbackType, std::pair<double, long>> incremental;
  for (const auto& rec : eg_run.log.records)
    for (const auto& it : rec.items) {
      auto& [q, n] = incremental[it.action];
      ++n;
      q += (reward(rec.delta, it.cost, alpha) - q) / static_cast<double>(n);
    }
  const auto& st = eg.state();
  bool exact = true;
  double max_dev = 0.0;
  for (std::size_t k = 0; k < st.arms.size(); ++k) {
    auto [q, n] = incremental[st.arms[k]];
    auto [sum, n2] = replay[st.arms[k]];
    if (st.pulls[k] != n || st.q[k] != q) exact = false;
    if (n2 > 0) max_dev = std::max(max_dev, std::abs(st.q[k] - sum / static_cast<double>(n2)));
  }
  report("bandit-statistics", std::abs(freq - 0.75) <= 0.02 && exact,
         "best-arm frequency " + num(freq) + " (eps 0.25, 3 arms, 10000 draws); Q equal to log replay: " +
             (exact ? "exact" : "NO") + " (|Q - plain mean| <= " + num(max_dev, 2) + ")");
}

// ---------------------------------------------------------------- experiments

struct Settings {
  double shift = 0.3;
  int pretrain_epochs = 10;
  double pretrain_lr = 5e-3;
  double learner_lr = 1e-2;
  std::string regulator_optimizer = "sgd";
  double regulator_lr = 0.3;
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 1;
};

struct Setup {
  Vocabulary src_vocab, trg_vocab;
  std::vector<ParallelExample> stream, dev, stream2, dev2;
  LearnerParams theta0;
  double general_dev_bleu = 0.0;
  PregenTargets pregen, pregen2;
  TrainConfig cfg;
  RegulatorConfig rcfg;
};

Setup build_setup(const Settings& s) {
  auto domain = [&](int id) {
    SyntheticConfig c;
    c.lexicon_size = 200;
    c.domain_id = id;
    c.seed = s.data_seed;
    c.shift_fraction = s.shift;
    return generate_domain(c, 5000, 500, 0);
  };
  const auto general = domain(0), shifted = domain(1), third = domain(2);
  Setup st;
  std::vector<std::string> src, trg;
  for (const auto* d : {&general, &shifted, &third})
    for (const auto* split : {&d->train, &d->dev})
      for (const auto& p : *split) {
        src.push_back(p.source);
        trg.push_back(p.target);
      }
  st.src_vocab = Vocabulary::from_texts(src, Scheme::Whitespace);
  st.trg_vocab = Vocabulary::from_texts(trg, Scheme::Whitespace);
  auto ex = [&](const std::vector<TextPair>& pairs) {
    return make_examples(pairs, Scheme::Whitespace, st.src_vocab, st.trg_vocab);
  };
  const auto gtrain = ex(general.train), gdev = ex(general.dev);
  st.stream = ex(shifted.train);
  st.dev = ex(shifted.dev);
  st.stream2 = ex(third.train);
  st.dev2 = ex(third.dev);

  LearnerConfig lc;
  lc.src_vocab_size = st.src_vocab.size();
  lc.trg_vocab_size = st.trg_vocab.size();
  lc.embed_dim = 32;
  lc.hidden_dim = 48;
  lc.max_decode_len = 24;
  Rng rng(derive_seed(s.seed, "learner-init"));
  PretrainConfig pc;
  pc.batch_size = 32;
  pc.max_epochs = s.pretrain_epochs;
  pc.learning_rate = s.pretrain_lr;
  pc.max_decode_len = 24;
  pc.seed = s.seed;
  auto pr = pretrain(LearnerParams::init(lc, rng), gtrain, gdev, pc);
  st.theta0 = pr.best;
  st.general_dev_bleu = pr.best_val;
  st.pregen = pregenerate_targets(st.theta0, st.stream, st.trg_vocab, Scheme::Whitespace, 5, 24);
  st.pregen2 = pregenerate_targets(st.theta0, st.stream2, st.trg_vocab, Scheme::Whitespace, 5, 24);

  st.cfg.batch_size = 32;
  st.cfg.alpha = 1.0;
  st.cfg.max_epochs = 1;
  st.cfg.max_decode_len = 24;
  st.cfg.optimizer.learning_rate = s.learner_lr;
  st.cfg.seed = s.seed;
  st.rcfg.action_set = ActionSet::reg3();
  st.rcfg.alpha = 1.0;
  st.rcfg.optimizer.kind = parse_optimizer(s.regulator_optimizer);
  st.rcfg.optimizer.learning_rate = s.regulator_lr;
  return st;
}

std::string describe(const std::string& name, const RunResult& r) {
  const auto& last = r.log.records.back();
  return name + " final " + num(last.val_bleu) + " best " + num(r.best_val) + " cost " + num(r.ledger.total, 6) +
         " [F" + std::to_string(r.ledger.count(FeedbackType::Full)) + " W" +
         std::to_string(r.ledger.count(FeedbackType::Weak)) + " S" +
         std::to_string(r.ledger.count(FeedbackType::SelfSup)) + "]";
}

std::string run_bytes(const RunResult& r) { return r.log.to_jsonl(); }

void experiments(const Settings& s, const fs::path& work) {
  auto t0 = clk::now();
  const auto st = build_setup(s);
  const double initial = evaluate(st.theta0, st.dev, DecodeMode::greedy(), 24).bleu;
  std::cout << "# setup: vocab " << st.src_vocab.size() << "/" << st.trg_vocab.size() << ", general dev BLEU "
            << num(st.general_dev_bleu) << ", shifted dev BLEU at theta0 " << num(initial) << " ("
            << num(seconds_since(t0), 3) << " s)" << std::endl;

  auto timed = [&](const std::string& name, auto&& run) {
    auto t = clk::now();
    auto r = run();
    const RunResult& rr = [&]() -> const RunResult& {
      if constexpr (std::is_same_v<std::decay_t<decltype(r)>, RegulatedResult>)
        return r.run;
      else
        return r;
    }();
    std::cout << "# " << describe(name, rr) << " (" << num(seconds_since(t), 3) << " s)" << std::endl;
    return r;
  };

  // Full runs first; its numbers set the thresholds of the cost criteria.
  FixedPolicy full_p(FeedbackType::Full), weak_p(FeedbackType::Weak), self_p(FeedbackType::SelfSup);
  const auto full = timed("full", [&] { return run_policy(st.theta0, full_p, st.stream, st.pregen, st.dev, st.cfg); });
  const auto weak = timed("weak", [&] { return run_policy(st.theta0, weak_p, st.stream, st.pregen, st.dev, st.cfg); });
  const auto self = timed("self", [&] { return run_policy(st.theta0, self_p, st.stream, st.pregen, st.dev, st.cfg); });
  Rng rr(derive_seed(s.seed, "regulator-init"));
  const auto phi0 = RegulatorParams::init(st.rcfg, st.theta0, rr);
  const auto reg = timed("reg3",
                         [&] { return run_regulated(st.theta0, st.rcfg, phi0, st.stream, st.pregen, st.dev, st.cfg); });
  std::map<double, RunResult> eg_runs;
  std::unique_ptr<EpsilonGreedyPolicy> eg_half;
  for (double eps : {0.1, 0.5, 0.75, 0.9}) {
    EpsilonGreedyPolicy eg(ActionSet::reg3(), eps, st.cfg.alpha);
    eg_runs.emplace(eps, timed("eps-greedy " + num(eps),
                               [&] { return run_policy(st.theta0, eg, st.stream, st.pregen, st.dev, st.cfg); }));
    if (eps == 0.5) eg_half = std::make_unique<EpsilonGreedyPolicy>(eg);
  }
  std::map<double, RunResult> al_runs;
  for (double gamma : {0.3, 0.5}) {
    UncertaintyPolicy al(gamma);
    al_runs.emplace(gamma, timed("uncertainty " + num(gamma),
                                 [&] { return run_policy(st.theta0, al, st.stream, st.pregen, st.dev, st.cfg); }));
  }

  const auto full_c = curve_of(full.log), reg_c = curve_of(reg.run.log);
  const double full_final = full.log.records.back().val_bleu;

  criterion("bandit-statistics", [&] { bandit_statistics(eg_runs.at(0.5), *eg_half, st.cfg.alpha); });

  criterion("full-highest-final", [&] {
    std::string worst;
    double runner_up = -1.0;
    auto consider = [&](const std::string& name, const RunResult& r) {
      const double v = r.log.records.back().val_bleu;
      if (v > runner_up) {
        runner_up = v;
        worst = name;
      }
    };
    consider("weak", weak);
    consider("self", self);
    consider("reg3", reg.run);
    for (const auto& [eps, r] : eg_runs) consider("eps " + num(eps), r);
    report("full-highest-final", full_final > runner_up,
           "full final " + num(full_final) + " vs best other final " + num(runner_up) + " (" + worst + ")");
  });

  criterion("reg3-half-gain-at-half-cost", [&] {
    const double cost_cap = 0.5 * full.ledger.total;
    const double target = initial + 0.5 * (full_final - initial);
    const double got = best_bleu_within(reg_c, cost_cap);
    report("reg3-half-gain-at-half-cost", got >= target,
           "reg3 best BLEU within cost " + num(cost_cap, 6) + " is " + num(got) + ", needs >= " + num(target) +
               " (initial " + num(initial) + ", full final " + num(full_final) + ")");
  });

  criterion("reg3-dominates-eps-greedy", [&] {
    int dominated = 0;
    std::string gaps;
    for (const auto& [eps, r] : eg_runs) {
      const double gap = mean_bleu_gap(reg_c, curve_of(r.log));
      if (gap > 0) ++dominated;
      gaps += " eps " + num(eps) + ": " + num(gap, 3) + ";";
    }
    report("reg3-dominates-eps-greedy", dominated >= 3,
           std::to_string(dominated) + "/4 dominated, mean BLEU gap at equal cost:" + gaps);
  });

  criterion("reg3-beats-uncertainty", [&] {
    int beaten = 0;
    std::string gaps;
    for (const auto& [gamma, r] : al_runs) {
      const double gap = mean_bleu_gap(reg_c, curve_of(r.log));
      if (gap > 0) ++beaten;
      gaps += " gamma " + num(gamma) + ": " + num(gap, 3) + ";";
    }
    report("reg3-beats-uncertainty", beaten == 2,
           std::to_string(beaten) + "/2 beaten, mean BLEU gap at equal cost:" + gaps);
  });

  criterion("transfer-frozen-regulator", [&] {
    RegulatorCheckpoint ck{st.rcfg, reg.phi, reg.phi_optimizer, reg.phi_state};
    const auto path = work / "transfer_regulator.ckpt";
    ck.save(path);
    const auto before = file_hash(path);
    auto loaded = RegulatorCheckpoint::load(path);
    const double base = evaluate(st.theta0, st.dev2, DecodeMode::greedy(), 24).bleu;
    auto r = timed("transfer", [&] {
      return run_transfer(st.theta0, loaded.config, loaded.params, st.stream2, st.pregen2, st.dev2, st.cfg);
    });
    RegulatorCheckpoint after = loaded;
    after.save(work / "transfer_regulator_after.ckpt");
    const bool same = file_hash(work / "transfer_regulator_after.ckpt") == before && file_hash(path) == before;
    report("transfer-frozen-regulator", same && r.best_val - base > 0,
           "third-domain BLEU reset " + num(base) + " -> best " + num(r.best_val) + " (final " +
               num(r.log.records.back().val_bleu) + "), regulator hash unchanged: " + (same ? "yes" : "NO"));
  });

  criterion("determinism-experiment-scale", [&] {
    auto again = run_regulated(st.theta0, st.rcfg, phi0, st.stream, st.pregen, st.dev, st.cfg);
    RegulatorCheckpoint a{st.rcfg, reg.phi, reg.phi_optimizer, reg.phi_state};
    RegulatorCheckpoint b{st.rcfg, again.phi, again.phi_optimizer, again.phi_state};
    const bool same = run_bytes(again.run) == run_bytes(reg.run) &&
                      a.to_archive().to_bytes() == b.to_archive().to_bytes() &&
                      max_abs_diff(again.run.final_params, reg.run.final_params) == 0.0;
    report("determinism-experiment-scale", same, "reg3 rerun: run log, regulator and learner bytes identical: " +
                                                     std::string(same ? "yes" : "NO"));
  });
  std::cout << "# experiments took " << num(seconds_since(t0), 4) << " s" << std::endl;
}

// ---------------------------------------------------------------- CLI determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  if (code != 0) throw Error("selfreg " + args[0] + " failed: " + err.str());
  return code;
}

// Every command twice into twin directories; every output file must match.
// Paths are relative to each twin so that recorded configs compare too.
void cli_determinism(const fs::path& work) {
  const auto home = fs::current_path();
  struct Restore {
    fs::path dir;
    ~Restore() { fs::current_path(dir); }
  } restore{home};
  std::vector<std::string> compared;
  std::size_t files = 0, differing = 0;
  for (const auto* side : {"a", "b"}) {
    const auto d = work / "cli" / side;
    fs::remove_all(d);
    fs::create_directories(d);
    fs::current_path(d);
    const std::vector<std::string> small = {"n_train=150", "n_dev=20", "n_test=20", "lexicon_size=24",
                                            "min_len=3",   "max_len=6"};
    auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
      a.insert(a.end(), b.begin(), b.end());
      return a;
    };
    cli(with({"gen-data", "--out", "d0"}, small));
    cli(with({"gen-data", "--out", "d1", "domain_id=1"}, small));
    cli(with({"gen-data", "--out", "d2", "domain_id=2"}, small));
    auto p = [](const std::string& rel) { return rel; };
    cli({"pretrain", "--out", p("pre"), "train_source=" + p("d0/train.src"), "train_target=" + p("d0/train.trg"),
         "dev_source=" + p("d0/dev.src"), "dev_target=" + p("d0/dev.trg"),
         "vocab_sources=" + p("d1/train.src") + "," + p("d2/train.src"),
         "vocab_targets=" + p("d1/train.trg") + "," + p("d2/train.trg"), "embed_dim=8", "hidden_dim=8",
         "max_epochs=3", "max_decode_len=8", "beam_width=2"});
    auto stream = [&](const std::string& cmd, const std::string& out, const std::string& dom) {
      return std::vector<std::string>{cmd,
                                      "--out",
                                      p(out),
                                      "learner=" + p("pre/learner.ckpt"),
                                      "stream_source=" + p(dom + "/train.src"),
                                      "stream_target=" + p(dom + "/train.trg"),
                                      "dev_source=" + p(dom + "/dev.src"),
                                      "dev_target=" + p(dom + "/dev.trg"),
                                      "batch_size=16",
                                      "--seed",
                                      "5"};
    };
    cli(with(stream("regulate", "reg", "d1"), {"checkpoint_every=3"}));
    cli(with(stream("baseline", "eg", "d1"), {"policy=epsilon-greedy", "epsilon=0.5"}));
    cli(with(stream("baseline", "al", "d1"), {"policy=uncertainty", "gamma=0.3"}));
    cli(with(stream("transfer", "tr", "d2"), {"regulator=" + p("reg/regulator.ckpt")}));
    cli({"eval", "--out", p("ev"), "learner=" + p("reg/learner_best.ckpt"), "source=" + p("d1/test.src"),
         "target=" + p("d1/test.trg")});
    cli({"export-curves", "--out", p("curves"), "run=" + p("reg/run.jsonl")});
  }
  const auto a = work / "cli" / "a", b = work / "cli" / "b";
  std::vector<std::string> diffs;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ++files;
    const std::string x = slurp(e.path()), y = slurp(b / rel);
    if (x != y) {
      ++differing;
      diffs.push_back(rel.string());
    }
  }
  std::string detail = std::to_string(files) + " output files from gen-data, pretrain, regulate, baseline, " +
                       "transfer, eval and export-curves; differing: " + std::to_string(differing);
  for (const auto& d : diffs) detail += " " + d;
  report("determinism-cli", files > 20 && differing == 0, detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  Settings s;
  std::string work = (fs::temp_directory_path() / "selfreg_acceptance").string();
  bool skip_experiments = false;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--shift", s.shift);
  app.add_option("--pretrain-epochs", s.pretrain_epochs);
  app.add_option("--learner-lr", s.learner_lr);
  app.add_option("--regulator-lr", s.regulator_lr);
  app.add_option("--regulator-optimizer", s.regulator_optimizer);
  app.add_option("--seed", s.seed);
  app.add_option("--data-seed", s.data_seed);
  app.add_flag("--skip-experiments", skip_experiments, "only the fast checks");
  CLI11_PARSE(app, argc, argv);
  work = fs::absolute(work).string();
  fs::create_directories(work);

  const auto t0 = clk::now();
  criterion("gradient-finite-differences", gradient_check);
  criterion("mode-identities", mode_identities);
  criterion("cost-oracles", cost_oracles);
  criterion("reward-and-update", reward_and_update);
  criterion("determinism-cli", [&] { cli_determinism(work); });
  if (!skip_experiments) experiments(s, work);
  std::cout << "# total " << num(seconds_since(t0), 4) << " s, " << failures << " failing" << std::endl;
  return failures == 0 ? 0 : 1;
}
