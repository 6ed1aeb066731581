#include "selfreg/loop.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "selfreg/checkpoint.hpp"
#include "selfreg/parallel.hpp"

namespace selfreg {

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(alpha > 0.0)) throw Error("alpha must be > 0");
  if (max_epochs < 1) throw Error("max_epochs must be >= 1");
  if (eval_every < 1) throw Error("eval_every must be >= 1");
  if (max_decode_len < 1) throw Error("max_decode_len must be >= 1");
  if (!(p_att >= 0.0 && p_att < 1.0)) throw Error("p_att must be in [0, 1)");
  if (!(optimizer.learning_rate > 0.0)) throw Error("learning_rate must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"alpha", alpha},
          {"max_epochs", max_epochs},
          {"budget", budget},
          {"eval_every", eval_every},
          {"seed", seed},
          {"val_mode", val_mode.to_string()},
          {"max_decode_len", max_decode_len},
          {"p_att", p_att},
          {"optimizer", to_string(optimizer.kind)},
          {"learning_rate", optimizer.learning_rate},
          {"scheme", to_string(scheme)}};
}

namespace {

const char* kCountNames[4] = {"full", "weak", "self", "none"};

nlohmann::json ledger_json(const CostLedger& l) {
  return {{"total", l.total}, {"per_type", l.per_type}, {"per_type_counts", l.per_type_counts}};
}

CostLedger ledger_from_json(const nlohmann::json& j) {
  CostLedger l;
  l.total = j.at("total").get<double>();
  l.per_type = j.at("per_type").get<std::array<double, 4>>();
  l.per_type_counts = j.at("per_type_counts").get<std::array<std::int64_t, 4>>();
  return l;
}

bool has_signal(const TokenWeights& w) {
  return w.eos != 0.0 || std::any_of(w.f.begin(), w.f.end(), [](double f) { return f != 0.0; });
}

}  // namespace

nlohmann::json RunRecord::to_json() const {
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t k = 0; k < 4; ++k) counts[kCountNames[k]] = action_counts[k];
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : items) its.push_back({{"id", it.id}, {"action", to_string(it.action)}, {"cost", it.cost}});
  return {{"j", j},
          {"cumulative_cost", cumulative_cost},
          {"val_bleu", val_bleu},
          {"delta", delta},
          {"action_counts", counts},
          {"wall_time", wall_time},
          {"items", its}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  r.j = j.at("j").get<int>();
  r.cumulative_cost = j.at("cumulative_cost").get<double>();
  r.val_bleu = j.at("val_bleu").get<double>();
  r.delta = j.at("delta").get<double>();
  for (std::size_t k = 0; k < 4; ++k) r.action_counts[k] = j.at("action_counts").at(kCountNames[k]).get<int>();
  r.wall_time = j.at("wall_time").get<double>();
  for (const auto& it : j.at("items"))
    r.items.push_back({it.at("id").get<int>(), parse_feedback_type(it.at("action").get<std::string>()),
                       it.at("cost").get<double>()});
  return r;
}

std::string RunLog::to_jsonl() const {
  std::string out = nlohmann::json{{"meta", meta}}.dump() + "\n";
  for (const auto& r : records) out += r.to_json().dump() + "\n";
  return out;
}

RunLog RunLog::from_jsonl(const std::string& text) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (first) {
        log.meta = j.at("meta");
        first = false;
      } else {
        log.records.push_back(RunRecord::from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error("run log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (first) throw Error("run log has no meta line");
  return log;
}

void RunLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_jsonl();
}

RunLog RunLog::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

std::string RunLog::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,cumulative_cost,val_bleu,delta,full,weak,self,none\n";
  for (const auto& r : records) {
    out << r.j << ',' << r.cumulative_cost << ',' << r.val_bleu << ',' << r.delta;
    for (int c : r.action_counts) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

InteractiveRun::InteractiveRun(const LearnerParams& theta0, FeedbackPolicy& policy,
                               std::span<const ParallelExample> stream, const PregenTargets& pregen,
                               std::span<const ParallelExample> dev, TrainConfig cfg, nlohmann::json extra_meta)
    : theta_(theta0),
      best_(theta0),
      opt_(LearnerOptimizerState::zeros_like(theta0)),
      policy_(policy),
      stream_(stream),
      pregen_(pregen),
      dev_(dev),
      cfg_(std::move(cfg)),
      sampling_(derive_seed(cfg_.seed, "sampling")),
      dropout_seed_(derive_seed(cfg_.seed, "dropout")),
      start_(std::chrono::steady_clock::now()) {
  cfg_.validate();
  if (stream_.empty()) throw Error("empty feedback stream");
  if (dev_.empty()) throw Error("empty dev set");
  for (const auto& ex : stream_) pregen_lookup(pregen_, ex.id);

  last_val_ = best_val_ = evaluate(theta_, dev_, cfg_.val_mode, cfg_.max_decode_len).bleu;
  nlohmann::json identity = {{"train", cfg_.to_json()}, {"policy", policy_.metadata()}};
  log_.meta = {{"config", cfg_.to_json()},
               {"config_hash", content_hash(identity.dump())},
               {"seed", cfg_.seed},
               {"policy", policy_.name()},
               {"policy_config", policy_.metadata()},
               {"initial_val_bleu", last_val_},
               {"stream_size", stream_.size()},
               {"dev_size", dev_.size()}};
  for (auto& [k, v] : extra_meta.items()) log_.meta[k] = v;
}

bool InteractiveRun::finished() const { return stopped_ || (cursor_ >= total_items() && !pending_); }

void InteractiveRun::begin_batch() {
  batch_end_ = std::min(cursor_ + static_cast<std::size_t>(cfg_.batch_size), total_items());
  batch_items_.clear();
  for (std::size_t p = cursor_; p < batch_end_; ++p) {
    const auto& ex = stream_[p % stream_.size()];
    batch_items_.push_back({&ex, &pregen_lookup(pregen_, ex.id)});
  }
  policy_.begin_batch(theta_, batch_items_);
}

std::optional<InteractiveRun::Item> InteractiveRun::next() {
  if (pending_) throw Error("an item is already pending");
  if (finished()) return std::nullopt;
  if (batch_items_.empty()) begin_batch();
  const std::size_t index = cursor_ - (batch_end_ - batch_items_.size());
  const auto& bi = batch_items_[index];
  Item item{cursor_, bi.example, bi.hypothesis, policy_.decide(index, bi, sampling_)};
  pending_ = item;
  return item;
}

std::optional<RunRecord> InteractiveRun::submit(const FeedbackResponse& response) {
  if (!pending_) throw Error("no pending item");
  if (response.type != pending_->decision.action)
    throw Error("feedback type '" + std::string(to_string(response.type)) + "' does not match the requested '" +
                std::string(to_string(pending_->decision.action)) + "'");
  if (response.weights.f.size() != response.target.size())
    throw Error("feedback weights length does not match its target");
  ledger_ = ledger_add(ledger_, response.type, response.cost);
  batch_responses_.emplace_back(pending_->example, response);
  pending_.reset();
  ++cursor_;
  if (cursor_ == batch_end_) return finish_batch();
  return std::nullopt;
}

RunRecord InteractiveRun::finish_batch() {
  const int j = static_cast<int>(log_.records.size()) + 1;
  const std::size_t n = batch_responses_.size();

  std::vector<std::optional<LearnerParams>> grads(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& [ex, r] = batch_responses_[i];
    if (!has_signal(r.weights)) return;
    std::optional<DropoutSpec> drop;
    if (r.dropout_prob > 0.0)
      drop = DropoutSpec{r.dropout_prob, derive_seed(dropout_seed_, static_cast<std::uint64_t>(j),
                                                     static_cast<std::uint64_t>(ex->id))};
    grads[i] = grad_supervised(theta_, ex->source.ids, r.target, r.weights, drop);
  });
  // Mean over the whole batch; items without feedback contribute zeros. A
  // batch with no feedback at all leaves the learner (and its moments) alone.
  const bool any = std::any_of(grads.begin(), grads.end(), [](const auto& g) { return g.has_value(); });
  if (any) {
    auto acc = LearnerParams::zeros_like(theta_);
    auto dst = block_list(acc);
    for (const auto& g : grads) {
      if (!g) continue;
      auto src = block_list(*g);
      for (std::size_t b = 0; b < dst.size(); ++b) *dst[b].second += *src[b].second;
    }
    for (auto& [name, m] : dst) *m /= static_cast<double>(n);
    optimizer_step(theta_, opt_, acc, cfg_.optimizer);
  }

  double val = last_val_;
  if (any && j % cfg_.eval_every == 0) val = evaluate(theta_, dev_, cfg_.val_mode, cfg_.max_decode_len).bleu;
  const double delta = val - last_val_;

  RunRecord rec;
  rec.j = j;
  rec.val_bleu = val;
  rec.delta = delta;
  std::vector<ItemOutcome> outcomes;
  for (const auto& [ex, r] : batch_responses_) {
    ++rec.action_counts[index_of(r.type)];
    rec.items.push_back({ex->id, r.type, r.cost});
    outcomes.push_back({r.type, r.cost});
  }
  policy_.end_batch(delta, outcomes);
  rec.cumulative_cost = ledger_.total;
  if (cfg_.log_wall_time)
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  log_.records.push_back(rec);

  last_val_ = val;
  if (val > best_val_) {
    best_val_ = val;
    best_ = theta_;
    best_j_ = j;
  }
  if (cfg_.budget > 0.0 && ledger_.total >= cfg_.budget) stopped_ = true;
  batch_items_.clear();
  batch_responses_.clear();
  return rec;
}

RunResult InteractiveRun::result() const {
  RunResult r;
  r.best_params = best_;
  r.final_params = theta_;
  r.best_j = best_j_;
  r.best_val = best_val_;
  r.log = log_;
  r.ledger = ledger_;
  return r;
}

void InteractiveRun::save_checkpoint(const std::filesystem::path& path) const {
  if (pending_ || !batch_responses_.empty()) throw Error("checkpoints are only taken between mini-batches");
  Archive a;
  a.meta = {{"kind", "run"},
            {"config_hash", log_.meta.at("config_hash")},
            {"cursor", cursor_},
            {"log", log_.to_jsonl()},
            {"ledger", ledger_json(ledger_)},
            {"sampling_rng", rng_to_string(sampling_)},
            {"policy_state", policy_.save_state()},
            {"last_val", last_val_},
            {"best_val", best_val_},
            {"best_j", best_j_},
            {"stopped", stopped_}};
  a.add_params("theta.", theta_);
  a.add_params("best.", best_);
  a.add_params("opt.m.", opt_.m);
  a.add_params("opt.v.", opt_.v);
  a.meta["opt_step"] = opt_.step;
  if (auto* reg = dynamic_cast<RegulatorPolicy*>(&policy_)) {
    a.add_params("reg.", reg->params());
    a.add_params("reg.opt.m.", reg->optimizer_state().m);
    a.add_params("reg.opt.v.", reg->optimizer_state().v);
    a.meta["reg_opt_step"] = reg->optimizer_state().step;
  }
  a.write(path);
}

void InteractiveRun::load_checkpoint(const std::filesystem::path& path) {
  auto a = Archive::read(path);
  try {
    if (a.meta.at("kind") != "run") throw Error(path.string() + " is not a run checkpoint");
    if (a.meta.at("config_hash") != log_.meta.at("config_hash"))
      throw Error(path.string() + " was written by a run with a different configuration");
    const auto cursor = a.meta.at("cursor").get<std::size_t>();
    if (cursor > total_items()) throw Error(path.string() + ": cursor beyond the stream");
    a.load_params("theta.", theta_);
    a.load_params("best.", best_);
    a.load_params("opt.m.", opt_.m);
    a.load_params("opt.v.", opt_.v);
    opt_.step = a.meta.at("opt_step").get<long>();
    if (auto* reg = dynamic_cast<RegulatorPolicy*>(&policy_)) {
      a.load_params("reg.", reg->mutable_params());
      a.load_params("reg.opt.m.", reg->optimizer_state().m);
      a.load_params("reg.opt.v.", reg->optimizer_state().v);
      reg->optimizer_state().step = a.meta.at("reg_opt_step").get<long>();
    }
    policy_.load_state(a.meta.at("policy_state"));
    cursor_ = cursor;
    batch_end_ = cursor;
    log_ = RunLog::from_jsonl(a.meta.at("log").get<std::string>());
    ledger_ = ledger_from_json(a.meta.at("ledger"));
    sampling_ = rng_from_string(a.meta.at("sampling_rng").get<std::string>());
    last_val_ = a.meta.at("last_val").get<double>();
    best_val_ = a.meta.at("best_val").get<double>();
    best_j_ = a.meta.at("best_j").get<int>();
    stopped_ = a.meta.at("stopped").get<bool>();
    batch_items_.clear();
    batch_responses_.clear();
    pending_.reset();
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": corrupt run checkpoint: " + e.what());
  }
}

RunResult run_policy(const LearnerParams& theta0, FeedbackPolicy& policy, std::span<const ParallelExample> stream,
                     const PregenTargets& pregen, std::span<const ParallelExample> dev, const TrainConfig& cfg,
                     nlohmann::json extra_meta) {
  InteractiveRun run(theta0, policy, stream, pregen, dev, cfg, std::move(extra_meta));
  while (auto item = run.next())
    run.submit(provide_feedback(item->decision.action, *item->example, *item->hypothesis, cfg.scheme, cfg.p_att));
  return run.result();
}

RegulatedResult run_regulated(const LearnerParams& theta0, const RegulatorConfig& rcfg, const RegulatorParams& phi0,
                              std::span<const ParallelExample> stream, const PregenTargets& pregen,
                              std::span<const ParallelExample> dev, const TrainConfig& cfg) {
  RegulatorPolicy policy(rcfg, phi0, true);
  RegulatedResult out;
  out.run = run_policy(theta0, policy, stream, pregen, dev, cfg, {{"mode", "regulate"}});
  out.phi = policy.params();
  out.phi_optimizer = policy.optimizer_state();
  out.phi_state = policy.state();
  return out;
}

RunResult run_baseline(const LearnerParams& theta0, FeedbackPolicy& policy, std::span<const ParallelExample> stream,
                       const PregenTargets& pregen, std::span<const ParallelExample> dev, const TrainConfig& cfg) {
  if (dynamic_cast<RegulatorPolicy*>(&policy)) throw Error("run_baseline does not take a regulator policy");
  return run_policy(theta0, policy, stream, pregen, dev, cfg, {{"mode", "baseline"}});
}

RunResult run_transfer(const LearnerParams& theta_base, const RegulatorConfig& rcfg, const RegulatorParams& phi,
                       std::span<const ParallelExample> stream, const PregenTargets& pregen,
                       std::span<const ParallelExample> dev, const TrainConfig& cfg) {
  RegulatorPolicy policy(rcfg, phi, false);
  return run_policy(theta_base, policy, stream, pregen, dev, cfg, {{"mode", "transfer"}});
}

PretrainResult pretrain(const LearnerParams& theta_init, std::span<const ParallelExample> train,
                        std::span<const ParallelExample> dev, const PretrainConfig& cfg) {
  if (train.empty()) throw Error("pretrain: empty training corpus");
  if (dev.empty()) throw Error("pretrain: empty dev set");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.halve_after < 1 || cfg.patience < 1 || cfg.eval_every < 0)
    throw Error("pretrain: invalid schedule");
  PretrainResult out;
  LearnerParams theta = theta_init;
  auto opt = LearnerOptimizerState::zeros_like(theta);
  OptimizerConfig ocfg{OptimizerKind::Adam, cfg.learning_rate};
  Rng shuffle_rng(derive_seed(cfg.seed, "pretrain-shuffle"));

  out.initial_val = out.best_val = evaluate(theta, dev, DecodeMode::greedy(), cfg.max_decode_len).bleu;
  out.best = theta;
  int bad = 0, since_halve = 0, batches = 0;
  bool stop = false;

  auto validate = [&] {
    const double v = evaluate(theta, dev, DecodeMode::greedy(), cfg.max_decode_len).bleu;
    out.val_history.push_back(v);
    if (v > out.best_val) {
      out.best_val = v;
      out.best = theta;
      bad = since_halve = 0;
    } else {
      ++bad;
      if (++since_halve >= cfg.halve_after) {
        ocfg.learning_rate /= 2.0;
        since_halve = 0;
      }
      if (bad >= cfg.patience) stop = true;
    }
    out.lr_history.push_back(ocfg.learning_rate);
  };

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size() && !stop; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<LearnerParams> grads(end - start);
      parallel_for(grads.size(), [&](std::size_t k) {
        const auto& ex = train[order[start + k]];
        grads[k] = grad_supervised(theta, ex.source.ids, ex.reference.ids, TokenWeights::ones(ex.reference.ids.size()),
                                   std::nullopt);
      });
      accumulate_and_update<LearnerParams>(theta, opt, grads, ocfg);
      ++batches;
      if (cfg.eval_every > 0 && batches % cfg.eval_every == 0) validate();
    }
    out.epochs = epoch + 1;
    if (cfg.eval_every == 0 && !stop) validate();
  }
  return out;
}

}  // namespace selfreg
