#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfreg/cost_ledger.hpp"
#include "selfreg/feedback.hpp"
#include "selfreg/learner.hpp"
#include "selfreg/metrics.hpp"
#include "selfreg/policies.hpp"

namespace selfreg {

struct TrainConfig {
  int batch_size = 32;
  double alpha = 1.0;
  int max_epochs = 1;
  double budget = 0.0;  // stop once cumulative cost reaches it; <= 0 disables
  int eval_every = 1;   // batches between validations; > 1 is experimental
  std::uint64_t seed = 1;
  DecodeMode val_mode = DecodeMode::greedy();
  int max_decode_len = 24;
  double p_att = 0.1;
  OptimizerConfig optimizer;
  Scheme scheme = Scheme::Whitespace;
  bool log_wall_time = false;  // wall_time stays 0 otherwise, keeping logs reproducible

  void validate() const;
  nlohmann::json to_json() const;
};

struct ItemRecord {
  int id = 0;
  FeedbackType action = FeedbackType::None;
  double cost = 0.0;
  bool operator==(const ItemRecord&) const = default;
};

struct RunRecord {
  int j = 0;
  double cumulative_cost = 0.0;
  double val_bleu = 0.0;
  double delta = 0.0;
  std::array<int, 4> action_counts{};  // this batch, by FeedbackType
  double wall_time = 0.0;
  std::vector<ItemRecord> items;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  bool operator==(const RunRecord&) const = default;
};

// JSONL: a {"meta": ...} line followed by one line per iteration.
struct RunLog {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<RunRecord> records;

  double initial_val_bleu() const { return meta.value("initial_val_bleu", 0.0); }

  std::string to_jsonl() const;
  static RunLog from_jsonl(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static RunLog read(const std::filesystem::path& path);
  // iteration,cumulative_cost,val_bleu,delta,full,weak,self,none
  std::string to_csv() const;
  bool operator==(const RunLog&) const = default;
};

struct RunResult {
  LearnerParams best_params;
  LearnerParams final_params;
  int best_j = 0;  // 0 = the initial model
  double best_val = 0.0;
  RunLog log;
  CostLedger ledger;
};

// Algorithm state for one pass over a feedback stream. The simulated runs and
// the session service drive the same object: next() picks an item and asks the
// policy for a feedback type, submit() takes the teacher's answer and, once a
// mini-batch is complete, updates the learner and measures Δ on the dev set.
class InteractiveRun {
 public:
  struct Item {
    std::size_t position = 0;  // index into the (epoch-repeated) stream
    const ParallelExample* example = nullptr;
    const Hypothesis* hypothesis = nullptr;
    PolicyDecision decision;
  };

  // stream, pregen, dev and policy must outlive the run.
  InteractiveRun(const LearnerParams& theta0, FeedbackPolicy& policy, std::span<const ParallelExample> stream,
                 const PregenTargets& pregen, std::span<const ParallelExample> dev, TrainConfig cfg,
                 nlohmann::json extra_meta = nlohmann::json::object());

  // nullopt once the stream (or budget) is exhausted. Throws if an item is pending.
  std::optional<Item> next();
  // Returns the new record when this submission completed a mini-batch.
  std::optional<RunRecord> submit(const FeedbackResponse& response);

  bool finished() const;
  const std::optional<Item>& pending() const { return pending_; }
  std::size_t cursor() const { return cursor_; }
  std::size_t total_items() const { return stream_.size() * static_cast<std::size_t>(cfg_.max_epochs); }
  const RunLog& log() const { return log_; }
  const CostLedger& ledger() const { return ledger_; }
  const LearnerParams& params() const { return theta_; }
  const LearnerParams& best_params() const { return best_; }
  double current_val() const { return last_val_; }
  const TrainConfig& config() const { return cfg_; }
  FeedbackPolicy& policy() { return policy_; }
  RunResult result() const;

  // Only at a mini-batch boundary with nothing pending.
  void save_checkpoint(const std::filesystem::path& path) const;
  // The run must be constructed with the same inputs as the saved one.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  void begin_batch();
  RunRecord finish_batch();

  LearnerParams theta_, best_;
  LearnerOptimizerState opt_;
  FeedbackPolicy& policy_;
  std::span<const ParallelExample> stream_;
  const PregenTargets& pregen_;
  std::span<const ParallelExample> dev_;
  TrainConfig cfg_;
  Rng sampling_;
  std::uint64_t dropout_seed_;
  RunLog log_;
  CostLedger ledger_;
  std::size_t cursor_ = 0;
  std::size_t batch_end_ = 0;
  std::vector<BatchItem> batch_items_;
  std::vector<std::pair<const ParallelExample*, FeedbackResponse>> batch_responses_;
  std::optional<Item> pending_;
  double last_val_ = 0.0;
  double best_val_ = 0.0;
  int best_j_ = 0;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point start_;
};

// Simulated-teacher runs.
RunResult run_policy(const LearnerParams& theta0, FeedbackPolicy& policy, std::span<const ParallelExample> stream,
                     const PregenTargets& pregen, std::span<const ParallelExample> dev, const TrainConfig& cfg,
                     nlohmann::json extra_meta = nlohmann::json::object());

struct RegulatedResult {
  RunResult run;
  RegulatorParams phi;
  RegulatorOptimizerState phi_optimizer;
  RegulatorState phi_state;
};

RegulatedResult run_regulated(const LearnerParams& theta0, const RegulatorConfig& rcfg, const RegulatorParams& phi0,
                              std::span<const ParallelExample> stream, const PregenTargets& pregen,
                              std::span<const ParallelExample> dev, const TrainConfig& cfg);

RunResult run_baseline(const LearnerParams& theta0, FeedbackPolicy& policy, std::span<const ParallelExample> stream,
                       const PregenTargets& pregen, std::span<const ParallelExample> dev, const TrainConfig& cfg);

// Regulator frozen, its recurrent state reset; the learner starts from theta_base.
RunResult run_transfer(const LearnerParams& theta_base, const RegulatorConfig& rcfg, const RegulatorParams& phi,
                       std::span<const ParallelExample> stream, const PregenTargets& pregen,
                       std::span<const ParallelExample> dev, const TrainConfig& cfg);

struct PretrainConfig {
  int batch_size = 32;
  int max_epochs = 30;
  double learning_rate = 1e-3;
  int halve_after = 3;  // non-improving validations before the rate halves
  int patience = 6;     // non-improving validations before stopping
  int eval_every = 0;   // batches between validations; 0 = once per epoch
  int max_decode_len = 24;
  std::uint64_t seed = 1;
};

struct PretrainResult {
  LearnerParams best;
  double initial_val = 0.0;
  double best_val = 0.0;
  std::vector<double> val_history;  // one entry per validation
  std::vector<double> lr_history;   // rate in force after each validation
  int epochs = 0;
};

// Full-feedback training on (source, reference) pairs with Adam, halving the
// rate on plateaus and keeping the best validated parameters.
PretrainResult pretrain(const LearnerParams& theta_init, std::span<const ParallelExample> train,
                        std::span<const ParallelExample> dev, const PretrainConfig& cfg);

}  // namespace selfreg
