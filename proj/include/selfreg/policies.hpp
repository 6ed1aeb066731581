#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfreg/common.hpp"
#include "selfreg/corpus.hpp"
#include "selfreg/learner.hpp"
#include "selfreg/nn.hpp"
#include "selfreg/optimizer.hpp"

namespace selfreg {

struct ActionSet {
  std::string name;  // "reg2", "reg3", "reg4" or a custom label
  std::vector<FeedbackType> actions;

  static ActionSet reg2();
  static ActionSet reg3();
  static ActionSet reg4();
  // Preset name (case-insensitive) or a comma-separated list of types.
  static ActionSet parse(std::string_view spec);

  std::size_t size() const { return actions.size(); }
  int index(FeedbackType t) const;  // -1 if absent
  void validate() const;
  bool operator==(const ActionSet&) const = default;
};

struct RegulatorConfig {
  int encoder_hidden = 16;
  int state_hidden = 16;
  ActionSet action_set = ActionSet::reg3();
  double alpha = 1.0;
  OptimizerConfig optimizer{OptimizerKind::Adam, 1e-3};

  void validate() const;
};

// Two bidirectional encoders read the source and the hypothesis; their final
// states and the previous action distribution feed a higher-level LSTM cell
// whose output is projected to action scores.
struct RegulatorParams {
  nn::MatrixXd src_emb;  // src_vocab x E
  nn::MatrixXd hyp_emb;  // trg_vocab x E
  nn::LstmWeights src_fwd, src_bwd, hyp_fwd, hyp_bwd;
  nn::LstmWeights state;  // input 4*He + K
  nn::MatrixXd out_W, out_b;

  // Embeddings are copied from the learner; everything else is random.
  static RegulatorParams init(const RegulatorConfig& cfg, const LearnerParams& learner, Rng& rng);
  static RegulatorParams zeros_like(const RegulatorParams& p);

  int num_actions() const { return static_cast<int>(out_W.rows()); }
  int state_hidden() const { return state.hidden(); }

  void visit(const nn::BlockVisitor& f);
  void visit(const nn::ConstBlockVisitor& f) const;
};

using RegulatorOptimizerState = AdamState<RegulatorParams>;

// Recurrent state carried from one decision to the next within a run.
struct RegulatorState {
  nn::VectorXd h, c;
  nn::VectorXd prev_distribution;

  static RegulatorState initial(const RegulatorParams& p);  // zeros, uniform
  bool operator==(const RegulatorState& o) const {
    return h == o.h && c == o.c && prev_distribution == o.prev_distribution;
  }
};

// Everything q_phi conditions on for one item, frozen at decision time.
struct RegulatorInput {
  std::vector<int> source;
  std::vector<int> hypothesis;
  RegulatorState state;
};

struct PolicyDecision {
  FeedbackType action = FeedbackType::None;
  int action_index = 0;
  double logprob = 0.0;
  std::vector<double> distribution;
};

struct RegulatorSample {
  RegulatorInput input;
  int action_index = 0;
  double cost = 0.0;
};

// Action distribution for one input and the successor recurrent state.
nn::VectorXd regulator_distribution(const RegulatorParams& params, const RegulatorInput& input,
                                    RegulatorState* next = nullptr);

// log q(action | input) with the recurrent inputs held fixed.
double regulator_logprob(const RegulatorParams& params, const RegulatorInput& input, int action_index);

// Samples an action and advances `state`.
PolicyDecision regulator_decide(const RegulatorParams& params, const ActionSet& actions, RegulatorState& state,
                                std::span<const int> x, std::span<const int> hyp, Rng& rng);

// Δ/(c + α).
double reward(double delta, double cost, double alpha);

// Ascent direction Δ · (1/B) Σ_i ∇ log q(s_i | input_i) / (c_i + α).
RegulatorParams regulator_grad(const RegulatorParams& params, std::span<const RegulatorSample> batch, double delta,
                               double alpha);

struct BanditState {
  std::vector<FeedbackType> arms;  // enum order
  std::vector<long> pulls;         // N(s): rewards observed
  std::vector<double> q;           // Q(s): mean observed reward
  std::vector<long> chosen;        // times selected; drives the cold start
  double epsilon = 0.1;

  static BanditState make(const ActionSet& arms, double epsilon);
  int index(FeedbackType t) const;
  bool operator==(const BanditState&) const = default;
};

// Each arm once in enum order, then ε-greedy: exploit the best Q (ties to the
// lowest enum) with probability 1-ε, otherwise a uniformly drawn other arm.
FeedbackType bandit_choose(BanditState& state, Rng& rng);
void bandit_update(BanditState& state, FeedbackType arm, double reward);

// Indices of the ceil(γ·B) highest entropies (ties to the lower index), ascending.
std::vector<std::size_t> uncertainty_select(std::span<const double> entropies, double gamma);

// What a policy sees of one stream item.
struct BatchItem {
  const ParallelExample* example = nullptr;
  const Hypothesis* hypothesis = nullptr;
};

struct ItemOutcome {
  FeedbackType action = FeedbackType::None;
  double cost = 0.0;
};

// Per-run feedback-choice strategy driven by the training loop.
class FeedbackPolicy {
 public:
  virtual ~FeedbackPolicy() = default;
  virtual std::string name() const = 0;
  virtual nlohmann::json metadata() const = 0;
  virtual std::vector<FeedbackType> action_space() const = 0;

  virtual void begin_batch(const LearnerParams& /*learner*/, std::span<const BatchItem> /*items*/) {}
  virtual PolicyDecision decide(std::size_t index, const BatchItem& item, Rng& rng) = 0;
  virtual void end_batch(double /*delta*/, std::span<const ItemOutcome> /*outcomes*/) {}

  // Mutable state for checkpoints.
  virtual nlohmann::json save_state() const { return nlohmann::json::object(); }
  virtual void load_state(const nlohmann::json& /*state*/) {}
};

class FixedPolicy : public FeedbackPolicy {
 public:
  explicit FixedPolicy(FeedbackType type) : type_(type) {}
  std::string name() const override;
  nlohmann::json metadata() const override;
  std::vector<FeedbackType> action_space() const override { return {type_}; }
  PolicyDecision decide(std::size_t index, const BatchItem& item, Rng& rng) override;

 private:
  FeedbackType type_;
};

class EpsilonGreedyPolicy : public FeedbackPolicy {
 public:
  EpsilonGreedyPolicy(const ActionSet& arms, double epsilon, double alpha);
  std::string name() const override { return "epsilon-greedy"; }
  nlohmann::json metadata() const override;
  std::vector<FeedbackType> action_space() const override { return state_.arms; }
  PolicyDecision decide(std::size_t index, const BatchItem& item, Rng& rng) override;
  // The batch Δ is credited to every item of the batch.
  void end_batch(double delta, std::span<const ItemOutcome> outcomes) override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  const BanditState& state() const { return state_; }

 private:
  BanditState state_;
  ActionSet arms_;
  double alpha_;
};

class UncertaintyPolicy : public FeedbackPolicy {
 public:
  explicit UncertaintyPolicy(double gamma);
  std::string name() const override { return "uncertainty"; }
  nlohmann::json metadata() const override;
  std::vector<FeedbackType> action_space() const override { return {FeedbackType::Full, FeedbackType::None}; }
  // Entropies come from the current learner on the pre-generated hypotheses.
  void begin_batch(const LearnerParams& learner, std::span<const BatchItem> items) override;
  PolicyDecision decide(std::size_t index, const BatchItem& item, Rng& rng) override;

 private:
  double gamma_;
  std::vector<bool> selected_;
};

class RegulatorPolicy : public FeedbackPolicy {
 public:
  RegulatorPolicy(RegulatorConfig cfg, RegulatorParams params, bool trainable);
  std::string name() const override { return "regulator"; }
  nlohmann::json metadata() const override;
  std::vector<FeedbackType> action_space() const override { return cfg_.action_set.actions; }
  PolicyDecision decide(std::size_t index, const BatchItem& item, Rng& rng) override;
  void end_batch(double delta, std::span<const ItemOutcome> outcomes) override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  const RegulatorParams& params() const { return params_; }
  const RegulatorOptimizerState& optimizer_state() const { return opt_; }
  RegulatorOptimizerState& optimizer_state() { return opt_; }
  const RegulatorState& state() const { return state_; }
  void set_state(const RegulatorState& s);
  RegulatorParams& mutable_params() { return params_; }
  const RegulatorConfig& config() const { return cfg_; }
  bool trainable() const { return trainable_; }

 private:
  RegulatorConfig cfg_;
  RegulatorParams params_;
  RegulatorOptimizerState opt_;
  RegulatorState state_;
  bool trainable_;
  std::vector<RegulatorSample> pending_;
};

}  // namespace selfreg
