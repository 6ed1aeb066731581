#include "selfreg/policies.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace selfreg {

using nn::LstmStep;
using nn::MatrixXd;
using nn::VectorXd;

ActionSet ActionSet::reg2() { return {"reg2", {FeedbackType::Full, FeedbackType::Weak}}; }
ActionSet ActionSet::reg3() { return {"reg3", {FeedbackType::Full, FeedbackType::Weak, FeedbackType::SelfSup}}; }
ActionSet ActionSet::reg4() {
  return {"reg4", {FeedbackType::Full, FeedbackType::Weak, FeedbackType::SelfSup, FeedbackType::None}};
}

ActionSet ActionSet::parse(std::string_view spec) {
  std::string lower(spec);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "reg2") return reg2();
  if (lower == "reg3") return reg3();
  if (lower == "reg4") return reg4();
  ActionSet out;
  std::size_t start = 0;
  while (start <= lower.size()) {
    auto end = lower.find(',', start);
    if (end == std::string::npos) end = lower.size();
    std::string item = lower.substr(start, end - start);
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.actions.push_back(parse_feedback_type(item));
    start = end + 1;
  }
  out.name = lower;
  out.validate();
  return out;
}

int ActionSet::index(FeedbackType t) const {
  auto it = std::find(actions.begin(), actions.end(), t);
  return it == actions.end() ? -1 : static_cast<int>(it - actions.begin());
}

void ActionSet::validate() const {
  if (actions.empty()) throw Error("action set is empty");
  for (std::size_t i = 0; i < actions.size(); ++i)
    for (std::size_t j = i + 1; j < actions.size(); ++j)
      if (actions[i] == actions[j])
        throw Error("action set lists '" + std::string(to_string(actions[i])) + "' twice");
}

void RegulatorConfig::validate() const {
  if (encoder_hidden < 1 || state_hidden < 1) throw Error("regulator dimensions must be >= 1");
  if (!(alpha > 0.0)) throw Error("alpha must be > 0");
  if (!(optimizer.learning_rate > 0.0)) throw Error("regulator learning_rate must be > 0");
  action_set.validate();
}

RegulatorParams RegulatorParams::init(const RegulatorConfig& cfg, const LearnerParams& learner, Rng& rng) {
  cfg.validate();
  const int E = learner.embed_dim(), He = cfg.encoder_hidden, Hs = cfg.state_hidden;
  const int K = static_cast<int>(cfg.action_set.size());
  const double s = 0.1;
  RegulatorParams p;
  p.src_emb = learner.src_emb;
  p.hyp_emb = learner.trg_emb;
  p.src_fwd = nn::LstmWeights::init(E, He, rng, s);
  p.src_bwd = nn::LstmWeights::init(E, He, rng, s);
  p.hyp_fwd = nn::LstmWeights::init(E, He, rng, s);
  p.hyp_bwd = nn::LstmWeights::init(E, He, rng, s);
  p.state = nn::LstmWeights::init(4 * He + K, Hs, rng, s);
  p.out_W = nn::random_matrix(K, Hs, rng, s);
  p.out_b = MatrixXd::Zero(K, 1);
  return p;
}

RegulatorParams RegulatorParams::zeros_like(const RegulatorParams& p) {
  RegulatorParams z = p;
  z.visit([](const std::string&, MatrixXd& m) { m.setZero(); });
  return z;
}

void RegulatorParams::visit(const nn::BlockVisitor& f) {
  f("src_emb", src_emb);
  f("hyp_emb", hyp_emb);
  f("src_fwd.W", src_fwd.W);
  f("src_fwd.b", src_fwd.b);
  f("src_bwd.W", src_bwd.W);
  f("src_bwd.b", src_bwd.b);
  f("hyp_fwd.W", hyp_fwd.W);
  f("hyp_fwd.b", hyp_fwd.b);
  f("hyp_bwd.W", hyp_bwd.W);
  f("hyp_bwd.b", hyp_bwd.b);
  f("state.W", state.W);
  f("state.b", state.b);
  f("out.W", out_W);
  f("out.b", out_b);
}

void RegulatorParams::visit(const nn::ConstBlockVisitor& f) const {
  const_cast<RegulatorParams*>(this)->visit([&](const std::string& n, MatrixXd& m) { f(n, m); });
}

RegulatorState RegulatorState::initial(const RegulatorParams& p) {
  const int Hs = p.state_hidden(), K = p.num_actions();
  return {VectorXd::Zero(Hs), VectorXd::Zero(Hs), VectorXd::Constant(K, 1.0 / K)};
}

namespace {

// Bidirectional summary [h_fwd(last); h_bwd(first)]; zeros for an empty sequence.
struct Summary {
  std::vector<LstmStep> fwd, bwd;
  VectorXd out;
};

Summary summarize(const MatrixXd& emb, const nn::LstmWeights& fwd, const nn::LstmWeights& bwd,
                  std::span<const int> ids) {
  const int H = fwd.hidden();
  for (int id : ids)
    if (id < 0 || id >= emb.rows()) throw Error("regulator: token id " + std::to_string(id) + " out of range");
  Summary s;
  s.out = VectorXd::Zero(2 * H);
  if (ids.empty()) return s;
  const auto n = static_cast<Eigen::Index>(ids.size());
  VectorXd h = VectorXd::Zero(H), c = VectorXd::Zero(H);
  for (Eigen::Index t = 0; t < n; ++t) {
    s.fwd.push_back(nn::lstm_forward(fwd, emb.row(ids[t]).transpose(), h, c));
    h = s.fwd.back().h;
    c = s.fwd.back().c;
  }
  s.bwd.resize(ids.size());
  h.setZero();
  c.setZero();
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    s.bwd[t] = nn::lstm_forward(bwd, emb.row(ids[t]).transpose(), h, c);
    h = s.bwd[t].h;
    c = s.bwd[t].c;
  }
  s.out << s.fwd.back().h, s.bwd.front().h;
  return s;
}

void summarize_backward(const Summary& s, const nn::LstmWeights& fwd, const nn::LstmWeights& bwd,
                        nn::LstmWeights& gfwd, nn::LstmWeights& gbwd, MatrixXd& gemb, std::span<const int> ids,
                        const VectorXd& dout) {
  if (ids.empty()) return;
  const int H = fwd.hidden();
  const Eigen::Index E = gemb.cols();
  const auto n = static_cast<Eigen::Index>(ids.size());
  VectorXd dh = dout.head(H), dc = VectorXd::Zero(H), dc_prev;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    VectorXd dxh = nn::lstm_backward(fwd, gfwd, s.fwd[t], dh, dc, dc_prev);
    gemb.row(ids[t]) += dxh.head(E).transpose();
    dh = dxh.tail(H);
    dc = dc_prev;
  }
  dh = dout.tail(H);
  dc.setZero();
  for (Eigen::Index t = 0; t < n; ++t) {
    VectorXd dxh = nn::lstm_backward(bwd, gbwd, s.bwd[t], dh, dc, dc_prev);
    gemb.row(ids[t]) += dxh.head(E).transpose();
    dh = dxh.tail(H);
    dc = dc_prev;
  }
}

struct Forward {
  Summary src, hyp;
  LstmStep cell;
  VectorXd logits;
};

Forward forward(const RegulatorParams& p, const RegulatorInput& in) {
  const int K = p.num_actions();
  if (in.state.prev_distribution.size() != K || in.state.h.size() != p.state_hidden())
    throw Error("regulator state does not match the parameters");
  Forward f;
  f.src = summarize(p.src_emb, p.src_fwd, p.src_bwd, in.source);
  f.hyp = summarize(p.hyp_emb, p.hyp_fwd, p.hyp_bwd, in.hypothesis);
  VectorXd u(f.src.out.size() + f.hyp.out.size() + K);
  u << f.src.out, f.hyp.out, in.state.prev_distribution;
  f.cell = nn::lstm_forward(p.state, u, in.state.h, in.state.c);
  f.logits = p.out_W * f.cell.h + p.out_b.col(0);
  return f;
}

}  // namespace

VectorXd regulator_distribution(const RegulatorParams& params, const RegulatorInput& input, RegulatorState* next) {
  auto f = forward(params, input);
  VectorXd q = nn::softmax(f.logits);
  if (next) *next = {f.cell.h, f.cell.c, q};
  return q;
}

double regulator_logprob(const RegulatorParams& params, const RegulatorInput& input, int action_index) {
  return nn::log_softmax(forward(params, input).logits)(action_index);
}

PolicyDecision regulator_decide(const RegulatorParams& params, const ActionSet& actions, RegulatorState& state,
                                std::span<const int> x, std::span<const int> hyp, Rng& rng) {
  if (static_cast<int>(actions.size()) != params.num_actions())
    throw Error("action set size does not match the regulator output layer");
  RegulatorInput in{{x.begin(), x.end()}, {hyp.begin(), hyp.end()}, state};
  auto f = forward(params, in);
  VectorXd logq = nn::log_softmax(f.logits);
  VectorXd q = nn::softmax(f.logits);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  int pick = static_cast<int>(q.size()) - 1;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    acc += q(k);
    if (r < acc) {
      pick = static_cast<int>(k);
      break;
    }
  }
  PolicyDecision d;
  d.action_index = pick;
  d.action = actions.actions[static_cast<std::size_t>(pick)];
  d.logprob = actions.size() == 1 ? 0.0 : logq(pick);
  d.distribution.assign(q.data(), q.data() + q.size());
  state = {f.cell.h, f.cell.c, q};
  return d;
}

double reward(double delta, double cost, double alpha) {
  if (cost < 0.0) throw Error("reward: negative cost");
  if (!(alpha > 0.0)) throw Error("reward: alpha must be > 0");
  return delta / (cost + alpha);
}

RegulatorParams regulator_grad(const RegulatorParams& params, std::span<const RegulatorSample> batch, double delta,
                               double alpha) {
  if (batch.empty()) throw Error("regulator_grad: empty batch");
  RegulatorParams g = RegulatorParams::zeros_like(params);
  if (delta == 0.0) return g;
  const double B = static_cast<double>(batch.size());
  for (const auto& item : batch) {
    auto f = forward(params, item.input);
    const double w = delta / (B * (item.cost + alpha));
    // d log softmax(z)_s / dz = onehot(s) - q
    VectorXd dz = -nn::softmax(f.logits);
    dz(item.action_index) += 1.0;
    dz *= w;
    g.out_W.noalias() += dz * f.cell.h.transpose();
    g.out_b.col(0) += dz;
    VectorXd dh = params.out_W.transpose() * dz;
    VectorXd dc_prev;
    VectorXd du = nn::lstm_backward(params.state, g.state, f.cell, dh, VectorXd::Zero(dh.size()), dc_prev);
    const Eigen::Index ns = f.src.out.size(), nh = f.hyp.out.size();
    summarize_backward(f.src, params.src_fwd, params.src_bwd, g.src_fwd, g.src_bwd, g.src_emb, item.input.source,
                       du.segment(0, ns));
    summarize_backward(f.hyp, params.hyp_fwd, params.hyp_bwd, g.hyp_fwd, g.hyp_bwd, g.hyp_emb,
                       item.input.hypothesis, du.segment(ns, nh));
  }
  return g;
}

BanditState BanditState::make(const ActionSet& arms, double epsilon) {
  arms.validate();
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("epsilon must be in [0, 1]");
  BanditState s;
  s.arms = arms.actions;
  std::sort(s.arms.begin(), s.arms.end());
  s.pulls.assign(s.arms.size(), 0);
  s.q.assign(s.arms.size(), 0.0);
  s.chosen.assign(s.arms.size(), 0);
  s.epsilon = epsilon;
  return s;
}

int BanditState::index(FeedbackType t) const {
  auto it = std::find(arms.begin(), arms.end(), t);
  return it == arms.end() ? -1 : static_cast<int>(it - arms.begin());
}

FeedbackType bandit_choose(BanditState& state, Rng& rng) {
  const std::size_t K = state.arms.size();
  std::size_t pick = K;
  for (std::size_t k = 0; k < K && pick == K; ++k)
    if (state.chosen[k] == 0) pick = k;
  if (pick == K) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (state.q[k] > state.q[best]) best = k;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (K == 1 || u(rng) >= state.epsilon) {
      pick = best;
    } else {
      std::uniform_int_distribution<std::size_t> other(0, K - 2);
      pick = other(rng);
      if (pick >= best) ++pick;
    }
  }
  ++state.chosen[pick];
  return state.arms[pick];
}

void bandit_update(BanditState& state, FeedbackType arm, double r) {
  const int k = state.index(arm);
  if (k < 0) throw Error("bandit_update: arm '" + std::string(to_string(arm)) + "' is not in the action set");
  auto& n = state.pulls[static_cast<std::size_t>(k)];
  auto& q = state.q[static_cast<std::size_t>(k)];
  ++n;
  q += (r - q) / static_cast<double>(n);
}

std::vector<std::size_t> uncertainty_select(std::span<const double> entropies, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must be in [0, 1]");
  const double want = gamma * static_cast<double>(entropies.size());
  const auto k = static_cast<std::size_t>(std::max(0.0, std::ceil(want - 1e-9)));
  std::vector<std::size_t> order(entropies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entropies[a] > entropies[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

std::string FixedPolicy::name() const { return "fixed-" + std::string(to_string(type_)); }

nlohmann::json FixedPolicy::metadata() const { return {{"policy", name()}, {"type", to_string(type_)}}; }

PolicyDecision FixedPolicy::decide(std::size_t, const BatchItem&, Rng&) { return {type_, 0, 0.0, {1.0}}; }

EpsilonGreedyPolicy::EpsilonGreedyPolicy(const ActionSet& arms, double epsilon, double alpha)
    : state_(BanditState::make(arms, epsilon)), arms_(arms), alpha_(alpha) {}

nlohmann::json EpsilonGreedyPolicy::metadata() const {
  std::vector<std::string> names;
  for (auto a : state_.arms) names.emplace_back(to_string(a));
  return {{"policy", name()}, {"epsilon", state_.epsilon}, {"arms", names}, {"alpha", alpha_}};
}

PolicyDecision EpsilonGreedyPolicy::decide(std::size_t, const BatchItem&, Rng& rng) {
  PolicyDecision d;
  d.action = bandit_choose(state_, rng);
  d.action_index = state_.index(d.action);
  return d;
}

void EpsilonGreedyPolicy::end_batch(double delta, std::span<const ItemOutcome> outcomes) {
  for (const auto& o : outcomes) bandit_update(state_, o.action, reward(delta, o.cost, alpha_));
}

nlohmann::json EpsilonGreedyPolicy::save_state() const {
  return {{"pulls", state_.pulls}, {"q", state_.q}, {"chosen", state_.chosen}};
}

void EpsilonGreedyPolicy::load_state(const nlohmann::json& s) {
  state_.pulls = s.at("pulls").get<std::vector<long>>();
  state_.q = s.at("q").get<std::vector<double>>();
  state_.chosen = s.at("chosen").get<std::vector<long>>();
  if (state_.pulls.size() != state_.arms.size()) throw Error("bandit state does not match the arms");
}

UncertaintyPolicy::UncertaintyPolicy(double gamma) : gamma_(gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must be in [0, 1]");
}

nlohmann::json UncertaintyPolicy::metadata() const { return {{"policy", name()}, {"gamma", gamma_}}; }

void UncertaintyPolicy::begin_batch(const LearnerParams& learner, std::span<const BatchItem> items) {
  std::vector<double> entropies(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    entropies[i] = avg_token_entropy(learner, items[i].example->source.ids, *items[i].hypothesis);
  selected_.assign(items.size(), false);
  for (auto i : uncertainty_select(entropies, gamma_)) selected_[i] = true;
}

PolicyDecision UncertaintyPolicy::decide(std::size_t index, const BatchItem&, Rng&) {
  if (index >= selected_.size()) throw Error("uncertainty policy: item outside the current batch");
  PolicyDecision d;
  d.action = selected_[index] ? FeedbackType::Full : FeedbackType::None;
  d.action_index = selected_[index] ? 0 : 1;
  d.distribution = selected_[index] ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
  return d;
}

RegulatorPolicy::RegulatorPolicy(RegulatorConfig cfg, RegulatorParams params, bool trainable)
    : cfg_(std::move(cfg)),
      params_(std::move(params)),
      opt_(RegulatorOptimizerState::zeros_like(params_)),
      state_(RegulatorState::initial(params_)),
      trainable_(trainable) {
  cfg_.validate();
  if (static_cast<int>(cfg_.action_set.size()) != params_.num_actions())
    throw Error("regulator output layer has " + std::to_string(params_.num_actions()) + " actions, action set " +
                cfg_.action_set.name + " has " + std::to_string(cfg_.action_set.size()));
}

nlohmann::json RegulatorPolicy::metadata() const {
  std::vector<std::string> names;
  for (auto a : cfg_.action_set.actions) names.emplace_back(to_string(a));
  return {{"policy", name()},
          {"action_set", cfg_.action_set.name},
          {"actions", names},
          {"alpha", cfg_.alpha},
          {"trainable", trainable_}};
}

PolicyDecision RegulatorPolicy::decide(std::size_t, const BatchItem& item, Rng& rng) {
  RegulatorSample s;
  s.input = {item.example->source.ids, item.hypothesis->ids, state_};
  auto d = regulator_decide(params_, cfg_.action_set, state_, s.input.source, s.input.hypothesis, rng);
  s.action_index = d.action_index;
  pending_.push_back(std::move(s));
  return d;
}

void RegulatorPolicy::end_batch(double delta, std::span<const ItemOutcome> outcomes) {
  if (outcomes.size() != pending_.size()) throw Error("regulator: outcome count does not match decisions");
  for (std::size_t i = 0; i < outcomes.size(); ++i) pending_[i].cost = outcomes[i].cost;
  if (trainable_ && !pending_.empty()) {
    auto g = regulator_grad(params_, pending_, delta, cfg_.alpha);
    // The optimizer descends; negate to ascend the objective.
    g.visit([](const std::string&, MatrixXd& m) { m = -m; });
    optimizer_step(params_, opt_, g, cfg_.optimizer);
  }
  pending_.clear();
}

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void RegulatorPolicy::set_state(const RegulatorState& s) {
  if (s.h.size() != params_.state_hidden() || s.prev_distribution.size() != params_.num_actions())
    throw Error("regulator state does not match the parameters");
  state_ = s;
  pending_.clear();
}

nlohmann::json RegulatorPolicy::save_state() const {
  return {{"h", to_vec(state_.h)}, {"c", to_vec(state_.c)}, {"prev_distribution", to_vec(state_.prev_distribution)}};
}

void RegulatorPolicy::load_state(const nlohmann::json& s) {
  RegulatorState st{from_vec(s.at("h").get<std::vector<double>>()), from_vec(s.at("c").get<std::vector<double>>()),
                    from_vec(s.at("prev_distribution").get<std::vector<double>>())};
  if (st.h.size() != params_.state_hidden() || st.prev_distribution.size() != params_.num_actions())
    throw Error("regulator state does not match the parameters");
  state_ = std::move(st);
  pending_.clear();
}

}  // namespace selfreg
