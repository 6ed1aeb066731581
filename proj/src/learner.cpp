#include "selfreg/learner.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "selfreg/vocab.hpp"

namespace selfreg {

using nn::LstmStep;
using nn::MatrixXd;
using nn::VectorXd;

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw Error("unknown optimizer '" + std::string(name) + "'");
}

void LearnerConfig::validate() const {
  if (src_vocab_size <= Vocabulary::kNumSpecials || trg_vocab_size <= Vocabulary::kNumSpecials)
    throw Error("learner vocabularies must contain tokens beyond the specials");
  if (embed_dim < 1 || hidden_dim < 1) throw Error("learner dimensions must be >= 1");
  if (!(p_att >= 0.0 && p_att < 1.0)) throw Error("p_att must be in [0, 1)");
  if (max_decode_len < 1) throw Error("max_decode_len must be >= 1");
  if (beam_width < 1) throw Error("beam_width must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw Error("learning_rate must be > 0");
}

LearnerParams LearnerParams::init(const LearnerConfig& cfg, Rng& rng) {
  cfg.validate();
  const int E = cfg.embed_dim, H = cfg.hidden_dim;
  const double s = 0.1;
  LearnerParams p;
  p.src_emb = nn::random_matrix(cfg.src_vocab_size, E, rng, s);
  p.trg_emb = nn::random_matrix(cfg.trg_vocab_size, E, rng, s);
  p.enc_fwd = nn::LstmWeights::init(E, H, rng, s);
  p.enc_bwd = nn::LstmWeights::init(E, H, rng, s);
  p.dec = nn::LstmWeights::init(E, H, rng, s);
  p.bridge_W = nn::random_matrix(H, 2 * H, rng, s);
  p.bridge_b = MatrixXd::Zero(H, 1);
  p.att_W = nn::random_matrix(H, 2 * H, rng, s);
  p.comb_W = nn::random_matrix(H, 3 * H, rng, s);
  p.comb_b = MatrixXd::Zero(H, 1);
  p.out_W = nn::random_matrix(cfg.trg_vocab_size, H, rng, s);
  p.out_b = MatrixXd::Zero(cfg.trg_vocab_size, 1);
  return p;
}

LearnerParams LearnerParams::zeros_like(const LearnerParams& p) {
  LearnerParams z = p;
  z.visit([](const std::string&, MatrixXd& m) { m.setZero(); });
  return z;
}

void LearnerParams::visit(const nn::BlockVisitor& f) {
  f("src_emb", src_emb);
  f("trg_emb", trg_emb);
  f("enc_fwd.W", enc_fwd.W);
  f("enc_fwd.b", enc_fwd.b);
  f("enc_bwd.W", enc_bwd.W);
  f("enc_bwd.b", enc_bwd.b);
  f("dec.W", dec.W);
  f("dec.b", dec.b);
  f("bridge.W", bridge_W);
  f("bridge.b", bridge_b);
  f("att.W", att_W);
  f("comb.W", comb_W);
  f("comb.b", comb_b);
  f("out.W", out_W);
  f("out.b", out_b);
}

void LearnerParams::visit(const nn::ConstBlockVisitor& f) const {
  const_cast<LearnerParams*>(this)->visit([&](const std::string& n, MatrixXd& m) { f(n, m); });
}

namespace {

struct Encoded {
  std::vector<LstmStep> fwd, bwd;
  MatrixXd enc;   // 2H x S
  MatrixXd keys;  // H x S
  VectorXd bridge_in, h0;
};

struct DecStep {
  LstmStep lstm;
  VectorXd attn;      // softmax over source positions
  VectorXd attn_eff;  // after dropout and renormalisation
  VectorXd keep;      // mask row (empty when no dropout)
  VectorXd comb_in;   // [ctx; h]
  VectorXd comb;
  VectorXd logp;
};

void check_ids(std::span<const int> ids, int vocab, const char* what) {
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw Error(std::string(what) + " token id " + std::to_string(id) + " out of vocabulary range");
}

Encoded encode(const LearnerParams& p, std::span<const int> x) {
  if (x.empty()) throw Error("empty source sequence");
  check_ids(x, p.src_vocab_size(), "source");
  const int H = p.hidden_dim();
  const auto S = static_cast<Eigen::Index>(x.size());
  Encoded e;
  e.fwd.reserve(x.size());
  e.bwd.resize(x.size());
  VectorXd h = VectorXd::Zero(H), c = VectorXd::Zero(H);
  for (Eigen::Index s = 0; s < S; ++s) {
    e.fwd.push_back(nn::lstm_forward(p.enc_fwd, p.src_emb.row(x[s]).transpose(), h, c));
    h = e.fwd.back().h;
    c = e.fwd.back().c;
  }
  h.setZero();
  c.setZero();
  for (Eigen::Index s = S - 1; s >= 0; --s) {
    e.bwd[s] = nn::lstm_forward(p.enc_bwd, p.src_emb.row(x[s]).transpose(), h, c);
    h = e.bwd[s].h;
    c = e.bwd[s].c;
  }
  e.enc.resize(2 * H, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    e.enc.col(s).head(H) = e.fwd[s].h;
    e.enc.col(s).tail(H) = e.bwd[s].h;
  }
  e.keys = p.att_W * e.enc;
  e.bridge_in.resize(2 * H);
  e.bridge_in << e.fwd.back().h, e.bwd.front().h;
  e.h0 = (p.bridge_W * e.bridge_in + p.bridge_b.col(0)).array().tanh();
  return e;
}

DecStep decoder_step(const LearnerParams& p, const Encoded& e, const VectorXd& h, const VectorXd& c, int input,
                     const VectorXd* keep) {
  const int H = p.hidden_dim();
  DecStep d;
  d.lstm = nn::lstm_forward(p.dec, p.trg_emb.row(input).transpose(), h, c);
  d.attn = nn::softmax(e.keys.transpose() * d.lstm.h);
  if (keep) {
    d.keep = *keep;
    VectorXd kept = d.attn.cwiseProduct(*keep);
    d.attn_eff = kept / kept.sum();
  } else {
    d.attn_eff = d.attn;
  }
  d.comb_in.resize(3 * H);
  d.comb_in << e.enc * d.attn_eff, d.lstm.h;
  d.comb = (p.comb_W * d.comb_in + p.comb_b.col(0)).array().tanh();
  d.logp = nn::log_softmax(p.out_W * d.comb + p.out_b.col(0));
  return d;
}

struct TeacherForced {
  Encoded enc;
  std::vector<int> inputs, targets;
  std::vector<DecStep> steps;
};

std::optional<MatrixXd> mask_for(const std::optional<DropoutSpec>& dropout, int steps, int src_len) {
  if (!dropout || dropout->prob <= 0.0) return std::nullopt;
  return attention_mask(*dropout, steps, src_len);
}

TeacherForced teacher_force(const LearnerParams& p, std::span<const int> x, std::span<const int> y,
                            const std::optional<DropoutSpec>& dropout) {
  check_ids(y, p.trg_vocab_size(), "target");
  TeacherForced tf;
  tf.enc = encode(p, x);
  tf.inputs.push_back(Vocabulary::kBos);
  tf.inputs.insert(tf.inputs.end(), y.begin(), y.end());
  tf.targets.assign(y.begin(), y.end());
  tf.targets.push_back(Vocabulary::kEos);
  const int T = static_cast<int>(tf.inputs.size());
  auto mask = mask_for(dropout, T, static_cast<int>(x.size()));
  VectorXd h = tf.enc.h0, c = VectorXd::Zero(p.hidden_dim());
  tf.steps.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    VectorXd keep;
    if (mask) keep = mask->row(t).transpose();
    tf.steps.push_back(decoder_step(p, tf.enc, h, c, tf.inputs[t], mask ? &keep : nullptr));
    h = tf.steps.back().lstm.h;
    c = tf.steps.back().lstm.c;
  }
  return tf;
}

bool decodable(int id) { return id != Vocabulary::kPad && id != Vocabulary::kBos; }

}  // namespace

MatrixXd attention_mask(const DropoutSpec& d, int steps, int src_len) {
  Rng rng(d.seed);
  std::bernoulli_distribution drop(d.prob);
  MatrixXd keep(steps, src_len);
  for (int t = 0; t < steps; ++t) {
    for (int s = 0; s < src_len; ++s) keep(t, s) = drop(rng) ? 0.0 : 1.0;
    if (keep.row(t).sum() == 0.0) keep.row(t).setOnes();
  }
  return keep;
}

std::vector<double> token_logprobs(const LearnerParams& params, std::span<const int> x, std::span<const int> y,
                                   const std::optional<DropoutSpec>& dropout, bool append_eos) {
  auto tf = teacher_force(params, x, y, dropout);
  std::vector<double> out;
  const std::size_t n = append_eos ? tf.targets.size() : y.size();
  for (std::size_t t = 0; t < n; ++t) out.push_back(tf.steps[t].logp(tf.targets[t]));
  return out;
}

std::vector<VectorXd> step_distributions(const LearnerParams& params, std::span<const int> x,
                                         std::span<const int> y, const std::optional<DropoutSpec>& dropout) {
  auto tf = teacher_force(params, x, y, dropout);
  std::vector<VectorXd> out;
  for (const auto& s : tf.steps) out.push_back(s.logp.array().exp());
  return out;
}

Hypothesis greedy_decode(const LearnerParams& params, std::span<const int> x, int max_len) {
  auto enc = encode(params, x);
  Hypothesis hyp;
  VectorXd h = enc.h0, c = VectorXd::Zero(params.hidden_dim());
  int input = Vocabulary::kBos;
  for (int t = 0; t < max_len; ++t) {
    auto st = decoder_step(params, enc, h, c, input, nullptr);
    int best = -1;
    for (int v = 0; v < st.logp.size(); ++v)
      if (decodable(v) && (best < 0 || st.logp(v) > st.logp(best))) best = v;
    hyp.token_logprobs.push_back(st.logp(best));
    hyp.score += st.logp(best);
    if (best == Vocabulary::kEos) {
      hyp.finished = true;
      break;
    }
    hyp.ids.push_back(best);
    h = st.lstm.h;
    c = st.lstm.c;
    input = best;
  }
  return hyp;
}

Hypothesis beam_search(const LearnerParams& params, std::span<const int> x, int width, int max_len) {
  if (width < 1) throw Error("beam width must be >= 1");
  auto enc = encode(params, x);
  struct Beam {
    Hypothesis hyp;
    VectorXd h, c;
    int last;
  };
  struct Candidate {
    double score;
    std::size_t beam;
    int token;
  };
  std::vector<Beam> live{{Hypothesis{}, enc.h0, VectorXd::Zero(params.hidden_dim()), Vocabulary::kBos}};
  std::vector<Hypothesis> finished;

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<DecStep> steps;
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      steps.push_back(decoder_step(params, enc, live[b].h, live[b].c, live[b].last, nullptr));
      const auto& lp = steps.back().logp;
      for (int v = 0; v < lp.size(); ++v)
        if (decodable(v)) cands.push_back({live[b].hyp.score + lp(v), b, v});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });
    // EOS expansions ranked inside the top `width` finish; the live beam is
    // refilled with the best `width` non-EOS expansions.
    std::vector<Beam> next;
    for (std::size_t k = 0; k < cands.size() && next.size() < static_cast<std::size_t>(width); ++k) {
      const auto& cd = cands[k];
      if (cd.token == Vocabulary::kEos && k >= static_cast<std::size_t>(width)) continue;
      const auto& parent = live[cd.beam];
      Hypothesis hyp = parent.hyp;
      hyp.token_logprobs.push_back(steps[cd.beam].logp(cd.token));
      hyp.score = cd.score;
      if (cd.token == Vocabulary::kEos) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
      } else {
        hyp.ids.push_back(cd.token);
        next.push_back({std::move(hyp), steps[cd.beam].lstm.h, steps[cd.beam].lstm.c, cd.token});
      }
    }
    live = std::move(next);
    // Scores only decrease, so no live hypothesis can overtake the best finished one.
    if (!finished.empty() && !live.empty()) {
      double best_fin = finished.front().score;
      for (const auto& f : finished) best_fin = std::max(best_fin, f.score);
      double best_live = live.front().hyp.score;
      for (const auto& l : live) best_live = std::max(best_live, l.hyp.score);
      if (best_fin >= best_live) live.clear();
    }
  }
  for (auto& l : live) finished.push_back(std::move(l.hyp));  // truncated at max_len
  std::size_t best = 0;
  for (std::size_t k = 1; k < finished.size(); ++k)
    if (finished[k].score > finished[best].score) best = k;
  return finished[best];
}

double weighted_nll(const LearnerParams& params, std::span<const int> x, std::span<const int> y,
                    const TokenWeights& weights, const std::optional<DropoutSpec>& dropout) {
  if (weights.f.size() != y.size())
    throw Error("token weights length " + std::to_string(weights.f.size()) + " != target length " +
                std::to_string(y.size()));
  auto tf = teacher_force(params, x, y, dropout);
  double loss = 0.0;
  for (std::size_t t = 0; t < tf.steps.size(); ++t) {
    const double w = t < y.size() ? weights.f[t] : weights.eos;
    if (w != 0.0) loss -= w * tf.steps[t].logp(tf.targets[t]);
  }
  return loss;
}

LearnerParams grad_supervised(const LearnerParams& p, std::span<const int> x, std::span<const int> y,
                              const TokenWeights& weights, const std::optional<DropoutSpec>& dropout,
                              double* loss) {
  if (weights.f.size() != y.size())
    throw Error("token weights length " + std::to_string(weights.f.size()) + " != target length " +
                std::to_string(y.size()));
  LearnerParams g = LearnerParams::zeros_like(p);
  const bool all_zero = weights.eos == 0.0 && std::all_of(weights.f.begin(), weights.f.end(),
                                                          [](double w) { return w == 0.0; });
  if (all_zero) {
    check_ids(x, p.src_vocab_size(), "source");
    check_ids(y, p.trg_vocab_size(), "target");
    if (loss) *loss = 0.0;
    return g;
  }

  auto tf = teacher_force(p, x, y, dropout);
  const int H = p.hidden_dim(), E = p.embed_dim();
  const auto S = static_cast<Eigen::Index>(x.size());
  const auto T = tf.steps.size();

  double total = 0.0;
  MatrixXd d_enc = MatrixXd::Zero(2 * H, S);
  MatrixXd d_keys = MatrixXd::Zero(H, S);
  VectorXd dh_next = VectorXd::Zero(H), dc_next = VectorXd::Zero(H);

  for (std::size_t ti = T; ti-- > 0;) {
    const auto& st = tf.steps[ti];
    const double w = ti < y.size() ? weights.f[ti] : weights.eos;
    VectorXd dh = dh_next;
    if (w != 0.0) {
      total -= w * st.logp(tf.targets[ti]);
      VectorXd dlogits = st.logp.array().exp() * w;
      dlogits(tf.targets[ti]) -= w;
      g.out_W.noalias() += dlogits * st.comb.transpose();
      g.out_b.col(0) += dlogits;
      VectorXd dpre = (p.out_W.transpose() * dlogits).cwiseProduct((1.0 - st.comb.array().square()).matrix());
      g.comb_W.noalias() += dpre * st.comb_in.transpose();
      g.comb_b.col(0) += dpre;
      VectorXd dcomb_in = p.comb_W.transpose() * dpre;
      VectorXd dctx = dcomb_in.head(2 * H);
      dh += dcomb_in.tail(H);

      d_enc.noalias() += dctx * st.attn_eff.transpose();
      VectorXd da_eff = tf.enc.enc.transpose() * dctx;
      VectorXd da;
      if (st.keep.size() > 0) {
        const double z = st.attn.dot(st.keep);
        da = st.keep.cwiseProduct((da_eff.array() - st.attn_eff.dot(da_eff)).matrix()) / z;
      } else {
        da = da_eff;
      }
      VectorXd dscore = st.attn.cwiseProduct((da.array() - st.attn.dot(da)).matrix());
      d_keys.noalias() += st.lstm.h * dscore.transpose();
      dh += tf.enc.keys * dscore;
    }
    VectorXd dc_prev;
    VectorXd dxh = nn::lstm_backward(p.dec, g.dec, st.lstm, dh, dc_next, dc_prev);
    g.trg_emb.row(tf.inputs[ti]) += dxh.head(E).transpose();
    dh_next = dxh.tail(H);
    dc_next = dc_prev;
  }

  g.att_W.noalias() += d_keys * tf.enc.enc.transpose();
  d_enc.noalias() += p.att_W.transpose() * d_keys;

  VectorXd dbridge = dh_next.cwiseProduct((1.0 - tf.enc.h0.array().square()).matrix());
  g.bridge_W.noalias() += dbridge * tf.enc.bridge_in.transpose();
  g.bridge_b.col(0) += dbridge;
  VectorXd dbridge_in = p.bridge_W.transpose() * dbridge;

  // Forward encoder, processed in reverse time order.
  VectorXd dh_carry = VectorXd::Zero(H), dc_carry = VectorXd::Zero(H);
  for (Eigen::Index s = S - 1; s >= 0; --s) {
    VectorXd dh = d_enc.col(s).head(H) + dh_carry;
    if (s == S - 1) dh += dbridge_in.head(H);
    VectorXd dc_prev;
    VectorXd dxh = nn::lstm_backward(p.enc_fwd, g.enc_fwd, tf.enc.fwd[s], dh, dc_carry, dc_prev);
    g.src_emb.row(x[s]) += dxh.head(E).transpose();
    dh_carry = dxh.tail(H);
    dc_carry = dc_prev;
  }
  // Backward encoder ran from S-1 down to 0.
  dh_carry.setZero();
  dc_carry.setZero();
  for (Eigen::Index s = 0; s < S; ++s) {
    VectorXd dh = d_enc.col(s).tail(H) + dh_carry;
    if (s == 0) dh += dbridge_in.tail(H);
    VectorXd dc_prev;
    VectorXd dxh = nn::lstm_backward(p.enc_bwd, g.enc_bwd, tf.enc.bwd[s], dh, dc_carry, dc_prev);
    g.src_emb.row(x[s]) += dxh.head(E).transpose();
    dh_carry = dxh.tail(H);
    dc_carry = dc_prev;
  }
  if (loss) *loss = total;
  return g;
}

double avg_token_entropy(const LearnerParams& params, std::span<const int> x, const Hypothesis& hyp) {
  auto tf = teacher_force(params, x, hyp.ids, std::nullopt);
  const std::size_t n = hyp.ids.size() + (hyp.finished ? 1 : 0);
  if (n == 0) throw Error("avg_token_entropy needs a non-empty hypothesis");
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& lp = tf.steps[t].logp;
    double h = 0.0;
    for (Eigen::Index v = 0; v < lp.size(); ++v) {
      const double pv = std::exp(lp(v));
      if (pv > 0.0) h -= pv * lp(v);
    }
    total += h;
  }
  return std::max(0.0, total / static_cast<double>(n));
}

}  // namespace selfreg
