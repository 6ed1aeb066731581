#pragma once

#include <vector>

#include "selfreg/feedback.hpp"
#include "selfreg/learner.hpp"
#include "selfreg/loop.hpp"
#include "selfreg/synthetic.hpp"

namespace selfreg::testing {

// A small synthetic task with a briefly pretrained learner and pre-generated
// greedy hypotheses for the feedback stream.
struct World {
  Vocabulary src_vocab, trg_vocab;
  std::vector<ParallelExample> train, stream, dev;
  LearnerConfig learner_config;
  LearnerParams theta0;
  PregenTargets pregen;
  TrainConfig cfg;
};

inline constexpr int kTrain = 150;

inline World make_world(int n_stream = 24, int n_dev = 12, std::uint64_t seed = 3) {
  SyntheticConfig sc;
  sc.lexicon_size = 12;
  sc.min_len = 3;
  sc.max_len = 5;
  sc.seed = seed;
  auto spec = make_domain_spec(sc);
  auto pairs = gen_synthetic(spec, kTrain + n_stream + n_dev);
  std::vector<std::string> src_texts, trg_texts;
  for (const auto& p : pairs) {
    src_texts.push_back(p.source);
    trg_texts.push_back(p.target);
  }
  World w;
  w.src_vocab = Vocabulary::from_texts(src_texts, Scheme::Whitespace);
  w.trg_vocab = Vocabulary::from_texts(trg_texts, Scheme::Whitespace);
  auto all = make_examples(pairs, Scheme::Whitespace, w.src_vocab, w.trg_vocab);
  w.train.assign(all.begin(), all.begin() + kTrain);
  w.stream.assign(all.begin() + kTrain, all.begin() + kTrain + n_stream);
  w.dev.assign(all.begin() + kTrain + n_stream, all.end());

  LearnerConfig lc;
  lc.src_vocab_size = w.src_vocab.size();
  lc.trg_vocab_size = w.trg_vocab.size();
  lc.embed_dim = 8;
  lc.hidden_dim = 10;
  w.learner_config = lc;
  Rng rng(seed);
  auto init = LearnerParams::init(lc, rng);
  PretrainConfig pc;
  pc.batch_size = 8;
  pc.max_epochs = 12;
  pc.learning_rate = 2e-2;
  pc.max_decode_len = 8;
  w.theta0 = pretrain(init, w.train, w.dev, pc).best;
  w.pregen = pregenerate_targets(w.theta0, w.stream, w.trg_vocab, Scheme::Whitespace, 2, 8);

  w.cfg.batch_size = 5;
  w.cfg.max_decode_len = 8;
  w.cfg.optimizer.learning_rate = 1e-2;
  w.cfg.seed = seed;
  return w;
}

}  // namespace selfreg::testing
