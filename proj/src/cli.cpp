#include "selfreg/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "selfreg/checkpoint.hpp"
#include "selfreg/config.hpp"
#include "selfreg/corpus.hpp"
#include "selfreg/loop.hpp"
#include "selfreg/service.hpp"
#include "selfreg/synthetic.hpp"

namespace selfreg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Reads the keys a command understands, remembering each resolved value.
// Anything left unread is an unknown key.
class Keys {
 public:
  Keys(std::string command, KvConfig kv) : command_(std::move(command)), kv_(std::move(kv)) {}

  bool given(const std::string& k) {
    used_.insert(k);
    return kv_.has(k);
  }
  std::string str(const std::string& k, const std::string& fallback) {
    used_.insert(k);
    auto v = kv_.get_string(k, fallback);
    if (!v.empty()) resolved_.set(k, v);
    return v;
  }
  std::string required(const std::string& k) {
    auto v = str(k, "");
    if (v.empty()) throw Error("missing required key '" + k + "'");
    return v;
  }
  fs::path input(const std::string& k) {
    fs::path p = required(k);
    if (!fs::exists(p)) throw Error("missing input: " + k + " = " + p.string());
    return p;
  }
  fs::path optional_input(const std::string& k) {
    fs::path p = str(k, "");
    if (!p.empty() && !fs::exists(p)) throw Error("missing input: " + k + " = " + p.string());
    return p;
  }
  long long integer(const std::string& k, long long fallback) {
    used_.insert(k);
    auto v = kv_.get_int(k, fallback);
    resolved_.set(k, std::to_string(v));
    return v;
  }
  std::uint64_t u64(const std::string& k, std::uint64_t fallback) {
    used_.insert(k);
    auto v = kv_.get_u64(k, fallback);
    resolved_.set(k, std::to_string(v));
    return v;
  }
  double real(const std::string& k, double fallback) {
    used_.insert(k);
    auto v = kv_.get_double(k, fallback);
    resolved_.set(k, format_double(v));
    return v;
  }
  bool flag(const std::string& k, bool fallback) {
    used_.insert(k);
    auto v = kv_.get_bool(k, fallback);
    resolved_.set(k, v ? "true" : "false");
    return v;
  }
  std::vector<std::string> list(const std::string& k) {
    used_.insert(k);
    auto v = kv_.get_list(k);
    if (!v.empty()) resolved_.set(k, kv_.get_string(k, ""));
    return v;
  }

  void done() const {
    for (const auto& [k, v] : kv_.values())
      if (!used_.count(k)) throw Error("unknown config key '" + k + "' for command " + command_);
  }
  std::string resolved_text() const { return "# selfreg " + command_ + "\n" + resolved_.to_string(); }
  std::string hash() const { return content_hash(resolved_.to_string()); }
  const std::string& command() const { return command_; }

 private:
  std::string command_;
  KvConfig kv_;
  KvConfig resolved_;
  std::set<std::string> used_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const std::string& out, const Keys& k) {
  if (out.empty()) throw Error("--out is required for " + k.command());
  fs::path dir(out);
  fs::create_directories(dir);
  write_text(dir / "resolved.cfg", k.resolved_text());
  return dir;
}

std::vector<ParallelExample> read_examples(const fs::path& src, const fs::path& trg, const LearnerCheckpoint& lc) {
  auto text = load_parallel(src, trg);
  if (text.pairs.empty()) throw Error("no sentence pairs in " + src.string());
  return make_examples(text.pairs, lc.scheme, lc.src_vocab, lc.trg_vocab);
}

LearnerCheckpoint with_params(const LearnerCheckpoint& base, const LearnerParams& p, json info) {
  LearnerCheckpoint c = base;
  c.params = p;
  c.optimizer = LearnerOptimizerState::zeros_like(p);
  c.rng_state.clear();
  c.info = std::move(info);
  return c;
}

// Inputs shared by regulate, baseline and transfer.
struct StreamRun {
  fs::path learner_path, stream_src, stream_trg, dev_src, dev_trg, pregen_path;
  int pregen_beam = 0;
  TrainConfig train;
  int checkpoint_every = 0;
  bool resume = false;

  LearnerCheckpoint learner;
  std::vector<ParallelExample> stream, dev;
  PregenTargets pregen;
};

StreamRun read_stream_keys(Keys& k) {
  StreamRun r;
  r.learner_path = k.input("learner");
  r.stream_src = k.input("stream_source");
  r.stream_trg = k.input("stream_target");
  r.dev_src = k.input("dev_source");
  r.dev_trg = k.input("dev_target");
  r.pregen_path = k.optional_input("pregen");
  r.learner = LearnerCheckpoint::load(r.learner_path);
  r.pregen_beam = static_cast<int>(k.integer("pregen_beam", r.learner.config.beam_width));
  auto& t = r.train;
  t.batch_size = static_cast<int>(k.integer("batch_size", 32));
  t.alpha = k.real("alpha", 1.0);
  t.max_epochs = static_cast<int>(k.integer("max_epochs", 1));
  t.budget = k.real("budget", 0.0);
  t.eval_every = static_cast<int>(k.integer("eval_every", 1));
  t.seed = k.u64("seed", 1);
  t.val_mode = DecodeMode::parse(k.str("val_decode", "greedy"));
  t.max_decode_len = static_cast<int>(k.integer("max_decode_len", r.learner.config.max_decode_len));
  t.p_att = k.real("p_att", r.learner.config.p_att);
  t.optimizer.kind = parse_optimizer(k.str("optimizer", "adam"));
  t.optimizer.learning_rate = k.real("learning_rate", 1e-3);
  t.log_wall_time = k.flag("log_wall_time", false);
  t.scheme = r.learner.scheme;
  t.validate();
  if (r.pregen_beam < 1) throw Error("pregen_beam must be >= 1");
  r.checkpoint_every = static_cast<int>(k.integer("checkpoint_every", 0));
  r.resume = k.flag("resume", false);
  return r;
}

void load_stream(StreamRun& r, const fs::path& out) {
  r.stream = read_examples(r.stream_src, r.stream_trg, r.learner);
  r.dev = read_examples(r.dev_src, r.dev_trg, r.learner);
  if (!r.pregen_path.empty()) {
    r.pregen = load_pregen(r.pregen_path);
  } else {
    r.pregen = pregenerate_targets(r.learner.params, r.stream, r.learner.trg_vocab, r.learner.scheme, r.pregen_beam,
                                   r.train.max_decode_len);
    save_pregen(out / "pregen.jsonl", r.pregen);
  }
}

RunResult drive(StreamRun& r, FeedbackPolicy& policy, const fs::path& out, json meta) {
  InteractiveRun run(r.learner.params, policy, r.stream, r.pregen, r.dev, r.train, std::move(meta));
  const auto ckpt = out / "run.ckpt";
  if (r.resume && fs::exists(ckpt)) run.load_checkpoint(ckpt);
  while (auto item = run.next()) {
    auto rec = run.submit(
        provide_feedback(item->decision.action, *item->example, *item->hypothesis, r.train.scheme, r.train.p_att));
    if (rec && r.checkpoint_every > 0 && rec->j % r.checkpoint_every == 0) run.save_checkpoint(ckpt);
  }
  return run.result();
}

void write_run(const fs::path& out, const RunResult& res, const StreamRun& r, const Keys& k, std::ostream& os) {
  res.log.write(out / "run.jsonl");
  write_text(out / "curve.csv", res.log.to_csv());
  json info = {{"command", k.command()}, {"config_hash", k.hash()}};
  info["which"] = "best";
  info["best_j"] = res.best_j;
  with_params(r.learner, res.best_params, info).save(out / "learner_best.ckpt");
  info["which"] = "final";
  with_params(r.learner, res.final_params, info).save(out / "learner_final.ckpt");
  const double final_val = res.log.records.empty() ? res.log.initial_val_bleu() : res.log.records.back().val_bleu;
  os << k.command() << ": " << res.log.records.size() << " iterations, cost " << res.ledger.total << ", initial "
     << res.log.initial_val_bleu() << ", final " << final_val << ", best " << res.best_val << " (j=" << res.best_j
     << ")\n";
}

int cmd_gen_data(Keys& k, const std::string& out_dir, std::ostream& os) {
  SyntheticConfig c;
  c.seed = k.u64("seed", c.seed);
  c.lexicon_size = static_cast<int>(k.integer("lexicon_size", c.lexicon_size));
  c.reorder_window = static_cast<int>(k.integer("reorder_window", c.reorder_window));
  c.domain_id = static_cast<int>(k.integer("domain_id", c.domain_id));
  c.shift_fraction = k.real("shift_fraction", c.shift_fraction);
  c.zipf = k.real("zipf", c.zipf);
  c.min_len = static_cast<int>(k.integer("min_len", c.min_len));
  c.max_len = static_cast<int>(k.integer("max_len", c.max_len));
  const int n_train = static_cast<int>(k.integer("n_train", 5000));
  const int n_dev = static_cast<int>(k.integer("n_dev", 500));
  const int n_test = static_cast<int>(k.integer("n_test", 500));
  k.done();
  auto out = prepare_out(out_dir, k);
  auto d = generate_domain(c, n_train, n_dev, n_test);
  write_parallel(out / "train.src", out / "train.trg", d.train);
  write_parallel(out / "dev.src", out / "dev.trg", d.dev);
  write_parallel(out / "test.src", out / "test.trg", d.test);
  write_parallel(out / "lexicon.src", out / "lexicon.trg", d.lexicon);
  os << "gen-data: domain " << c.domain_id << ", " << d.train.size() << "/" << d.dev.size() << "/" << d.test.size()
     << " pairs in " << out.string() << "\n";
  return 0;
}

int cmd_pretrain(Keys& k, const std::string& out_dir, std::ostream& os) {
  const auto train_src = k.input("train_source"), train_trg = k.input("train_target");
  const auto dev_src = k.input("dev_source"), dev_trg = k.input("dev_target");
  const auto extra_src = k.list("vocab_sources"), extra_trg = k.list("vocab_targets");
  for (const auto& p : extra_src)
    if (!fs::exists(p)) throw Error("missing input: vocab_sources = " + p);
  for (const auto& p : extra_trg)
    if (!fs::exists(p)) throw Error("missing input: vocab_targets = " + p);
  const auto scheme = parse_scheme(k.str("scheme", "whitespace"));
  LearnerConfig lc;
  lc.embed_dim = static_cast<int>(k.integer("embed_dim", lc.embed_dim));
  lc.hidden_dim = static_cast<int>(k.integer("hidden_dim", lc.hidden_dim));
  lc.p_att = k.real("p_att", lc.p_att);
  lc.max_decode_len = static_cast<int>(k.integer("max_decode_len", lc.max_decode_len));
  lc.beam_width = static_cast<int>(k.integer("beam_width", lc.beam_width));
  PretrainConfig pc;
  pc.batch_size = static_cast<int>(k.integer("batch_size", pc.batch_size));
  pc.max_epochs = static_cast<int>(k.integer("max_epochs", pc.max_epochs));
  pc.learning_rate = k.real("learning_rate", 5e-3);
  pc.halve_after = static_cast<int>(k.integer("halve_after", pc.halve_after));
  pc.patience = static_cast<int>(k.integer("patience", pc.patience));
  pc.eval_every = static_cast<int>(k.integer("eval_every", pc.eval_every));
  pc.max_decode_len = lc.max_decode_len;
  pc.seed = k.u64("seed", 1);
  k.done();
  auto out = prepare_out(out_dir, k);

  auto train = load_parallel(train_src, train_trg);
  auto dev = load_parallel(dev_src, dev_trg);
  std::vector<std::string> src_texts, trg_texts;
  for (const auto& p : train.pairs) {
    src_texts.push_back(p.source);
    trg_texts.push_back(p.target);
  }
  auto add_lines = [](const std::string& path, std::vector<std::string>& into) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) into.push_back(line);
  };
  for (const auto& p : extra_src) add_lines(p, src_texts);
  for (const auto& p : extra_trg) add_lines(p, trg_texts);

  LearnerCheckpoint ck;
  ck.scheme = scheme;
  ck.src_vocab = Vocabulary::from_texts(src_texts, scheme);
  ck.trg_vocab = Vocabulary::from_texts(trg_texts, scheme);
  lc.src_vocab_size = ck.src_vocab.size();
  lc.trg_vocab_size = ck.trg_vocab.size();
  lc.validate();
  ck.config = lc;
  Rng rng(derive_seed(pc.seed, "learner-init"));
  auto init = LearnerParams::init(lc, rng);
  auto train_ex = make_examples(train.pairs, scheme, ck.src_vocab, ck.trg_vocab);
  auto dev_ex = make_examples(dev.pairs, scheme, ck.src_vocab, ck.trg_vocab);
  auto res = pretrain(init, train_ex, dev_ex, pc);
  json history = {{"initial_val_bleu", res.initial_val},
                  {"best_val_bleu", res.best_val},
                  {"val_history", res.val_history},
                  {"lr_history", res.lr_history},
                  {"epochs", res.epochs}};
  with_params(ck, res.best, {{"command", "pretrain"}, {"config_hash", k.hash()}}).save(out / "learner.ckpt");
  write_text(out / "pretrain.json", history.dump(2) + "\n");
  os << "pretrain: " << res.epochs << " epochs, dev BLEU " << res.initial_val << " -> " << res.best_val << "\n";
  return 0;
}

int cmd_regulate(Keys& k, const std::string& out_dir, std::ostream& os) {
  auto r = read_stream_keys(k);
  RegulatorConfig rc;
  rc.action_set = ActionSet::parse(k.str("action_set", "reg3"));
  rc.encoder_hidden = static_cast<int>(k.integer("encoder_hidden", rc.encoder_hidden));
  rc.state_hidden = static_cast<int>(k.integer("state_hidden", rc.state_hidden));
  rc.optimizer.kind = parse_optimizer(k.str("regulator_optimizer", "adam"));
  rc.optimizer.learning_rate = k.real("regulator_learning_rate", rc.optimizer.learning_rate);
  rc.alpha = r.train.alpha;
  rc.validate();
  const auto init_path = k.optional_input("regulator_init");
  k.done();
  auto out = prepare_out(out_dir, k);
  load_stream(r, out);

  RegulatorParams phi;
  if (!init_path.empty()) {
    auto init = RegulatorCheckpoint::load(init_path);
    if (!(init.config.action_set == rc.action_set)) throw Error("regulator_init has a different action set");
    phi = init.params;
  } else {
    Rng rng(derive_seed(r.train.seed, "regulator-init"));
    phi = RegulatorParams::init(rc, r.learner.params, rng);
  }
  RegulatorPolicy policy(rc, phi, true);
  auto res = drive(r, policy, out, {{"mode", "regulate"}});
  RegulatorCheckpoint reg{rc, policy.params(), policy.optimizer_state(), policy.state()};
  reg.save(out / "regulator.ckpt");
  write_run(out, res, r, k, os);
  return 0;
}

int cmd_baseline(Keys& k, const std::string& out_dir, std::ostream& os) {
  auto r = read_stream_keys(k);
  const auto policy_name = k.required("policy");
  const bool eg = policy_name == "epsilon-greedy", al = policy_name == "uncertainty";
  if (policy_name == "regulator") throw Error("config conflict: use the regulate command for policy 'regulator'");
  if (k.given("action_set") && !eg)
    throw Error("config conflict: action_set only applies to policy epsilon-greedy, not '" + policy_name + "'");
  if (k.given("epsilon") && !eg)
    throw Error("config conflict: epsilon only applies to policy epsilon-greedy, not '" + policy_name + "'");
  if (k.given("gamma") && !al)
    throw Error("config conflict: gamma only applies to policy uncertainty, not '" + policy_name + "'");
  std::unique_ptr<FeedbackPolicy> policy;
  if (eg) {
    auto arms = ActionSet::parse(k.str("action_set", "reg3"));
    const double eps = k.real("epsilon", 0.1);
    policy = std::make_unique<EpsilonGreedyPolicy>(arms, eps, r.train.alpha);
  } else if (al) {
    policy = std::make_unique<UncertaintyPolicy>(k.real("gamma", 0.5));
  } else {
    policy = std::make_unique<FixedPolicy>(parse_feedback_type(policy_name));
  }
  k.done();
  auto out = prepare_out(out_dir, k);
  load_stream(r, out);
  auto res = drive(r, *policy, out, {{"mode", "baseline"}});
  write_run(out, res, r, k, os);
  return 0;
}

int cmd_transfer(Keys& k, const std::string& out_dir, std::ostream& os) {
  auto r = read_stream_keys(k);
  const auto reg_path = k.input("regulator");
  k.done();
  auto out = prepare_out(out_dir, k);
  auto reg = RegulatorCheckpoint::load(reg_path);
  load_stream(r, out);
  auto rc = reg.config;
  rc.alpha = r.train.alpha;
  const auto before = content_hash(reg.to_archive().to_bytes());
  RegulatorPolicy policy(rc, reg.params, false);
  auto res = drive(r, policy, out, {{"mode", "transfer"}, {"regulator_hash", before}});
  reg.params = policy.params();
  if (content_hash(reg.to_archive().to_bytes()) != before) throw Error("internal: the frozen regulator changed");
  write_run(out, res, r, k, os);
  return 0;
}

int cmd_eval(Keys& k, const std::string& out_dir, std::ostream& os) {
  const auto learner = LearnerCheckpoint::load(k.input("learner"));
  const auto src = k.input("source"), trg = k.input("target");
  const auto mode = DecodeMode::parse(k.str("decode", DecodeMode::beam(learner.config.beam_width).to_string()));
  const int max_len = static_cast<int>(k.integer("max_decode_len", learner.config.max_decode_len));
  k.done();
  auto examples = read_examples(src, trg, learner);
  auto report = evaluate(learner.params, examples, mode, max_len);
  if (!out_dir.empty()) {
    auto out = prepare_out(out_dir, k);
    write_text(out / "eval.json", report.to_json().dump(2) + "\n");
  }
  os << report.to_json().dump() << "\n";
  return 0;
}

int cmd_export_curves(Keys& k, const std::string& out_dir, std::ostream& os) {
  const auto run = k.input("run");
  auto csv = fs::path(k.str("csv", ""));
  k.done();
  if (csv.empty()) csv = out_dir.empty() ? fs::path(run).replace_extension(".csv") : fs::path(out_dir) / "curve.csv";
  if (!out_dir.empty()) fs::create_directories(out_dir);
  auto log = RunLog::read(run);
  write_text(csv, log.to_csv());
  os << "export-curves: " << log.records.size() << " rows -> " << csv.string() << "\n";
  return 0;
}

int cmd_serve(Keys& k, std::ostream& os) {
  const auto host = k.str("host", "127.0.0.1");
  const int port = static_cast<int>(k.integer("port", 8080));
  k.done();
  SessionManager sessions;
  HttpServer server(sessions);
  const int bound = server.bind(host, port);
  os << "serving on http://" << host << ":" << bound << std::endl;
  server.listen();
  return 0;
}

KvConfig collect_overrides(const std::string& config_path, const std::vector<std::string>& extras,
                           const std::string& seed) {
  KvConfig kv;
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw Error("missing input: --config " + config_path);
    kv = KvConfig::load(config_path);
  }
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& tok = extras[i];
    if (tok.rfind("--", 0) == 0) {
      auto body = tok.substr(2);
      std::string key, value;
      if (auto eq = body.find('='); eq != std::string::npos) {
        key = body.substr(0, eq);
        value = body.substr(eq + 1);
      } else {
        if (i + 1 >= extras.size()) throw Error("option " + tok + " needs a value");
        key = body;
        value = extras[++i];
      }
      std::replace(key.begin(), key.end(), '-', '_');
      kv.set(key, value);
    } else if (tok.find('=') != std::string::npos) {
      kv.apply_override(tok);
    } else {
      throw Error("unexpected argument '" + tok + "' (expected key=value)");
    }
  }
  if (!seed.empty()) kv.set("seed", seed);
  return kv;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cost-aware self-regulated interactive sequence-to-sequence learning", "selfreg"};
  app.require_subcommand(1, 1);
  struct Command {
    const char* name;
    const char* help;
  };
  const std::vector<Command> commands = {
      {"gen-data", "generate one synthetic domain (train/dev/test/lexicon)"},
      {"pretrain", "train the learner with full supervision"},
      {"regulate", "interactive run with a learned feedback regulator"},
      {"baseline", "interactive run with a fixed, epsilon-greedy or uncertainty policy"},
      {"transfer", "interactive run with a frozen regulator on a new domain"},
      {"eval", "corpus BLEU / WER of a learner checkpoint"},
      {"export-curves", "write the CSV learning curve of a run log"},
      {"serve", "HTTP/JSON session service"},
  };
  std::string config_path, out_dir, seed;
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sc = app.add_subcommand(c.name, c.help);
    sc->add_option("--config", config_path, "flat key = value config file");
    sc->add_option("--out", out_dir, "output directory");
    sc->add_option("--seed", seed, "seed for every random stream");
    sc->allow_extras();
    sc->footer("Further settings: key=value or --key value (see README for the key list).");
    subs.push_back(sc);
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    for (auto* sc : subs) {
      if (!sc->parsed()) continue;
      const std::string name = sc->get_name();
      Keys keys(name, collect_overrides(config_path, sc->remaining(), seed));
      if (name == "gen-data") return cmd_gen_data(keys, out_dir, out);
      if (name == "pretrain") return cmd_pretrain(keys, out_dir, out);
      if (name == "regulate") return cmd_regulate(keys, out_dir, out);
      if (name == "baseline") return cmd_baseline(keys, out_dir, out);
      if (name == "transfer") return cmd_transfer(keys, out_dir, out);
      if (name == "eval") return cmd_eval(keys, out_dir, out);
      if (name == "export-curves") return cmd_export_curves(keys, out_dir, out);
      if (name == "serve") return cmd_serve(keys, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace selfreg
