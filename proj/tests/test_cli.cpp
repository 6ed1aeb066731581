#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "selfreg/cli.hpp"
#include "selfreg/loop.hpp"

using namespace selfreg;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Two tiny domains plus a pretrained learner, built once.
const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "selfreg_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    const std::vector<std::string> small = {"n_dev=20", "n_test=10", "lexicon_size=20", "min_len=3", "max_len=5"};
    auto gen = [&](const std::string& name, std::vector<std::string> extra) {
      std::vector<std::string> a = {"gen-data", "--out", (d / name).string()};
      a.insert(a.end(), small.begin(), small.end());
      a.insert(a.end(), extra.begin(), extra.end());
      auto r = run_cli(a);
      REQUIRE_MESSAGE(r.code == 0, r.err);
    };
    gen("d0", {"n_train=200"});
    gen("d1", {"n_train=60", "domain_id=1"});
    auto r = run_cli({"pretrain", "--out", (d / "pre").string(), "train_source=" + (d / "d0/train.src").string(),
                      "train_target=" + (d / "d0/train.trg").string(), "dev_source=" + (d / "d0/dev.src").string(),
                      "dev_target=" + (d / "d0/dev.trg").string(), "vocab_sources=" + (d / "d1/train.src").string(),
                      "vocab_targets=" + (d / "d1/train.trg").string(), "embed_dim=8", "hidden_dim=8",
                      "max_epochs=3", "max_decode_len=7", "beam_width=2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return d;
  }();
  return dir;
}

std::vector<std::string> stream_args(const std::string& command, const fs::path& out) {
  const auto& d = workdir();
  return {command,
          "--out",
          out.string(),
          "learner=" + (d / "pre/learner.ckpt").string(),
          "stream_source=" + (d / "d1/train.src").string(),
          "stream_target=" + (d / "d1/train.trg").string(),
          "dev_source=" + (d / "d1/dev.src").string(),
          "dev_target=" + (d / "d1/dev.trg").string(),
          "batch_size=10"};
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& extra) {
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

void check_same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    INFO(n);
    CHECK(slurp(a / n) == slurp(b / n));
  }
}

}  // namespace

TEST_CASE("gen-data and pretrain are byte-reproducible") {
  const auto& d = workdir();
  auto r = run_cli({"gen-data", "--out", (d / "d0b").string(), "n_train=200", "n_dev=20", "n_test=10",
                    "lexicon_size=20", "min_len=3", "max_len=5"});
  REQUIRE(r.code == 0);
  check_same_files(d / "d0", d / "d0b", {"train.src", "train.trg", "dev.trg", "lexicon.trg", "resolved.cfg"});

  // Same settings through a config file plus --seed must match too.
  std::ofstream(d / "pre.cfg") << "# pretrain\nembed_dim = 8\nhidden_dim = 8\nmax_epochs = 3\n"
                               << "max_decode_len = 7\nbeam_width = 2\nseed = 99\n";
  r = run_cli({"pretrain", "--config", (d / "pre.cfg").string(), "--seed", "1", "--out", (d / "pre2").string(),
               "--train-source", (d / "d0/train.src").string(), "--train_target=" + (d / "d0/train.trg").string(),
               "dev_source=" + (d / "d0/dev.src").string(), "dev_target=" + (d / "d0/dev.trg").string(),
               "vocab_sources=" + (d / "d1/train.src").string(), "vocab_targets=" + (d / "d1/train.trg").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  check_same_files(d / "pre", d / "pre2", {"learner.ckpt", "pretrain.json", "resolved.cfg"});
}

TEST_CASE("regulate, baseline and transfer reruns are byte-identical") {
  const auto& d = workdir();
  for (const auto& out : {"reg_a", "reg_b"}) {
    auto r = run_cli(stream_args("regulate", d / out));
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  const std::vector<std::string> run_files = {"run.jsonl", "curve.csv", "learner_best.ckpt", "learner_final.ckpt",
                                              "resolved.cfg"};
  check_same_files(d / "reg_a", d / "reg_b", run_files);
  check_same_files(d / "reg_a", d / "reg_b", {"regulator.ckpt", "pregen.jsonl"});

  for (const auto& out : {"eg_a", "eg_b"}) {
    auto r = run_cli(with(stream_args("baseline", d / out), {"policy=epsilon-greedy", "epsilon=0.5"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  check_same_files(d / "eg_a", d / "eg_b", run_files);

  const auto reg_ckpt = slurp(d / "reg_a/regulator.ckpt");
  for (const auto& out : {"tr_a", "tr_b"}) {
    auto r = run_cli(with(stream_args("transfer", d / out), {"regulator=" + (d / "reg_a/regulator.ckpt").string()}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  check_same_files(d / "tr_a", d / "tr_b", run_files);
  CHECK(slurp(d / "reg_a/regulator.ckpt") == reg_ckpt);

  // A different seed gives a different run.
  auto r = run_cli(with(stream_args("baseline", d / "eg_c"), {"policy=epsilon-greedy", "epsilon=0.5", "--seed", "7"}));
  REQUIRE(r.code == 0);
  CHECK(slurp(d / "eg_a/run.jsonl") != slurp(d / "eg_c/run.jsonl"));
}

TEST_CASE("run meta records the policy and its settings") {
  const auto& d = workdir();
  auto r = run_cli(with(stream_args("baseline", d / "al"), {"policy=uncertainty", "gamma=0.3"}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto log = RunLog::read(d / "al/run.jsonl");
  CHECK(log.meta["mode"] == "baseline");
  CHECK(log.meta["policy"] == "uncertainty");
  CHECK(log.meta["policy_config"]["gamma"] == 0.3);
  CHECK(log.meta["config"]["batch_size"] == 10);

  r = run_cli(with(stream_args("baseline", d / "eg"), {"policy=epsilon-greedy", "epsilon=0.75", "action_set=reg4"}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  log = RunLog::read(d / "eg/run.jsonl");
  CHECK(log.meta["policy_config"]["epsilon"] == 0.75);
  CHECK(log.meta["policy_config"]["arms"].size() == 4);
}

TEST_CASE("export-curves writes one row per iteration") {
  const auto& d = workdir();
  auto r = run_cli(with(stream_args("baseline", d / "full"), {"policy=full"}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto csv = d / "exported.csv";
  r = run_cli({"export-curves", "run=" + (d / "full/run.jsonl").string(), "csv=" + csv.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto text = slurp(csv);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6);  // 60 items, B = 10
  CHECK(text == slurp(d / "full/curve.csv"));
}

TEST_CASE("eval prints a JSON report") {
  const auto& d = workdir();
  auto r = run_cli({"eval", "learner=" + (d / "pre/learner.ckpt").string(), "source=" + (d / "d0/dev.src").string(),
                    "target=" + (d / "d0/dev.trg").string(), "decode=greedy"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["n_sentences"] == 20);
  CHECK(j["bleu"].get<double>() >= 0.0);
}

TEST_CASE("bad configurations fail before any work") {
  const auto& d = workdir();
  auto expect_error = [&](std::vector<std::string> args, const std::string& fragment, const fs::path& out) {
    auto r = run_cli(args);
    CHECK(r.code != 0);
    CHECK_MESSAGE(r.err.find(fragment) != std::string::npos, r.err);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    CHECK_FALSE(fs::exists(out));
  };
  expect_error(with(stream_args("regulate", d / "bad1"), {"learning_rat=0.1"}), "unknown config key 'learning_rat'",
               d / "bad1");
  expect_error(with(stream_args("baseline", d / "bad2"), {"policy=full", "gamma=0.3"}), "config conflict", d / "bad2");
  expect_error(with(stream_args("baseline", d / "bad3"), {"policy=uncertainty", "epsilon=0.3"}), "config conflict",
               d / "bad3");
  expect_error(with(stream_args("baseline", d / "bad4"), {"policy=full", "dev_source=/no/such/file"}),
               "missing input: dev_source = /no/such/file", d / "bad4");
  expect_error(with(stream_args("regulate", d / "bad5"), {"batch_size=0"}), "batch", d / "bad5");
  expect_error({"gen-data", "--out", (d / "bad6").string(), "--config", (d / "none.cfg").string()}, "missing input",
               d / "bad6");
  expect_error(with(stream_args("baseline", d / "bad7"), {"policy=full", "stray"}), "unexpected argument", d / "bad7");
}
