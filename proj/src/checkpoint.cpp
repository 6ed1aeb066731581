#include "selfreg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace selfreg {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'R', 'E', 'G', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error("corrupt checkpoint: truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void Archive::add(const std::string& name, const nn::MatrixXd& m) {
  if (has(name)) throw Error("archive already holds tensor '" + name + "'");
  tensors_.emplace_back(name, m);
}

bool Archive::has(const std::string& name) const {
  for (const auto& [n, m] : tensors_)
    if (n == name) return true;
  return false;
}

const nn::MatrixXd& Archive::get(const std::string& name) const {
  for (const auto& [n, m] : tensors_)
    if (n == name) return m;
  throw Error("checkpoint has no tensor '" + name + "'");
}

const nn::MatrixXd& Archive::checked(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
  const auto& m = get(name);
  if (m.rows() != rows || m.cols() != cols)
    throw Error("checkpoint tensor '" + name + "' is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  return m;
}

std::string Archive::to_bytes() const {
  nlohmann::json header = {{"meta", meta}, {"tensors", nlohmann::json::array()}};
  for (const auto& [n, m] : tensors_) header["tensors"].push_back({{"name", n}, {"rows", m.rows()}, {"cols", m.cols()}});
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  for (const auto& [n, m] : tensors_)
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  return out;
}

Archive Archive::from_bytes(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error("corrupt checkpoint: bad magic");
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = take<std::uint64_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw Error("corrupt checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt checkpoint: ") + e.what());
  }
  pos += hlen;
  Archive a;
  a.meta = header.at("meta");
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>(), cols = t.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw Error("corrupt checkpoint: negative shape");
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos + n > bytes.size()) throw Error("corrupt checkpoint: truncated tensor '" + t.at("name").get<std::string>() + "'");
    nn::MatrixXd m(rows, cols);
    std::memcpy(m.data(), bytes.data() + pos, n);
    pos += n;
    a.add(t.at("name").get<std::string>(), m);
  }
  if (pos != bytes.size()) throw Error("corrupt checkpoint: trailing bytes");
  return a;
}

void Archive::write(const std::filesystem::path& path) const {
  const std::string bytes = to_bytes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Archive Archive::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_bytes(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

namespace {

nlohmann::json to_json(const OptimizerConfig& o) {
  return {{"kind", to_string(o.kind)},
          {"learning_rate", o.learning_rate},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
  OptimizerConfig o;
  o.kind = parse_optimizer(j.at("kind").get<std::string>());
  o.learning_rate = j.at("learning_rate").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.epsilon = j.at("epsilon").get<double>();
  return o;
}

template <class Params>
void add_optimizer(Archive& a, const std::string& prefix, const AdamState<Params>& s) {
  a.add_params(prefix + "m.", s.m);
  a.add_params(prefix + "v.", s.v);
  a.meta[prefix + "step"] = s.step;
}

template <class Params>
AdamState<Params> load_optimizer(const Archive& a, const std::string& prefix, const Params& shape) {
  auto s = AdamState<Params>::zeros_like(shape);
  a.load_params(prefix + "m.", s.m);
  a.load_params(prefix + "v.", s.v);
  s.step = a.meta.at(prefix + "step").get<long>();
  return s;
}

template <class Fn>
auto parse_meta(Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt checkpoint metadata: ") + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const LearnerConfig& c) {
  return {{"src_vocab_size", c.src_vocab_size},
          {"trg_vocab_size", c.trg_vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"p_att", c.p_att},
          {"max_decode_len", c.max_decode_len},
          {"beam_width", c.beam_width},
          {"optimizer", to_json(c.optimizer)}};
}

LearnerConfig learner_config_from_json(const nlohmann::json& j) {
  LearnerConfig c;
  c.src_vocab_size = j.at("src_vocab_size").get<int>();
  c.trg_vocab_size = j.at("trg_vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.p_att = j.at("p_att").get<double>();
  c.max_decode_len = j.at("max_decode_len").get<int>();
  c.beam_width = j.at("beam_width").get<int>();
  c.optimizer = optimizer_from_json(j.at("optimizer"));
  c.validate();
  return c;
}

nlohmann::json to_json(const RegulatorConfig& c) {
  std::vector<std::string> actions;
  for (auto a : c.action_set.actions) actions.emplace_back(to_string(a));
  return {{"encoder_hidden", c.encoder_hidden},
          {"state_hidden", c.state_hidden},
          {"action_set", c.action_set.name},
          {"actions", actions},
          {"alpha", c.alpha},
          {"optimizer", to_json(c.optimizer)}};
}

RegulatorConfig regulator_config_from_json(const nlohmann::json& j) {
  RegulatorConfig c;
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.state_hidden = j.at("state_hidden").get<int>();
  c.action_set.name = j.at("action_set").get<std::string>();
  c.action_set.actions.clear();
  for (const auto& a : j.at("actions")) c.action_set.actions.push_back(parse_feedback_type(a.get<std::string>()));
  c.alpha = j.at("alpha").get<double>();
  c.optimizer = optimizer_from_json(j.at("optimizer"));
  c.validate();
  return c;
}

Archive LearnerCheckpoint::to_archive() const {
  Archive a;
  a.meta["kind"] = "learner";
  a.meta["config"] = to_json(config);
  a.meta["src_vocab"] = src_vocab.tokens();
  a.meta["trg_vocab"] = trg_vocab.tokens();
  a.meta["scheme"] = to_string(scheme);
  a.meta["rng_state"] = rng_state;
  a.meta["info"] = info;
  a.add_params("params.", params);
  add_optimizer(a, "opt.", optimizer);
  return a;
}

LearnerCheckpoint LearnerCheckpoint::from_archive(const Archive& a) {
  return parse_meta([&] {
    if (a.meta.at("kind") != "learner") throw Error("not a learner checkpoint");
    LearnerCheckpoint c;
    c.config = learner_config_from_json(a.meta.at("config"));
    auto src = a.meta.at("src_vocab").get<std::vector<std::string>>();
    auto trg = a.meta.at("trg_vocab").get<std::vector<std::string>>();
    c.src_vocab = Vocabulary::from_tokens(std::vector<std::string>(src.begin() + Vocabulary::kNumSpecials, src.end()));
    c.trg_vocab = Vocabulary::from_tokens(std::vector<std::string>(trg.begin() + Vocabulary::kNumSpecials, trg.end()));
    if (c.src_vocab.tokens() != src || c.trg_vocab.tokens() != trg) throw Error("corrupt checkpoint vocabulary");
    c.scheme = parse_scheme(a.meta.at("scheme").get<std::string>());
    c.rng_state = a.meta.at("rng_state").get<std::string>();
    c.info = a.meta.at("info");
    Rng shape_rng(0);
    c.params = LearnerParams::init(c.config, shape_rng);
    a.load_params("params.", c.params);
    c.optimizer = load_optimizer(a, "opt.", c.params);
    return c;
  });
}

Archive RegulatorCheckpoint::to_archive() const {
  Archive a;
  a.meta["kind"] = "regulator";
  a.meta["config"] = to_json(config);
  a.add_params("params.", params);
  add_optimizer(a, "opt.", optimizer);
  a.add("state.h", state.h);
  a.add("state.c", state.c);
  a.add("state.prev_distribution", state.prev_distribution);
  return a;
}

RegulatorCheckpoint RegulatorCheckpoint::from_archive(const Archive& a) {
  return parse_meta([&] {
    if (a.meta.at("kind") != "regulator") throw Error("not a regulator checkpoint");
    RegulatorCheckpoint c;
    c.config = regulator_config_from_json(a.meta.at("config"));
    // Shapes come from the stored tensors; the embedding tables define E.
    const auto& src_emb = a.get("params.src_emb");
    const auto& hyp_emb = a.get("params.hyp_emb");
    LearnerParams shape;
    shape.src_emb = src_emb;
    shape.trg_emb = hyp_emb;
    Rng shape_rng(0);
    c.params = RegulatorParams::init(c.config, shape, shape_rng);
    a.load_params("params.", c.params);
    c.optimizer = load_optimizer(a, "opt.", c.params);
    c.state = RegulatorState::initial(c.params);
    c.state.h = a.get("state.h");
    c.state.c = a.get("state.c");
    c.state.prev_distribution = a.get("state.prev_distribution");
    if (c.state.h.size() != c.params.state_hidden() || c.state.prev_distribution.size() != c.params.num_actions())
      throw Error("corrupt checkpoint: regulator state shape");
    return c;
  });
}

}  // namespace selfreg
