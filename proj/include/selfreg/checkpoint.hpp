#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "selfreg/learner.hpp"
#include "selfreg/policies.hpp"
#include "selfreg/vocab.hpp"

namespace selfreg {

// Versioned container: magic, version, JSON header, then raw little-endian
// doubles for each tensor (column-major, shapes declared in the header).
// Writing the same content twice yields identical bytes.
class Archive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, const nn::MatrixXd& m);
  const nn::MatrixXd& get(const std::string& name) const;
  bool has(const std::string& name) const;

  template <class Params>
  void add_params(const std::string& prefix, const Params& p) {
    p.visit([&](const std::string& n, const nn::MatrixXd& m) { add(prefix + n, m); });
  }
  // Copies tensors into p; shapes must match the ones already in p.
  template <class Params>
  void load_params(const std::string& prefix, Params& p) const {
    p.visit([&](const std::string& n, nn::MatrixXd& m) { m = checked(prefix + n, m.rows(), m.cols()); });
  }

  std::string to_bytes() const;
  static Archive from_bytes(const std::string& bytes);
  void write(const std::filesystem::path& path) const;
  static Archive read(const std::filesystem::path& path);

 private:
  const nn::MatrixXd& checked(const std::string& name, Eigen::Index rows, Eigen::Index cols) const;
  std::vector<std::pair<std::string, nn::MatrixXd>> tensors_;
};

// 16 hex digits of FNV-1a over the bytes.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

nlohmann::json to_json(const LearnerConfig& cfg);
LearnerConfig learner_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RegulatorConfig& cfg);
RegulatorConfig regulator_config_from_json(const nlohmann::json& j);

struct LearnerCheckpoint {
  LearnerConfig config;
  LearnerParams params;
  LearnerOptimizerState optimizer;
  Vocabulary src_vocab, trg_vocab;
  Scheme scheme = Scheme::Whitespace;
  std::string rng_state;  // empty if none
  nlohmann::json info = nlohmann::json::object();

  Archive to_archive() const;
  static LearnerCheckpoint from_archive(const Archive& a);
  void save(const std::filesystem::path& path) const { to_archive().write(path); }
  static LearnerCheckpoint load(const std::filesystem::path& path) { return from_archive(Archive::read(path)); }
};

struct RegulatorCheckpoint {
  RegulatorConfig config;
  RegulatorParams params;
  RegulatorOptimizerState optimizer;
  RegulatorState state;

  Archive to_archive() const;
  static RegulatorCheckpoint from_archive(const Archive& a);
  void save(const std::filesystem::path& path) const { to_archive().write(path); }
  static RegulatorCheckpoint load(const std::filesystem::path& path) { return from_archive(Archive::read(path)); }
};

}  // namespace selfreg
