#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfreg/checkpoint.hpp"
#include "selfreg/loop.hpp"

namespace httplib {
class Server;
}

namespace selfreg {

// Carries the HTTP status the error maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& message, std::string field = {})
      : Error(message), status_(status), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& field() const { return field_; }

 private:
  int status_;
  std::string field_;
};

// Body of POST /sessions.
struct SessionSpec {
  std::string client_token;
  std::string mode = "human";  // or "simulated": /next also reveals the reference
  std::filesystem::path learner_checkpoint;
  std::filesystem::path regulator_checkpoint;  // required for policy "regulator"
  std::filesystem::path stream_source, stream_target, dev_source, dev_target;
  std::filesystem::path pregen;  // optional; decoded at creation otherwise
  std::string policy = "regulator";  // regulator | full | weak | self | none | epsilon-greedy | uncertainty
  bool train_regulator = true;
  std::string action_set = "reg3";  // epsilon-greedy arms
  double epsilon = 0.1;
  double gamma = 0.5;
  int pregen_beam = 5;
  TrainConfig train;

  static SessionSpec from_json(const nlohmann::json& j);  // ServiceError(400) naming the field
  nlohmann::json to_json() const;
};

struct Submission {
  std::int64_t item_id = 0;
  std::string kind;  // marking | correction | skip
  std::vector<bool> marking;
  std::string corrected_text;
  std::optional<std::int64_t> client_edit_count;  // logged, never used for cost

  static Submission from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// One sequential state owner. next() and submit() serialize on the session;
// metrics() and export_events() read a snapshot and never wait for an update.
class Session {
 public:
  static std::unique_ptr<Session> create(const std::string& id, const SessionSpec& spec);
  // Rebuilds a session from its exported event log.
  static std::unique_ptr<Session> replay(const std::string& jsonl);
  ~Session();

  nlohmann::json next();
  nlohmann::json submit(const nlohmann::json& body);
  nlohmann::json metrics() const;
  std::string export_events() const;

  // Cursor, pending item, ledger, log and parameter hashes.
  nlohmann::json fingerprint() const;
  const std::string& id() const { return id_; }
  const SessionSpec& spec() const { return spec_; }

 private:
  Session() = default;
  void append_event(nlohmann::json event);
  void refresh_snapshot();
  nlohmann::json item_json(const InteractiveRun::Item& item) const;

  std::string id_;
  SessionSpec spec_;
  LearnerCheckpoint learner_;
  std::vector<ParallelExample> stream_, dev_;
  PregenTargets pregen_;
  std::unique_ptr<FeedbackPolicy> policy_;
  std::unique_ptr<InteractiveRun> run_;

  std::mutex work_;
  mutable std::mutex snap_;
  std::shared_ptr<const nlohmann::json> snapshot_;
  std::vector<std::string> events_;
};

class SessionManager {
 public:
  // {"session_id", "created"}; a repeated client token returns the same id.
  nlohmann::json create(const nlohmann::json& body);
  std::shared_ptr<Session> get(const std::string& id) const;
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::mutex create_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::pair<std::string, nlohmann::json>> tokens_;  // token -> (id, body)
  std::uint64_t counter_ = 0;
};

// Plays the simulated teacher for a /next response of a simulated session.
nlohmann::json simulated_submission(const nlohmann::json& item);

class HttpServer {
 public:
  explicit HttpServer(SessionManager& sessions);
  ~HttpServer();
  // Returns the bound port (port 0 picks a free one).
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  SessionManager& sessions_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace selfreg
