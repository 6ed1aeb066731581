#include "selfreg/service.hpp"

#include <sstream>

#include "httplib.h"
#include "selfreg/corpus.hpp"
#include "selfreg/feedback.hpp"

namespace selfreg {

using nlohmann::json;

namespace {

ServiceError bad_field(const std::string& name, const std::string& what) {
  return ServiceError(400, "field '" + name + "': " + what, name);
}

std::string get_string(const json& j, const std::string& name, std::string fallback) {
  if (!j.contains(name)) return fallback;
  if (!j.at(name).is_string()) throw bad_field(name, "expected a string");
  return j.at(name).get<std::string>();
}

std::int64_t get_int(const json& j, const std::string& name, std::int64_t fallback) {
  if (!j.contains(name)) return fallback;
  if (!j.at(name).is_number_integer()) throw bad_field(name, "expected an integer");
  return j.at(name).get<std::int64_t>();
}

double get_double(const json& j, const std::string& name, double fallback) {
  if (!j.contains(name)) return fallback;
  if (!j.at(name).is_number()) throw bad_field(name, "expected a number");
  return j.at(name).get<double>();
}

bool get_bool(const json& j, const std::string& name, bool fallback) {
  if (!j.contains(name)) return fallback;
  if (!j.at(name).is_boolean()) throw bad_field(name, "expected a boolean");
  return j.at(name).get<bool>();
}

void check_keys(const json& j, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ServiceError(400, "request body must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw bad_field(k, "unknown field");
  }
}

json ledger_json(const CostLedger& l) {
  json per = json::object(), counts = json::object();
  for (auto t : kAllFeedbackTypes) {
    per[std::string(to_string(t))] = l.cost(t);
    counts[std::string(to_string(t))] = l.count(t);
  }
  return {{"total", l.total}, {"per_type", per}, {"per_type_counts", counts}};
}

std::unique_ptr<FeedbackPolicy> make_policy(const SessionSpec& spec, const LearnerParams& theta) {
  const auto& p = spec.policy;
  if (p == "regulator") {
    auto ck = RegulatorCheckpoint::load(spec.regulator_checkpoint);
    auto rcfg = ck.config;
    rcfg.alpha = spec.train.alpha;
    if (ck.params.src_emb.rows() != theta.src_emb.rows() || ck.params.hyp_emb.rows() != theta.trg_emb.rows())
      throw ServiceError(400, "regulator checkpoint vocabulary does not match the learner", "regulator_checkpoint");
    return std::make_unique<RegulatorPolicy>(rcfg, ck.params, spec.train_regulator);
  }
  if (p == "epsilon-greedy")
    return std::make_unique<EpsilonGreedyPolicy>(ActionSet::parse(spec.action_set), spec.epsilon, spec.train.alpha);
  if (p == "uncertainty") return std::make_unique<UncertaintyPolicy>(spec.gamma);
  return std::make_unique<FixedPolicy>(parse_feedback_type(p));
}

std::vector<std::string> vocab_tokens(std::span<const int> ids, const Vocabulary& v) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(v.token(id));
  return out;
}

const char* kind_for(FeedbackType t) {
  switch (t) {
    case FeedbackType::Full: return "correction";
    case FeedbackType::Weak: return "marking";
    default: return "skip";
  }
}

}  // namespace

SessionSpec SessionSpec::from_json(const json& j) {
  check_keys(j, {"client_token", "mode", "learner_checkpoint", "regulator_checkpoint", "stream_source",
                 "stream_target", "dev_source", "dev_target", "pregen", "policy", "train_regulator", "action_set",
                 "epsilon", "gamma", "pregen_beam", "batch_size", "alpha", "max_epochs", "budget", "eval_every",
                 "seed", "val_decode", "max_decode_len", "p_att", "optimizer", "learning_rate", "log_wall_time"});
  SessionSpec s;
  s.client_token = get_string(j, "client_token", "");
  s.mode = get_string(j, "mode", s.mode);
  if (s.mode != "human" && s.mode != "simulated") throw bad_field("mode", "expected 'human' or 'simulated'");
  auto required_path = [&](const char* name) {
    auto v = get_string(j, name, "");
    if (v.empty()) throw bad_field(name, "required");
    return std::filesystem::path(v);
  };
  s.learner_checkpoint = required_path("learner_checkpoint");
  s.stream_source = required_path("stream_source");
  s.stream_target = required_path("stream_target");
  s.dev_source = required_path("dev_source");
  s.dev_target = required_path("dev_target");
  s.pregen = get_string(j, "pregen", "");
  s.policy = get_string(j, "policy", s.policy);
  static const std::set<std::string> policies = {"regulator", "full", "weak", "self", "none", "epsilon-greedy",
                                                 "uncertainty"};
  if (!policies.count(s.policy)) throw bad_field("policy", "unknown policy '" + s.policy + "'");
  if (s.policy == "regulator") s.regulator_checkpoint = required_path("regulator_checkpoint");
  else if (j.contains("regulator_checkpoint"))
    throw bad_field("regulator_checkpoint", "only valid with policy 'regulator'");
  s.train_regulator = get_bool(j, "train_regulator", s.train_regulator);
  s.action_set = get_string(j, "action_set", s.action_set);
  s.epsilon = get_double(j, "epsilon", s.epsilon);
  s.gamma = get_double(j, "gamma", s.gamma);
  s.pregen_beam = static_cast<int>(get_int(j, "pregen_beam", s.pregen_beam));
  if (s.pregen_beam < 1) throw bad_field("pregen_beam", "must be >= 1");
  try {
    ActionSet::parse(s.action_set).validate();
  } catch (const Error& e) {
    throw bad_field("action_set", e.what());
  }
  if (s.epsilon < 0.0 || s.epsilon > 1.0) throw bad_field("epsilon", "must be in [0, 1]");
  if (s.gamma < 0.0 || s.gamma > 1.0) throw bad_field("gamma", "must be in [0, 1]");

  auto& t = s.train;
  t.batch_size = static_cast<int>(get_int(j, "batch_size", t.batch_size));
  t.alpha = get_double(j, "alpha", t.alpha);
  t.max_epochs = static_cast<int>(get_int(j, "max_epochs", t.max_epochs));
  t.budget = get_double(j, "budget", t.budget);
  t.eval_every = static_cast<int>(get_int(j, "eval_every", t.eval_every));
  t.seed = static_cast<std::uint64_t>(get_int(j, "seed", static_cast<std::int64_t>(t.seed)));
  t.max_decode_len = static_cast<int>(get_int(j, "max_decode_len", t.max_decode_len));
  t.p_att = get_double(j, "p_att", t.p_att);
  t.optimizer.learning_rate = get_double(j, "learning_rate", t.optimizer.learning_rate);
  t.log_wall_time = get_bool(j, "log_wall_time", t.log_wall_time);
  try {
    t.val_mode = DecodeMode::parse(get_string(j, "val_decode", t.val_mode.to_string()));
  } catch (const Error& e) {
    throw bad_field("val_decode", e.what());
  }
  try {
    t.optimizer.kind = parse_optimizer(get_string(j, "optimizer", std::string(to_string(t.optimizer.kind))));
  } catch (const Error& e) {
    throw bad_field("optimizer", e.what());
  }
  try {
    t.validate();
  } catch (const Error& e) {
    throw ServiceError(400, e.what());
  }
  return s;
}

json SessionSpec::to_json() const {
  json j = {{"mode", mode},
            {"learner_checkpoint", learner_checkpoint.string()},
            {"stream_source", stream_source.string()},
            {"stream_target", stream_target.string()},
            {"dev_source", dev_source.string()},
            {"dev_target", dev_target.string()},
            {"policy", policy},
            {"train_regulator", train_regulator},
            {"action_set", action_set},
            {"epsilon", epsilon},
            {"gamma", gamma},
            {"pregen_beam", pregen_beam},
            {"batch_size", train.batch_size},
            {"alpha", train.alpha},
            {"max_epochs", train.max_epochs},
            {"budget", train.budget},
            {"eval_every", train.eval_every},
            {"seed", static_cast<std::int64_t>(train.seed)},
            {"val_decode", train.val_mode.to_string()},
            {"max_decode_len", train.max_decode_len},
            {"p_att", train.p_att},
            {"optimizer", to_string(train.optimizer.kind)},
            {"learning_rate", train.optimizer.learning_rate},
            {"log_wall_time", train.log_wall_time}};
  if (!client_token.empty()) j["client_token"] = client_token;
  if (!regulator_checkpoint.empty()) j["regulator_checkpoint"] = regulator_checkpoint.string();
  if (!pregen.empty()) j["pregen"] = pregen.string();
  return j;
}

Submission Submission::from_json(const json& j) {
  check_keys(j, {"session_id", "item_id", "kind", "marking", "corrected_text", "client_edit_count"});
  Submission s;
  if (!j.contains("item_id")) throw bad_field("item_id", "required");
  s.item_id = get_int(j, "item_id", 0);
  s.kind = get_string(j, "kind", "");
  if (s.kind != "marking" && s.kind != "correction" && s.kind != "skip")
    throw bad_field("kind", "expected 'marking', 'correction' or 'skip'");
  if (s.kind == "marking") {
    if (!j.contains("marking") || !j.at("marking").is_array()) throw bad_field("marking", "required for kind 'marking'");
    for (const auto& v : j.at("marking")) {
      if (!v.is_boolean()) throw bad_field("marking", "expected booleans");
      s.marking.push_back(v.get<bool>());
    }
  } else if (j.contains("marking")) {
    throw bad_field("marking", "only valid for kind 'marking'");
  }
  if (s.kind == "correction") {
    if (!j.contains("corrected_text")) throw bad_field("corrected_text", "required for kind 'correction'");
    s.corrected_text = get_string(j, "corrected_text", "");
  } else if (j.contains("corrected_text")) {
    throw bad_field("corrected_text", "only valid for kind 'correction'");
  }
  if (j.contains("client_edit_count")) s.client_edit_count = get_int(j, "client_edit_count", 0);
  return s;
}

json Submission::to_json() const {
  json j = {{"item_id", item_id}, {"kind", kind}};
  if (kind == "marking") j["marking"] = marking;
  if (kind == "correction") j["corrected_text"] = corrected_text;
  if (client_edit_count) j["client_edit_count"] = *client_edit_count;
  return j;
}

Session::~Session() = default;

std::unique_ptr<Session> Session::create(const std::string& id, const SessionSpec& spec) {
  std::unique_ptr<Session> s(new Session());
  s->id_ = id;
  s->spec_ = spec;
  try {
    s->learner_ = LearnerCheckpoint::load(spec.learner_checkpoint);
    const auto scheme = s->learner_.scheme;
    auto stream = load_parallel(spec.stream_source, spec.stream_target);
    auto dev = load_parallel(spec.dev_source, spec.dev_target);
    s->stream_ = make_examples(stream.pairs, scheme, s->learner_.src_vocab, s->learner_.trg_vocab);
    s->dev_ = make_examples(dev.pairs, scheme, s->learner_.src_vocab, s->learner_.trg_vocab);
    s->pregen_ = spec.pregen.empty()
                     ? pregenerate_targets(s->learner_.params, s->stream_, s->learner_.trg_vocab, scheme,
                                           spec.pregen_beam, spec.train.max_decode_len)
                     : load_pregen(spec.pregen);
    s->policy_ = make_policy(spec, s->learner_.params);
    auto train = spec.train;
    train.scheme = scheme;
    s->run_ = std::make_unique<InteractiveRun>(s->learner_.params, *s->policy_, s->stream_, s->pregen_, s->dev_,
                                               train, json{{"mode", "session"}, {"session_id", id}});
  } catch (const ServiceError&) {
    throw;
  } catch (const Error& e) {
    throw ServiceError(400, e.what());
  }
  s->append_event({{"event", "created"}, {"session_id", id}, {"spec", spec.to_json()}});
  s->refresh_snapshot();
  return s;
}

json Session::item_json(const InteractiveRun::Item& item) const {
  const auto& hyp = *item.hypothesis;
  const auto scheme = learner_.scheme;
  std::vector<std::string> actions;
  for (auto t : policy_->action_space()) actions.emplace_back(to_string(t));
  json j = {{"item_id", item.position},
            {"example_id", item.example->id},
            {"source", item.example->source.surface},
            {"source_tokens", split_tokens(item.example->source.surface, scheme)},
            {"hypothesis", hyp.surface},
            {"hypothesis_tokens", vocab_tokens(hyp.ids, learner_.trg_vocab)},
            {"requested", to_string(item.decision.action)},
            {"expected_kind", kind_for(item.decision.action)},
            {"distribution", item.decision.distribution},
            {"action_set", actions}};
  if (spec_.mode == "simulated") {
    j["reference"] = item.example->reference.surface;
    j["reference_tokens"] = split_tokens(item.example->reference.surface, scheme);
  }
  return j;
}

json Session::next() {
  std::lock_guard lock(work_);
  if (const auto& p = run_->pending())
    throw ServiceError(409, "item " + std::to_string(p->position) + " is pending; submit feedback first");
  auto item = run_->next();
  if (!item) return {{"end_of_stream", true}};
  append_event({{"event", "next"},
                {"item_id", item->position},
                {"requested", to_string(item->decision.action)},
                {"distribution", item->decision.distribution}});
  refresh_snapshot();
  return item_json(*item);
}

json Session::submit(const json& body) {
  std::lock_guard lock(work_);
  auto sub = Submission::from_json(body);
  if (body.contains("session_id") && body.at("session_id") != id_)
    throw bad_field("session_id", "does not match the session in the URL");
  const auto& pending = run_->pending();
  if (!pending) throw ServiceError(409, "no pending item; call next first");
  if (sub.item_id < 0 || static_cast<std::size_t>(sub.item_id) != pending->position)
    throw ServiceError(400, "unknown item " + std::to_string(sub.item_id) + "; pending item is " +
                                std::to_string(pending->position),
                       "item_id");
  const auto requested = pending->decision.action;
  if (sub.kind != kind_for(requested))
    throw ServiceError(400, "kind '" + sub.kind + "' does not match the requested feedback '" +
                                std::string(to_string(requested)) + "' (expected '" + kind_for(requested) + "')",
                       "kind");
  const auto& hyp = *pending->hypothesis;
  FeedbackResponse resp;
  if (sub.kind == "marking") {
    if (sub.marking.size() != hyp.ids.size())
      throw ServiceError(400, "marking has " + std::to_string(sub.marking.size()) + " entries but the hypothesis has " +
                                  std::to_string(hyp.ids.size()) + " tokens",
                         "marking");
    resp = weak_response(hyp, sub.marking);
  } else if (sub.kind == "correction") {
    // Deleting everything is a legitimate correction.
    Sequence target{{}, "", learner_.scheme};
    if (!split_tokens(sub.corrected_text, learner_.scheme).empty())
      target = tokenize(sub.corrected_text, learner_.scheme, learner_.trg_vocab);
    resp = full_response(target, char_edit_cost(hyp.surface, sub.corrected_text));
  } else {
    resp = zero_cost_response(requested, hyp, spec_.train.p_att);
  }
  std::optional<RunRecord> record;
  try {
    record = run_->submit(resp);
  } catch (const Error& e) {
    throw ServiceError(400, e.what());
  }
  json ev = {{"event", "feedback"}, {"submission", sub.to_json()}, {"cost", resp.cost}};
  if (record) ev["record"] = record->j;
  append_event(std::move(ev));
  refresh_snapshot();

  json out = {{"accepted", true}, {"cost", resp.cost}, {"cumulative_cost", run_->ledger().total}};
  if (record) {
    out["val_bleu"] = record->val_bleu;
    out["record"] = record->to_json();
  }
  return out;
}

void Session::append_event(json event) {
  std::lock_guard lock(snap_);
  event["seq"] = events_.size();
  events_.push_back(event.dump());
}

void Session::refresh_snapshot() {
  json records = json::array();
  for (const auto& r : run_->log().records) records.push_back(r.to_json());
  const auto& p = run_->pending();
  auto snap = std::make_shared<const json>(json{{"session_id", id_},
                                                {"meta", run_->log().meta},
                                                {"records", records},
                                                {"ledger", ledger_json(run_->ledger())},
                                                {"cursor", run_->cursor()},
                                                {"total_items", run_->total_items()},
                                                {"pending_item", p ? json(p->position) : json(nullptr)},
                                                {"finished", run_->finished()},
                                                {"current_val_bleu", run_->current_val()}});
  std::lock_guard lock(snap_);
  snapshot_ = std::move(snap);
}

json Session::metrics() const {
  std::shared_ptr<const json> snap;
  {
    std::lock_guard lock(snap_);
    snap = snapshot_;
  }
  return *snap;
}

std::string Session::export_events() const {
  std::lock_guard lock(snap_);
  std::string out;
  for (const auto& e : events_) out += e + "\n";
  return out;
}

json Session::fingerprint() const {
  auto& self = const_cast<Session&>(*this);
  std::lock_guard lock(self.work_);
  Archive a;
  a.add_params("theta.", run_->params());
  a.add_params("best.", run_->best_params());
  json fp = {{"cursor", run_->cursor()},
             {"pending_item", run_->pending() ? json(run_->pending()->position) : json(nullptr)},
             {"ledger", ledger_json(run_->ledger())},
             {"log", content_hash(run_->log().to_jsonl())},
             {"learner", content_hash(a.to_bytes())},
             {"policy_state", policy_->save_state()}};
  if (auto* reg = dynamic_cast<const RegulatorPolicy*>(policy_.get())) {
    Archive r;
    r.add_params("phi.", reg->params());
    fp["regulator"] = content_hash(r.to_bytes());
  }
  return fp;
}

std::unique_ptr<Session> Session::replay(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line;
  std::unique_ptr<Session> s;
  std::size_t seq = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json ev;
    try {
      ev = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("event log line " + std::to_string(seq + 1) + ": " + e.what());
    }
    if (ev.value("seq", std::size_t{0}) != seq) throw Error("event log out of sequence at " + std::to_string(seq));
    const auto kind = ev.value("event", std::string());
    if (seq == 0) {
      if (kind != "created") throw Error("event log must start with a 'created' event");
      s = create(ev.at("session_id").get<std::string>(), SessionSpec::from_json(ev.at("spec")));
    } else if (kind == "next") {
      auto item = s->next();
      if (item.value("item_id", std::int64_t{-1}) != ev.at("item_id").get<std::int64_t>() ||
          item.value("requested", std::string()) != ev.at("requested").get<std::string>())
        throw Error("replay diverged at event " + std::to_string(seq));
    } else if (kind == "feedback") {
      auto out = s->submit(ev.at("submission"));
      if (out.at("cost").get<double>() != ev.at("cost").get<double>())
        throw Error("replay cost diverged at event " + std::to_string(seq));
    } else {
      throw Error("unknown event '" + kind + "'");
    }
    ++seq;
  }
  if (!s) throw Error("empty event log");
  return s;
}

json SessionManager::create(const json& body) {
  std::lock_guard create_lock(create_mu_);
  auto spec = SessionSpec::from_json(body);
  if (!spec.client_token.empty()) {
    std::shared_lock lock(mu_);
    if (auto it = tokens_.find(spec.client_token); it != tokens_.end()) {
      if (it->second.second != body)
        throw ServiceError(409, "client token '" + spec.client_token + "' was used for a different request",
                           "client_token");
      return {{"session_id", it->second.first}, {"created", false}};
    }
  }
  const std::string id = "s" + std::to_string(counter_ + 1);
  std::shared_ptr<Session> session = Session::create(id, spec);
  std::unique_lock lock(mu_);
  ++counter_;
  sessions_[id] = session;
  if (!spec.client_token.empty()) tokens_[spec.client_token] = {id, body};
  return {{"session_id", id}, {"created", true}};
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
  return it->second;
}

std::size_t SessionManager::size() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

json simulated_submission(const json& item) {
  if (!item.contains("reference_tokens")) throw Error("item carries no reference; the session is not simulated");
  const auto requested = parse_feedback_type(item.at("requested").get<std::string>());
  json sub = {{"item_id", item.at("item_id")}};
  if (requested == FeedbackType::Full) {
    sub["kind"] = "correction";
    sub["corrected_text"] = item.at("reference");
  } else if (requested == FeedbackType::Weak) {
    auto hyp = item.at("hypothesis_tokens").get<std::vector<std::string>>();
    auto ref = item.at("reference_tokens").get<std::vector<std::string>>();
    sub["kind"] = "marking";
    sub["marking"] = mark_correct(hyp, ref).marked;
  } else {
    sub["kind"] = "skip";
  }
  return sub;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    json body = {{"error", e.what()}};
    if (!e.field().empty()) body["field"] = e.field();
    reply(res, e.status(), body);
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const Error& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

HttpServer::HttpServer(SessionManager& sessions) : sessions_(sessions), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto out = sessions_.create(json::parse(req.body));
      reply(res, out.at("created").get<bool>() ? 201 : 200, out);
    });
  });
  s.Get(R"(/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, sessions_.get(req.matches[1])->next()); });
  });
  s.Post(R"(/sessions/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto session = sessions_.get(req.matches[1]);
      reply(res, 200, session->submit(json::parse(req.body)));
    });
  });
  s.Get(R"(/sessions/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, sessions_.get(req.matches[1])->metrics()); });
  });
  s.Get(R"(/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      res.status = 200;
      res.set_content(sessions_.get(req.matches[1])->export_events(), "application/x-ndjson; charset=utf-8");
    });
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p <= 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

}  // namespace selfreg
