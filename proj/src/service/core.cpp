#include <fstream>

#include "semdial/errors.hpp"
#include "semdial/service.hpp"
#include "semdial/text.hpp"

namespace semdial {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::uint64_t turn_seed(std::uint64_t session_seed, std::uint64_t turn) {
  std::uint64_t z = session_seed + 0x9e3779b97f4a7c15ULL * (turn + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ordered_json optional_annotation(const std::optional<SemanticAnnotation>& a) {
  return a ? ordered_json(annotation_to_json(*a)) : ordered_json();
}

DialogueState dialogue_state(const SessionState& s) { return DialogueState{s.context, s.history}; }

}  // namespace

ordered_json proposed_turn_to_json(const ProposedTurn& p) {
  ordered_json j;
  j["understood"] = optional_annotation(p.understood);
  j["proposed_plan"] = optional_annotation(p.proposed_plan);
  ordered_json spans;
  spans["understanding"] = stage_trace_to_json(p.understanding_span);
  spans["planning"] = stage_trace_to_json(p.planning_span);
  j["spans"] = spans;
  return j;
}

ordered_json session_to_json(const SessionState& s) {
  ordered_json j;
  j["session_id"] = s.session_id;
  j["context"] = s.context;
  j["seed"] = s.seed;
  j["policy"] = policy_to_json(s.policy);
  j["history"] = ordered_json::array();
  for (const auto& u : s.history) {
    ordered_json e;
    e["speaker"] = to_string(u.speaker);
    e["text"] = u.text;
    e["annotation"] = optional_annotation(u.annotation);
    j["history"].push_back(std::move(e));
  }
  j["traces"] = ordered_json::array();
  for (const auto& t : s.traces) j["traces"].push_back(trace_to_json(t));
  if (s.pending) {
    ProposedTurn p;
    if (s.pending->understood) {
      p.understood = s.pending->understood->annotation;
      p.understanding_span = s.pending->understood->trace;
    }
    if (s.pending->proposed) {
      p.proposed_plan = s.pending->proposed->annotation;
      p.planning_span = s.pending->proposed->trace;
    }
    j["pending"] = proposed_turn_to_json(p);
  } else {
    j["pending"] = nullptr;
  }
  return j;
}

ServiceCore::ServiceCore(std::shared_ptr<const LanguageModel> model, Vocabulary vocab, LinearizationScheme scheme,
                         DecodingPolicy default_policy)
    : model_(std::move(model)),
      vocab_(std::move(vocab)),
      scheme_(std::move(scheme)),
      default_policy_(std::move(default_policy)) {
  scheme_.validate();
  default_policy_.validate();
  if (model_ && model_->vocab_size() != vocab_.size()) {
    throw ValidationError("model vocabulary size " + std::to_string(model_->vocab_size()) +
                          " differs from the tokenizer's " + std::to_string(vocab_.size()));
  }
}

void ServiceCore::require_model() const {
  if (!model_) throw NoCheckpointError("no checkpoint is loaded");
}

std::shared_ptr<ServiceCore::Entry> ServiceCore::find(const std::string& session_id) const {
  require_model();
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("no session '" + session_id + "'");
  return it->second;
}

PendingTurn ServiceCore::prepare(const SessionState& s) const {
  return prepare_turn(responder(), dialogue_state(s), s.policy);
}

std::string ServiceCore::create_session(const CreateSessionRequest& request) {
  require_model();
  auto entry = std::make_shared<Entry>();
  auto& s = entry->state;
  s.policy = request.policy.value_or(default_policy_);
  s.policy.validate();
  s.context = request.context;
  std::lock_guard lock(sessions_mutex_);
  const std::uint64_t n = next_id_++;
  s.session_id = "s" + std::to_string(n);
  s.seed = request.seed.value_or(turn_seed(0, n));
  sessions_.emplace(s.session_id, entry);
  return s.session_id;
}

ProposedTurn ServiceCore::post_message(const std::string& session_id, const std::string& text) {
  const auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  auto& s = entry->state;
  if (text::segment(text).empty()) throw ValidationError("message text is empty");
  if (s.pending) throw StateError("session '" + session_id + "' is waiting for a generate call");

  Utterance u;
  u.speaker = Speaker::kHuman;
  u.text = text;
  s.history.push_back(std::move(u));
  try {
    s.pending = prepare(s);
  } catch (...) {
    s.history.pop_back();
    throw;
  }
  ProposedTurn out;
  if (s.pending->understood) {
    out.understood = s.pending->understood->annotation;
    out.understanding_span = s.pending->understood->trace;
    s.history.back().annotation = out.understood;
  }
  if (s.pending->proposed) {
    out.proposed_plan = s.pending->proposed->annotation;
    out.planning_span = s.pending->proposed->trace;
  }
  return out;
}

GenerationTrace ServiceCore::generate(const std::string& session_id,
                                      const std::optional<SemanticAnnotation>& plan_override,
                                      std::optional<std::uint64_t> seed) {
  const auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  auto& s = entry->state;
  if (!s.pending) throw StateError("session '" + session_id + "' has no pending message");
  const std::uint64_t used_seed = seed.value_or(turn_seed(s.seed, s.traces.size()));
  auto trace = complete_turn(responder(), dialogue_state(s), s.policy, *s.pending, plan_override, used_seed);

  Utterance u;
  u.speaker = Speaker::kMachine;
  u.text = trace.response;
  u.annotation = trace.planned;
  s.history.push_back(std::move(u));
  s.traces.push_back(trace);
  s.pending.reset();
  return trace;
}

GenerationTrace ServiceCore::chat(const std::string& session_id, const std::string& text,
                                  std::optional<std::uint64_t> seed) {
  post_message(session_id, text);
  return generate(session_id, std::nullopt, seed);
}

SessionState ServiceCore::get_session(const std::string& session_id) const {
  const auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  return entry->state;
}

std::vector<std::string> ServiceCore::session_ids() const {
  std::lock_guard lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

void ServiceCore::snapshot(const std::filesystem::path& path) const {
  ordered_json doc;
  doc["format"] = "semdial-sessions";
  doc["version"] = 1;
  {
    std::lock_guard lock(sessions_mutex_);
    doc["next_id"] = next_id_;
  }
  doc["sessions"] = ordered_json::array();
  for (const auto& id : session_ids()) {
    auto j = session_to_json(get_session(id));
    j.erase("pending");
    doc["sessions"].push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write session snapshot " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void ServiceCore::restore(const std::filesystem::path& path) {
  require_model();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open session snapshot " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 1);
  }
  std::map<std::string, std::shared_ptr<Entry>> restored;
  std::uint64_t next_id = 1;
  try {
    if (doc.at("format") != "semdial-sessions" || doc.at("version") != 1) {
      throw ValidationError(path.string() + " is not a version 1 session snapshot");
    }
    next_id = doc.at("next_id").get<std::uint64_t>();
    for (const auto& j : doc.at("sessions")) {
      auto entry = std::make_shared<Entry>();
      auto& s = entry->state;
      s.session_id = j.at("session_id").get<std::string>();
      s.context = j.at("context").get<std::string>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.policy = policy_from_json(j.at("policy"));
      for (const auto& e : j.at("history")) {
        Utterance u;
        const auto speaker = parse_speaker(e.at("speaker").get<std::string>());
        if (!speaker) throw ValidationError("bad speaker in session " + s.session_id);
        u.speaker = *speaker;
        u.text = e.at("text").get<std::string>();
        if (!e.at("annotation").is_null()) u.annotation = annotation_from_json(e["annotation"]);
        s.history.push_back(std::move(u));
      }
      for (const auto& t : j.at("traces")) s.traces.push_back(trace_from_json(t));
      if (!s.history.empty() && s.history.back().speaker == Speaker::kHuman) s.pending = prepare(s);
      restored.emplace(s.session_id, std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed snapshot: " + e.what());
  }
  std::lock_guard lock(sessions_mutex_);
  sessions_ = std::move(restored);
  next_id_ = next_id;
}

}  // namespace semdial
