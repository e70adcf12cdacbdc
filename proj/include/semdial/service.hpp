#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "semdial/decode.hpp"

namespace semdial {

// The service was started without a checkpoint.
class NoCheckpointError : public StateError {
 public:
  using StateError::StateError;
};

// One conversation. Human utterances carry the understood variables (when
// understanding is on), Machine utterances the plan used, and every Machine
// utterance has the trace at the same turn index in `traces`.
struct SessionState {
  std::string session_id;
  std::string context;
  DecodingPolicy policy;
  std::uint64_t seed = 0;
  std::vector<Utterance> history;
  std::vector<GenerationTrace> traces;
  // Understanding and planning of the last Human utterance, awaiting
  // generation.
  std::optional<PendingTurn> pending;
};

nlohmann::ordered_json session_to_json(const SessionState& s);

struct CreateSessionRequest {
  std::optional<DecodingPolicy> policy;
  std::string context;
  std::optional<std::uint64_t> seed;
};

struct ProposedTurn {
  std::optional<SemanticAnnotation> understood;
  std::optional<SemanticAnnotation> proposed_plan;
  StageTrace understanding_span;
  StageTrace planning_span;
};

nlohmann::ordered_json proposed_turn_to_json(const ProposedTurn& p);

// Session store over one read-only model. Operations on one session are
// serialized; different sessions proceed in parallel.
class ServiceCore {
 public:
  // `model` may be null: every session operation then throws
  // NoCheckpointError.
  ServiceCore(std::shared_ptr<const LanguageModel> model, Vocabulary vocab, LinearizationScheme scheme,
              DecodingPolicy default_policy = {});

  const DecodingPolicy& default_policy() const { return default_policy_; }
  bool has_checkpoint() const { return model_ != nullptr; }

  std::string create_session(const CreateSessionRequest& request = {});

  // Appends the Human utterance and runs understanding and planning without
  // generating. StateError while a previous message awaits generation;
  // ValidationError on blank text.
  ProposedTurn post_message(const std::string& session_id, const std::string& text);

  // Generates the Machine turn for the pending message, with `plan_override`
  // in place of the proposed plan when given. Without a seed the session
  // seed and the turn index determine one. StateError without a pending
  // message.
  GenerationTrace generate(const std::string& session_id, const std::optional<SemanticAnnotation>& plan_override,
                           std::optional<std::uint64_t> seed);

  // post_message followed by generate with the proposed plan.
  GenerationTrace chat(const std::string& session_id, const std::string& text, std::optional<std::uint64_t> seed);

  SessionState get_session(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

  // All sessions as one JSON document. Pending turns are not stored; restore
  // recomputes them, which is exact because those stages are greedy.
  void snapshot(const std::filesystem::path& path) const;
  void restore(const std::filesystem::path& path);

 private:
  struct Entry {
    mutable std::mutex mutex;
    SessionState state;
  };

  std::shared_ptr<Entry> find(const std::string& session_id) const;
  void require_model() const;
  Responder responder() const { return Responder{*model_, vocab_, scheme_}; }
  PendingTurn prepare(const SessionState& s) const;

  std::shared_ptr<const LanguageModel> model_;
  Vocabulary vocab_;
  LinearizationScheme scheme_;
  DecodingPolicy default_policy_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
};

// HTTP front end. JSON bodies; errors are {"error": {"code", "message"}}
// with codes invalid_request (400), not_found (404), state_error (409), and
// no_checkpoint (503). CORS headers allow `cors_origin`.
//   POST /sessions                 {policy?, context?, seed?} -> 201 {session_id, policy}
//   POST /sessions/{id}/message    {text} -> {understood, proposed_plan, ...spans}
//   POST /sessions/{id}/generate   {plan_override?, seed?} -> trace
//   POST /sessions/{id}/chat       {text, seed?} -> trace
//   GET  /sessions/{id}            -> session view
//   GET  /policy                   -> default decoding policy
class HttpService {
 public:
  explicit HttpService(ServiceCore& core, std::string cors_origin = "*");
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port; throws IoError when binding fails.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace semdial
