#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semdial/linearize.hpp"
#include "semdial/model.hpp"

namespace semdial {

enum class SamplingMethod { kGreedy, kTopKTopP };

// Inclusive bounds on the number of emitted tokens.
struct LengthBounds {
  std::size_t min_len = 0;
  std::size_t max_len = 0;
  bool operator==(const LengthBounds&) const = default;
};

struct RepetitionConstraint {
  bool enabled = false;
  std::size_t n = 2;
  bool operator==(const RepetitionConstraint&) const = default;
};

struct StagePolicy {
  SamplingMethod sampling = SamplingMethod::kGreedy;
  std::size_t top_k = 50;
  double top_p = 0.9;
  double temperature = 0.7;
  // Value-token bounds per variable key, indexed by VariableKey. A value
  // token is any token between the key and <eokv>, separators included.
  std::array<LengthBounds, 3> key_bounds = {};
  // Response token bounds; [SEP] excluded.
  LengthBounds length;
  RepetitionConstraint repetition;

  LengthBounds& bounds(VariableKey k) { return key_bounds[static_cast<std::size_t>(k)]; }
  const LengthBounds& bounds(VariableKey k) const { return key_bounds[static_cast<std::size_t>(k)]; }

  // Throws ValidationError unless 0 < top_p <= 1, temperature > 0, top_k > 0,
  // repetition n > 0, and min_len <= max_len everywhere.
  void validate() const;
  bool operator==(const StagePolicy&) const = default;
};

struct DecodingPolicy {
  StagePolicy understanding;
  StagePolicy planning;
  StagePolicy response;
  bool use_understanding = true;
  bool use_planning = true;

  // understanding: greedy, topical/emotion/DA max 20/10/10, no minimum.
  // planning: greedy, topical 5..20, emotion 0..10, DA 0..10, repetition
  // constraint with n = 2. response: top-k 50, top-p 0.9, temperature 0.7,
  // 9..32 tokens.
  DecodingPolicy();

  void validate() const;
  bool operator==(const DecodingPolicy&) const = default;
};

nlohmann::ordered_json policy_to_json(const DecodingPolicy& p);
// Fields absent from `j` keep their defaults. Unknown fields and invalid
// values throw ValidationError.
DecodingPolicy policy_from_json(const nlohmann::json& j);
DecodingPolicy load_policy(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Step-level primitives

// GREEDY: argmax, ties to the lowest id. TOPK_TOPP: p^(1/temperature),
// renormalize, keep the intersection of the k most probable tokens and the
// smallest most-probable prefix reaching mass top_p (ties by lowest id),
// renormalize, sample. The distribution must have positive mass.
TokenId sample_token(std::span<const double> distribution, const StagePolicy& policy, std::mt19937_64& rng);

// Zeroes every content token t such that the current phrase's last n-1
// tokens followed by t form an n-gram already in `span`, then renormalizes.
// Phrases are the <list_sep>-separated items of `span` (the topical values
// emitted so far), each preceded by a phrase-start boundary. <list_sep> and
// <eokv> are never suppressed. Returns all zeros when nothing survives.
std::vector<double> apply_repetition_constraint(std::span<const TokenId> span, std::span<const double> distribution,
                                                std::size_t n);

// True when `span` (topical values) holds an n-gram twice, counting the
// phrase-start boundary as a token.
bool has_repeated_ngram(std::span<const TokenId> span, std::size_t n);

// Number of repeated n-gram occurrences inside the span's phrases.
std::size_t count_repeated_ngrams(std::span<const TokenId> span, std::size_t n);

// Candidate distribution for the next value token after the key and
// `values`, with structural rules, the repetition constraint, and length
// forcing applied, renormalized.
std::vector<double> constrain_value_step(std::span<const double> distribution, std::span<const TokenId> values,
                                         VariableKey key, const StagePolicy& policy);

// Candidate distribution for the next response token after `emitted`
// content tokens.
std::vector<double> constrain_response_step(std::span<const double> distribution, std::size_t emitted,
                                            const StagePolicy& policy);

// ---------------------------------------------------------------------------
// Stage-level decoding over a growing prefix

// A token sequence mirrored by an incremental model cursor.
class Prefix {
 public:
  Prefix(const LanguageModel& model, const TokenSpan& initial);

  void append(TokenId id, TokenType type);
  std::vector<double> distribution() { return cursor_->next_token_distribution(); }
  const TokenSpan& tokens() const { return tokens_; }
  const LanguageModel& model() const { return *model_; }

 private:
  const LanguageModel* model_;
  std::unique_ptr<ModelCursor> cursor_;
  TokenSpan tokens_;
};

// Requires the prefix to end with the key token. Appends the value tokens
// and <eokv>; returns the value tokens.
std::vector<TokenId> decode_value_span(Prefix& prefix, VariableKey key, TokenType type, const StagePolicy& policy,
                                       std::mt19937_64& rng);

struct StageTrace {
  std::vector<TokenId> tokens;  // raw span as appended to the prefix
  std::string text;             // rendered tokens
  std::optional<std::string> parse_error;
  bool operator==(const StageTrace&) const = default;
};

nlohmann::ordered_json stage_trace_to_json(const StageTrace& t);
StageTrace stage_trace_from_json(const nlohmann::json& j);

struct StageResult {
  SemanticAnnotation annotation;
  StageTrace trace;
};

// Human's variables for the last Human utterance; the prefix must end with
// its [SEP]. On a parse failure the annotation is empty and the error is
// recorded.
StageResult understand(Prefix& prefix, const DecodingPolicy& policy, const LinearizationScheme& scheme,
                       const Vocabulary& vocab);

// Machine's variables for the next utterance.
StageResult plan(Prefix& prefix, const DecodingPolicy& policy, const LinearizationScheme& scheme,
                 const Vocabulary& vocab);

// Appends a linearized plan in place of planning.
StageResult apply_override(Prefix& prefix, const SemanticAnnotation& plan, const LinearizationScheme& scheme,
                           const Vocabulary& vocab);

// Appends <machine>, samples until [SEP]; returns the detokenized response.
std::string generate_response(Prefix& prefix, const DecodingPolicy& policy, const Vocabulary& vocab,
                              std::mt19937_64& rng, StageTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Whole turns

// History of one conversation; annotations on Human utterances are the
// understood (or gold) variables, on Machine utterances the plans used.
struct DialogueState {
  std::string context;
  std::vector<Utterance> utterances;
};

struct GenerationTrace {
  std::optional<SemanticAnnotation> understood;  // absent when understanding is off
  std::optional<SemanticAnnotation> planned;     // absent when planning is off
  bool plan_overridden = false;
  std::string response;
  StageTrace understanding_span;
  StageTrace planning_span;
  StageTrace response_span;
  std::uint64_t seed = 0;
  bool operator==(const GenerationTrace&) const = default;
};

nlohmann::ordered_json trace_to_json(const GenerationTrace& t);
GenerationTrace trace_from_json(const nlohmann::json& j);

// Tokens a full decoded turn may need beyond the history: every enabled
// variable span at its maximum, <machine>, the longest response, and [SEP].
// `override_tokens` is the length of a linearized plan override, if any.
std::size_t generation_reserve(const DecodingPolicy& policy, std::size_t override_tokens = 0);

// The scheme actually used at inference: stages switched off in the policy
// are dropped from the history too.
LinearizationScheme effective_scheme(const LinearizationScheme& scheme, const DecodingPolicy& policy);

// The linearization of `state` with the last Human utterance closed by
// [SEP], truncated to leave `reserve` positions free. Throws ValidationError
// unless the last utterance is Human's, or when the last turn cannot fit.
TokenSpan inference_prefix(const DialogueState& state, const LanguageModel& model, const Vocabulary& vocab,
                           const LinearizationScheme& scheme, std::size_t reserve);

struct Responder {
  const LanguageModel& model;
  const Vocabulary& vocab;
  LinearizationScheme scheme;
};

// The greedy stages of a turn, run before any human intervention.
struct PendingTurn {
  std::optional<StageResult> understood;
  std::optional<StageResult> proposed;
};

PendingTurn prepare_turn(const Responder& r, const DialogueState& state, const DecodingPolicy& policy);

// Replays the recorded stages of `pending` (with `plan_override` in place of
// the proposed plan when given) and generates the response.
GenerationTrace complete_turn(const Responder& r, const DialogueState& state, const DecodingPolicy& policy,
                              const PendingTurn& pending, const std::optional<SemanticAnnotation>& plan_override,
                              std::uint64_t seed);

// understand -> plan (or the override) -> generate over one growing prefix.
// The sampling generator is seeded with `seed`. Throws ValidationError when
// an override is given while planning is switched off.
GenerationTrace respond(const Responder& r, const DialogueState& state, const DecodingPolicy& policy,
                        const std::optional<SemanticAnnotation>& plan_override, std::uint64_t seed);

}  // namespace semdial
