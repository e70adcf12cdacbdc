#include "semdial/decode.hpp"
#include "semdial/errors.hpp"

namespace semdial {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr TokenId kEokv = id_of(SpecialToken::kEokv);
constexpr TokenId kSep = id_of(SpecialToken::kSep);

StageTrace make_trace(std::vector<TokenId> tokens, const Vocabulary& vocab) {
  StageTrace t;
  t.text = vocab.render(tokens);
  t.tokens = std::move(tokens);
  return t;
}

StageResult decode_variables(Prefix& prefix, const StagePolicy& stage, const LinearizationScheme& scheme,
                             const Vocabulary& vocab, TokenType type) {
  // Sampled variable stages draw from a fixed stream, so a turn prepared
  // before its response seed is known replays identically.
  std::mt19937_64 stage_rng(0);
  std::vector<TokenId> raw;
  for (auto key : scheme.variable_order) {
    const TokenId key_id = id_of(key_token(key));
    prefix.append(key_id, type);
    raw.push_back(key_id);
    for (auto id : decode_value_span(prefix, key, type, stage, stage_rng)) raw.push_back(id);
    raw.push_back(kEokv);
  }
  StageResult out;
  out.trace = make_trace(std::move(raw), vocab);
  try {
    const auto parsed = parse_variables(out.trace.tokens, vocab);
    out.annotation = parsed.annotation();
    if (!parsed.valid) out.trace.parse_error = "span holds labels outside the label set";
  } catch (const ParseError& e) {
    out.trace.parse_error = e.what();
    out.annotation = {};
  }
  return out;
}

void replay(Prefix& prefix, const std::vector<TokenId>& tokens, TokenType type) {
  for (auto id : tokens) prefix.append(id, type);
}

}  // namespace

ordered_json stage_trace_to_json(const StageTrace& t) {
  ordered_json j;
  j["tokens"] = t.tokens;
  j["text"] = t.text;
  j["parse_error"] = t.parse_error ? json(*t.parse_error) : json();
  return j;
}

StageTrace stage_trace_from_json(const json& j) {
  StageTrace t;
  t.tokens = j.at("tokens").get<std::vector<TokenId>>();
  t.text = j.at("text").get<std::string>();
  if (j.contains("parse_error") && !j["parse_error"].is_null()) t.parse_error = j["parse_error"].get<std::string>();
  return t;
}

Prefix::Prefix(const LanguageModel& model, const TokenSpan& initial) : model_(&model), cursor_(model.open()) {
  tokens_.ids.reserve(model.max_positions());
  for (std::size_t i = 0; i < initial.size(); ++i) append(initial.ids[i], initial.types[i]);
}

void Prefix::append(TokenId id, TokenType type) {
  cursor_->append(id, type);
  tokens_.push(id, type, false);
}

std::vector<TokenId> decode_value_span(Prefix& prefix, VariableKey key, TokenType type, const StagePolicy& policy,
                                       std::mt19937_64& rng) {
  const auto& ids = prefix.tokens().ids;
  if (ids.empty() || ids.back() != id_of(key_token(key))) {
    throw ValidationError("value decoding requires the prefix to end with the key token");
  }
  std::vector<TokenId> values;
  for (;;) {
    const auto p = constrain_value_step(prefix.distribution(), values, key, policy);
    const TokenId t = sample_token(p, policy, rng);
    prefix.append(t, type);
    if (t == kEokv) break;
    values.push_back(t);
  }
  return values;
}

StageResult understand(Prefix& prefix, const DecodingPolicy& policy, const LinearizationScheme& scheme,
                       const Vocabulary& vocab) {
  const auto& t = prefix.tokens();
  if (t.ids.empty() || t.ids.back() != kSep || t.types.back() != TokenType::kHumanUtterance) {
    throw ValidationError("understanding requires the prefix to end with the Human utterance's [SEP]");
  }
  return decode_variables(prefix, policy.understanding, scheme, vocab, TokenType::kHumanVariables);
}

StageResult plan(Prefix& prefix, const DecodingPolicy& policy, const LinearizationScheme& scheme,
                 const Vocabulary& vocab) {
  return decode_variables(prefix, policy.planning, scheme, vocab, TokenType::kMachineVariables);
}

StageResult apply_override(Prefix& prefix, const SemanticAnnotation& plan, const LinearizationScheme& scheme,
                           const Vocabulary& vocab) {
  StageResult out;
  out.annotation = plan;
  const auto span = linearize_variables(plan, scheme, Speaker::kMachine, vocab);
  replay(prefix, span.ids, TokenType::kMachineVariables);
  out.trace = make_trace(span.ids, vocab);
  return out;
}

std::string generate_response(Prefix& prefix, const DecodingPolicy& policy, const Vocabulary& vocab,
                              std::mt19937_64& rng, StageTrace* trace) {
  prefix.append(id_of(SpecialToken::kMachine), TokenType::kMachineUtterance);
  std::vector<TokenId> emitted;
  for (;;) {
    const auto p = constrain_response_step(prefix.distribution(), emitted.size(), policy.response);
    const TokenId t = sample_token(p, policy.response, rng);
    prefix.append(t, TokenType::kMachineUtterance);
    if (t == kSep) break;
    emitted.push_back(t);
  }
  std::string text = vocab.detokenize(emitted);
  if (trace) {
    auto raw = emitted;
    raw.push_back(kSep);
    *trace = make_trace(std::move(raw), vocab);
  }
  return text;
}

// ---------------------------------------------------------------------------

ordered_json trace_to_json(const GenerationTrace& t) {
  ordered_json j;
  j["understood"] = t.understood ? ordered_json(annotation_to_json(*t.understood)) : ordered_json();
  j["planned"] = t.planned ? ordered_json(annotation_to_json(*t.planned)) : ordered_json();
  j["plan_overridden"] = t.plan_overridden;
  j["response"] = t.response;
  ordered_json spans;
  spans["understanding"] = stage_trace_to_json(t.understanding_span);
  spans["planning"] = stage_trace_to_json(t.planning_span);
  spans["response"] = stage_trace_to_json(t.response_span);
  j["spans"] = spans;
  j["seed"] = t.seed;
  return j;
}

GenerationTrace trace_from_json(const json& j) {
  GenerationTrace t;
  try {
    if (!j.at("understood").is_null()) t.understood = annotation_from_json(j["understood"]);
    if (!j.at("planned").is_null()) t.planned = annotation_from_json(j["planned"]);
    t.plan_overridden = j.at("plan_overridden").get<bool>();
    t.response = j.at("response").get<std::string>();
    const auto& spans = j.at("spans");
    t.understanding_span = stage_trace_from_json(spans.at("understanding"));
    t.planning_span = stage_trace_from_json(spans.at("planning"));
    t.response_span = stage_trace_from_json(spans.at("response"));
    t.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed trace: ") + e.what());
  }
  return t;
}

std::size_t generation_reserve(const DecodingPolicy& policy, std::size_t override_tokens) {
  const auto variables = [](const StagePolicy& s) {
    std::size_t n = 0;
    for (const auto& b : s.key_bounds) n += b.max_len + 2;
    return n;
  };
  std::size_t reserve = policy.response.length.max_len + 2;
  if (policy.use_understanding) reserve += variables(policy.understanding);
  if (policy.use_planning) reserve += std::max(variables(policy.planning), override_tokens);
  return reserve;
}

LinearizationScheme effective_scheme(const LinearizationScheme& scheme, const DecodingPolicy& policy) {
  LinearizationScheme s = scheme;
  s.include_understanding = scheme.include_understanding && policy.use_understanding;
  s.include_planning = scheme.include_planning && policy.use_planning;
  return s;
}

TokenSpan inference_prefix(const DialogueState& state, const LanguageModel& model, const Vocabulary& vocab,
                           const LinearizationScheme& scheme, std::size_t reserve) {
  if (state.utterances.empty() || state.utterances.back().speaker != Speaker::kHuman) {
    throw ValidationError("a response needs a history ending with a Human utterance");
  }
  if (model.max_positions() <= reserve) {
    throw ValidationError("max_positions " + std::to_string(model.max_positions()) +
                          " leaves no room for a decoded turn of " + std::to_string(reserve) + " tokens");
  }
  LinearizationScheme s = scheme;
  s.max_sequence_length = std::min(s.max_sequence_length, model.max_positions() - reserve);
  TrainingView view;
  view.context = state.context;
  view.utterances = state.utterances;
  view.utterances.back().annotation.reset();
  const auto turns = turns_of(view, s);
  const auto ex = linearize_turns(state.context, turns, vocab, s);
  return static_cast<const TokenSpan&>(ex);
}

namespace {

void check_override(const DecodingPolicy& policy, const std::optional<SemanticAnnotation>& plan_override) {
  if (plan_override && !policy.use_planning) {
    throw ValidationError("a plan override needs planning to be enabled");
  }
}

std::size_t override_length(const std::optional<SemanticAnnotation>& plan_override,
                            const LinearizationScheme& scheme, const Vocabulary& vocab) {
  return plan_override ? linearize_variables(*plan_override, scheme, Speaker::kMachine, vocab).size() : 0;
}

}  // namespace

PendingTurn prepare_turn(const Responder& r, const DialogueState& state, const DecodingPolicy& policy) {
  policy.validate();
  const auto scheme = effective_scheme(r.scheme, policy);
  Prefix prefix(r.model, inference_prefix(state, r.model, r.vocab, scheme, generation_reserve(policy)));
  PendingTurn pending;
  if (policy.use_understanding) pending.understood = understand(prefix, policy, scheme, r.vocab);
  if (policy.use_planning) pending.proposed = plan(prefix, policy, scheme, r.vocab);
  return pending;
}

GenerationTrace complete_turn(const Responder& r, const DialogueState& state, const DecodingPolicy& policy,
                              const PendingTurn& pending, const std::optional<SemanticAnnotation>& plan_override,
                              std::uint64_t seed) {
  policy.validate();
  check_override(policy, plan_override);
  const auto scheme = effective_scheme(r.scheme, policy);
  const std::size_t reserve = generation_reserve(policy, override_length(plan_override, scheme, r.vocab));
  Prefix prefix(r.model, inference_prefix(state, r.model, r.vocab, scheme, reserve));
  GenerationTrace trace;
  trace.seed = seed;
  if (policy.use_understanding) {
    if (!pending.understood) throw StateError("pending turn lacks its understanding stage");
    replay(prefix, pending.understood->trace.tokens, TokenType::kHumanVariables);
    trace.understood = pending.understood->annotation;
    trace.understanding_span = pending.understood->trace;
  }
  if (plan_override) {
    const auto res = apply_override(prefix, *plan_override, scheme, r.vocab);
    trace.planned = res.annotation;
    trace.planning_span = res.trace;
    trace.plan_overridden = true;
  } else if (policy.use_planning) {
    if (!pending.proposed) throw StateError("pending turn lacks its planning stage");
    replay(prefix, pending.proposed->trace.tokens, TokenType::kMachineVariables);
    trace.planned = pending.proposed->annotation;
    trace.planning_span = pending.proposed->trace;
  }
  std::mt19937_64 rng(seed);
  trace.response = generate_response(prefix, policy, r.vocab, rng, &trace.response_span);
  return trace;
}

GenerationTrace respond(const Responder& r, const DialogueState& state, const DecodingPolicy& policy,
                        const std::optional<SemanticAnnotation>& plan_override, std::uint64_t seed) {
  policy.validate();
  check_override(policy, plan_override);
  const auto scheme = effective_scheme(r.scheme, policy);
  const std::size_t reserve = generation_reserve(policy, override_length(plan_override, scheme, r.vocab));
  Prefix prefix(r.model, inference_prefix(state, r.model, r.vocab, scheme, reserve));
  GenerationTrace trace;
  trace.seed = seed;
  if (policy.use_understanding) {
    auto res = understand(prefix, policy, scheme, r.vocab);
    trace.understood = std::move(res.annotation);
    trace.understanding_span = std::move(res.trace);
  }
  if (plan_override) {
    auto res = apply_override(prefix, *plan_override, scheme, r.vocab);
    trace.planned = std::move(res.annotation);
    trace.planning_span = std::move(res.trace);
    trace.plan_overridden = true;
  } else if (policy.use_planning) {
    auto res = plan(prefix, policy, scheme, r.vocab);
    trace.planned = std::move(res.annotation);
    trace.planning_span = std::move(res.trace);
  }
  std::mt19937_64 rng(seed);
  trace.response = generate_response(prefix, policy, r.vocab, rng, &trace.response_span);
  return trace;
}

}  // namespace semdial
