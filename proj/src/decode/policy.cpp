#include <fstream>

#include "semdial/decode.hpp"
#include "semdial/errors.hpp"

namespace semdial {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void set_bounds(StagePolicy& s, VariableKey k, std::size_t min_len, std::size_t max_len) {
  s.bounds(k) = {min_len, max_len};
}

std::string_view sampling_name(SamplingMethod m) {
  return m == SamplingMethod::kGreedy ? "greedy" : "top_k_top_p";
}

ordered_json bounds_to_json(const LengthBounds& b) {
  ordered_json j;
  j["min"] = b.min_len;
  j["max"] = b.max_len;
  return j;
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ValidationError("unknown field '" + k + "' in " + where);
    }
  }
}

LengthBounds bounds_from_json(const json& j, LengthBounds b, const std::string& where) {
  check_keys(j, {"min", "max"}, where);
  b.min_len = j.value("min", b.min_len);
  b.max_len = j.value("max", b.max_len);
  return b;
}

ordered_json stage_to_json(const StagePolicy& s, bool variables) {
  ordered_json j;
  j["sampling"] = sampling_name(s.sampling);
  j["top_k"] = s.top_k;
  j["top_p"] = s.top_p;
  j["temperature"] = s.temperature;
  if (variables) {
    ordered_json lengths;
    for (auto k : {VariableKey::kEmotion, VariableKey::kDialogueAct, VariableKey::kTopical}) {
      lengths[std::string(to_string(k))] = bounds_to_json(s.bounds(k));
    }
    j["lengths"] = lengths;
    ordered_json rep;
    rep["enabled"] = s.repetition.enabled;
    rep["n"] = s.repetition.n;
    j["repetition_constraint"] = rep;
  } else {
    j["length"] = bounds_to_json(s.length);
  }
  return j;
}

StagePolicy stage_from_json(const json& j, StagePolicy s, bool variables, const std::string& where) {
  if (variables) {
    check_keys(j, {"sampling", "top_k", "top_p", "temperature", "lengths", "repetition_constraint"}, where);
  } else {
    check_keys(j, {"sampling", "top_k", "top_p", "temperature", "length"}, where);
  }
  if (j.contains("sampling")) {
    const auto m = j["sampling"].get<std::string>();
    if (m == "greedy") {
      s.sampling = SamplingMethod::kGreedy;
    } else if (m == "top_k_top_p") {
      s.sampling = SamplingMethod::kTopKTopP;
    } else {
      throw ValidationError("unknown sampling method '" + m + "' in " + where);
    }
  }
  s.top_k = j.value("top_k", s.top_k);
  s.top_p = j.value("top_p", s.top_p);
  s.temperature = j.value("temperature", s.temperature);
  if (j.contains("lengths")) {
    const auto& lengths = j["lengths"];
    check_keys(lengths, {"emotion", "dialogue_act", "topical"}, where + ".lengths");
    for (auto k : {VariableKey::kEmotion, VariableKey::kDialogueAct, VariableKey::kTopical}) {
      const std::string name(to_string(k));
      if (lengths.contains(name)) s.bounds(k) = bounds_from_json(lengths[name], s.bounds(k), where + ".lengths." + name);
    }
  }
  if (j.contains("repetition_constraint")) {
    const auto& rep = j["repetition_constraint"];
    check_keys(rep, {"enabled", "n"}, where + ".repetition_constraint");
    s.repetition.enabled = rep.value("enabled", s.repetition.enabled);
    s.repetition.n = rep.value("n", s.repetition.n);
  }
  if (j.contains("length")) s.length = bounds_from_json(j["length"], s.length, where + ".length");
  return s;
}

}  // namespace

void StagePolicy::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (top_k == 0) throw ValidationError("top_k must be positive");
  if (repetition.n == 0) throw ValidationError("repetition n must be positive");
  for (const auto& b : key_bounds) {
    if (b.min_len > b.max_len) throw ValidationError("min_len exceeds max_len");
  }
  if (length.min_len > length.max_len) throw ValidationError("response min_len exceeds max_len");
}

DecodingPolicy::DecodingPolicy() {
  understanding.sampling = SamplingMethod::kGreedy;
  set_bounds(understanding, VariableKey::kTopical, 0, 20);
  set_bounds(understanding, VariableKey::kEmotion, 0, 10);
  set_bounds(understanding, VariableKey::kDialogueAct, 0, 10);

  planning.sampling = SamplingMethod::kGreedy;
  set_bounds(planning, VariableKey::kTopical, 5, 20);
  set_bounds(planning, VariableKey::kEmotion, 0, 10);
  set_bounds(planning, VariableKey::kDialogueAct, 0, 10);
  planning.repetition = {true, 2};

  response.sampling = SamplingMethod::kTopKTopP;
  response.top_k = 50;
  response.top_p = 0.9;
  response.temperature = 0.7;
  response.length = {9, 32};
}

void DecodingPolicy::validate() const {
  understanding.validate();
  planning.validate();
  response.validate();
}

ordered_json policy_to_json(const DecodingPolicy& p) {
  ordered_json j;
  j["understanding"] = stage_to_json(p.understanding, true);
  j["planning"] = stage_to_json(p.planning, true);
  j["response"] = stage_to_json(p.response, false);
  j["use_understanding"] = p.use_understanding;
  j["use_planning"] = p.use_planning;
  return j;
}

DecodingPolicy policy_from_json(const json& j) {
  DecodingPolicy p;
  try {
    check_keys(j, {"understanding", "planning", "response", "use_understanding", "use_planning"}, "policy");
    if (j.contains("understanding")) {
      p.understanding = stage_from_json(j["understanding"], p.understanding, true, "understanding");
    }
    if (j.contains("planning")) p.planning = stage_from_json(j["planning"], p.planning, true, "planning");
    if (j.contains("response")) p.response = stage_from_json(j["response"], p.response, false, "response");
    p.use_understanding = j.value("use_understanding", p.use_understanding);
    p.use_planning = j.value("use_planning", p.use_planning);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed decoding policy: ") + e.what());
  }
  p.validate();
  return p;
}

DecodingPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open decoding policy " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 1);
  }
  return policy_from_json(j);
}

}  // namespace semdial
