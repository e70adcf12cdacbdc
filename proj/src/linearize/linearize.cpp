#include "semdial/linearize.hpp"

#include <algorithm>

#include "semdial/errors.hpp"

namespace semdial {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(TokenType t) {
  switch (t) {
    case TokenType::kHumanUtterance:
      return "human_utt";
    case TokenType::kMachineUtterance:
      return "machine_utt";
    case TokenType::kHumanVariables:
      return "human_sem";
    case TokenType::kMachineVariables:
      return "machine_sem";
    case TokenType::kContext:
      return "context";
  }
  return "context";
}

std::string_view to_string(VariableKey k) {
  switch (k) {
    case VariableKey::kEmotion:
      return "emotion";
    case VariableKey::kDialogueAct:
      return "dialogue_act";
    case VariableKey::kTopical:
      return "topical";
  }
  return "emotion";
}

std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::kContext:
      return "context";
    case ElementKind::kHumanUtterance:
      return "human_utterance";
    case ElementKind::kHumanVariables:
      return "human_variables";
    case ElementKind::kMachineVariables:
      return "machine_variables";
    case ElementKind::kMachineUtterance:
      return "machine_utterance";
  }
  return "context";
}

SpecialToken key_token(VariableKey k) {
  switch (k) {
    case VariableKey::kEmotion:
      return SpecialToken::kEmotion;
    case VariableKey::kDialogueAct:
      return SpecialToken::kDialogAct;
    case VariableKey::kTopical:
      return SpecialToken::kTopical;
  }
  return SpecialToken::kTopical;
}

std::optional<VariableKey> key_of(TokenId id) {
  if (id == id_of(SpecialToken::kEmotion)) return VariableKey::kEmotion;
  if (id == id_of(SpecialToken::kDialogAct)) return VariableKey::kDialogueAct;
  if (id == id_of(SpecialToken::kTopical)) return VariableKey::kTopical;
  return std::nullopt;
}

void LinearizationScheme::validate() const {
  std::array<bool, 3> seen{};
  for (auto k : variable_order) seen[static_cast<std::size_t>(k)] = true;
  if (!(seen[0] && seen[1] && seen[2])) {
    throw ValidationError("variable_order must be a permutation of emotion, dialogue_act, topical");
  }
  if (max_sequence_length == 0) throw ValidationError("max_sequence_length must be positive");
}

ordered_json scheme_to_json(const LinearizationScheme& s) {
  ordered_json j;
  j["variable_order"] = ordered_json::array();
  for (auto k : s.variable_order) j["variable_order"].push_back(to_string(k));
  j["include_understanding"] = s.include_understanding;
  j["include_planning"] = s.include_planning;
  j["max_sequence_length"] = s.max_sequence_length;
  j["truncation"] = "drop_oldest_turns";
  j["keep_machine_opener"] = s.keep_machine_opener;
  return j;
}

LinearizationScheme scheme_from_json(const json& j) {
  LinearizationScheme s;
  if (j.contains("variable_order")) {
    const auto& order = j["variable_order"];
    if (!order.is_array() || order.size() != 3) throw ValidationError("variable_order needs 3 keys");
    for (std::size_t i = 0; i < 3; ++i) {
      const auto name = order[i].get<std::string>();
      if (name == "emotion") {
        s.variable_order[i] = VariableKey::kEmotion;
      } else if (name == "dialogue_act") {
        s.variable_order[i] = VariableKey::kDialogueAct;
      } else if (name == "topical") {
        s.variable_order[i] = VariableKey::kTopical;
      } else {
        throw ValidationError("unknown variable key '" + name + "'");
      }
    }
  }
  s.include_understanding = j.value("include_understanding", s.include_understanding);
  s.include_planning = j.value("include_planning", s.include_planning);
  s.max_sequence_length = j.value("max_sequence_length", s.max_sequence_length);
  s.keep_machine_opener = j.value("keep_machine_opener", s.keep_machine_opener);
  if (j.value("truncation", std::string("drop_oldest_turns")) != "drop_oldest_turns") {
    throw ValidationError("unsupported truncation mode");
  }
  s.validate();
  return s;
}

void TokenSpan::append(const TokenSpan& other) {
  ids.insert(ids.end(), other.ids.begin(), other.ids.end());
  types.insert(types.end(), other.types.begin(), other.types.end());
  loss_mask.insert(loss_mask.end(), other.loss_mask.begin(), other.loss_mask.end());
}

std::vector<TokenId> linearize_values(const SemanticAnnotation& ann, VariableKey key,
                                      const Vocabulary& vocab) {
  std::vector<TokenId> out;
  const auto sep = [&] {
    if (!out.empty()) out.push_back(id_of(SpecialToken::kListSep));
  };
  switch (key) {
    case VariableKey::kEmotion:
      for (auto e : ann.emotions) {
        sep();
        out.push_back(vocab.id(to_string(e)));
      }
      break;
    case VariableKey::kDialogueAct:
      for (auto a : ann.dialogue_acts) {
        sep();
        out.push_back(vocab.id(to_string(a)));
      }
      break;
    case VariableKey::kTopical:
      for (const auto& p : ann.topical_words) {
        sep();
        for (auto id : vocab.encode(p)) out.push_back(id);
      }
      break;
  }
  return out;
}

TokenSpan linearize_variables(const SemanticAnnotation& ann, const LinearizationScheme& scheme,
                              Speaker owner, const Vocabulary& vocab) {
  TokenSpan span;
  const TokenType type = variable_type(owner);
  for (auto key : scheme.variable_order) {
    span.push(id_of(key_token(key)), type, false);
    for (auto id : linearize_values(ann, key, vocab)) span.push(id, type, true);
    span.push(id_of(SpecialToken::kEokv), type, true);
  }
  return span;
}

namespace {

void add_element(LinearizedExample& ex, ElementKind kind, std::size_t turn, const TokenSpan& span) {
  const std::size_t begin = ex.size();
  ex.append(span);
  ex.turn_boundaries.push_back({kind, turn, begin, ex.size()});
}

TokenSpan utterance_span(Speaker speaker, std::string_view text, const Vocabulary& vocab) {
  TokenSpan span;
  const TokenType type = utterance_type(speaker);
  const bool loss = speaker == Speaker::kMachine;
  span.push(id_of(speaker == Speaker::kHuman ? SpecialToken::kHuman : SpecialToken::kMachine), type,
            false);
  for (auto id : vocab.tokenize(text)) span.push(id, type, loss);
  span.push(id_of(SpecialToken::kSep), type, loss);
  return span;
}

LinearizedExample turn_block(const TurnRecord& turn, std::size_t index, const Vocabulary& vocab,
                             const LinearizationScheme& scheme) {
  LinearizedExample block;
  if (turn.human_text) {
    add_element(block, ElementKind::kHumanUtterance, index,
                utterance_span(Speaker::kHuman, *turn.human_text, vocab));
  }
  if (scheme.include_understanding && turn.human_variables) {
    add_element(block, ElementKind::kHumanVariables, index,
                linearize_variables(*turn.human_variables, scheme, Speaker::kHuman, vocab));
  }
  if (scheme.include_planning && turn.machine_variables) {
    add_element(block, ElementKind::kMachineVariables, index,
                linearize_variables(*turn.machine_variables, scheme, Speaker::kMachine, vocab));
  }
  if (turn.machine_text) {
    add_element(block, ElementKind::kMachineUtterance, index,
                utterance_span(Speaker::kMachine, *turn.machine_text, vocab));
  }
  return block;
}

}  // namespace

LinearizedExample linearize_turns(std::string_view context, std::span<const TurnRecord> turns,
                                  const Vocabulary& vocab, const LinearizationScheme& scheme) {
  scheme.validate();
  LinearizedExample out;
  TokenSpan head;
  for (auto id : vocab.tokenize(context)) head.push(id, TokenType::kContext, false);
  head.push(id_of(SpecialToken::kCls), TokenType::kContext, false);
  add_element(out, ElementKind::kContext, 0, head);

  std::vector<LinearizedExample> blocks;
  blocks.reserve(turns.size());
  std::size_t total = out.size();
  for (std::size_t i = 0; i < turns.size(); ++i) {
    blocks.push_back(turn_block(turns[i], i, vocab, scheme));
    total += blocks.back().size();
  }
  std::size_t first = 0;
  while (total > scheme.max_sequence_length && first + 1 < blocks.size()) {
    total -= blocks[first].size();
    ++first;
  }
  if (total > scheme.max_sequence_length) {
    throw ValidationError("turn of " + std::to_string(total - out.size()) +
                          " tokens does not fit max_sequence_length " +
                          std::to_string(scheme.max_sequence_length));
  }
  for (std::size_t i = first; i < blocks.size(); ++i) {
    const std::size_t offset = out.size();
    out.append(blocks[i]);
    for (auto e : blocks[i].turn_boundaries) {
      e.begin += offset;
      e.end += offset;
      out.turn_boundaries.push_back(e);
    }
  }
  return out;
}

std::vector<TurnRecord> turns_of(const TrainingView& view, const LinearizationScheme& scheme) {
  std::vector<TurnRecord> turns;
  for (const auto& u : view.utterances) {
    if (u.speaker == Speaker::kHuman) {
      TurnRecord t;
      t.human_text = u.text;
      t.human_variables = u.annotation;
      turns.push_back(std::move(t));
    } else {
      if (turns.empty() || turns.back().machine_text) {
        if (turns.empty() && !scheme.keep_machine_opener) continue;
        turns.emplace_back();
      }
      turns.back().machine_text = u.text;
      turns.back().machine_variables = u.annotation;
    }
  }
  return turns;
}

LinearizedExample linearize_session(const TrainingView& view, const Vocabulary& vocab,
                                    const LinearizationScheme& scheme) {
  const auto turns = turns_of(view, scheme);
  return linearize_turns(view.context, turns, vocab, scheme);
}

std::vector<LinearizedExample> linearize_corpus(const std::vector<AnnotatedSession>& sessions,
                                                const Vocabulary& vocab,
                                                const LinearizationScheme& scheme) {
  std::vector<LinearizedExample> out;
  out.reserve(sessions.size() * 2);
  for (const auto& s : sessions) {
    for (const auto& view : derive_training_views(s)) {
      auto turns = turns_of(view, scheme);
      if (turns.empty()) continue;
      out.push_back(linearize_turns(view.context, turns, vocab, scheme));
    }
  }
  return out;
}

SemanticAnnotation ParsedVariables::annotation() const {
  SemanticAnnotation ann;
  for (const auto& e : emotions) {
    if (auto l = parse_emotion(e)) ann.emotions.push_back(*l);
  }
  for (const auto& a : dialogue_acts) {
    if (auto l = parse_dialogue_act(a)) ann.dialogue_acts.push_back(*l);
  }
  ann.topical_words = topical_words;
  return ann;
}

ParsedVariables parse_variables(std::span<const TokenId> span, const Vocabulary& vocab) {
  ParsedVariables out;
  std::size_t pos = 0;
  const TokenId list_sep = id_of(SpecialToken::kListSep);
  const TokenId eokv = id_of(SpecialToken::kEokv);
  while (pos < span.size()) {
    const auto key = key_of(span[pos]);
    if (!key) {
      throw ParseError("expected a variable key at token " + std::to_string(pos) + ", found " +
                           vocab.token(span[pos]),
                       pos);
    }
    auto& present = out.present[static_cast<std::size_t>(*key)];
    if (present) throw ParseError("repeated key " + std::string(to_string(*key)), pos);
    present = true;
    ++pos;

    std::vector<std::vector<TokenId>> items;
    std::vector<TokenId> current;
    bool closed = false;
    bool expect_item = false;
    while (pos < span.size()) {
      const TokenId id = span[pos];
      if (id == eokv || id == list_sep) {
        if (current.empty() && (expect_item || id == list_sep)) {
          throw ParseError("empty value in " + std::string(to_string(*key)) + " at token " +
                               std::to_string(pos),
                           pos);
        }
        if (!current.empty()) items.push_back(std::move(current));
        current.clear();
        ++pos;
        if (id == eokv) {
          closed = true;
          break;
        }
        expect_item = true;
        continue;
      }
      if (Vocabulary::is_special(id)) {
        throw ParseError("unexpected " + vocab.token(id) + " at token " + std::to_string(pos), pos);
      }
      current.push_back(id);
      ++pos;
    }
    if (!closed) {
      throw ParseError("missing <eokv> for " + std::string(to_string(*key)) + " at token " +
                           std::to_string(pos),
                       pos);
    }
    for (const auto& item : items) {
      Phrase p;
      for (auto id : item) p.push_back(vocab.token(id));
      if (*key == VariableKey::kTopical) {
        out.topical_words.push_back(std::move(p));
        continue;
      }
      const std::string label = phrase_text(p);
      const bool known = p.size() == 1 && (*key == VariableKey::kEmotion
                                               ? parse_emotion(label).has_value()
                                               : parse_dialogue_act(label).has_value());
      if (!known) out.valid = false;
      (*key == VariableKey::kEmotion ? out.emotions : out.dialogue_acts).push_back(label);
    }
  }
  return out;
}

}  // namespace semdial
