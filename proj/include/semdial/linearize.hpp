#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semdial/corpus.hpp"
#include "semdial/tokenizer.hpp"

namespace semdial {

enum class TokenType : std::uint8_t {
  kHumanUtterance = 0,
  kMachineUtterance = 1,
  kHumanVariables = 2,
  kMachineVariables = 3,
  kContext = 4,
};
inline constexpr std::size_t kTokenTypeCount = 5;

std::string_view to_string(TokenType t);

enum class VariableKey { kEmotion, kDialogueAct, kTopical };

std::string_view to_string(VariableKey k);
SpecialToken key_token(VariableKey k);
std::optional<VariableKey> key_of(TokenId id);

inline TokenType variable_type(Speaker owner) {
  return owner == Speaker::kHuman ? TokenType::kHumanVariables : TokenType::kMachineVariables;
}
inline TokenType utterance_type(Speaker s) {
  return s == Speaker::kHuman ? TokenType::kHumanUtterance : TokenType::kMachineUtterance;
}

enum class Truncation { kDropOldestTurns };

struct LinearizationScheme {
  std::array<VariableKey, 3> variable_order = {VariableKey::kEmotion, VariableKey::kDialogueAct,
                                               VariableKey::kTopical};
  bool include_understanding = true;  // Human's variables s_{2i-1}
  bool include_planning = true;       // Machine's variables s_{2i}
  std::size_t max_sequence_length = 512;
  Truncation truncation = Truncation::kDropOldestTurns;
  // Role-switched views of odd-length sessions start with a Machine turn that
  // has no history. When false, such leading turns are dropped.
  bool keep_machine_opener = true;

  // Throws ValidationError unless variable_order is a permutation of the
  // three keys and max_sequence_length > 0.
  void validate() const;
  bool operator==(const LinearizationScheme&) const = default;
};

nlohmann::ordered_json scheme_to_json(const LinearizationScheme& s);
LinearizationScheme scheme_from_json(const nlohmann::json& j);

// One element of the per-turn layout: context (including [CLS]), a Human
// utterance, Human variables, Machine variables, a Machine utterance.
enum class ElementKind { kContext, kHumanUtterance, kHumanVariables, kMachineVariables, kMachineUtterance };

std::string_view to_string(ElementKind k);

struct ElementSpan {
  ElementKind kind = ElementKind::kContext;
  std::size_t turn = 0;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  bool operator==(const ElementSpan&) const = default;
};

struct TokenSpan {
  std::vector<TokenId> ids;
  std::vector<TokenType> types;
  std::vector<std::uint8_t> loss_mask;

  std::size_t size() const { return ids.size(); }
  void push(TokenId id, TokenType type, bool loss) {
    ids.push_back(id);
    types.push_back(type);
    loss_mask.push_back(loss ? 1 : 0);
  }
  void append(const TokenSpan& other);
};

struct LinearizedExample : TokenSpan {
  std::vector<ElementSpan> turn_boundaries;
};

// key, values joined by <list_sep>, <eokv> for each key in the scheme's
// order. Keys carry no loss; values, separators, and <eokv> do.
TokenSpan linearize_variables(const SemanticAnnotation& ann, const LinearizationScheme& scheme,
                              Speaker owner, const Vocabulary& vocab);

// Values of a single key, without the key token and <eokv>.
std::vector<TokenId> linearize_values(const SemanticAnnotation& ann, VariableKey key,
                                      const Vocabulary& vocab);

// One turn of the linearized sequence. Either side may be absent (a leading
// Machine turn, a trailing Human turn). Variables are emitted only when the
// scheme includes them and they are present.
struct TurnRecord {
  std::optional<std::string> human_text;
  std::optional<SemanticAnnotation> human_variables;
  std::optional<std::string> machine_text;
  std::optional<SemanticAnnotation> machine_variables;
};

// context tokens, [CLS], then per turn:
//   <human> r [SEP]  s_h  s_m  <machine> r [SEP]
// When the sequence exceeds scheme.max_sequence_length the oldest complete
// turns are dropped; context and [CLS] are always kept. Throws
// ValidationError when the newest turn alone does not fit.
LinearizedExample linearize_turns(std::string_view context, std::span<const TurnRecord> turns,
                                  const Vocabulary& vocab, const LinearizationScheme& scheme);

std::vector<TurnRecord> turns_of(const TrainingView& view, const LinearizationScheme& scheme);

LinearizedExample linearize_session(const TrainingView& view, const Vocabulary& vocab,
                                    const LinearizationScheme& scheme);

// Both training views of every session.
std::vector<LinearizedExample> linearize_corpus(const std::vector<AnnotatedSession>& sessions,
                                                const Vocabulary& vocab,
                                                const LinearizationScheme& scheme);

// Result of parsing a variables span. Label values that are not one of the
// known emotion / dialogue-act names are kept verbatim and clear `valid`.
struct ParsedVariables {
  std::vector<std::string> emotions;
  std::vector<std::string> dialogue_acts;
  std::vector<Phrase> topical_words;
  std::array<bool, 3> present = {false, false, false};
  bool valid = true;

  // Known labels only; unknown ones are dropped.
  SemanticAnnotation annotation() const;
};

// Grammar, per key: key (value (<list_sep> value)*)? <eokv>. Keys may appear in
// any order, at most once. Throws ParseError (position = token index) on a
// missing <eokv>, a repeated key, an empty value, or a stray special token.
ParsedVariables parse_variables(std::span<const TokenId> span, const Vocabulary& vocab);

}  // namespace semdial
