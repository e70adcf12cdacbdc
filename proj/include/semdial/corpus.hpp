#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace semdial {

enum class Speaker { kHuman, kMachine };

enum class EmotionLabel { kFear, kSurprise, kAnger, kDisgust, kLike, kHappiness, kSadness, kNone };

enum class DialogueAct { kInform, kQuestion, kDirective, kCommissive };

inline constexpr std::array<std::string_view, 8> kEmotionNames = {
    "Fear", "Surprise", "Anger", "Disgust", "Like", "Happiness", "Sadness", "None"};
inline constexpr std::array<std::string_view, 4> kDialogueActNames = {
    "Inform", "Question", "Directive", "Commissive"};

std::string_view to_string(Speaker s);
std::string_view to_string(EmotionLabel e);
std::string_view to_string(DialogueAct a);
std::optional<Speaker> parse_speaker(std::string_view s);
std::optional<EmotionLabel> parse_emotion(std::string_view s);
std::optional<DialogueAct> parse_dialogue_act(std::string_view s);

inline Speaker other(Speaker s) { return s == Speaker::kHuman ? Speaker::kMachine : Speaker::kHuman; }

// A topical word: one or more surface tokens.
using Phrase = std::vector<std::string>;

std::string phrase_text(const Phrase& p);

// Per-utterance semantic variables. Emotions and dialogue acts hold one label
// per sentence; topical words are deduplicated phrases in order of appearance.
struct SemanticAnnotation {
  std::vector<EmotionLabel> emotions;
  std::vector<DialogueAct> dialogue_acts;
  std::vector<Phrase> topical_words;

  bool operator==(const SemanticAnnotation&) const = default;
};

struct Utterance {
  Speaker speaker = Speaker::kHuman;
  std::string text;
  std::vector<std::string> sentences;
  std::optional<SemanticAnnotation> annotation;

  bool operator==(const Utterance&) const = default;
};

struct AnnotatedSession {
  std::string session_id;
  std::string context;
  std::vector<Utterance> utterances;

  bool operator==(const AnnotatedSession&) const = default;
};

enum class Split { kTrain, kValid, kTest };

std::string_view to_string(Split s);

struct CorpusSplit {
  std::vector<AnnotatedSession> train;
  std::vector<AnnotatedSession> valid;
  std::vector<AnnotatedSession> test;
};

// Throws ValidationError naming the session when an invariant is violated:
// non-empty utterances, strictly alternating speakers starting with the
// Human, per-sentence label counts, duplicate topical phrases.
void validate_session(const AnnotatedSession& session);

// Checks the annotation against an utterance's sentence count.
void validate_annotation(const SemanticAnnotation& ann, std::size_t sentence_count,
                         const std::string& where);

// One session per line, fields in canonical order:
// session_id, context (omitted when empty), utterances[speaker, text,
// sentences (omitted when empty), annotation (omitted when absent)].
nlohmann::ordered_json session_to_json(const AnnotatedSession& session);
AnnotatedSession session_from_json(const nlohmann::json& j);
nlohmann::ordered_json annotation_to_json(const SemanticAnnotation& ann);
SemanticAnnotation annotation_from_json(const nlohmann::json& j);

// `path` is either a session file or a directory holding <split>.jsonl.
std::vector<AnnotatedSession> load_corpus(const std::filesystem::path& path, Split split);
std::vector<AnnotatedSession> load_corpus_file(const std::filesystem::path& path);
void save_corpus(const std::vector<AnnotatedSession>& sessions, const std::filesystem::path& path);

// Loads train/valid/test from a directory and checks that session ids are
// disjoint across splits.
CorpusSplit load_split(const std::filesystem::path& dir);
void save_split(const CorpusSplit& split, const std::filesystem::path& dir);

// A session with speaker roles assigned for one training sample.
struct TrainingView {
  std::string session_id;
  std::string context;
  std::vector<Utterance> utterances;
  int index = 0;  // 0: original roles, 1: roles switched

  bool operator==(const TrainingView&) const = default;
};

TrainingView flip_roles(TrainingView view);

// Exactly two views: the original roles and the role-switched copy. Throws
// ValidationError when an utterance is unannotated.
std::vector<TrainingView> derive_training_views(const AnnotatedSession& session);

// Column schema of the dataset statistics table.
struct StatsReport {
  std::size_t sessions = 0;
  double utterances_per_session = 0.0;
  double tokens_per_utterance = 0.0;
  double labels_per_utterance = 0.0;  // DAs (= emotions) per utterance
  double topical_per_utterance = 0.0;
};

StatsReport corpus_stats(const std::vector<AnnotatedSession>& sessions);
nlohmann::ordered_json stats_to_json(const StatsReport& r);

}  // namespace semdial
