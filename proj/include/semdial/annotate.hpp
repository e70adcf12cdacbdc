#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "semdial/corpus.hpp"

namespace semdial {

// ---------------------------------------------------------------------------
// Topical words

struct ScoredPhrase {
  Phrase phrase;
  double score = 0.0;
  bool operator==(const ScoredPhrase&) const = default;
};

// Ranked topical phrases; scores are non-increasing and phrases unique.
class TopicalVocabulary {
 public:
  TopicalVocabulary() = default;
  TopicalVocabulary(std::vector<ScoredPhrase> phrases, std::size_t size_limit);

  const std::vector<ScoredPhrase>& phrases() const { return phrases_; }
  std::size_t size() const { return phrases_.size(); }
  std::size_t size_limit() const { return size_limit_; }
  std::size_t max_phrase_length() const { return max_phrase_length_; }
  bool contains(const Phrase& p) const { return lookup_.count(p) > 0; }

  // "phrase<TAB>score" per line, tokens of a phrase separated by spaces.
  static TopicalVocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<ScoredPhrase> phrases_;
  std::set<Phrase> lookup_;
  std::size_t size_limit_ = 0;
  std::size_t max_phrase_length_ = 0;
};

struct TopicalOptions {
  std::set<std::string> stoplist;
  std::size_t max_phrase_length = 1;
  // Optional background corpus. Empty means every inverse background
  // frequency is 1 and ranking falls back to raw frequency.
  std::vector<std::string> background_documents;
};

std::set<std::string> load_stoplist(const std::filesystem::path& path);

// Swappable extraction backend.
class TopicalExtractor {
 public:
  virtual ~TopicalExtractor() = default;
  virtual TopicalVocabulary extract(const std::vector<AnnotatedSession>& sessions,
                                    std::size_t size_limit) const = 0;
};

// Scores each candidate phrase by
//   tf(p) * (1 + log((N_bg + 1) / (bf(p) + 1)))
// where tf counts occurrences of p in the corpus, and bf counts background
// documents containing p. Candidates are token n-grams up to max_phrase_length that
// contain no stop token and no punctuation-only token. Ties rank
// lexicographically.
class SalienceExtractor : public TopicalExtractor {
 public:
  explicit SalienceExtractor(TopicalOptions options = {});
  TopicalVocabulary extract(const std::vector<AnnotatedSession>& sessions,
                            std::size_t size_limit) const override;

 private:
  TopicalOptions options_;
};

// Throws ValidationError when size_limit is 0.
TopicalVocabulary build_topical_vocabulary(const std::vector<AnnotatedSession>& sessions,
                                           std::size_t size_limit,
                                           const TopicalOptions& options = {});

// Vocabulary phrases matched on token boundaries, deduplicated, in order of
// first occurrence (longer phrase first at the same start).
std::vector<Phrase> align_topical_words(std::string_view text, const TopicalVocabulary& vocab);
std::vector<Phrase> align_topical_words(const Utterance& utterance, const TopicalVocabulary& vocab);

// ---------------------------------------------------------------------------
// Sentence split

class SentenceSplitter {
 public:
  // ASCII . ? ! and their full-width forms 。？！
  static std::vector<char32_t> default_terminators();

  SentenceSplitter() : SentenceSplitter(default_terminators()) {}
  explicit SentenceSplitter(std::vector<char32_t> terminators);

  struct Range {
    std::size_t begin = 0;  // byte offsets into the input
    std::size_t end = 0;
  };

  // Runs of terminators stay attached to their sentence; surrounding
  // whitespace is left between ranges; a trailing unterminated segment is
  // kept.
  std::vector<Range> ranges(std::string_view text) const;
  std::vector<std::string> split(std::string_view text) const;

 private:
  std::vector<char32_t> terminators_;
};

std::vector<std::string> split_sentences(std::string_view text);

// ---------------------------------------------------------------------------
// Sentence classifiers

struct LabeledSentence {
  std::string sentence;
  std::string label;
};

// "label<TAB>sentence" per line.
std::vector<LabeledSentence> load_labeled_sentences(const std::filesystem::path& path);
void save_labeled_sentences(const std::vector<LabeledSentence>& data, const std::filesystem::path& path);

struct ClassifierOptions {
  std::size_t epochs = 40;
  double learning_rate = 0.5;
  double l2 = 1e-6;
  std::uint64_t seed = 13;
};

struct ClassifierMetadata {
  std::string training_fingerprint;
  std::size_t training_examples = 0;
  double training_accuracy = 0.0;
  // Held-out accuracy reported by whoever trained the backbone, if known.
  std::optional<double> reported_accuracy;
};

// Multinomial logistic regression over bag-of-subword features: lowercased
// words, word bigrams, and boundary-marked character trigrams.
class SentenceClassifier {
 public:
  static constexpr std::string_view kFormatTag = "SEMDIAL-CLASSIFIER";
  static constexpr int kFormatVersion = 1;

  // Throws ValidationError when a label is outside label_set or a label in
  // label_set has no example.
  static SentenceClassifier train(const std::vector<LabeledSentence>& data,
                                  std::vector<std::string> label_set,
                                  const ClassifierOptions& options = {});

  const std::vector<std::string>& label_set() const { return labels_; }
  const ClassifierMetadata& metadata() const { return metadata_; }
  ClassifierMetadata& metadata() { return metadata_; }

  std::size_t predict_index(std::string_view sentence) const;
  const std::string& predict(std::string_view sentence) const { return labels_[predict_index(sentence)]; }
  std::vector<std::string> classify(const std::vector<std::string>& sentences) const;

  void save(const std::filesystem::path& path) const;
  static SentenceClassifier load(const std::filesystem::path& path);

 private:
  std::vector<std::size_t> features(std::string_view sentence) const;

  std::vector<std::string> labels_;
  std::map<std::string, std::size_t> feature_index_;
  std::vector<double> weights_;  // [feature][label], bias is feature 0
  ClassifierMetadata metadata_;
};

std::vector<std::string> feature_strings(std::string_view sentence);

std::vector<std::string> classify_sentences(const SentenceClassifier& clf,
                                            const std::vector<std::string>& sentences);

std::vector<std::string> dialogue_act_label_set();
std::vector<std::string> emotion_label_set();

// ---------------------------------------------------------------------------
// Corpus annotation

// Fills sentences, per-sentence dialogue acts and emotions, and topical words
// for every utterance. Text is left untouched.
std::vector<AnnotatedSession> annotate_corpus(const std::vector<AnnotatedSession>& sessions,
                                              const TopicalVocabulary& vocab,
                                              const SentenceClassifier& da_classifier,
                                              const SentenceClassifier& emotion_classifier,
                                              const SentenceSplitter& splitter = {});

SemanticAnnotation annotate_text(std::string_view text, const TopicalVocabulary& vocab,
                                 const SentenceClassifier& da_classifier,
                                 const SentenceClassifier& emotion_classifier,
                                 std::vector<std::string>* sentences = nullptr,
                                 const SentenceSplitter& splitter = {});

// ---------------------------------------------------------------------------
// Label transitions

enum class LabelVariable { kDialogueAct, kEmotion };

struct TransitionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::uint64_t>> counts;  // [previous][current]
  std::vector<std::vector<double>> probabilities;  // rows sum to 1, or all zero
};

// Every label of utterance t paired with every label of utterance t+1 within
// a session.
TransitionMatrix transition_matrix(const std::vector<AnnotatedSession>& sessions, LabelVariable variable);

nlohmann::ordered_json transition_to_json(const TransitionMatrix& m);

}  // namespace semdial
