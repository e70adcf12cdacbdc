#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semdial/annotate.hpp"
#include "semdial/decode.hpp"

namespace semdial {

// ---------------------------------------------------------------------------
// Token-based metrics

// kWord uses the surface segmentation (CJK code points are tokens of their
// own, other scripts split on whitespace and punctuation); kCharacter makes
// every non-space code point a token.
enum class TokenUnit { kWord, kCharacter };

std::vector<std::string> metric_tokens(std::string_view s, TokenUnit unit);

// Cumulative sentence BLEU-n with uniform weights and the brevity penalty.
// Precisions of order 2..n are add-one smoothed; an unmatched unigram
// precision makes the score 0, as does an empty hypothesis.
double bleu(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference, int n);
double bleu(std::string_view hypothesis, std::string_view reference, int n, TokenUnit unit = TokenUnit::kWord);

// Distinct n-grams over all n-grams of all hypotheses; n-grams never cross a
// hypothesis boundary. 0 when there are none.
double distinct_n(const std::vector<std::vector<std::string>>& hypotheses, int n);

// ---------------------------------------------------------------------------
// Embedding-based metrics

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  // Text format: optional "count dimension" header, then "phrase v1 ... vd"
  // per line. Phrases holding spaces cannot be represented.
  static EmbeddingTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Independent N(0, 1) components per phrase from a seeded generator.
  static EmbeddingTable random(const std::vector<std::string>& phrases, std::size_t dimension, std::uint64_t seed);

  void add(std::string phrase, std::vector<double> vector);
  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }
  std::size_t max_phrase_code_points() const { return max_code_points_; }
  bool contains(std::string_view phrase) const { return vectors_.count(std::string(phrase)) > 0; }
  // Zero vector for unknown phrases.
  std::vector<double> lookup(std::string_view phrase) const;

 private:
  std::size_t dimension_ = 0;
  std::size_t max_code_points_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// Splits a sentence into the phrases looked up in an embedding table.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<std::string> segment(std::string_view s) const = 0;
};

// The surface tokens of text::segment().
class SurfaceSegmenter : public Segmenter {
 public:
  std::vector<std::string> segment(std::string_view s) const override;
};

// Within each run of CJK code points, greedily takes the longest phrase
// present in the table and falls back to single code points; other tokens
// are kept as they are.
class LongestMatchSegmenter : public Segmenter {
 public:
  explicit LongestMatchSegmenter(const EmbeddingTable& table) : table_(table) {}
  std::vector<std::string> segment(std::string_view s) const override;

 private:
  const EmbeddingTable& table_;
};

struct EmbeddingScores {
  double average = 0.0;
  double extreme = 0.0;
  // Either side had no in-table phrase; both scores are then 0.
  bool all_oov = false;
};

// Average: cosine of the mean phrase vectors. Extreme: cosine of the
// dimension-wise values of largest magnitude (ties keep the positive value).
// Cosines are mapped to [0, 1] by (1 + cos) / 2. Unknown phrases count as
// zero vectors.
EmbeddingScores embedding_scores(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference,
                                 const EmbeddingTable& table);
EmbeddingScores embedding_scores(std::string_view hypothesis, std::string_view reference,
                                 const EmbeddingTable& table, const Segmenter& segmenter);

// ---------------------------------------------------------------------------
// Semantic-level metrics

// Fraction of gold phrases found on token boundaries in the response;
// nullopt when gold is empty.
std::optional<double> topical_recall(std::string_view response, const std::vector<Phrase>& gold);

// Each sample's label list counts as the set of labels it contains. Per-label
// F1 over samples, averaged with weights proportional to the number of
// samples whose gold list holds the label. Throws ValidationError when the
// sample counts differ or no gold label occurs at all.
double label_f1(const std::vector<std::vector<std::string>>& predicted,
                const std::vector<std::vector<std::string>>& gold, const std::vector<std::string>& label_set);

// Set F1 of one sample; 1 when both sets are empty.
double phrase_set_f1(const std::vector<Phrase>& predicted, const std::vector<Phrase>& gold);
// Mean of phrase_set_f1 over samples.
double topical_f1(const std::vector<std::vector<Phrase>>& predicted, const std::vector<std::vector<Phrase>>& gold);

std::vector<std::string> label_names(const std::vector<DialogueAct>& acts);
std::vector<std::string> label_names(const std::vector<EmotionLabel>& emotions);

// ---------------------------------------------------------------------------
// Reports

enum class EvalMode { kPlanned, kGoldVariables };

std::string_view to_string(EvalMode m);
std::optional<EvalMode> parse_eval_mode(std::string_view s);

struct SampleRecord {
  std::string session_id;
  std::size_t utterance = 0;  // index of the Machine utterance
  std::string reference;
  std::string hypothesis;
  std::array<double, 3> bleu = {0.0, 0.0, 0.0};
  EmbeddingScores embedding;
  std::optional<double> topical_recall;
  std::vector<std::string> response_dialogue_acts;
  std::vector<std::string> response_emotions;
  GenerationTrace trace;
};

struct MetricReport {
  EvalMode mode = EvalMode::kPlanned;
  std::size_t samples = 0;
  double bleu_1 = 0.0;
  double bleu_2 = 0.0;
  double bleu_3 = 0.0;
  double emb_average = 0.0;
  double emb_extreme = 0.0;
  double dist_1 = 0.0;
  double dist_2 = 0.0;
  std::optional<double> topical_recall;  // absent when no sample has gold topical words
  double das_f1 = 0.0;
  double emotions_f1 = 0.0;
  // Understanding module against the gold variables of the Human utterance;
  // absent when understanding is switched off.
  std::optional<double> topical_f1;
  std::optional<double> understanding_das_f1;
  std::optional<double> understanding_emotions_f1;
  // Machine utterances under gold variables; GOLD_VARIABLES mode only.
  std::optional<double> ppl;
  std::vector<SampleRecord> per_sample;
};

// Column views; BLEU, Dist, recall and F1 values are in percent.
nlohmann::ordered_json generation_columns(const MetricReport& r);  // BLEU-1..3, PPL, Average, Extreme, Dist-1/2 %
nlohmann::ordered_json semantic_columns(const MetricReport& r);    // Topical-Recall, DAs-F1, Emotions-F1
nlohmann::ordered_json ablation_columns(const MetricReport& r);     // BLEU-2/3, Emb-Avg, Dist-2 %, Topical-R, DAs-F1, EMOs-F1
nlohmann::ordered_json understanding_columns(const MetricReport& r);  // Topical-F1, DAs-F1, EMOs-F1
// All of the above plus the raw report and, when asked, per-sample records.
nlohmann::ordered_json report_to_json(const MetricReport& r, bool include_samples);

struct EvalResources {
  const LanguageModel& model;
  const Vocabulary& vocab;
  LinearizationScheme scheme;
  const SentenceClassifier& da_classifier;
  const SentenceClassifier& emotion_classifier;
  const EmbeddingTable& embeddings;
  const Segmenter& segmenter;
};

struct EvalOptions {
  EvalMode mode = EvalMode::kPlanned;
  DecodingPolicy policy;
  std::uint64_t seed = 0;
  TokenUnit unit = TokenUnit::kWord;
  // Only the first max_samples Machine turns; 0 means all.
  std::size_t max_samples = 0;
};

// Every Machine utterance of the original-role view of each session, with
// the gold history (texts and annotations) as the dialogue state. In
// GOLD_VARIABLES mode the gold Machine annotation overrides the plan. Response
// labels come from split_sentences and the classifiers. Throws
// ValidationError on an empty test set or unannotated sessions.
MetricReport evaluate_generation(const EvalResources& resources, const std::vector<AnnotatedSession>& sessions,
                                 const EvalOptions& options);

// Perplexity of Machine utterance tokens (content and [SEP]) of the
// original-role views linearized with gold variables, truncated to the
// model's max_positions.
double machine_utterance_ppl(const LanguageModel& model, const Vocabulary& vocab, const LinearizationScheme& scheme,
                             const std::vector<AnnotatedSession>& sessions);

}  // namespace semdial
