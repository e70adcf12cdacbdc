#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semdial/linearize.hpp"
#include "semdial/tokenizer.hpp"
#include "semdial/transformer.hpp"

namespace semdial {

// Incremental view of a language model over one growing sequence.
class ModelCursor {
 public:
  virtual ~ModelCursor() = default;
  virtual void append(TokenId id, TokenType type) = 0;
  // Non-negative, sums to 1 over the vocabulary. Requires length() >= 1.
  virtual std::vector<double> next_token_distribution() = 0;
  virtual std::size_t length() const = 0;
};

// The decoder's only view of a model. Implementations are read-only after
// construction, so cursors of one model may be used from several threads.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t max_positions() const = 0;
  virtual std::unique_ptr<ModelCursor> open() const = 0;
};

// Stateless form: distribution after the whole prefix. Throws
// ValidationError unless 1 <= prefix length < max_positions.
std::vector<double> next_token_distribution(const LanguageModel& model, std::span<const TokenId> ids,
                                            std::span<const TokenType> types);

struct ModelCheckpoint {
  static constexpr std::string_view kFormatTag = "SEMDIAL-CKPT";
  static constexpr int kFormatVersion = 1;

  ModelConfig config;
  LinearizationScheme scheme;
  std::vector<std::string> vocabulary;  // every token, by id
  std::string tokenizer_fingerprint;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  std::vector<float> parameters;

  Vocabulary vocab() const;
  // Throws ValidationError when `vocab` is not the tokenizer this checkpoint
  // was trained with.
  void check_tokenizer(const Vocabulary& vocab) const;

  // Tag line, one JSON header line, then the float32 payload.
  void save(const std::filesystem::path& path) const;
  static ModelCheckpoint load(const std::filesystem::path& path);
};

class TransformerModel : public LanguageModel {
 public:
  explicit TransformerModel(const ModelCheckpoint& ckpt);
  explicit TransformerModel(Transformer<float> net) : net_(std::move(net)) {}

  std::size_t vocab_size() const override { return net_.config().vocab_size; }
  std::size_t max_positions() const override { return net_.config().max_positions; }
  std::unique_ptr<ModelCursor> open() const override;

  const Transformer<float>& network() const { return net_; }
  Transformer<float>& network() { return net_; }

 private:
  Transformer<float> net_;
};

enum class PplScope { kAllMasked, kMachineUtteranceOnly };

// exp(mean cross-entropy) over in-scope supervised positions. Throws
// ValidationError when no position is in scope.
double evaluate_ppl(const Transformer<float>& net, const std::vector<LinearizedExample>& examples,
                    PplScope scope);

struct TrainSchedule {
  std::size_t batch_size = 24;
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 1.0;
  std::size_t validate_every = 5000;
  std::size_t patience = 5;      // validations without improvement before halving
  std::size_t max_halvings = 3;  // stop at the next stall after this many halvings
  std::size_t max_steps = 0;     // 0 means no step limit
  std::optional<double> target_valid_ppl;  // stop once validation PPL is below

  void validate() const;
};

nlohmann::ordered_json schedule_to_json(const TrainSchedule& s);
TrainSchedule schedule_from_json(const nlohmann::json& j);

struct TrainLogRecord {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean over steps since the previous record
  double valid_ppl = 0.0;
  double lr = 0.0;
};

nlohmann::ordered_json log_record_to_json(const TrainLogRecord& r);

struct TrainResult {
  ModelCheckpoint checkpoint;  // parameters of the best validation
  std::vector<TrainLogRecord> log;
  std::size_t steps = 0;
  double best_valid_ppl = 0.0;
  std::string stop_reason;
};

// Adam on the mean masked cross-entropy of each batch, with global-norm
// gradient clipping. Parameters and batch order derive from config.seed.
// Throws Error with a diagnostic when the loss becomes non-finite.
TrainResult train(const std::vector<LinearizedExample>& train_examples,
                  const std::vector<LinearizedExample>& valid_examples, const ModelConfig& config,
                  const TrainSchedule& schedule, const Vocabulary& vocab, const LinearizationScheme& scheme,
                  const std::function<void(const TrainLogRecord&)>& on_validation = {});

// Mean masked cross-entropy of one batch and its gradient, as used by train().
double batch_loss_and_gradient(const Transformer<float>& net, std::span<const LinearizedExample* const> batch,
                               std::vector<float>& grad, std::mt19937_64* dropout_rng);

}  // namespace semdial
