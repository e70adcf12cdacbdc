#include "semdial/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "semdial/text.hpp"

namespace semdial {

using nlohmann::json;
using nlohmann::ordered_json;

void ModelConfig::validate() const {
  if (vocab_size == 0 || layers == 0 || heads == 0 || hidden_dim == 0 || max_positions == 0 ||
      token_type_count == 0) {
    throw ValidationError("model sizes must be positive");
  }
  if (hidden_dim % heads != 0) throw ValidationError("hidden_dim must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

ordered_json config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["hidden_dim"] = c.hidden_dim;
  j["max_positions"] = c.max_positions;
  j["token_type_count"] = c.token_type_count;
  j["dropout"] = c.dropout;
  j["seed"] = c.seed;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.token_type_count = j.value("token_type_count", c.token_type_count);
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad model config: ") + e.what());
  }
  return c;
}

ParameterLayout::ParameterLayout(const ModelConfig& c) {
  const std::size_t d = c.hidden_dim;
  std::size_t at = 0;
  const auto take = [&](std::size_t n) {
    const std::size_t offset = at;
    at += n;
    return offset;
  };
  token_embedding = take(c.vocab_size * d);
  position_embedding = take(c.max_positions * d);
  type_embedding = take(c.token_type_count * d);
  for (std::size_t l = 0; l < c.layers; ++l) {
    Layer p{};
    p.ln1_gain = take(d);
    p.ln1_bias = take(d);
    p.w_qkv = take(d * 3 * d);
    p.b_qkv = take(3 * d);
    p.w_out = take(d * d);
    p.b_out = take(d);
    p.ln2_gain = take(d);
    p.ln2_bias = take(d);
    p.w_up = take(d * 4 * d);
    p.b_up = take(4 * d);
    p.w_down = take(4 * d * d);
    p.b_down = take(d);
    layers.push_back(p);
  }
  final_gain = take(d);
  final_bias = take(d);
  output_bias = take(c.vocab_size);
  total = at;
}

// ---------------------------------------------------------------------------
// Inference interface

namespace {

class TransformerCursor : public ModelCursor {
 public:
  explicit TransformerCursor(const Transformer<float>& net) : cursor_(net) {}
  void append(TokenId id, TokenType type) override { cursor_.append(id, type); }
  std::vector<double> next_token_distribution() override { return cursor_.next_token_distribution(); }
  std::size_t length() const override { return cursor_.length(); }

 private:
  Transformer<float>::Cursor cursor_;
};

}  // namespace

std::unique_ptr<ModelCursor> TransformerModel::open() const {
  return std::make_unique<TransformerCursor>(net_);
}

TransformerModel::TransformerModel(const ModelCheckpoint& ckpt) : net_(ckpt.config) {
  if (ckpt.parameters.size() != net_.parameters().size()) {
    throw ValidationError("checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                          " parameters, config needs " + std::to_string(net_.parameters().size()));
  }
  net_.parameters() = ckpt.parameters;
}

std::vector<double> next_token_distribution(const LanguageModel& model, std::span<const TokenId> ids,
                                            std::span<const TokenType> types) {
  if (ids.size() != types.size()) throw ValidationError("ids and types differ in length");
  if (ids.empty()) throw ValidationError("empty prefix");
  if (ids.size() >= model.max_positions()) {
    throw ValidationError("prefix of " + std::to_string(ids.size()) + " tokens leaves no room below max_positions " +
                          std::to_string(model.max_positions()));
  }
  auto cursor = model.open();
  for (std::size_t i = 0; i < ids.size(); ++i) cursor->append(ids[i], types[i]);
  return cursor->next_token_distribution();
}

// ---------------------------------------------------------------------------
// Checkpoints

Vocabulary ModelCheckpoint::vocab() const {
  if (vocabulary.size() < kSpecialTokenCount + 1) throw ValidationError("checkpoint vocabulary is truncated");
  for (std::size_t i = 0; i < kSpecialTokenCount; ++i) {
    if (vocabulary[i] != kSpecialTokenNames[i]) throw ValidationError("checkpoint vocabulary header mismatch");
  }
  Vocabulary v(std::vector<std::string>(vocabulary.begin() + kSpecialTokenCount + 1, vocabulary.end()));
  if (v.size() != vocabulary.size()) throw ValidationError("checkpoint vocabulary has duplicate tokens");
  return v;
}

void ModelCheckpoint::check_tokenizer(const Vocabulary& v) const {
  if (text::hex64(v.fingerprint()) != tokenizer_fingerprint) {
    throw ValidationError("tokenizer fingerprint " + text::hex64(v.fingerprint()) +
                          " does not match checkpoint fingerprint " + tokenizer_fingerprint);
  }
}

void ModelCheckpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  ordered_json header;
  header["config"] = config_to_json(config);
  header["scheme"] = scheme_to_json(scheme);
  header["tokenizer_fingerprint"] = tokenizer_fingerprint;
  header["vocabulary"] = vocabulary;
  header["metadata"] = metadata;
  header["parameter_count"] = parameters.size();
  out << kFormatTag << ' ' << kFormatVersion << '\n' << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(parameters.data()),
            static_cast<std::streamsize>(parameters.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

ModelCheckpoint ModelCheckpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string tag, header_line;
  std::getline(in, tag);
  const std::string expected = std::string(kFormatTag) + " " + std::to_string(kFormatVersion);
  if (tag != expected) {
    throw ParseError(path.string() + ": expected '" + expected + "', found '" + tag.substr(0, 40) + "'", 1);
  }
  std::getline(in, header_line);
  ModelCheckpoint ckpt;
  std::size_t count = 0;
  try {
    const auto header = ordered_json::parse(header_line);
    ckpt.config = config_from_json(header.at("config"));
    ckpt.scheme = scheme_from_json(header.at("scheme"));
    ckpt.tokenizer_fingerprint = header.at("tokenizer_fingerprint").get<std::string>();
    ckpt.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    ckpt.metadata = header.at("metadata");
    count = header.at("parameter_count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what(), 2);
  }
  ckpt.config.validate();
  if (count != ParameterLayout(ckpt.config).total) {
    throw ParseError(path.string() + ": parameter count does not match config", 2);
  }
  ckpt.parameters.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.parameters.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw ParseError(path.string() + ": truncated parameter payload", 3);
  ckpt.check_tokenizer(ckpt.vocab());
  return ckpt;
}

// ---------------------------------------------------------------------------
// Perplexity

double evaluate_ppl(const Transformer<float>& net, const std::vector<LinearizedExample>& examples,
                    PplScope scope) {
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<std::uint8_t> mask;
  for (const auto& ex : examples) {
    mask = ex.loss_mask;
    if (scope == PplScope::kMachineUtteranceOnly) {
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (ex.types[i] != TokenType::kMachineUtterance) mask[i] = 0;
      }
    }
    const auto loss = net.forward_backward(ex.ids, ex.types, ex.ids, mask);
    sum += loss.sum;
    count += loss.count;
  }
  if (count == 0) throw ValidationError("no supervised position in scope for perplexity");
  return std::exp(sum / static_cast<double>(count));
}

// ---------------------------------------------------------------------------
// Training

void TrainSchedule::validate() const {
  if (batch_size == 0 || validate_every == 0 || patience == 0) {
    throw ValidationError("batch_size, validate_every and patience must be positive");
  }
  if (!(learning_rate > 0.0) || !(grad_clip_norm > 0.0) || !(epsilon > 0.0)) {
    throw ValidationError("learning_rate, grad_clip_norm and epsilon must be positive");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in (0, 1)");
  }
}

ordered_json schedule_to_json(const TrainSchedule& s) {
  ordered_json j;
  j["batch_size"] = s.batch_size;
  j["learning_rate"] = s.learning_rate;
  j["beta1"] = s.beta1;
  j["beta2"] = s.beta2;
  j["epsilon"] = s.epsilon;
  j["grad_clip_norm"] = s.grad_clip_norm;
  j["validate_every"] = s.validate_every;
  j["patience"] = s.patience;
  j["max_halvings"] = s.max_halvings;
  j["max_steps"] = s.max_steps;
  j["target_valid_ppl"] = s.target_valid_ppl ? json(*s.target_valid_ppl) : json();
  return j;
}

TrainSchedule schedule_from_json(const json& j) {
  TrainSchedule s;
  try {
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.beta1 = j.value("beta1", s.beta1);
    s.beta2 = j.value("beta2", s.beta2);
    s.epsilon = j.value("epsilon", s.epsilon);
    s.grad_clip_norm = j.value("grad_clip_norm", s.grad_clip_norm);
    s.validate_every = j.value("validate_every", s.validate_every);
    s.patience = j.value("patience", s.patience);
    s.max_halvings = j.value("max_halvings", s.max_halvings);
    s.max_steps = j.value("max_steps", s.max_steps);
    if (j.contains("target_valid_ppl") && !j["target_valid_ppl"].is_null()) {
      s.target_valid_ppl = j["target_valid_ppl"].get<double>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad training schedule: ") + e.what());
  }
  s.validate();
  return s;
}

ordered_json log_record_to_json(const TrainLogRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["train_loss"] = r.train_loss;
  j["valid_ppl"] = r.valid_ppl;
  j["lr"] = r.lr;
  return j;
}

double batch_loss_and_gradient(const Transformer<float>& net, std::span<const LinearizedExample* const> batch,
                               std::vector<float>& grad, std::mt19937_64* dropout_rng) {
  grad.assign(net.parameters().size(), 0.0f);
  std::size_t total = 0;
  for (const auto* ex : batch) {
    for (std::size_t j = 1; j < ex->loss_mask.size(); ++j) total += ex->loss_mask[j] ? 1 : 0;
  }
  if (total == 0) return 0.0;
  const float scale = 1.0f / static_cast<float>(total);
  double sum = 0.0;
  for (const auto* ex : batch) {
    sum += net.forward_backward(ex->ids, ex->types, ex->ids, ex->loss_mask, grad.data(), scale, dropout_rng).sum;
  }
  return sum / static_cast<double>(total);
}

TrainResult train(const std::vector<LinearizedExample>& train_examples,
                  const std::vector<LinearizedExample>& valid_examples, const ModelConfig& config,
                  const TrainSchedule& schedule, const Vocabulary& vocab, const LinearizationScheme& scheme,
                  const std::function<void(const TrainLogRecord&)>& on_validation) {
  config.validate();
  schedule.validate();
  scheme.validate();
  if (config.vocab_size != vocab.size()) {
    throw ValidationError("config vocab_size " + std::to_string(config.vocab_size) + " differs from tokenizer size " +
                          std::to_string(vocab.size()));
  }
  if (config.max_positions < scheme.max_sequence_length) {
    throw ValidationError("max_positions must be at least the scheme's max_sequence_length");
  }
  if (train_examples.empty()) throw ValidationError("no training examples");
  const auto& valid = valid_examples.empty() ? train_examples : valid_examples;

  Transformer<float> net(config);
  net.initialize(config.seed);
  auto& theta = net.parameters();
  const std::size_t n_params = theta.size();
  std::vector<float> grad(n_params), m(n_params, 0.0f), v(n_params, 0.0f);
  std::vector<float> best = theta;

  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  double lr = schedule.learning_rate;
  double best_ppl = std::numeric_limits<double>::infinity();
  std::size_t stalls = 0;
  std::size_t halvings = 0;
  double loss_acc = 0.0;
  std::size_t loss_steps = 0;
  std::vector<const LinearizedExample*> batch;

  for (std::size_t step = 1;; ++step) {
    batch.clear();
    while (batch.size() < std::min(schedule.batch_size, order.size())) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(&train_examples[order[cursor++]]);
    }
    const double loss = batch_loss_and_gradient(net, batch, grad, &dropout_rng);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": batch loss " << loss << " at learning rate " << lr
          << "; lower the learning rate or check the examples";
      throw Error(msg.str());
    }
    double norm2 = 0.0;
    for (float g : grad) norm2 += static_cast<double>(g) * g;
    const double norm = std::sqrt(norm2);
    const float clip = norm > schedule.grad_clip_norm ? static_cast<float>(schedule.grad_clip_norm / norm) : 1.0f;
    const double t = static_cast<double>(step);
    const float alpha = static_cast<float>(lr * std::sqrt(1.0 - std::pow(schedule.beta2, t)) /
                                           (1.0 - std::pow(schedule.beta1, t)));
    const float b1 = static_cast<float>(schedule.beta1);
    const float b2 = static_cast<float>(schedule.beta2);
    const float eps = static_cast<float>(schedule.epsilon);
    for (std::size_t i = 0; i < n_params; ++i) {
      const float g = grad[i] * clip;
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      theta[i] -= alpha * m[i] / (std::sqrt(v[i]) + eps);
    }
    loss_acc += loss;
    ++loss_steps;

    const bool last = schedule.max_steps != 0 && step >= schedule.max_steps;
    if (step % schedule.validate_every == 0 || last) {
      TrainLogRecord rec;
      rec.step = step;
      rec.train_loss = loss_acc / static_cast<double>(loss_steps);
      rec.valid_ppl = evaluate_ppl(net, valid, PplScope::kAllMasked);
      rec.lr = lr;
      loss_acc = 0.0;
      loss_steps = 0;
      result.log.push_back(rec);
      if (on_validation) on_validation(rec);
      if (!std::isfinite(rec.valid_ppl)) {
        throw Error("validation perplexity is not finite at step " + std::to_string(step));
      }
      if (rec.valid_ppl < best_ppl) {
        best_ppl = rec.valid_ppl;
        best = theta;
        stalls = 0;
      } else if (++stalls >= schedule.patience) {
        if (halvings == schedule.max_halvings) {
          result.stop_reason = "no improvement after " + std::to_string(halvings) + " learning-rate halvings";
          result.steps = step;
          break;
        }
        lr *= 0.5;
        ++halvings;
        stalls = 0;
      }
      if (schedule.target_valid_ppl && rec.valid_ppl < *schedule.target_valid_ppl) {
        result.stop_reason = "validation perplexity below target";
        result.steps = step;
        break;
      }
    }
    if (last) {
      result.stop_reason = "max_steps reached";
      result.steps = step;
      break;
    }
  }

  auto& ckpt = result.checkpoint;
  ckpt.config = config;
  ckpt.scheme = scheme;
  ckpt.vocabulary = vocab.tokens();
  ckpt.tokenizer_fingerprint = text::hex64(vocab.fingerprint());
  ckpt.parameters = std::move(best);
  result.best_valid_ppl = best_ppl;
  ordered_json meta;
  meta["schedule"] = schedule_to_json(schedule);
  meta["steps"] = result.steps;
  meta["best_valid_ppl"] = best_ppl;
  meta["stop_reason"] = result.stop_reason;
  meta["train_examples"] = train_examples.size();
  meta["valid_examples"] = valid_examples.size();
  meta["log"] = ordered_json::array();
  for (const auto& r : result.log) meta["log"].push_back(log_record_to_json(r));
  ckpt.metadata = std::move(meta);
  return result;
}

}  // namespace semdial
