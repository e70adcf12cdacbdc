#include "semdial/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "semdial/errors.hpp"
#include "semdial/eval.hpp"
#include "semdial/service.hpp"
#include "semdial/text.hpp"
#include "semdial/toy.hpp"

namespace semdial {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return text::hex64(text::fnv1a64(buf.str()));
}

fs::path resolve_checkpoint(const std::string& arg) {
  std::vector<fs::path> candidates = {arg, fs::path(arg) / "model.ckpt"};
  if (const char* cache = std::getenv(kCacheDirEnv)) {
    candidates.push_back(fs::path(cache) / arg);
    candidates.push_back(fs::path(cache) / arg / "model.ckpt");
  }
  for (const auto& c : candidates) {
    if (fs::is_regular_file(c)) return c;
  }
  throw IoError("no checkpoint at '" + arg + "'" +
                (std::getenv(kCacheDirEnv) ? std::string(" (cache directory searched too)") : std::string()));
}

namespace {

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 1);
  }
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

// Collects what a run read and wrote; written last.
class Manifest {
 public:
  explicit Manifest(std::string subcommand) { doc_["subcommand"] = std::move(subcommand); }
  ordered_json& settings() { return doc_["settings"]; }
  void input(const fs::path& p) { inputs_[p.string()] = fingerprint_of(p); }
  void output(const fs::path& p) { outputs_[p.string()] = fingerprint_of(p); }
  void write(const fs::path& path) {
    doc_["inputs"] = inputs_;
    doc_["outputs"] = outputs_;
    write_text(path, doc_.dump(2) + "\n");
  }

 private:
  static ordered_json fingerprint_of(const fs::path& p) {
    if (fs::is_directory(p)) {
      ordered_json files;
      std::vector<fs::path> entries;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file()) entries.push_back(e.path());
      }
      std::sort(entries.begin(), entries.end());
      for (const auto& e : entries) files[e.filename().string()] = file_fingerprint(e);
      return files;
    }
    return file_fingerprint(p);
  }

  ordered_json doc_;
  ordered_json inputs_ = ordered_json::object();
  ordered_json outputs_ = ordered_json::object();
};

// Decoding-time switches shared by generate, eval, and serve.
struct DecodeFlags {
  std::string policy_path;
  bool no_understanding = false;
  bool no_planning = false;
  bool no_repetition_constraint = false;
  bool no_topical_min_length = false;
  bool show_policy = false;

  void add_to(CLI::App* app) {
    app->add_option("--policy", policy_path, "Decoding policy JSON; absent fields keep their defaults")
        ->check(CLI::ExistingFile);
    add_ablation_flags(app);
    app->add_flag("--show-policy", show_policy, "Print the effective decoding policy and exit");
  }

  void add_ablation_flags(CLI::App* app) {
    app->add_flag("--no-understanding", no_understanding, "Drop the understanding stage");
    app->add_flag("--no-planning", no_planning, "Drop the planning stage");
    app->add_flag("--no-repetition-constraint", no_repetition_constraint,
                  "Allow repeated n-grams in topical plans");
    app->add_flag("--no-topical-min-length", no_topical_min_length, "No minimum length for topical plans");
  }

  DecodingPolicy resolve() const {
    DecodingPolicy p = policy_path.empty() ? DecodingPolicy{} : load_policy(policy_path);
    if (no_understanding) p.use_understanding = false;
    if (no_planning) p.use_planning = false;
    if (no_repetition_constraint) p.planning.repetition.enabled = false;
    if (no_topical_min_length) p.planning.bounds(VariableKey::kTopical).min_len = 0;
    p.validate();
    return p;
  }

  ordered_json ablations() const {
    ordered_json j;
    j["no_understanding"] = no_understanding;
    j["no_planning"] = no_planning;
    j["no_repetition_constraint"] = no_repetition_constraint;
    j["no_topical_min_length"] = no_topical_min_length;
    return j;
  }
};

struct LoadedCheckpoint {
  fs::path path;
  ModelCheckpoint checkpoint;
  Vocabulary vocab;
  std::shared_ptr<TransformerModel> model;
};

LoadedCheckpoint load_checkpoint(const std::string& arg) {
  LoadedCheckpoint c;
  c.path = resolve_checkpoint(arg);
  c.checkpoint = ModelCheckpoint::load(c.path);
  c.vocab = c.checkpoint.vocab();
  c.model = std::make_shared<TransformerModel>(c.checkpoint);
  return c;
}

std::string jsonl(const std::vector<ordered_json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  return s;
}

// ---------------------------------------------------------------------------

struct ToyCmd {
  ToyOptions options;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("toy", "Write the synthetic toy corpus and sentence-classifier data");
    c->add_option("--out", out, "Output directory")->required();
    c->add_option("--sessions", options.sessions, "Number of sessions (at most 200)");
    c->add_option("--exchanges", options.exchanges, "Human/Machine pairs per session");
    c->add_option("--seed", options.seed, "Generator seed");
  }

  int run(std::ostream& o) const {
    const auto toy = generate_toy_corpus(options);
    const fs::path dir = out;
    save_split(toy.split, dir);
    save_labeled_sentences(toy.dialogue_act_sentences, dir / "dialogue_acts.tsv");
    save_labeled_sentences(toy.emotion_sentences, dir / "emotions.tsv");
    // The same sessions with text only, as input for `annotate`.
    std::vector<AnnotatedSession> raw;
    for (const auto* part : {&toy.split.train, &toy.split.valid, &toy.split.test}) {
      for (auto s : *part) {
        for (auto& u : s.utterances) {
          u.sentences.clear();
          u.annotation.reset();
        }
        raw.push_back(std::move(s));
      }
    }
    save_corpus(raw, dir / "raw.jsonl");

    Manifest m("toy");
    m.settings()["sessions"] = options.sessions;
    m.settings()["exchanges"] = options.exchanges;
    m.settings()["seed"] = options.seed;
    for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "dialogue_acts.tsv", "emotions.tsv", "raw.jsonl"}) {
      m.output(dir / f);
    }
    m.write(dir / "manifest.json");
    o << "wrote " << toy.split.train.size() << "/" << toy.split.valid.size() << "/" << toy.split.test.size()
      << " sessions to " << dir.string() << "\n";
    return 0;
  }
};

struct TrainClassifierCmd {
  std::string data;
  std::string task;
  std::string out;
  ClassifierOptions options;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train-classifier", "Train a sentence classifier on label<TAB>sentence data");
    c->add_option("--data", data, "Labeled sentences")->required()->check(CLI::ExistingFile);
    c->add_option("--task", task, "dialogue_act or emotion")
        ->required()
        ->check(CLI::IsMember({"dialogue_act", "emotion"}));
    c->add_option("--out", out, "Classifier file")->required();
    c->add_option("--epochs", options.epochs);
    c->add_option("--learning-rate", options.learning_rate);
    c->add_option("--l2", options.l2);
    c->add_option("--seed", options.seed);
  }

  int run(std::ostream& o) const {
    const auto examples = load_labeled_sentences(data);
    const auto clf = SentenceClassifier::train(
        examples, task == "dialogue_act" ? dialogue_act_label_set() : emotion_label_set(), options);
    clf.save(out);
    Manifest m("train-classifier");
    m.settings()["task"] = task;
    m.settings()["epochs"] = options.epochs;
    m.settings()["learning_rate"] = options.learning_rate;
    m.settings()["l2"] = options.l2;
    m.settings()["seed"] = options.seed;
    m.input(data);
    m.output(out);
    m.write(out + ".manifest.json");
    o << "training accuracy " << clf.metadata().training_accuracy << " on " << examples.size() << " sentences\n";
    return 0;
  }
};

struct AnnotateCmd {
  std::string corpus;
  std::size_t vocab_size = 6000;
  std::size_t max_phrase_length = 1;
  std::string da_clf;
  std::string emo_clf;
  std::string stoplist;
  std::string background;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("annotate", "Fill sentences, dialogue acts, emotions, and topical words");
    c->add_option("--corpus", corpus, "Session file")->required()->check(CLI::ExistingFile);
    c->add_option("--vocab-size", vocab_size, "Topical vocabulary size");
    c->add_option("--max-phrase-length", max_phrase_length, "Longest topical phrase in tokens");
    c->add_option("--da-clf", da_clf, "Dialogue-act classifier")->required()->check(CLI::ExistingFile);
    c->add_option("--emo-clf", emo_clf, "Emotion classifier")->required()->check(CLI::ExistingFile);
    c->add_option("--stoplist", stoplist, "Stop tokens, one per line")->check(CLI::ExistingFile);
    c->add_option("--background", background, "Background documents, one per line")->check(CLI::ExistingFile);
    c->add_option("--out", out, "Annotated session file")->required();
  }

  int run(std::ostream& o) const {
    const auto sessions = load_corpus_file(corpus);
    TopicalOptions topts;
    topts.max_phrase_length = max_phrase_length;
    if (!stoplist.empty()) topts.stoplist = load_stoplist(stoplist);
    if (!background.empty()) {
      std::ifstream in(background);
      std::string line;
      while (std::getline(in, line)) topts.background_documents.push_back(line);
    }
    const auto topical = build_topical_vocabulary(sessions, vocab_size, topts);
    const auto da = SentenceClassifier::load(da_clf);
    const auto emo = SentenceClassifier::load(emo_clf);
    const auto annotated = annotate_corpus(sessions, topical, da, emo);
    save_corpus(annotated, out);
    const fs::path vocab_path = out + ".topical.tsv";
    topical.save(vocab_path);

    Manifest m("annotate");
    m.settings()["vocab_size"] = vocab_size;
    m.settings()["max_phrase_length"] = max_phrase_length;
    for (const auto& p : {corpus, da_clf, emo_clf, stoplist, background}) {
      if (!p.empty()) m.input(p);
    }
    m.output(out);
    m.output(vocab_path);
    m.write(out + ".manifest.json");
    o << "annotated " << annotated.size() << " sessions; topical vocabulary of " << topical.size() << " phrases\n";
    return 0;
  }
};

struct StatsCmd {
  std::string corpus;
  std::string split = "train";
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("stats", "Dataset statistics and label transition matrices");
    c->add_option("--corpus", corpus, "Session file or split directory")->required()->check(CLI::ExistingPath);
    c->add_option("--split", split, "Split when --corpus is a directory")
        ->check(CLI::IsMember({"train", "valid", "test"}));
    c->add_option("--out", out, "Output directory")->required();
  }

  int run(std::ostream& o) const {
    const auto sessions = load_corpus(corpus, split == "train" ? Split::kTrain : split == "valid" ? Split::kValid : Split::kTest);
    ordered_json j;
    j["stats"] = stats_to_json(corpus_stats(sessions));
    j["dialogue_act_transitions"] = transition_to_json(transition_matrix(sessions, LabelVariable::kDialogueAct));
    j["emotion_transitions"] = transition_to_json(transition_matrix(sessions, LabelVariable::kEmotion));
    const fs::path dir = out;
    write_text(dir / "stats.json", j.dump(2) + "\n");
    Manifest m("stats");
    m.settings()["split"] = split;
    m.input(corpus);
    m.output(dir / "stats.json");
    m.write(dir / "manifest.json");
    o << j["stats"].dump(2) << "\n";
    return 0;
  }
};

struct TrainCmd {
  std::string corpus;
  std::string out;
  std::string config_path;
  std::string schedule_path;
  std::uint64_t seed = 0;
  std::size_t min_count = 1;
  ModelConfig config;
  TrainSchedule schedule;
  std::size_t max_sequence_length = 512;
  double target_ppl = 0.0;
  DecodeFlags ablation;
  CLI::App* cmd = nullptr;

  void add(CLI::App& app) {
    cmd = app.add_subcommand("train", "Train the dialogue model on linearized sessions");
    cmd->add_option("--corpus", corpus, "Session file (also used for validation) or split directory")
        ->required()
        ->check(CLI::ExistingPath);
    cmd->add_option("--out", out, "Output directory; defaults to the cache directory");
    cmd->add_option("--seed", seed, "Seed for initialization and batch order");
    cmd->add_option("--config", config_path, "Model config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--schedule", schedule_path, "Training schedule JSON")->check(CLI::ExistingFile);
    cmd->add_option("--min-count", min_count, "Minimum token count for the vocabulary");
    cmd->add_option("--layers", config.layers);
    cmd->add_option("--heads", config.heads);
    cmd->add_option("--hidden", config.hidden_dim);
    cmd->add_option("--max-positions", config.max_positions);
    cmd->add_option("--dropout", config.dropout);
    cmd->add_option("--max-sequence-length", max_sequence_length);
    cmd->add_option("--batch-size", schedule.batch_size);
    cmd->add_option("--learning-rate", schedule.learning_rate);
    cmd->add_option("--validate-every", schedule.validate_every);
    cmd->add_option("--patience", schedule.patience);
    cmd->add_option("--max-steps", schedule.max_steps);
    cmd->add_option("--target-ppl", target_ppl, "Stop once validation perplexity is below");
    ablation.add_ablation_flags(cmd);
  }

  bool given(const std::string& flag) const { return cmd->count(flag) > 0; }

  int run(std::ostream& o, std::ostream& e) const {
    ModelConfig c = config_path.empty() ? ModelConfig{} : config_from_json(read_json_file(config_path));
    TrainSchedule s = schedule_path.empty() ? TrainSchedule{} : schedule_from_json(read_json_file(schedule_path));
    if (given("--layers")) c.layers = config.layers;
    if (given("--heads")) c.heads = config.heads;
    if (given("--hidden")) c.hidden_dim = config.hidden_dim;
    if (given("--max-positions")) c.max_positions = config.max_positions;
    if (given("--dropout")) c.dropout = config.dropout;
    if (given("--batch-size")) s.batch_size = schedule.batch_size;
    if (given("--learning-rate")) s.learning_rate = schedule.learning_rate;
    if (given("--validate-every")) s.validate_every = schedule.validate_every;
    if (given("--patience")) s.patience = schedule.patience;
    if (given("--max-steps")) s.max_steps = schedule.max_steps;
    if (given("--target-ppl")) s.target_valid_ppl = target_ppl;
    c.seed = seed;

    std::vector<AnnotatedSession> train_sessions, valid_sessions;
    if (fs::is_directory(corpus)) {
      auto split = load_split(corpus);
      train_sessions = std::move(split.train);
      valid_sessions = std::move(split.valid);
    } else {
      train_sessions = load_corpus_file(corpus);
    }
    const auto vocab = Vocabulary::build(train_sessions, min_count);
    c.vocab_size = vocab.size();
    LinearizationScheme scheme;
    scheme.max_sequence_length = std::min(max_sequence_length, c.max_positions);
    scheme.include_understanding = !ablation.no_understanding;
    scheme.include_planning = !ablation.no_planning;

    fs::path dir = out;
    if (dir.empty()) {
      const char* cache = std::getenv(kCacheDirEnv);
      if (!cache) throw ValidationError("train needs --out or " + std::string(kCacheDirEnv));
      dir = fs::path(cache) / ("train-seed" + std::to_string(seed));
    }
    fs::create_directories(dir);

    const auto train_examples = linearize_corpus(train_sessions, vocab, scheme);
    const auto valid_examples = linearize_corpus(valid_sessions, vocab, scheme);
    auto result = train(train_examples, valid_examples, c, s, vocab, scheme, [&](const TrainLogRecord& r) {
      e << "step " << r.step << " loss " << r.train_loss << " valid ppl " << r.valid_ppl << " lr " << r.lr << "\n";
    });
    result.checkpoint.metadata["ablations"] = ablation.ablations();
    result.checkpoint.save(dir / "model.ckpt");
    vocab.save(dir / "vocab.txt");
    std::vector<ordered_json> log;
    for (const auto& r : result.log) log.push_back(log_record_to_json(r));
    write_text(dir / "train_log.jsonl", jsonl(log));

    Manifest m("train");
    m.settings()["seed"] = seed;
    m.settings()["config"] = config_to_json(c);
    m.settings()["schedule"] = schedule_to_json(s);
    m.settings()["scheme"] = scheme_to_json(scheme);
    m.settings()["min_count"] = min_count;
    m.settings()["ablations"] = ablation.ablations();
    m.input(corpus);
    for (const char* f : {"model.ckpt", "vocab.txt", "train_log.jsonl"}) m.output(dir / f);
    m.write(dir / "manifest.json");
    o << "best validation ppl " << result.best_valid_ppl << " after " << result.steps << " steps ("
      << result.stop_reason << "); checkpoint " << (dir / "model.ckpt").string() << "\n";
    return 0;
  }
};

Split parse_split_name(const std::string& s) {
  return s == "train" ? Split::kTrain : s == "valid" ? Split::kValid : Split::kTest;
}

struct GenerateCmd {
  std::string checkpoint;
  std::string corpus;
  std::string split = "test";
  std::string text;
  std::string context;
  std::string mode = "planned";
  std::string out;
  std::uint64_t seed = 0;
  std::size_t max_samples = 0;
  DecodeFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("generate", "Generate Machine turns with full traces");
    c->add_option("--checkpoint", checkpoint, "Checkpoint file, directory, or cache entry")->required();
    c->add_option("--corpus", corpus, "Sessions whose Machine turns are regenerated")->check(CLI::ExistingPath);
    c->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));
    c->add_option("--text", text, "A single Human utterance instead of a corpus");
    c->add_option("--context", context, "Context for --text");
    c->add_option("--mode", mode, "planned or gold (gold variables override the plan)")
        ->check(CLI::IsMember({"planned", "gold"}));
    c->add_option("--out", out, "Output directory")->required();
    c->add_option("--seed", seed);
    c->add_option("--max-samples", max_samples, "Only the first N Machine turns; 0 means all");
    flags.add_to(c);
  }

  int run(std::ostream& o) const {
    const auto policy = flags.resolve();
    if (flags.show_policy) {
      o << policy_to_json(policy).dump(2) << "\n";
      return 0;
    }
    if (corpus.empty() == text.empty()) throw ValidationError("generate needs exactly one of --corpus and --text");
    const auto ck = load_checkpoint(checkpoint);
    const Responder responder{*ck.model, ck.vocab, ck.checkpoint.scheme};
    std::vector<ordered_json> rows;
    if (!text.empty()) {
      DialogueState state{context, {Utterance{Speaker::kHuman, text, {}, std::nullopt}}};
      ordered_json row;
      row["trace"] = trace_to_json(respond(responder, state, policy, std::nullopt, seed));
      rows.push_back(row);
    } else {
      const auto sessions = load_corpus(corpus, parse_split_name(split));
      std::size_t n = 0;
      for (const auto& session : sessions) {
        const auto view = derive_training_views(session).front();
        for (std::size_t u = 1; u < view.utterances.size(); u += 2) {
          if (max_samples && n >= max_samples) break;
          DialogueState state{view.context, {view.utterances.begin(), view.utterances.begin() + static_cast<std::ptrdiff_t>(u)}};
          std::optional<SemanticAnnotation> plan;
          if (mode == "gold") plan = view.utterances[u].annotation;
          ordered_json row;
          row["session_id"] = session.session_id;
          row["utterance"] = u;
          row["reference"] = view.utterances[u].text;
          row["trace"] = trace_to_json(respond(responder, state, policy, plan, seed + n));
          rows.push_back(row);
          ++n;
        }
      }
    }
    const fs::path dir = out;
    write_text(dir / "traces.jsonl", jsonl(rows));
    Manifest m("generate");
    m.settings()["policy"] = policy_to_json(policy);
    m.settings()["ablations"] = flags.ablations();
    m.settings()["mode"] = mode;
    m.settings()["seed"] = seed;
    m.settings()["split"] = split;
    m.settings()["max_samples"] = max_samples;
    if (!text.empty()) {
      m.settings()["text"] = text;
      m.settings()["context"] = context;
    }
    m.input(ck.path);
    if (!corpus.empty()) m.input(corpus);
    m.output(dir / "traces.jsonl");
    m.write(dir / "manifest.json");
    if (!text.empty()) o << rows.front()["trace"]["response"].get<std::string>() << "\n";
    o << "wrote " << rows.size() << " traces to " << (dir / "traces.jsonl").string() << "\n";
    return 0;
  }
};

struct EvalCmd {
  std::string checkpoint;
  std::string corpus;
  std::string split = "test";
  std::string mode = "planned";
  std::string da_clf;
  std::string emo_clf;
  std::string embeddings;
  std::size_t embedding_dim = 64;
  std::uint64_t embedding_seed = 0;
  std::string unit = "word";
  std::string out;
  std::uint64_t seed = 0;
  std::size_t max_samples = 0;
  DecodeFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Generation, semantic, and understanding metrics");
    c->add_option("--checkpoint", checkpoint, "Checkpoint file, directory, or cache entry")->required();
    c->add_option("--corpus", corpus, "Test sessions")->required()->check(CLI::ExistingPath);
    c->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));
    c->add_option("--mode", mode)->check(CLI::IsMember({"planned", "gold"}));
    c->add_option("--da-clf", da_clf, "Dialogue-act classifier")->required()->check(CLI::ExistingFile);
    c->add_option("--emo-clf", emo_clf, "Emotion classifier")->required()->check(CLI::ExistingFile);
    c->add_option("--embeddings", embeddings, "Embedding table; default is a seeded random table")
        ->check(CLI::ExistingFile);
    c->add_option("--embedding-dim", embedding_dim);
    c->add_option("--embedding-seed", embedding_seed);
    c->add_option("--unit", unit, "Token unit for BLEU and Dist")->check(CLI::IsMember({"word", "char"}));
    c->add_option("--out", out, "Output directory")->required();
    c->add_option("--seed", seed);
    c->add_option("--max-samples", max_samples, "Only the first N Machine turns; 0 means all");
    flags.add_to(c);
  }

  int run(std::ostream& o) const {
    const auto policy = flags.resolve();
    if (flags.show_policy) {
      o << policy_to_json(policy).dump(2) << "\n";
      return 0;
    }
    const auto ck = load_checkpoint(checkpoint);
    const auto sessions = load_corpus(corpus, parse_split_name(split));
    const auto da = SentenceClassifier::load(da_clf);
    const auto emo = SentenceClassifier::load(emo_clf);
    EmbeddingTable table;
    if (!embeddings.empty()) {
      table = EmbeddingTable::load(embeddings);
    } else {
      const auto& tokens = ck.vocab.tokens();
      table = EmbeddingTable::random({tokens.begin() + static_cast<std::ptrdiff_t>(Vocabulary::kUnk) + 1, tokens.end()},
                                     embedding_dim, embedding_seed);
    }
    const LongestMatchSegmenter segmenter(table);
    const EvalResources res{*ck.model, ck.vocab, ck.checkpoint.scheme, da, emo, table, segmenter};
    EvalOptions opts;
    opts.mode = *parse_eval_mode(mode);
    opts.policy = policy;
    opts.seed = seed;
    opts.unit = unit == "word" ? TokenUnit::kWord : TokenUnit::kCharacter;
    opts.max_samples = max_samples;
    const auto report = evaluate_generation(res, sessions, opts);
    auto j = report_to_json(report, true);
    j["ablations"] = flags.ablations();

    const fs::path dir = out;
    write_text(dir / "report.json", j.dump(2) + "\n");
    Manifest m("eval");
    m.settings()["policy"] = policy_to_json(policy);
    m.settings()["ablations"] = flags.ablations();
    m.settings()["mode"] = mode;
    m.settings()["seed"] = seed;
    m.settings()["split"] = split;
    m.settings()["unit"] = unit;
    m.settings()["max_samples"] = max_samples;
    m.settings()["embedding_dim"] = embedding_dim;
    m.settings()["embedding_seed"] = embedding_seed;
    m.input(ck.path);
    m.input(corpus);
    m.input(da_clf);
    m.input(emo_clf);
    if (!embeddings.empty()) m.input(embeddings);
    m.output(dir / "report.json");
    m.write(dir / "manifest.json");
    ordered_json summary;
    summary["generation"] = j["generation"];
    summary["semantic"] = j["semantic"];
    summary["understanding"] = j["understanding"];
    o << summary.dump(2) << "\n";
    return 0;
  }
};

HttpService* g_http = nullptr;

extern "C" void stop_on_signal(int) {
  if (g_http) g_http->stop();
}

struct ServeCmd {
  std::string checkpoint;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  std::string snapshot;
  std::string out;
  DecodeFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("serve", "Run the HTTP inference service");
    c->add_option("--checkpoint", checkpoint, "Checkpoint; without one every session call fails with 503");
    c->add_option("--host", host);
    c->add_option("--port", port);
    c->add_option("--cors-origin", cors_origin, "Allowed browser origin");
    c->add_option("--snapshot", snapshot, "Session snapshot restored at start and written at shutdown");
    c->add_option("--out", out, "Directory for the run manifest")->required();
    flags.add_to(c);
  }

  int run(std::ostream& o) const {
    const auto policy = flags.resolve();
    if (flags.show_policy) {
      o << policy_to_json(policy).dump(2) << "\n";
      return 0;
    }
    std::optional<LoadedCheckpoint> ck;
    if (!checkpoint.empty()) ck = load_checkpoint(checkpoint);
    ServiceCore core(ck ? ck->model : nullptr, ck ? ck->vocab : Vocabulary{},
                     ck ? ck->checkpoint.scheme : LinearizationScheme{}, policy);
    if (!snapshot.empty() && fs::exists(snapshot) && ck) core.restore(snapshot);

    const fs::path dir = out;
    Manifest m("serve");
    m.settings()["policy"] = policy_to_json(policy);
    m.settings()["ablations"] = flags.ablations();
    m.settings()["host"] = host;
    m.settings()["port"] = port;
    m.settings()["cors_origin"] = cors_origin;
    if (ck) m.input(ck->path);
    m.write(dir / "manifest.json");

    HttpService http(core, cors_origin);
    g_http = &http;
    std::signal(SIGINT, stop_on_signal);
    std::signal(SIGTERM, stop_on_signal);
    o << "serving on http://" << host << ":" << port << std::endl;
    http.listen(host, port);
    g_http = nullptr;
    if (!snapshot.empty() && ck) core.snapshot(snapshot);
    return 0;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic-variable dialogue toolkit"};
  app.name(args.empty() ? "semdial" : args.front());
  app.require_subcommand(1);
  ToyCmd toy;
  TrainClassifierCmd train_classifier;
  AnnotateCmd annotate;
  StatsCmd stats;
  TrainCmd train_cmd;
  GenerateCmd generate;
  EvalCmd eval;
  ServeCmd serve;
  toy.add(app);
  train_classifier.add(app);
  annotate.add(app);
  stats.add(app);
  train_cmd.add(app);
  generate.add(app);
  eval.add(app);
  serve.add(app);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "toy") return toy.run(out);
    if (name == "train-classifier") return train_classifier.run(out);
    if (name == "annotate") return annotate.run(out);
    if (name == "stats") return stats.run(out);
    if (name == "train") return train_cmd.run(out, err);
    if (name == "generate") return generate.run(out);
    if (name == "eval") return eval.run(out);
    if (name == "serve") return serve.run(out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace semdial
