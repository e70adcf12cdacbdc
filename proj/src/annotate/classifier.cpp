#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "semdial/annotate.hpp"
#include "semdial/errors.hpp"
#include "semdial/text.hpp"

namespace semdial {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<LabeledSentence> load_labeled_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labeled sentences " + path.string());
  std::vector<LabeledSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected label<TAB>sentence",
                       line_no);
    }
    out.push_back({line.substr(tab + 1), line.substr(0, tab)});
  }
  return out;
}

void save_labeled_sentences(const std::vector<LabeledSentence>& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& d : data) out << d.label << '\t' << d.sentence << '\n';
}

std::vector<std::string> dialogue_act_label_set() {
  return {kDialogueActNames.begin(), kDialogueActNames.end()};
}

std::vector<std::string> emotion_label_set() { return {kEmotionNames.begin(), kEmotionNames.end()}; }

std::vector<std::string> feature_strings(std::string_view sentence) {
  auto tokens = text::segment(sentence);
  for (auto& t : tokens) {
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) {
      return static_cast<char>(std::tolower(c));
    });
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.push_back("w:" + tokens[i]);
    out.push_back("b:" + (i == 0 ? std::string("<s>") : tokens[i - 1]) + "_" + tokens[i]);
    // Character trigrams over code points of "<token>".
    std::vector<std::string> chars{"<"};
    std::size_t pos = 0;
    while (pos < tokens[i].size()) {
      std::string c;
      text::append_utf8(c, text::next_code_point(tokens[i], pos));
      chars.push_back(std::move(c));
    }
    chars.emplace_back(">");
    for (std::size_t k = 0; k + 3 <= chars.size(); ++k) {
      out.push_back("c:" + chars[k] + chars[k + 1] + chars[k + 2]);
    }
  }
  if (!tokens.empty()) out.push_back("b:" + tokens.back() + "_</s>");
  return out;
}

std::vector<std::size_t> SentenceClassifier::features(std::string_view sentence) const {
  std::vector<std::size_t> ids{0};
  for (const auto& f : feature_strings(sentence)) {
    auto it = feature_index_.find(f);
    if (it != feature_index_.end()) ids.push_back(it->second);
  }
  return ids;
}

SentenceClassifier SentenceClassifier::train(const std::vector<LabeledSentence>& data,
                                             std::vector<std::string> label_set,
                                             const ClassifierOptions& options) {
  if (label_set.empty()) throw ValidationError("empty label set");
  SentenceClassifier clf;
  clf.labels_ = std::move(label_set);
  std::map<std::string, std::size_t> label_index;
  for (std::size_t i = 0; i < clf.labels_.size(); ++i) {
    if (!label_index.emplace(clf.labels_[i], i).second) {
      throw ValidationError("duplicate label '" + clf.labels_[i] + "'");
    }
  }
  std::vector<std::size_t> targets;
  std::vector<std::size_t> per_label(clf.labels_.size(), 0);
  std::uint64_t fp = text::fnv1a64("semdial-classifier-data");
  for (const auto& d : data) {
    auto it = label_index.find(d.label);
    if (it == label_index.end()) throw ValidationError("unknown label '" + d.label + "'");
    targets.push_back(it->second);
    ++per_label[it->second];
    fp = text::fnv1a64(d.label + "\t" + d.sentence + "\n", fp);
  }
  for (std::size_t i = 0; i < per_label.size(); ++i) {
    if (per_label[i] == 0) throw ValidationError("label '" + clf.labels_[i] + "' has no example");
  }

  std::set<std::string> all;
  for (const auto& d : data) {
    for (auto& f : feature_strings(d.sentence)) all.insert(std::move(f));
  }
  clf.feature_index_.emplace("<bias>", 0);
  for (const auto& f : all) clf.feature_index_.emplace(f, clf.feature_index_.size());

  const std::size_t n_labels = clf.labels_.size();
  clf.weights_.assign(clf.feature_index_.size() * n_labels, 0.0);
  std::vector<std::vector<std::size_t>> xs;
  xs.reserve(data.size());
  for (const auto& d : data) xs.push_back(clf.features(d.sentence));

  // Plain SGD with a fixed, seeded visiting order per epoch.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::vector<double> scores(n_labels);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = options.learning_rate / (1.0 + 0.1 * static_cast<double>(epoch));
    for (std::size_t idx : order) {
      const auto& x = xs[idx];
      std::fill(scores.begin(), scores.end(), 0.0);
      for (auto f : x) {
        for (std::size_t k = 0; k < n_labels; ++k) scores[k] += clf.weights_[f * n_labels + k];
      }
      const double mx = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (auto& s : scores) z += (s = std::exp(s - mx));
      for (std::size_t k = 0; k < n_labels; ++k) {
        const double g = scores[k] / z - (k == targets[idx] ? 1.0 : 0.0);
        for (auto f : x) {
          double& w = clf.weights_[f * n_labels + k];
          w -= lr * (g + options.l2 * w);
        }
      }
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (clf.predict_index(data[i].sentence) == targets[i]) ++correct;
  }
  clf.metadata_.training_fingerprint = text::hex64(fp);
  clf.metadata_.training_examples = data.size();
  clf.metadata_.training_accuracy =
      data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  return clf;
}

std::size_t SentenceClassifier::predict_index(std::string_view sentence) const {
  const std::size_t n_labels = labels_.size();
  std::vector<double> scores(n_labels, 0.0);
  for (auto f : features(sentence)) {
    for (std::size_t k = 0; k < n_labels; ++k) scores[k] += weights_[f * n_labels + k];
  }
  // Lowest index wins ties.
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::vector<std::string> SentenceClassifier::classify(const std::vector<std::string>& sentences) const {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(predict(s));
  return out;
}

std::vector<std::string> classify_sentences(const SentenceClassifier& clf,
                                            const std::vector<std::string>& sentences) {
  return clf.classify(sentences);
}

void SentenceClassifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write classifier " + path.string());
  ordered_json header;
  header["label_set"] = labels_;
  ordered_json meta;
  meta["training_fingerprint"] = metadata_.training_fingerprint;
  meta["training_examples"] = metadata_.training_examples;
  meta["training_accuracy"] = metadata_.training_accuracy;
  meta["reported_accuracy"] = metadata_.reported_accuracy ? json(*metadata_.reported_accuracy) : json();
  header["metadata"] = meta;
  std::vector<std::string> names(feature_index_.size());
  for (const auto& [f, i] : feature_index_) names[i] = f;
  header["features"] = names;
  header["weights"] = weights_.size();
  out << kFormatTag << ' ' << kFormatVersion << '\n' << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(weights_.data()),
            static_cast<std::streamsize>(weights_.size() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path.string());
}

SentenceClassifier SentenceClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open classifier " + path.string());
  std::string tag_line, header_line;
  std::getline(in, tag_line);
  const std::string expected = std::string(kFormatTag) + " " + std::to_string(kFormatVersion);
  if (tag_line != expected) throw ParseError(path.string() + ": not a classifier checkpoint (v1)", 1);
  std::getline(in, header_line);
  SentenceClassifier clf;
  try {
    const auto header = json::parse(header_line);
    clf.labels_ = header.at("label_set").get<std::vector<std::string>>();
    const auto& meta = header.at("metadata");
    clf.metadata_.training_fingerprint = meta.value("training_fingerprint", "");
    clf.metadata_.training_examples = meta.value("training_examples", std::size_t{0});
    clf.metadata_.training_accuracy = meta.value("training_accuracy", 0.0);
    if (meta.contains("reported_accuracy") && !meta["reported_accuracy"].is_null()) {
      clf.metadata_.reported_accuracy = meta["reported_accuracy"].get<double>();
    }
    const auto names = header.at("features").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < names.size(); ++i) clf.feature_index_.emplace(names[i], i);
    clf.weights_.resize(header.at("weights").get<std::size_t>());
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad header: " + e.what(), 2);
  }
  if (clf.weights_.size() != clf.feature_index_.size() * clf.labels_.size()) {
    throw ParseError(path.string() + ": weight count does not match header", 2);
  }
  in.read(reinterpret_cast<char*>(clf.weights_.data()),
          static_cast<std::streamsize>(clf.weights_.size() * sizeof(double)));
  if (!in) throw ParseError(path.string() + ": truncated weights", 3);
  return clf;
}

}  // namespace semdial
