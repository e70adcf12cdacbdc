#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "semdial/errors.hpp"
#include "semdial/eval.hpp"
#include "semdial/text.hpp"

namespace semdial {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

bool contains_phrase(const std::vector<std::string>& tokens, const Phrase& phrase) {
  if (phrase.empty()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) != tokens.end();
}

}  // namespace

std::vector<std::string> metric_tokens(std::string_view s, TokenUnit unit) {
  if (unit == TokenUnit::kWord) return text::segment(s);
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t start = pos;
    const char32_t cp = text::next_code_point(s, pos);
    if (!text::is_space(cp)) out.emplace_back(s.substr(start, pos - start));
  }
  return out;
}

double bleu(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference, int n) {
  if (n < 1) throw ValidationError("BLEU order must be positive");
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto hyp = ngram_counts(hypothesis, static_cast<std::size_t>(k));
    const auto ref = ngram_counts(reference, static_cast<std::size_t>(k));
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [gram, count] : hyp) {
      total += count;
      const auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    if (k == 1) {
      if (matched == 0) return 0.0;
      log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
    } else {
      log_sum += std::log((static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0));
    }
  }
  const double c = static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(reference.size());
  const double log_bp = c >= r ? 0.0 : 1.0 - r / c;
  return std::exp(log_bp + log_sum / n);
}

double bleu(std::string_view hypothesis, std::string_view reference, int n, TokenUnit unit) {
  return bleu(metric_tokens(hypothesis, unit), metric_tokens(reference, unit), n);
}

double distinct_n(const std::vector<std::vector<std::string>>& hypotheses, int n) {
  if (n < 1) throw ValidationError("distinct-n order must be positive");
  std::set<Ngram> distinct;
  std::size_t total = 0;
  for (const auto& h : hypotheses) {
    for (const auto& [gram, count] : ngram_counts(h, static_cast<std::size_t>(n))) {
      distinct.insert(gram);
      total += count;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(total);
}

std::optional<double> topical_recall(std::string_view response, const std::vector<Phrase>& gold) {
  if (gold.empty()) return std::nullopt;
  const auto tokens = text::segment(response);
  std::size_t hit = 0;
  for (const auto& p : gold) hit += contains_phrase(tokens, p) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

double label_f1(const std::vector<std::vector<std::string>>& predicted,
                const std::vector<std::vector<std::string>>& gold, const std::vector<std::string>& label_set) {
  if (predicted.size() != gold.size()) throw ValidationError("label_f1 needs one prediction per gold sample");
  const std::size_t labels = label_set.size();
  std::vector<double> tp(labels, 0.0), fp(labels, 0.0), fn(labels, 0.0), support(labels, 0.0);
  const auto presence = [&](const std::vector<std::string>& list) {
    std::vector<bool> present(labels, false);
    for (const auto& l : list) {
      const auto it = std::find(label_set.begin(), label_set.end(), l);
      if (it == label_set.end()) throw ValidationError("label '" + l + "' is outside the label set");
      present[static_cast<std::size_t>(it - label_set.begin())] = true;
    }
    return present;
  };
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto p = presence(predicted[i]);
    const auto g = presence(gold[i]);
    for (std::size_t l = 0; l < labels; ++l) {
      if (g[l]) support[l] += 1.0;
      if (p[l] && g[l]) tp[l] += 1.0;
      if (p[l] && !g[l]) fp[l] += 1.0;
      if (!p[l] && g[l]) fn[l] += 1.0;
    }
  }
  double total_support = 0.0;
  for (double s : support) total_support += s;
  if (total_support == 0.0) throw ValidationError("label_f1 needs at least one gold label");
  double weighted = 0.0;
  for (std::size_t l = 0; l < labels; ++l) {
    if (support[l] == 0.0) continue;
    const double f1 = 2.0 * tp[l] / (2.0 * tp[l] + fp[l] + fn[l]);
    weighted += support[l] * f1;
  }
  return weighted / total_support;
}

double phrase_set_f1(const std::vector<Phrase>& predicted, const std::vector<Phrase>& gold) {
  const std::set<Phrase> p(predicted.begin(), predicted.end());
  const std::set<Phrase> g(gold.begin(), gold.end());
  if (p.empty() && g.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& x : p) common += g.count(x);
  return 2.0 * static_cast<double>(common) / static_cast<double>(p.size() + g.size());
}

double topical_f1(const std::vector<std::vector<Phrase>>& predicted, const std::vector<std::vector<Phrase>>& gold) {
  if (predicted.size() != gold.size()) throw ValidationError("topical_f1 needs one prediction per gold sample");
  if (gold.empty()) throw ValidationError("topical_f1 needs at least one sample");
  double sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) sum += phrase_set_f1(predicted[i], gold[i]);
  return sum / static_cast<double>(gold.size());
}

std::vector<std::string> label_names(const std::vector<DialogueAct>& acts) {
  std::vector<std::string> out;
  for (auto a : acts) out.emplace_back(to_string(a));
  return out;
}

std::vector<std::string> label_names(const std::vector<EmotionLabel>& emotions) {
  std::vector<std::string> out;
  for (auto e : emotions) out.emplace_back(to_string(e));
  return out;
}

}  // namespace semdial
