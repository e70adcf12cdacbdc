#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "semdial/decode.hpp"
#include "semdial/errors.hpp"

namespace semdial {

namespace {

constexpr TokenId kListSep = id_of(SpecialToken::kListSep);
constexpr TokenId kEokv = id_of(SpecialToken::kEokv);
constexpr TokenId kSep = id_of(SpecialToken::kSep);
constexpr TokenId kBoundary = -1;

bool is_content(std::size_t id) { return id > static_cast<std::size_t>(Vocabulary::kUnk); }

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

void normalize(std::vector<double>& p) {
  const double z = total(p);
  if (z > 0.0) {
    for (auto& x : p) x /= z;
  }
}

std::vector<double> one_hot(std::size_t size, TokenId id) {
  std::vector<double> p(size, 0.0);
  p[static_cast<std::size_t>(id)] = 1.0;
  return p;
}

// Phrases of a topical value span, each padded with n-1 boundary symbols.
std::vector<std::vector<TokenId>> padded_phrases(std::span<const TokenId> span, std::size_t n) {
  std::vector<std::vector<TokenId>> out(1, std::vector<TokenId>(n - 1, kBoundary));
  for (auto id : span) {
    if (id == kListSep) {
      out.emplace_back(n - 1, kBoundary);
    } else {
      out.back().push_back(id);
    }
  }
  return out;
}

std::map<std::vector<TokenId>, std::size_t> ngram_counts(std::span<const TokenId> span, std::size_t n) {
  std::map<std::vector<TokenId>, std::size_t> counts;
  for (const auto& phrase : padded_phrases(span, n)) {
    for (std::size_t i = 0; i + n <= phrase.size(); ++i) {
      ++counts[std::vector<TokenId>(phrase.begin() + static_cast<std::ptrdiff_t>(i),
                                    phrase.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
  }
  return counts;
}

}  // namespace

TokenId sample_token(std::span<const double> distribution, const StagePolicy& policy, std::mt19937_64& rng) {
  if (distribution.empty()) throw ValidationError("empty distribution");
  if (policy.sampling == SamplingMethod::kGreedy) {
    return static_cast<TokenId>(std::max_element(distribution.begin(), distribution.end()) - distribution.begin());
  }
  const double pmax = *std::max_element(distribution.begin(), distribution.end());
  if (!(pmax > 0.0)) throw ValidationError("distribution has no mass");
  std::vector<double> q(distribution.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (distribution[i] > 0.0) q[i] = std::exp((std::log(distribution[i]) - std::log(pmax)) / policy.temperature);
  }
  normalize(q);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] > q[b]; });
  std::size_t keep = std::min(policy.top_k, order.size());
  double cumulative = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    cumulative += q[order[i]];
    if (cumulative >= policy.top_p - 1e-12) {
      keep = i + 1;
      break;
    }
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += q[order[i]];
  const double u = uniform01(rng) * mass;
  double acc = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    acc += q[order[i]];
    if (u < acc) return static_cast<TokenId>(order[i]);
  }
  return static_cast<TokenId>(order[keep - 1]);
}

std::vector<double> apply_repetition_constraint(std::span<const TokenId> span, std::span<const double> distribution,
                                                std::size_t n) {
  if (n == 0) throw ValidationError("repetition n must be positive");
  std::vector<double> p(distribution.begin(), distribution.end());
  const auto counts = ngram_counts(span, n);
  const auto phrases = padded_phrases(span, n);
  const auto& current = phrases.back();
  std::vector<TokenId> gram(current.end() - static_cast<std::ptrdiff_t>(n - 1), current.end());
  gram.push_back(0);
  bool banned = false;
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (!is_content(t) || p[t] == 0.0) continue;
    gram.back() = static_cast<TokenId>(t);
    if (counts.count(gram)) {
      p[t] = 0.0;
      banned = true;
    }
  }
  if (!banned) return p;
  if (total(p) <= 0.0) return std::vector<double>(p.size(), 0.0);
  normalize(p);
  return p;
}

std::size_t count_repeated_ngrams(std::span<const TokenId> span, std::size_t n) {
  std::size_t repeats = 0;
  for (const auto& [gram, count] : ngram_counts(span, n)) repeats += count - 1;
  return repeats;
}

bool has_repeated_ngram(std::span<const TokenId> span, std::size_t n) { return count_repeated_ngrams(span, n) > 0; }

std::vector<double> constrain_value_step(std::span<const double> distribution, std::span<const TokenId> values,
                                         VariableKey key, const StagePolicy& policy) {
  const std::size_t size = distribution.size();
  const auto& b = policy.bounds(key);
  const std::size_t count = values.size();
  if (count >= b.max_len) return one_hot(size, kEokv);

  const bool after_sep = !values.empty() && values.back() == kListSep;
  const bool sep_legal = count > 0 && !after_sep && count + 1 < b.max_len;
  const bool eokv_legal = !after_sep && count >= b.min_len;

  std::vector<double> base(distribution.begin(), distribution.end());
  for (std::size_t t = 0; t <= static_cast<std::size_t>(Vocabulary::kUnk) && t < size; ++t) {
    if (t != static_cast<std::size_t>(kListSep) && t != static_cast<std::size_t>(kEokv)) base[t] = 0.0;
  }
  if (!sep_legal) base[kListSep] = 0.0;
  if (!eokv_legal) base[kEokv] = 0.0;

  std::vector<double> p = base;
  if (key == VariableKey::kTopical && policy.repetition.enabled) {
    p = apply_repetition_constraint(values, base, policy.repetition.n);
  }
  if (total(p) <= 0.0) {
    if (eokv_legal) return one_hot(size, kEokv);
    if (sep_legal) return one_hot(size, kListSep);
    // Nothing legal survives the constraint: relax it.
    p = base;
  }
  if (total(p) <= 0.0) {
    for (std::size_t t = 0; t < size; ++t) p[t] = is_content(t) ? 1.0 : 0.0;
  }
  normalize(p);
  return p;
}

std::vector<double> constrain_response_step(std::span<const double> distribution, std::size_t emitted,
                                            const StagePolicy& policy) {
  const std::size_t size = distribution.size();
  if (emitted >= policy.length.max_len) return one_hot(size, kSep);
  const bool sep_legal = emitted >= policy.length.min_len;
  std::vector<double> p(distribution.begin(), distribution.end());
  for (std::size_t t = 0; t <= static_cast<std::size_t>(Vocabulary::kUnk) && t < size; ++t) {
    if (t != static_cast<std::size_t>(kSep)) p[t] = 0.0;
  }
  if (!sep_legal) p[kSep] = 0.0;
  if (total(p) <= 0.0) {
    for (std::size_t t = 0; t < size; ++t) p[t] = is_content(t) ? 1.0 : 0.0;
    if (sep_legal) p[kSep] = 1.0;
  }
  normalize(p);
  return p;
}

}  // namespace semdial
