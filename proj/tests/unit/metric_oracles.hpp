#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "semdial/eval.hpp"

// Straight-line reference implementations of the evaluation metrics: no maps,
// explicit counting, nothing shared with the library beyond table lookups.
namespace semdial::testing {

using Tokens = std::vector<std::string>;

inline std::size_t occurrences(const Tokens& seq, const Tokens& gram) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + gram.size() <= seq.size(); ++i) {
    bool eq = true;
    for (std::size_t k = 0; k < gram.size(); ++k) eq = eq && seq[i + k] == gram[k];
    c += eq;
  }
  return c;
}

inline double oracle_bleu(const Tokens& h, const Tokens& r, int n) {
  if (h.empty()) return 0.0;
  double product = 1.0;
  for (int k = 1; k <= n; ++k) {
    double matched = 0.0, total = 0.0;
    for (std::size_t i = 0; i + k <= h.size(); ++i) {
      const Tokens gram(h.begin() + i, h.begin() + i + k);
      // Each hypothesis position gets a share of the clipped count.
      const double in_h = static_cast<double>(occurrences(h, gram));
      const double in_r = static_cast<double>(occurrences(r, gram));
      matched += std::min(in_h, in_r) / in_h;
      total += 1.0;
    }
    double p = k == 1 ? matched / total : (matched + 1.0) / (total + 1.0);
    if (k == 1 && matched == 0.0) return 0.0;
    product *= p;
  }
  const double bp = h.size() >= r.size() ? 1.0 : std::exp(1.0 - double(r.size()) / double(h.size()));
  return bp * std::pow(product, 1.0 / n);
}

inline double oracle_distinct(const std::vector<Tokens>& hs, int n) {
  std::vector<Tokens> seen;
  double total = 0.0;
  for (const auto& h : hs) {
    for (std::size_t i = 0; i + n <= h.size(); ++i) {
      Tokens gram(h.begin() + i, h.begin() + i + n);
      total += 1.0;
      if (std::find(seen.begin(), seen.end(), gram) == seen.end()) seen.push_back(gram);
    }
  }
  return total == 0.0 ? 0.0 : seen.size() / total;
}

inline double oracle_label_f1(const std::vector<Tokens>& pred, const std::vector<Tokens>& gold,
                              const Tokens& labels) {
  double num = 0.0, den = 0.0;
  for (const auto& l : labels) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool p = std::count(pred[i].begin(), pred[i].end(), l) > 0;
      const bool g = std::count(gold[i].begin(), gold[i].end(), l) > 0;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
      support += g;
    }
    if (support == 0) continue;
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp / (tp + fn);
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    num += support * f1;
    den += support;
  }
  return num / den;
}

// Mean over samples of the set F1 of phrases; two empty sets agree fully.
inline double oracle_topical_f1(const std::vector<std::vector<Phrase>>& pred,
                                const std::vector<std::vector<Phrase>>& gold) {
  double sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::vector<Phrase> p, g;
    for (const auto& x : pred[i]) {
      if (std::find(p.begin(), p.end(), x) == p.end()) p.push_back(x);
    }
    for (const auto& x : gold[i]) {
      if (std::find(g.begin(), g.end(), x) == g.end()) g.push_back(x);
    }
    if (p.empty() && g.empty()) {
      sum += 1.0;
      continue;
    }
    double tp = 0;
    for (const auto& x : p) tp += std::find(g.begin(), g.end(), x) != g.end();
    sum += p.size() + g.size() == 0 ? 0.0 : 2.0 * tp / double(p.size() + g.size());
  }
  return sum / double(gold.size());
}

struct OracleEmbedding {
  double average = 0.0;
  double extreme = 0.0;
};

// Mean vectors and per-dimension largest-magnitude values, compared by
// cosine mapped to [0, 1].
inline OracleEmbedding oracle_embedding(const Tokens& h, const Tokens& r, const EmbeddingTable& table) {
  const std::size_t d = table.dimension();
  std::vector<double> hm(d, 0), rm(d, 0), hx(d, 0), rx(d, 0);
  const auto accumulate = [&](const Tokens& words, std::vector<double>& mean, std::vector<double>& ext) {
    for (const auto& w : words) {
      const auto v = table.lookup(w);
      for (std::size_t i = 0; i < d; ++i) {
        mean[i] += v[i] / double(words.size());
        if (std::abs(v[i]) > std::abs(ext[i]) || (std::abs(v[i]) == std::abs(ext[i]) && v[i] > ext[i])) ext[i] = v[i];
      }
    }
  };
  accumulate(h, hm, hx);
  accumulate(r, rm, rx);
  const auto cosine = [d](const std::vector<double>& x, const std::vector<double>& y) {
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t i = 0; i < d; ++i) {
      xy += x[i] * y[i];
      xx += x[i] * x[i];
      yy += y[i] * y[i];
    }
    return (1.0 + xy / (std::sqrt(xx) * std::sqrt(yy))) / 2.0;
  };
  return {cosine(hm, rm), cosine(hx, rx)};
}

inline Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len, std::size_t alphabet) {
  Tokens t(rng() % (max_len + 1));
  for (auto& x : t) x = std::string(1, static_cast<char>('a' + rng() % alphabet));
  return t;
}

}  // namespace semdial::testing
