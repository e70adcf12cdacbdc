#include <cmath>
#include <fstream>
#include <sstream>

#include "semdial/errors.hpp"
#include "semdial/eval.hpp"
#include "semdial/text.hpp"
#include "semdial/transformer.hpp"

namespace semdial {

namespace {

std::size_t code_points(std::string_view s) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < s.size()) {
    text::next_code_point(s, pos);
    ++n;
  }
  return n;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// sqrt(aa * bb) rather than |a| * |b|: identical vectors give exactly 1.
double unit_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (aa == 0.0 || bb == 0.0) return 0.0;
  const double cos = std::clamp(dot(a, b) / std::sqrt(aa * bb), -1.0, 1.0);
  return (1.0 + cos) / 2.0;
}

}  // namespace

void EmbeddingTable::add(std::string phrase, std::vector<double> vector) {
  if (dimension_ == 0) dimension_ = vector.size();
  if (vector.size() != dimension_) {
    throw ValidationError("embedding for '" + phrase + "' has dimension " + std::to_string(vector.size()) +
                          ", expected " + std::to_string(dimension_));
  }
  max_code_points_ = std::max(max_code_points_, code_points(phrase));
  vectors_[std::move(phrase)] = std::move(vector);
}

std::vector<double> EmbeddingTable::lookup(std::string_view phrase) const {
  const auto it = vectors_.find(std::string(phrase));
  return it == vectors_.end() ? std::vector<double>(dimension_, 0.0) : it->second;
}

EmbeddingTable EmbeddingTable::random(const std::vector<std::string>& phrases, std::size_t dimension,
                                      std::uint64_t seed) {
  if (dimension == 0) throw ValidationError("embedding dimension must be positive");
  EmbeddingTable t(dimension);
  std::mt19937_64 rng(seed);
  for (const auto& p : phrases) {
    std::vector<double> v(dimension);
    for (auto& x : v) x = standard_normal(rng);
    t.add(p, std::move(v));
  }
  return t;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding table " + path.string());
  EmbeddingTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(' ') == std::string::npos) continue;
    std::istringstream fields(line);
    std::string phrase;
    fields >> phrase;
    std::vector<double> v;
    std::string value;
    while (fields >> value) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(value, &used));
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + value + "'", line_no);
      }
    }
    if (line_no == 1 && v.size() == 1 && phrase.find_first_not_of("0123456789") == std::string::npos) {
      t.dimension_ = static_cast<std::size_t>(v[0]);  // "count dimension" header
      continue;
    }
    if (v.empty()) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": missing vector", line_no);
    try {
      t.add(phrase, std::move(v));
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return t;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding table " + path.string());
  std::vector<const std::string*> keys;
  for (const auto& [k, _] : vectors_) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(), [](const auto* a, const auto* b) { return *a < *b; });
  out << vectors_.size() << ' ' << dimension_ << '\n';
  out.precision(17);
  for (const auto* k : keys) {
    out << *k;
    for (double x : vectors_.at(*k)) out << ' ' << x;
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> SurfaceSegmenter::segment(std::string_view s) const { return text::segment(s); }

std::vector<std::string> LongestMatchSegmenter::segment(std::string_view s) const {
  std::vector<std::string> out;
  std::vector<std::string> run;  // consecutive CJK code points
  const auto flush = [&] {
    std::size_t i = 0;
    while (i < run.size()) {
      std::size_t take = 1;
      std::string best = run[i];
      std::string candidate = run[i];
      for (std::size_t len = 2; len <= table_.max_phrase_code_points() && i + len <= run.size(); ++len) {
        candidate += run[i + len - 1];
        if (table_.contains(candidate)) {
          take = len;
          best = candidate;
        }
      }
      out.push_back(best);
      i += take;
    }
    run.clear();
  };
  for (auto& token : text::segment(s)) {
    std::size_t pos = 0;
    const char32_t cp = text::next_code_point(token, pos);
    if (pos == token.size() && text::is_cjk(cp)) {
      run.push_back(std::move(token));
    } else {
      flush();
      out.push_back(std::move(token));
    }
  }
  flush();
  return out;
}

EmbeddingScores embedding_scores(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference,
                                 const EmbeddingTable& table) {
  EmbeddingScores s;
  const std::size_t d = table.dimension();
  const auto pool = [&](const std::vector<std::string>& phrases, std::vector<double>& mean,
                        std::vector<double>& extreme) {
    mean.assign(d, 0.0);
    extreme.assign(d, 0.0);
    bool known = false;
    for (const auto& p : phrases) {
      known = known || table.contains(p);
      const auto v = table.lookup(p);
      for (std::size_t i = 0; i < d; ++i) {
        mean[i] += v[i];
        const double a = std::abs(v[i]), b = std::abs(extreme[i]);
        if (a > b || (a == b && v[i] > extreme[i])) extreme[i] = v[i];
      }
    }
    for (auto& x : mean) x /= static_cast<double>(phrases.size());
    return known;
  };
  std::vector<double> hm, he, rm, re;
  const bool hk = !hypothesis.empty() && pool(hypothesis, hm, he);
  const bool rk = !reference.empty() && pool(reference, rm, re);
  if (!hk || !rk) {
    s.all_oov = true;
    return s;
  }
  s.average = unit_cosine(hm, rm);
  s.extreme = unit_cosine(he, re);
  return s;
}

EmbeddingScores embedding_scores(std::string_view hypothesis, std::string_view reference,
                                 const EmbeddingTable& table, const Segmenter& segmenter) {
  return embedding_scores(segmenter.segment(hypothesis), segmenter.segment(reference), table);
}

}  // namespace semdial
