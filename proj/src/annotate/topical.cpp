#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "semdial/annotate.hpp"
#include "semdial/errors.hpp"
#include "semdial/text.hpp"

namespace semdial {

namespace {

bool is_punct_code_point(char32_t cp) {
  if (cp < 0x80) return !((cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z'));
  return (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x3000 && cp <= 0x303F) ||
         (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
         (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65);
}

bool is_word_like(const std::string& token) {
  std::size_t pos = 0;
  while (pos < token.size()) {
    if (!is_punct_code_point(text::next_code_point(token, pos))) return true;
  }
  return false;
}

}  // namespace

TopicalVocabulary::TopicalVocabulary(std::vector<ScoredPhrase> phrases, std::size_t size_limit)
    : phrases_(std::move(phrases)), size_limit_(size_limit) {
  if (phrases_.size() > size_limit_) phrases_.resize(size_limit_);
  for (const auto& p : phrases_) {
    if (p.phrase.empty()) throw ValidationError("empty topical phrase");
    if (!lookup_.insert(p.phrase).second) {
      throw ValidationError("duplicate topical phrase '" + phrase_text(p.phrase) + "'");
    }
    max_phrase_length_ = std::max(max_phrase_length_, p.phrase.size());
  }
  for (std::size_t i = 1; i < phrases_.size(); ++i) {
    if (phrases_[i].score > phrases_[i - 1].score) {
      throw ValidationError("topical vocabulary scores must be non-increasing");
    }
  }
}

TopicalVocabulary TopicalVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open topical vocabulary " + path.string());
  std::vector<ScoredPhrase> phrases;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected phrase<TAB>score",
                       line_no);
    }
    ScoredPhrase sp;
    std::istringstream words(line.substr(0, tab));
    for (std::string w; words >> w;) sp.phrase.push_back(w);
    try {
      sp.score = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad score", line_no);
    }
    phrases.push_back(std::move(sp));
  }
  const std::size_t n = phrases.size();
  return TopicalVocabulary(std::move(phrases), n);
}

void TopicalVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write topical vocabulary " + path.string());
  char buf[64];
  for (const auto& p : phrases_) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.score);
    out << phrase_text(p.phrase) << '\t' << buf << '\n';
  }
}

std::set<std::string> load_stoplist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stoplist " + path.string());
  std::set<std::string> out;
  for (std::string w; in >> w;) out.insert(w);
  return out;
}

SalienceExtractor::SalienceExtractor(TopicalOptions options) : options_(std::move(options)) {
  if (options_.max_phrase_length == 0) throw ValidationError("max_phrase_length must be positive");
}

TopicalVocabulary SalienceExtractor::extract(const std::vector<AnnotatedSession>& sessions,
                                             std::size_t size_limit) const {
  if (size_limit == 0) throw ValidationError("topical vocabulary size_limit must be at least 1");

  const auto candidates = [&](std::string_view s) {
    const auto tokens = text::segment(s);
    std::vector<Phrase> found;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      for (std::size_t len = 1; len <= options_.max_phrase_length && i + len <= tokens.size(); ++len) {
        const auto& last = tokens[i + len - 1];
        if (options_.stoplist.count(last) || !is_word_like(last)) break;
        found.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                           tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
      }
    }
    return found;
  };

  std::map<Phrase, std::size_t> tf;
  for (const auto& s : sessions) {
    for (const auto& u : s.utterances) {
      for (auto& p : candidates(u.text)) ++tf[p];
    }
  }
  std::map<Phrase, std::size_t> bf;
  for (const auto& doc : options_.background_documents) {
    const auto found = candidates(doc);
    for (auto& p : std::set<Phrase>(found.begin(), found.end())) ++bf[p];
  }
  const bool has_background = !options_.background_documents.empty();
  const double n_bg = static_cast<double>(options_.background_documents.size());

  std::vector<ScoredPhrase> ranked;
  ranked.reserve(tf.size());
  for (const auto& [phrase, count] : tf) {
    double ibf = 1.0;
    if (has_background) {
      auto it = bf.find(phrase);
      const double b = it == bf.end() ? 0.0 : static_cast<double>(it->second);
      ibf = 1.0 + std::log((n_bg + 1.0) / (b + 1.0));
    }
    ranked.push_back({phrase, static_cast<double>(count) * ibf});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredPhrase& a, const ScoredPhrase& b) {
    if (a.score != b.score) return a.score > b.score;
    return phrase_text(a.phrase) < phrase_text(b.phrase);
  });
  if (ranked.size() > size_limit) ranked.resize(size_limit);
  return TopicalVocabulary(std::move(ranked), size_limit);
}

TopicalVocabulary build_topical_vocabulary(const std::vector<AnnotatedSession>& sessions,
                                           std::size_t size_limit, const TopicalOptions& options) {
  if (size_limit == 0) throw ValidationError("topical vocabulary size_limit must be at least 1");
  return SalienceExtractor(options).extract(sessions, size_limit);
}

std::vector<Phrase> align_topical_words(std::string_view s, const TopicalVocabulary& vocab) {
  const auto tokens = text::segment(s);
  std::vector<Phrase> out;
  std::set<Phrase> seen;
  const std::size_t max_len = vocab.max_phrase_length();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t len = std::min(max_len, tokens.size() - i); len >= 1; --len) {
      Phrase p(tokens.begin() + static_cast<std::ptrdiff_t>(i),
               tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
      if (vocab.contains(p) && seen.insert(p).second) out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<Phrase> align_topical_words(const Utterance& utterance, const TopicalVocabulary& vocab) {
  return align_topical_words(utterance.text, vocab);
}

}  // namespace semdial
