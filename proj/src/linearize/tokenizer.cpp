#include "semdial/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "semdial/errors.hpp"
#include "semdial/text.hpp"

namespace semdial {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> content_tokens) {
  for (auto name : kSpecialTokenNames) tokens_.emplace_back(name);
  tokens_.emplace_back(kUnknownToken);
  for (auto& t : content_tokens) {
    if (t.empty() || t == kUnknownToken || index_.count(t)) continue;
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }
}

Vocabulary Vocabulary::build(const std::vector<AnnotatedSession>& sessions, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  const auto add_text = [&](std::string_view s) {
    for (auto& t : text::segment(s)) ++counts[t];
  };
  for (const auto& s : sessions) {
    add_text(s.context);
    for (const auto& u : s.utterances) {
      add_text(u.text);
      if (!u.annotation) continue;
      for (const auto& p : u.annotation->topical_words) {
        for (const auto& t : p) ++counts[t];
      }
    }
  }
  for (auto n : kEmotionNames) counts[std::string(n)] += min_count;
  for (auto n : kDialogueActNames) counts[std::string(n)] += min_count;

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (auto& [t, c] : ranked) {
    if (c >= min_count) tokens.push_back(t);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() <= kSpecialTokenCount) {
    throw ParseError("vocabulary " + path.string() + " lacks the reserved header", lines.size());
  }
  for (std::size_t i = 0; i < kSpecialTokenCount; ++i) {
    if (lines[i] != kSpecialTokenNames[i]) {
      throw ParseError("vocabulary " + path.string() + ": expected " +
                           std::string(kSpecialTokenNames[i]) + " on line " + std::to_string(i + 1),
                       i + 1);
    }
  }
  if (lines[kSpecialTokenCount] != kUnknownToken) {
    throw ParseError("vocabulary " + path.string() + ": expected <unk> on line 10", 10);
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + kSpecialTokenCount + 1, lines.end()));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

std::vector<TokenId> Vocabulary::tokenize(std::string_view s) const {
  std::vector<TokenId> ids;
  for (const auto& t : text::segment(s)) ids.push_back(id(t));
  return ids;
}

std::vector<TokenId> Vocabulary::encode(const Phrase& phrase) const {
  std::vector<TokenId> ids;
  ids.reserve(phrase.size());
  for (const auto& t : phrase) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::vector<std::string> parts;
  parts.reserve(ids.size());
  for (TokenId i : ids) parts.push_back(token(i));
  return text::join(parts);
}

std::string Vocabulary::render(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = text::fnv1a64("semdial-vocab");
  for (const auto& t : tokens_) {
    h = text::fnv1a64(t, h);
    h = text::fnv1a64(std::string_view("\n", 1), h);
  }
  return h;
}

}  // namespace semdial
