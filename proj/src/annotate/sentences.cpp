#include <algorithm>

#include "semdial/annotate.hpp"
#include "semdial/text.hpp"

namespace semdial {

std::vector<char32_t> SentenceSplitter::default_terminators() {
  return {U'.', U'?', U'!', U'。', U'？', U'！'};
}

SentenceSplitter::SentenceSplitter(std::vector<char32_t> terminators)
    : terminators_(std::move(terminators)) {}

std::vector<SentenceSplitter::Range> SentenceSplitter::ranges(std::string_view s) const {
  const auto is_terminator = [&](char32_t cp) {
    return std::find(terminators_.begin(), terminators_.end(), cp) != terminators_.end();
  };
  std::vector<Range> out;
  std::size_t pos = 0;
  std::size_t begin = std::string_view::npos;  // first non-space byte of the open sentence
  std::size_t last = 0;                        // end of its last non-space code point
  bool in_terminators = false;
  const auto close = [&] {
    if (begin != std::string_view::npos) out.push_back({begin, last});
    begin = std::string_view::npos;
    in_terminators = false;
  };
  while (pos < s.size()) {
    const std::size_t start = pos;
    const char32_t cp = text::next_code_point(s, pos);
    if (text::is_space(cp)) {
      if (in_terminators) close();
      continue;
    }
    const bool term = is_terminator(cp);
    if (in_terminators && !term) close();
    if (begin == std::string_view::npos) begin = start;
    last = pos;
    in_terminators = term;
  }
  close();
  return out;
}

std::vector<std::string> SentenceSplitter::split(std::string_view s) const {
  std::vector<std::string> out;
  for (const auto& r : ranges(s)) out.emplace_back(s.substr(r.begin, r.end - r.begin));
  return out;
}

std::vector<std::string> split_sentences(std::string_view s) { return SentenceSplitter().split(s); }

}  // namespace semdial
