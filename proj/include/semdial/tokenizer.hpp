#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semdial/corpus.hpp"

namespace semdial {

using TokenId = std::int32_t;

// Reserved ids 0..8, in vocabulary-file order.
enum class SpecialToken : TokenId {
  kTopical = 0,
  kEmotion = 1,
  kDialogAct = 2,
  kListSep = 3,
  kEokv = 4,
  kCls = 5,
  kHuman = 6,
  kMachine = 7,
  kSep = 8,
};

inline constexpr std::size_t kSpecialTokenCount = 9;
inline constexpr std::array<std::string_view, kSpecialTokenCount> kSpecialTokenNames = {
    "<topical>", "<emotion>", "<dialog_act>", "<list_sep>", "<eokv>",
    "[CLS]",     "<human>",   "<machine>",    "[SEP]"};
inline constexpr std::string_view kUnknownToken = "<unk>";

constexpr TokenId id_of(SpecialToken t) { return static_cast<TokenId>(t); }

// Word-level vocabulary over text::segment() tokens. Ids 0..8 are the special
// tokens, id 9 is <unk>, content tokens follow. Content text never maps to a
// special id, even when it spells a special token's name.
class Vocabulary {
 public:
  static constexpr TokenId kUnk = static_cast<TokenId>(kSpecialTokenCount);

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> content_tokens);

  // Content tokens of every text, context, and topical phrase, plus all
  // emotion and dialogue-act label names. Ordered by count (descending), ties
  // broken lexicographically.
  static Vocabulary build(const std::vector<AnnotatedSession>& sessions, std::size_t min_count = 1);

  // Token per line; the first nine lines are the special-token header and
  // line ten is <unk>.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Content lookup; unknown strings map to <unk>.
  TokenId id(std::string_view token) const;
  std::optional<TokenId> find(std::string_view token) const;

  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kSpecialTokenCount); }

  std::vector<TokenId> tokenize(std::string_view text) const;
  std::vector<TokenId> encode(const Phrase& phrase) const;
  // Content ids are joined with text::join(); special ids render as their
  // names.
  std::string detokenize(std::span<const TokenId> ids) const;
  // Space-separated token strings, for traces.
  std::string render(std::span<const TokenId> ids) const;

  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace semdial
