#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "semdial/model.hpp"
#include "semdial/text.hpp"

namespace semdial::testing {

// A language model whose next-token distribution is an arbitrary function of
// the prefix.
class FunctionModel : public LanguageModel {
 public:
  using Fn = std::function<std::vector<double>(const std::vector<TokenId>&, const std::vector<TokenType>&)>;

  FunctionModel(std::size_t vocab, std::size_t max_positions, Fn fn)
      : vocab_(vocab), max_positions_(max_positions), fn_(std::move(fn)) {}

  std::size_t vocab_size() const override { return vocab_; }
  std::size_t max_positions() const override { return max_positions_; }

  std::unique_ptr<ModelCursor> open() const override { return std::make_unique<Cursor>(*this); }

 private:
  class Cursor : public ModelCursor {
   public:
    explicit Cursor(const FunctionModel& m) : m_(m) {}
    void append(TokenId id, TokenType type) override {
      if (ids_.size() >= m_.max_positions_) throw ValidationError("stub prefix exceeds max_positions");
      ids_.push_back(id);
      types_.push_back(type);
    }
    std::vector<double> next_token_distribution() override {
      auto p = m_.fn_(ids_, types_);
      double z = 0.0;
      for (double x : p) z += x;
      for (auto& x : p) x /= z;
      return p;
    }
    std::size_t length() const override { return ids_.size(); }

   private:
    const FunctionModel& m_;
    std::vector<TokenId> ids_;
    std::vector<TokenType> types_;
  };

  std::size_t vocab_;
  std::size_t max_positions_;
  Fn fn_;
};

inline FunctionModel uniform_model(std::size_t vocab, std::size_t max_positions = 4096) {
  return FunctionModel(vocab, max_positions, [vocab](const auto&, const auto&) {
    return std::vector<double>(vocab, 1.0);
  });
}

// Deterministic pseudo-random distribution keyed by a hash of the prefix.
inline FunctionModel hashed_model(std::size_t vocab, std::size_t max_positions = 4096) {
  return FunctionModel(vocab, max_positions, [vocab](const std::vector<TokenId>& ids, const auto&) {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto id : ids) h = (h ^ static_cast<std::uint64_t>(id + 7)) * 1099511628211ULL;
    std::vector<double> p(vocab);
    for (std::size_t i = 0; i < vocab; ++i) {
      h ^= h >> 33;
      h *= 0xff51afd7ed558ccdULL;
      h ^= h >> 29;
      p[i] = 0.05 + static_cast<double>(h % 1000) / 1000.0;
    }
    return p;
  });
}

// Strongly prefers one content token everywhere; separators and end tokens
// are unlikely but possible.
inline FunctionModel repeating_model(std::size_t vocab, TokenId favorite, std::size_t max_positions = 4096) {
  return FunctionModel(vocab, max_positions, [vocab, favorite](const auto&, const auto&) {
    std::vector<double> p(vocab, 1e-4);
    p[static_cast<std::size_t>(favorite)] = 1.0;
    return p;
  });
}

}  // namespace semdial::testing
