#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semdial/annotate.hpp"
#include "semdial/corpus.hpp"

namespace semdial {

// Template-based synthetic dialogues with known semantic variables.
//
// Each session belongs to one of five domains (the context) with eight
// topical words each. A Human utterance is a filler sentence followed by a
// sentence about one domain word; its labels follow from the two templates.
// A Machine utterance reacts to the Human's emotion and dialogue act with a
// fixed opener, then names three distinct domain words in domain order. The
// three words are drawn at random, so a Machine plan cannot be inferred from
// the history while the response is a deterministic function of the plan.
struct ToyOptions {
  std::size_t sessions = 200;  // at most kMaxSessions
  std::size_t exchanges = 2;   // Human/Machine pairs per session, >= 1
  std::uint64_t seed = 7;

  static constexpr std::size_t kMaxSessions = 200;
  void validate() const;
};

struct ToyCorpus {
  // 80/10/10 split in generation order.
  CorpusSplit split;
  // Distinct sentences of the training split with their labels, for the
  // sentence classifiers.
  std::vector<LabeledSentence> dialogue_act_sentences;
  std::vector<LabeledSentence> emotion_sentences;
};

ToyCorpus generate_toy_corpus(const ToyOptions& options);

// The five domain names and their words, in domain order.
const std::vector<std::string>& toy_domains();
const std::vector<std::string>& toy_domain_words(std::size_t domain);

}  // namespace semdial
