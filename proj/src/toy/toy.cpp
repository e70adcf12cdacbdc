#include "semdial/toy.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "semdial/errors.hpp"

namespace semdial {

namespace {

using E = EmotionLabel;
using D = DialogueAct;

struct Template {
  std::string_view text;  // "{}" marks the slot
  EmotionLabel emotion;
  DialogueAct act;
};

constexpr Template kFillers[] = {
    {"hey , i have a thought .", E::kNone, D::kInform},
    {"listen to me for a second .", E::kNone, D::kDirective},
    {"can i ask you something ?", E::kNone, D::kQuestion},
    {"i promise this is quick .", E::kNone, D::kCommissive},
};

constexpr Template kTopics[] = {
    {"do you like {} ?", E::kNone, D::kQuestion},
    {"i love {} so much .", E::kLike, D::kInform},
    {"{} makes me sad .", E::kSadness, D::kInform},
    {"tell me about {} .", E::kNone, D::kDirective},
    {"wow , {} is here !", E::kSurprise, D::kInform},
    {"i am scared of {} .", E::kFear, D::kInform},
    {"{} makes me angry .", E::kAnger, D::kInform},
    {"ugh , {} is gross .", E::kDisgust, D::kInform},
    {"i got {} today , yay !", E::kHappiness, D::kInform},
};

// Indexed like kTopics.
constexpr Template kOpeners[] = {
    {"good question , let me think .", E::kNone, D::kInform},
    {"me too , it is great .", E::kLike, D::kInform},
    {"oh no , i am sorry .", E::kSadness, D::kInform},
    {"sure , i will tell you .", E::kNone, D::kCommissive},
    {"really , is that true ?", E::kSurprise, D::kQuestion},
    {"do not be afraid .", E::kNone, D::kDirective},
    {"calm down , my friend .", E::kNone, D::kDirective},
    {"yes , that is nasty .", E::kDisgust, D::kInform},
    {"how wonderful for you !", E::kHappiness, D::kInform},
};

constexpr Template kStatement = {"i enjoy {} , {} and {} .", E::kLike, D::kInform};
constexpr Template kSuggestion = {"what about {} , {} or {} ?", E::kNone, D::kQuestion};

const std::vector<std::string> kDomains = {"music", "food", "sports", "travel", "pets"};
const std::vector<std::vector<std::string>> kWords = {
    {"rock", "jazz", "piano", "guitar", "violin", "drums", "opera", "blues"},
    {"pizza", "pasta", "sushi", "noodles", "burgers", "salad", "tacos", "curry"},
    {"soccer", "tennis", "hockey", "golf", "boxing", "rugby", "cycling", "swimming"},
    {"paris", "tokyo", "beaches", "mountains", "islands", "deserts", "museums", "trains"},
    {"dogs", "cats", "parrots", "rabbits", "hamsters", "turtles", "goldfish", "ponies"},
};

std::string fill(std::string_view pattern, const std::vector<std::string>& words) {
  std::string out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern.compare(i, 2, "{}") == 0) {
      out += words.at(next++);
      ++i;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

Utterance make_utterance(Speaker speaker, const std::vector<std::pair<const Template*, std::vector<std::string>>>& parts) {
  Utterance u;
  u.speaker = speaker;
  SemanticAnnotation ann;
  for (const auto& [t, words] : parts) {
    u.sentences.push_back(fill(t->text, words));
    ann.emotions.push_back(t->emotion);
    ann.dialogue_acts.push_back(t->act);
    for (const auto& w : words) ann.topical_words.push_back({w});
  }
  for (const auto& s : u.sentences) u.text += (u.text.empty() ? "" : " ") + s;
  u.annotation = std::move(ann);
  return u;
}

}  // namespace

void ToyOptions::validate() const {
  if (sessions == 0 || sessions > kMaxSessions) {
    throw ValidationError("toy corpus size must be in [1, " + std::to_string(kMaxSessions) + "]");
  }
  if (exchanges == 0) throw ValidationError("toy sessions need at least one exchange");
}

const std::vector<std::string>& toy_domains() { return kDomains; }

const std::vector<std::string>& toy_domain_words(std::size_t domain) { return kWords.at(domain); }

ToyCorpus generate_toy_corpus(const ToyOptions& options) {
  options.validate();
  std::mt19937_64 rng(options.seed);
  std::vector<AnnotatedSession> sessions;
  for (std::size_t i = 0; i < options.sessions; ++i) {
    AnnotatedSession s;
    char id[32];
    std::snprintf(id, sizeof id, "toy-%04zu", i + 1);
    s.session_id = id;
    const std::size_t domain = pick(rng, kDomains.size());
    const auto& words = kWords[domain];
    s.context = kDomains[domain];
    for (std::size_t x = 0; x < options.exchanges; ++x) {
      const std::size_t topic = pick(rng, std::size(kTopics));
      const std::string& w = words[pick(rng, words.size())];
      s.utterances.push_back(
          make_utterance(Speaker::kHuman, {{&kFillers[pick(rng, std::size(kFillers))], {}}, {&kTopics[topic], {w}}}));

      std::vector<std::size_t> idx(words.size());
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t k = 0; k < 3; ++k) std::swap(idx[k], idx[k + pick(rng, idx.size() - k)]);
      idx.resize(3);
      std::sort(idx.begin(), idx.end());
      const std::vector<std::string> named = {words[idx[0]], words[idx[1]], words[idx[2]]};
      const bool asked = kTopics[topic].act == D::kQuestion || kTopics[topic].act == D::kDirective;
      s.utterances.push_back(
          make_utterance(Speaker::kMachine, {{&kOpeners[topic], {}}, {asked ? &kStatement : &kSuggestion, named}}));
    }
    validate_session(s);
    sessions.push_back(std::move(s));
  }

  ToyCorpus out;
  const std::size_t n_train = sessions.size() * 8 / 10;
  const std::size_t n_valid = sessions.size() / 10;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    auto& bucket = i < n_train ? out.split.train : i < n_train + n_valid ? out.split.valid : out.split.test;
    bucket.push_back(std::move(sessions[i]));
  }

  std::set<std::string> seen;
  for (const auto& s : out.split.train) {
    for (const auto& u : s.utterances) {
      for (std::size_t k = 0; k < u.sentences.size(); ++k) {
        if (!seen.insert(u.sentences[k]).second) continue;
        out.dialogue_act_sentences.push_back({u.sentences[k], std::string(to_string(u.annotation->dialogue_acts[k]))});
        out.emotion_sentences.push_back({u.sentences[k], std::string(to_string(u.annotation->emotions[k]))});
      }
    }
  }
  return out;
}

}  // namespace semdial
