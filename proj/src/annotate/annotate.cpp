#include "semdial/annotate.hpp"
#include "semdial/errors.hpp"

namespace semdial {

SemanticAnnotation annotate_text(std::string_view s, const TopicalVocabulary& vocab,
                                 const SentenceClassifier& da_classifier,
                                 const SentenceClassifier& emotion_classifier,
                                 std::vector<std::string>* sentences, const SentenceSplitter& splitter) {
  // Whitespace-only text has no sentences and so no labels.
  auto parts = splitter.split(s);
  SemanticAnnotation ann;
  for (const auto& sentence : parts) {
    const auto& da = da_classifier.predict(sentence);
    const auto act = parse_dialogue_act(da);
    if (!act) throw ValidationError("dialogue act classifier produced unknown label '" + da + "'");
    ann.dialogue_acts.push_back(*act);
    const auto& em = emotion_classifier.predict(sentence);
    const auto emotion = parse_emotion(em);
    if (!emotion) throw ValidationError("emotion classifier produced unknown label '" + em + "'");
    ann.emotions.push_back(*emotion);
  }
  ann.topical_words = align_topical_words(s, vocab);
  if (sentences) *sentences = std::move(parts);
  return ann;
}

std::vector<AnnotatedSession> annotate_corpus(const std::vector<AnnotatedSession>& sessions,
                                              const TopicalVocabulary& vocab,
                                              const SentenceClassifier& da_classifier,
                                              const SentenceClassifier& emotion_classifier,
                                              const SentenceSplitter& splitter) {
  std::vector<AnnotatedSession> out = sessions;
  for (auto& session : out) {
    for (auto& u : session.utterances) {
      std::vector<std::string> parts;
      u.annotation = annotate_text(u.text, vocab, da_classifier, emotion_classifier, &parts, splitter);
      u.sentences = std::move(parts);
    }
    validate_session(session);
  }
  return out;
}

TransitionMatrix transition_matrix(const std::vector<AnnotatedSession>& sessions, LabelVariable variable) {
  TransitionMatrix m;
  if (variable == LabelVariable::kDialogueAct) {
    m.labels.assign(kDialogueActNames.begin(), kDialogueActNames.end());
  } else {
    m.labels.assign(kEmotionNames.begin(), kEmotionNames.end());
  }
  const std::size_t n = m.labels.size();
  m.counts.assign(n, std::vector<std::uint64_t>(n, 0));
  const auto labels_of = [&](const Utterance& u) {
    std::vector<std::size_t> out;
    if (!u.annotation) return out;
    if (variable == LabelVariable::kDialogueAct) {
      for (auto a : u.annotation->dialogue_acts) out.push_back(static_cast<std::size_t>(a));
    } else {
      for (auto e : u.annotation->emotions) out.push_back(static_cast<std::size_t>(e));
    }
    return out;
  };
  for (const auto& s : sessions) {
    for (std::size_t t = 0; t + 1 < s.utterances.size(); ++t) {
      const auto prev = labels_of(s.utterances[t]);
      const auto cur = labels_of(s.utterances[t + 1]);
      for (auto a : prev) {
        for (auto b : cur) ++m.counts[a][b];
      }
    }
  }
  m.probabilities.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    std::uint64_t total = 0;
    for (auto c : m.counts[a]) total += c;
    if (total == 0) continue;
    for (std::size_t b = 0; b < n; ++b) {
      m.probabilities[a][b] = static_cast<double>(m.counts[a][b]) / static_cast<double>(total);
    }
  }
  return m;
}

nlohmann::ordered_json transition_to_json(const TransitionMatrix& m) {
  nlohmann::ordered_json j;
  j["labels"] = m.labels;
  j["counts"] = m.counts;
  j["probabilities"] = m.probabilities;
  return j;
}

}  // namespace semdial
