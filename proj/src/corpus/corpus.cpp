#include "semdial/corpus.hpp"

#include <fstream>
#include <set>
#include <unordered_set>

#include "semdial/errors.hpp"
#include "semdial/text.hpp"

namespace semdial {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Speaker s) { return s == Speaker::kHuman ? "human" : "machine"; }
std::string_view to_string(EmotionLabel e) { return kEmotionNames[static_cast<std::size_t>(e)]; }
std::string_view to_string(DialogueAct a) { return kDialogueActNames[static_cast<std::size_t>(a)]; }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "train";
}

std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "human") return Speaker::kHuman;
  if (s == "machine") return Speaker::kMachine;
  return std::nullopt;
}

std::optional<EmotionLabel> parse_emotion(std::string_view s) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == s) return static_cast<EmotionLabel>(i);
  }
  return std::nullopt;
}

std::optional<DialogueAct> parse_dialogue_act(std::string_view s) {
  for (std::size_t i = 0; i < kDialogueActNames.size(); ++i) {
    if (kDialogueActNames[i] == s) return static_cast<DialogueAct>(i);
  }
  return std::nullopt;
}

std::string phrase_text(const Phrase& p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) out.push_back(' ');
    out += p[i];
  }
  return out;
}

void validate_annotation(const SemanticAnnotation& ann, std::size_t sentence_count,
                         const std::string& where) {
  if (ann.emotions.size() != sentence_count || ann.dialogue_acts.size() != sentence_count) {
    throw ValidationError(where + ": " + std::to_string(ann.emotions.size()) + " emotions and " +
                          std::to_string(ann.dialogue_acts.size()) + " dialogue acts for " +
                          std::to_string(sentence_count) + " sentences");
  }
  std::set<Phrase> seen;
  for (const auto& p : ann.topical_words) {
    if (p.empty()) throw ValidationError(where + ": empty topical phrase");
    if (!seen.insert(p).second) {
      throw ValidationError(where + ": duplicate topical phrase '" + phrase_text(p) + "'");
    }
  }
}

void validate_session(const AnnotatedSession& session) {
  const std::string& id = session.session_id;
  if (session.utterances.empty()) throw ValidationError("session " + id + ": no utterances");
  Speaker expected = Speaker::kHuman;
  for (std::size_t i = 0; i < session.utterances.size(); ++i) {
    const Utterance& u = session.utterances[i];
    const std::string where = "session " + id + ", utterance " + std::to_string(i);
    if (u.speaker != expected) throw ValidationError(where + ": speakers do not alternate");
    expected = other(expected);
    if (u.annotation) validate_annotation(*u.annotation, u.sentences.size(), where);
  }
}

ordered_json annotation_to_json(const SemanticAnnotation& ann) {
  ordered_json j;
  j["emotions"] = ordered_json::array();
  for (auto e : ann.emotions) j["emotions"].push_back(to_string(e));
  j["dialogue_acts"] = ordered_json::array();
  for (auto a : ann.dialogue_acts) j["dialogue_acts"].push_back(to_string(a));
  j["topical_words"] = ordered_json::array();
  for (const auto& p : ann.topical_words) j["topical_words"].push_back(p);
  return j;
}

SemanticAnnotation annotation_from_json(const json& j) {
  SemanticAnnotation ann;
  for (const auto& e : j.value("emotions", json::array())) {
    auto label = parse_emotion(e.get<std::string>());
    if (!label) throw ValidationError("unknown emotion label '" + e.get<std::string>() + "'");
    ann.emotions.push_back(*label);
  }
  for (const auto& a : j.value("dialogue_acts", json::array())) {
    auto label = parse_dialogue_act(a.get<std::string>());
    if (!label) throw ValidationError("unknown dialogue act '" + a.get<std::string>() + "'");
    ann.dialogue_acts.push_back(*label);
  }
  for (const auto& p : j.value("topical_words", json::array())) {
    ann.topical_words.push_back(p.get<Phrase>());
  }
  return ann;
}

ordered_json session_to_json(const AnnotatedSession& session) {
  ordered_json j;
  j["session_id"] = session.session_id;
  if (!session.context.empty()) j["context"] = session.context;
  j["utterances"] = ordered_json::array();
  for (const auto& u : session.utterances) {
    ordered_json ju;
    ju["speaker"] = to_string(u.speaker);
    ju["text"] = u.text;
    if (!u.sentences.empty()) ju["sentences"] = u.sentences;
    if (u.annotation) ju["annotation"] = annotation_to_json(*u.annotation);
    j["utterances"].push_back(std::move(ju));
  }
  return j;
}

AnnotatedSession session_from_json(const json& j) {
  AnnotatedSession s;
  s.session_id = j.at("session_id").get<std::string>();
  if (j.contains("context") && !j["context"].is_null()) s.context = j["context"].get<std::string>();
  for (const auto& ju : j.at("utterances")) {
    Utterance u;
    const auto speaker = parse_speaker(ju.at("speaker").get<std::string>());
    if (!speaker) throw ValidationError("session " + s.session_id + ": unknown speaker");
    u.speaker = *speaker;
    u.text = ju.at("text").get<std::string>();
    if (ju.contains("sentences")) u.sentences = ju["sentences"].get<std::vector<std::string>>();
    if (ju.contains("annotation") && !ju["annotation"].is_null()) {
      try {
        u.annotation = annotation_from_json(ju["annotation"]);
      } catch (const ValidationError& e) {
        throw ValidationError("session " + s.session_id + ": " + e.what());
      }
    }
    s.utterances.push_back(std::move(u));
  }
  return s;
}

std::vector<AnnotatedSession> load_corpus_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  std::vector<AnnotatedSession> sessions;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotatedSession s;
    try {
      s = session_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    validate_session(s);
    if (!ids.insert(s.session_id).second) {
      throw ValidationError("session " + s.session_id + ": duplicate session_id");
    }
    sessions.push_back(std::move(s));
  }
  return sessions;
}

std::vector<AnnotatedSession> load_corpus(const fs::path& path, Split split) {
  if (fs::is_directory(path)) {
    return load_corpus_file(path / (std::string(to_string(split)) + ".jsonl"));
  }
  return load_corpus_file(path);
}

void save_corpus(const std::vector<AnnotatedSession>& sessions, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  for (const auto& s : sessions) out << session_to_json(s).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

CorpusSplit load_split(const fs::path& dir) {
  CorpusSplit split;
  split.train = load_corpus(dir, Split::kTrain);
  split.valid = load_corpus(dir, Split::kValid);
  split.test = load_corpus(dir, Split::kTest);
  std::unordered_set<std::string> ids;
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (const auto& s : *part) {
      if (!ids.insert(s.session_id).second) {
        throw ValidationError("session " + s.session_id + " appears in more than one split");
      }
    }
  }
  return split;
}

void save_split(const CorpusSplit& split, const fs::path& dir) {
  fs::create_directories(dir);
  save_corpus(split.train, dir / "train.jsonl");
  save_corpus(split.valid, dir / "valid.jsonl");
  save_corpus(split.test, dir / "test.jsonl");
}

TrainingView flip_roles(TrainingView view) {
  for (auto& u : view.utterances) u.speaker = other(u.speaker);
  view.index = 1 - view.index;
  return view;
}

std::vector<TrainingView> derive_training_views(const AnnotatedSession& session) {
  for (std::size_t i = 0; i < session.utterances.size(); ++i) {
    if (!session.utterances[i].annotation) {
      throw ValidationError("session " + session.session_id + ", utterance " + std::to_string(i) +
                            ": not annotated");
    }
  }
  TrainingView original{session.session_id, session.context, session.utterances, 0};
  for (std::size_t i = 0; i < original.utterances.size(); ++i) {
    original.utterances[i].speaker = i % 2 == 0 ? Speaker::kHuman : Speaker::kMachine;
  }
  std::vector<TrainingView> views;
  views.push_back(original);
  views.push_back(flip_roles(std::move(original)));
  return views;
}

StatsReport corpus_stats(const std::vector<AnnotatedSession>& sessions) {
  StatsReport r;
  r.sessions = sessions.size();
  std::size_t utterances = 0, tokens = 0, labels = 0, topical = 0;
  for (const auto& s : sessions) {
    for (const auto& u : s.utterances) {
      ++utterances;
      tokens += text::segment(u.text).size();
      if (u.annotation) {
        labels += u.annotation->dialogue_acts.size();
        topical += u.annotation->topical_words.size();
      }
    }
  }
  if (r.sessions == 0 || utterances == 0) return r;
  const auto n = static_cast<double>(utterances);
  r.utterances_per_session = n / static_cast<double>(r.sessions);
  r.tokens_per_utterance = static_cast<double>(tokens) / n;
  r.labels_per_utterance = static_cast<double>(labels) / n;
  r.topical_per_utterance = static_cast<double>(topical) / n;
  return r;
}

ordered_json stats_to_json(const StatsReport& r) {
  ordered_json j;
  j["Sessions"] = r.sessions;
  j["Utt./Session"] = r.utterances_per_session;
  j["Tokens/Utt."] = r.tokens_per_utterance;
  j["DAs(Emotions)/Utt."] = r.labels_per_utterance;
  j["Topical Words/Utt."] = r.topical_per_utterance;
  return j;
}

}  // namespace semdial
