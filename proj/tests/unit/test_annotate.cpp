#include <filesystem>
#include <map>

#include "doctest.h"
#include "random_sessions.hpp"
#include "semdial/annotate.hpp"
#include "semdial/errors.hpp"
#include "semdial/text.hpp"

using namespace semdial;
namespace fs = std::filesystem;

namespace {

AnnotatedSession plain_session(const std::string& id, std::vector<std::string> texts) {
  AnnotatedSession s;
  s.session_id = id;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    s.utterances.push_back({i % 2 ? Speaker::kMachine : Speaker::kHuman, texts[i], {}, std::nullopt});
  }
  return s;
}

std::vector<LabeledSentence> question_data() {
  return {{"do you like rock ?", "Question"},   {"what is your name ?", "Question"},
          {"where do you live ?", "Question"},  {"is it raining ?", "Question"},
          {"i like rock music .", "Inform"},    {"my name is kc .", "Inform"},
          {"it is raining today .", "Inform"},  {"i live in the city .", "Inform"},
          {"please close the door .", "Directive"}, {"please tell me more .", "Directive"},
          {"i promise to come .", "Commissive"}, {"i will call you .", "Commissive"}};
}

std::vector<LabeledSentence> emotion_data() {
  std::vector<LabeledSentence> out;
  for (const auto& l : emotion_label_set()) out.push_back({"feeling " + l + " now", l});
  out.push_back({"i like rock music .", "Like"});
  out.push_back({"do you like rock ?", "None"});
  return out;
}

}  // namespace

TEST_CASE("sentence splitting") {
  CHECK(split_sentences("Fine. You?") == std::vector<std::string>{"Fine.", "You?"});
  CHECK(split_sentences("hello") == std::vector<std::string>{"hello"});
  CHECK(split_sentences("").empty());
  CHECK(split_sentences("   ").empty());
  CHECK(split_sentences("Really?! Yes...  ok") == std::vector<std::string>{"Really?!", "Yes...", "ok"});
  CHECK(split_sentences("你好。你呢？") == std::vector<std::string>{"你好。", "你呢？"});
  CHECK(SentenceSplitter({U';'}).split("a; b. c") == std::vector<std::string>{"a;", "b. c"});

  // Ranges cover the input up to whitespace between them.
  std::mt19937_64 rng(21);
  const std::string alphabet[] = {"a", "b", " ", ".", "?", "!", "。", "  ", "x y"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    for (int k = 0; k < 12; ++k) s += alphabet[rng() % std::size(alphabet)];
    const auto ranges = SentenceSplitter().ranges(s);
    std::size_t cursor = 0;
    for (const auto& r : ranges) {
      CHECK(s.substr(cursor, r.begin - cursor).find_first_not_of(' ') == std::string::npos);
      CHECK(r.end > r.begin);
      cursor = r.end;
    }
    CHECK(s.substr(cursor).find_first_not_of(' ') == std::string::npos);
  }
}

TEST_CASE("topical vocabulary ranks by frequency") {
  const auto v = build_topical_vocabulary({plain_session("x", {"a b a"})}, 1);
  REQUIRE(v.size() == 1);
  CHECK(v.phrases()[0].phrase == Phrase{"a"});
  CHECK_THROWS_AS(build_topical_vocabulary({}, 0), ValidationError);
  CHECK(build_topical_vocabulary({}, 5).size() == 0);

  // Brute-force count over a random corpus.
  std::mt19937_64 rng(22);
  std::vector<AnnotatedSession> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back(testing::random_session(rng, std::to_string(i)));
  TopicalOptions options;
  options.stoplist = {"the", "i", "you"};
  const auto vocab = build_topical_vocabulary(corpus, 8, options);
  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus) {
    for (const auto& u : s.utterances) {
      for (const auto& t : text::segment(u.text)) {
        if (t != "." && t != "?" && !options.stoplist.count(t)) ++counts[t];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  REQUIRE(vocab.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(vocab.phrases()[i].phrase == Phrase{ranked[i].first});
    CHECK(vocab.phrases()[i].score == static_cast<double>(ranked[i].second));
    if (i) CHECK(vocab.phrases()[i].score <= vocab.phrases()[i - 1].score);
  }

  // Background documents demote common phrases.
  TopicalOptions bg;
  bg.background_documents = {"a", "a c", "a d"};
  const auto demoted = build_topical_vocabulary({plain_session("y", {"a a b"})}, 2, bg);
  CHECK(demoted.phrases()[0].phrase == Phrase{"b"});

  TopicalOptions bigrams;
  bigrams.max_phrase_length = 2;
  const auto two = build_topical_vocabulary({plain_session("z", {"rock music . rock music"})}, 3, bigrams);
  CHECK(two.contains(Phrase{"rock", "music"}));
  CHECK_FALSE(two.contains(Phrase{"music", "."}));

  const auto path = fs::temp_directory_path() / "semdial_topical.tsv";
  vocab.save(path);
  const auto loaded = TopicalVocabulary::load(path);
  CHECK(loaded.phrases() == vocab.phrases());
  fs::remove(path);
}

TEST_CASE("topical alignment") {
  const TopicalVocabulary v({{{"rock"}, 3.0}, {{"music"}, 2.0}, {{"rock", "band"}, 1.0}}, 10);
  CHECK(align_topical_words("rock music rock", v) == std::vector<Phrase>{{"rock"}, {"music"}});
  CHECK(align_topical_words("nothing here", v).empty());
  CHECK(align_topical_words("", v).empty());
  CHECK(align_topical_words("a rock band", v) == std::vector<Phrase>{{"rock", "band"}, {"rock"}});
  CHECK(align_topical_words("rocks", v).empty());

  std::mt19937_64 rng(23);
  std::vector<AnnotatedSession> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(testing::random_session(rng, std::to_string(i)));
  TopicalOptions two;
  two.max_phrase_length = 2;
  const auto vocab = build_topical_vocabulary(corpus, 15, two);
  for (const auto& s : corpus) {
    for (const auto& u : s.utterances) {
      const auto tokens = text::segment(u.text);
      const auto found = align_topical_words(u, vocab);
      std::set<Phrase> unique(found.begin(), found.end());
      CHECK(unique.size() == found.size());
      for (const auto& p : found) {
        CHECK(vocab.contains(p));
        CHECK(std::search(tokens.begin(), tokens.end(), p.begin(), p.end()) != tokens.end());
      }
    }
  }
}

TEST_CASE("sentence classifiers") {
  const auto data = question_data();
  const auto clf = SentenceClassifier::train(data, dialogue_act_label_set());
  std::size_t correct = 0;
  for (const auto& d : data) correct += clf.predict(d.sentence) == d.label;
  CHECK(correct == data.size());
  CHECK(clf.metadata().training_accuracy == 1.0);
  CHECK(clf.metadata().training_examples == data.size());
  CHECK(clf.classify({}).empty());

  std::vector<std::string> sentences;
  for (const auto& d : data) sentences.push_back(d.sentence);
  const auto batch = classify_sentences(clf, sentences);
  for (std::size_t i = 0; i < sentences.size(); ++i) CHECK(batch[i] == clf.predict(sentences[i]));

  const auto single = SentenceClassifier::train({{"anything", "Inform"}, {"else", "Inform"}}, {"Inform"});
  CHECK(single.predict("what ?") == "Inform");

  CHECK_THROWS_AS(SentenceClassifier::train({{"x", "Maybe"}}, dialogue_act_label_set()), ValidationError);
  CHECK_THROWS_AS(SentenceClassifier::train({{"x", "Inform"}}, dialogue_act_label_set()), ValidationError);
  CHECK_THROWS_AS(SentenceClassifier::train({}, {}), ValidationError);

  const auto path = fs::temp_directory_path() / "semdial_clf.bin";
  clf.save(path);
  const auto loaded = SentenceClassifier::load(path);
  CHECK(loaded.label_set() == clf.label_set());
  CHECK(loaded.metadata().training_fingerprint == clf.metadata().training_fingerprint);
  for (const auto& s : {"is this new ?", "tell me please .", "unseen words entirely"}) {
    CHECK(loaded.predict(s) == clf.predict(s));
  }
  fs::remove(path);
}

TEST_CASE("linearly separable classes are fit") {
  std::mt19937_64 rng(24);
  std::vector<LabeledSentence> data;
  const std::vector<std::string> a = {"sun", "beach", "warm", "summer"};
  const std::vector<std::string> b = {"snow", "ice", "cold", "winter"};
  for (int i = 0; i < 200; ++i) {
    const bool first = i % 2 == 0;
    const auto& pool = first ? a : b;
    std::string s;
    for (int k = 0; k < 4; ++k) s += pool[rng() % pool.size()] + " ";
    data.push_back({s, first ? "Happiness" : "Sadness"});
  }
  const auto clf = SentenceClassifier::train(data, {"Happiness", "Sadness"});
  CHECK(clf.metadata().training_accuracy >= 0.99);
}

TEST_CASE("corpus annotation") {
  const auto da = SentenceClassifier::train(question_data(), dialogue_act_label_set());
  const auto emo = SentenceClassifier::train(emotion_data(), emotion_label_set());
  const TopicalVocabulary topical({{{"rock"}, 2.0}, {{"music"}, 1.0}}, 10);
  const auto sessions =
      std::vector{plain_session("a", {"i like rock music . do you like rock ?", "   ", "rock rock ."})};
  const auto annotated = annotate_corpus(sessions, topical, da, emo);
  const auto& first = annotated[0].utterances[0];
  CHECK(first.text == sessions[0].utterances[0].text);
  CHECK(first.sentences == std::vector<std::string>{"i like rock music .", "do you like rock ?"});
  CHECK(first.annotation->dialogue_acts == std::vector{DialogueAct::kInform, DialogueAct::kQuestion});
  CHECK(first.annotation->emotions.size() == 2);
  CHECK(first.annotation->topical_words == std::vector<Phrase>{{"rock"}, {"music"}});
  const auto& blank = annotated[0].utterances[1];
  CHECK(blank.sentences.empty());
  CHECK(blank.annotation->dialogue_acts.empty());
  CHECK(blank.annotation->emotions.empty());
  CHECK(blank.annotation->topical_words.empty());
  CHECK(annotated[0].utterances[2].annotation->topical_words == std::vector<Phrase>{{"rock"}});
  CHECK(annotate_corpus(annotated, topical, da, emo) == annotated);
}

TEST_CASE("label transitions") {
  auto s = plain_session("t", {"a", "b"});
  s.utterances[0].sentences = {"a"};
  s.utterances[0].annotation = SemanticAnnotation{{EmotionLabel::kNone}, {DialogueAct::kInform}, {}};
  s.utterances[1].sentences = {"b"};
  s.utterances[1].annotation = SemanticAnnotation{{EmotionLabel::kLike}, {DialogueAct::kQuestion}, {}};
  const auto m = transition_matrix({s}, LabelVariable::kDialogueAct);
  CHECK(m.labels == dialogue_act_label_set());
  CHECK(m.counts[0][1] == 1);
  std::uint64_t total = 0;
  for (const auto& row : m.counts) for (auto c : row) total += c;
  CHECK(total == 1);

  auto one = s;
  one.utterances.pop_back();
  for (const auto& row : transition_matrix({one}, LabelVariable::kEmotion).counts) {
    for (auto c : row) CHECK(c == 0);
  }

  // Brute-force pair count on random sessions.
  std::mt19937_64 rng(25);
  std::vector<AnnotatedSession> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(testing::random_session(rng, std::to_string(i)));
  const auto em = transition_matrix(corpus, LabelVariable::kEmotion);
  std::vector<std::vector<std::uint64_t>> expected(8, std::vector<std::uint64_t>(8, 0));
  for (const auto& c : corpus) {
    for (std::size_t t = 1; t < c.utterances.size(); ++t) {
      for (auto a : c.utterances[t - 1].annotation->emotions) {
        for (auto b : c.utterances[t].annotation->emotions) {
          ++expected[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        }
      }
    }
  }
  CHECK(em.counts == expected);
  for (std::size_t a = 0; a < 8; ++a) {
    double sum = 0.0;
    for (double p : em.probabilities[a]) sum += p;
    if (sum > 0.0) CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  const auto j = transition_to_json(em);
  CHECK(j["labels"].size() == 8);
  CHECK(j["counts"].size() == 8);
}
