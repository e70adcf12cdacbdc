#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "random_sessions.hpp"
#include "semdial/errors.hpp"
#include "semdial/linearize.hpp"
#include "semdial/text.hpp"

using namespace semdial;
using nlohmann::json;

namespace {

json load_golden() {
  std::ifstream in("fixtures/input_scheme_golden.json");
  REQUIRE(in);
  return json::parse(in);
}

TrainingView original_view(const AnnotatedSession& s) { return derive_training_views(s).at(0); }

std::vector<AnnotatedSession> random_corpus(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::vector<AnnotatedSession> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_session(rng, "s" + std::to_string(i)));
  return out;
}

bool is_key(TokenId id) {
  return id == id_of(SpecialToken::kTopical) || id == id_of(SpecialToken::kEmotion) ||
         id == id_of(SpecialToken::kDialogAct);
}

}  // namespace

TEST_CASE("golden input scheme fixture") {
  const auto g = load_golden();
  const Vocabulary vocab(g["vocabulary"].get<std::vector<std::string>>());
  const auto session = session_from_json(g["session"]);
  validate_session(session);
  const auto ex = linearize_session(original_view(session), vocab, LinearizationScheme{});

  std::vector<TokenId> ids;
  std::vector<int> types;
  std::vector<int> mask;
  for (const auto& e : g["expected"]) {
    for (auto v : e["ids"]) ids.push_back(v.get<TokenId>());
    for (auto v : e["types"]) types.push_back(v.get<int>());
    for (auto v : e["mask"]) mask.push_back(v.get<int>());
  }
  REQUIRE(ex.size() == ids.size());
  CHECK(ex.ids == ids);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    CHECK(static_cast<int>(ex.types[i]) == types[i]);
    CHECK(static_cast<int>(ex.loss_mask[i]) == mask[i]);
  }
  REQUIRE(ex.turn_boundaries.size() == g["expected"].size());
  std::size_t pos = 0;
  for (std::size_t k = 0; k < ex.turn_boundaries.size(); ++k) {
    const auto& b = ex.turn_boundaries[k];
    CHECK(b.begin == pos);
    pos += g["expected"][k]["ids"].size();
    CHECK(b.end == pos);
    CHECK(to_string(b.kind) == g["expected"][k]["element"].get<std::string>());
  }
}

TEST_CASE("linearize_variables layout") {
  const Vocabulary vocab(testing::word_pool());
  SemanticAnnotation ann;
  ann.dialogue_acts = {DialogueAct::kInform, DialogueAct::kQuestion};
  LinearizationScheme only_da;
  const auto span = linearize_variables(ann, only_da, Speaker::kMachine, vocab);
  const std::vector<TokenId> expected = {id_of(SpecialToken::kEmotion), id_of(SpecialToken::kEokv),
                                         id_of(SpecialToken::kDialogAct), vocab.id("Inform"),
                                         id_of(SpecialToken::kListSep),   vocab.id("Question"),
                                         id_of(SpecialToken::kEokv),      id_of(SpecialToken::kTopical),
                                         id_of(SpecialToken::kEokv)};
  CHECK(span.ids == expected);
  for (auto t : span.types) CHECK(t == TokenType::kMachineVariables);
  for (std::size_t i = 0; i < span.size(); ++i) CHECK(span.loss_mask[i] == (is_key(span.ids[i]) ? 0 : 1));
  CHECK(linearize_variables(ann, only_da, Speaker::kHuman, vocab).types[0] == TokenType::kHumanVariables);

  // Variable order follows the scheme.
  LinearizationScheme reordered;
  reordered.variable_order = {VariableKey::kTopical, VariableKey::kEmotion, VariableKey::kDialogueAct};
  CHECK(linearize_variables(ann, reordered, Speaker::kHuman, vocab).ids.front() == id_of(SpecialToken::kTopical));
  reordered.variable_order = {VariableKey::kTopical, VariableKey::kTopical, VariableKey::kDialogueAct};
  CHECK_THROWS_AS(reordered.validate(), ValidationError);
}

TEST_CASE("parse_variables examples and errors") {
  std::vector<std::string> words = testing::word_pool();
  words.push_back("Happiness");
  words.push_back("Inform");
  words.push_back("Maybe");
  const Vocabulary vocab(words);
  const TokenId E = id_of(SpecialToken::kEmotion), D = id_of(SpecialToken::kDialogAct),
                T = id_of(SpecialToken::kTopical), X = id_of(SpecialToken::kEokv),
                S = id_of(SpecialToken::kListSep);

  const std::vector<TokenId> good = {E, vocab.id("Happiness"), X, D, vocab.id("Inform"), X, T, vocab.id("band"), X};
  const auto p = parse_variables(good, vocab);
  CHECK(p.valid);
  CHECK(p.annotation().emotions == std::vector{EmotionLabel::kHappiness});
  CHECK(p.annotation().dialogue_acts == std::vector{DialogueAct::kInform});
  CHECK(p.annotation().topical_words == std::vector<Phrase>{{"band"}});

  const std::vector<TokenId> empty_emotion = {E, X};
  const auto q = parse_variables(empty_emotion, vocab);
  CHECK(q.emotions.empty());
  CHECK(q.present[static_cast<std::size_t>(VariableKey::kEmotion)]);
  CHECK_FALSE(q.present[static_cast<std::size_t>(VariableKey::kTopical)]);

  const std::vector<TokenId> unknown = {D, vocab.id("Maybe"), X};
  const auto u = parse_variables(unknown, vocab);
  CHECK_FALSE(u.valid);
  CHECK(u.dialogue_acts == std::vector<std::string>{"Maybe"});
  CHECK(u.annotation().dialogue_acts.empty());

  auto position_of = [&](std::vector<TokenId> span) -> std::size_t {
    try {
      parse_variables(span, vocab);
    } catch (const ParseError& e) {
      return e.position();
    }
    FAIL("no parse error");
    return 0;
  };
  CHECK(position_of({E, vocab.id("Happiness")}) == 2);
  CHECK(position_of({E, X, E, X}) == 2);
  CHECK(position_of({E, S, X}) == 1);
  CHECK(position_of({T, vocab.id("rock"), S, X}) == 3);
  CHECK(position_of({vocab.id("rock"), X}) == 0);
  CHECK(position_of({T, vocab.id("rock"), id_of(SpecialToken::kSep), X}) == 2);
}

TEST_CASE("variable spans round-trip") {
  const auto corpus = random_corpus(3, 200);
  const auto vocab = Vocabulary::build(corpus);
  for (const auto& s : corpus) {
    for (const auto& u : s.utterances) {
      const auto span = linearize_variables(*u.annotation, LinearizationScheme{}, u.speaker, vocab);
      const auto parsed = parse_variables(span.ids, vocab);
      CHECK(parsed.valid);
      CHECK(parsed.annotation() == *u.annotation);
    }
  }
}

TEST_CASE("sessions round-trip span by span") {
  const auto corpus = random_corpus(4, 150);
  const auto vocab = Vocabulary::build(corpus);
  const LinearizationScheme scheme;
  for (const auto& s : corpus) {
    for (const auto& view : derive_training_views(s)) {
      const auto ex = linearize_session(view, vocab, scheme);
      std::vector<SemanticAnnotation> annotations;
      std::vector<std::string> machine;
      std::vector<std::pair<std::size_t, Speaker>> owners;
      for (const auto& b : ex.turn_boundaries) {
        const std::span<const TokenId> ids(ex.ids.data() + b.begin, b.end - b.begin);
        if (b.kind == ElementKind::kHumanVariables || b.kind == ElementKind::kMachineVariables) {
          annotations.push_back(parse_variables(ids, vocab).annotation());
        }
        if (b.kind == ElementKind::kMachineUtterance) {
          CHECK(ids.front() == id_of(SpecialToken::kMachine));
          CHECK(ids.back() == id_of(SpecialToken::kSep));
          machine.push_back(vocab.detokenize(ids.subspan(1, ids.size() - 2)));
        }
      }
      std::vector<SemanticAnnotation> expected_ann;
      std::vector<std::string> expected_machine;
      for (const auto& u : view.utterances) {
        expected_ann.push_back(*u.annotation);
        if (u.speaker == Speaker::kMachine) expected_machine.push_back(text::normalize(u.text));
      }
      CHECK(annotations == expected_ann);
      CHECK(machine == expected_machine);
    }
  }
}

TEST_CASE("masking rule and token types hold at every position") {
  const auto corpus = random_corpus(5, 150);
  const auto vocab = Vocabulary::build(corpus);
  for (const auto& ex : linearize_corpus(corpus, vocab, LinearizationScheme{})) {
    REQUIRE(ex.ids.size() == ex.types.size());
    REQUIRE(ex.ids.size() == ex.loss_mask.size());
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const TokenId id = ex.ids[i];
      bool expected = false;
      switch (ex.types[i]) {
        case TokenType::kHumanVariables:
        case TokenType::kMachineVariables:
          expected = !is_key(id);
          break;
        case TokenType::kMachineUtterance:
          expected = id != id_of(SpecialToken::kMachine);
          break;
        case TokenType::kHumanUtterance:
        case TokenType::kContext:
          expected = false;
          break;
      }
      CHECK(static_cast<bool>(ex.loss_mask[i]) == expected);
    }
    // Elements tile the sequence without gaps.
    std::size_t pos = 0;
    for (const auto& b : ex.turn_boundaries) {
      CHECK(b.begin == pos);
      CHECK(b.end > b.begin);
      pos = b.end;
      for (std::size_t i = b.begin; i < b.end; ++i) {
        switch (b.kind) {
          case ElementKind::kContext: CHECK(ex.types[i] == TokenType::kContext); break;
          case ElementKind::kHumanUtterance: CHECK(ex.types[i] == TokenType::kHumanUtterance); break;
          case ElementKind::kHumanVariables: CHECK(ex.types[i] == TokenType::kHumanVariables); break;
          case ElementKind::kMachineVariables: CHECK(ex.types[i] == TokenType::kMachineVariables); break;
          case ElementKind::kMachineUtterance: CHECK(ex.types[i] == TokenType::kMachineUtterance); break;
        }
      }
    }
    CHECK(pos == ex.size());
  }
}

TEST_CASE("empty context starts with CLS") {
  std::mt19937_64 rng(6);
  auto s = testing::random_session(rng, "x");
  s.context.clear();
  const auto vocab = Vocabulary::build({s});
  const auto ex = linearize_session(original_view(s), vocab, LinearizationScheme{});
  CHECK(ex.ids[0] == id_of(SpecialToken::kCls));
  CHECK(ex.types[0] == TokenType::kContext);
}

TEST_CASE("role switching yields two views") {
  std::mt19937_64 rng(7);
  AnnotatedSession s;
  do {
    s = testing::random_session(rng, "odd", 7);
  } while (s.utterances.size() % 2 == 0 || s.utterances.size() < 3);
  const auto views = derive_training_views(s);
  REQUIRE(views.size() == 2);
  CHECK(views[0].index == 0);
  CHECK(views[1].index == 1);
  for (std::size_t i = 0; i < s.utterances.size(); ++i) {
    CHECK(views[0].utterances[i].speaker == s.utterances[i].speaker);
    CHECK(views[1].utterances[i].speaker == other(s.utterances[i].speaker));
    CHECK(views[1].utterances[i].text == s.utterances[i].text);
  }
  const auto vocab = Vocabulary::build({s});
  LinearizationScheme keep;
  const auto kept = linearize_session(views[1], vocab, keep);
  CHECK(kept.turn_boundaries[1].kind == ElementKind::kMachineVariables);
  LinearizationScheme drop;
  drop.keep_machine_opener = false;
  const auto dropped = linearize_session(views[1], vocab, drop);
  CHECK(dropped.turn_boundaries[1].kind == ElementKind::kHumanUtterance);
  CHECK(linearize_corpus({s}, vocab, keep).size() == 2);

  AnnotatedSession unannotated = s;
  unannotated.utterances[0].annotation.reset();
  CHECK_THROWS_AS(derive_training_views(unannotated), ValidationError);
}

TEST_CASE("ablation schemes drop variable spans") {
  const auto corpus = random_corpus(8, 30);
  const auto vocab = Vocabulary::build(corpus);
  LinearizationScheme no_u;
  no_u.include_understanding = false;
  LinearizationScheme no_p;
  no_p.include_planning = false;
  for (const auto& ex : linearize_corpus(corpus, vocab, no_u)) {
    for (auto t : ex.types) CHECK(t != TokenType::kHumanVariables);
  }
  for (const auto& ex : linearize_corpus(corpus, vocab, no_p)) {
    for (auto t : ex.types) CHECK(t != TokenType::kMachineVariables);
  }
}

TEST_CASE("truncation drops whole oldest turns") {
  const auto corpus = random_corpus(9, 60);
  const auto vocab = Vocabulary::build(corpus);
  const LinearizationScheme full;
  for (const auto& s : corpus) {
    const auto view = original_view(s);
    const auto whole = linearize_session(view, vocab, full);
    const auto context_end = whole.turn_boundaries[0].end;
    for (std::size_t limit : {whole.size(), whole.size() - 1, whole.size() / 2, std::size_t{40}}) {
      LinearizationScheme scheme;
      scheme.max_sequence_length = limit;
      LinearizedExample ex;
      try {
        ex = linearize_session(view, vocab, scheme);
      } catch (const ValidationError&) {
        // Only when the newest turn with the context cannot fit.
        std::size_t last_turn_begin = whole.turn_boundaries.back().begin;
        const auto last = whole.turn_boundaries.back().turn;
        for (const auto& b : whole.turn_boundaries) {
          if (b.kind != ElementKind::kContext && b.turn == last) last_turn_begin = std::min(last_turn_begin, b.begin);
        }
        CHECK(context_end + whole.size() - last_turn_begin > limit);
        continue;
      }
      CHECK(ex.size() <= limit);
      // Context and CLS kept, then a suffix of whole turns.
      CHECK(std::equal(whole.ids.begin(), whole.ids.begin() + static_cast<std::ptrdiff_t>(context_end), ex.ids.begin()));
      const std::size_t dropped = whole.size() - ex.size();
      CHECK(std::equal(ex.ids.begin() + static_cast<std::ptrdiff_t>(context_end), ex.ids.end(),
                       whole.ids.begin() + static_cast<std::ptrdiff_t>(context_end + dropped)));
      if (ex.turn_boundaries.size() > 1) {
        const auto first_kept = ex.turn_boundaries[1];
        bool starts_turn = false;
        for (const auto& b : whole.turn_boundaries) {
          if (b.kind != ElementKind::kContext && b.begin == first_kept.begin + dropped) {
            starts_turn = b.turn == 0 || whole.turn_boundaries[&b - whole.turn_boundaries.data() - 1].turn != b.turn;
          }
        }
        CHECK(starts_turn);
      }
    }
  }
}

TEST_CASE("tokenizer") {
  const Vocabulary vocab(std::vector<std::string>{"hello", "world", ".", "?", "我", "喜", "欢"});
  CHECK(vocab.tokenize("").empty());
  CHECK(vocab.id("hello") == 10);
  CHECK(vocab.id("nope") == Vocabulary::kUnk);
  CHECK(vocab.detokenize(vocab.tokenize("hello world.")) == "hello world.");
  CHECK(vocab.tokenize("我喜欢") == std::vector<TokenId>{14, 15, 16});
  CHECK(vocab.detokenize(vocab.tokenize("我 喜欢 hello?")) == "我喜欢hello?");

  // Special-token names in content text are ordinary (unknown) words.
  for (auto name : kSpecialTokenNames) {
    for (auto id : vocab.tokenize(std::string("hello ") + std::string(name))) CHECK_FALSE(Vocabulary::is_special(id));
  }
  const Vocabulary tricky(std::vector<std::string>{"[SEP]", "<eokv>"});
  for (auto id : tricky.tokenize("[SEP] <eokv> <human>")) CHECK(id >= Vocabulary::kUnk);

  // Round trip over random in-vocabulary text.
  const auto corpus = random_corpus(10, 50);
  const auto built = Vocabulary::build(corpus);
  for (const auto& s : corpus) {
    for (const auto& u : s.utterances) CHECK(built.detokenize(built.tokenize(u.text)) == text::normalize(u.text));
  }
}

TEST_CASE("vocabulary files") {
  const auto corpus = random_corpus(11, 20);
  const auto vocab = Vocabulary::build(corpus);
  for (std::size_t i = 0; i < kSpecialTokenCount; ++i) CHECK(vocab.token(static_cast<TokenId>(i)) == kSpecialTokenNames[i]);
  CHECK(vocab.token(Vocabulary::kUnk) == kUnknownToken);
  for (auto n : kEmotionNames) CHECK(vocab.find(n).has_value());
  for (auto n : kDialogueActNames) CHECK(vocab.find(n).has_value());

  const auto dir = std::filesystem::temp_directory_path() / "semdial_test_vocab";
  std::filesystem::create_directories(dir);
  vocab.save(dir / "vocab.txt");
  const auto loaded = Vocabulary::load(dir / "vocab.txt");
  CHECK(loaded == vocab);
  CHECK(loaded.fingerprint() == vocab.fingerprint());
  CHECK(Vocabulary(std::vector<std::string>{"a"}).fingerprint() != Vocabulary(std::vector<std::string>{"b"}).fingerprint());
  {
    std::ofstream out(dir / "bad.txt");
    out << "<topical>\n<emotion>\nhello\n";
  }
  CHECK_THROWS_AS(Vocabulary::load(dir / "bad.txt"), ParseError);
  std::filesystem::remove_all(dir);
}
