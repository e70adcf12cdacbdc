#include <cmath>

#include "semdial/errors.hpp"
#include "semdial/eval.hpp"

namespace semdial {

using nlohmann::ordered_json;

namespace {

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ordered_json optional_number(const std::optional<double>& v, double scale = 1.0) {
  return v ? ordered_json(*v * scale) : ordered_json(nullptr);
}

ordered_json labels_json(const std::vector<std::string>& labels) { return ordered_json(labels); }

}  // namespace

std::string_view to_string(EvalMode m) { return m == EvalMode::kPlanned ? "planned" : "gold"; }

std::optional<EvalMode> parse_eval_mode(std::string_view s) {
  if (s == "planned") return EvalMode::kPlanned;
  if (s == "gold") return EvalMode::kGoldVariables;
  return std::nullopt;
}

ordered_json generation_columns(const MetricReport& r) {
  ordered_json j;
  j["BLEU-1"] = r.bleu_1 * 100.0;
  j["BLEU-2"] = r.bleu_2 * 100.0;
  j["BLEU-3"] = r.bleu_3 * 100.0;
  j["PPL"] = optional_number(r.ppl);
  j["Average"] = r.emb_average;
  j["Extreme"] = r.emb_extreme;
  j["Dist-1 %"] = r.dist_1 * 100.0;
  j["Dist-2 %"] = r.dist_2 * 100.0;
  return j;
}

ordered_json semantic_columns(const MetricReport& r) {
  ordered_json j;
  j["Topical-Recall"] = optional_number(r.topical_recall, 100.0);
  j["DAs-F1"] = r.das_f1 * 100.0;
  j["Emotions-F1"] = r.emotions_f1 * 100.0;
  return j;
}

ordered_json ablation_columns(const MetricReport& r) {
  ordered_json j;
  j["BLEU-2"] = r.bleu_2 * 100.0;
  j["BLEU-3"] = r.bleu_3 * 100.0;
  j["Emb-Avg"] = r.emb_average;
  j["Dist-2 %"] = r.dist_2 * 100.0;
  j["Topical-R"] = optional_number(r.topical_recall, 100.0);
  j["DAs-F1"] = r.das_f1 * 100.0;
  j["EMOs-F1"] = r.emotions_f1 * 100.0;
  return j;
}

ordered_json understanding_columns(const MetricReport& r) {
  ordered_json j;
  j["Topical-F1"] = optional_number(r.topical_f1, 100.0);
  j["DAs-F1"] = optional_number(r.understanding_das_f1, 100.0);
  j["EMOs-F1"] = optional_number(r.understanding_emotions_f1, 100.0);
  return j;
}

ordered_json report_to_json(const MetricReport& r, bool include_samples) {
  ordered_json j;
  j["mode"] = to_string(r.mode);
  j["samples"] = r.samples;
  j["generation"] = generation_columns(r);
  j["semantic"] = semantic_columns(r);
  j["ablation"] = ablation_columns(r);
  j["understanding"] = understanding_columns(r);
  ordered_json raw;
  raw["bleu_1"] = r.bleu_1;
  raw["bleu_2"] = r.bleu_2;
  raw["bleu_3"] = r.bleu_3;
  raw["emb_average"] = r.emb_average;
  raw["emb_extreme"] = r.emb_extreme;
  raw["dist_1"] = r.dist_1;
  raw["dist_2"] = r.dist_2;
  raw["topical_recall"] = optional_number(r.topical_recall);
  raw["das_f1"] = r.das_f1;
  raw["emotions_f1"] = r.emotions_f1;
  raw["topical_f1"] = optional_number(r.topical_f1);
  raw["understanding_das_f1"] = optional_number(r.understanding_das_f1);
  raw["understanding_emotions_f1"] = optional_number(r.understanding_emotions_f1);
  raw["ppl"] = optional_number(r.ppl);
  j["metrics"] = raw;
  if (include_samples) {
    j["per_sample"] = ordered_json::array();
    for (const auto& s : r.per_sample) {
      ordered_json e;
      e["session_id"] = s.session_id;
      e["utterance"] = s.utterance;
      e["reference"] = s.reference;
      e["hypothesis"] = s.hypothesis;
      e["bleu"] = s.bleu;
      e["emb_average"] = s.embedding.average;
      e["emb_extreme"] = s.embedding.extreme;
      e["all_oov"] = s.embedding.all_oov;
      e["topical_recall"] = optional_number(s.topical_recall);
      e["response_dialogue_acts"] = labels_json(s.response_dialogue_acts);
      e["response_emotions"] = labels_json(s.response_emotions);
      e["trace"] = trace_to_json(s.trace);
      j["per_sample"].push_back(std::move(e));
    }
  }
  return j;
}

double machine_utterance_ppl(const LanguageModel& model, const Vocabulary& vocab, const LinearizationScheme& scheme,
                             const std::vector<AnnotatedSession>& sessions) {
  LinearizationScheme s = scheme;
  s.max_sequence_length = std::min(s.max_sequence_length, model.max_positions());
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& session : sessions) {
    const auto view = derive_training_views(session).front();
    const auto ex = linearize_session(view, vocab, s);
    auto cursor = model.open();
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (i > 0 && ex.types[i] == TokenType::kMachineUtterance && ex.loss_mask[i]) {
        const auto p = cursor->next_token_distribution();
        nll -= std::log(p[static_cast<std::size_t>(ex.ids[i])]);
        ++count;
      }
      cursor->append(ex.ids[i], ex.types[i]);
    }
  }
  if (count == 0) throw ValidationError("no Machine utterance tokens to score");
  return std::exp(nll / static_cast<double>(count));
}

MetricReport evaluate_generation(const EvalResources& res, const std::vector<AnnotatedSession>& sessions,
                                 const EvalOptions& options) {
  if (sessions.empty()) throw ValidationError("evaluation needs at least one test session");
  options.policy.validate();
  const Responder responder{res.model, res.vocab, res.scheme};

  MetricReport report;
  report.mode = options.mode;
  std::vector<std::vector<std::string>> hyp_tokens;
  std::vector<std::vector<std::string>> pred_da, gold_da, pred_emo, gold_emo;
  std::vector<std::vector<std::string>> und_pred_da, und_gold_da, und_pred_emo, und_gold_emo;
  std::vector<std::vector<Phrase>> und_pred_topical, und_gold_topical;
  double recall_sum = 0.0;
  std::size_t recall_count = 0;

  for (const auto& session : sessions) {
    const auto view = derive_training_views(session).front();
    for (std::size_t u = 1; u < view.utterances.size(); u += 2) {
      if (options.max_samples && report.samples >= options.max_samples) break;
      const Utterance& gold = view.utterances[u];
      DialogueState state;
      state.context = view.context;
      state.utterances.assign(view.utterances.begin(), view.utterances.begin() + static_cast<std::ptrdiff_t>(u));
      std::optional<SemanticAnnotation> override_plan;
      if (options.mode == EvalMode::kGoldVariables) override_plan = gold.annotation;

      SampleRecord rec;
      rec.session_id = session.session_id;
      rec.utterance = u;
      rec.reference = gold.text;
      rec.trace = respond(responder, state, options.policy, override_plan, sample_seed(options.seed, report.samples));
      rec.hypothesis = rec.trace.response;
      const auto hyp = metric_tokens(rec.hypothesis, options.unit);
      const auto ref = metric_tokens(rec.reference, options.unit);
      for (int n = 1; n <= 3; ++n) rec.bleu[static_cast<std::size_t>(n - 1)] = bleu(hyp, ref, n);
      rec.embedding = embedding_scores(rec.hypothesis, rec.reference, res.embeddings, res.segmenter);
      rec.topical_recall = topical_recall(rec.hypothesis, gold.annotation->topical_words);
      const auto sentences = split_sentences(rec.hypothesis);
      rec.response_dialogue_acts = classify_sentences(res.da_classifier, sentences);
      rec.response_emotions = classify_sentences(res.emotion_classifier, sentences);

      hyp_tokens.push_back(hyp);
      pred_da.push_back(rec.response_dialogue_acts);
      pred_emo.push_back(rec.response_emotions);
      gold_da.push_back(label_names(gold.annotation->dialogue_acts));
      gold_emo.push_back(label_names(gold.annotation->emotions));
      if (rec.topical_recall) {
        recall_sum += *rec.topical_recall;
        ++recall_count;
      }
      if (rec.trace.understood) {
        const auto& human = *view.utterances[u - 1].annotation;
        und_pred_da.push_back(label_names(rec.trace.understood->dialogue_acts));
        und_gold_da.push_back(label_names(human.dialogue_acts));
        und_pred_emo.push_back(label_names(rec.trace.understood->emotions));
        und_gold_emo.push_back(label_names(human.emotions));
        und_pred_topical.push_back(rec.trace.understood->topical_words);
        und_gold_topical.push_back(human.topical_words);
      }
      report.bleu_1 += rec.bleu[0];
      report.bleu_2 += rec.bleu[1];
      report.bleu_3 += rec.bleu[2];
      report.emb_average += rec.embedding.average;
      report.emb_extreme += rec.embedding.extreme;
      report.per_sample.push_back(std::move(rec));
      ++report.samples;
    }
  }
  if (report.samples == 0) throw ValidationError("test sessions hold no Machine utterance");
  const double n = static_cast<double>(report.samples);
  report.bleu_1 /= n;
  report.bleu_2 /= n;
  report.bleu_3 /= n;
  report.emb_average /= n;
  report.emb_extreme /= n;
  report.dist_1 = distinct_n(hyp_tokens, 1);
  report.dist_2 = distinct_n(hyp_tokens, 2);
  if (recall_count) report.topical_recall = recall_sum / static_cast<double>(recall_count);

  const auto f1_or_zero = [](const auto& pred, const auto& gold, const std::vector<std::string>& labels) {
    for (const auto& g : gold) {
      if (!g.empty()) return label_f1(pred, gold, labels);
    }
    return 0.0;
  };
  const auto da_labels = dialogue_act_label_set();
  const auto emo_labels = emotion_label_set();
  report.das_f1 = f1_or_zero(pred_da, gold_da, da_labels);
  report.emotions_f1 = f1_or_zero(pred_emo, gold_emo, emo_labels);
  if (!und_gold_topical.empty()) {
    report.topical_f1 = topical_f1(und_pred_topical, und_gold_topical);
    report.understanding_das_f1 = f1_or_zero(und_pred_da, und_gold_da, da_labels);
    report.understanding_emotions_f1 = f1_or_zero(und_pred_emo, und_gold_emo, emo_labels);
  }
  if (options.mode == EvalMode::kGoldVariables) {
    report.ppl = machine_utterance_ppl(res.model, res.vocab, effective_scheme(res.scheme, options.policy), sessions);
  }
  return report;
}

}  // namespace semdial
