#include "mpctc/decoder.hpp"

#include <algorithm>
#include <ostream>

#include "json.hpp"

namespace mpctc {

void DecodeConfig::validate() const {
  if (iterations < 1) throw ConfigError("decoding needs at least 1 iteration");
}

void DecodeTrace::write_jsonl(std::ostream& out,
                              const Vocabulary& vocab) const {
  using nlohmann::json;
  for (const auto& rec : records) {
    json j;
    j["k"] = rec.k;
    std::vector<std::string> tokens;
    std::vector<bool> masked(rec.hypothesis.ids.size(), false);
    for (int pos : rec.masked_positions) masked[pos] = true;
    std::string rendered;
    for (int n = 0; n < rec.hypothesis.length(); ++n) {
      const std::string& tok = vocab.token(rec.hypothesis.ids[n]);
      tokens.push_back(tok);
      if (n) rendered += ' ';
      rendered += masked[n] ? "[" + tok + "]" : tok;
    }
    j["hypothesis"] = tokens;
    j["rendered"] = rendered;
    j["confidences"] = rec.confidences;
    j["masked_positions"] = rec.masked_positions;
    j["alignment"] = rec.frame_alignment.ids;
    if (!rec.intent_logits.empty()) j["intent_logits"] = rec.intent_logits;
    out << j.dump() << "\n";
  }
}

int estimate_length(const FramePosteriors& small_head_posteriors) {
  return best_path_decode(small_head_posteriors).second.length();
}

namespace {

int argmax_lowest_tie(const std::vector<double>& xs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(xs.size()); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return best;
}

}  // namespace

DecodeResult decode_with(const FuseFn& fuse, int estimated_length,
                         const DecodeConfig& cfg) {
  cfg.validate();
  DecodeResult result;
  if (cfg.trace) result.trace.emplace();
  if (estimated_length == 0) return result;

  MaskedSequence cond = MaskedSequence::all_masked(estimated_length);
  TokenSequence hyp;
  TokenSequence prev_hyp;
  bool prev_settled = false;
  const int k_max = cfg.iterations;

  for (int k = 1; k <= k_max; ++k) {
    FusedPrediction pred = fuse(cond);
    Alignment alignment = best_path_decode(pred.frame_posteriors).first;
    ConfidenceVector conf;
    std::tie(hyp, conf) = token_confidences(alignment, pred.frame_posteriors);

    const int m = decay_count(hyp.length(), k_max, k);
    const std::vector<int> masked_positions =
        lowest_confidence_positions(conf, m);
    cond = mask_lowest(hyp, conf, m);

    if (result.trace) {
      DecodeIterationRecord rec;
      rec.k = k;
      rec.hypothesis = hyp;
      rec.confidences = conf.scores;
      rec.masked_positions = masked_positions;
      rec.frame_alignment = std::move(alignment);
      rec.intent_logits = pred.intent_logits;
      result.trace->records.push_back(std::move(rec));
    }
    if (!pred.intent_logits.empty()) {
      result.intent = argmax_lowest_tie(pred.intent_logits);
    }

    // Fully observed and unchanged twice: every further iteration repeats.
    const bool settled = m == 0 && hyp == prev_hyp;
    if (cfg.allow_early_exit && prev_settled && settled) break;
    prev_settled = settled;
    prev_hyp = hyp;
  }
  result.hypothesis = std::move(hyp);
  return result;
}

DecodeResult decode(const ConditionedCtcModel& model, const Tensor& features,
                    const DecodeConfig& cfg) {
  cfg.validate();
  AudioEncodeResult enc = model.encode(features);
  const int n_hat =
      estimate_length(model.small_head_posteriors(enc.final_hidden));
  FuseFn fuse = [&](const MaskedSequence& cond) {
    FusedForward fused = model.fuse(enc.final_hidden, cond, false);
    FusedPrediction pred;
    pred.frame_posteriors =
        posteriors_from_logits(fused.frame_logits.tensor());
    if (model.has_intent_head()) {
      pred.intent_logits = fused.summary_logits.tensor().data;
    }
    return pred;
  };
  return decode_with(fuse, n_hat, cfg);
}

std::pair<int, TokenSequence> predict_intent(const ConditionedCtcModel& model,
                                             const Tensor& features,
                                             const DecodeConfig& cfg) {
  if (!model.has_intent_head()) {
    throw CapabilityError("model has no intent head");
  }
  DecodeResult res = decode(model, features, cfg);
  if (res.intent < 0) {
    // Zero-length estimate: classify from audio alone (all-mask, zero-token
    // conditioning).
    FusedForward fused = model.fuse(model.encode(features).final_hidden,
                                    MaskedSequence::all_masked(0), false);
    res.intent = argmax_lowest_tie(fused.summary_logits.tensor().data);
  }
  return {res.intent, std::move(res.hypothesis)};
}

TokenSequence decode_ctc_baseline(const CtcBaselineModel& model,
                                  const Tensor& features) {
  return best_path_decode(model.frame_posteriors(features)).second;
}

TokenSequence decode_rnnt_baseline(const RnntBaselineModel& model,
                                   const Tensor& features,
                                   int max_tokens_per_frame) {
  return model.greedy_decode(features, max_tokens_per_frame);
}

bool check_trace_consistency(const DecodeTrace& trace, int iterations,
                             std::string* why) {
  auto fail = [&](const std::string& reason) {
    if (why != nullptr) *why = reason;
    return false;
  };
  if (static_cast<int>(trace.records.size()) != iterations) {
    return fail("expected " + std::to_string(iterations) + " records, got " +
                std::to_string(trace.records.size()));
  }
  for (const auto& rec : trace.records) {
    if (rec.hypothesis.length() !=
        static_cast<int>(rec.confidences.size())) {
      return fail("record " + std::to_string(rec.k) +
                  ": confidence count does not match the hypothesis");
    }
    ConfidenceVector conf;
    conf.scores = rec.confidences;
    const int m = decay_count(rec.hypothesis.length(), iterations, rec.k);
    const std::vector<int> expected = lowest_confidence_positions(conf, m);
    if (expected != rec.masked_positions) {
      return fail("record " + std::to_string(rec.k) +
                  ": masked positions diverge from the schedule");
    }
  }
  if (iterations >= 1 &&
      !trace.records.back().masked_positions.empty()) {
    return fail("final iteration must mask nothing");
  }
  return true;
}

}  // namespace mpctc
