#pragma once

#include <iosfwd>
#include <optional>

#include "mpctc/models.hpp"

namespace mpctc {

struct DecodeConfig {
  int iterations = 20;  // K
  bool trace = false;
  // Stop once the hypothesis is fully observed and stable. Must stay off when
  // traces are checked against the schedule (fewer than K records otherwise).
  bool allow_early_exit = false;

  void validate() const;
};

struct DecodeIterationRecord {
  int k = 0;
  TokenSequence hypothesis;
  std::vector<double> confidences;
  std::vector<int> masked_positions;  // positions re-masked for the next step
  Alignment frame_alignment;
  std::vector<double> intent_logits;  // empty without an intent head
};

struct DecodeTrace {
  std::vector<DecodeIterationRecord> records;

  // One JSON object per line; masked tokens render inside brackets.
  void write_jsonl(std::ostream& out, const Vocabulary& vocab) const;
};

struct DecodeResult {
  TokenSequence hypothesis;
  std::optional<DecodeTrace> trace;
  int intent = -1;  // argmax of the final summary logits when available
};

// Hypothesis length from the small-vocabulary head: collapse of the best
// path; the toy tokenization maps one-to-one onto the main vocabulary.
int estimate_length(const FramePosteriors& small_head_posteriors);

// One fused prediction given the current conditioning sequence.
struct FusedPrediction {
  FramePosteriors frame_posteriors;
  std::vector<double> intent_logits;  // empty without an intent head
};
using FuseFn = std::function<FusedPrediction(const MaskedSequence&)>;

// Iterative mask-predict refinement: start from an all-masked sequence of
// the estimated length; each iteration embeds the conditioning sequence,
// fuses, best-path decodes, scores token confidences and re-masks the
// decayed count of lowest-confidence tokens. A zero length estimate returns
// the empty hypothesis immediately.
DecodeResult decode(const ConditionedCtcModel& model, const Tensor& features,
                    const DecodeConfig& cfg);

// Same loop over an arbitrary per-iteration predictor (used by tests to
// drive stub models).
DecodeResult decode_with(const FuseFn& fuse, int estimated_length,
                         const DecodeConfig& cfg);

// Runs decode and reads the intent from the final iteration's summary
// logits (ties toward the lowest id). Requires an intent head.
std::pair<int, TokenSequence> predict_intent(const ConditionedCtcModel& model,
                                             const Tensor& features,
                                             const DecodeConfig& cfg);

TokenSequence decode_ctc_baseline(const CtcBaselineModel& model,
                                  const Tensor& features);
TokenSequence decode_rnnt_baseline(const RnntBaselineModel& model,
                                   const Tensor& features,
                                   int max_tokens_per_frame = 5);

// Re-derives each record's mask set from its own hypothesis, confidences and
// the decay schedule; false (with a reason) on any divergence or when the
// record count is not K.
bool check_trace_consistency(const DecodeTrace& trace, int iterations,
                             std::string* why = nullptr);

}  // namespace mpctc
