#pragma once

#include <vector>

#include "mpctc/ctc.hpp"
#include "mpctc/sequences.hpp"

namespace mpctc {

// Token sequence with some positions replaced by the mask symbol.
struct MaskedSequence {
  std::vector<int> ids;        // token id, or mask id where hidden
  std::vector<bool> observed;  // observed[n] == false iff ids[n] is the mask

  MaskedSequence() = default;
  static MaskedSequence all_masked(int length);
  static MaskedSequence all_observed(const TokenSequence& w);

  int length() const { return static_cast<int>(ids.size()); }
  int mask_count() const;

  // ids[n] == mask <=> !observed[n]; no blank anywhere.
  void validate() const;
};

// Per-token probability scores attached to a collapsed hypothesis.
struct ConfidenceVector {
  std::vector<double> scores;

  int length() const { return static_cast<int>(scores.size()); }
};

// Draw M ~ Uniform(1, N), then mask a uniformly chosen M-subset of positions.
// Throws ContractError for empty sequences (callers skip empty targets).
MaskedSequence sample_training_mask(const TokenSequence& w, Rng& rng);

// Linear decay schedule: floor(hyp_len * (K - k) / K) for 1 <= k <= K.
int decay_count(int hyp_len, int iterations, int k);

// Collapse the alignment and give each emitted token the maximum probability
// over its contributing frames; a blank following a token advances the token
// index, leading blanks contribute to no token.
std::pair<TokenSequence, ConfidenceVector> token_confidences(
    const Alignment& alignment, const FramePosteriors& post);

// Mask the m positions with the lowest scores; ties go to the earliest
// position.
MaskedSequence mask_lowest(const TokenSequence& hyp,
                           const ConfidenceVector& conf, int m);

// Positions that mask_lowest would hide (sorted ascending).
std::vector<int> lowest_confidence_positions(const ConfidenceVector& conf,
                                             int m);

}  // namespace mpctc
