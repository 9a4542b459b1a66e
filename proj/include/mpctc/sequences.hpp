#pragma once

#include <vector>

#include "mpctc/vocab.hpp"

namespace mpctc {

// Output token sequence; never contains blank or mask ids.
struct TokenSequence {
  std::vector<int> ids;

  TokenSequence() = default;
  explicit TokenSequence(std::vector<int> v) : ids(std::move(v)) {}

  int length() const { return static_cast<int>(ids.size()); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSequence& o) const { return ids == o.ids; }
  bool operator<(const TokenSequence& o) const { return ids < o.ids; }

  // Throws ContractError if a special id is present.
  void validate(const Vocabulary& vocab) const;
};

// Frame-level sequence over tokens plus blank, one entry per frame.
struct Alignment {
  std::vector<int> ids;

  Alignment() = default;
  explicit Alignment(std::vector<int> v) : ids(std::move(v)) {}

  int frames() const { return static_cast<int>(ids.size()); }
  bool operator==(const Alignment& o) const { return ids == o.ids; }
  bool operator<(const Alignment& o) const { return ids < o.ids; }
};

// Transducer alignment: T blanks interleaved with the N output tokens,
// length T + N.
struct RnntAlignment {
  std::vector<int> ids;
  int t_frames = 0;

  RnntAlignment() = default;
  RnntAlignment(std::vector<int> v, int t) : ids(std::move(v)), t_frames(t) {}

  int length() const { return static_cast<int>(ids.size()); }
  int blank_count() const;

  // Throws ContractError unless blank count == t_frames.
  void validate() const;
};

// Merge adjacent equal non-blank tokens, then remove blanks.
// Throws ContractError if the alignment contains the mask id.
TokenSequence collapse_ctc(const Alignment& a);

// Remove blanks, keep tokens in order (no repeat merging).
// Throws ContractError if the blank count does not equal t_frames.
TokenSequence collapse_rnnt(const RnntAlignment& z);

// Exhaustive oracle: every alignment of length t_frames whose collapse
// equals w. Guarded to t_frames <= 8 and vocab.num_regular() <= 4; beyond
// that it throws OracleTooLargeError rather than truncating.
std::vector<Alignment> enumerate_ctc_alignments(const TokenSequence& w,
                                                int t_frames,
                                                const Vocabulary& vocab);

// Shortest feasible frame count: N plus the number of adjacent repeats.
int min_frames_for(const TokenSequence& w);

struct EditCounts {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;

  int total() const { return substitutions + insertions + deletions; }
  bool operator==(const EditCounts& o) const {
    return substitutions == o.substitutions && insertions == o.insertions &&
           deletions == o.deletions;
  }
};

// Minimal Levenshtein edit counts; WER = total / len(ref). For an empty
// reference the caller reports total / 1 and flags the convention.
EditCounts edit_distance(const TokenSequence& ref, const TokenSequence& hyp);

// For each reference position, the hypothesis token aligned to it under one
// minimal-cost edit script (-1 where the reference token was deleted).
std::vector<int> edit_alignment(const TokenSequence& ref,
                                const TokenSequence& hyp);

double wer(const EditCounts& counts, int ref_len);

}  // namespace mpctc
