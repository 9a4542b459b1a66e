#pragma once

#include <initializer_list>
#include <vector>

#include "mpctc/ctc.hpp"
#include "mpctc/models.hpp"

namespace mpctc::testing {

inline Vocabulary abc_vocab(int regular = 3) {
  std::vector<std::string> tokens;
  const char* names[] = {"a", "b", "c", "d"};
  for (int i = 0; i < regular; ++i) tokens.push_back(names[i]);
  return Vocabulary::from_regular(tokens);
}

inline TokenSequence seq(std::initializer_list<int> ids) {
  return TokenSequence(std::vector<int>(ids));
}

inline Alignment ali(std::initializer_list<int> ids) {
  return Alignment(std::vector<int>(ids));
}

// Rows uniform over blank plus the regular tokens; the mask column is -inf.
inline FramePosteriors uniform_posteriors(int t_frames, int regular) {
  FramePosteriors post(t_frames, regular + 2);
  const double lp = std::log(1.0 / (regular + 1));
  for (int t = 0; t < t_frames; ++t) {
    post.at(t, Vocabulary::kBlankId) = lp;
    for (int v = 2; v < regular + 2; ++v) post.at(t, v) = lp;
  }
  return post;
}

// Fully random rows (every column incl. the mask gets mass).
inline FramePosteriors random_posteriors(int t_frames, int regular,
                                         Rng& rng) {
  return posteriors_from_logits(random_normal(t_frames, regular + 2, 1.0,
                                              rng));
}

// One-hot-ish rows: probability ~1 at the given id per frame.
inline FramePosteriors peaked_posteriors(const std::vector<int>& ids,
                                         int vocab_size) {
  Tensor logits(static_cast<int>(ids.size()), vocab_size);
  for (int t = 0; t < logits.rows; ++t) {
    for (int v = 0; v < vocab_size; ++v) logits.at(t, v) = -12.0;
    logits.at(t, ids[t]) = 12.0;
  }
  return posteriors_from_logits(logits);
}

inline double brute_force_ctc_nll(const FramePosteriors& post,
                                  const TokenSequence& w,
                                  const Vocabulary& vocab) {
  double log_sum = kNegInf;
  for (const Alignment& a :
       enumerate_ctc_alignments(w, post.t_frames, vocab)) {
    double lp = 0.0;
    for (int t = 0; t < post.t_frames; ++t) lp += post.at(t, a.ids[t]);
    log_sum = log_add(log_sum, lp);
  }
  return -log_sum;
}

}  // namespace mpctc::testing
