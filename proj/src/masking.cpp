#include "mpctc/masking.hpp"

#include <algorithm>
#include <numeric>

namespace mpctc {

MaskedSequence MaskedSequence::all_masked(int length) {
  MaskedSequence m;
  m.ids.assign(length, Vocabulary::kMaskId);
  m.observed.assign(length, false);
  return m;
}

MaskedSequence MaskedSequence::all_observed(const TokenSequence& w) {
  MaskedSequence m;
  m.ids = w.ids;
  m.observed.assign(w.ids.size(), true);
  return m;
}

int MaskedSequence::mask_count() const {
  return static_cast<int>(
      std::count(observed.begin(), observed.end(), false));
}

void MaskedSequence::validate() const {
  if (ids.size() != observed.size()) {
    throw ContractError("masked sequence flag count mismatch");
  }
  for (std::size_t n = 0; n < ids.size(); ++n) {
    if ((ids[n] == Vocabulary::kMaskId) == observed[n]) {
      throw ContractError("masked sequence ids and observed flags disagree");
    }
    if (ids[n] == Vocabulary::kBlankId) {
      throw ContractError("masked sequence contains the blank symbol");
    }
  }
}

MaskedSequence sample_training_mask(const TokenSequence& w, Rng& rng) {
  const int n = w.length();
  if (n < 1) {
    throw ContractError("cannot sample a mask for an empty sequence");
  }
  std::uniform_int_distribution<int> count_dist(1, n);
  const int m = count_dist(rng);
  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  std::shuffle(positions.begin(), positions.end(), rng);

  MaskedSequence out = MaskedSequence::all_observed(w);
  for (int i = 0; i < m; ++i) {
    out.ids[positions[i]] = Vocabulary::kMaskId;
    out.observed[positions[i]] = false;
  }
  return out;
}

int decay_count(int hyp_len, int iterations, int k) {
  if (k < 1 || k > iterations) {
    throw ContractError("decay step outside [1, K]");
  }
  if (hyp_len < 0) throw ContractError("negative hypothesis length");
  return (hyp_len * (iterations - k)) / iterations;
}

std::pair<TokenSequence, ConfidenceVector> token_confidences(
    const Alignment& alignment, const FramePosteriors& post) {
  if (alignment.frames() != post.t_frames) {
    throw ShapeError("alignment length does not match the posterior grid");
  }
  TokenSequence hyp = collapse_ctc(alignment);
  ConfidenceVector conf;
  conf.scores.assign(hyp.ids.size(), 0.0);

  // Token cursor: a blank after a non-blank closes the current token; a
  // direct change of token does too, so each score is the max over exactly
  // the frames that collapse onto that token. Leading blanks contribute to
  // no token.
  int n = 0;
  int prev = Vocabulary::kBlankId;
  for (int t = 0; t < alignment.frames(); ++t) {
    const int a = alignment.ids[t];
    if (a == Vocabulary::kBlankId) {
      if (prev != Vocabulary::kBlankId) ++n;
    } else {
      if (prev != Vocabulary::kBlankId && a != prev) ++n;
      if (n < hyp.length()) {
        const double p = std::exp(post.at(t, hyp.ids[n]));
        conf.scores[n] = std::max(conf.scores[n], p);
      }
    }
    prev = a;
  }
  return {std::move(hyp), std::move(conf)};
}

std::vector<int> lowest_confidence_positions(const ConfidenceVector& conf,
                                             int m) {
  if (m < 0 || m > conf.length()) {
    throw ContractError("mask count outside [0, |hyp|]");
  }
  std::vector<int> order(conf.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return conf.scores[a] < conf.scores[b];
  });
  std::vector<int> picked(order.begin(), order.begin() + m);
  std::sort(picked.begin(), picked.end());
  return picked;
}

MaskedSequence mask_lowest(const TokenSequence& hyp,
                           const ConfidenceVector& conf, int m) {
  if (conf.length() != hyp.length()) {
    throw ShapeError("confidence vector does not match the hypothesis");
  }
  MaskedSequence out = MaskedSequence::all_observed(hyp);
  for (int pos : lowest_confidence_positions(conf, m)) {
    out.ids[pos] = Vocabulary::kMaskId;
    out.observed[pos] = false;
  }
  return out;
}

}  // namespace mpctc
