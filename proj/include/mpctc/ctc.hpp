#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "mpctc/sequences.hpp"

namespace mpctc {

// T x V grid of per-frame log-probabilities over the full vocabulary
// (blank at column 0). Rows normalize: logsumexp(row) == 0 within 1e-6.
struct FramePosteriors {
  int t_frames = 0;
  int vocab_size = 0;
  std::vector<double> log_probs;  // row-major, t_frames * vocab_size

  FramePosteriors() = default;
  FramePosteriors(int frames, int vocab)
      : t_frames(frames),
        vocab_size(vocab),
        log_probs(static_cast<std::size_t>(frames) * vocab, kNegInf) {}

  double at(int t, int v) const {
    return log_probs[static_cast<std::size_t>(t) * vocab_size + v];
  }
  double& at(int t, int v) {
    return log_probs[static_cast<std::size_t>(t) * vocab_size + v];
  }

  // Throws ContractError if a row fails to normalize or contains NaN.
  void validate() const;

  // CSV: one row per frame, one column per token id, natural-log values.
  void save_csv(std::ostream& out) const;
  static FramePosteriors load_csv(std::istream& in);
};

struct CtcLossResult {
  double loss = 0.0;    // nats; +inf when the target is infeasible
  bool feasible = true;
  // Gradient of the loss w.r.t. pre-softmax logits, T x V. Rows sum to 0.
  std::vector<double> grad_logits;
  // Occupation probabilities p(a_t = v | O, W), T x V. Rows sum to 1 for
  // feasible targets.
  std::vector<double> occupancy;
};

// Exact negative log-likelihood over all alignments that collapse to w,
// via forward-backward over the blank-interleaved label sequence in
// log-space. Infeasible targets (T < N + repeats) yield +inf loss, zero
// gradient and feasible == false instead of throwing.
CtcLossResult ctc_loss(const FramePosteriors& post, const TokenSequence& w);

// Same computation applied to an intermediate layer's projection.
CtcLossResult intermediate_ctc_loss(const FramePosteriors& layer_post,
                                    const TokenSequence& w_small);

// Per-frame argmax alignment (ties toward the lowest token id) and its
// collapse.
std::pair<Alignment, TokenSequence> best_path_decode(
    const FramePosteriors& post);

// (1 - lambda_ctc) * main + lambda_ctc * ((1 - lambda_ic) * final_ctc +
// lambda_ic * inter_ctc). Weights must lie in [0, 1].
double compose_hierarchical_loss(double main, double final_ctc,
                                 double inter_ctc, double lambda_ctc,
                                 double lambda_ic);

}  // namespace mpctc
