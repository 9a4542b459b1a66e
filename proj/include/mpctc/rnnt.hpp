#pragma once

#include <functional>
#include <vector>

#include "mpctc/sequences.hpp"

namespace mpctc {

// (T+1) x (N+1) x V grid of per-node log-probabilities. At node (t, n) a
// blank move advances t and a token move emits w_{n+1} and advances n; every
// node's distribution normalizes over the vocabulary.
struct JointGrid {
  int t_frames = 0;
  int n_tokens = 0;
  int vocab_size = 0;
  std::vector<double> log_probs;  // (T+1) * (N+1) * V, node-major

  JointGrid() = default;
  JointGrid(int t, int n, int v)
      : t_frames(t),
        n_tokens(n),
        vocab_size(v),
        log_probs(static_cast<std::size_t>(t + 1) * (n + 1) * v, kNegInf) {}

  std::size_t node(int t, int n) const {
    return static_cast<std::size_t>(t) * (n_tokens + 1) + n;
  }
  double at(int t, int n, int v) const {
    return log_probs[node(t, n) * vocab_size + v];
  }
  double& at(int t, int n, int v) {
    return log_probs[node(t, n) * vocab_size + v];
  }

  // Throws ContractError if a node distribution fails to normalize.
  void validate() const;
};

struct RnntLossResult {
  double loss = 0.0;
  // Gradient w.r.t. the grid's log-probability entries, same layout.
  std::vector<double> grad_log_probs;
};

// -log of the summed probability of all C(T+N, N) monotone paths from (0,0)
// to (T,N), by forward-backward over the lattice in log-space.
RnntLossResult rnnt_loss(const JointGrid& grid, const TokenSequence& w);

// Per-node distribution provider for greedy decoding: log-probabilities over
// the vocabulary given the current frame and the tokens emitted so far.
using JointFn =
    std::function<std::vector<double>(int t, const TokenSequence& prefix)>;

// At each frame, emit the argmax token and advance while the argmax is not
// blank (at most max_tokens_per_frame emissions), then move to the next
// frame. Argmax ties break toward the lowest id.
TokenSequence rnnt_greedy_decode(const JointFn& joint, int t_frames,
                                 int max_tokens_per_frame);

// Exhaustive oracle: all interleavings of t_frames blanks with n_tokens
// ordered token slots. Non-blank entries carry placeholder ids 2 + slot so
// callers can substitute target tokens. Guarded to T + N <= 12.
std::vector<RnntAlignment> enumerate_rnnt_paths(int t_frames, int n_tokens);

}  // namespace mpctc
