#include "mpctc/rnnt.hpp"

#include <cmath>

namespace mpctc {

void JointGrid::validate() const {
  const std::size_t nodes =
      static_cast<std::size_t>(t_frames + 1) * (n_tokens + 1);
  if (vocab_size <= 0 || log_probs.size() != nodes * vocab_size) {
    throw ShapeError("joint grid has inconsistent dimensions");
  }
  for (std::size_t k = 0; k < nodes; ++k) {
    double lse = kNegInf;
    for (int v = 0; v < vocab_size; ++v) {
      const double x = log_probs[k * vocab_size + v];
      if (std::isnan(x)) throw ContractError("joint grid contains NaN");
      lse = log_add(lse, x);
    }
    if (std::abs(lse) > 1e-6) {
      throw ContractError("joint grid node does not normalize");
    }
  }
}

RnntLossResult rnnt_loss(const JointGrid& grid, const TokenSequence& w) {
  const int T = grid.t_frames;
  const int N = grid.n_tokens;
  const int V = grid.vocab_size;
  if (N != w.length()) {
    throw ShapeError("joint grid token axis does not match the target");
  }
  for (int id : w.ids) {
    if (id <= Vocabulary::kMaskId || id >= V) {
      throw ContractError("transducer target contains an invalid token id");
    }
  }

  auto at = [&](int t, int n, int v) { return grid.at(t, n, v); };
  auto node = [&](int t, int n) {
    return static_cast<std::size_t>(t) * (N + 1) + n;
  };

  // alpha(t, n): log-prob of reaching node (t, n) from (0, 0).
  std::vector<double> alpha(static_cast<std::size_t>(T + 1) * (N + 1),
                            kNegInf);
  alpha[node(0, 0)] = 0.0;
  for (int t = 0; t <= T; ++t) {
    for (int n = 0; n <= N; ++n) {
      if (t == 0 && n == 0) continue;
      double acc = kNegInf;
      if (t > 0) {
        acc = log_add(acc,
                      alpha[node(t - 1, n)] +
                          at(t - 1, n, Vocabulary::kBlankId));
      }
      if (n > 0) {
        acc = log_add(acc, alpha[node(t, n - 1)] + at(t, n - 1, w.ids[n - 1]));
      }
      alpha[node(t, n)] = acc;
    }
  }
  const double log_p = alpha[node(T, N)];

  // beta(t, n): log-prob of reaching (T, N) from node (t, n).
  std::vector<double> beta(static_cast<std::size_t>(T + 1) * (N + 1), kNegInf);
  beta[node(T, N)] = 0.0;
  for (int t = T; t >= 0; --t) {
    for (int n = N; n >= 0; --n) {
      if (t == T && n == N) continue;
      double acc = kNegInf;
      if (t < T) {
        acc = log_add(acc,
                      at(t, n, Vocabulary::kBlankId) + beta[node(t + 1, n)]);
      }
      if (n < N) {
        acc = log_add(acc, at(t, n, w.ids[n]) + beta[node(t, n + 1)]);
      }
      beta[node(t, n)] = acc;
    }
  }

  RnntLossResult result;
  result.loss = -log_p;
  result.grad_log_probs.assign(grid.log_probs.size(), 0.0);
  if (log_p == kNegInf) return result;

  // d(-log_p)/d at(t, n, v) = -exp(alpha(t,n) + at(t,n,v) + beta(next) -
  // log_p) for the two used entries of each node's distribution.
  for (int t = 0; t <= T; ++t) {
    for (int n = 0; n <= N; ++n) {
      const double a = alpha[node(t, n)];
      if (a == kNegInf) continue;
      if (t < T) {
        const int v = Vocabulary::kBlankId;
        const double g = a + at(t, n, v) + beta[node(t + 1, n)] - log_p;
        result.grad_log_probs[grid.node(t, n) * V + v] -= std::exp(g);
      }
      if (n < N) {
        const int v = w.ids[n];
        const double g = a + at(t, n, v) + beta[node(t, n + 1)] - log_p;
        result.grad_log_probs[grid.node(t, n) * V + v] -= std::exp(g);
      }
    }
  }
  return result;
}

TokenSequence rnnt_greedy_decode(const JointFn& joint, int t_frames,
                                 int max_tokens_per_frame) {
  TokenSequence out;
  for (int t = 0; t < t_frames; ++t) {
    for (int emitted = 0; emitted < max_tokens_per_frame; ++emitted) {
      const std::vector<double> dist = joint(t, out);
      int best = 0;
      for (int v = 1; v < static_cast<int>(dist.size()); ++v) {
        if (dist[v] > dist[best]) best = v;
      }
      if (best == Vocabulary::kBlankId) break;
      out.ids.push_back(best);
    }
  }
  return out;
}

namespace {

void enumerate_paths_rec(int blanks_left, int tokens_left, int next_slot,
                         std::vector<int>& prefix,
                         std::vector<RnntAlignment>& out, int t_frames) {
  if (blanks_left == 0 && tokens_left == 0) {
    out.emplace_back(prefix, t_frames);
    return;
  }
  if (blanks_left > 0) {
    prefix.push_back(Vocabulary::kBlankId);
    enumerate_paths_rec(blanks_left - 1, tokens_left, next_slot, prefix, out,
                        t_frames);
    prefix.pop_back();
  }
  if (tokens_left > 0) {
    prefix.push_back(2 + next_slot);
    enumerate_paths_rec(blanks_left, tokens_left - 1, next_slot + 1, prefix,
                        out, t_frames);
    prefix.pop_back();
  }
}

}  // namespace

std::vector<RnntAlignment> enumerate_rnnt_paths(int t_frames, int n_tokens) {
  if (t_frames + n_tokens > 12) {
    throw OracleTooLargeError("path enumeration guarded to T + N <= 12");
  }
  if (t_frames < 0 || n_tokens < 0) {
    throw ContractError("negative lattice dimensions");
  }
  std::vector<RnntAlignment> out;
  std::vector<int> prefix;
  enumerate_paths_rec(t_frames, n_tokens, 0, prefix, out, t_frames);
  return out;
}

}  // namespace mpctc
